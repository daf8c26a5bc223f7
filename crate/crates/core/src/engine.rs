//! Closed-loop simulation, performance metrics and the multi-configuration
//! comparison harness.
//!
//! Each step `t` forms the corrected ACE from the uncorrected input plus the
//! unit responses of step `t-1`, lets the controller issue RegA/RegD from it
//! and from the fed-back unit outputs and SoC, and then advances the plant.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};

use crate::controllers::{
    Controller, ControllerParams, ControllerSpec, ControllerState, Feedback, LqrConfig, LqrModel,
    SocInputSign,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hindsight::SocPolicyTable;
use crate::plant::{PlantConfig, PlantState};
use crate::signals::AceSeries;

pub const TRACE_CSV_HEADER: &str =
    "t_s,ace_uncorrected_mw,p_ace_mw,rega_mw,regd_mw,pg_mw,pe_mw,soc_mwh,i_ace_mws";
pub const REPORT_CSV_HEADER: &str = "config,controller,mean_sq_pace_e3,mean_sq_soc_dev";

/// One simulated step, as handed to a [`simulate`] observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub ace_uncorrected_mw: f64,
    pub p_ace_mw: f64,
    pub rega_mw: f64,
    pub regd_mw: f64,
    pub p_g_mw: f64,
    pub p_e_mw: f64,
    pub soc_mwh: f64,
    pub i_ace_mws: f64,
}

/// Core closed-loop recursion. Starts from zero unit output and the given
/// SoC and controller state; `observe` sees every step in order.
pub fn simulate<C, F>(
    ace: &[f64],
    controller: &C,
    plant: &PlantConfig,
    soc0_mwh: f64,
    init: ControllerState,
    mut observe: F,
) -> Result<(PlantState, ControllerState)>
where
    C: Controller + ?Sized,
    F: FnMut(&StepRecord),
{
    let dt = plant.dt_s;
    let mut units = PlantState::at_soc(soc0_mwh);
    let mut ctrl = init;
    for (index, &w) in ace.iter().enumerate() {
        let p_ace_mw = w + units.generator.p_g_mw + units.bes.p_e_mw;
        let fb = Feedback {
            p_g_mw: units.generator.p_g_mw,
            p_e_mw: units.bes.p_e_mw,
            soc_mwh: units.bes.soc_mwh,
        };
        let (next_ctrl, cmd) = controller.step(&ctrl, p_ace_mw, &fb, dt)?;
        units = units.step(plant, cmd.rega_mw, cmd.regd_mw)?;
        ctrl = next_ctrl;
        observe(&StepRecord {
            index,
            ace_uncorrected_mw: w,
            p_ace_mw,
            rega_mw: cmd.rega_mw,
            regd_mw: cmd.regd_mw,
            p_g_mw: units.generator.p_g_mw,
            p_e_mw: units.bes.p_e_mw,
            soc_mwh: units.bes.soc_mwh,
            i_ace_mws: ctrl.i_ace_mws,
        });
    }
    Ok((units, ctrl))
}

/// Column-wise record of a closed-loop run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub t_s: Vec<f64>,
    pub ace_uncorrected_mw: Vec<f64>,
    pub p_ace_mw: Vec<f64>,
    pub rega_mw: Vec<f64>,
    pub regd_mw: Vec<f64>,
    pub p_g_mw: Vec<f64>,
    pub p_e_mw: Vec<f64>,
    pub soc_mwh: Vec<f64>,
    pub i_ace_mws: Vec<f64>,
}

impl SimTrace {
    fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            t_s: v(),
            ace_uncorrected_mw: v(),
            p_ace_mw: v(),
            rega_mw: v(),
            regd_mw: v(),
            p_g_mw: v(),
            p_e_mw: v(),
            soc_mwh: v(),
            i_ace_mws: v(),
        }
    }

    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 160);
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.t_s[i],
                self.ace_uncorrected_mw[i],
                self.p_ace_mw[i],
                self.rega_mw[i],
                self.regd_mw[i],
                self.p_g_mw[i],
                self.p_e_mw[i],
                self.soc_mwh[i],
                self.i_ace_mws[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Runs `controller` over the whole series and records every signal.
pub fn run_closed_loop<C: Controller + ?Sized>(
    ace: &AceSeries,
    controller: &C,
    plant: &PlantConfig,
    soc0_mwh: f64,
) -> Result<SimTrace> {
    plant.validate()?;
    if (ace.dt_s() - plant.dt_s).abs() > 1e-9 * plant.dt_s {
        return Err(Error::Config(format!(
            "series dt {} s differs from plant dt {} s",
            ace.dt_s(),
            plant.dt_s
        )));
    }
    if !(0.0..=plant.bes.energy_mwh).contains(&soc0_mwh) {
        return Err(Error::Config(format!(
            "initial SoC {soc0_mwh} MWh outside [0, {}]",
            plant.bes.energy_mwh
        )));
    }
    let mut trace = SimTrace::with_capacity(ace.len());
    simulate(
        ace.values(),
        controller,
        plant,
        soc0_mwh,
        ControllerState::default(),
        |r| {
            trace.t_s.push(ace.time_at(r.index));
            trace.ace_uncorrected_mw.push(r.ace_uncorrected_mw);
            trace.p_ace_mw.push(r.p_ace_mw);
            trace.rega_mw.push(r.rega_mw);
            trace.regd_mw.push(r.regd_mw);
            trace.p_g_mw.push(r.p_g_mw);
            trace.p_e_mw.push(r.p_e_mw);
            trace.soc_mwh.push(r.soc_mwh);
            trace.i_ace_mws.push(r.i_ace_mws);
        },
    )?;
    Ok(trace)
}

/// Mean squared corrected ACE (MW^2) and mean squared SoC deviation (MWh^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mean_sq_pace_mw2: f64,
    pub mean_sq_soc_dev_mwh2: f64,
}

pub fn compute_metrics(trace: &SimTrace, soc_ref_mwh: f64) -> Result<Metrics> {
    if trace.is_empty() {
        return Err(Error::NoSamples);
    }
    let n = trace.len() as f64;
    let pace = trace.p_ace_mw.iter().map(|p| p * p).sum::<f64>() / n;
    let soc = trace
        .soc_mwh
        .iter()
        .map(|e| (e - soc_ref_mwh).powi(2))
        .sum::<f64>()
        / n;
    Ok(Metrics {
        mean_sq_pace_mw2: pace,
        mean_sq_soc_dev_mwh2: soc,
    })
}

/// How the LQR benchmark obtains its gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrSettings {
    pub m_inertia_s: f64,
    /// `None` uses `diag(1, (C_d/C_a)^2, 0, 1/E^2)`.
    pub q_diag: Option<[f64; 4]>,
    pub r: f64,
    /// Bypasses synthesis when set.
    pub gain: Option<[f64; 4]>,
    pub soc_input: SocInputSign,
}

impl Default for LqrSettings {
    fn default() -> Self {
        Self {
            m_inertia_s: 10.0,
            q_diag: None,
            r: 1.0,
            gain: None,
            soc_input: SocInputSign::Physical,
        }
    }
}

impl LqrSettings {
    pub fn model(&self, params: &ControllerParams, plant: &PlantConfig) -> Result<LqrModel> {
        if !(self.m_inertia_s > 0.0) {
            return Err(Error::Config("m_inertia must be > 0".into()));
        }
        if !(params.ta_s > 0.0) {
            return Err(Error::Config("LQR model needs ta_s > 0".into()));
        }
        let (a, b) = LqrModel::system(
            self.m_inertia_s,
            params.ta_s,
            params.rega_gains.kp,
            params.rega_gains.ki,
            self.soc_input,
        );
        let qd = self
            .q_diag
            .unwrap_or_else(|| LqrModel::default_q_diag(plant));
        let q = Matrix4::from_diagonal(&Vector4::from(qd));
        match self.gain {
            Some(k) => Ok(LqrModel::with_gain(a, b, q, self.r, Vector4::from(k))),
            None => LqrModel::synthesize(a, b, q, self.r),
        }
    }

    pub fn config(&self, params: &ControllerParams, plant: &PlantConfig) -> Result<LqrConfig> {
        let k = match self.gain {
            Some(k) => k,
            None => {
                let m = self.model(params, plant)?;
                [m.k[0], m.k[1], m.k[2], m.k[3]]
            }
        };
        Ok(LqrConfig {
            rega: params.rega_path(plant),
            cd_mw: plant.bes.power_mw,
            k,
            soc_ref_mwh: plant.bes.soc_ref_mwh,
            antiwindup: params.antiwindup,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    Pjm,
    Lqr,
    Proposed,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Proposed,
        ControllerKind::Lqr,
        ControllerKind::Pjm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pjm => "pjm",
            ControllerKind::Lqr => "lqr",
            ControllerKind::Proposed => "proposed",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pjm" => Ok(ControllerKind::Pjm),
            "lqr" => Ok(ControllerKind::Lqr),
            "proposed" => Ok(ControllerKind::Proposed),
            other => Err(Error::Config(format!(
                "unknown controller `{other}` (expected pjm|lqr|proposed)"
            ))),
        }
    }
}

/// Instantiates a controller for `plant`. The proposed controller needs a
/// policy trained for the same storage energy.
pub fn build_controller(
    kind: ControllerKind,
    params: &ControllerParams,
    lqr: &LqrSettings,
    plant: &PlantConfig,
    policy: Option<Arc<SocPolicyTable>>,
) -> Result<ControllerSpec> {
    let spec = match kind {
        ControllerKind::Pjm => ControllerSpec::Pjm(params.pjm(plant)),
        ControllerKind::Lqr => ControllerSpec::Lqr(lqr.config(params, plant)?),
        ControllerKind::Proposed => {
            let policy =
                policy.ok_or_else(|| Error::Config("proposed controller needs a policy".into()))?;
            let e = plant.bes.energy_mwh;
            if (policy.energy_mwh() - e).abs() > 1e-9 * e {
                return Err(Error::Config(format!(
                    "policy covers [0, {}] MWh but storage holds {e} MWh",
                    policy.energy_mwh()
                )));
            }
            ControllerSpec::Proposed {
                cfg: params.proposed(plant),
                policy,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// One storage configuration of the comparison, with the training settings
/// its proposed controller uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesCase {
    pub power_mw: f64,
    pub duration_min: f64,
    pub w_e: f64,
    pub window_min: f64,
}

impl BesCase {
    pub fn new(power_mw: f64, duration_min: f64) -> Self {
        Self {
            power_mw,
            duration_min,
            w_e: 60.0,
            window_min: 15.0,
        }
    }

    pub fn label(&self) -> String {
        format!("{}MW/{}min", self.power_mw, self.duration_min)
    }

    pub fn energy_mwh(&self) -> f64 {
        self.power_mw * self.duration_min / 60.0
    }
}

/// The six storage configurations of the benchmark table. The 200 MW / 60 min
/// case trains with a 30 min window and `w_e = 10`.
pub fn default_cases() -> Vec<BesCase> {
    vec![
        BesCase::new(200.0, 15.0),
        BesCase::new(200.0, 20.0),
        BesCase::new(200.0, 30.0),
        BesCase {
            w_e: 10.0,
            window_min: 30.0,
            ..BesCase::new(200.0, 60.0)
        },
        BesCase::new(300.0, 15.0),
        BesCase::new(400.0, 15.0),
    ]
}

/// Everything but the storage rating that defines a comparison run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemSettings {
    pub ca_mw: f64,
    pub dt_s: f64,
    pub round_trip_efficiency: f64,
    /// Initial SoC as a fraction of capacity.
    pub soc0_frac: f64,
    pub tg_s: Option<f64>,
    pub deadband_mw: Option<f64>,
    pub ramp_mw_per_s: Option<f64>,
    pub controller: ControllerParams,
    pub lqr: LqrSettings,
}

impl Default for SystemSettings {
    fn default() -> Self {
        Self {
            ca_mw: 400.0,
            dt_s: 2.0,
            round_trip_efficiency: 0.85,
            soc0_frac: 0.5,
            tg_s: None,
            deadband_mw: None,
            ramp_mw_per_s: None,
            controller: ControllerParams::default(),
            lqr: LqrSettings::default(),
        }
    }
}

impl SystemSettings {
    pub fn plant(&self, case: &BesCase) -> PlantConfig {
        let mut plant = PlantConfig::new(case.power_mw, case.duration_min);
        plant.generator = crate::plant::GeneratorParams::with_capacity(self.ca_mw);
        if let Some(tg) = self.tg_s {
            plant.generator.governor_tc_s = tg;
        }
        if let Some(db) = self.deadband_mw {
            plant.generator.deadband_mw = db;
        }
        if let Some(ramp) = self.ramp_mw_per_s {
            plant.generator.ramp_mw_per_s = ramp;
        }
        plant.bes = crate::plant::BesParams::from_duration(
            case.power_mw,
            case.duration_min,
            self.round_trip_efficiency,
        );
        plant.dt_s = self.dt_s;
        plant
    }

    pub fn soc0(&self, plant: &PlantConfig) -> f64 {
        self.soc0_frac * plant.bes.energy_mwh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub config: String,
    pub controller: String,
    pub metrics: Metrics,
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.config,
            self.controller,
            self.metrics.mean_sq_pace_mw2 / 1e3,
            self.metrics.mean_sq_soc_dev_mwh2
        )
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Runs every controller in `kinds` on every case over the same test series
/// from the same initial state. `policies[i]` is the trained table of
/// `cases[i]`; it is only required when `kinds` contains the proposed
/// controller. Rows come out case-major in `kinds` order.
pub fn compare(
    ace_test: &AceSeries,
    cases: &[BesCase],
    kinds: &[ControllerKind],
    policies: &[Option<Arc<SocPolicyTable>>],
    settings: &SystemSettings,
    exec: Exec,
) -> Result<Vec<ReportRow>> {
    if policies.len() != cases.len() {
        return Err(Error::LengthMismatch(format!(
            "{} cases but {} policy slots",
            cases.len(),
            policies.len()
        )));
    }
    if kinds.contains(&ControllerKind::Proposed) {
        let missing: Vec<String> = cases
            .iter()
            .zip(policies)
            .filter(|(_, p)| p.is_none())
            .map(|(c, _)| c.label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingPolicy(missing));
        }
    }

    let jobs: Vec<(usize, ControllerKind)> = (0..cases.len())
        .flat_map(|i| kinds.iter().map(move |&k| (i, k)))
        .collect();
    exec.try_map(&jobs, |&(i, kind)| {
        let case = &cases[i];
        let plant = settings.plant(case);
        let spec = build_controller(
            kind,
            &settings.controller,
            &settings.lqr,
            &plant,
            policies[i].clone(),
        )?;
        let trace = run_closed_loop(ace_test, &spec, &plant, settings.soc0(&plant))?;
        Ok(ReportRow {
            config: case.label(),
            controller: kind.name().to_string(),
            metrics: compute_metrics(&trace, plant.bes.soc_ref_mwh)?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> PlantConfig {
        PlantConfig::new(200.0, 15.0)
    }

    #[test]
    fn equilibrium_trace_is_zero() {
        let p = plant();
        let ace = AceSeries::new(2.0, vec![0.0; 500]).unwrap();
        let params = ControllerParams::default();
        for kind in [ControllerKind::Pjm, ControllerKind::Lqr] {
            let spec = build_controller(kind, &params, &LqrSettings::default(), &p, None).unwrap();
            let tr = run_closed_loop(&ace, &spec, &p, p.bes.soc_ref_mwh).unwrap();
            for col in [
                &tr.p_ace_mw,
                &tr.rega_mw,
                &tr.regd_mw,
                &tr.p_g_mw,
                &tr.p_e_mw,
                &tr.i_ace_mws,
            ] {
                assert!(col.iter().all(|&v| v == 0.0));
            }
            assert!(tr.soc_mwh.iter().all(|&v| v == p.bes.soc_ref_mwh));
        }
    }

    #[test]
    fn integral_action_removes_constant_error() {
        let mut p = plant();
        p.generator.ramp_mw_per_s = 50.0;
        let ace = AceSeries::new(2.0, vec![-50.0; 900]).unwrap();
        let spec = build_controller(
            ControllerKind::Pjm,
            &ControllerParams::default(),
            &LqrSettings::default(),
            &p,
            None,
        )
        .unwrap();
        let tr = run_closed_loop(&ace, &spec, &p, p.bes.soc_ref_mwh).unwrap();
        let last = *tr.p_ace_mw.last().unwrap();
        assert!(last.abs() < 0.5, "{last}");
    }

    #[test]
    fn trace_identity_holds() {
        let p = plant();
        let cfg = crate::signals::SynthConfig {
            seed: 3,
            horizon_s: 7200.0,
            ..Default::default()
        };
        let ace = crate::signals::synth_ace(&cfg).unwrap();
        let spec = build_controller(
            ControllerKind::Pjm,
            &ControllerParams::default(),
            &LqrSettings::default(),
            &p,
            None,
        )
        .unwrap();
        let tr = run_closed_loop(&ace, &spec, &p, 25.0).unwrap();
        let (mut pg, mut pe) = (0.0, 0.0);
        for t in 0..tr.len() {
            assert_eq!(tr.p_ace_mw[t], tr.ace_uncorrected_mw[t] + pg + pe);
            assert!(tr.regd_mw[t].abs() <= 200.0 && tr.rega_mw[t].abs() <= 400.0);
            assert!((0.0..=50.0).contains(&tr.soc_mwh[t]));
            pg = tr.p_g_mw[t];
            pe = tr.p_e_mw[t];
        }
    }

    #[test]
    fn metrics_arithmetic() {
        let tr = SimTrace {
            t_s: vec![0.0, 2.0],
            p_ace_mw: vec![3.0, 4.0],
            soc_mwh: vec![25.0, 25.0],
            ..SimTrace::default()
        };
        let m = compute_metrics(&tr, 25.0).unwrap();
        assert_eq!(m.mean_sq_pace_mw2, 12.5);
        assert_eq!(m.mean_sq_soc_dev_mwh2, 0.0);
        let c = SimTrace {
            t_s: vec![0.0; 7],
            p_ace_mw: vec![-3.0; 7],
            soc_mwh: vec![1.0; 7],
            ..SimTrace::default()
        };
        assert_eq!(compute_metrics(&c, 1.0).unwrap().mean_sq_pace_mw2, 9.0);
        assert!(matches!(
            compute_metrics(&SimTrace::default(), 0.0),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn dt_mismatch_rejected() {
        let p = plant();
        let ace = AceSeries::new(4.0, vec![0.0; 5]).unwrap();
        let spec = ControllerSpec::PiRegd(ControllerParams::default().proposed(&p));
        assert!(run_closed_loop(&ace, &spec, &p, 25.0).is_err());
    }

    #[test]
    fn compare_requires_policies() {
        let ace = AceSeries::new(2.0, vec![0.0; 10]).unwrap();
        let cases = default_cases();
        let err = compare(
            &ace,
            &cases,
            &ControllerKind::ALL,
            &vec![None; cases.len()],
            &SystemSettings::default(),
            Exec::Sequential,
        )
        .unwrap_err();
        match err {
            Error::MissingPolicy(list) => assert_eq!(list.len(), 6),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_controller_rows_identical() {
        let ace = crate::signals::synth_ace(&crate::signals::SynthConfig {
            seed: 5,
            horizon_s: 1800.0,
            ..Default::default()
        })
        .unwrap();
        let cases = [BesCase::new(200.0, 15.0)];
        let rows = compare(
            &ace,
            &cases,
            &[ControllerKind::Pjm, ControllerKind::Pjm],
            &[None],
            &SystemSettings::default(),
            Exec::default(),
        )
        .unwrap();
        assert_eq!(rows[0], rows[1]);
        assert_eq!(default_cases()[3].label(), "200MW/60min");
    }
}

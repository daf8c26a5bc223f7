//! LQR benchmark: linear ACE/RegA/integral/SoC model, gain synthesis and the
//! RegD state-feedback step.

use nalgebra::{DMatrix, Matrix4, Vector4};

use super::care::{care_residual, solve_care};
use super::{check_inputs, integrate, Command, ControllerState, Feedback, RegaPath};
use crate::error::{Error, Result};
use crate::plant::PlantConfig;

/// Sign/scale of the RegD entry in the SoC row of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SocInputSign {
    /// `de/dt = -u / 3600` (MWh per second, discharge depletes storage).
    #[default]
    Physical,
    /// `de/dt = +u`, the literal textbook entry.
    Literal,
}

impl SocInputSign {
    pub fn entry(self) -> f64 {
        match self {
            SocInputSign::Physical => -1.0 / 3600.0,
            SocInputSign::Literal => 1.0,
        }
    }
}

/// Linear model with states `[P_ACE, RegA, K_I * I_ACE, e - e_ref]` and the
/// RegD command as input.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub q: Matrix4<f64>,
    pub r: f64,
    pub k: Vector4<f64>,
}

impl LqrModel {
    /// State and input matrices for inertia `m_s`, RegA filter `ta_s` and
    /// RegA PI gains.
    pub fn system(
        m_s: f64,
        ta_s: f64,
        kp: f64,
        ki: f64,
        soc: SocInputSign,
    ) -> (Matrix4<f64>, Vector4<f64>) {
        #[rustfmt::skip]
        let a = Matrix4::new(
            -1.0 / m_s, 1.0 / m_s,   0.0,         0.0,
            -kp / ta_s, -1.0 / ta_s, -1.0 / ta_s, 0.0,
            ki,         0.0,         0.0,         0.0,
            0.0,        0.0,         0.0,         0.0,
        );
        let b = Vector4::new(1.0 / m_s, 0.0, 0.0, soc.entry());
        (a, b)
    }

    /// Default weights: `diag(1, (C_d/C_a)^2, 0, 1/E^2)`, `R = 1`.
    pub fn default_q_diag(plant: &PlantConfig) -> [f64; 4] {
        let ratio = plant.bes.power_mw / plant.generator.capacity_mw;
        [1.0, ratio * ratio, 0.0, 1.0 / plant.bes.energy_mwh.powi(2)]
    }

    /// Builds the model and synthesizes `k` from the Riccati solution.
    pub fn synthesize(a: Matrix4<f64>, b: Vector4<f64>, q: Matrix4<f64>, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Config("LQR input weight r must be > 0".into()));
        }
        let (ad, bd, qd, rd) = Self::dynamic(&a, &b, &q, r);
        let sol = solve_care(&ad, &bd, &qd, &rd)?;
        let k = Vector4::from_iterator(sol.k.iter().copied());
        Ok(Self { a, b, q, r, k })
    }

    /// Model with a user-supplied gain (no synthesis).
    pub fn with_gain(
        a: Matrix4<f64>,
        b: Vector4<f64>,
        q: Matrix4<f64>,
        r: f64,
        k: Vector4<f64>,
    ) -> Self {
        Self { a, b, q, r, k }
    }

    fn dynamic(
        a: &Matrix4<f64>,
        b: &Vector4<f64>,
        q: &Matrix4<f64>,
        r: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_column_slice(4, 4, a.as_slice()),
            DMatrix::from_column_slice(4, 1, b.as_slice()),
            DMatrix::from_column_slice(4, 4, q.as_slice()),
            DMatrix::from_element(1, 1, r),
        )
    }

    /// Riccati residual of an explicit `P` against this model's matrices.
    pub fn riccati_residual(&self, p: &DMatrix<f64>) -> f64 {
        let (a, b, q, r) = Self::dynamic(&self.a, &self.b, &self.q, self.r);
        care_residual(&a, &b, &q, &r, p)
    }

    pub fn closed_loop(&self) -> Matrix4<f64> {
        self.a - self.b * self.k.transpose()
    }
}

/// Runtime configuration of the LQR controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrConfig {
    pub rega: RegaPath,
    pub cd_mw: f64,
    pub k: [f64; 4],
    pub soc_ref_mwh: f64,
    pub antiwindup: bool,
}

impl LqrConfig {
    pub fn validate(&self) -> Result<()> {
        self.rega.validate()?;
        if !(self.cd_mw > 0.0) || self.k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "LQR needs cd_mw > 0 and a finite gain".into(),
            ));
        }
        Ok(())
    }
}

/// `x = [P_ACE, RegA, K_I * I_ACE, e - e_ref]`.
pub fn lqr_state_vector(
    p_ace_mw: f64,
    rega_mw: f64,
    ki: f64,
    i_ace_mws: f64,
    soc_dev_mwh: f64,
) -> [f64; 4] {
    [p_ace_mw, rega_mw, ki * i_ace_mws, soc_dev_mwh]
}

/// `RegD = sat(-k . x, +-C_d)`.
pub fn lqr_regd(x: &[f64; 4], k: &[f64; 4], cd_mw: f64) -> f64 {
    let u = -(k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3]);
    u.clamp(-cd_mw, cd_mw)
}

pub fn lqr_step(
    state: &ControllerState,
    p_ace_mw: f64,
    fb: &Feedback,
    cfg: &LqrConfig,
    dt_s: f64,
) -> Result<(ControllerState, Command)> {
    check_inputs(p_ace_mw, fb, dt_s)?;
    let i_ace = integrate(state, fb, cfg.antiwindup, dt_s);
    let (_, rega_filter, rega) = cfg
        .rega
        .evaluate(state.rega_filter_mw, p_ace_mw, i_ace, dt_s);
    let x = lqr_state_vector(
        p_ace_mw,
        rega,
        cfg.rega.gains.ki,
        i_ace,
        fb.soc_mwh - cfg.soc_ref_mwh,
    );
    let regd = lqr_regd(&x, &cfg.k, cfg.cd_mw);
    let next = ControllerState {
        i_ace_mws: i_ace,
        rega_filter_mw: rega_filter,
        regd_filter_mw: state.regd_filter_mw,
        regd_energy_mws: state.regd_energy_mws + regd * dt_s,
        last_p_ace_mw: p_ace_mw,
        last_rega_mw: rega,
        last_regd_mw: regd,
    };
    Ok((
        next,
        Command {
            rega_mw: rega,
            regd_mw: regd,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::is_hurwitz;

    const PUBLISHED_K: [f64; 4] = [0.4309, -0.0339, 0.1210, 8.0];

    #[test]
    fn unit_ace_state() {
        let u = lqr_regd(&[1.0, 0.0, 0.0, 0.0], &PUBLISHED_K, 1e9);
        assert!((u + 0.4309).abs() < 1e-15);
    }

    #[test]
    fn origin_gives_zero() {
        assert_eq!(lqr_regd(&[0.0; 4], &PUBLISHED_K, 200.0), 0.0);
    }

    #[test]
    fn soc_deviation_term() {
        assert_eq!(lqr_regd(&[0.0, 0.0, 0.0, 1.0], &PUBLISHED_K, 200.0), -8.0);
    }

    #[test]
    fn saturates() {
        assert_eq!(lqr_regd(&[-1e6, 0.0, 0.0, 0.0], &PUBLISHED_K, 200.0), 200.0);
    }

    #[test]
    fn synthesized_gain_stabilizes_both_models() {
        let plant = PlantConfig::new(200.0, 15.0);
        let qd = LqrModel::default_q_diag(&plant);
        let q = Matrix4::from_diagonal(&Vector4::from(qd));
        for sign in [SocInputSign::Physical, SocInputSign::Literal] {
            let (a, b) = LqrModel::system(10.0, 60.0, 0.0, 0.4, sign);
            let model = LqrModel::synthesize(a, b, q, 1.0).unwrap();
            let cl = DMatrix::from_column_slice(4, 4, model.closed_loop().as_slice());
            assert!(is_hurwitz(&cl), "{sign:?}");
            // the SoC feedback recharges towards the reference in both sign conventions
            assert!(model.k[3] * model.b[3] > 0.0);
        }
    }

    #[test]
    fn step_uses_filtered_rega_and_scaled_integral() {
        let cfg = LqrConfig {
            rega: RegaPath {
                gains: crate::controllers::PiGains::new(0.0, 0.4),
                ta_s: 0.0,
                ca_mw: 400.0,
            },
            cd_mw: 200.0,
            k: [0.0, 1.0, 1.0, 0.0],
            soc_ref_mwh: 25.0,
            antiwindup: true,
        };
        let st = ControllerState {
            i_ace_mws: 100.0,
            ..ControllerState::default()
        };
        let fb = Feedback {
            soc_mwh: 25.0,
            ..Feedback::default()
        };
        let (_, cmd) = lqr_step(&st, 0.0, &fb, &cfg, 2.0).unwrap();
        // RegA = -0.4 * 100 = -40, K_I * I = 40, so RegD = -(-40 + 40) = 0
        assert_eq!(cmd.rega_mw, -40.0);
        assert_eq!(cmd.regd_mw, 0.0);
    }
}

//! AGC controllers: the conditional-neutrality PI benchmark, the LQR
//! benchmark, the proposed PI + nonlinear SoC feedback recharge controller and
//! the plain PI RegD controller it degenerates to.
//!
//! Every controller shares the same RegA path (PI on the corrected ACE,
//! first-order lag, limiter) and the same integral of ACE. The integrator is
//! folded lazily: at step `t` it adds the integrand of step `t-1`, using the
//! commands stored in the state and the unit outputs that answered them,
//! which arrive as the feedback of step `t`.

mod care;
mod lqr;

pub use care::{is_hurwitz, solve_care, solve_lyapunov, CareSolution};
pub use lqr::{lqr_regd, lqr_state_vector, lqr_step, LqrConfig, LqrModel, SocInputSign};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hindsight::SocPolicyTable;
use crate::plant::{lag_coefficient, PlantConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
}

impl PiGains {
    pub const fn new(kp: f64, ki: f64) -> Self {
        Self { kp, ki }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kp.is_finite() || !self.ki.is_finite() || self.ki < 0.0 {
            return Err(Error::Config(format!(
                "PI gains must be finite with ki >= 0 (kp={}, ki={})",
                self.kp, self.ki
            )));
        }
        Ok(())
    }

    fn output(&self, p_ace_mw: f64, i_ace_mws: f64) -> f64 {
        -self.kp * p_ace_mw - self.ki * i_ace_mws
    }
}

/// Internal controller memory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerState {
    /// Integral of ACE, MW*s.
    pub i_ace_mws: f64,
    pub rega_filter_mw: f64,
    pub regd_filter_mw: f64,
    /// Accumulated RegD command energy used by the neutrality loop, MW*s.
    pub regd_energy_mws: f64,
    pub last_p_ace_mw: f64,
    pub last_rega_mw: f64,
    pub last_regd_mw: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Command {
    pub rega_mw: f64,
    pub regd_mw: f64,
}

/// Measured unit outputs and storage SoC fed back to the controller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Feedback {
    pub p_g_mw: f64,
    pub p_e_mw: f64,
    pub soc_mwh: f64,
}

/// Integrator with back-calculation of command/output mismatch:
/// `i' = i + [P_ACE + (RegA - P_g) + (RegD - P_e)] dt`.
pub fn antiwindup_update(
    i_ace_mws: f64,
    p_ace_mw: f64,
    rega_mw: f64,
    p_g_mw: f64,
    regd_mw: f64,
    p_e_mw: f64,
    dt_s: f64,
) -> f64 {
    i_ace_mws + (p_ace_mw + (rega_mw - p_g_mw) + (regd_mw - p_e_mw)) * dt_s
}

/// The RegA path shared by all controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegaPath {
    pub gains: PiGains,
    /// Low-pass time constant; zero bypasses the filter.
    pub ta_s: f64,
    pub ca_mw: f64,
}

impl RegaPath {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if !(self.ta_s >= 0.0) || !(self.ca_mw > 0.0) {
            return Err(Error::Config("RegA needs ta_s >= 0 and ca_mw > 0".into()));
        }
        Ok(())
    }

    /// Returns `(P_AGC, new filter state, RegA)`.
    fn evaluate(
        &self,
        filter_mw: f64,
        p_ace_mw: f64,
        i_ace_mws: f64,
        dt_s: f64,
    ) -> (f64, f64, f64) {
        let p_agc = self.gains.output(p_ace_mw, i_ace_mws);
        let alpha = lag_coefficient(self.ta_s, dt_s);
        let filter = alpha * filter_mw + (1.0 - alpha) * p_agc;
        (p_agc, filter, filter.clamp(-self.ca_mw, self.ca_mw))
    }
}

fn check_inputs(p_ace_mw: f64, fb: &Feedback, dt_s: f64) -> Result<()> {
    if !p_ace_mw.is_finite() {
        return Err(Error::NonFinite("ACE input"));
    }
    if !(fb.p_g_mw.is_finite() && fb.p_e_mw.is_finite() && fb.soc_mwh.is_finite()) {
        return Err(Error::NonFinite("controller feedback"));
    }
    if !(dt_s > 0.0) {
        return Err(Error::Config("dt_s must be > 0".into()));
    }
    Ok(())
}

/// Folds the previous step's integrand into the integral.
fn integrate(state: &ControllerState, fb: &Feedback, antiwindup: bool, dt_s: f64) -> f64 {
    if antiwindup {
        antiwindup_update(
            state.i_ace_mws,
            state.last_p_ace_mw,
            state.last_rega_mw,
            fb.p_g_mw,
            state.last_regd_mw,
            fb.p_e_mw,
            dt_s,
        )
    } else {
        state.i_ace_mws + state.last_p_ace_mw * dt_s
    }
}

/// PJM-style conditional-neutrality controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PjmConfig {
    pub rega: RegaPath,
    pub td_s: f64,
    pub cd_mw: f64,
    /// Proportional gain on accumulated RegD energy, 1/h.
    pub neutrality_gain_per_h: f64,
    pub neutrality_enabled: bool,
    pub antiwindup: bool,
}

impl PjmConfig {
    pub fn validate(&self) -> Result<()> {
        self.rega.validate()?;
        if !(self.td_s >= 0.0) || !(self.cd_mw > 0.0) || !self.neutrality_gain_per_h.is_finite() {
            return Err(Error::Config(
                "RegD needs td_s >= 0, cd_mw > 0, finite neutrality gain".into(),
            ));
        }
        Ok(())
    }
}

pub fn pjm_step(
    state: &ControllerState,
    p_ace_mw: f64,
    fb: &Feedback,
    cfg: &PjmConfig,
    dt_s: f64,
) -> Result<(ControllerState, Command)> {
    check_inputs(p_ace_mw, fb, dt_s)?;
    let i_ace = integrate(state, fb, cfg.antiwindup, dt_s);
    let (p_agc, rega_filter, rega) = cfg
        .rega
        .evaluate(state.rega_filter_mw, p_ace_mw, i_ace, dt_s);

    let residual = p_agc - rega;
    let alpha = lag_coefficient(cfg.td_s, dt_s);
    let regd_filter = alpha * state.regd_filter_mw + (1.0 - alpha) * residual;
    let neutrality = if cfg.neutrality_enabled {
        cfg.neutrality_gain_per_h * state.regd_energy_mws / 3600.0
    } else {
        0.0
    };
    let regd = (regd_filter - neutrality).clamp(-cfg.cd_mw, cfg.cd_mw);

    let next = ControllerState {
        i_ace_mws: i_ace,
        rega_filter_mw: rega_filter,
        regd_filter_mw: regd_filter,
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

/// State-dependent recharge gain `f_SoC(e)`, MW per MWh of deviation.
pub trait SocFeedback {
    fn gain(&self, soc_mwh: f64) -> f64;
}

/// The same gain at every SoC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantGain(pub f64);

impl SocFeedback for ConstantGain {
    fn gain(&self, _soc_mwh: f64) -> f64 {
        self.0
    }
}

impl SocFeedback for SocPolicyTable {
    fn gain(&self, soc_mwh: f64) -> f64 {
        self.lookup(soc_mwh)
    }
}

/// PI RegD with nonlinear SoC feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposedConfig {
    pub rega: RegaPath,
    pub regd_gains: PiGains,
    pub cd_mw: f64,
    pub soc_ref_mwh: f64,
    pub antiwindup: bool,
}

impl ProposedConfig {
    pub fn validate(&self) -> Result<()> {
        self.rega.validate()?;
        self.regd_gains.validate()?;
        if !(self.cd_mw > 0.0) || !self.soc_ref_mwh.is_finite() {
            return Err(Error::Config(
                "RegD needs cd_mw > 0 and a finite SoC reference".into(),
            ));
        }
        Ok(())
    }
}

/// `RegD = sat(-K_P^D P_ACE - K_I^D I_ACE + f(e) (e - e_ref))`.
///
/// With positive power meaning discharge, the SoC term discharges when the
/// storage sits above its reference and recharges below it, so a
/// non-negative gain always pulls SoC towards the reference.
pub fn proposed_step<P: SocFeedback + ?Sized>(
    state: &ControllerState,
    p_ace_mw: f64,
    fb: &Feedback,
    policy: &P,
    cfg: &ProposedConfig,
    dt_s: f64,
) -> Result<(ControllerState, Command)> {
    check_inputs(p_ace_mw, fb, dt_s)?;
    let i_ace = integrate(state, fb, cfg.antiwindup, dt_s);
    let (_, rega_filter, rega) = cfg
        .rega
        .evaluate(state.rega_filter_mw, p_ace_mw, i_ace, dt_s);
    let recharge = policy.gain(fb.soc_mwh) * (fb.soc_mwh - cfg.soc_ref_mwh);
    let regd = (cfg.regd_gains.output(p_ace_mw, i_ace) + recharge).clamp(-cfg.cd_mw, cfg.cd_mw);
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

/// Plain PI RegD: `RegD = sat(-K_P^D P_ACE - K_I^D I_ACE)`.
pub fn pi_regd_step(
    state: &ControllerState,
    p_ace_mw: f64,
    fb: &Feedback,
    cfg: &ProposedConfig,
    dt_s: f64,
) -> Result<(ControllerState, Command)> {
    check_inputs(p_ace_mw, fb, dt_s)?;
    let i_ace = integrate(state, fb, cfg.antiwindup, dt_s);
    let (_, rega_filter, rega) = cfg
        .rega
        .evaluate(state.rega_filter_mw, p_ace_mw, i_ace, dt_s);
    let regd = cfg
        .regd_gains
        .output(p_ace_mw, i_ace)
        .clamp(-cfg.cd_mw, cfg.cd_mw);
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

/// Anything the closed-loop simulator can drive.
pub trait Controller {
    fn step(
        &self,
        state: &ControllerState,
        p_ace_mw: f64,
        fb: &Feedback,
        dt_s: f64,
    ) -> Result<(ControllerState, Command)>;
}

/// Shared controller parameters; defaults follow the benchmark setup
/// (`K_P = 0`, `K_I = 0.4` on RegA, `K_P^D = 1`, `K_I^D = 0.8`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub rega_gains: PiGains,
    pub regd_gains: PiGains,
    pub ta_s: f64,
    pub td_s: f64,
    pub neutrality_gain_per_h: f64,
    pub neutrality_enabled: bool,
    pub antiwindup: bool,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            rega_gains: PiGains::new(0.0, 0.4),
            regd_gains: PiGains::new(1.0, 0.8),
            ta_s: 60.0,
            td_s: 10.0,
            neutrality_gain_per_h: 2.0,
            neutrality_enabled: true,
            antiwindup: true,
        }
    }
}

impl ControllerParams {
    pub fn rega_path(&self, plant: &PlantConfig) -> RegaPath {
        RegaPath {
            gains: self.rega_gains,
            ta_s: self.ta_s,
            ca_mw: plant.generator.capacity_mw,
        }
    }

    pub fn pjm(&self, plant: &PlantConfig) -> PjmConfig {
        PjmConfig {
            rega: self.rega_path(plant),
            td_s: self.td_s,
            cd_mw: plant.bes.power_mw,
            neutrality_gain_per_h: self.neutrality_gain_per_h,
            neutrality_enabled: self.neutrality_enabled,
            antiwindup: self.antiwindup,
        }
    }

    pub fn proposed(&self, plant: &PlantConfig) -> ProposedConfig {
        ProposedConfig {
            rega: self.rega_path(plant),
            regd_gains: self.regd_gains,
            cd_mw: plant.bes.power_mw,
            soc_ref_mwh: plant.bes.soc_ref_mwh,
            antiwindup: self.antiwindup,
        }
    }
}

/// Controller selection used by the simulator, CLI and comparison harness.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Pjm(PjmConfig),
    Lqr(LqrConfig),
    Proposed {
        cfg: ProposedConfig,
        policy: Arc<SocPolicyTable>,
    },
    PiRegd(ProposedConfig),
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Pjm(_) => "pjm",
            ControllerSpec::Lqr(_) => "lqr",
            ControllerSpec::Proposed { .. } => "proposed",
            ControllerSpec::PiRegd(_) => "pi",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControllerSpec::Pjm(c) => c.validate(),
            ControllerSpec::Lqr(c) => c.validate(),
            ControllerSpec::Proposed { cfg, .. } | ControllerSpec::PiRegd(cfg) => cfg.validate(),
        }
    }

    /// RegA and RegD limiter magnitudes.
    pub fn limits(&self) -> (f64, f64) {
        match self {
            ControllerSpec::Pjm(c) => (c.rega.ca_mw, c.cd_mw),
            ControllerSpec::Lqr(c) => (c.rega.ca_mw, c.cd_mw),
            ControllerSpec::Proposed { cfg, .. } | ControllerSpec::PiRegd(cfg) => {
                (cfg.rega.ca_mw, cfg.cd_mw)
            }
        }
    }
}

impl Controller for ControllerSpec {
    fn step(
        &self,
        state: &ControllerState,
        p_ace_mw: f64,
        fb: &Feedback,
        dt_s: f64,
    ) -> Result<(ControllerState, Command)> {
        match self {
            ControllerSpec::Pjm(cfg) => pjm_step(state, p_ace_mw, fb, cfg, dt_s),
            ControllerSpec::Lqr(cfg) => lqr_step(state, p_ace_mw, fb, cfg, dt_s),
            ControllerSpec::Proposed { cfg, policy } => {
                proposed_step(state, p_ace_mw, fb, policy.as_ref(), cfg, dt_s)
            }
            ControllerSpec::PiRegd(cfg) => pi_regd_step(state, p_ace_mw, fb, cfg, dt_s),
        }
    }
}

/// The proposed controller with a fixed scalar gain, as used inside the
/// best-hindsight window problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedGainController {
    pub cfg: ProposedConfig,
    pub k_e: f64,
}

impl Controller for FixedGainController {
    fn step(
        &self,
        state: &ControllerState,
        p_ace_mw: f64,
        fb: &Feedback,
        dt_s: f64,
    ) -> Result<(ControllerState, Command)> {
        proposed_step(
            state,
            p_ace_mw,
            fb,
            &ConstantGain(self.k_e),
            &self.cfg,
            dt_s,
        )
    }
}

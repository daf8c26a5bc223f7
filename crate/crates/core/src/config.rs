//! Flat `key = value` run configuration shared by every subcommand.
//!
//! Lines are `key = value`; `#` starts a comment; lists are written
//! `[a, b, c, d]`. Unknown keys are rejected so typos cannot silently fall
//! back to defaults.

use std::fs;
use std::path::Path;

use crate::controllers::{ControllerParams, PiGains, SocInputSign};
use crate::engine::{BesCase, ControllerKind, LqrSettings, SystemSettings};
use crate::error::{Error, Result};
use crate::hindsight::{default_k_bounds, E0Plan, SweepConfig};
use crate::plant::PlantConfig;

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "controller",
    "kp",
    "ki",
    "kp_d",
    "ki_d",
    "ta_s",
    "td_s",
    "tg_s",
    "neutrality_gain",
    "neutrality_enabled",
    "antiwindup",
    "lqr_gain",
    "m_inertia",
    "q_diag",
    "r",
    "lqr_soc_b",
    "deadband_mw",
    "ramp_mw_per_min",
    "dt_s",
    "ca_mw",
    "cd_mw",
    "duration_min",
    "rte",
    "soc0_frac",
    "we",
    "window_min",
    "bins",
    "stride_steps",
    "e0_draws",
    "k_max",
    "seed",
    "threads",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub controller: ControllerKind,
    pub kp: f64,
    pub ki: f64,
    pub kp_d: f64,
    pub ki_d: f64,
    pub ta_s: f64,
    pub td_s: f64,
    pub tg_s: f64,
    /// RegD energy-neutrality gain, 1/h.
    pub neutrality_gain: f64,
    pub neutrality_enabled: bool,
    pub antiwindup: bool,
    pub lqr_gain: Option<[f64; 4]>,
    pub m_inertia: f64,
    pub q_diag: Option<[f64; 4]>,
    pub r: f64,
    pub lqr_soc_b: SocInputSign,
    pub deadband_mw: f64,
    /// `None` means 10 % of `ca_mw` per minute.
    pub ramp_mw_per_min: Option<f64>,
    pub dt_s: f64,
    pub ca_mw: f64,
    pub cd_mw: f64,
    pub duration_min: f64,
    pub rte: f64,
    pub soc0_frac: f64,
    pub we: f64,
    pub window_min: f64,
    pub bins: usize,
    /// `None` means half a window.
    pub stride_steps: Option<usize>,
    pub e0_draws: usize,
    /// Upper gain bound; `None` means `10 C_d / E`.
    pub k_max: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ControllerParams::default();
        let lqr = LqrSettings::default();
        Self {
            controller: ControllerKind::Pjm,
            kp: p.rega_gains.kp,
            ki: p.rega_gains.ki,
            kp_d: p.regd_gains.kp,
            ki_d: p.regd_gains.ki,
            ta_s: p.ta_s,
            td_s: p.td_s,
            tg_s: 20.0,
            neutrality_gain: p.neutrality_gain_per_h,
            neutrality_enabled: p.neutrality_enabled,
            antiwindup: p.antiwindup,
            lqr_gain: None,
            m_inertia: lqr.m_inertia_s,
            q_diag: None,
            r: lqr.r,
            lqr_soc_b: lqr.soc_input,
            deadband_mw: 5.0,
            ramp_mw_per_min: None,
            dt_s: 2.0,
            ca_mw: 400.0,
            cd_mw: 200.0,
            duration_min: 15.0,
            rte: 0.85,
            soc0_frac: 0.5,
            we: 60.0,
            window_min: 15.0,
            bins: 500,
            stride_steps: None,
            e0_draws: 20,
            k_max: None,
            seed: 0,
            threads: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: `{v}` is not a boolean"))),
    }
}

fn parse_vec4(key: &str, v: &str) -> Result<[f64; 4]> {
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Config(format!("`{key}` must be a list like [a, b, c, d]")))?;
    let items: Vec<f64> = inner
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect::<Result<_>>()?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("`{key}` needs exactly 4 entries")))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = || parse_f64(key, v);
        match key {
            "controller" => self.controller = v.parse()?,
            "kp" => self.kp = f()?,
            "ki" => self.ki = f()?,
            "kp_d" => self.kp_d = f()?,
            "ki_d" => self.ki_d = f()?,
            "ta_s" => self.ta_s = f()?,
            "td_s" => self.td_s = f()?,
            "tg_s" => self.tg_s = f()?,
            "neutrality_gain" => self.neutrality_gain = f()?,
            "neutrality_enabled" => self.neutrality_enabled = parse_bool(key, v)?,
            "antiwindup" => self.antiwindup = parse_bool(key, v)?,
            "lqr_gain" => self.lqr_gain = Some(parse_vec4(key, v)?),
            "m_inertia" => self.m_inertia = f()?,
            "q_diag" => self.q_diag = Some(parse_vec4(key, v)?),
            "r" => self.r = f()?,
            "lqr_soc_b" => {
                self.lqr_soc_b = match v {
                    "physical" => SocInputSign::Physical,
                    "literal" => SocInputSign::Literal,
                    _ => return Err(Error::Config("`lqr_soc_b` must be physical|literal".into())),
                }
            }
            "deadband_mw" => self.deadband_mw = f()?,
            "ramp_mw_per_min" => self.ramp_mw_per_min = Some(f()?),
            "dt_s" => self.dt_s = f()?,
            "ca_mw" => self.ca_mw = f()?,
            "cd_mw" => self.cd_mw = f()?,
            "duration_min" => self.duration_min = f()?,
            "rte" => self.rte = f()?,
            "soc0_frac" => self.soc0_frac = f()?,
            "we" => self.we = f()?,
            "window_min" => self.window_min = f()?,
            "bins" => self.bins = parse_usize(key, v)?,
            "stride_steps" => self.stride_steps = Some(parse_usize(key, v)?),
            "e0_draws" => self.e0_draws = parse_usize(key, v)?,
            "k_max" => self.k_max = Some(f()?),
            "seed" => {
                self.seed = v.parse().map_err(|_| {
                    Error::Config(format!("`seed`: `{v}` is not an unsigned integer"))
                })?
            }
            "threads" => self.threads = Some(parse_usize(key, v)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_config(&text)
    }

    /// Checks the settings that the per-module validators cannot see.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_s", self.dt_s),
            ("ca_mw", self.ca_mw),
            ("cd_mw", self.cd_mw),
            ("duration_min", self.duration_min),
            ("window_min", self.window_min),
            ("m_inertia", self.m_inertia),
            ("r", self.r),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("`{k}` must be > 0")));
            }
        }
        if !(self.rte > 0.0 && self.rte <= 1.0) {
            return Err(Error::Config("`rte` must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.soc0_frac) {
            return Err(Error::Config("`soc0_frac` must be in [0, 1]".into()));
        }
        if self.we < 0.0 || self.bins == 0 || self.e0_draws == 0 {
            return Err(Error::Config(
                "`we` must be >= 0; `bins`, `e0_draws` >= 1".into(),
            ));
        }
        if self.stride_steps == Some(0) || self.threads == Some(0) {
            return Err(Error::Config(
                "`stride_steps` and `threads` must be >= 1".into(),
            ));
        }
        if self.k_max.is_some_and(|k| k < 0.0) {
            return Err(Error::Config("`k_max` must be >= 0".into()));
        }
        Ok(())
    }

    pub fn controller_params(&self) -> ControllerParams {
        ControllerParams {
            rega_gains: PiGains::new(self.kp, self.ki),
            regd_gains: PiGains::new(self.kp_d, self.ki_d),
            ta_s: self.ta_s,
            td_s: self.td_s,
            neutrality_gain_per_h: self.neutrality_gain,
            neutrality_enabled: self.neutrality_enabled,
            antiwindup: self.antiwindup,
        }
    }

    pub fn lqr_settings(&self) -> LqrSettings {
        LqrSettings {
            m_inertia_s: self.m_inertia,
            q_diag: self.q_diag,
            r: self.r,
            gain: self.lqr_gain,
            soc_input: self.lqr_soc_b,
        }
    }

    pub fn system(&self) -> SystemSettings {
        SystemSettings {
            ca_mw: self.ca_mw,
            dt_s: self.dt_s,
            round_trip_efficiency: self.rte,
            soc0_frac: self.soc0_frac,
            tg_s: Some(self.tg_s),
            deadband_mw: Some(self.deadband_mw),
            ramp_mw_per_s: Some(self.ramp_mw_per_min.unwrap_or(0.1 * self.ca_mw) / 60.0),
            controller: self.controller_params(),
            lqr: self.lqr_settings(),
        }
    }

    /// The single storage configuration named by `cd_mw` / `duration_min`.
    pub fn case(&self) -> BesCase {
        BesCase {
            w_e: self.we,
            window_min: self.window_min,
            ..BesCase::new(self.cd_mw, self.duration_min)
        }
    }

    pub fn plant(&self) -> PlantConfig {
        self.system().plant(&self.case())
    }

    /// Training sweep for `case`, using the case's window and weight.
    pub fn sweep_config(&self, case: &BesCase) -> Result<SweepConfig> {
        let system = self.system();
        let plant = system.plant(case);
        let window_steps = (case.window_min * 60.0 / self.dt_s).round() as usize;
        if window_steps == 0 {
            return Err(Error::Config("window shorter than one step".into()));
        }
        let (lo, hi) = default_k_bounds(&plant);
        Ok(SweepConfig {
            window_steps,
            stride_steps: self.stride_steps.unwrap_or((window_steps / 2).max(1)),
            plan: E0Plan::Stratified {
                strata: self.bins,
                draws_per_start: self.e0_draws,
            },
            plant,
            controller: system.controller.proposed(&plant),
            w_e: case.w_e,
            k_bounds: (lo, self.k_max.unwrap_or(hi)),
            seed: self.seed,
        })
    }
}

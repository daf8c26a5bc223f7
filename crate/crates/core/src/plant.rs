//! Discrete-time response models of the regulating units.
//!
//! Conventional generation is modelled as deadband, first-order governor lag,
//! ramp limit and capacity saturation, applied in that order. Battery storage
//! is an energy reservoir with separate charge/discharge efficiencies whose
//! delivered power is clamped so the state of charge never leaves `[0, E]`.
//!
//! Power sign convention: positive means injection into the grid (generator
//! raising output, battery discharging).

use crate::error::{Error, Result};

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Zero-order-hold coefficient of a first-order lag `1 / (T s + 1)`.
///
/// A time constant of zero is a pass-through.
pub fn lag_coefficient(time_constant_s: f64, dt_s: f64) -> f64 {
    if time_constant_s <= 0.0 {
        0.0
    } else {
        (-dt_s / time_constant_s).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    /// Symmetric output limit, MW.
    pub capacity_mw: f64,
    pub deadband_mw: f64,
    pub governor_tc_s: f64,
    pub ramp_mw_per_s: f64,
}

impl GeneratorParams {
    /// Defaults for a fleet of the given capacity: `T_g = 20 s`, 5 MW
    /// deadband, ramp of 10 % of capacity per minute.
    pub fn with_capacity(capacity_mw: f64) -> Self {
        Self {
            capacity_mw,
            deadband_mw: 5.0,
            governor_tc_s: 20.0,
            ramp_mw_per_s: 0.1 * capacity_mw / 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_mw > 0.0) {
            return Err(Error::Config("generator capacity must be > 0".into()));
        }
        if !(self.deadband_mw >= 0.0) {
            return Err(Error::Config("generator deadband must be >= 0".into()));
        }
        if !(self.governor_tc_s > 0.0) {
            return Err(Error::Config("governor time constant must be > 0".into()));
        }
        if !(self.ramp_mw_per_s > 0.0) {
            return Err(Error::Config("ramp rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeneratorState {
    /// Output of the governor lag before ramp and capacity limits.
    pub governor_out_mw: f64,
    pub p_g_mw: f64,
}

/// Advances the generator one step; returns the new state and delivered power.
pub fn generator_step(
    state: GeneratorState,
    params: &GeneratorParams,
    cmd_mw: f64,
    dt_s: f64,
) -> Result<(GeneratorState, f64)> {
    if !cmd_mw.is_finite() {
        return Err(Error::NonFinite("generator command"));
    }
    let cmd = if cmd_mw.abs() < params.deadband_mw {
        0.0
    } else {
        cmd_mw
    };
    let alpha = lag_coefficient(params.governor_tc_s, dt_s);
    let governor_out_mw = alpha * state.governor_out_mw + (1.0 - alpha) * cmd;
    let max_step = params.ramp_mw_per_s * dt_s;
    let ramped = governor_out_mw.clamp(state.p_g_mw - max_step, state.p_g_mw + max_step);
    let p_g_mw = ramped.clamp(-params.capacity_mw, params.capacity_mw);
    Ok((
        GeneratorState {
            governor_out_mw,
            p_g_mw,
        },
        p_g_mw,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesParams {
    /// Symmetric charge/discharge power limit, MW.
    pub power_mw: f64,
    pub energy_mwh: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub soc_ref_mwh: f64,
}

impl BesParams {
    /// Splits the round-trip efficiency evenly between charge and discharge
    /// and places the reference at half capacity.
    pub fn new(power_mw: f64, energy_mwh: f64, round_trip_efficiency: f64) -> Self {
        let eta = round_trip_efficiency.sqrt();
        Self {
            power_mw,
            energy_mwh,
            eta_charge: eta,
            eta_discharge: eta,
            soc_ref_mwh: 0.5 * energy_mwh,
        }
    }

    /// Storage rated `power_mw` for `duration_min` minutes at full power.
    pub fn from_duration(power_mw: f64, duration_min: f64, round_trip_efficiency: f64) -> Self {
        Self::new(
            power_mw,
            power_mw * duration_min / 60.0,
            round_trip_efficiency,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_mw > 0.0) {
            return Err(Error::Config("storage power must be > 0".into()));
        }
        if !(self.energy_mwh > 0.0) {
            return Err(Error::Config("storage energy must be > 0".into()));
        }
        for eta in [self.eta_charge, self.eta_discharge] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Config("efficiencies must lie in (0, 1]".into()));
            }
        }
        if !(self.soc_ref_mwh >= 0.0 && self.soc_ref_mwh <= self.energy_mwh) {
            return Err(Error::Config("SoC reference must lie in [0, E]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BesState {
    pub soc_mwh: f64,
    /// Delivered power, positive when discharging.
    pub p_e_mw: f64,
}

/// Advances the battery one step; returns the new state and delivered power.
pub fn bes_step(
    state: BesState,
    params: &BesParams,
    cmd_mw: f64,
    dt_s: f64,
) -> Result<(BesState, f64)> {
    if !cmd_mw.is_finite() {
        return Err(Error::NonFinite("storage command"));
    }
    let soc = state.soc_mwh;
    let hours = dt_s / SECONDS_PER_HOUR;
    let mut p = cmd_mw.clamp(-params.power_mw, params.power_mw);
    let soc_mwh = if p > 0.0 {
        let limit = soc * params.eta_discharge / hours;
        if p >= limit {
            p = limit;
            0.0
        } else {
            (soc - p * hours / params.eta_discharge).clamp(0.0, params.energy_mwh)
        }
    } else if p < 0.0 {
        let headroom = params.energy_mwh - soc;
        let limit = headroom / (hours * params.eta_charge);
        if -p >= limit {
            p = -limit + 0.0;
            params.energy_mwh
        } else {
            (soc - p * hours * params.eta_charge).clamp(0.0, params.energy_mwh)
        }
    } else {
        // normalise -0.0
        p = 0.0;
        soc
    };
    Ok((BesState { soc_mwh, p_e_mw: p }, p))
}

/// Generation fleet plus aggregated storage, with the step size shared by both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConfig {
    pub generator: GeneratorParams,
    pub bes: BesParams,
    /// Number of identical storage units the aggregate is split into. Each
    /// unit receives an equal share of the command.
    pub bes_units: u32,
    pub dt_s: f64,
}

impl PlantConfig {
    /// 400 MW of conventional regulation, storage of the given rating, 85 %
    /// round-trip efficiency, 2 s steps.
    pub fn new(bes_power_mw: f64, bes_duration_min: f64) -> Self {
        Self {
            generator: GeneratorParams::with_capacity(400.0),
            bes: BesParams::from_duration(bes_power_mw, bes_duration_min, 0.85),
            bes_units: 1,
            dt_s: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0) {
            return Err(Error::Config("dt_s must be > 0".into()));
        }
        if self.bes_units == 0 {
            return Err(Error::Config("bes_units must be >= 1".into()));
        }
        self.generator.validate()?;
        self.bes.validate()
    }

    /// Per-unit parameters when the storage is split into `bes_units` pieces.
    pub fn unit_bes(&self) -> BesParams {
        let n = f64::from(self.bes_units);
        BesParams {
            power_mw: self.bes.power_mw / n,
            energy_mwh: self.bes.energy_mwh / n,
            soc_ref_mwh: self.bes.soc_ref_mwh / n,
            ..self.bes
        }
    }
}

/// Evolving state of the whole plant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantState {
    pub generator: GeneratorState,
    pub bes: BesState,
}

impl PlantState {
    pub fn at_soc(soc_mwh: f64) -> Self {
        Self {
            generator: GeneratorState::default(),
            bes: BesState {
                soc_mwh,
                p_e_mw: 0.0,
            },
        }
    }

    /// Steps generator and storage with the given commands.
    pub fn step(&self, plant: &PlantConfig, rega_mw: f64, regd_mw: f64) -> Result<PlantState> {
        let (generator, _) = generator_step(self.generator, &plant.generator, rega_mw, plant.dt_s)?;
        let bes = if plant.bes_units == 1 {
            bes_step(self.bes, &plant.bes, regd_mw, plant.dt_s)?.0
        } else {
            // identical units holding equal shares of the aggregate SoC
            let n = f64::from(plant.bes_units);
            let unit = plant.unit_bes();
            let share = BesState {
                soc_mwh: self.bes.soc_mwh / n,
                p_e_mw: self.bes.p_e_mw / n,
            };
            let (next, _) = bes_step(share, &unit, regd_mw / n, plant.dt_s)?;
            let mut soc = 0.0;
            let mut p = 0.0;
            for _ in 0..plant.bes_units {
                soc += next.soc_mwh;
                p += next.p_e_mw;
            }
            BesState {
                soc_mwh: soc.min(plant.bes.energy_mwh),
                p_e_mw: p,
            }
        };
        Ok(PlantState { generator, bes })
    }
}

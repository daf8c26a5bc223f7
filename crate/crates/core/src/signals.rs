//! Area-control-error series: CSV I/O, synthetic generation, normality
//! statistics and reconstruction of the uncorrected signal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::plant::{PlantConfig, PlantState};

pub const ACE_CSV_HEADER: &str = "t_s,ace_mw";

/// Uniformly sampled ACE signal in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct AceSeries {
    dt_s: f64,
    values: Vec<f64>,
    start_time_s: f64,
}

impl AceSeries {
    pub fn new(dt_s: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_start(dt_s, values, 0.0)
    }

    pub fn with_start(dt_s: f64, values: Vec<f64>, start_time_s: f64) -> Result<Self> {
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(Error::Config(format!("dt_s must be positive, got {dt_s}")));
        }
        if values.is_empty() {
            return Err(Error::NoSamples);
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: row + 1,
                msg: "non-finite value".into(),
            });
        }
        Ok(Self {
            dt_s,
            values,
            start_time_s,
        })
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 * self.dt_s
    }

    /// Sub-series `[start, start + len)`; `None` when out of range or empty.
    pub fn window(&self, start: usize, len: usize) -> Option<AceSeries> {
        if len == 0 || start.checked_add(len)? > self.values.len() {
            return None;
        }
        Some(AceSeries {
            dt_s: self.dt_s,
            values: self.values[start..start + len].to_vec(),
            start_time_s: self.time_at(start),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str(ACE_CSV_HEADER);
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            // shortest round-trip formatting
            let _ = writeln!(out, "{},{}", self.time_at(i), v);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?;
        if headers.len() < 2 || &headers[0] != "t_s" || &headers[1] != "ace_mw" {
            if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
                return Err(Error::NoSamples);
            }
            return Err(Error::Parse {
                row: 0,
                msg: format!("expected header `{ACE_CSV_HEADER}`"),
            });
        }

        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(Error::Parse {
                    row,
                    msg: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let parse = |cell: &str, name: &str| -> Result<f64> {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        msg: format!("{name} `{cell}` is not a number"),
                    })
            };
            times.push(parse(&record[0], "t_s")?);
            values.push(parse(&record[1], "ace_mw")?);
        }
        if values.is_empty() {
            return Err(Error::NoSamples);
        }

        let dt_s = if times.len() >= 2 {
            times[1] - times[0]
        } else {
            2.0
        };
        if times.len() >= 2 && !(dt_s > 0.0) {
            return Err(Error::NonUniform { row: 2 });
        }
        for k in 2..times.len() {
            let gap = times[k] - times[k - 1];
            if (gap - dt_s).abs() > 1e-6 * dt_s {
                return Err(Error::NonUniform { row: k + 1 });
            }
        }
        Self::with_start(dt_s, values, times[0])
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// Reads an ACE CSV file (`t_s,ace_mw`).
pub fn load_ace_csv(path: impl AsRef<Path>) -> Result<AceSeries> {
    AceSeries::load_csv(path)
}

/// Parameters of the synthetic ACE generator.
///
/// The signal is a discretised mean-reverting process
/// `x[k+1] = m + (x[k] - m) * exp(-theta dt) + eps[k] + jumps[k]`
/// where `eps` is drawn from a Gaussian/Laplace mixture with standard
/// deviation `innovation_scale_mw` and the jumps arrive as a Poisson process
/// with Gaussian sizes of standard deviation `jump_scale_mw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub mean_mw: f64,
    pub reversion_rate_per_s: f64,
    /// Per-step innovation standard deviation.
    pub innovation_scale_mw: f64,
    /// Probability that an innovation is Laplace rather than Gaussian.
    pub heavy_tail_mix: f64,
    pub jump_rate_per_hour: f64,
    pub jump_scale_mw: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt_s: 2.0,
            horizon_s: 24.0 * 3600.0,
            mean_mw: 0.0,
            reversion_rate_per_s: 1.0 / 300.0,
            innovation_scale_mw: 30.0,
            heavy_tail_mix: 0.3,
            jump_rate_per_hour: 2.0,
            jump_scale_mw: 100.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt_s > 0.0) {
            return bad("dt_s must be > 0");
        }
        if !(self.horizon_s >= self.dt_s) {
            return Err(Error::HorizonTooShort);
        }
        if !(self.reversion_rate_per_s >= 0.0) {
            return bad("reversion rate must be >= 0");
        }
        if !(self.innovation_scale_mw >= 0.0 && self.jump_scale_mw >= 0.0) {
            return bad("scales must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.heavy_tail_mix) {
            return bad("heavy_tail_mix must lie in [0, 1]");
        }
        if !(self.jump_rate_per_hour >= 0.0) {
            return bad("jump rate must be >= 0");
        }
        if !self.mean_mw.is_finite() {
            return bad("mean must be finite");
        }
        Ok(())
    }

    /// AR(1) coefficient of the discretised process.
    pub fn persistence(&self) -> f64 {
        (-self.reversion_rate_per_s * self.dt_s).exp()
    }

    /// Variance of the total per-step shock (innovation plus jumps).
    pub fn shock_variance(&self) -> f64 {
        let jumps_per_step = self.jump_rate_per_hour * self.dt_s / 3600.0;
        self.innovation_scale_mw.powi(2) + jumps_per_step * self.jump_scale_mw.powi(2)
    }
}

/// Generates a synthetic ACE series; a pure function of `cfg`.
pub fn synth_ace(cfg: &SynthConfig) -> Result<AceSeries> {
    cfg.validate()?;
    let n = (cfg.horizon_s / cfg.dt_s).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phi = cfg.persistence();
    let laplace_b = cfg.innovation_scale_mw / std::f64::consts::SQRT_2;
    let jump_mean = cfg.jump_rate_per_hour * cfg.dt_s / 3600.0;
    let jumps = if jump_mean > 0.0 {
        Some(Poisson::new(jump_mean).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut x = cfg.mean_mw;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(x);
        // draw order is fixed so the stream is reproducible
        let heavy = rng.random::<f64>() < cfg.heavy_tail_mix;
        let eps = if heavy {
            let magnitude: f64 = Exp1.sample(&mut rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * magnitude * laplace_b
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * cfg.innovation_scale_mw
        };
        let mut jump = 0.0;
        if let Some(p) = &jumps {
            let count: f64 = p.sample(&mut rng);
            for _ in 0..count as u64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                jump += z * cfg.jump_scale_mw;
            }
        }
        x = cfg.mean_mw + (x - cfg.mean_mw) * phi + eps + jump;
    }
    AceSeries::new(cfg.dt_s, values)
}

/// Jarque–Bera statistic `n/6 (S^2 + (K-3)^2/4)` with moment-based skewness
/// and kurtosis.
pub fn jarque_bera(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 4 {
        return Err(Error::Config(format!(
            "Jarque-Bera needs at least 4 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let scale = mean
        .abs()
        .max(values.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    if !(m2 > (f64::EPSILON * scale).powi(2) * 16.0) {
        return Err(Error::Degenerate);
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    Ok(nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0))
}

/// Recovers the uncorrected ACE from the corrected signal and the historical
/// regulation commands.
///
/// The commands are replayed through the unit models from `soc0_mwh` (zero
/// generator output), and each response is removed one step later, matching
/// the measurement delay of the closed-loop simulator.
pub fn reconstruct_uncorrected(
    corrected: &AceSeries,
    rega_hist: &AceSeries,
    regd_hist: &AceSeries,
    plant: &PlantConfig,
    soc0_mwh: f64,
) -> Result<AceSeries> {
    plant.validate()?;
    let n = corrected.len();
    if rega_hist.len() != n || regd_hist.len() != n {
        return Err(Error::LengthMismatch(format!(
            "corrected has {n} samples, RegA {} and RegD {}",
            rega_hist.len(),
            regd_hist.len()
        )));
    }
    for s in [rega_hist, regd_hist] {
        if (s.dt_s() - corrected.dt_s()).abs() > 1e-9 * corrected.dt_s() {
            return Err(Error::LengthMismatch("sample intervals differ".into()));
        }
    }
    if (plant.dt_s - corrected.dt_s()).abs() > 1e-9 * corrected.dt_s() {
        return Err(Error::Config("plant dt_s differs from series dt_s".into()));
    }
    if !(0.0..=plant.bes.energy_mwh).contains(&soc0_mwh) {
        return Err(Error::Config("initial SoC outside [0, E]".into()));
    }

    let mut state = PlantState::at_soc(soc0_mwh);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let response = state.generator.p_g_mw + state.bes.p_e_mw;
        out.push(corrected.values()[t] - response);
        state = state.step(plant, rega_hist.values()[t], regd_hist.values()[t])?;
    }
    AceSeries::with_start(corrected.dt_s(), out, corrected.start_time_s())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_file() {
        let s = AceSeries::from_csv_str("t_s,ace_mw\n0,5.0\n2,-3.0\n4,0.0\n").unwrap();
        assert_eq!(s.dt_s(), 2.0);
        assert_eq!(s.values(), &[5.0, -3.0, 0.0]);
    }

    #[test]
    fn rejects_non_uniform_spacing() {
        let err = AceSeries::from_csv_str("t_s,ace_mw\n0,1\n2,2\n5,3\n").unwrap_err();
        assert_eq!(err.to_string(), "non-uniform spacing at row 3");
    }

    #[test]
    fn rejects_empty_and_garbage() {
        assert_eq!(
            AceSeries::from_csv_str("").unwrap_err().to_string(),
            "no samples"
        );
        assert_eq!(
            AceSeries::from_csv_str("t_s,ace_mw\n")
                .unwrap_err()
                .to_string(),
            "no samples"
        );
        let err = AceSeries::from_csv_str("t_s,ace_mw\n0,1\n2,abc\n").unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_ace_csv("/nonexistent/ace.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig {
            seed: 7,
            horizon_s: 3600.0,
            ..SynthConfig::default()
        };
        let a = synth_ace(&cfg).unwrap().to_csv_string();
        let b = synth_ace(&cfg).unwrap().to_csv_string();
        assert_eq!(a, b);
        let c = synth_ace(&SynthConfig { seed: 8, ..cfg })
            .unwrap()
            .to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_without_noise_is_constant() {
        let cfg = SynthConfig {
            mean_mw: 12.5,
            innovation_scale_mw: 0.0,
            jump_rate_per_hour: 0.0,
            horizon_s: 600.0,
            ..SynthConfig::default()
        };
        let s = synth_ace(&cfg).unwrap();
        assert_eq!(s.len(), 300);
        assert!(s.values().iter().all(|&v| v == 12.5));
    }

    #[test]
    fn synth_rejects_short_horizon() {
        let cfg = SynthConfig {
            horizon_s: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(synth_ace(&cfg), Err(Error::HorizonTooShort)));
    }

    #[test]
    fn synth_mean_within_stationary_bound() {
        let cfg = SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        };
        let s = synth_ace(&cfg).unwrap();
        let n = s.len() as f64;
        let mean = s.values().iter().sum::<f64>() / n;
        // AR(1) oracle: var = shock / (1 - phi^2), n_eff = n (1 - phi) / (1 + phi)
        let phi = cfg.persistence();
        let std = (cfg.shock_variance() / (1.0 - phi * phi)).sqrt();
        let n_eff = n * (1.0 - phi) / (1.0 + phi);
        assert!(
            mean.abs() <= 3.0 * std / n_eff.sqrt(),
            "mean {mean}, std {std}"
        );
    }

    #[test]
    fn jarque_bera_two_point_sample() {
        let v: Vec<f64> = (0..600)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let jb = jarque_bera(&v).unwrap();
        assert!((jb - 100.0).abs() < 1e-9, "{jb}");
    }

    #[test]
    fn jarque_bera_gaussian_moments_give_zero() {
        // symmetric sample with kurtosis exactly 3: {-a, 0 x4, a} has K = 3
        let v = [-1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert!(jarque_bera(&v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn jarque_bera_degenerate() {
        assert!(matches!(jarque_bera(&[3.0; 10]), Err(Error::Degenerate)));
        assert!(jarque_bera(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn jarque_bera_accepts_gaussian_draws() {
        let mut accepted = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..10_000)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            if jarque_bera(&v).unwrap() < 9.21 {
                accepted += 1;
            }
        }
        assert!(accepted >= 95, "{accepted}");
    }

    #[test]
    fn reconstruct_with_zero_commands_is_identity() {
        let plant = PlantConfig::new(200.0, 15.0);
        let corrected = AceSeries::new(2.0, vec![1.0, -2.0, 3.5]).unwrap();
        let zero = AceSeries::new(2.0, vec![0.0; 3]).unwrap();
        let out = reconstruct_uncorrected(&corrected, &zero, &zero, &plant, 25.0).unwrap();
        assert_eq!(out.values(), corrected.values());
    }

    #[test]
    fn reconstruct_zero_corrected_gives_negated_response() {
        let plant = PlantConfig::new(200.0, 15.0);
        let zero = AceSeries::new(2.0, vec![0.0; 4]).unwrap();
        let cmd = AceSeries::new(2.0, vec![50.0; 4]).unwrap();
        let out = reconstruct_uncorrected(&zero, &cmd, &cmd, &plant, 25.0).unwrap();
        let mut st = PlantState::at_soc(25.0);
        for t in 0..4 {
            assert_eq!(out.values()[t], -(st.generator.p_g_mw + st.bes.p_e_mw));
            st = st.step(&plant, 50.0, 50.0).unwrap();
        }
        assert!(out.values()[1] < 0.0);
    }

    #[test]
    fn reconstruct_length_mismatch() {
        let plant = PlantConfig::new(200.0, 15.0);
        let a = AceSeries::new(2.0, vec![0.0; 4]).unwrap();
        let b = AceSeries::new(2.0, vec![0.0; 3]).unwrap();
        assert!(matches!(
            reconstruct_uncorrected(&a, &b, &a, &plant, 25.0),
            Err(Error::LengthMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(values in prop::collection::vec(-1e4f64..1e4, 1..50)) {
            let s = AceSeries::new(2.0, values).unwrap();
            let back = AceSeries::from_csv_str(&s.to_csv_string()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn jarque_bera_affine_invariant(
            values in prop::collection::vec(-100.0f64..100.0, 8..60),
            a in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0],
            b in -50.0f64..50.0,
        ) {
            prop_assume!(jarque_bera(&values).is_ok());
            let jb = jarque_bera(&values).unwrap();
            let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let jb2 = jarque_bera(&moved).unwrap();
            prop_assert!((jb - jb2).abs() <= 1e-7 * (1.0 + jb.abs()), "{} vs {}", jb, jb2);
        }
    }
}

//! Binned SoC feedback policy: aggregation of hindsight samples into per-bin
//! mean gains, lookup, and the policy CSV format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TrainSample;
use crate::error::{Error, Result};

pub const POLICY_CSV_HEADER: &str = "bin_index,e_lo_mwh,e_hi_mwh,gain_mw_per_mwh,sample_count";

fn uniform_edges(energy_mwh: f64, n_bins: usize) -> Vec<f64> {
    (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                energy_mwh
            } else {
                energy_mwh * i as f64 / n_bins as f64
            }
        })
        .collect()
}

/// Index of the bin `[edge_i, edge_{i+1})` holding `soc`; `soc == E` maps to
/// the last bin. Caller guarantees `0 <= soc <= E`.
fn bin_of(edges: &[f64], soc: f64) -> usize {
    let n = edges.len() - 1;
    edges
        .partition_point(|&e| e <= soc)
        .saturating_sub(1)
        .min(n - 1)
}

/// Piecewise-constant gain over `[0, E]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocPolicyTable {
    edges: Vec<f64>,
    gains: Vec<f64>,
    counts: Vec<u64>,
}

impl SocPolicyTable {
    /// Table of `n_bins` equal-width bins with the same gain everywhere.
    pub fn uniform(energy_mwh: f64, n_bins: usize, gain: f64) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Config("n_bins must be >= 1".into()));
        }
        Self::from_parts(
            uniform_edges(energy_mwh, n_bins),
            vec![gain; n_bins],
            vec![0; n_bins],
        )
    }

    pub fn from_parts(edges: Vec<f64>, gains: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        let n = gains.len();
        if n == 0 || edges.len() != n + 1 || counts.len() != n {
            return Err(Error::Config(
                "policy needs n bins, n+1 edges, n counts".into(),
            ));
        }
        if edges[0] != 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) || !edges[n].is_finite() {
            return Err(Error::Config(
                "policy edges must start at 0 and increase strictly".into(),
            ));
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("policy gain"));
        }
        Ok(Self {
            edges,
            gains,
            counts,
        })
    }

    pub fn energy_mwh(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn n_bins(&self) -> usize {
        self.gains.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bin_index(&self, soc_mwh: f64) -> Result<usize> {
        if !(0.0..=self.energy_mwh()).contains(&soc_mwh) {
            return Err(Error::Config(format!(
                "SoC {soc_mwh} MWh outside [0, {}]",
                self.energy_mwh()
            )));
        }
        Ok(bin_of(&self.edges, soc_mwh))
    }

    /// Gain at `soc_mwh`; errors outside `[0, E]`.
    pub fn eval(&self, soc_mwh: f64) -> Result<f64> {
        Ok(self.gains[self.bin_index(soc_mwh)?])
    }

    /// Gain at `soc_mwh`, clamping the argument into `[0, E]`.
    pub fn lookup(&self, soc_mwh: f64) -> f64 {
        let soc = soc_mwh.clamp(0.0, self.energy_mwh());
        self.gains[bin_of(&self.edges, soc)]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(POLICY_CSV_HEADER);
        out.push('\n');
        for i in 0..self.n_bins() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i,
                self.edges[i],
                self.edges[i + 1],
                self.gains[i],
                self.counts[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?;
        let expected: Vec<&str> = POLICY_CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                row: 0,
                msg: format!("expected header `{POLICY_CSV_HEADER}`"),
            });
        }
        let mut edges = vec![0.0];
        let mut gains = Vec::new();
        let mut counts = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            let num = |col: usize| -> Result<f64> {
                record[col].parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    msg: format!("`{}` is not a number", &record[col]),
                })
            };
            let index: usize = record[0].parse().map_err(|_| Error::Parse {
                row,
                msg: "bad bin index".into(),
            })?;
            if index != i {
                return Err(Error::Parse {
                    row,
                    msg: format!("bin index {index}, expected {i}"),
                });
            }
            let lo = num(1)?;
            if lo != edges[i] {
                return Err(Error::Parse {
                    row,
                    msg: "bins are not contiguous".into(),
                });
            }
            edges.push(num(2)?);
            gains.push(num(3)?);
            counts.push(record[4].parse::<u64>().map_err(|_| Error::Parse {
                row,
                msg: "bad sample count".into(),
            })?);
        }
        if gains.is_empty() {
            return Err(Error::NoSamples);
        }
        Self::from_parts(edges, gains, counts)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// Accumulates hindsight samples into bins. Bins keep their raw gains so the
/// final means are independent of insertion order and of how the samples
/// were split between builders.
#[derive(Debug, Clone, PartialEq)]
pub struct TableBuilder {
    edges: Vec<f64>,
    bins: Vec<Vec<f64>>,
}

impl TableBuilder {
    pub fn new(energy_mwh: f64, n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::Config("n_bins must be >= 1".into()));
        }
        if !(energy_mwh > 0.0 && energy_mwh.is_finite()) {
            return Err(Error::Config("energy must be > 0".into()));
        }
        Ok(Self {
            edges: uniform_edges(energy_mwh, n_bins),
            bins: vec![Vec::new(); n_bins],
        })
    }

    pub fn add(&mut self, sample: &TrainSample) -> Result<()> {
        let energy = self.edges[self.edges.len() - 1];
        if !(0.0..=energy).contains(&sample.e0_mwh) || !sample.k_e.is_finite() {
            return Err(Error::Config(format!(
                "sample at e0 = {} MWh with gain {} does not fit [0, {energy}]",
                sample.e0_mwh, sample.k_e
            )));
        }
        self.bins[bin_of(&self.edges, sample.e0_mwh)].push(sample.k_e);
        Ok(())
    }

    pub fn merge(&mut self, other: TableBuilder) -> Result<()> {
        if other.edges != self.edges {
            return Err(Error::Config(
                "cannot merge builders with different bins".into(),
            ));
        }
        for (mine, theirs) in self.bins.iter_mut().zip(other.bins) {
            mine.extend(theirs);
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    /// Mean gain per bin; empty bins copy the nearest non-empty bin, the
    /// lower-SoC one on ties.
    pub fn finish(self) -> Result<SocPolicyTable> {
        let n = self.bins.len();
        let counts: Vec<u64> = self.bins.iter().map(|b| b.len() as u64).collect();
        let means: Vec<Option<f64>> = self
            .bins
            .into_iter()
            .map(|mut b| {
                if b.is_empty() {
                    return None;
                }
                b.sort_by(f64::total_cmp);
                Some(b.iter().sum::<f64>() / b.len() as f64)
            })
            .collect();
        if means.iter().all(Option::is_none) {
            return Err(Error::NoSamples);
        }
        let gains = (0..n)
            .map(|i| {
                if let Some(g) = means[i] {
                    return g;
                }
                (1..n)
                    .find_map(|d| {
                        let lower = i.checked_sub(d).and_then(|j| means[j]);
                        let upper = means.get(i + d).copied().flatten();
                        lower.or(upper)
                    })
                    .expect("at least one bin is populated")
            })
            .collect();
        SocPolicyTable::from_parts(self.edges, gains, counts)
    }
}

/// Per-bin mean of the recorded gains over `n_bins` equal SoC bins.
pub fn build_table(
    samples: &[TrainSample],
    energy_mwh: f64,
    n_bins: usize,
) -> Result<SocPolicyTable> {
    let mut builder = TableBuilder::new(energy_mwh, n_bins)?;
    for s in samples {
        builder.add(s)?;
    }
    builder.finish()
}

/// Looks up the gain at `soc_mwh`; errors outside `[0, E]`.
pub fn eval_policy(table: &SocPolicyTable, soc_mwh: f64) -> Result<f64> {
    table.eval(soc_mwh)
}

//! Prescribed bulk-liquid concentrations S*_j(t) and Psi*_i(t).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative scalar function of time: either constant or piecewise
/// linear through samples, held constant outside the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSeries {
    Constant(f64),
    Samples { times: Vec<f64>, values: Vec<f64> },
}

impl TimeSeries {
    pub fn validate(&self, label: &str) -> Result<()> {
        match self {
            TimeSeries::Constant(v) => {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::Config(format!("{label}: value {v} must be finite and >= 0")));
                }
            }
            TimeSeries::Samples { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Config(format!(
                        "{label}: need matching, non-empty times/values (got {} and {})",
                        times.len(),
                        values.len()
                    )));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config(format!(
                        "{label}: sample times must be strictly increasing"
                    )));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Config(format!("{label}: sample values must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeSeries::Constant(v) => *v,
            TimeSeries::Samples { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[last] {
                    return values[last];
                }
                // first index with times[i] > t; 1 <= i <= last
                let i = times.partition_point(|&x| x <= t);
                let (t0, t1) = (times[i - 1], times[i]);
                let w = (t - t0) / (t1 - t0);
                values[i - 1] + w * (values[i] - values[i - 1])
            }
        }
    }

    /// Supremum over all t.
    pub fn max(&self) -> f64 {
        match self {
            TimeSeries::Constant(v) => *v,
            TimeSeries::Samples { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            TimeSeries::Constant(v) => *v,
            TimeSeries::Samples { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

impl From<f64> for TimeSeries {
    fn from(v: f64) -> Self {
        TimeSeries::Constant(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkEnvironment {
    #[serde(rename = "S_star", alias = "s_star")]
    pub s_star: Vec<TimeSeries>,
    #[serde(rename = "Psi_star", alias = "psi_star")]
    pub psi_star: Vec<TimeSeries>,
}

impl BulkEnvironment {
    pub fn constant(s_star: &[f64], psi_star: &[f64]) -> Self {
        Self {
            s_star: s_star.iter().map(|&v| v.into()).collect(),
            psi_star: psi_star.iter().map(|&v| v.into()).collect(),
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.s_star.len() != m {
            return Err(Error::Config(format!(
                "bulk.s_star has {} entries, expected m = {m}",
                self.s_star.len()
            )));
        }
        if self.psi_star.len() != n {
            return Err(Error::Config(format!(
                "bulk.psi_star has {} entries, expected n = {n}",
                self.psi_star.len()
            )));
        }
        for (j, s) in self.s_star.iter().enumerate() {
            s.validate(&format!("bulk.s_star[{j}]"))?;
        }
        for (i, p) in self.psi_star.iter().enumerate() {
            p.validate(&format!("bulk.psi_star[{i}]"))?;
        }
        Ok(())
    }

    pub fn s_star_at(&self, t: f64) -> Vec<f64> {
        self.s_star.iter().map(|f| f.eval(t)).collect()
    }

    pub fn psi_star_at(&self, t: f64) -> Vec<f64> {
        self.psi_star.iter().map(|f| f.eval(t)).collect()
    }

    pub fn s_star_max(&self) -> Vec<f64> {
        self.s_star.iter().map(TimeSeries::max).collect()
    }

    pub fn psi_star_max(&self) -> Vec<f64> {
        self.psi_star.iter().map(TimeSeries::max).collect()
    }
}

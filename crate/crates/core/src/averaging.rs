//! Per-chunk weight averaging.
//!
//! The average is never fed back into training; it only replaces the final
//! weights at evaluation time.
//!
//! * mean: `θ_k = (1/k) Σ_{t≤k} θ_t`, maintained incrementally,
//! * EMA:  `θ_k = α θ_{k-1} + (1-α) θ_k`, seeded with the first checkpoint.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AveragerMode {
    Mean,
    Ema { alpha: f64 },
}

impl AveragerMode {
    pub fn ema(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("EMA alpha {alpha} outside [0, 1]")));
        }
        Ok(AveragerMode::Ema { alpha })
    }
}

impl fmt::Display for AveragerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AveragerMode::Mean => write!(f, "mean"),
            AveragerMode::Ema { alpha } => write!(f, "ema:{alpha}"),
        }
    }
}

impl FromStr for AveragerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AveragerMode::Mean),
            _ => match s.strip_prefix("ema:") {
                Some(a) => {
                    AveragerMode::ema(a.parse().map_err(|_| Error::invalid(format!("bad EMA alpha in '{s}'")))?)
                }
                None => Err(Error::invalid(format!("unknown averager '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragerState {
    mode: AveragerMode,
    average: Option<ParamVector>,
    count: usize,
}

impl AveragerState {
    pub fn new(mode: AveragerMode) -> Self {
        Self { mode, average: None, count: 0 }
    }

    pub fn mode(&self) -> AveragerMode {
        self.mode
    }

    pub fn chunk_count(&self) -> usize {
        self.count
    }

    /// Folds in the checkpoint taken at the end of the next chunk.
    pub fn update(&mut self, theta: &ParamVector) -> Result<()> {
        let Some(avg) = self.average.as_mut() else {
            self.average = Some(theta.clone());
            self.count = 1;
            return Ok(());
        };
        avg.ensure_same_layout(theta)?;
        self.count += 1;
        let (keep, take) = match self.mode {
            AveragerMode::Mean => {
                let k = self.count as f64;
                ((k - 1.0) / k, 1.0 / k)
            }
            AveragerMode::Ema { alpha } => (alpha, 1.0 - alpha),
        };
        for (a, &t) in avg.values_mut().iter_mut().zip(theta.values()) {
            *a = keep * *a + take * t;
        }
        Ok(())
    }

    pub fn get(&self) -> Result<&ParamVector> {
        self.average.as_ref().ok_or(Error::NoUpdates)
    }
}

pub fn avg_update(mut state: AveragerState, theta: &ParamVector) -> Result<AveragerState> {
    state.update(theta)?;
    Ok(state)
}

pub fn avg_get(state: &AveragerState) -> Result<ParamVector> {
    state.get().cloned()
}

/// Running averages after each checkpoint: entry `k` averages `θ_1..θ_{k+1}`.
pub fn running_averages(mode: AveragerMode, checkpoints: &[ParamVector]) -> Result<Vec<ParamVector>> {
    let mut state = AveragerState::new(mode);
    checkpoints
        .iter()
        .map(|c| {
            state.update(c)?;
            avg_get(&state)
        })
        .collect()
}

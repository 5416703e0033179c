//! Rotary position embedding and context-extension remappings.
//!
//! Base frequencies are `theta_i = base^(-2i/d)` for `i in 0..d/2`. Each
//! scaling method either remaps positions or remaps the frequencies:
//!
//! | method     | positions | frequencies                                            |
//! |------------|-----------|--------------------------------------------------------|
//! | `None`     | `m`       | `theta_i`                                              |
//! | `Linear`   | `m / s`   | `theta_i`                                              |
//! | `Dynamic`  | `m`       | base replaced by `base * s_eff^(d/(d-2))`, `s_eff = max(1, len/train_len)` |
//! | `Yarn`     | `m`       | `(1 - g_i) * theta_i / s + g_i * theta_i`, ramp `g_i` over `train_len / wavelength_i` in `[alpha, beta]` |
//! | `LongRope` | `m`       | `theta_i / factor_i`                                   |
//!
//! YaRN additionally reports an attention temperature `0.1 * ln(s) + 1`
//! which callers apply to the logits; the rotation itself stays an isometry.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RopeError {
    #[error("head dimension must be even and positive, got {0}")]
    OddDimension(usize),
    #[error("dynamic scaling needs a head dimension of at least 4, got {0}")]
    DimensionTooSmall(usize),
    #[error("scale must be >= 1, got {0}")]
    ScaleBelowOne(f64),
    #[error("longrope requires {expected} per-dimension factors, got {got}")]
    FactorCount { expected: usize, got: usize },
    #[error("longrope factor {index} must be finite and positive, got {value}")]
    BadFactor { index: usize, value: f64 },
    #[error("yarn ramp cutoffs must satisfy alpha < beta, got alpha={alpha} beta={beta}")]
    BadRamp { alpha: f64, beta: f64 },
    #[error("training length must be positive")]
    ZeroTrainLen,
    #[error("vector has {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown scaling method `{0}`")]
    UnknownMethod(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMethod {
    None,
    Linear,
    Dynamic,
    Yarn,
    LongRope,
}

impl ScalingMethod {
    pub const ALL: [ScalingMethod; 5] = [
        ScalingMethod::None,
        ScalingMethod::Linear,
        ScalingMethod::Dynamic,
        ScalingMethod::Yarn,
        ScalingMethod::LongRope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScalingMethod::None => "none",
            ScalingMethod::Linear => "linear",
            ScalingMethod::Dynamic => "dynamic",
            ScalingMethod::Yarn => "yarn",
            ScalingMethod::LongRope => "longrope",
        }
    }
}

impl fmt::Display for ScalingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScalingMethod {
    type Err = RopeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "linear" => Ok(Self::Linear),
            "dynamic" => Ok(Self::Dynamic),
            "yarn" => Ok(Self::Yarn),
            "longrope" => Ok(Self::LongRope),
            other => Err(RopeError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub base: f64,
    pub train_len: usize,
    pub method: ScalingMethod,
    pub scale: f64,
    pub yarn_alpha: f64,
    pub yarn_beta: f64,
    pub per_dim_factors: Option<Vec<f64>>,
}

impl RopeConfig {
    /// Unscaled RoPE with base 10000 and YaRN cutoffs (1, 32).
    pub fn new(head_dim: usize, train_len: usize) -> Self {
        Self {
            head_dim,
            base: 10_000.0,
            train_len,
            method: ScalingMethod::None,
            scale: 1.0,
            yarn_alpha: 1.0,
            yarn_beta: 32.0,
            per_dim_factors: None,
        }
    }

    pub fn with_method(mut self, method: ScalingMethod, scale: f64) -> Self {
        self.method = method;
        self.scale = scale;
        self
    }

    pub fn with_factors(mut self, factors: Vec<f64>) -> Self {
        self.per_dim_factors = Some(factors);
        self
    }

    pub fn validate(&self) -> Result<(), RopeError> {
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return Err(RopeError::OddDimension(self.head_dim));
        }
        if !(self.scale >= 1.0) {
            return Err(RopeError::ScaleBelowOne(self.scale));
        }
        if self.train_len == 0 {
            return Err(RopeError::ZeroTrainLen);
        }
        match self.method {
            ScalingMethod::Dynamic if self.head_dim < 4 => {
                return Err(RopeError::DimensionTooSmall(self.head_dim))
            }
            ScalingMethod::Yarn if !(self.yarn_alpha < self.yarn_beta) => {
                return Err(RopeError::BadRamp {
                    alpha: self.yarn_alpha,
                    beta: self.yarn_beta,
                })
            }
            ScalingMethod::LongRope => {
                let expected = self.head_dim / 2;
                let factors = self
                    .per_dim_factors
                    .as_ref()
                    .ok_or(RopeError::FactorCount { expected, got: 0 })?;
                if factors.len() != expected {
                    return Err(RopeError::FactorCount {
                        expected,
                        got: factors.len(),
                    });
                }
                if let Some((index, &value)) = factors
                    .iter()
                    .enumerate()
                    .find(|(_, f)| !(f.is_finite() && **f > 0.0))
                {
                    return Err(RopeError::BadFactor { index, value });
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn base_frequencies(&self, base: f64) -> Vec<f64> {
        let d = self.head_dim as f64;
        (0..self.head_dim / 2)
            .map(|i| base.powf(-2.0 * i as f64 / d))
            .collect()
    }

    /// Frequencies for the default sequence length (`train_len`).
    pub fn frequencies(&self) -> Result<RopeFrequencies, RopeError> {
        self.frequencies_for_len(self.train_len)
    }

    /// Frequencies when the model is run on a sequence of `seq_len` tokens.
    /// Only dynamic scaling depends on the length.
    pub fn frequencies_for_len(&self, seq_len: usize) -> Result<RopeFrequencies, RopeError> {
        self.validate()?;
        let s = self.scale;
        let mut position_divisor = 1.0;
        let mut temperature = 1.0;
        let theta = match self.method {
            ScalingMethod::None => self.base_frequencies(self.base),
            ScalingMethod::Linear => {
                position_divisor = s;
                self.base_frequencies(self.base)
            }
            ScalingMethod::Dynamic => {
                let s_eff = (seq_len as f64 / self.train_len as f64).max(1.0);
                let d = self.head_dim as f64;
                let base = self.base * s_eff.powf(d / (d - 2.0));
                self.base_frequencies(base)
            }
            ScalingMethod::Yarn if s == 1.0 => self.base_frequencies(self.base),
            ScalingMethod::Yarn => {
                temperature = 0.1 * s.ln() + 1.0;
                self.base_frequencies(self.base)
                    .into_iter()
                    .map(|theta| {
                        let gamma = self.yarn_ramp(theta);
                        (1.0 - gamma) * (theta / s) + gamma * theta
                    })
                    .collect()
            }
            ScalingMethod::LongRope => {
                let factors = self.per_dim_factors.as_deref().unwrap_or_default();
                self.base_frequencies(self.base)
                    .into_iter()
                    .zip(factors)
                    .map(|(theta, f)| theta / f)
                    .collect()
            }
        };
        Ok(RopeFrequencies {
            theta,
            position_divisor,
            temperature,
        })
    }

    /// Ramp weight in `[0, 1]`: 0 for dimensions whose wavelength spans many
    /// training contexts (fully interpolated), 1 for high-frequency dimensions
    /// that rotate many times within one (left untouched).
    fn yarn_ramp(&self, theta: f64) -> f64 {
        let wavelength = 2.0 * PI / theta;
        let rotations = self.train_len as f64 / wavelength;
        ((rotations - self.yarn_alpha) / (self.yarn_beta - self.yarn_alpha)).clamp(0.0, 1.0)
    }

    /// Rotates `vec` for position `position`.
    pub fn apply(&self, vec: &[f64], position: f64) -> Result<Vec<f64>, RopeError> {
        let freqs = self.frequencies()?;
        freqs.rotate(vec, position)
    }
}

/// Resolved frequencies for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeFrequencies {
    pub theta: Vec<f64>,
    /// Raw positions are divided by this before rotation (`s` for linear).
    pub position_divisor: f64,
    /// Attention temperature (logit multiplier); 1 except for YaRN.
    pub temperature: f64,
}

impl RopeFrequencies {
    pub fn head_dim(&self) -> usize {
        self.theta.len() * 2
    }

    pub fn effective_position(&self, position: f64) -> f64 {
        position / self.position_divisor
    }

    /// Rotates each adjacent pair `(2i, 2i+1)` by `m' * theta_i`.
    pub fn rotate(&self, vec: &[f64], position: f64) -> Result<Vec<f64>, RopeError> {
        if vec.len() != self.head_dim() {
            return Err(RopeError::DimensionMismatch {
                expected: self.head_dim(),
                got: vec.len(),
            });
        }
        let m = self.effective_position(position);
        let mut out = vec.to_vec();
        for (i, theta) in self.theta.iter().enumerate() {
            let (sin, cos) = (m * theta).sin_cos();
            let (x, y) = (vec[2 * i], vec[2 * i + 1]);
            out[2 * i] = x * cos - y * sin;
            out[2 * i + 1] = x * sin + y * cos;
        }
        Ok(out)
    }
}

/// How far a configuration can address positions compared to a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContextBudget {
    pub tokens: usize,
    pub method: ScalingMethod,
    pub scale: f64,
    pub train_len: usize,
    /// Largest token count whose remapped positions stay inside the trained
    /// range. `None` means the method adapts to any length.
    pub reach: Option<f64>,
    pub feasible: bool,
}

pub fn simulate_context_budget(
    tokens: usize,
    method: ScalingMethod,
    scale: f64,
    train_len: usize,
) -> ContextBudget {
    let reach = match method {
        ScalingMethod::None => Some(train_len as f64),
        ScalingMethod::Linear | ScalingMethod::Yarn | ScalingMethod::LongRope => {
            Some(scale * train_len as f64)
        }
        // base grows with the observed length
        ScalingMethod::Dynamic => None,
    };
    let feasible = reach.map_or(true, |r| tokens as f64 <= r);
    ContextBudget {
        tokens,
        method,
        scale,
        train_len,
        reach,
        feasible,
    }
}

//! Memory decay and the two sensed expectations.

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Which points of the past a memory horizon of `tau` steps covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryWindow {
    /// `tau + 1` points `k - tau ..= k`, ages `1 ..= tau + 1`.
    #[default]
    IncludeCurrent,
    /// `tau` points `k - tau + 1 ..= k`, ages `1 ..= tau`.
    HorizonOnly,
}

/// Weight profile over ages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryProfile {
    /// `log(age^-decay + 1)`, a simplified base-level activation.
    LogPower { decay: f64 },
    /// Every remembered point weighs 1.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryKernel {
    pub profile: MemoryProfile,
    /// Memory horizon in sampling steps.
    pub horizon: usize,
    #[serde(default)]
    pub window: MemoryWindow,
}

impl MemoryKernel {
    pub fn log_decay(decay: f64, horizon: usize) -> Result<Self, DynamicsError> {
        let kernel = Self {
            profile: MemoryProfile::LogPower { decay },
            horizon,
            window: MemoryWindow::IncludeCurrent,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn uniform(horizon: usize) -> Result<Self, DynamicsError> {
        let kernel = Self {
            profile: MemoryProfile::Uniform,
            horizon,
            window: MemoryWindow::IncludeCurrent,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn with_window(mut self, window: MemoryWindow) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.horizon == 0 {
            return Err(DynamicsError::InvalidParameter(
                "memory horizon must be at least 1".into(),
            ));
        }
        if let MemoryProfile::LogPower { decay } = self.profile {
            if !(decay > 0.0) || !decay.is_finite() {
                return Err(DynamicsError::InvalidParameter(format!(
                    "memory decay must be positive and finite, got {decay}"
                )));
            }
        }
        Ok(())
    }

    /// Number of remembered points, including the current one.
    pub fn span(&self) -> usize {
        match self.window {
            MemoryWindow::IncludeCurrent => self.horizon + 1,
            MemoryWindow::HorizonOnly => self.horizon,
        }
    }

    /// Weight of a point `age` steps old (the current point has age 1).
    pub fn weight(&self, age: usize) -> Result<f64, DynamicsError> {
        if age == 0 || age > self.span() {
            return Err(DynamicsError::AgeOutOfHorizon {
                age,
                max: self.span(),
            });
        }
        Ok(self.weight_unchecked(age))
    }

    fn weight_unchecked(&self, age: usize) -> f64 {
        match self.profile {
            MemoryProfile::LogPower { decay } => (age as f64).powf(-decay).ln_1p(),
            MemoryProfile::Uniform => 1.0,
        }
    }
}

/// `log(age^-d + 1)` for the kernel's profile, checked against its horizon.
pub fn memory_weight(kernel: &MemoryKernel, age: usize) -> Result<f64, DynamicsError> {
    kernel.weight(age)
}

/// Memory-weighted mean of one individual's own opinions.
///
/// `history` runs oldest to newest; only the last `kernel.span()` entries are
/// used, so a shorter history during start-up simply truncates the window.
pub fn sensed_self_expectation(
    history: &[f64],
    kernel: &MemoryKernel,
) -> Result<f64, DynamicsError> {
    if history.is_empty() {
        return Err(DynamicsError::EmptyHistory);
    }
    let used = history.len().min(kernel.span());
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (back, &x) in history.iter().rev().take(used).enumerate() {
        let m = kernel.weight_unchecked(back + 1);
        num += m * x;
        den += m;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    // rounding must not push the mean outside the averaged values
    Ok((num / den).clamp(lo, hi))
}

/// Influence weights and opinions of the in-neighbours at one past step.
#[derive(Debug, Clone, Copy)]
pub struct SurroundSample<'a> {
    pub weights: &'a [f64],
    pub opinions: &'a [f64],
}

/// Memory- and influence-weighted mean of neighbour opinions.
///
/// `samples` runs oldest to newest, truncated to the kernel span like
/// [`sensed_self_expectation`]. Returns `None` when every weight is zero
/// (no neighbours, or all of them ignored).
pub fn sensed_surround_expectation(
    samples: &[SurroundSample<'_>],
    kernel: &MemoryKernel,
) -> Result<Option<f64>, DynamicsError> {
    if samples.is_empty() {
        return Err(DynamicsError::EmptyHistory);
    }
    let used = samples.len().min(kernel.span());
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (back, s) in samples.iter().rev().take(used).enumerate() {
        if s.weights.len() != s.opinions.len() {
            return Err(DynamicsError::DimensionMismatch {
                what: "surround sample",
                expected: s.weights.len(),
                got: s.opinions.len(),
            });
        }
        let m = kernel.weight_unchecked(back + 1);
        for (&c, &x) in s.weights.iter().zip(s.opinions) {
            if m * c > 0.0 {
                num += m * c * x;
                den += m * c;
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    Ok((den > 0.0).then(|| (num / den).clamp(lo, hi)))
}

//! Confirmation and novelty influence kernels.
//!
//! Both kernels share the composite shape `g(f(reference) - f(other))`: a
//! monotone opinion transform `f` followed by a distance profile `g`. A
//! confirmation kernel needs `g` strictly decreasing in the transformed
//! distance; a novelty kernel needs it strictly increasing. The tanh-power
//! family (`f = tanh`, `g(z) = |z|^{∓α}`) satisfies the transform conditions
//! checked in [`verify`].
//!
//! Two classical kernels are included as baselines: the bounded-confidence
//! 0/1 weight ([`HkKernel`]) and the squared-distance continuous weight
//! ([`ContinuousKernel`]). Both are symmetric in the opinion distance.

pub mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use verify::{
    verify_confirmation_behaviors, verify_confirmation_conditions, verify_novelty_behaviors,
    verify_novelty_conditions, Behavior, BehaviorOutcome, BehaviorReport, BiasKind, Condition,
    ConditionOutcome, ConditionReport, Counterexample, SamplerConfig,
};

/// Default floor applied to transformed distances before a negative power.
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum BiasError {
    #[error("epsilon floor must be positive, got {0}")]
    NonPositiveFloor(f64),
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("lower confidence bound {lo} exceeds upper bound {hi}")]
    InvertedBand { lo: f64, hi: f64 },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("could not draw a triple satisfying `{behavior}` after {retries} attempts")]
    SamplerExhausted { behavior: String, retries: usize },
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
}

/// Anything that assigns an influence weight to `other` as seen from
/// `reference`.
pub trait PairKernel {
    fn weight(&self, reference: f64, other: f64) -> f64;
}

impl<F> PairKernel for F
where
    F: Fn(f64, f64) -> f64,
{
    fn weight(&self, reference: f64, other: f64) -> f64 {
        self(reference, other)
    }
}

/// Opinion transform `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Tanh,
    Identity,
    Cube,
    Constant { value: f64 },
}

impl Transform {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Transform::Tanh => x.tanh(),
            Transform::Identity => x,
            Transform::Cube => x * x * x,
            Transform::Constant { value } => value,
        }
    }
}

/// Distance profile `g(z) = |z|^exponent`.
///
/// A negative exponent gives a confirmation profile; `|z|` is floored at the
/// kernel's epsilon before evaluation so coincident opinions stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub exponent: f64,
}

impl PowerProfile {
    pub fn eval(&self, z: f64, floor: f64) -> f64 {
        let d = z.abs();
        if self.exponent < 0.0 {
            d.max(floor).powf(self.exponent)
        } else if self.exponent == 0.0 {
            1.0
        } else {
            d.powf(self.exponent)
        }
    }
}

/// A composite kernel `g(f(reference) - f(other))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeKernel {
    pub transform: Transform,
    pub profile: PowerProfile,
    pub epsilon_floor: f64,
}

impl CompositeKernel {
    pub fn new(transform: Transform, exponent: f64, epsilon_floor: f64) -> Result<Self, BiasError> {
        if !(epsilon_floor > 0.0) {
            return Err(BiasError::NonPositiveFloor(epsilon_floor));
        }
        Ok(Self {
            transform,
            profile: PowerProfile { exponent },
            epsilon_floor,
        })
    }

    pub fn transformed_distance(&self, reference: f64, other: f64) -> f64 {
        self.transform.apply(reference) - self.transform.apply(other)
    }
}

impl PairKernel for CompositeKernel {
    fn weight(&self, reference: f64, other: f64) -> f64 {
        self.profile.eval(
            self.transformed_distance(reference, other),
            self.epsilon_floor,
        )
    }
}

/// Confirmation + novelty kernel pair used by one individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasModel {
    pub confirmation: CompositeKernel,
    pub novelty: CompositeKernel,
}

impl BiasModel {
    /// `|tanh a - tanh b|^{-α}` for confirmation and `|tanh a - tanh b|^{+α}`
    /// for novelty, sharing one exponent.
    pub fn tanh_power(alpha: f64, epsilon_floor: f64) -> Result<Self, BiasError> {
        if !(alpha > 0.0) {
            return Err(BiasError::NonPositiveExponent(alpha));
        }
        Ok(Self {
            confirmation: CompositeKernel::new(Transform::Tanh, -alpha, epsilon_floor)?,
            novelty: CompositeKernel::new(Transform::Tanh, alpha, epsilon_floor)?,
        })
    }

    /// Both kernels return 1 everywhere: influence rows become uniform over
    /// the in-neighbours and the dynamics are linear in opinions.
    pub fn uniform() -> Self {
        let flat = CompositeKernel {
            transform: Transform::Constant { value: 0.0 },
            profile: PowerProfile { exponent: 0.0 },
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        };
        Self {
            confirmation: flat,
            novelty: flat,
        }
    }

    pub fn confirmation_weight(&self, x_self: f64, x_other: f64) -> f64 {
        self.confirmation.weight(x_self, x_other)
    }

    pub fn novelty_weight(&self, x_surround: f64, x_other: f64) -> f64 {
        self.novelty.weight(x_surround, x_other)
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.confirmation.epsilon_floor
    }
}

/// Bounded-confidence 0/1 weight: 1 when `eps_lo <= |a - b| <= eps_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkKernel {
    pub eps_lo: f64,
    pub eps_hi: f64,
}

/// Slack on the band edges so decimal inputs such as `0.6 - 0.2` land inside
/// a band edge of `0.4`.
const BAND_SLACK: f64 = 1e-12;

impl HkKernel {
    pub fn new(eps_lo: f64, eps_hi: f64) -> Result<Self, BiasError> {
        if eps_lo > eps_hi {
            return Err(BiasError::InvertedBand {
                lo: eps_lo,
                hi: eps_hi,
            });
        }
        Ok(Self { eps_lo, eps_hi })
    }

    fn in_band(&self, d: f64) -> bool {
        d >= self.eps_lo - BAND_SLACK && d <= self.eps_hi + BAND_SLACK
    }
}

impl PairKernel for HkKernel {
    fn weight(&self, reference: f64, other: f64) -> f64 {
        if self.in_band((reference - other).abs()) {
            1.0
        } else {
            0.0
        }
    }
}

/// Indices of `others` whose distance from `x_i` lies in `[eps_lo, eps_hi]`.
pub fn hk_neighbor_set(
    eps_lo: f64,
    eps_hi: f64,
    x_i: f64,
    others: &[f64],
) -> Result<Vec<usize>, BiasError> {
    let kernel = HkKernel::new(eps_lo, eps_hi)?;
    Ok(others
        .iter()
        .enumerate()
        .filter(|(_, &x)| kernel.in_band((x_i - x).abs()))
        .map(|(j, _)| j)
        .collect())
}

/// `φ` for the continuous squared-distance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi {
    /// `φ(z) = exp(-rate * z)`
    Exponential { rate: f64 },
    /// `φ(z) = (1 + z)^(-exponent)`
    Rational { exponent: f64 },
}

impl Phi {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Phi::Exponential { rate } => (-rate * z).exp(),
            Phi::Rational { exponent } => (1.0 + z).powf(-exponent),
        }
    }
}

/// `c(x_i, x_j) = φ(|x_i - x_j|²)`.
pub fn continuous_influence(phi: Phi, x_i: f64, x_j: f64) -> f64 {
    let d = x_i - x_j;
    phi.eval(d * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousKernel {
    pub phi: Phi,
}

impl PairKernel for ContinuousKernel {
    fn weight(&self, reference: f64, other: f64) -> f64 {
        continuous_influence(self.phi, reference, other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantKernel(pub f64);

impl PairKernel for ConstantKernel {
    fn weight(&self, _reference: f64, _other: f64) -> f64 {
        self.0
    }
}

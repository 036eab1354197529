//! Basis costs over a stacked window and their analytic partials.
//!
//! Steering bases sum over every stacked opinion `x_j(t)`, `t = k+1 ..= k+l`.
//! Stubbornness bases sum squared action changes inside the window,
//! `Σ_{t=k+1}^{k+l-1} (u_q(t) - u_q(t-1))²`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{IrlError, StackedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BasisId {
    /// `Σ (1 - x)²`
    SteerPositive,
    /// `Σ (1 + x)²`
    SteerNegative,
    /// `Σ x²`
    SteerNeutral,
    /// Action changes of one fixed target (0-based target index).
    Stubbornness(usize),
    /// Action changes of whichever target owns the cost function.
    OwnStubbornness,
}

impl BasisId {
    /// Steering toward +1, -1 and 0, then each target's own stubbornness.
    pub const DEFAULT_LIBRARY: [BasisId; 4] = [
        BasisId::SteerPositive,
        BasisId::SteerNegative,
        BasisId::SteerNeutral,
        BasisId::OwnStubbornness,
    ];

    fn check(&self, n_targets: usize) -> Result<(), IrlError> {
        match *self {
            BasisId::Stubbornness(q) if q >= n_targets => Err(IrlError::InvalidBasis(format!(
                "stubbornness basis names target {} but only {n_targets} exist",
                q + 1
            ))),
            _ => Ok(()),
        }
    }

    /// Target whose actions a stubbornness basis reads, for cost owner
    /// `owner`.
    fn action_target(&self, owner: usize) -> Option<usize> {
        match *self {
            BasisId::Stubbornness(q) => Some(q),
            BasisId::OwnStubbornness => Some(owner),
            _ => None,
        }
    }
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisId::SteerPositive => f.write_str("steer_positive"),
            BasisId::SteerNegative => f.write_str("steer_negative"),
            BasisId::SteerNeutral => f.write_str("steer_neutral"),
            BasisId::Stubbornness(q) => write!(f, "stubbornness_u{}", q + 1),
            BasisId::OwnStubbornness => f.write_str("own_stubbornness"),
        }
    }
}

impl FromStr for BasisId {
    type Err = IrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "steer_positive" => Ok(BasisId::SteerPositive),
            "steer_negative" => Ok(BasisId::SteerNegative),
            "steer_neutral" => Ok(BasisId::SteerNeutral),
            "own_stubbornness" => Ok(BasisId::OwnStubbornness),
            other => other
                .strip_prefix("stubbornness_u")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| BasisId::Stubbornness(n - 1))
                .ok_or_else(|| IrlError::InvalidBasis(format!("unknown basis `{other}`"))),
        }
    }
}

impl From<BasisId> for String {
    fn from(b: BasisId) -> Self {
        b.to_string()
    }
}

impl TryFrom<String> for BasisId {
    type Error = IrlError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Value of basis `basis` for the cost function owned by target `owner`.
pub fn basis_cost(basis: BasisId, sample: &StackedSample, owner: usize) -> Result<f64, IrlError> {
    basis.check(sample.n_targets)?;
    let x = &sample.x;
    Ok(match basis {
        BasisId::SteerPositive => x.iter().map(|v| (1.0 - v).powi(2)).sum(),
        BasisId::SteerNegative => x.iter().map(|v| (1.0 + v).powi(2)).sum(),
        BasisId::SteerNeutral => x.iter().map(|v| v * v).sum(),
        _ => {
            let q = basis.action_target(owner).expect("stubbornness basis");
            let t = sample.n_targets;
            (1..sample.window())
                .map(|r| (sample.u[r * t + q] - sample.u[(r - 1) * t + q]).powi(2))
                .sum()
        }
    })
}

/// First and second partials of one basis in the stacked `x` and `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPartials {
    pub dx: DVector<f64>,
    pub du: DVector<f64>,
    pub dxx: DMatrix<f64>,
    pub duu: DMatrix<f64>,
    /// `∂²c / ∂x ∂u`, rows indexed by `x`.
    pub dxu: DMatrix<f64>,
}

/// Analytic partials of basis `basis` for owner `owner`.
///
/// Steering bases read only `x` and stubbornness bases only `u`, so the
/// mixed block is always zero.
pub fn basis_partials(
    basis: BasisId,
    sample: &StackedSample,
    owner: usize,
) -> Result<BasisPartials, IrlError> {
    basis.check(sample.n_targets)?;
    let nx = sample.x.len();
    let nu = sample.u.len();
    let mut p = BasisPartials {
        dx: DVector::zeros(nx),
        du: DVector::zeros(nu),
        dxx: DMatrix::zeros(nx, nx),
        duu: DMatrix::zeros(nu, nu),
        dxu: DMatrix::zeros(nx, nu),
    };
    match basis {
        BasisId::SteerPositive | BasisId::SteerNegative | BasisId::SteerNeutral => {
            let shift = match basis {
                BasisId::SteerPositive => -1.0,
                BasisId::SteerNegative => 1.0,
                _ => 0.0,
            };
            for (m, v) in sample.x.iter().enumerate() {
                p.dx[m] = 2.0 * (v + shift);
                p.dxx[(m, m)] = 2.0;
            }
        }
        _ => {
            let q = basis.action_target(owner).expect("stubbornness basis");
            let t = sample.n_targets;
            for r in 1..sample.window() {
                let (a, b) = (r * t + q, (r - 1) * t + q);
                let diff = sample.u[a] - sample.u[b];
                p.du[a] += 2.0 * diff;
                p.du[b] -= 2.0 * diff;
                p.duu[(a, a)] += 2.0;
                p.duu[(b, b)] += 2.0;
                p.duu[(a, b)] -= 2.0;
                p.duu[(b, a)] -= 2.0;
            }
        }
    }
    Ok(p)
}

//! Maximum-entropy cost learning through a memorized diffusion model.
//!
//! A window of `l` steps is stacked time-major into
//! `u = [u(k); …; u(k+l-1)]` and `x = [x(k+1); …; x(k+l)]`. Each target `i`
//! has a cost `r_i = Σ_q θ_iq c_q(x, u)` with `Σ_q |θ_iq| = 1`, and the joint
//! cost is `r = Σ_i a_i r_i` with `a` on the simplex. Actions are taken to be
//! probable in proportion to `e^r`.
//!
//! Differentiating `r` through the dynamics, with the Jacobian `∂x/∂u`
//! held constant, gives
//!
//! ```text
//! h = Σ_i a_i (∂r_i/∂u + Jᵀ ∂r_i/∂x)
//! H = Σ_i a_i (∂²r_i/∂u² + Jᵀ ∂²r_i/∂x² J + Jᵀ ∂²r_i/∂x∂u + ∂²r_i/∂u∂x J)
//! ```
//!
//! and, on the bounded action box `[-1, 1]^{l|T|}`, the log-likelihood
//!
//! ```text
//! L = -½ uᵀHu + uᵀh + Σ_m log(ϖ_m / (e^{ϖ_m} - e^{-ϖ_m})),   ϖ = h - Hu.
//! ```

mod basis;
mod learn;
mod synthetic;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{simulate, DiffusionParams, DynamicsError, History, Trajectory};

pub use basis::{basis_cost, basis_partials, BasisId, BasisPartials};
pub use learn::{learn, render_formula, LearnConfig, LearnReport, RestartSummary};
pub use synthetic::{synthetic_instance, SyntheticConfig, SyntheticInstance};

/// Central-difference step for the Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-5;
/// Below this `|ϖ|` the likelihood term uses its series expansion.
pub const SMALL_VARPI: f64 = 1e-6;
/// Tolerance on `Σ_q |θ_iq| = 1`.
pub const L1_TOL: f64 = 1e-6;
/// Tolerance on `Σ_i a_i = 1`.
pub const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum IrlError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("{0}")]
    InvalidBasis(String),
    #[error("cost weights violate a constraint: {0}")]
    Constraint(String),
    #[error("window length {window} is too short: at least 2 steps are needed")]
    WindowTooShort { window: usize },
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Stacked window in time-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSample {
    pub start_time: usize,
    pub n_humans: usize,
    pub n_targets: usize,
    window: usize,
    /// `[x(k+1); …; x(k+l)]`, length `l·|H|`.
    pub x: DVector<f64>,
    /// `[u(k); …; u(k+l-1)]`, length `l·|T|`.
    pub u: DVector<f64>,
}

impl StackedSample {
    pub fn new(
        start_time: usize,
        n_humans: usize,
        n_targets: usize,
        x: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self, IrlError> {
        if n_humans == 0 || x.is_empty() {
            return Err(IrlError::EmptyTrajectory);
        }
        if x.len() % n_humans != 0 {
            return Err(IrlError::DimensionMismatch {
                what: "stacked opinions",
                expected: n_humans * (x.len() / n_humans + 1),
                got: x.len(),
            });
        }
        let window = x.len() / n_humans;
        if u.len() != window * n_targets {
            return Err(IrlError::DimensionMismatch {
                what: "stacked actions",
                expected: window * n_targets,
                got: u.len(),
            });
        }
        Ok(Self {
            start_time,
            n_humans,
            n_targets,
            window,
            x,
            u,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Action rows `u(k) ..= u(k+l-1)`.
    pub fn action_rows(&self) -> Vec<Vec<f64>> {
        unstack_rows(&self.u, self.n_targets, self.window)
    }
}

fn unstack_rows(v: &DVector<f64>, width: usize, rows: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|r| v.rows(r * width, width).iter().copied().collect())
        .collect()
}

fn stack_rows(rows: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        rows.iter().map(Vec::len).sum(),
        rows.iter().flatten().copied(),
    )
}

pub fn stack(traj: &Trajectory) -> Result<StackedSample, IrlError> {
    if traj.is_empty() {
        return Err(IrlError::EmptyTrajectory);
    }
    StackedSample::new(
        traj.start_time,
        traj.n_humans(),
        traj.n_targets(),
        stack_rows(traj.opinions()),
        stack_rows(traj.actions()),
    )
}

pub fn unstack(sample: &StackedSample) -> Result<Trajectory, IrlError> {
    Ok(Trajectory::new(
        sample.start_time,
        sample.n_humans,
        sample.n_targets,
        unstack_rows(&sample.x, sample.n_humans, sample.window),
        sample.action_rows(),
    )?)
}

/// Basis selection, per-target coefficients and importance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub basis_ids: Vec<BasisId>,
    /// One row of `p` coefficients per target.
    pub theta: Vec<Vec<f64>>,
    pub importance: Vec<f64>,
}

impl CostSpec {
    pub fn n_targets(&self) -> usize {
        self.importance.len()
    }

    /// Checks dimensions, the per-target L1 constraint and the simplex.
    pub fn validate(&self) -> Result<(), IrlError> {
        let p = self.basis_ids.len();
        if p == 0 {
            return Err(IrlError::Constraint("no basis functions".into()));
        }
        if self.theta.len() != self.importance.len() {
            return Err(IrlError::DimensionMismatch {
                what: "coefficient rows",
                expected: self.importance.len(),
                got: self.theta.len(),
            });
        }
        for (i, row) in self.theta.iter().enumerate() {
            if row.len() != p {
                return Err(IrlError::DimensionMismatch {
                    what: "coefficients per target",
                    expected: p,
                    got: row.len(),
                });
            }
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            if (l1 - 1.0).abs() > L1_TOL {
                return Err(IrlError::Constraint(format!(
                    "target {} has Σ|θ| = {l1}",
                    i + 1
                )));
            }
        }
        if self.importance.iter().any(|&a| !(a >= 0.0)) {
            return Err(IrlError::Constraint("negative importance weight".into()));
        }
        let total: f64 = self.importance.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(IrlError::Constraint(format!("importance sums to {total}")));
        }
        Ok(())
    }

    /// `a_i θ_iq`, the only combination the likelihood sees.
    pub fn effective_weights(&self) -> Vec<Vec<f64>> {
        self.theta
            .iter()
            .zip(&self.importance)
            .map(|(row, a)| row.iter().map(|t| a * t).collect())
            .collect()
    }
}

/// `r_i = Σ_q θ_iq c_q` for target `owner`.
pub fn target_cost(
    basis_ids: &[BasisId],
    theta: &[f64],
    sample: &StackedSample,
    owner: usize,
) -> Result<f64, IrlError> {
    basis_ids
        .iter()
        .zip(theta)
        .map(|(&b, t)| Ok(t * basis_cost(b, sample, owner)?))
        .sum()
}

/// `r = Σ_i a_i r_i`.
pub fn joint_cost(spec: &CostSpec, sample: &StackedSample) -> Result<f64, IrlError> {
    spec.validate()?;
    if spec.n_targets() != sample.n_targets {
        return Err(IrlError::DimensionMismatch {
            what: "targets in cost weights",
            expected: sample.n_targets,
            got: spec.n_targets(),
        });
    }
    let mut r = 0.0;
    for (i, (row, a)) in spec.theta.iter().zip(&spec.importance).enumerate() {
        r += a * target_cost(&spec.basis_ids, row, sample, i)?;
    }
    Ok(r)
}

/// `∂x/∂u` by central differences of [`simulate`] from `history`.
///
/// Each action coordinate is moved by ±[`JACOBIAN_STEP`]; at the edge of
/// `[-1, 1]` the stencil is clipped to the box and the difference is divided
/// by the clipped spread. Actions only act forward in time, so blocks
/// `∂x(k+s)/∂u(k+r)` with `r >= s` come out exactly zero.
pub fn jacobian_x_u(
    params: &DiffusionParams,
    history: &History,
    sample: &StackedSample,
) -> Result<DMatrix<f64>, IrlError> {
    if history.time() != sample.start_time {
        return Err(IrlError::DimensionMismatch {
            what: "history time",
            expected: sample.start_time,
            got: history.time(),
        });
    }
    let l = sample.window();
    let mut jac = DMatrix::zeros(sample.x.len(), sample.u.len());
    for m in 0..sample.u.len() {
        let base = sample.u[m];
        let hi = (base + JACOBIAN_STEP).min(1.0);
        let lo = (base - JACOBIAN_STEP).max(-1.0);
        let run = |v: f64| -> Result<DVector<f64>, IrlError> {
            let mut u = sample.u.clone();
            u[m] = v;
            let traj = simulate(params, history, &unstack_rows(&u, sample.n_targets, l), l)?;
            Ok(stack_rows(traj.opinions()))
        };
        let col = (run(hi)? - run(lo)?) / (hi - lo);
        jac.set_column(m, &col);
    }
    Ok(jac)
}

/// `h`, symmetrized `H`, `ϖ = h - Hu` and the Jacobian they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodParts {
    pub h: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub varpi: DVector<f64>,
    pub jac: DMatrix<f64>,
}

/// Contribution `(∂r/∂u_total, ∂²r/∂u²_total)` of one basis for one owner,
/// with the Jacobian held constant.
pub(crate) fn basis_contribution(
    basis: BasisId,
    sample: &StackedSample,
    owner: usize,
    jac: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), IrlError> {
    let p = basis_partials(basis, sample, owner)?;
    let g = &p.du + jac.transpose() * &p.dx;
    let cross = jac.transpose() * &p.dxu;
    let big = &p.duu + jac.transpose() * &p.dxx * jac + &cross + cross.transpose();
    let sym = (&big + big.transpose()) * 0.5;
    Ok((g, sym))
}

/// Assembles `h` and `H` for `spec` given the Jacobian.
pub fn gradient_and_hessian(
    spec: &CostSpec,
    sample: &StackedSample,
    jac: DMatrix<f64>,
) -> Result<LikelihoodParts, IrlError> {
    spec.validate()?;
    if jac.nrows() != sample.x.len() || jac.ncols() != sample.u.len() {
        return Err(IrlError::DimensionMismatch {
            what: "jacobian shape",
            expected: sample.x.len() * sample.u.len(),
            got: jac.nrows() * jac.ncols(),
        });
    }
    let nu = sample.u.len();
    let mut h = DVector::zeros(nu);
    let mut hessian = DMatrix::zeros(nu, nu);
    for (i, (row, a)) in spec.theta.iter().zip(&spec.importance).enumerate() {
        for (&b, &t) in spec.basis_ids.iter().zip(row) {
            let w = a * t;
            if w == 0.0 {
                continue;
            }
            let (g, big) = basis_contribution(b, sample, i, &jac)?;
            h += g * w;
            hessian += big * w;
        }
    }
    let varpi = &h - &hessian * &sample.u;
    Ok(LikelihoodParts {
        h,
        hessian,
        varpi,
        jac,
    })
}

/// `log(ϖ / (e^ϖ - e^{-ϖ}))`, i.e. minus the log of `∫_{-1}^{1} e^{ϖs} ds`.
///
/// Evaluated in log space, `log(e^{|ϖ|} - e^{-|ϖ|}) = |ϖ| + log(1 - e^{-2|ϖ|})`,
/// so it stays finite for any finite `ϖ`.
pub fn log_partition_term(varpi: f64) -> f64 {
    let a = varpi.abs();
    if a < SMALL_VARPI {
        -std::f64::consts::LN_2 - varpi * varpi / 6.0
    } else {
        a.ln() - a - (-(-2.0 * a).exp()).ln_1p()
    }
}

/// Derivative of [`log_partition_term`]: `1/ϖ - coth ϖ`.
pub fn log_partition_slope(varpi: f64) -> f64 {
    if varpi.abs() < 1e-3 {
        let v2 = varpi * varpi;
        -varpi / 3.0 + varpi * v2 / 45.0
    } else {
        1.0 / varpi - 1.0 / varpi.tanh()
    }
}

/// `-½uᵀHu + uᵀh + Σ log(ϖ/(e^ϖ - e^{-ϖ}))`.
pub fn log_likelihood_from_parts(
    h: &DVector<f64>,
    hessian: &DMatrix<f64>,
    u: &DVector<f64>,
) -> f64 {
    let hu = hessian * u;
    let varpi = h - &hu;
    -0.5 * u.dot(&hu) + u.dot(h) + varpi.iter().map(|&v| log_partition_term(v)).sum::<f64>()
}

/// Approximate log-likelihood of the observed window under `spec`.
pub fn log_likelihood(
    spec: &CostSpec,
    params: &DiffusionParams,
    history: &History,
    traj: &Trajectory,
) -> Result<f64, IrlError> {
    let sample = stack(traj)?;
    let jac = jacobian_x_u(params, history, &sample)?;
    let parts = gradient_and_hessian(spec, &sample, jac)?;
    let value = log_likelihood_from_parts(&parts.h, &parts.hessian, &sample.u);
    if !value.is_finite() {
        return Err(IrlError::NonFinite("log-likelihood"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::BiasModel;
    use crate::dynamics::MemoryKernel;
    use crate::graph::SocialGraph;

    fn traj(l: usize, h: usize, t: usize) -> Trajectory {
        let x = (0..l)
            .map(|r| (0..h).map(|j| ((r * h + j) as f64 * 0.37).sin()).collect())
            .collect();
        let u = (0..l)
            .map(|r| (0..t).map(|j| ((r * t + j) as f64 * 0.71).cos()).collect())
            .collect();
        Trajectory::new(4, h, t, x, u).unwrap()
    }

    #[test]
    fn stacking_order_and_round_trip() {
        let tr = traj(2, 3, 2);
        let s = stack(&tr).unwrap();
        assert_eq!(s.window(), 2);
        let u = tr.actions();
        assert_eq!(s.u.as_slice(), &[u[0][0], u[0][1], u[1][0], u[1][1]]);
        assert_eq!(unstack(&s).unwrap(), tr);
        let one = traj(1, 3, 2);
        let s1 = stack(&one).unwrap();
        assert_eq!(s1.x.as_slice(), one.opinions()[0].as_slice());
        assert!(matches!(
            stack(&Trajectory::empty(0, 3, 2)),
            Err(IrlError::EmptyTrajectory)
        ));
    }

    #[test]
    fn joint_cost_is_linear() {
        let s = stack(&traj(3, 7, 2)).unwrap();
        let spec = |theta: Vec<Vec<f64>>, a: Vec<f64>| CostSpec {
            basis_ids: BasisId::DEFAULT_LIBRARY.to_vec(),
            theta,
            importance: a,
        };
        let single = CostSpec {
            basis_ids: vec![BasisId::SteerPositive],
            theta: vec![vec![1.0]],
            importance: vec![1.0],
        };
        let s1 = StackedSample::new(0, 7, 1, s.x.clone(), DVector::zeros(3)).unwrap();
        assert_eq!(
            joint_cost(&single, &s1).unwrap(),
            basis_cost(BasisId::SteerPositive, &s1, 0).unwrap()
        );
        let a = spec(
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            vec![0.3, 0.7],
        );
        let r = joint_cost(&a, &s).unwrap();
        let expected = 0.3 * basis_cost(BasisId::SteerPositive, &s, 0).unwrap()
            + 0.7 * basis_cost(BasisId::OwnStubbornness, &s, 1).unwrap();
        assert!((r - expected).abs() < 1e-12);
        let bad = spec(
            vec![vec![0.5, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            vec![0.3, 0.7],
        );
        assert!(matches!(joint_cost(&bad, &s), Err(IrlError::Constraint(_))));
    }

    #[test]
    fn sparse_coefficients_evaluate_as_weighted_sums() {
        // 0.7349 rather than 0.735 so the first row has unit L1 norm
        let s = stack(&traj(3, 7, 2)).unwrap();
        let spec = CostSpec {
            basis_ids: BasisId::DEFAULT_LIBRARY.to_vec(),
            theta: vec![
                vec![-0.0852, 0.0, -0.1799, 0.7349],
                vec![0.7815, 0.0, 0.0, -0.2185],
            ],
            importance: vec![0.2040, 0.7960],
        };
        let c = |b| basis_cost(b, &s, 0).unwrap();
        let r8 = -0.0852 * c(BasisId::SteerPositive) - 0.1799 * c(BasisId::SteerNeutral)
            + 0.7349 * basis_cost(BasisId::OwnStubbornness, &s, 0).unwrap();
        let r9 = 0.7815 * c(BasisId::SteerPositive)
            - 0.2185 * basis_cost(BasisId::OwnStubbornness, &s, 1).unwrap();
        let got = joint_cost(&spec, &s).unwrap();
        assert!((got - (0.2040 * r8 + 0.7960 * r9)).abs() < 1e-12);
    }

    #[test]
    fn log_partition_term_limits() {
        assert_eq!(log_partition_term(0.0), -std::f64::consts::LN_2);
        assert!((log_partition_term(1e-7) + std::f64::consts::LN_2).abs() < 1e-12);
        let direct = |v: f64| (v / (v.exp() - (-v).exp())).ln();
        for v in [-3.0, -0.5, 1e-5, 0.01, 2.0, 30.0] {
            assert!((log_partition_term(v) - direct(v)).abs() < 1e-10, "{v}");
        }
        let big = log_partition_term(1000.0);
        assert!(big.is_finite());
        assert!((big - (1000f64.ln() - 1000.0)).abs() < 1e-12);
        assert_eq!(log_partition_term(-7.5), log_partition_term(7.5));
    }

    #[test]
    fn slope_matches_difference_quotient() {
        for v in [-4.0, -0.3, -1e-4, 0.0, 2e-3, 0.9, 12.0] {
            let d = 1e-6;
            let fd = (log_partition_term(v + d) - log_partition_term(v - d)) / (2.0 * d);
            assert!((log_partition_slope(v) - fd).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn zero_gradient_and_hessian_give_l_times_t_log_half() {
        let u = DVector::from_vec(vec![0.3, -0.2, 0.9, 0.1, 0.5, -1.0]);
        let got = log_likelihood_from_parts(&DVector::zeros(6), &DMatrix::zeros(6, 6), &u);
        assert!((got - 6.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    fn linear_params() -> DiffusionParams {
        // human 0 hears itself and the target
        let g = SocialGraph::new(2, 1, [(0, 0), (0, 1)]).unwrap();
        DiffusionParams::new(
            g,
            vec![BiasModel::uniform()],
            vec![MemoryKernel::uniform(1).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn jacobian_of_fixed_weights_and_causality() {
        let p = linear_params();
        let hist = History::new(&p, vec![0.2]).unwrap();
        let u = vec![vec![0.4], vec![-0.6], vec![0.1]];
        let tr = simulate(&p, &hist, &u, 3).unwrap();
        let s = stack(&tr).unwrap();
        let j = jacobian_x_u(&p, &hist, &s).unwrap();
        // x(k+1+r) = ½x(k+r) + ½u(k+r)
        for row in 0..3 {
            for col in 0..3 {
                let expected = if col <= row {
                    0.5f64.powi((row - col + 1) as i32)
                } else {
                    0.0
                };
                assert!((j[(row, col)] - expected).abs() < 1e-9, "{row},{col}");
                if col > row {
                    assert_eq!(j[(row, col)], 0.0);
                }
            }
        }
    }

    #[test]
    fn jacobian_at_the_action_bound() {
        let p = linear_params();
        let hist = History::new(&p, vec![0.0]).unwrap();
        let tr = simulate(&p, &hist, &[vec![1.0]], 1).unwrap();
        let j = jacobian_x_u(&p, &hist, &stack(&tr).unwrap()).unwrap();
        assert!((j[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unreachable_humans_have_zero_jacobian() {
        let g = SocialGraph::new(3, 1, [(0, 1), (1, 0)]).unwrap();
        let p = DiffusionParams::tanh_power(g, &[1.0, 1.5], 3.0, 2).unwrap();
        let hist = History::new(&p, vec![0.2, -0.4]).unwrap();
        let tr = simulate(&p, &hist, &[vec![0.3], vec![0.8]], 2).unwrap();
        let s = stack(&tr).unwrap();
        let j = jacobian_x_u(&p, &hist, &s).unwrap();
        assert_eq!(j, DMatrix::zeros(4, 2));
        let spec = CostSpec {
            basis_ids: BasisId::DEFAULT_LIBRARY.to_vec(),
            theta: vec![vec![0.25; 4]],
            importance: vec![1.0],
        };
        let parts = gradient_and_hessian(&spec, &s, j).unwrap();
        // only the stubbornness term survives: 0.25·2·(u1 - u0)·(-1, 1)
        let d = 0.8 - 0.3;
        assert!((parts.h[0] + 0.5 * d).abs() < 1e-12);
        assert!((parts.h[1] - 0.5 * d).abs() < 1e-12);
        assert!((parts.hessian[(0, 1)] + 0.5).abs() < 1e-12);
    }
}

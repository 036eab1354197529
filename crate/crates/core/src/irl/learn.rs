//! Constrained maximization of the approximate log-likelihood.
//!
//! The likelihood depends on the coefficients only through the products
//! `w_iq = a_i θ_iq`, and is smooth in them: `ϖ` is linear in `w`. Each
//! restart runs projected gradient ascent: `a` is projected onto the
//! probability simplex and every `θ_i` is rescaled onto the unit L1 sphere
//! after the step. A coefficient whose step would cross zero stops at zero;
//! coefficients at zero stay there unless their gradient is large enough to
//! pull them off.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    basis_contribution, jacobian_x_u, log_partition_slope, log_partition_term, stack, BasisId,
    CostSpec, IrlError, StackedSample,
};
use crate::dynamics::{DiffusionParams, History, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub basis_ids: Vec<BasisId>,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the parameter step, relative to the parameter norm, falls
    /// below this.
    pub tol: f64,
    /// Coefficients smaller than this count as zero.
    pub freeze_threshold: f64,
    /// Gradient magnitude that releases a zero coefficient.
    pub release_tol: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            basis_ids: BasisId::DEFAULT_LIBRARY.to_vec(),
            restarts: 32,
            max_iters: 5000,
            tol: 1e-9,
            freeze_threshold: 1e-10,
            release_tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub initial_loglik: f64,
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Learned coefficients and how the optimizer got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub importance: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub basis_ids: Vec<BasisId>,
    pub final_loglik: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    /// Set when the best restart stopped at the iteration cap.
    pub warning: Option<String>,
    pub window: usize,
    pub start_time: usize,
    /// One rendered cost function per target.
    pub formulas: Vec<String>,
}

impl LearnReport {
    pub fn spec(&self) -> CostSpec {
        CostSpec {
            basis_ids: self.basis_ids.clone(),
            theta: self.theta.clone(),
            importance: self.importance.clone(),
        }
    }
}

/// Likelihood as a function of the products `w = a θ`, flattened
/// target-major.
struct Objective {
    /// `-½uᵀG u + uᵀg` per `(i, q)`.
    linear: Vec<f64>,
    /// `g - G u` per `(i, q)`.
    slopes: Vec<DVector<f64>>,
    n_targets: usize,
    p: usize,
}

impl Objective {
    fn new(
        sample: &StackedSample,
        jac: &DMatrix<f64>,
        basis_ids: &[BasisId],
    ) -> Result<Self, IrlError> {
        let u = &sample.u;
        let mut linear = Vec::new();
        let mut slopes = Vec::new();
        for owner in 0..sample.n_targets {
            for &b in basis_ids {
                let (g, big) = basis_contribution(b, sample, owner, jac)?;
                let gu = &big * u;
                linear.push(-0.5 * u.dot(&gu) + u.dot(&g));
                slopes.push(g - gu);
            }
        }
        Ok(Self {
            linear,
            slopes,
            n_targets: sample.n_targets,
            p: basis_ids.len(),
        })
    }

    fn weights(&self, a: &[f64], theta: &[Vec<f64>]) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_targets * self.p);
        for (row, ai) in theta.iter().zip(a) {
            w.extend(row.iter().map(|t| ai * t));
        }
        w
    }

    fn varpi(&self, w: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.slopes[0].len());
        for (wi, s) in w.iter().zip(&self.slopes) {
            if *wi != 0.0 {
                v.axpy(*wi, s, 1.0);
            }
        }
        v
    }

    fn value(&self, w: &[f64]) -> f64 {
        let lin: f64 = w.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        lin + self
            .varpi(w)
            .iter()
            .map(|&v| log_partition_term(v))
            .sum::<f64>()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let slope: DVector<f64> = self.varpi(w).map(log_partition_slope);
        self.linear
            .iter()
            .zip(&self.slopes)
            .map(|(l, s)| l + slope.dot(s))
            .collect()
    }
}

/// Euclidean projection onto `{a >= 0, Σ a = 1}`.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

fn l1_normalize(row: &mut [f64]) -> bool {
    let norm: f64 = row.iter().map(|v| v.abs()).sum();
    if norm > 0.0 && norm.is_finite() {
        row.iter_mut().for_each(|v| *v /= norm);
        true
    } else {
        false
    }
}

struct Outcome {
    a: Vec<f64>,
    theta: Vec<Vec<f64>>,
    summary: RestartSummary,
}

fn initial_point(
    config: &LearnConfig,
    restart: usize,
    n_targets: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let p = config.basis_ids.len();
    let raw: Vec<f64> = (0..n_targets)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let a = raw.iter().map(|v| v / total).collect();
    let theta = (0..n_targets)
        .map(|_| {
            let mut row: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if !l1_normalize(&mut row) {
                row = vec![1.0 / p as f64; p];
            }
            row
        })
        .collect();
    (a, theta)
}

fn ascend(objective: &Objective, config: &LearnConfig, restart: usize) -> Outcome {
    let (mut a, mut theta) = initial_point(config, restart, objective.n_targets);
    let mut value = objective.value(&objective.weights(&a, &theta));
    let initial = value;
    let mut eta = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let gw = objective.gradient(&objective.weights(&a, &theta));
        let p = objective.p;
        let ga: Vec<f64> = (0..a.len())
            .map(|i| (0..p).map(|q| theta[i][q] * gw[i * p + q]).sum())
            .collect();

        let mut accepted = None;
        while eta > 1e-18 {
            let a_new = project_simplex(
                &a.iter()
                    .zip(&ga)
                    .map(|(x, g)| x + eta * g)
                    .collect::<Vec<_>>(),
            );
            let mut theta_new = theta.clone();
            for (i, row) in theta_new.iter_mut().enumerate() {
                for (q, t) in row.iter_mut().enumerate() {
                    let g = a[i] * gw[i * p + q];
                    if t.abs() < config.freeze_threshold {
                        *t = if g.abs() > config.release_tol {
                            eta * g
                        } else {
                            0.0
                        };
                        continue;
                    }
                    let moved = *t + eta * g;
                    *t = if moved * *t < 0.0 { 0.0 } else { moved };
                }
                if !l1_normalize(row) {
                    row.clone_from(&theta[i]);
                }
            }
            let candidate = objective.value(&objective.weights(&a_new, &theta_new));
            if candidate > value {
                accepted = Some((a_new, theta_new, candidate));
                break;
            }
            eta *= 0.5;
        }

        let Some((a_new, theta_new, candidate)) = accepted else {
            // no ascent direction left at any step size
            converged = true;
            break;
        };
        let mut step = 0.0;
        let mut norm = 0.0;
        for (x, y) in a.iter().zip(&a_new) {
            step += (x - y) * (x - y);
            norm += x * x;
        }
        for (r0, r1) in theta.iter().zip(&theta_new) {
            for (x, y) in r0.iter().zip(r1) {
                step += (x - y) * (x - y);
                norm += x * x;
            }
        }
        a = a_new;
        theta = theta_new;
        value = candidate;
        if step.sqrt() / norm.sqrt().max(1.0) < config.tol {
            converged = true;
            break;
        }
        eta = (eta * 2.0).min(1e6);
    }

    Outcome {
        a,
        theta,
        summary: RestartSummary {
            restart,
            initial_loglik: initial,
            final_loglik: value,
            iterations,
            converged,
        },
    }
}

/// Learns `(θ, a)` from the observed window `traj` that follows `history`.
pub fn learn(
    params: &DiffusionParams,
    history: &History,
    traj: &Trajectory,
    config: &LearnConfig,
) -> Result<LearnReport, IrlError> {
    if traj.len() < 2 {
        return Err(IrlError::WindowTooShort { window: traj.len() });
    }
    if config.basis_ids.is_empty() {
        return Err(IrlError::Config("basis library is empty".into()));
    }
    if config.restarts == 0 {
        return Err(IrlError::Config("at least one restart is needed".into()));
    }
    if traj.n_targets() == 0 {
        return Err(IrlError::Config("no targets to learn".into()));
    }
    let sample = stack(traj)?;
    let jac = jacobian_x_u(params, history, &sample)?;
    let objective = Objective::new(&sample, &jac, &config.basis_ids)?;
    if objective.linear.iter().any(|v| !v.is_finite()) {
        return Err(IrlError::NonFinite("likelihood coefficients"));
    }

    let outcomes: Vec<Outcome> = (0..config.restarts)
        .into_par_iter()
        .map(|r| ascend(&objective, config, r))
        .collect();
    let best = outcomes.iter().enumerate().fold(0, |best, (r, o)| {
        if o.summary.final_loglik > outcomes[best].summary.final_loglik {
            r
        } else {
            best
        }
    });
    let chosen = &outcomes[best];
    let n_humans = traj.n_humans();
    let formulas = chosen
        .theta
        .iter()
        .enumerate()
        .map(|(i, row)| render_formula(n_humans, i, &config.basis_ids, row))
        .collect();
    let warning = (!chosen.summary.converged).then(|| {
        format!(
            "best restart stopped at the iteration cap of {}",
            config.max_iters
        )
    });
    Ok(LearnReport {
        importance: chosen.a.clone(),
        theta: chosen.theta.clone(),
        basis_ids: config.basis_ids.clone(),
        final_loglik: chosen.summary.final_loglik,
        best_restart: best,
        restarts: outcomes.into_iter().map(|o| o.summary).collect(),
        warning,
        window: sample.window(),
        start_time: sample.start_time,
        formulas,
    })
}

/// Coefficients below this print as zero.
const PRINT_ZERO: f64 = 5e-5;

/// Human-readable cost of target `owner` (0-based), labelled with graph
/// indices (1-based, humans first).
pub fn render_formula(
    n_humans: usize,
    owner: usize,
    basis_ids: &[BasisId],
    theta: &[f64],
) -> String {
    let label = n_humans + owner + 1;
    let mut terms = Vec::new();
    for (&b, &t) in basis_ids.iter().zip(theta) {
        if t.abs() < PRINT_ZERO {
            continue;
        }
        let body = match b {
            BasisId::SteerPositive => "Σ_t Σ_j (1 - x_j(t))^2".to_string(),
            BasisId::SteerNegative => "Σ_t Σ_j (1 + x_j(t))^2".to_string(),
            BasisId::SteerNeutral => "Σ_t Σ_j x_j(t)^2".to_string(),
            BasisId::OwnStubbornness => format!("Σ_t (u_{label}(t) - u_{label}(t-1))^2"),
            BasisId::Stubbornness(q) => {
                let l = n_humans + q + 1;
                format!("Σ_t (u_{l}(t) - u_{l}(t-1))^2")
            }
        };
        let sign = if t < 0.0 { "-" } else { "+" };
        terms.push((sign, format!("{:.4} {body}", t.abs())));
    }
    let mut out = format!("r_{label}(x, u) =");
    if terms.is_empty() {
        out.push_str(" 0");
    }
    for (k, (sign, term)) in terms.iter().enumerate() {
        if k == 0 {
            let lead = if *sign == "-" { "-" } else { "" };
            out.push_str(&format!(" {lead}{term}"));
        } else {
            out.push_str(&format!(" {sign} {term}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::graph::SocialGraph;

    #[test]
    fn simplex_projection_cases() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let q = project_simplex(&[-3.0, 0.1, 0.4]);
        assert_eq!(q[0], 0.0);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((q[2] - q[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn formula_rendering() {
        let f = render_formula(
            7,
            0,
            &BasisId::DEFAULT_LIBRARY,
            &[-0.0852, 0.0, -0.1799, 0.7349],
        );
        assert_eq!(
            f,
            "r_8(x, u) = -0.0852 Σ_t Σ_j (1 - x_j(t))^2 - 0.1799 Σ_t Σ_j x_j(t)^2 \
             + 0.7349 Σ_t (u_8(t) - u_8(t-1))^2"
        );
        assert_eq!(
            render_formula(7, 1, &[BasisId::SteerNeutral], &[0.0]),
            "r_9(x, u) = 0"
        );
    }

    fn small_problem() -> (DiffusionParams, History, Trajectory) {
        let g = SocialGraph::new(4, 2, [(0, 2), (0, 1), (1, 3), (1, 0)]).unwrap();
        let p = DiffusionParams::tanh_power(g, &[1.2, 0.8], 4.0, 2).unwrap();
        let h = History::new(&p, vec![0.3, -0.2]).unwrap();
        let u = vec![vec![0.9, -0.4], vec![0.2, 0.6], vec![-0.7, 1.0]];
        let t = simulate(&p, &h, &u, 3).unwrap();
        (p, h, t)
    }

    #[test]
    fn learned_point_is_feasible_and_best() {
        let (p, h, t) = small_problem();
        let config = LearnConfig {
            restarts: 8,
            seed: 3,
            ..LearnConfig::default()
        };
        let r = learn(&p, &h, &t, &config).unwrap();
        r.spec().validate().unwrap();
        for s in &r.restarts {
            assert!(s.final_loglik >= s.initial_loglik);
            assert!(r.final_loglik >= s.final_loglik);
        }
        let again = learn(&p, &h, &t, &config).unwrap();
        assert_eq!(r, again);
        let ll = crate::irl::log_likelihood(&r.spec(), &p, &h, &t).unwrap();
        assert!((ll - r.final_loglik).abs() < 1e-9 * ll.abs().max(1.0));
    }

    #[test]
    fn single_basis_single_target_is_a_sign() {
        let g = SocialGraph::new(2, 1, [(0, 1), (0, 0)]).unwrap();
        let p = DiffusionParams::tanh_power(g, &[1.0], 4.0, 1).unwrap();
        let h = History::new(&p, vec![0.0]).unwrap();
        let t = simulate(&p, &h, &[vec![0.8], vec![0.9]], 2).unwrap();
        let config = LearnConfig {
            basis_ids: vec![BasisId::SteerPositive],
            restarts: 4,
            ..LearnConfig::default()
        };
        let r = learn(&p, &h, &t, &config).unwrap();
        assert_eq!(r.importance, vec![1.0]);
        assert_eq!(r.theta[0][0].abs(), 1.0);
        let flip = CostSpec {
            theta: vec![vec![-r.theta[0][0]]],
            ..r.spec()
        };
        let other = crate::irl::log_likelihood(&flip, &p, &h, &t).unwrap();
        assert!(r.final_loglik >= other);
    }

    #[test]
    fn window_of_one_rejected() {
        let (p, h, t) = small_problem();
        let short = Trajectory::new(
            0,
            2,
            2,
            t.opinions()[..1].to_vec(),
            t.actions()[..1].to_vec(),
        )
        .unwrap();
        assert!(matches!(
            learn(&p, &h, &short, &LearnConfig::default()),
            Err(IrlError::WindowTooShort { window: 1 })
        ));
    }
}

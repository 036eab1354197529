//! Seeded instances with a known cost, for recovery experiments.
//!
//! The generator draws a random network and tanh-power model, warms it up
//! under random actions, then lets the targets pick a window of actions by
//! projected gradient ascent on a known joint cost through the dynamics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gradient_and_hessian, jacobian_x_u, joint_cost, stack, BasisId, CostSpec, IrlError};
use crate::dynamics::{simulate, simulate_in_place, DiffusionParams, History, Trajectory};
use crate::graph::SocialGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_humans: usize,
    pub n_targets: usize,
    pub window: usize,
    /// Steps of random actions before the observed window.
    pub warmup: usize,
    pub ascent_steps: usize,
    pub ascent_rate: f64,
    pub horizon: usize,
    pub basis_ids: Vec<BasisId>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_humans: 7,
            n_targets: 2,
            window: 3,
            warmup: 4,
            ascent_steps: 200,
            ascent_rate: 0.05,
            horizon: 2,
            basis_ids: BasisId::DEFAULT_LIBRARY.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub params: DiffusionParams,
    /// State just before the observed window.
    pub history: History,
    pub trajectory: Trajectory,
    pub truth: CostSpec,
    /// Index into `basis_ids` of the largest `|θ|` per target.
    pub dominant: Vec<usize>,
}

fn random_graph(rng: &mut ChaCha8Rng, h: usize, t: usize) -> Result<SocialGraph, IrlError> {
    let mut edges = Vec::new();
    let humans: Vec<usize> = (0..h).collect();
    for i in 0..h {
        let first = rng.gen_range(0..t);
        for q in 0..t {
            if q == first || rng.gen_bool(0.5) {
                edges.push((i, h + q));
            }
        }
        let k = rng.gen_range(1..=2.min(h));
        for &j in humans.choose_multiple(rng, k) {
            edges.push((i, j));
        }
    }
    SocialGraph::new(h + t, t, edges).map_err(|e| IrlError::Dynamics(e.into()))
}

fn random_cost(rng: &mut ChaCha8Rng, t: usize, basis_ids: &[BasisId]) -> (CostSpec, Vec<usize>) {
    let p = basis_ids.len();
    let mut theta = Vec::with_capacity(t);
    let mut dominant = Vec::with_capacity(t);
    for _ in 0..t {
        let q = rng.gen_range(0..p);
        let mut row = vec![0.0; p];
        let lead = if p == 1 { 1.0 } else { rng.gen_range(0.6..0.8) };
        row[q] = lead;
        // spread the rest so no other coefficient comes close to the lead
        let mut shares: Vec<f64> = (0..p)
            .map(|r| if r == q { 0.0 } else { rng.gen() })
            .collect();
        let total: f64 = shares.iter().sum();
        if total > 0.0 {
            shares.iter_mut().for_each(|s| *s *= (1.0 - lead) / total);
            for (r, s) in shares.into_iter().enumerate() {
                if r != q {
                    row[r] = s;
                }
            }
        }
        for v in &mut row {
            if rng.gen_bool(0.5) {
                *v = -*v;
            }
        }
        theta.push(row);
        dominant.push(q);
    }
    let importance = if t == 2 {
        let a = if rng.gen_bool(0.5) {
            rng.gen_range(0.1..0.4)
        } else {
            rng.gen_range(0.6..0.9)
        };
        vec![a, 1.0 - a]
    } else {
        let raw: Vec<f64> = (0..t).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    (
        CostSpec {
            basis_ids: basis_ids.to_vec(),
            theta,
            importance,
        },
        dominant,
    )
}

/// Builds instance number `seed`.
pub fn synthetic_instance(
    seed: u64,
    config: &SyntheticConfig,
) -> Result<SyntheticInstance, IrlError> {
    let (h, t, l) = (config.n_humans, config.n_targets, config.window);
    if h == 0 || t == 0 || l == 0 || config.basis_ids.is_empty() {
        return Err(IrlError::Config(
            "synthetic instance needs humans, targets, a window and bases".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = random_graph(&mut rng, h, t)?;
    let alpha: Vec<f64> = (0..h).map(|_| rng.gen_range(0.5..2.5)).collect();
    let decay = rng.gen_range(2.0..8.0);
    let params = DiffusionParams::tanh_power(graph, &alpha, decay, config.horizon)?;
    let (truth, dominant) = random_cost(&mut rng, t, &config.basis_ids);

    let x0: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut history = History::new(&params, x0)?;
    let warm: Vec<Vec<f64>> = (0..config.warmup)
        .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    simulate_in_place(&params, &mut history, &warm, config.warmup)?;

    let mut u: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for _ in 0..config.ascent_steps {
        let traj = simulate(&params, &history, &u, l)?;
        let sample = stack(&traj)?;
        let jac = jacobian_x_u(&params, &history, &sample)?;
        let grad = gradient_and_hessian(&truth, &sample, jac)?.h;
        for (m, g) in grad.iter().enumerate() {
            let cell = &mut u[m / t][m % t];
            *cell = (*cell + config.ascent_rate * g).clamp(-1.0, 1.0);
        }
    }
    let trajectory = simulate(&params, &history, &u, l)?;
    if !joint_cost(&truth, &stack(&trajectory)?)?.is_finite() {
        return Err(IrlError::NonFinite("synthetic cost"));
    }
    Ok(SyntheticInstance {
        params,
        history,
        trajectory,
        truth,
        dominant,
    })
}

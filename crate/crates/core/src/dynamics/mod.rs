//! Memorized opinion diffusion.
//!
//! Every human `i` updates as
//!
//! ```text
//! x_i(k+1) = ρ_i s_i + Σ_j c_ij x_j(k)
//! ```
//!
//! where the sum runs over the in-neighbours of `i` (targets contribute their
//! current action). The raw weight of neighbour `j` is
//! `conf(x̲_i, x_j) + nov(x̄_i, x_j)`, with `x̲_i` the memory-weighted mean of
//! the individual's own past opinions and `x̄_i` the memory- and
//! influence-weighted mean of what the neighbours said. Raw weights share
//! one denominator, so `ρ_i + Σ_j c_ij = 1` and opinions stay in `[-1, 1]`.
//!
//! Innate opinions are optional. Without them `ρ_i = 0` whenever `i` has an
//! in-neighbour. With them `s_i` behaves like an extra neighbour of weight
//! `κ_i`: `c_ij = raw_j / (κ_i + Σ raw)` and `ρ_i = κ_i / (κ_i + Σ raw)`.
//!
//! The surround expectation at step `k` needs this step's influence row,
//! which in turn needs the expectation. The row of the previous step stands
//! in for the current one (uniform weights at `k = 0`); rows are computed once
//! per step, cached, and never revisited.

mod memory;
mod series;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bias::{BiasError, BiasModel, DEFAULT_EPSILON_FLOOR};
use crate::graph::{GraphError, SocialGraph};

pub use memory::{
    memory_weight, sensed_self_expectation, sensed_surround_expectation, MemoryKernel,
    MemoryProfile, MemoryWindow, SurroundSample,
};
pub use series::{OpinionSeries, Trajectory};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("memory age {age} outside 1..={max}")]
    AgeOutOfHorizon { age: usize, max: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("window length {expected} but {got} action rows supplied")]
    WindowMismatch { expected: usize, got: usize },
    #[error("{0}")]
    InvalidParameter(String),
    #[error("{what} value {value} at row {row}, column {column} is outside [-1, 1]")]
    OutOfRange {
        what: &'static str,
        row: usize,
        column: usize,
        value: f64,
    },
    #[error("series of {len} rows is too short for {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Innate opinions `s` and the pseudo-neighbour weight `κ` each human gives
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnateOpinions {
    pub s: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Everything the update needs besides the state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    graph: SocialGraph,
    bias: Vec<BiasModel>,
    memory: Vec<MemoryKernel>,
    innate: Option<InnateOpinions>,
    surround_override: Option<f64>,
}

impl DiffusionParams {
    /// One bias model and one memory kernel per human.
    pub fn new(
        graph: SocialGraph,
        bias: Vec<BiasModel>,
        memory: Vec<MemoryKernel>,
    ) -> Result<Self, DynamicsError> {
        let h = graph.n_humans();
        if bias.len() != h {
            return Err(DynamicsError::DimensionMismatch {
                what: "bias models",
                expected: h,
                got: bias.len(),
            });
        }
        if memory.len() != h {
            return Err(DynamicsError::DimensionMismatch {
                what: "memory kernels",
                expected: h,
                got: memory.len(),
            });
        }
        for m in &memory {
            m.validate()?;
        }
        Ok(Self {
            graph,
            bias,
            memory,
            innate: None,
            surround_override: None,
        })
    }

    /// Tanh-power kernels with per-human exponents and one shared
    /// log-decay memory.
    pub fn tanh_power(
        graph: SocialGraph,
        alpha: &[f64],
        decay: f64,
        horizon: usize,
    ) -> Result<Self, DynamicsError> {
        let bias = alpha
            .iter()
            .map(|&a| BiasModel::tanh_power(a, DEFAULT_EPSILON_FLOOR))
            .collect::<Result<Vec<_>, _>>()?;
        let memory = vec![MemoryKernel::log_decay(decay, horizon)?; graph.n_humans()];
        Self::new(graph, bias, memory)
    }

    pub fn with_innate(mut self, innate: InnateOpinions) -> Result<Self, DynamicsError> {
        let h = self.graph.n_humans();
        for (what, v) in [
            ("innate opinions", &innate.s),
            ("innate weights", &innate.weight),
        ] {
            if v.len() != h {
                return Err(DynamicsError::DimensionMismatch {
                    what,
                    expected: h,
                    got: v.len(),
                });
            }
        }
        if let Some(&s) = innate.s.iter().find(|s| !(s.abs() <= 1.0)) {
            return Err(DynamicsError::InvalidParameter(format!(
                "innate opinion {s} outside [-1, 1]"
            )));
        }
        if let Some(&w) = innate
            .weight
            .iter()
            .find(|w| !(**w > 0.0) || !w.is_finite())
        {
            return Err(DynamicsError::InvalidParameter(format!(
                "innate weight must be positive and finite, got {w}"
            )));
        }
        self.innate = Some(innate);
        Ok(self)
    }

    /// Replaces every sensed surround expectation with a constant.
    pub fn with_surround_override(mut self, value: f64) -> Result<Self, DynamicsError> {
        if !(value.abs() <= 1.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "surround expectation {value} outside [-1, 1]"
            )));
        }
        self.surround_override = Some(value);
        Ok(self)
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn bias(&self) -> &[BiasModel] {
        &self.bias
    }

    pub fn memory(&self) -> &[MemoryKernel] {
        &self.memory
    }

    pub fn innate(&self) -> Option<&InnateOpinions> {
        self.innate.as_ref()
    }

    pub fn surround_override(&self) -> Option<f64> {
        self.surround_override
    }

    pub fn n_humans(&self) -> usize {
        self.graph.n_humans()
    }

    pub fn n_targets(&self) -> usize {
        self.graph.n_targets()
    }

    /// Longest memory span among humans.
    pub fn max_span(&self) -> usize {
        self.memory
            .iter()
            .map(MemoryKernel::span)
            .max()
            .unwrap_or(1)
    }
}

/// Kernel family selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    TanhPower,
    /// Constant kernels: rows are uniform over in-neighbours.
    Uniform,
}

impl std::str::FromStr for KernelFamily {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh_power" => Ok(Self::TanhPower),
            "uniform" => Ok(Self::Uniform),
            other => Err(BiasError::UnknownKernel(other.to_string())),
        }
    }
}

/// Serializable model description; [`ModelSpec::build`] turns it into
/// [`DiffusionParams`] for a given graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub kernel: KernelFamily,
    /// One exponent per human (ignored by the uniform family).
    #[serde(default)]
    pub alpha: Vec<f64>,
    pub decay: f64,
    pub tau: usize,
    #[serde(default)]
    pub memory_window: MemoryWindow,
    /// Constant surround expectation, if tied rather than sensed.
    #[serde(default)]
    pub surround: Option<f64>,
    #[serde(default = "default_floor")]
    pub epsilon_floor: f64,
    #[serde(default)]
    pub innate: Option<InnateOpinions>,
}

fn default_floor() -> f64 {
    DEFAULT_EPSILON_FLOOR
}

impl ModelSpec {
    pub fn tanh_power(alpha: Vec<f64>, decay: f64, tau: usize) -> Self {
        Self {
            kernel: KernelFamily::TanhPower,
            alpha,
            decay,
            tau,
            memory_window: MemoryWindow::IncludeCurrent,
            surround: None,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            innate: None,
        }
    }

    pub fn build(&self, graph: &SocialGraph) -> Result<DiffusionParams, DynamicsError> {
        let h = graph.n_humans();
        let bias = match self.kernel {
            KernelFamily::TanhPower => {
                if self.alpha.len() != h {
                    return Err(DynamicsError::DimensionMismatch {
                        what: "alpha",
                        expected: h,
                        got: self.alpha.len(),
                    });
                }
                self.alpha
                    .iter()
                    .map(|&a| BiasModel::tanh_power(a, self.epsilon_floor))
                    .collect::<Result<Vec<_>, _>>()?
            }
            KernelFamily::Uniform => vec![BiasModel::uniform(); h],
        };
        let kernel = MemoryKernel::log_decay(self.decay, self.tau)?.with_window(self.memory_window);
        let mut params = DiffusionParams::new(graph.clone(), bias, vec![kernel; h])?;
        if let Some(v) = self.surround {
            params = params.with_surround_override(v)?;
        }
        if let Some(innate) = &self.innate {
            params = params.with_innate(innate.clone())?;
        }
        Ok(params)
    }
}

/// Normalized influence of one human's in-neighbours at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRow {
    /// Aligned with `graph.in_neighbors(i)`.
    pub weights: Vec<f64>,
    pub resistance: f64,
}

impl InfluenceRow {
    /// `|ρ + Σc - 1|`.
    pub fn defect(&self) -> f64 {
        (self.resistance + self.weights.iter().sum::<f64>() - 1.0).abs()
    }
}

/// Influence rows of every human, one entry per completed step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepCache {
    rows: Vec<Vec<InfluenceRow>>,
}

impl StepCache {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows used for the transition `t -> t+1`.
    pub fn step(&self, t: usize) -> Option<&[InfluenceRow]> {
        self.rows.get(t).map(Vec::as_slice)
    }

    /// Largest `|ρ + Σc - 1|` over all cached rows.
    pub fn max_defect(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(InfluenceRow::defect)
            .fold(0.0, f64::max)
    }
}

/// Opinions seen so far plus the cached rows that produced them.
///
/// Holds human opinions `x(0..=k)`, actions `u(0..k)` and the rows of steps
/// `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    humans: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    cache: StepCache,
}

impl History {
    /// A history holding only the initial opinions.
    pub fn new(params: &DiffusionParams, initial: Vec<f64>) -> Result<Self, DynamicsError> {
        check_row("initial opinions", &initial, params.n_humans())?;
        Ok(Self {
            humans: vec![initial],
            actions: Vec::new(),
            cache: StepCache::default(),
        })
    }

    /// Replays observed data, computing and caching the rows each step would
    /// have used, but keeping the observed opinions.
    pub fn from_observations(
        params: &DiffusionParams,
        humans: &[Vec<f64>],
        actions: &[Vec<f64>],
    ) -> Result<Self, DynamicsError> {
        let first = humans.first().ok_or(DynamicsError::EmptyHistory)?;
        if actions.len() + 1 != humans.len() {
            return Err(DynamicsError::DimensionMismatch {
                what: "actions in history",
                expected: humans.len() - 1,
                got: actions.len(),
            });
        }
        let mut history = Self::new(params, first.clone())?;
        for (u, x) in actions.iter().zip(&humans[1..]) {
            history.advance(params, u, Some(x))?;
        }
        Ok(history)
    }

    /// Current time `k`.
    pub fn time(&self) -> usize {
        self.humans.len() - 1
    }

    pub fn humans(&self) -> &[Vec<f64>] {
        &self.humans
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn cache(&self) -> &StepCache {
        &self.cache
    }

    pub fn current(&self) -> &[f64] {
        self.humans.last().expect("history is never empty")
    }

    /// Opinion of individual `j` at time `t <= k`; targets read `u(t)`, or
    /// `u_now` at `t = k`.
    fn opinion(&self, params: &DiffusionParams, t: usize, j: usize, u_now: &[f64]) -> f64 {
        let h = params.n_humans();
        if j < h {
            self.humans[t][j]
        } else if t < self.actions.len() {
            self.actions[t][j - h]
        } else {
            u_now[j - h]
        }
    }

    /// Computes this step's rows and the next opinions, then appends either
    /// `observed` or the prediction. Returns the prediction.
    fn advance(
        &mut self,
        params: &DiffusionParams,
        u_now: &[f64],
        observed: Option<&[f64]>,
    ) -> Result<Vec<f64>, DynamicsError> {
        check_row("actions", u_now, params.n_targets())?;
        if let Some(x) = observed {
            check_row("observed opinions", x, params.n_humans())?;
        }
        let rows = compute_rows(params, self, u_now)?;
        let k = self.time();
        let next: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let nb = params.graph.in_neighbors(i).expect("human index is valid");
                let anchor = match &params.innate {
                    Some(innate) => innate.s[i],
                    None => self.humans[k][i],
                };
                let mut v = row.resistance * anchor;
                for (&j, &c) in nb.iter().zip(&row.weights) {
                    v += c * self.opinion(params, k, j, u_now);
                }
                v.clamp(-1.0, 1.0)
            })
            .collect();
        self.cache.rows.push(rows);
        self.actions.push(u_now.to_vec());
        self.humans
            .push(observed.map_or_else(|| next.clone(), <[f64]>::to_vec));
        Ok(next)
    }

    /// Advances with an observed next state, returning what the model
    /// predicted for it.
    pub fn push_observed(
        &mut self,
        params: &DiffusionParams,
        u_now: &[f64],
        observed: &[f64],
    ) -> Result<Vec<f64>, DynamicsError> {
        self.advance(params, u_now, Some(observed))
    }
}

fn check_row(what: &'static str, row: &[f64], width: usize) -> Result<(), DynamicsError> {
    if row.len() != width {
        return Err(DynamicsError::DimensionMismatch {
            what,
            expected: width,
            got: row.len(),
        });
    }
    if let Some((column, &value)) = row.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
        return Err(DynamicsError::OutOfRange {
            what,
            row: 0,
            column,
            value,
        });
    }
    Ok(())
}

/// Influence rows of every human at the history's current time.
pub fn compute_rows(
    params: &DiffusionParams,
    history: &History,
    u_now: &[f64],
) -> Result<Vec<InfluenceRow>, DynamicsError> {
    (0..params.n_humans())
        .map(|i| influence_row(params, i, history, u_now))
        .collect()
}

/// Sensed self and surround expectations of human `i` at the current time.
pub fn sensed_expectations(
    params: &DiffusionParams,
    i: usize,
    history: &History,
    u_now: &[f64],
) -> Result<(f64, f64), DynamicsError> {
    let k = history.time();
    let kernel = &params.memory[i];
    let lo = (k + 1).saturating_sub(kernel.span());
    let own: Vec<f64> = history.humans[lo..=k].iter().map(|x| x[i]).collect();
    let x_self = sensed_self_expectation(&own, kernel)?;

    if let Some(v) = params.surround_override {
        return Ok((x_self, v));
    }
    let nb = params.graph.in_neighbors(i)?;
    let uniform = vec![1.0; nb.len()];
    let opinions: Vec<Vec<f64>> = (lo..=k)
        .map(|t| {
            nb.iter()
                .map(|&j| history.opinion(params, t, j, u_now))
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(opinions.len());
    for (t, x) in (lo..=k).zip(&opinions) {
        // the current row is not known yet: reuse the previous one
        let source = if t < k { Some(t) } else { k.checked_sub(1) };
        let weights = match source {
            Some(s) => {
                let rows = history.cache.step(s).ok_or_else(|| {
                    DynamicsError::InvalidParameter(format!("no cached rows for step {s}"))
                })?;
                rows[i].weights.as_slice()
            }
            None => uniform.as_slice(),
        };
        samples.push(SurroundSample {
            weights,
            opinions: x,
        });
    }
    let x_surround = sensed_surround_expectation(&samples, kernel)?.unwrap_or(x_self);
    Ok((x_self, x_surround))
}

/// Normalized weights `c_ij` over the in-neighbours of human `i` and the
/// resistance `ρ_i`.
pub fn influence_row(
    params: &DiffusionParams,
    i: usize,
    history: &History,
    u_now: &[f64],
) -> Result<InfluenceRow, DynamicsError> {
    let nb = params.graph.in_neighbors(i)?;
    if nb.is_empty() {
        return Ok(InfluenceRow {
            weights: Vec::new(),
            resistance: 1.0,
        });
    }
    let k = history.time();
    let (x_self, x_surround) = sensed_expectations(params, i, history, u_now)?;
    let bias = &params.bias[i];
    let raw: Vec<f64> = nb
        .iter()
        .map(|&j| {
            let x = history.opinion(params, k, j, u_now);
            bias.confirmation_weight(x_self, x) + bias.novelty_weight(x_surround, x)
        })
        .collect();
    let kappa = params.innate.as_ref().map_or(0.0, |s| s.weight[i]);
    let total = kappa + raw.iter().sum::<f64>();
    assert!(
        total > 0.0 && total.is_finite(),
        "influence row of human {i} sums to {total}"
    );
    let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let resistance = kappa / total;
    Ok(InfluenceRow {
        weights,
        resistance,
    })
}

/// One update: appends `u_now`, the rows used and `x(k+1)` to `history`.
pub fn step(
    params: &DiffusionParams,
    history: &mut History,
    u_now: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    history.advance(params, u_now, None)
}

/// Runs `window` steps from a copy of `history` under the given actions.
pub fn simulate(
    params: &DiffusionParams,
    history: &History,
    actions: &[Vec<f64>],
    window: usize,
) -> Result<Trajectory, DynamicsError> {
    let mut h = history.clone();
    simulate_in_place(params, &mut h, actions, window)
}

/// [`simulate`] that keeps the extended history.
pub fn simulate_in_place(
    params: &DiffusionParams,
    history: &mut History,
    actions: &[Vec<f64>],
    window: usize,
) -> Result<Trajectory, DynamicsError> {
    if actions.len() != window {
        return Err(DynamicsError::WindowMismatch {
            expected: window,
            got: actions.len(),
        });
    }
    let mut traj = Trajectory::empty(history.time(), params.n_humans(), params.n_targets());
    for u in actions {
        let next = step(params, history, u)?;
        traj.push(next, u.clone());
    }
    Ok(traj)
}

/// Splits the last `window` transitions off a series: the history holds
/// rows `0..=k` (with warmed cache) and the trajectory the pairs
/// `(x(k+1), u(k)) .. (x(k+window), u(k+window-1))`, where
/// `k = len - 1 - window`.
pub fn observed_window(
    params: &DiffusionParams,
    series: &OpinionSeries,
    window: usize,
) -> Result<(History, Trajectory), DynamicsError> {
    check_series(params, series)?;
    if series.len() < window + 1 {
        return Err(DynamicsError::TooShort {
            len: series.len(),
            needed: window + 1,
        });
    }
    let k = series.len() - 1 - window;
    let history = History::from_observations(params, &series.humans[..=k], &series.actions[..k])?;
    let traj = Trajectory::new(
        k,
        params.n_humans(),
        params.n_targets(),
        series.humans[k + 1..].to_vec(),
        series.actions[k..k + window].to_vec(),
    )?;
    Ok((history, traj))
}

pub fn check_series(params: &DiffusionParams, series: &OpinionSeries) -> Result<(), DynamicsError> {
    if series.n_humans() != params.n_humans() {
        return Err(DynamicsError::DimensionMismatch {
            what: "human columns",
            expected: params.n_humans(),
            got: series.n_humans(),
        });
    }
    if series.n_targets() != params.n_targets() {
        return Err(DynamicsError::DimensionMismatch {
            what: "action columns",
            expected: params.n_targets(),
            got: series.n_targets(),
        });
    }
    Ok(())
}

/// Predicted opinions for every row of `series`, seeded with its first row.
///
/// Recursive mode feeds predictions back; teacher forcing predicts each row
/// from the observed past.
pub fn predict_series(
    params: &DiffusionParams,
    series: &OpinionSeries,
    teacher_forcing: bool,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    check_series(params, series)?;
    let first = series.humans.first().ok_or(DynamicsError::EmptyHistory)?;
    let mut history = History::new(params, first.clone())?;
    let mut out = vec![first.clone()];
    for t in 1..series.len() {
        let u = &series.actions[t - 1];
        let predicted = if teacher_forcing {
            history.push_observed(params, u, &series.humans[t])?
        } else {
            step(params, &mut history, u)?
        };
        out.push(predicted);
    }
    Ok(out)
}

/// Joins a starting history row and a simulated trajectory into an aligned
/// series; `final_action` fills the action columns of the last row.
pub fn series_from_run(
    initial: &[f64],
    traj: &Trajectory,
    final_action: Vec<f64>,
) -> Result<OpinionSeries, DynamicsError> {
    let mut humans = vec![initial.to_vec()];
    humans.extend(traj.opinions().iter().cloned());
    let mut actions = traj.actions().to_vec();
    actions.push(final_action);
    OpinionSeries::new(traj.n_humans(), traj.n_targets(), humans, actions)
}

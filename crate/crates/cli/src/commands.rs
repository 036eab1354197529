use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use diffusion_irl::bias::{
    verify_confirmation_behaviors, verify_confirmation_conditions, verify_novelty_behaviors,
    verify_novelty_conditions, BehaviorReport, BiasError, BiasModel, ConditionReport,
    ConstantKernel, ContinuousKernel, HkKernel, PairKernel, Phi, SamplerConfig,
    DEFAULT_EPSILON_FLOOR,
};
use diffusion_irl::dynamics::{
    observed_window, series_from_run, simulate as run_model, DynamicsError, History, ModelSpec,
    OpinionSeries,
};
use diffusion_irl::fitting::{self, FitConfig, FitError, SurroundMode};
use diffusion_irl::graph::{GraphError, SocialGraph};
use diffusion_irl::irl::{self, BasisId, IrlError, LearnConfig};
use serde::Serialize;

use crate::config::{write_json, write_manifest, RunConfig};
use crate::{CliError, Status};

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BiasError> for CliError {
    fn from(e: BiasError) -> Self {
        match e {
            BiasError::SamplerExhausted { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::AllDiverged => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<IrlError> for CliError {
    fn from(e: IrlError) -> Self {
        match e {
            IrlError::NonFinite(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn load_graph(config: &RunConfig) -> Result<SocialGraph, CliError> {
    let path = config.require_path("graph", &config.graph)?;
    Ok(SocialGraph::load(path)?)
}

fn load_series(config: &RunConfig) -> Result<OpinionSeries, CliError> {
    let path = config.require_path("series", &config.series)?;
    Ok(OpinionSeries::read_csv(path)?)
}

fn broadcast(alpha: &[f64], n: usize) -> Result<Vec<f64>, CliError> {
    match alpha.len() {
        1 => Ok(vec![alpha[0]; n]),
        m if m == n => Ok(alpha.to_vec()),
        m => Err(CliError::Validation(format!(
            "--alpha needs 1 or {n} values, got {m}"
        ))),
    }
}

fn parse_surround(text: &str) -> Result<SurroundMode, CliError> {
    match text {
        "sensed" => Ok(SurroundMode::Sensed),
        "fitted" => Ok(SurroundMode::Fitted),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| v.abs() <= 1.0)
            .map(SurroundMode::Fixed)
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "--surround must be `sensed`, `fitted` or a number in [-1, 1], got `{other}`"
                ))
            }),
    }
}

/// Model from `--model` (a model or a fit report) with flag overrides, or
/// from the flags alone.
fn resolve_model(config: &RunConfig, graph: &SocialGraph) -> Result<ModelSpec, CliError> {
    let h = graph.n_humans();
    let mut model = match &config.model {
        Some(_) => {
            let path = config.require_path("model", &config.model)?;
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", path.display()))
            })?;
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            if let Some(inner) = value.get_mut("model") {
                value = inner.take();
            }
            serde_json::from_value::<ModelSpec>(value)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => {
            let decay = config
                .decay
                .ok_or_else(|| CliError::Validation("missing --decay (or --model)".into()))?;
            let alpha = config
                .alpha
                .as_deref()
                .ok_or_else(|| CliError::Validation("missing --alpha (or --model)".into()))?;
            ModelSpec::tanh_power(broadcast(alpha, h)?, decay, config.tau.unwrap_or(2))
        }
    };
    if let Some(alpha) = &config.alpha {
        model.alpha = broadcast(alpha, h)?;
    }
    if let Some(d) = config.decay {
        model.decay = d;
    }
    if let Some(t) = config.tau {
        model.tau = t;
    }
    if let Some(s) = &config.surround {
        model.surround = match parse_surround(s)? {
            SurroundMode::Sensed => None,
            SurroundMode::Fixed(v) => Some(v),
            SurroundMode::Fitted => {
                return Err(CliError::Validation(
                    "--surround fitted only applies to `fit`".into(),
                ))
            }
        };
    }
    Ok(model)
}

fn read_actions(path: &Path, n_targets: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let width = reader.headers().map_err(|e| bad(e.to_string()))?.len();
    if width != n_targets {
        return Err(bad(format!(
            "{width} action columns for {n_targets} targets"
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("invalid number `{f}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no action rows".into()));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SimulationSummary {
    steps: usize,
    min_opinion: f64,
    max_opinion: f64,
    final_state: Vec<f64>,
}

pub fn simulate(config: &RunConfig) -> Result<Status, CliError> {
    let graph = load_graph(config)?;
    let model = resolve_model(config, &graph)?;
    let params = model.build(&graph)?;
    let initial = config
        .initial
        .clone()
        .ok_or_else(|| CliError::Validation("missing --initial".into()))?;
    let actions_path = config.require_path("actions", &config.actions)?;
    let actions = read_actions(&actions_path, graph.n_targets())?;
    let steps = actions.len() - 1;
    let history = History::new(&params, initial.clone())?;
    let traj = run_model(&params, &history, &actions[..steps], steps)?;
    let series = series_from_run(&initial, &traj, actions[steps].clone())?;

    let all = series.humans.iter().flatten();
    let summary = SimulationSummary {
        steps,
        min_opinion: all.clone().copied().fold(f64::INFINITY, f64::min),
        max_opinion: all.copied().fold(f64::NEG_INFINITY, f64::max),
        final_state: series.humans[steps].clone(),
    };
    let dir = config.out_dir()?;
    series.write_csv(dir.join("trajectory.csv"))?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_manifest(&dir, "simulate", config, &["trajectory.csv", "summary.json"])?;
    println!(
        "simulated {steps} steps: opinions in [{:.4}, {:.4}]",
        summary.min_opinion, summary.max_opinion
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct BiasReport {
    kernel: String,
    all_hold: bool,
    confirmation: BehaviorReport,
    novelty: Option<BehaviorReport>,
    confirmation_conditions: Option<ConditionReport>,
    novelty_conditions: Option<ConditionReport>,
}

fn summarize_behaviours(out: &mut String, r: &BehaviorReport) {
    for o in &r.outcomes {
        let mark = if o.holds() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{mark} {:?} behaviour `{}`: {} passed, {} failed",
            r.kind,
            o.behavior.label(),
            o.passed,
            o.failed
        );
        for c in o.counterexamples.iter().take(3) {
            let _ = writeln!(
                out,
                "     x_ref={:.4} x_a={:.4} x_b={:.4} weights {:.6e} vs {:.6e}",
                c.x_ref, c.x_a, c.x_b, c.weight_a, c.weight_b
            );
        }
    }
}

fn summarize_conditions(out: &mut String, r: &ConditionReport) {
    for o in &r.outcomes {
        let mark = if o.failed == 0 { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{mark} {:?} condition `{}`: {} passed, {} failed",
            r.kind,
            o.condition.label(r.kind),
            o.passed,
            o.failed
        );
        if let Some(c) = &o.counterexample {
            let _ = writeln!(out, "     at {c:?}");
        }
    }
}

pub fn verify_bias(config: &RunConfig) -> Result<Status, CliError> {
    let kernel = config.kernel.clone().unwrap_or_else(|| "tanh_power".into());
    let n = config.samples.unwrap_or(10_000);
    let sampler = SamplerConfig::with_seed(config.seed());
    let alpha = match config.alpha.as_deref() {
        None => 1.0,
        Some([a]) => *a,
        Some(_) => return Err(CliError::Validation("--alpha takes one value here".into())),
    };

    let report = match kernel.as_str() {
        "tanh_power" => {
            let m = BiasModel::tanh_power(alpha, DEFAULT_EPSILON_FLOOR)?;
            let conf = m.confirmation;
            let nov = m.novelty;
            let f = |x: f64| x.tanh();
            let g_conf = move |z: f64| conf.profile.eval(z, conf.epsilon_floor);
            let g_nov = move |z: f64| nov.profile.eval(z, nov.epsilon_floor);
            BiasReport {
                kernel,
                all_hold: false,
                confirmation: verify_confirmation_behaviors(&conf, &sampler, n)?,
                novelty: Some(verify_novelty_behaviors(&nov, &sampler, n)?),
                confirmation_conditions: Some(verify_confirmation_conditions(
                    &f, &g_conf, &sampler, n,
                )?),
                novelty_conditions: Some(verify_novelty_conditions(&f, &g_nov, &sampler, n)?),
            }
        }
        "hk" => {
            let eps = config
                .eps
                .clone()
                .ok_or_else(|| CliError::Validation("hk needs --eps LO HI".into()))?;
            let [lo, hi] = eps[..] else {
                return Err(CliError::Validation("--eps takes two values".into()));
            };
            let k = HkKernel::new(lo, hi)?;
            BiasReport {
                kernel,
                all_hold: false,
                confirmation: verify_confirmation_behaviors(&k, &sampler, n)?,
                novelty: None,
                confirmation_conditions: None,
                novelty_conditions: None,
            }
        }
        "continuous" => {
            let rate = config.phi_rate.unwrap_or(1.0);
            let phi = Phi::Exponential { rate };
            let k = ContinuousKernel { phi };
            let f = |x: f64| x;
            let g = move |z: f64| phi.eval(z * z);
            BiasReport {
                kernel,
                all_hold: false,
                confirmation: verify_confirmation_behaviors(&k, &sampler, n)?,
                novelty: None,
                confirmation_conditions: Some(verify_confirmation_conditions(
                    &f, &g, &sampler, n,
                )?),
                novelty_conditions: None,
            }
        }
        "constant" => {
            let k = ConstantKernel(1.0);
            BiasReport {
                kernel,
                all_hold: false,
                confirmation: verify_confirmation_behaviors(&k as &dyn PairKernel, &sampler, n)?,
                novelty: None,
                confirmation_conditions: None,
                novelty_conditions: None,
            }
        }
        other => return Err(BiasError::UnknownKernel(other.to_string()).into()),
    };
    let all_hold = report.confirmation.all_hold()
        && report.novelty.as_ref().map_or(true, BehaviorReport::all_hold)
        && report
            .confirmation_conditions
            .as_ref()
            .map_or(true, ConditionReport::all_hold)
        && report
            .novelty_conditions
            .as_ref()
            .map_or(true, ConditionReport::all_hold);
    let report = BiasReport { all_hold, ..report };

    let mut text = String::new();
    summarize_behaviours(&mut text, &report.confirmation);
    if let Some(r) = &report.novelty {
        summarize_behaviours(&mut text, r);
    }
    for r in [&report.confirmation_conditions, &report.novelty_conditions]
        .into_iter()
        .flatten()
    {
        summarize_conditions(&mut text, r);
    }
    print!("{text}");
    println!(
        "{}: kernel `{}` with {n} samples per check",
        if all_hold { "all checks hold" } else { "some checks fail" },
        report.kernel
    );
    if config.out.is_some() {
        let dir = config.out_dir()?;
        write_json(&dir.join("bias_report.json"), &report)?;
        write_manifest(&dir, "verify-bias", config, &["bias_report.json"])?;
    }
    Ok(if all_hold {
        Status::Ok
    } else {
        Status::VerificationFailed
    })
}

pub fn fit(config: &RunConfig) -> Result<Status, CliError> {
    let graph = load_graph(config)?;
    let series = load_series(config)?;
    let defaults = FitConfig::default();
    let fit_config = FitConfig {
        tau: config.tau.unwrap_or(defaults.tau),
        surround: config
            .surround
            .as_deref()
            .map(parse_surround)
            .transpose()?
            .unwrap_or(defaults.surround),
        restarts: config.restarts.unwrap_or(defaults.restarts),
        max_sweeps: config.max_sweeps.unwrap_or(defaults.max_sweeps),
        teacher_forcing: config.teacher_forcing.unwrap_or(false),
        seed: config.seed(),
        ..defaults
    };
    let result = fitting::fit(&series, &graph, &fit_config)?;
    let dir = config.out_dir()?;
    write_json(&dir.join("fit.json"), &result)?;
    write_manifest(&dir, "fit", config, &["fit.json"])?;
    let alpha: Vec<String> = result.model.alpha.iter().map(|a| format!("{a:.4}")).collect();
    println!("alpha = [{}]", alpha.join(", "));
    println!("decay = {:.4}", result.model.decay);
    if let Some(s) = result.model.surround {
        println!("surround = {s:.4}");
    }
    println!("loss = {:.6e}", result.loss);
    if result.non_identifiable {
        println!("warning: loss surface is flat; parameters are not identifiable from this series");
    }
    Ok(Status::Ok)
}

pub fn learn(config: &RunConfig) -> Result<Status, CliError> {
    let window = config.window.unwrap_or(3);
    if window < 2 {
        return Err(IrlError::WindowTooShort { window }.into());
    }
    let graph = load_graph(config)?;
    let series = load_series(config)?;
    let model = resolve_model(config, &graph)?;
    let params = model.build(&graph)?;
    let defaults = LearnConfig::default();
    let basis_ids = match &config.basis {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<BasisId>())
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.basis_ids.clone(),
    };
    let learn_config = LearnConfig {
        basis_ids,
        restarts: config.restarts.unwrap_or(defaults.restarts),
        max_iters: config.max_iters.unwrap_or(defaults.max_iters),
        seed: config.seed(),
        ..defaults
    };
    let (history, traj) = observed_window(&params, &series, window)?;
    let report = irl::learn(&params, &history, &traj, &learn_config)?;
    let dir = config.out_dir()?;
    write_json(&dir.join("learn.json"), &report)?;
    write_manifest(&dir, "learn", config, &["learn.json"])?;
    for (i, f) in report.formulas.iter().enumerate() {
        println!("a_{} = {:.4}   {f}", graph.n_humans() + i + 1, report.importance[i]);
    }
    println!("log-likelihood = {:.6}", report.final_loglik);
    if let Some(w) = &report.warning {
        println!("warning: {w}");
    }
    Ok(Status::Ok)
}

/// Humans with `x > 0`, `x < 0` and `x = 0`; zero counts in neither domain.
pub fn domain_counts(row: &[f64]) -> (usize, usize, usize) {
    let supporting = row.iter().filter(|&&x| x > 0.0).count();
    let opposing = row.iter().filter(|&&x| x < 0.0).count();
    (supporting, opposing, row.len() - supporting - opposing)
}

pub fn export(config: &RunConfig) -> Result<Status, CliError> {
    let series = load_series(config)?;
    let h = series.n_humans();
    let mut long = String::from("t,individual,role,value\n");
    let mut counts = String::from("t,supporting,opposing,neutral\n");
    for (t, (x, u)) in series.humans.iter().zip(&series.actions).enumerate() {
        for (j, v) in x.iter().enumerate() {
            let _ = writeln!(long, "{t},{},human,{v:.16e}", j + 1);
        }
        for (q, v) in u.iter().enumerate() {
            let _ = writeln!(long, "{t},{},target,{v:.16e}", h + q + 1);
        }
        let (s, o, z) = domain_counts(x);
        let _ = writeln!(counts, "{t},{s},{o},{z}");
    }
    let dir = config.out_dir()?;
    let write = |name: &str, text: &str| {
        fs::write(dir.join(name), text)
            .map_err(|e| CliError::Runtime(format!("cannot write {name}: {e}")))
    };
    write("opinions.csv", &long)?;
    write("domains.csv", &counts)?;
    write_manifest(&dir, "export", config, &["opinions.csv", "domains.csv"])?;
    println!("exported {} steps for {h} humans", series.len());
    Ok(Status::Ok)
}

//! Property-sampling checks for asymmetric bias kernels.
//!
//! Behaviour checks sample opinion triples `(x_ref, x_a, x_b)` from the
//! hypothesis region of each behaviour by rejection from the uniform cube
//! and test the claimed (in)equality. Condition checks sample the transform
//! and profile directly. Every report is a pure function of
//! `(seed, n, kernel)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BiasError, PairKernel};

/// Tolerance for behaviour and condition equalities.
pub const EQUALITY_TOL: f64 = 1e-9;
/// Margin a strict inequality must clear.
pub const STRICT_MARGIN: f64 = 1e-12;
/// Grid size for the existential behaviour.
pub const WITNESS_GRID: usize = 401;
/// Counterexamples kept per behaviour.
pub const MAX_COUNTEREXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    Confirmation,
    Novelty,
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Minimum gap between any two quantities a hypothesis compares, and
    /// minimum magnitude of any opinion whose sign matters. Keeps strict
    /// inequalities resolvable at [`STRICT_MARGIN`].
    pub min_separation: f64,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            min_separation: 1e-3,
            max_retries: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Neutral reference, mirrored opinions: equal weights.
    NeutralSameDistance,
    /// Equal distances, `x_a` on the reference's side, `x_b` across zero.
    SameDistanceCrossing,
    /// Equal distances, both on the reference's side, `x_a` more extreme.
    SameDistanceSameDomain,
    /// Both opinions share a sign, `x_b` strictly closer to the reference.
    SameDomainDifferentDistance,
    /// For a same-side `x_a`, some closer opposite-side `x_b` must exist on
    /// the witness grid with the required ordering.
    SmallDistanceCrossing,
}

impl Behavior {
    pub const ALL: [Behavior; 5] = [
        Behavior::NeutralSameDistance,
        Behavior::SameDistanceCrossing,
        Behavior::SameDistanceSameDomain,
        Behavior::SameDomainDifferentDistance,
        Behavior::SmallDistanceCrossing,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Behavior::NeutralSameDistance => "neutral opinion, same distance",
            Behavior::SameDistanceCrossing => "same distance, crossing domains",
            Behavior::SameDistanceSameDomain => "same distance, same domain",
            Behavior::SameDomainDifferentDistance => "same domain, different distances",
            Behavior::SmallDistanceCrossing => "small distance, crossing domains",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counterexample {
    pub x_ref: f64,
    pub x_a: f64,
    pub x_b: f64,
    pub weight_a: f64,
    pub weight_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorOutcome {
    pub behavior: Behavior,
    pub passed: usize,
    pub failed: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl BehaviorOutcome {
    pub fn holds(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorReport {
    pub kind: BiasKind,
    pub samples: usize,
    pub seed: u64,
    pub outcomes: Vec<BehaviorOutcome>,
}

impl BehaviorReport {
    pub fn all_hold(&self) -> bool {
        self.outcomes.iter().all(BehaviorOutcome::holds)
    }

    pub fn outcome(&self, behavior: Behavior) -> &BehaviorOutcome {
        self.outcomes
            .iter()
            .find(|o| o.behavior == behavior)
            .expect("every behaviour is reported")
    }
}

#[derive(Debug, Clone, Copy)]
struct Triple {
    x_ref: f64,
    x_a: f64,
    x_b: f64,
}

fn in_domain(x: f64) -> bool {
    (-1.0..=1.0).contains(&x)
}

/// Draws from the hypothesis of `behavior`; `None` means "reject, retry".
fn propose(behavior: Behavior, rng: &mut ChaCha8Rng, sep: f64) -> Option<Triple> {
    let u = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..=1.0);
    match behavior {
        Behavior::NeutralSameDistance => {
            let x_a: f64 = u(rng);
            (x_a.abs() >= sep).then_some(Triple {
                x_ref: 0.0,
                x_a,
                x_b: -x_a,
            })
        }
        Behavior::SameDistanceCrossing | Behavior::SameDistanceSameDomain => {
            let x_ref = u(rng);
            let x_a = u(rng);
            let x_b = 2.0 * x_ref - x_a;
            if !in_domain(x_b) || x_ref.abs() < sep || x_a.abs() < sep {
                return None;
            }
            if (x_a - x_ref).abs() < sep {
                return None;
            }
            let pa = x_ref * x_a;
            let pb = x_ref * x_b;
            let ok = match behavior {
                Behavior::SameDistanceCrossing => pa > 0.0 && pb <= 0.0,
                _ => pa > pb && pb >= 0.0 && x_b.abs() >= sep,
            };
            ok.then_some(Triple { x_ref, x_a, x_b })
        }
        Behavior::SameDomainDifferentDistance => {
            let x_ref = u(rng);
            let x_a = u(rng);
            let x_b = u(rng);
            let da = (x_ref - x_a).abs();
            let db = (x_ref - x_b).abs();
            let ok = x_a * x_b >= 0.0 && db >= sep && da - db >= sep;
            ok.then_some(Triple { x_ref, x_a, x_b })
        }
        Behavior::SmallDistanceCrossing => {
            let x_ref = u(rng);
            let x_a = u(rng);
            // Some opposite-sign opinion must be strictly closer than x_a for
            // the behaviour to say anything.
            let ok = x_ref * x_a > 0.0
                && x_ref.abs() >= sep
                && x_a.abs() >= sep
                && (x_a - x_ref).abs() > x_ref.abs() + sep;
            ok.then_some(Triple {
                x_ref,
                x_a,
                x_b: f64::NAN,
            })
        }
    }
}

fn draw(
    behavior: Behavior,
    rng: &mut ChaCha8Rng,
    cfg: &SamplerConfig,
) -> Result<Triple, BiasError> {
    for _ in 0..cfg.max_retries {
        if let Some(t) = propose(behavior, rng, cfg.min_separation) {
            return Ok(t);
        }
    }
    Err(BiasError::SamplerExhausted {
        behavior: behavior.label().to_string(),
        retries: cfg.max_retries,
    })
}

/// Opposite-sign grid for the existential check: [`WITNESS_GRID`] interior
/// points of the interval of opinions across zero that are strictly closer
/// to `x_ref` than `x_a` (distance `da`).
fn witness_grid(x_ref: f64, da: f64) -> impl Iterator<Item = f64> {
    let s = -x_ref.signum();
    let reach = (da - x_ref.abs()).min(1.0);
    (1..=WITNESS_GRID).map(move |i| s * reach * i as f64 / (WITNESS_GRID + 1) as f64)
}

/// Checks one triple. `favour` is the sign of the weight ordering the
/// behaviour demands for the confirmation case; novelty flips it.
fn judge<K: PairKernel + ?Sized>(
    kernel: &K,
    kind: BiasKind,
    behavior: Behavior,
    t: Triple,
) -> (bool, Counterexample) {
    let flip = matches!(kind, BiasKind::Novelty);
    // true when `hi` must carry strictly more weight than `lo`
    let strictly = |hi: f64, lo: f64| {
        if flip {
            lo - hi > STRICT_MARGIN
        } else {
            hi - lo > STRICT_MARGIN
        }
    };

    if behavior == Behavior::SmallDistanceCrossing {
        let wa = kernel.weight(t.x_ref, t.x_a);
        let da = (t.x_ref - t.x_a).abs();
        let mut best: Option<(f64, f64)> = None;
        for x_b in witness_grid(t.x_ref, da) {
            let zeta = (t.x_ref - x_b).abs() / da;
            if zeta >= 1.0 {
                continue;
            }
            let wb = kernel.weight(t.x_ref, x_b);
            if strictly(wb, wa) {
                return (
                    true,
                    Counterexample {
                        x_ref: t.x_ref,
                        x_a: t.x_a,
                        x_b,
                        weight_a: wa,
                        weight_b: wb,
                    },
                );
            }
            let gap = if flip { wa - wb } else { wb - wa };
            if best.map_or(true, |(g, _)| gap > g) {
                best = Some((gap, x_b));
            }
        }
        let x_b = best.map_or(f64::NAN, |(_, x)| x);
        let wb = if x_b.is_nan() {
            f64::NAN
        } else {
            kernel.weight(t.x_ref, x_b)
        };
        return (
            false,
            Counterexample {
                x_ref: t.x_ref,
                x_a: t.x_a,
                x_b,
                weight_a: wa,
                weight_b: wb,
            },
        );
    }

    let wa = kernel.weight(t.x_ref, t.x_a);
    let wb = kernel.weight(t.x_ref, t.x_b);
    let ok = match behavior {
        Behavior::NeutralSameDistance => (wa - wb).abs() <= EQUALITY_TOL,
        Behavior::SameDistanceCrossing | Behavior::SameDistanceSameDomain => strictly(wa, wb),
        Behavior::SameDomainDifferentDistance => strictly(wb, wa),
        Behavior::SmallDistanceCrossing => unreachable!(),
    };
    (
        ok,
        Counterexample {
            x_ref: t.x_ref,
            x_a: t.x_a,
            x_b: t.x_b,
            weight_a: wa,
            weight_b: wb,
        },
    )
}

fn verify_behaviors<K: PairKernel + ?Sized>(
    kernel: &K,
    kind: BiasKind,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<BehaviorReport, BiasError> {
    if n == 0 {
        return Err(BiasError::NoSamples);
    }
    let mut outcomes = Vec::with_capacity(Behavior::ALL.len());
    for behavior in Behavior::ALL {
        let mut rng = sampler.rng(behavior.stream());
        let mut outcome = BehaviorOutcome {
            behavior,
            passed: 0,
            failed: 0,
            counterexamples: Vec::new(),
        };
        for _ in 0..n {
            let triple = draw(behavior, &mut rng, sampler)?;
            let (ok, witness) = judge(kernel, kind, behavior, triple);
            if ok {
                outcome.passed += 1;
            } else {
                outcome.failed += 1;
                if outcome.counterexamples.len() < MAX_COUNTEREXAMPLES {
                    outcome.counterexamples.push(witness);
                }
            }
        }
        outcomes.push(outcome);
    }
    Ok(BehaviorReport {
        kind,
        samples: n,
        seed: sampler.seed,
        outcomes,
    })
}

/// Samples the five confirmation behaviours against `kernel(x_self, x_other)`.
pub fn verify_confirmation_behaviors<K: PairKernel + ?Sized>(
    kernel: &K,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<BehaviorReport, BiasError> {
    verify_behaviors(kernel, BiasKind::Confirmation, sampler, n)
}

/// Mirror of [`verify_confirmation_behaviors`] with every strict ordering
/// reversed, for `kernel(x_surround, x_other)`.
pub fn verify_novelty_behaviors<K: PairKernel + ?Sized>(
    kernel: &K,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<BehaviorReport, BiasError> {
    verify_behaviors(kernel, BiasKind::Novelty, sampler, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `g` strictly monotone in `|z|` (decreasing for confirmation,
    /// increasing for novelty).
    ProfileMonotone,
    /// `f` strictly increasing.
    TransformIncreasing,
    /// For `x > 0`, `f(x)` exceeds the mean of `f` at two points mirrored
    /// about `x`.
    MidpointAbovePositive,
    /// For `x < 0`, `f(x)` is below that mean.
    MidpointBelowNegative,
    /// `f(0) = (f(a) + f(-a)) / 2`.
    ZeroIsMidpoint,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::ProfileMonotone,
        Condition::TransformIncreasing,
        Condition::MidpointAbovePositive,
        Condition::MidpointBelowNegative,
        Condition::ZeroIsMidpoint,
    ];

    pub fn label(&self, kind: BiasKind) -> &'static str {
        match (self, kind) {
            (Condition::ProfileMonotone, BiasKind::Confirmation) => {
                "profile strictly decreasing in distance"
            }
            (Condition::ProfileMonotone, BiasKind::Novelty) => {
                "profile strictly increasing in distance"
            }
            (Condition::TransformIncreasing, _) => "transform strictly increasing",
            (Condition::MidpointAbovePositive, _) => "midpoint above for positive reference",
            (Condition::MidpointBelowNegative, _) => "midpoint below for negative reference",
            (Condition::ZeroIsMidpoint, _) => "zero is the transform midpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub condition: Condition,
    pub passed: usize,
    pub failed: usize,
    /// The sampled arguments of the first failure.
    pub counterexample: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub kind: BiasKind,
    pub samples: usize,
    pub seed: u64,
    pub outcomes: Vec<ConditionOutcome>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.outcomes.iter().all(|o| o.failed == 0)
    }

    pub fn outcome(&self, condition: Condition) -> &ConditionOutcome {
        self.outcomes
            .iter()
            .find(|o| o.condition == condition)
            .expect("every condition is reported")
    }
}

/// Maximum transformed distance sampled for the profile check.
const PROFILE_RANGE: f64 = 2.0;

fn check_conditions(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    kind: BiasKind,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<ConditionReport, BiasError> {
    if n == 0 {
        return Err(BiasError::NoSamples);
    }
    let sep = sampler.min_separation;
    let mut outcomes = Vec::new();
    for (index, condition) in Condition::ALL.into_iter().enumerate() {
        let mut rng = sampler.rng(100 + index as u64);
        let mut outcome = ConditionOutcome {
            condition,
            passed: 0,
            failed: 0,
            counterexample: None,
        };
        for _ in 0..n {
            let mut attempt = 0;
            let (ok, args) = loop {
                attempt += 1;
                if attempt > sampler.max_retries {
                    return Err(BiasError::SamplerExhausted {
                        behavior: condition.label(kind).to_string(),
                        retries: sampler.max_retries,
                    });
                }
                if let Some(r) = condition_sample(condition, f, g, kind, &mut rng, sep) {
                    break r;
                }
            };
            if ok {
                outcome.passed += 1;
            } else {
                outcome.failed += 1;
                outcome.counterexample.get_or_insert(args);
            }
        }
        outcomes.push(outcome);
    }
    Ok(ConditionReport {
        kind,
        samples: n,
        seed: sampler.seed,
        outcomes,
    })
}

fn condition_sample(
    condition: Condition,
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    kind: BiasKind,
    rng: &mut ChaCha8Rng,
    sep: f64,
) -> Option<(bool, Vec<f64>)> {
    match condition {
        Condition::ProfileMonotone => {
            let mut z1 = rng.gen_range(sep..=PROFILE_RANGE);
            let mut z2 = rng.gen_range(sep..=PROFILE_RANGE);
            if (z1 - z2).abs() < sep {
                return None;
            }
            if z1 > z2 {
                std::mem::swap(&mut z1, &mut z2);
            }
            // g acts on a signed distance; monotonicity is in |z|
            if rng.gen_bool(0.5) {
                z1 = -z1;
            }
            if rng.gen_bool(0.5) {
                z2 = -z2;
            }
            let (g1, g2) = (g(z1), g(z2));
            let ok = match kind {
                BiasKind::Confirmation => g1 - g2 > STRICT_MARGIN,
                BiasKind::Novelty => g2 - g1 > STRICT_MARGIN,
            };
            Some((ok, vec![z1, z2]))
        }
        Condition::TransformIncreasing => {
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let b: f64 = rng.gen_range(-1.0..=1.0);
            if (a - b).abs() < sep {
                return None;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            Some((f(hi) - f(lo) > STRICT_MARGIN, vec![lo, hi]))
        }
        Condition::MidpointAbovePositive | Condition::MidpointBelowNegative => {
            let positive = condition == Condition::MidpointAbovePositive;
            let x: f64 = rng.gen_range(-1.0..=1.0);
            let x_a: f64 = rng.gen_range(-1.0..=1.0);
            let x_b = 2.0 * x - x_a;
            if x.abs() < sep || (x_a - x).abs() < sep || !in_domain(x_b) {
                return None;
            }
            let mean = 0.5 * (f(x_a) + f(x_b));
            if positive {
                (x > 0.0 && x_a > x_b).then(|| (f(x) - mean > STRICT_MARGIN, vec![x, x_a, x_b]))
            } else {
                (x < 0.0 && x_a < x_b).then(|| (mean - f(x) > STRICT_MARGIN, vec![x, x_a, x_b]))
            }
        }
        Condition::ZeroIsMidpoint => {
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let ok = (f(0.0) - 0.5 * (f(a) + f(-a))).abs() <= EQUALITY_TOL;
            Some((ok, vec![a]))
        }
    }
}

/// Samples the transform/profile conditions that characterise a
/// confirmation kernel `g(f(x_self) - f(x_other))`.
pub fn verify_confirmation_conditions(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<ConditionReport, BiasError> {
    check_conditions(f, g, BiasKind::Confirmation, sampler, n)
}

/// Novelty counterpart of [`verify_confirmation_conditions`]: the profile must
/// increase with distance.
pub fn verify_novelty_conditions(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<ConditionReport, BiasError> {
    check_conditions(f, g, BiasKind::Novelty, sampler, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::{
        BiasModel, CompositeKernel, ConstantKernel, ContinuousKernel, HkKernel, Phi,
        DEFAULT_EPSILON_FLOOR,
    };

    fn cfg() -> SamplerConfig {
        SamplerConfig::with_seed(7)
    }

    #[test]
    fn zero_samples_rejected() {
        let k = ConstantKernel(1.0);
        assert_eq!(
            verify_confirmation_behaviors(&k, &cfg(), 0).unwrap_err(),
            BiasError::NoSamples
        );
    }

    #[test]
    fn counts_add_up_and_reports_reproduce() {
        let m = BiasModel::tanh_power(1.8, DEFAULT_EPSILON_FLOOR).unwrap();
        let a = verify_confirmation_behaviors(&m.confirmation, &cfg(), 500).unwrap();
        let b = verify_confirmation_behaviors(&m.confirmation, &cfg(), 500).unwrap();
        assert_eq!(a, b);
        for o in &a.outcomes {
            assert_eq!(o.passed + o.failed, 500);
            assert!(o.counterexamples.len() <= MAX_COUNTEREXAMPLES);
        }
    }

    #[test]
    fn tanh_power_passes_the_equal_distance_behaviours() {
        for alpha in [0.2, 1.0, 1.8] {
            let m = BiasModel::tanh_power(alpha, DEFAULT_EPSILON_FLOOR).unwrap();
            let r = verify_confirmation_behaviors(&m.confirmation, &cfg(), 1000).unwrap();
            for b in [
                Behavior::NeutralSameDistance,
                Behavior::SameDistanceCrossing,
                Behavior::SameDistanceSameDomain,
            ] {
                assert!(
                    r.outcome(b).holds(),
                    "alpha={alpha} {b}: {:?}",
                    r.outcome(b)
                );
            }
            let r = verify_novelty_behaviors(&m.novelty, &cfg(), 1000).unwrap();
            for b in [
                Behavior::NeutralSameDistance,
                Behavior::SameDistanceCrossing,
                Behavior::SameDistanceSameDomain,
            ] {
                assert!(r.outcome(b).holds(), "alpha={alpha} {b}");
            }
        }
    }

    // The distance-ordering behaviour fails for tanh when the reference sits
    // strictly between the two opinions: 0.76 is farther from 0.5 than 0.25
    // is, yet closer after the tanh squeeze.
    #[test]
    fn tanh_breaks_distance_ordering_when_reference_is_between() {
        let m = BiasModel::tanh_power(1.0, DEFAULT_EPSILON_FLOOR).unwrap();
        let (x_ref, x_b, x_a): (f64, f64, f64) = (0.5, 0.25, 0.76);
        assert!((x_ref - x_b).abs() < (x_ref - x_a).abs());
        assert!(m.confirmation_weight(x_ref, x_b) < m.confirmation_weight(x_ref, x_a));
        // Same-side configurations behave.
        assert!(m.confirmation_weight(0.1, 0.4) > m.confirmation_weight(0.1, 0.8));
    }

    // No opposite-sign opinion beats 1.0 as seen from 0.45 under tanh: the
    // closest candidate (just below zero) is already farther in tanh space.
    #[test]
    fn tanh_has_no_crossing_witness_near_the_limit() {
        let k = BiasModel::tanh_power(1.0, DEFAULT_EPSILON_FLOOR)
            .unwrap()
            .confirmation;
        let t = Triple {
            x_ref: 0.45,
            x_a: 1.0,
            x_b: f64::NAN,
        };
        let (ok, ce) = judge(
            &k,
            BiasKind::Confirmation,
            Behavior::SmallDistanceCrossing,
            t,
        );
        assert!(!ok);
        assert!(ce.x_b < 0.0 && ce.weight_b < ce.weight_a);
        let t = Triple {
            x_ref: 0.1,
            x_a: 0.8,
            x_b: f64::NAN,
        };
        assert!(
            judge(
                &k,
                BiasKind::Confirmation,
                Behavior::SmallDistanceCrossing,
                t
            )
            .0
        );
    }

    #[test]
    fn hk_fails_same_distance_crossing() {
        let k = HkKernel::new(0.4, 0.4).unwrap();
        let r = verify_confirmation_behaviors(&k, &cfg(), 1000).unwrap();
        let o = r.outcome(Behavior::SameDistanceCrossing);
        assert!(o.failed > 0);
        assert!(!o.counterexamples.is_empty());
        assert!(!r.all_hold());
    }

    #[test]
    fn continuous_kernel_only_symmetric() {
        let k = ContinuousKernel {
            phi: Phi::Exponential { rate: 1.0 },
        };
        let r = verify_confirmation_behaviors(&k, &cfg(), 1000).unwrap();
        assert!(r.outcome(Behavior::NeutralSameDistance).holds());
        assert_eq!(r.outcome(Behavior::SameDistanceCrossing).passed, 0);
        assert_eq!(r.outcome(Behavior::SameDistanceSameDomain).passed, 0);
    }

    #[test]
    fn confirmation_kernel_in_novelty_verifier() {
        let m = BiasModel::tanh_power(1.0, DEFAULT_EPSILON_FLOOR).unwrap();
        let r = verify_novelty_behaviors(&m.confirmation, &cfg(), 500).unwrap();
        for b in [
            Behavior::SameDistanceCrossing,
            Behavior::SameDistanceSameDomain,
            Behavior::SameDomainDifferentDistance,
        ] {
            assert!(r.outcome(b).failed > 0, "{b}");
        }
    }

    #[test]
    fn constant_kernel_passes_only_equalities() {
        let k = ConstantKernel(0.5);
        for r in [
            verify_confirmation_behaviors(&k, &cfg(), 200).unwrap(),
            verify_novelty_behaviors(&k, &cfg(), 200).unwrap(),
        ] {
            assert!(r.outcome(Behavior::NeutralSameDistance).holds());
            for b in &Behavior::ALL[1..] {
                assert_eq!(r.outcome(*b).passed, 0, "{b}");
            }
        }
    }

    #[test]
    fn confirmation_conditions_for_tanh_power() {
        let g = |z: f64| z.abs().max(DEFAULT_EPSILON_FLOOR).powf(-1.4);
        let r = verify_confirmation_conditions(&f64::tanh, &g, &cfg(), 1000).unwrap();
        assert!(r.all_hold(), "{r:?}");
    }

    #[test]
    fn cube_transform_breaks_positive_midpoint() {
        let g = |z: f64| z.abs().max(DEFAULT_EPSILON_FLOOR).powf(-1.4);
        let cube = |x: f64| x * x * x;
        let r = verify_confirmation_conditions(&cube, &g, &cfg(), 1000).unwrap();
        let o = r.outcome(Condition::MidpointAbovePositive);
        assert_eq!(o.passed, 0);
        assert!(o.counterexample.is_some());
        assert!(r.outcome(Condition::TransformIncreasing).failed == 0);
        assert!(r.outcome(Condition::ZeroIsMidpoint).failed == 0);
    }

    // Brute-force grid: x^3 violates the positive midpoint condition at every
    // admissible (x, a, b), independently of the sampler.
    #[test]
    fn cube_midpoint_grid_search() {
        let mut violations = 0;
        let mut total = 0;
        for i in 1..50 {
            let x = i as f64 / 50.0;
            for j in 1..50 {
                let d = j as f64 / 50.0;
                if x + d > 1.0 || x - d < -1.0 {
                    continue;
                }
                total += 1;
                let mean = 0.5 * ((x + d).powi(3) + (x - d).powi(3));
                if x.powi(3) <= mean {
                    violations += 1;
                }
            }
        }
        assert!(total > 0);
        assert_eq!(violations, total);
    }

    #[test]
    fn increasing_profile_breaks_confirmation_conditions() {
        let r = verify_confirmation_conditions(&f64::tanh, &|z: f64| z.abs(), &cfg(), 500).unwrap();
        assert_eq!(r.outcome(Condition::ProfileMonotone).passed, 0);
    }

    #[test]
    fn novelty_conditions() {
        let good = verify_novelty_conditions(&f64::tanh, &|z: f64| z.abs(), &cfg(), 1000).unwrap();
        assert!(good.all_hold());
        let g_dec = |z: f64| z.abs().max(DEFAULT_EPSILON_FLOOR).powi(-1);
        let bad = verify_novelty_conditions(&f64::tanh, &g_dec, &cfg(), 500).unwrap();
        assert_eq!(bad.outcome(Condition::ProfileMonotone).passed, 0);
        let flat = verify_novelty_conditions(&|_| 0.3, &|z: f64| z.abs(), &cfg(), 500).unwrap();
        assert_eq!(flat.outcome(Condition::TransformIncreasing).passed, 0);
    }

    #[test]
    fn composite_kernel_matches_closure_form() {
        let k = CompositeKernel::new(crate::bias::Transform::Tanh, -1.8, 1e-6).unwrap();
        let closure = |a: f64, b: f64| (a.tanh() - b.tanh()).abs().max(1e-6).powf(-1.8);
        for (a, b) in [(0.1, 0.9), (-0.4, 0.2), (0.3, 0.3)] {
            assert_eq!(k.weight(a, b), closure.weight(a, b));
        }
    }
}

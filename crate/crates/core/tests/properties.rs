use diffusion_irl::bias::{BiasModel, HkKernel, PairKernel, DEFAULT_EPSILON_FLOOR};
use diffusion_irl::dynamics::{
    sensed_self_expectation, simulate, DiffusionParams, History, MemoryKernel,
};
use diffusion_irl::graph::SocialGraph;
use diffusion_irl::irl::{log_partition_slope, log_partition_term, stack, unstack};
use proptest::prelude::*;

fn opinion() -> impl Strategy<Value = f64> {
    -1.0f64..=1.0
}

fn small_graph() -> impl Strategy<Value = SocialGraph> {
    (1usize..5, 1usize..3)
        .prop_flat_map(|(h, t)| {
            let n = h + t;
            (
                Just((h, t)),
                proptest::collection::vec((0..h, 0..n), 0..3 * n),
            )
        })
        .prop_map(|((h, t), edges)| {
            SocialGraph::new(h + t, t, edges.into_iter().filter(|(i, j)| i != j)).unwrap()
        })
}

proptest! {
    #[test]
    fn confirmation_is_even_about_neutral(a in 0.05f64..1.0, alpha in 0.1f64..3.0) {
        let m = BiasModel::tanh_power(alpha, DEFAULT_EPSILON_FLOOR).unwrap();
        prop_assert_eq!(m.confirmation_weight(0.0, a), m.confirmation_weight(0.0, -a));
        prop_assert_eq!(m.novelty_weight(0.0, a), m.novelty_weight(0.0, -a));
    }

    #[test]
    fn confirmation_falls_and_novelty_rises_with_distance(
        r in opinion(), a in opinion(), b in opinion(), alpha in 0.1f64..3.0,
    ) {
        let m = BiasModel::tanh_power(alpha, DEFAULT_EPSILON_FLOOR).unwrap();
        let da = (r.tanh() - a.tanh()).abs();
        let db = (r.tanh() - b.tanh()).abs();
        prop_assume!(da.min(db) > DEFAULT_EPSILON_FLOOR && (da - db).abs() > 1e-9);
        let closer_wins = m.confirmation_weight(r, a) > m.confirmation_weight(r, b);
        prop_assert_eq!(closer_wins, da < db);
        let farther_wins = m.novelty_weight(r, a) > m.novelty_weight(r, b);
        prop_assert_eq!(farther_wins, da > db);
    }

    #[test]
    fn hk_weight_depends_on_distance_only(
        lo in 0.0f64..0.5, width in 0.0f64..0.5, a in opinion(), b in opinion(),
    ) {
        let k = HkKernel::new(lo, lo + width).unwrap();
        prop_assert_eq!(k.weight(a, b), k.weight(b, a));
        prop_assert_eq!(k.weight(a, b), k.weight(-a, -b));
    }

    #[test]
    fn memory_weights_positive_and_fading(decay in 0.01f64..20.0, tau in 1usize..6) {
        let k = MemoryKernel::log_decay(decay, tau).unwrap();
        let w: Vec<f64> = (1..=k.span()).map(|age| k.weight(age).unwrap()).collect();
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn self_expectation_within_history_range(
        xs in proptest::collection::vec(opinion(), 1..8), decay in 0.1f64..10.0,
    ) {
        let k = MemoryKernel::log_decay(decay, 3).unwrap();
        let e = sensed_self_expectation(&xs, &k).unwrap();
        let used = &xs[xs.len().saturating_sub(k.span())..];
        let lo = used.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = used.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= e && e <= hi);
    }

    #[test]
    fn simulation_bounded_with_stochastic_rows(
        graph in small_graph(),
        alpha in 0.1f64..3.0,
        decay in 0.5f64..10.0,
        seed_x in proptest::collection::vec(opinion(), 4),
        seed_u in proptest::collection::vec(opinion(), 2 * 6),
    ) {
        let h = graph.n_humans();
        let t = graph.n_targets();
        let p = DiffusionParams::tanh_power(graph, &vec![alpha; h], decay, 2).unwrap();
        let hist = History::new(&p, seed_x[..h].to_vec()).unwrap();
        let actions: Vec<Vec<f64>> = seed_u.chunks(2).map(|c| c[..t].to_vec()).collect();
        let traj = simulate(&p, &hist, &actions, actions.len()).unwrap();
        prop_assert!(traj.opinions().iter().flatten().all(|v| v.abs() <= 1.0));

        let mut replay = hist.clone();
        diffusion_irl::dynamics::simulate_in_place(&p, &mut replay, &actions, actions.len())
            .unwrap();
        prop_assert!(replay.cache().max_defect() <= 1e-12);
    }

    #[test]
    fn stack_unstack_round_trip(
        h in 1usize..4, t in 1usize..3, l in 1usize..4, start in 0usize..10,
        values in proptest::collection::vec(opinion(), 4 * 3 + 3 * 3),
    ) {
        let xs: Vec<Vec<f64>> = (0..l).map(|r| values[r * h..(r + 1) * h].to_vec()).collect();
        let off = 12;
        let us: Vec<Vec<f64>> =
            (0..l).map(|r| values[off + r * t..off + (r + 1) * t].to_vec()).collect();
        let traj = diffusion_irl::dynamics::Trajectory::new(start, h, t, xs, us).unwrap();
        let back = unstack(&stack(&traj).unwrap()).unwrap();
        prop_assert_eq!(back, traj);
    }

    #[test]
    fn log_partition_term_even_and_bounded(v in -200.0f64..200.0) {
        let a = log_partition_term(v);
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, log_partition_term(-v));
        // the integral of e^{vs} over [-1, 1] is at least 2
        prop_assert!(a <= -std::f64::consts::LN_2 + 1e-15);
    }

    #[test]
    fn log_partition_slope_matches_difference(v in -30.0f64..30.0) {
        let e = 1e-5;
        let fd = (log_partition_term(v + e) - log_partition_term(v - e)) / (2.0 * e);
        prop_assert!((fd - log_partition_slope(v)).abs() < 1e-6);
    }

    #[test]
    fn graph_canonical_form_round_trips(graph in small_graph()) {
        let text = graph.to_canonical_string();
        let back = SocialGraph::parse(&text).unwrap();
        prop_assert_eq!(back.to_canonical_string(), text);
        prop_assert_eq!(back, graph);
    }
}

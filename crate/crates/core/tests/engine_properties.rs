use proptest::prelude::*;

use thinker_ddm::providers::testing::fixed_providers;
use thinker_ddm::providers::PassthroughScorer;
use thinker_ddm::{replay, BoundaryPair, RoutingConfig, Router, SourceItem, StepKind, TerminalCase};

const PROMPTS: [&str; 7] = ["p1", "p2", "p3", "p4", "p5", "p6", "p7"];

#[derive(Debug, Clone)]
struct Episode {
    a: f64,
    b: f64,
    prompts: Vec<f64>,
    seed: u64,
}

impl Episode {
    fn providers(&self, shift: f64) -> thinker_ddm::ProviderSet {
        let prompts: Vec<(&str, f64)> = PROMPTS.iter().zip(&self.prompts).map(|(id, s)| (*id, s + shift)).collect();
        fixed_providers(self.a + shift, self.b + shift, &prompts)
    }

    fn config(&self, upper: f64, lower: f64, decay: f64) -> RoutingConfig {
        RoutingConfig {
            initial_upper: upper,
            initial_lower: lower,
            decay,
            ..RoutingConfig::with_prompts(PROMPTS[..self.prompts.len()].iter().copied())
        }
    }
}

/// Scores clustered near each other so every terminal case shows up.
fn episode() -> impl Strategy<Value = Episode> {
    (
        0.6f64..0.95,
        0.6f64..0.95,
        prop::collection::vec(0.6f64..0.95, 0..=7),
        any::<u64>(),
    )
        .prop_map(|(a, b, prompts, seed)| Episode { a, b, prompts, seed })
}

/// Like `episode` but with a small coarse score alphabet, so ties are common.
fn tied_episode() -> impl Strategy<Value = Episode> {
    let s = (0u8..4).prop_map(|k| 0.8 + 0.02 * f64::from(k));
    (s.clone(), s.clone(), prop::collection::vec(s, 0..=7), any::<u64>())
        .prop_map(|(a, b, prompts, seed)| Episode { a, b, prompts, seed })
}

fn route(ep: &Episode, cfg: RoutingConfig, shift: f64) -> thinker_ddm::Decision {
    let source = SourceItem::new("s", "x");
    Router::new(cfg)
        .unwrap()
        .route_with_seed(&source, &ep.providers(shift), &PassthroughScorer, ep.seed)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn boundary_law(upper in 1e-4f64..10.0, lower in -10.0f64..-1e-4, decay in 0.0f64..3.0) {
        // Zero evidence never crosses, so every iteration is traced.
        let ep = Episode { a: 0.0, b: 0.0, prompts: vec![0.0; 7], seed: 1 };
        let d = route(&ep, ep.config(upper, lower, decay), 0.0);
        for (k, step) in d.trace.iter().enumerate() {
            let shrink = (-decay * k as f64).exp();
            let (eu, el) = (upper * shrink, lower * shrink);
            prop_assert!(((step.upper_after - eu) / eu).abs() <= 1e-12);
            prop_assert!(((step.lower_after - el) / el).abs() <= 1e-12);
        }
    }

    #[test]
    fn trace_consistency_and_replay(ep in episode(), decay in 0.0f64..1.0) {
        let cfg = ep.config(0.05, -0.05, decay);
        let d = route(&ep, cfg.clone(), 0.0);
        let mut drift = d.trace[0].drift_after;
        prop_assert_eq!(d.trace[0].step_kind, StepKind::InitDrift);
        for step in &d.trace[1..] {
            drift += step.diffusion_value;
            prop_assert_eq!(step.drift_after, drift);
        }
        let r = replay(&d.trace, &cfg).unwrap();
        prop_assert_eq!(r.terminal_case, d.terminal_case);
        prop_assert_eq!(&r.chosen_producer, &d.chosen.producer_id);
        prop_assert_eq!(r.queries_used, d.queries_used);
    }

    #[test]
    fn termination_bound(ep in episode(), decay in 0.0f64..2.0) {
        let d = route(&ep, ep.config(0.05, -0.05, decay), 0.0);
        prop_assert!(d.queries_used <= 2 + ep.prompts.len());
        prop_assert!(d.scorer_calls <= 2 + ep.prompts.len());
        prop_assert_eq!(d.trace.len(), d.queries_used - 1);
    }

    #[test]
    fn lower_hit_chooses_baseline_a(ep in episode(), decay in 0.0f64..1.0) {
        let d = route(&ep, ep.config(0.05, -0.05, decay), 0.0);
        if d.terminal_case == TerminalCase::LowerHit {
            prop_assert_eq!(d.chosen.producer_id.as_str(), "baseline_a");
        }
    }

    #[test]
    fn argmax_rule(ep in tied_episode(), decay in 0.0f64..1.0) {
        let d = route(&ep, ep.config(0.05, -0.05, decay), 0.0);
        if d.terminal_case != TerminalCase::LowerHit {
            let pool: Vec<f64> = std::iter::once(d.trace[0].reference_score.unwrap())
                .chain(d.trace.iter().map(|s| s.score))
                .collect();
            let best = pool.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(d.chosen.score, Some(best));
            // Earliest maximum wins.
            let first = pool.iter().position(|s| *s == best).unwrap();
            let ids: Vec<&str> = std::iter::once("baseline_a")
                .chain(d.trace.iter().map(|s| s.producer_id.as_str()))
                .collect();
            prop_assert_eq!(d.chosen.producer_id.as_str(), ids[first]);
        }
    }

    #[test]
    fn shift_invariance(ep in tied_episode(), c in -10.0f64..10.0, decay in 0.0f64..1.0) {
        let base = route(&ep, ep.config(0.05, -0.05, decay), 0.0);
        let shifted = route(&ep, ep.config(0.05, -0.05, decay), c);
        prop_assert_eq!(base.terminal_case, shifted.terminal_case);
        prop_assert_eq!(&base.chosen.producer_id, &shifted.chosen.producer_id);
        prop_assert_eq!(base.queries_used, shifted.queries_used);
        for (x, y) in base.trace.iter().zip(&shifted.trace) {
            prop_assert!((x.drift_after - y.drift_after).abs() < 1e-12);
            prop_assert!((x.diffusion_value - y.diffusion_value).abs() < 1e-12);
            prop_assert_eq!(x.stopped, y.stopped);
        }
    }

    #[test]
    fn all_equivalence(ep in tied_episode()) {
        let cfg = ep.config(1e18, -1e18, 0.2);
        let source = SourceItem::new("s", "x");
        let router = Router::new(cfg).unwrap();
        let providers = ep.providers(0.0);
        let d = router.route_with_seed(&source, &providers, &PassthroughScorer, ep.seed).unwrap();
        let all = router.select_all(&source, &providers, &PassthroughScorer, Some(ep.seed)).unwrap();
        prop_assert_eq!(d.terminal_case, TerminalCase::Exhausted);
        prop_assert_eq!(&d.chosen, &all.chosen);
        prop_assert_eq!(all.queries_used, 2 + ep.prompts.len());
    }

    #[test]
    fn monotone_query_count(ep in episode(), d1 in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let lo = route(&ep, ep.config(0.05, -0.05, d1), 0.0);
        let hi = route(&ep, ep.config(0.05, -0.05, d1 + extra), 0.0);
        prop_assert!(hi.queries_used <= lo.queries_used, "{} > {}", hi.queries_used, lo.queries_used);
    }

    #[test]
    fn determinism(ep in episode()) {
        let cfg = ep.config(0.05, -0.05, 0.2);
        let a = serde_json::to_string(&route(&ep, cfg.clone(), 0.0)).unwrap();
        let b = serde_json::to_string(&route(&ep, cfg, 0.0)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn boundary_pair_rejects_bad_orientation(u in -1.0f64..0.0, l in 0.0f64..1.0) {
        prop_assert!(BoundaryPair::new(u, l).is_err());
    }
}

use std::collections::BTreeSet;

use proptest::prelude::*;

use admit::engine::{allocate, run_batch, Allocation, BatchConfig, SamplingPlan};
use admit::gate::admissible;
use admit::pcac::{self, dominance_frontier, CandidateEntry};
use admit::scenario::{default_partition, enumerate_strata, world_prob, wrap_with_intervention, RegimeSwitchConfig};
use admit::stats::{CvarConvention, Obs, Sample};
use admit::types::{
    Comparator, ConstraintSet, Criterion, Decision, Direction, EstimatorMode, GovernanceSpec,
    HardConstraint, Interval, MetricId, MetricVector, PolicySpec, TieRule, UtilityModel,
};

const METRICS: [MetricId; 4] = [MetricId::PViol, MetricId::Cvar, MetricId::EU, MetricId::VarU];

fn metric_vector() -> impl Strategy<Value = MetricVector> {
    // small grids make ties and exact threshold hits common
    (
        (0u32..20).prop_map(|v| f64::from(v) * 0.5),
        (0u32..10).prop_map(|v| f64::from(v) * 0.25),
        (0u32..11).prop_map(|v| f64::from(v) * 0.01),
        (0u32..12).prop_map(|v| 30.0 + f64::from(v) * 2.0),
        (0.0f64..1.0),
    )
        .prop_map(|(e_u, var_u, p_viol, cvar, spread)| MetricVector {
            e_u,
            var_u,
            p_viol,
            cvar,
            ci_e_u: Interval::new(e_u - spread, e_u + spread),
            ci_p_viol: Interval::new((p_viol - spread * 0.01).max(0.0), (p_viol + spread * 0.01).min(1.0)),
            ci_cvar: Interval::new(cvar - spread, cvar + spread),
            n: 1000,
            alpha: 0.05,
        })
}

fn candidates(max: usize) -> impl Strategy<Value = Vec<CandidateEntry>> {
    prop::collection::vec(metric_vector(), 0..=max).prop_map(|ms| {
        ms.into_iter()
            .enumerate()
            .map(|(i, m)| CandidateEntry::new(format!("c{i:02}"), m))
            .collect()
    })
}

fn hard_constraint() -> impl Strategy<Value = HardConstraint> {
    (0usize..4, any::<bool>(), 0u32..12).prop_map(|(m, le, t)| {
        let metric = METRICS[m];
        let threshold = match metric {
            MetricId::PViol => f64::from(t) * 0.01,
            MetricId::Cvar => 30.0 + f64::from(t) * 2.0,
            MetricId::EU => f64::from(t) * 0.8,
            MetricId::VarU => f64::from(t) * 0.2,
        };
        HardConstraint::new(metric, if le { Comparator::Le } else { Comparator::Ge }, threshold)
    })
}

fn criteria(max: usize) -> impl Strategy<Value = Vec<Criterion>> {
    (Just(METRICS.to_vec()).prop_shuffle(), 1..=max, prop::collection::vec(any::<bool>(), 4)).prop_map(
        |(order, k, dirs)| {
            order
                .into_iter()
                .take(k)
                .zip(dirs)
                .map(|(m, min)| Criterion::new(m, if min { Direction::Minimize } else { Direction::Maximize }))
                .collect()
        },
    )
}

fn governance() -> impl Strategy<Value = GovernanceSpec> {
    (prop::collection::vec(hard_constraint(), 0..4), criteria(4), any::<bool>()).prop_map(|(hard, crit, cons)| {
        let mode = if cons { EstimatorMode::ConservativeBound } else { EstimatorMode::Point };
        GovernanceSpec::new(hard, crit, TieRule::ByCandidateId, mode, 0.05, 0.95).unwrap()
    })
}

fn admissible_ids(c: &[CandidateEntry], g: &GovernanceSpec) -> BTreeSet<String> {
    c.iter()
        .filter(|e| admissible(&e.id, &e.metrics, g).unwrap().admissible)
        .map(|e| e.id.clone())
        .collect()
}

fn losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cvar_translation_equivariant(u in losses(), c in -50.0f64..50.0, alpha in 0.01f64..0.99) {
        let s = Sample::from_utilities(&u);
        let shifted = Sample::from_utilities(&u.iter().map(|x| x - c).collect::<Vec<_>>());
        for conv in [CvarConvention::FractionalTail, CvarConvention::ThresholdSet] {
            let a = s.cvar(alpha, conv).unwrap();
            let b = shifted.cvar(alpha, conv).unwrap();
            prop_assert!((b - (a + c)).abs() <= 1e-9 * (1.0 + a.abs() + c.abs()));
        }
    }

    #[test]
    fn cvar_positively_homogeneous(u in losses(), lambda in 0.01f64..100.0, alpha in 0.01f64..0.99) {
        let s = Sample::from_utilities(&u);
        let scaled = Sample::from_utilities(&u.iter().map(|x| x * lambda).collect::<Vec<_>>());
        for conv in [CvarConvention::FractionalTail, CvarConvention::ThresholdSet] {
            let a = s.cvar(alpha, conv).unwrap();
            let b = scaled.cvar(alpha, conv).unwrap();
            prop_assert!((b - lambda * a).abs() <= 1e-9 * lambda * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cvar_bounded_and_monotone(u in losses(), a1 in 0.01f64..0.99, a2 in 0.01f64..0.99) {
        let s = Sample::from_utilities(&u);
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let max_loss = u.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max);
        let mean_loss = -s.mean().unwrap();
        for conv in [CvarConvention::FractionalTail, CvarConvention::ThresholdSet] {
            let c_lo = s.cvar(lo, conv).unwrap();
            let c_hi = s.cvar(hi, conv).unwrap();
            prop_assert!(c_lo + 1e-9 >= c_hi);
            prop_assert!(c_lo <= max_loss + 1e-9);
            prop_assert!(c_hi + 1e-9 >= mean_loss);
        }
    }

    #[test]
    fn cvar_weighted_matches_replication(u in prop::collection::vec(-50.0f64..50.0, 1..30),
                                         w in prop::collection::vec(1u32..4, 30),
                                         alpha in 0.01f64..0.99) {
        // integer weights behave like repeated observations
        let weighted: Vec<Obs> = u.iter().zip(&w).map(|(&x, &k)| Obs { utility: x, weight: f64::from(k), violated: false, group: 0 }).collect();
        let repeated: Vec<f64> = u.iter().zip(&w).flat_map(|(&x, &k)| std::iter::repeat_n(x, k as usize)).collect();
        let a = Sample::new(weighted).unwrap();
        let b = Sample::from_utilities(&repeated);
        for conv in [CvarConvention::FractionalTail, CvarConvention::ThresholdSet] {
            prop_assert!((a.cvar(alpha, conv).unwrap() - b.cvar(alpha, conv).unwrap()).abs() < 1e-9);
        }
        prop_assert!((a.mean().unwrap() - b.mean().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tightening_never_grows_admissible_set(c in candidates(10), g in governance(), idx in 0usize..4, step in 0.0f64..5.0) {
        prop_assume!(!g.hard.is_empty());
        let i = idx % g.hard.len();
        let mut hard = g.hard.clone();
        hard[i].threshold += match hard[i].comparator { Comparator::Le => -step, Comparator::Ge => step };
        let tight = GovernanceSpec::new(hard, g.criteria_order.clone(), g.tie_rule, g.estimator_mode, g.alpha, g.confidence).unwrap();
        let before = admissible_ids(&c, &g);
        let after = admissible_ids(&c, &tight);
        prop_assert!(after.is_subset(&before));
    }

    #[test]
    fn compile_round_trips_and_is_sound(c in candidates(16), g in governance(), esc in prop::option::of(0usize..16), seed in any::<u64>()) {
        let esc_id = esc.filter(|&i| i < c.len()).map(|i| c[i].id.clone());
        let (decision, cert) = pcac::compile(&c, &g, esc_id.as_deref()).unwrap();
        prop_assert!(pcac::verify(&cert, &c, &g));
        prop_assert!(pcac::verify_bytes(&cert.to_canonical_bytes(), &c, &g));

        let a = admissible_ids(&c, &g);
        prop_assert_eq!(cert.admissible.iter().cloned().collect::<BTreeSet<_>>(), a.clone());
        let frontier: BTreeSet<String> = cert.frontier.iter().cloned().collect();
        prop_assert!(frontier.is_subset(&a));
        let primaries: Vec<&String> = a.iter().filter(|id| Some(id.as_str()) != esc_id.as_deref()).collect();
        match &decision {
            Decision::Act(id) => {
                prop_assert!(frontier.contains(id));
                prop_assert_eq!(cert.selected.as_ref(), Some(id));
                prop_assert!(Some(id.as_str()) != esc_id.as_deref());
            }
            Decision::Escalate => {
                prop_assert!(primaries.is_empty());
                prop_assert!(a.contains(esc_id.as_ref().unwrap()));
            }
            Decision::Abort => prop_assert!(primaries.is_empty()),
        }
        if !primaries.is_empty() {
            prop_assert!(!frontier.is_empty());
        }
        for entry in &c {
            let report = admissible(&entry.id, &entry.metrics, &g).unwrap();
            let sat = &cert.sat_vector[&entry.id];
            prop_assert_eq!(sat.len(), report.checks.len());
            for (s, k) in sat.iter().zip(&report.checks) {
                prop_assert_eq!(s.satisfied, k.satisfied);
                prop_assert_eq!(s.evaluated_value.to_bits(), k.evaluated_value.to_bits());
            }
        }

        // input order is irrelevant
        let mut shuffled = c.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let (_, again) = pcac::compile(&shuffled, &g, esc_id.as_deref()).unwrap();
        prop_assert_eq!(again.to_canonical_bytes(), cert.to_canonical_bytes());
    }

    #[test]
    fn frontier_matches_exhaustive_check(c in candidates(6), crit in criteria(3)) {
        let (frontier, witnesses) = dominance_frontier(&c, &crit);
        let dominates = |a: &MetricVector, b: &MetricVector| {
            crit.iter().all(|k| k.key(a) <= k.key(b)) && crit.iter().any(|k| k.key(a) < k.key(b))
        };
        let expected: BTreeSet<&str> = c
            .iter()
            .filter(|b| !c.iter().any(|a| a.id != b.id && dominates(&a.metrics, &b.metrics)))
            .map(|e| e.id.as_str())
            .collect();
        let got: BTreeSet<&str> = frontier.iter().map(|e| e.id.as_str()).collect();
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(witnesses.len() + frontier.len(), c.len());
        for w in &witnesses {
            let a = &c.iter().find(|e| e.id == w.dominator).unwrap().metrics;
            let b = &c.iter().find(|e| e.id == w.dominated).unwrap().metrics;
            prop_assert!(dominates(a, b));
            let first = crit.iter().find(|k| k.key(a) < k.key(b)).unwrap();
            prop_assert_eq!(first.metric, w.criterion);
        }
        if !c.is_empty() {
            prop_assert!(!frontier.is_empty());
        }
    }

    #[test]
    fn world_masses_sum_to_one(p in 0.0f64..=1.0, horizon in 1u32..60) {
        let cfg = RegimeSwitchConfig::new(p, horizon).unwrap();
        let total: f64 = cfg.worlds().map(|w| world_prob(&cfg, w).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let strata = enumerate_strata(&cfg, &default_partition(&cfg));
        if p > 0.0 && p < 1.0 && horizon >= 5 {
            let strata = strata.unwrap();
            prop_assert!((strata.iter().map(|s| s.probability).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn allocation_covers_every_stratum(n in 3u64..5000, equal in any::<bool>()) {
        let cfg = RegimeSwitchConfig::default();
        let strata = enumerate_strata(&cfg, &default_partition(&cfg)).unwrap();
        let how = if equal { Allocation::Equal } else { Allocation::Proportional };
        let counts = allocate(&strata, n, how).unwrap();
        prop_assert_eq!(counts.iter().sum::<u64>(), n);
        prop_assert!(counts.iter().all(|&k| k >= 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_detection_leaves_rollouts_unchanged(seed in any::<u64>(), latency in 0u32..25, stratified in any::<bool>()) {
        let cfg = RegimeSwitchConfig::default();
        let u = UtilityModel::default();
        let c = ConstraintSet::default();
        let mut batch = BatchConfig::naive(500, seed);
        if stratified {
            batch.sampling_plan = SamplingPlan::Stratified { partition: default_partition(&cfg), allocation: Allocation::Proportional };
        }
        let base = PolicySpec::always_aggressive("a");
        let wrapped = wrap_with_intervention(&base, 0.0, latency).unwrap();
        let x = run_batch(&base, &cfg, &u, &batch, &c).unwrap();
        let y = run_batch(&wrapped, &cfg, &u, &batch, &c).unwrap();
        prop_assert_eq!(x.records, y.records);
    }

    #[test]
    fn halting_never_increases_loss_on_shared_worlds(seed in any::<u64>(), rho in 0.0f64..=1.0, latency in 0u32..5) {
        let cfg = RegimeSwitchConfig::default();
        let u = UtilityModel::default();
        let c = ConstraintSet::default();
        let batch = BatchConfig::naive(500, seed);
        let base = PolicySpec::always_aggressive("a");
        let wrapped = wrap_with_intervention(&base, rho, latency).unwrap();
        let x = run_batch(&base, &cfg, &u, &batch, &c).unwrap();
        let y = run_batch(&wrapped, &cfg, &u, &batch, &c).unwrap();
        for (a, b) in x.records.iter().zip(&y.records) {
            // same world; halting only removes adverse steps
            prop_assert_eq!(a.onset, b.onset);
            prop_assert!(b.loss <= a.loss);
        }
    }
}

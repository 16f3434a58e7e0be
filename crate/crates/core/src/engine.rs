//! Monte Carlo rollout execution.
//!
//! Record `i` of a batch draws its world (and sampled value parameters)
//! from `substream(master_seed, World, i)` and any policy noise from
//! `substream(master_seed, Policy(id), i)`. Records are produced in
//! parallel and collected in index order, so the output is bit-identical
//! for any thread count.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::scenario::{
    check_absolute_continuity, enumerate_strata, importance_weight, sample_world, OnsetRange,
    RegimeSwitchConfig, Stratum,
};
use crate::types::{
    utility_of, ActionId, ConstraintSet, PolicySpec, Regime, StepRecord, Trajectory,
    UtilityModel, WorldRealization,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MAPAI_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    #[default]
    Proportional,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingPlan {
    #[default]
    Naive,
    Stratified {
        partition: Vec<OnsetRange>,
        allocation: Allocation,
    },
    Importance {
        proposal_p: f64,
    },
}

impl SamplingPlan {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingPlan::Naive => "naive",
            SamplingPlan::Stratified { .. } => "stratified",
            SamplingPlan::Importance { .. } => "importance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Fixed,
    /// Draw value parameters per record from the utility model's declared
    /// distribution, jointly with the world.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub n: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub sampling_plan: SamplingPlan,
    #[serde(default)]
    pub theta_mode: ThetaMode,
}

impl BatchConfig {
    pub fn naive(n: u64, master_seed: u64) -> Self {
        BatchConfig {
            n,
            master_seed,
            sampling_plan: SamplingPlan::Naive,
            theta_mode: ThetaMode::Fixed,
        }
    }
}

/// Trajectory-level summary of one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub utility: f64,
    pub loss: f64,
    pub violated: bool,
    pub weight: f64,
    /// Index into the provenance strata, for stratified batches.
    pub stratum: Option<u32>,
    pub onset: WorldRealization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub policy_id: String,
    pub scenario: RegimeSwitchConfig,
    pub batch: BatchConfig,
    pub constraints: ConstraintSet,
    pub proposal: Option<RegimeSwitchConfig>,
    pub strata: Vec<Stratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSet {
    pub records: Vec<OutcomeRecord>,
    pub provenance: Provenance,
}

impl OutcomeSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.provenance.proposal.is_some()
    }

    pub fn is_stratified(&self) -> bool {
        !self.provenance.strata.is_empty()
    }
}

/// Reads the worker cap from `MAPAI_THREADS`.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn step_reward(regime: Regime, action: ActionId, theta: &crate::types::Theta) -> f64 {
    match (regime, action) {
        (_, ActionId::Defer) => 0.0,
        (Regime::Normal, ActionId::Aggressive) => theta.r_aggressive_normal,
        (Regime::Normal, ActionId::Conservative) => theta.r_conservative_normal,
        (Regime::Adverse, _) => theta.r_adverse,
    }
}

/// Rolls one policy out on one world. The stream is consumed only by
/// oversight layers, one uniform per layer per eligible Adverse step.
pub fn rollout<R: Rng + ?Sized>(
    policy: &PolicySpec,
    world: WorldRealization,
    utility: &UtilityModel,
    horizon: u32,
    rng: &mut R,
) -> Result<Trajectory> {
    if !world.is_valid_for(horizon) {
        return Err(Error::InvalidWorld(format!(
            "onset {world} outside horizon {horizon}"
        )));
    }
    let theta = &utility.theta;
    let action = policy.base_action();
    let layers = policy.intervention_layers();
    let onset = world.onset_step();
    let mut steps = Vec::with_capacity(horizon as usize);
    let mut halted_at = None;

    for t in 0..horizon {
        let regime = world.regime_at(t);
        let mut reward = step_reward(regime, action, theta);
        if onset == Some(t) && action == ActionId::Aggressive {
            reward += theta.onset_penalty_aggressive;
        }
        steps.push(StepRecord {
            step: t,
            regime,
            action,
            reward,
        });

        if let Some(k) = onset {
            let mut detected = false;
            for &(rho, latency) in &layers {
                if t >= k.saturating_add(latency) {
                    let u: f64 = rng.random();
                    detected |= u < rho;
                }
            }
            if detected {
                halted_at = Some(t + 1);
                break;
            }
        }
    }
    Ok(Trajectory { steps, halted_at })
}

fn validate_common(
    policy: &PolicySpec,
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
    batch: &BatchConfig,
    constraints: &ConstraintSet,
) -> Result<()> {
    policy.validate()?;
    cfg.validate()?;
    utility.validate()?;
    constraints.validate()?;
    if batch.n == 0 {
        return Err(Error::InvalidConfig("batch size n must be at least 1".into()));
    }
    if batch.theta_mode == ThetaMode::Sampled && utility.theta_distribution.is_none() {
        return Err(Error::InvalidConfig(
            "theta_mode = sampled requires utility.theta_distribution".into(),
        ));
    }
    Ok(())
}

/// Per-stratum record counts summing to `n`, each at least one.
pub fn allocate(strata: &[Stratum], n: u64, allocation: Allocation) -> Result<Vec<u64>> {
    let s = strata.len() as u64;
    if n < s {
        return Err(Error::InvalidConfig(format!(
            "stratified batch needs n >= {s} (one record per stratum), got {n}"
        )));
    }
    let counts = match allocation {
        Allocation::Equal => (0..s).map(|i| n / s + u64::from(i < n % s)).collect(),
        Allocation::Proportional => {
            // Largest remainder on top of a one-record floor.
            let spare = n - s;
            let raw: Vec<f64> = strata.iter().map(|st| st.probability * spare as f64).collect();
            let mut counts: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
            let mut left = spare - counts.iter().sum::<u64>();
            let mut order: Vec<usize> = (0..strata.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = raw[a] - raw[a].floor();
                let fb = raw[b] - raw[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            for &i in order.iter().cycle() {
                if left == 0 {
                    break;
                }
                counts[i] += 1;
                left -= 1;
            }
            counts.iter().map(|c| c + 1).collect()
        }
    };
    Ok(counts)
}

enum WorldSource<'a> {
    Base,
    Proposal(&'a RegimeSwitchConfig),
    Strata { strata: &'a [Stratum], bounds: Vec<u64> },
}

#[allow(clippy::too_many_arguments)]
fn generate(
    policy: &PolicySpec,
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
    batch: &BatchConfig,
    constraints: &ConstraintSet,
    source: &WorldSource<'_>,
) -> Result<Vec<OutcomeRecord>> {
    let seed = batch.master_seed;
    let make = |i: u64| -> Result<OutcomeRecord> {
        let mut world_rng = substream(seed, Domain::World, i);
        let (world, weight, stratum) = match source {
            WorldSource::Base => (sample_world(cfg, &mut world_rng), 1.0, None),
            WorldSource::Proposal(q) => {
                let w = sample_world(q, &mut world_rng);
                (w, importance_weight(cfg, q, w)?, None)
            }
            WorldSource::Strata { strata, bounds } => {
                let s = bounds.partition_point(|&b| b <= i);
                (strata[s].sample_conditional(cfg, &mut world_rng), 1.0, Some(s as u32))
            }
        };
        let sampled;
        let model = match (batch.theta_mode, &utility.theta_distribution) {
            (ThetaMode::Sampled, Some(dist)) => {
                sampled = UtilityModel::with_theta(dist.sample(&utility.theta, &mut world_rng));
                &sampled
            }
            _ => utility,
        };
        let mut policy_rng = substream(seed, Domain::Policy(&policy.id), i);
        let traj = rollout(policy, world, model, cfg.horizon, &mut policy_rng)?;
        let u = utility_of(&traj);
        Ok(OutcomeRecord {
            utility: u,
            loss: -u,
            violated: constraints.violated_by_utility(u),
            weight,
            stratum,
            onset: world,
        })
    };
    (0..batch.n).into_par_iter().map(make).collect()
}

/// Evaluates one policy under the batch's sampling plan.
pub fn run_batch(
    policy: &PolicySpec,
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
    batch: &BatchConfig,
    constraints: &ConstraintSet,
) -> Result<OutcomeSet> {
    validate_common(policy, cfg, utility, batch, constraints)?;
    match &batch.sampling_plan {
        SamplingPlan::Naive => {
            let records = generate(policy, cfg, utility, batch, constraints, &WorldSource::Base)?;
            Ok(OutcomeSet {
                records,
                provenance: Provenance {
                    policy_id: policy.id.clone(),
                    scenario: *cfg,
                    batch: batch.clone(),
                    constraints: constraints.clone(),
                    proposal: None,
                    strata: Vec::new(),
                },
            })
        }
        SamplingPlan::Importance { proposal_p } => {
            let proposal = RegimeSwitchConfig::new(*proposal_p, cfg.horizon)?;
            run_importance(policy, cfg, &proposal, utility, batch, constraints)
        }
        SamplingPlan::Stratified {
            partition,
            allocation,
        } => {
            let strata = enumerate_strata(cfg, partition)?;
            let counts = allocate(&strata, batch.n, *allocation)?;
            let bounds: Vec<u64> = counts
                .iter()
                .scan(0u64, |acc, c| {
                    *acc += c;
                    Some(*acc)
                })
                .collect();
            let source = WorldSource::Strata {
                strata: &strata,
                bounds,
            };
            let records = generate(policy, cfg, utility, batch, constraints, &source)?;
            Ok(OutcomeSet {
                records,
                provenance: Provenance {
                    policy_id: policy.id.clone(),
                    scenario: *cfg,
                    batch: batch.clone(),
                    constraints: constraints.clone(),
                    proposal: None,
                    strata,
                },
            })
        }
    }
}

/// Evaluates several policies on shared worlds (common random numbers).
pub fn run_paired(
    policies: &[PolicySpec],
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
    batch: &BatchConfig,
    constraints: &ConstraintSet,
) -> Result<BTreeMap<String, OutcomeSet>> {
    if policies.is_empty() {
        return Err(Error::InvalidConfig("no policies to evaluate".into()));
    }
    let mut out = BTreeMap::new();
    for p in policies {
        if out.contains_key(&p.id) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
        // World streams never depend on the policy id, so every set sees
        // the same world sequence.
        out.insert(p.id.clone(), run_batch(p, cfg, utility, batch, constraints)?);
    }
    Ok(out)
}

/// Draws worlds from `proposal` and weights each record by the likelihood
/// ratio against `base`.
pub fn run_importance(
    policy: &PolicySpec,
    base: &RegimeSwitchConfig,
    proposal: &RegimeSwitchConfig,
    utility: &UtilityModel,
    batch: &BatchConfig,
    constraints: &ConstraintSet,
) -> Result<OutcomeSet> {
    validate_common(policy, base, utility, batch, constraints)?;
    proposal.validate()?;
    if proposal.horizon != base.horizon {
        return Err(Error::HorizonMismatch {
            world: proposal.horizon,
            requested: base.horizon,
        });
    }
    check_absolute_continuity(base, proposal)?;
    let records = generate(
        policy,
        base,
        utility,
        batch,
        constraints,
        &WorldSource::Proposal(proposal),
    )?;
    let mut batch = batch.clone();
    batch.sampling_plan = SamplingPlan::Importance {
        proposal_p: proposal.p,
    };
    Ok(OutcomeSet {
        records,
        provenance: Provenance {
            policy_id: policy.id.clone(),
            scenario: *base,
            batch,
            constraints: constraints.clone(),
            proposal: Some(*proposal),
            strata: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_partition, wrap_with_intervention, world_prob};
    use crate::types::Theta;

    fn defaults() -> (RegimeSwitchConfig, UtilityModel, ConstraintSet) {
        (
            RegimeSwitchConfig::default(),
            UtilityModel::default(),
            ConstraintSet::default(),
        )
    }

    fn roll(policy: &PolicySpec, world: WorldRealization) -> Trajectory {
        let mut rng = substream(0, Domain::Policy(&policy.id), 0);
        rollout(policy, world, &UtilityModel::default(), 20, &mut rng).unwrap()
    }

    #[test]
    fn rollout_reward_examples() {
        let a = PolicySpec::always_aggressive("a");
        let b = PolicySpec::always_conservative("b");
        let t = roll(&a, WorldRealization::Never);
        assert!((utility_of(&t) - 24.0).abs() < 1e-12);
        let t = roll(&a, WorldRealization::Onset(3));
        assert!((utility_of(&t) + 40.4).abs() < 1e-12);
        assert!(ConstraintSet::default().violated_by_utility(utility_of(&t)));
        let t = roll(&b, WorldRealization::Onset(0));
        assert_eq!(utility_of(&t), -40.0);
        assert!(ConstraintSet::default().violated_by_utility(-40.0));
        let t = roll(&a, WorldRealization::Onset(0));
        assert_eq!(utility_of(&t), -50.0);
        t.validate(WorldRealization::Onset(0)).unwrap();
    }

    #[test]
    fn defer_earns_nothing() {
        let d = PolicySpec::always_defer("d");
        for w in RegimeSwitchConfig::default().worlds() {
            let t = roll(&d, w);
            assert_eq!(utility_of(&t), 0.0);
        }
    }

    #[test]
    fn rollout_rejects_out_of_horizon_world() {
        let a = PolicySpec::always_aggressive("a");
        let mut rng = substream(0, Domain::World, 0);
        assert!(rollout(&a, WorldRealization::Onset(20), &UtilityModel::default(), 20, &mut rng).is_err());
    }

    #[test]
    fn certain_detection_halts_after_onset_step() {
        let a = PolicySpec::always_aggressive("a");
        let w = wrap_with_intervention(&a, 1.0, 0).unwrap();
        let t = roll(&w, WorldRealization::Onset(0));
        assert_eq!(t.len(), 1);
        assert_eq!(t.halted_at, Some(1));
        assert_eq!(utility_of(&t), -12.0);
    }

    #[test]
    fn latency_delays_halt() {
        let a = PolicySpec::always_aggressive("a");
        let w = wrap_with_intervention(&a, 1.0, 5).unwrap();
        for k in 0..=14 {
            let t = roll(&w, WorldRealization::Onset(k));
            let adverse = t.steps.iter().filter(|s| s.regime == Regime::Adverse).count();
            assert_eq!(adverse, 6, "onset {k}");
        }
        // late onsets run out of horizon before the gate opens
        let t = roll(&w, WorldRealization::Onset(17));
        assert_eq!(t.len(), 20);
        assert_eq!(t.halted_at, None);
    }

    #[test]
    fn zero_detection_matches_base() {
        let (cfg, u, c) = defaults();
        let a = PolicySpec::always_aggressive("pi_A");
        let w = wrap_with_intervention(&a, 0.0, 0).unwrap();
        let batch = BatchConfig::naive(2000, 11);
        let base = run_batch(&a, &cfg, &u, &batch, &c).unwrap();
        let wrapped = run_batch(&w, &cfg, &u, &batch, &c).unwrap();
        assert_eq!(base.records, wrapped.records);
    }

    #[test]
    fn larger_detection_never_lengthens() {
        let a = PolicySpec::always_aggressive("a");
        for k in 0..20 {
            for seed in 0..50u64 {
                let mut prev = usize::MAX;
                for rho in [0.0, 0.1, 0.25, 0.5, 0.9, 1.0] {
                    let p = PolicySpec::new(
                        "w",
                        crate::types::PolicyRule::Intervened {
                            base: Box::new(a.clone()),
                            detect_prob: rho,
                            latency: 1,
                        },
                    )
                    .unwrap();
                    let mut rng = substream(seed, Domain::Policy("w"), 0);
                    let t = rollout(&p, WorldRealization::Onset(k), &UtilityModel::default(), 20, &mut rng).unwrap();
                    assert!(t.len() <= prev);
                    prev = t.len();
                }
            }
        }
    }

    #[test]
    fn batch_of_one_reduces_to_rollout() {
        let (cfg, u, c) = defaults();
        let a = PolicySpec::always_aggressive("pi_A");
        let set = run_batch(&a, &cfg, &u, &BatchConfig::naive(1, 5), &c).unwrap();
        assert_eq!(set.len(), 1);
        let world = sample_world(&cfg, &mut substream(5, Domain::World, 0));
        let t = rollout(&a, world, &u, 20, &mut substream(5, Domain::Policy("pi_A"), 0)).unwrap();
        assert_eq!(set.records[0].onset, world);
        assert_eq!(set.records[0].utility, utility_of(&t));
    }

    #[test]
    fn batches_are_deterministic_across_threads() {
        let (cfg, u, c) = defaults();
        let a = PolicySpec::always_aggressive("pi_A");
        let w = wrap_with_intervention(&a, 0.3, 1).unwrap();
        let batch = BatchConfig::naive(5000, 99);
        let one = with_threads(Some(1), || run_batch(&w, &cfg, &u, &batch, &c).unwrap());
        let many = with_threads(Some(7), || run_batch(&w, &cfg, &u, &batch, &c).unwrap());
        assert_eq!(one, many);
        assert_eq!(one, run_batch(&w, &cfg, &u, &batch, &c).unwrap());
    }

    #[test]
    fn paired_sets_share_worlds() {
        let (cfg, u, c) = defaults();
        let ps = [PolicySpec::always_aggressive("pi_A"), PolicySpec::always_conservative("pi_B")];
        let batch = BatchConfig::naive(3000, 3);
        let sets = run_paired(&ps, &cfg, &u, &batch, &c).unwrap();
        let a = &sets["pi_A"];
        let b = &sets["pi_B"];
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.onset == y.onset));

        let dup = [PolicySpec::always_aggressive("x"), PolicySpec::always_defer("x")];
        assert!(matches!(run_paired(&dup, &cfg, &u, &batch, &c), Err(Error::DuplicateId(_))));

        let single = run_paired(&ps[..1], &cfg, &u, &batch, &c).unwrap();
        assert_eq!(single["pi_A"], run_batch(&ps[0], &cfg, &u, &batch, &c).unwrap());
    }

    #[test]
    fn importance_identity_proposal_has_unit_weights() {
        let (cfg, u, c) = defaults();
        let b = PolicySpec::always_conservative("pi_B");
        let batch = BatchConfig::naive(2000, 1);
        let is = run_importance(&b, &cfg, &cfg, &u, &batch, &c).unwrap();
        assert!(is.records.iter().all(|r| r.weight == 1.0));
        let naive = run_batch(&b, &cfg, &u, &batch, &c).unwrap();
        let strip = |s: &OutcomeSet| s.records.clone();
        assert_eq!(strip(&is), strip(&naive));
    }

    #[test]
    fn importance_rejects_singular_proposal() {
        let (cfg, u, c) = defaults();
        let b = PolicySpec::always_conservative("pi_B");
        let prop = RegimeSwitchConfig::new(1.0, 20).unwrap();
        let r = run_importance(&b, &cfg, &prop, &u, &BatchConfig::naive(10, 1), &c);
        assert!(matches!(r, Err(Error::AbsoluteContinuity(_))));
    }

    #[test]
    fn importance_weights_mean_one_under_proposal() {
        let (cfg, u, c) = defaults();
        let b = PolicySpec::always_conservative("pi_B");
        let prop = RegimeSwitchConfig::new(0.1, 20).unwrap();
        let set = run_importance(&b, &cfg, &prop, &u, &BatchConfig::naive(100_000, 8), &c).unwrap();
        let n = set.len() as f64;
        let ws: Vec<f64> = set.records.iter().map(|r| r.weight).collect();
        assert!(ws.iter().all(|&w| w > 0.0));
        let mean = ws.iter().sum::<f64>() / n;
        let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean weight {mean}, se {se}");
        let never = set.records.iter().find(|r| r.onset == WorldRealization::Never).unwrap();
        assert!((never.weight - 5.491_25).abs() < 1e-5);
    }

    #[test]
    fn stratified_allocation_and_membership() {
        let (cfg, u, c) = defaults();
        let partition = default_partition(&cfg);
        let strata = enumerate_strata(&cfg, &partition).unwrap();
        let counts = allocate(&strata, 1000, Allocation::Proportional).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 1000);
        assert!(counts.iter().all(|&c| c >= 1));
        let eq = allocate(&strata, 10, Allocation::Equal).unwrap();
        assert_eq!(eq, vec![4, 3, 3]);
        assert!(allocate(&strata, 2, Allocation::Equal).is_err());

        let batch = BatchConfig {
            n: 1000,
            master_seed: 4,
            sampling_plan: SamplingPlan::Stratified {
                partition,
                allocation: Allocation::Proportional,
            },
            theta_mode: ThetaMode::Fixed,
        };
        let set = run_batch(&PolicySpec::always_aggressive("a"), &cfg, &u, &batch, &c).unwrap();
        for r in &set.records {
            let s = r.stratum.unwrap() as usize;
            assert!(set.provenance.strata[s].onset_range.contains(r.onset));
        }
    }

    #[test]
    fn sampled_theta_requires_distribution() {
        let (cfg, u, c) = defaults();
        let mut batch = BatchConfig::naive(10, 1);
        batch.theta_mode = ThetaMode::Sampled;
        let a = PolicySpec::always_aggressive("a");
        assert!(run_batch(&a, &cfg, &u, &batch, &c).is_err());

        let u = UtilityModel {
            theta: Theta::default(),
            theta_distribution: Some(crate::types::ThetaDistribution {
                r_aggressive_normal: Some(crate::types::UniformRange { lo: 1.0, hi: 1.4 }),
                ..Default::default()
            }),
        };
        let set = run_batch(&a, &cfg, &u, &batch, &c).unwrap();
        let never: Vec<_> = set.records.iter().filter(|r| r.onset == WorldRealization::Never).collect();
        assert!(never.iter().all(|r| r.utility >= 20.0 && r.utility <= 28.0));
    }

    #[test]
    fn naive_violation_fraction_tracks_mass() {
        let (cfg, u, c) = defaults();
        let b = PolicySpec::always_conservative("pi_B");
        let p0 = world_prob(&cfg, WorldRealization::Onset(0)).unwrap();
        for n in [1_000u64, 10_000, 100_000] {
            let mut hits = 0;
            let trials = if n == 100_000 { 20 } else { 100 };
            for seed in 0..trials {
                let set = run_batch(&b, &cfg, &u, &BatchConfig::naive(n, seed), &c).unwrap();
                let frac = set.records.iter().filter(|r| r.violated).count() as f64 / n as f64;
                let se = (p0 * (1.0 - p0) / n as f64).sqrt();
                if (frac - p0).abs() <= 4.0 * se {
                    hits += 1;
                }
            }
            assert!(hits as f64 >= 0.95 * trials as f64, "n={n}: {hits}/{trials}");
        }
    }
}

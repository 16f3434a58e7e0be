//! Scenario generation for the two-regime environment.
//!
//! The latent regime starts Normal and, at each step, may switch to an
//! absorbing Adverse regime with probability `p`. A world is fully
//! described by its onset step, so worlds are drawn directly from the
//! truncated geometric mass function
//!
//! ```text
//! P(onset = k) = (1 - p)^k * p     for k in 0..T
//! P(never)     = (1 - p)^T
//! ```
//!
//! using one uniform per world.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{PolicyRule, PolicySpec, WorldRealization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSwitchConfig {
    pub p: f64,
    pub horizon: u32,
}

impl Default for RegimeSwitchConfig {
    fn default() -> Self {
        RegimeSwitchConfig { p: 0.02, horizon: 20 }
    }
}

impl RegimeSwitchConfig {
    pub fn new(p: f64, horizon: u32) -> Result<Self> {
        let cfg = RegimeSwitchConfig { p, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::OutOfRange(format!("p = {} not in [0, 1]", self.p)));
        }
        if self.horizon == 0 {
            return Err(Error::OutOfRange("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// All worlds in canonical order: onsets `0..T`, then `Never`.
    pub fn worlds(&self) -> impl Iterator<Item = WorldRealization> {
        (0..self.horizon)
            .map(WorldRealization::Onset)
            .chain(std::iter::once(WorldRealization::Never))
    }
}

/// Exact probability of a world under the generator.
pub fn world_prob(cfg: &RegimeSwitchConfig, world: WorldRealization) -> Result<f64> {
    let q = 1.0 - cfg.p;
    match world {
        WorldRealization::Onset(k) if k < cfg.horizon => Ok(q.powi(k as i32) * cfg.p),
        WorldRealization::Onset(k) => Err(Error::InvalidWorld(format!(
            "onset {k} outside horizon {}",
            cfg.horizon
        ))),
        WorldRealization::Never => Ok(q.powi(cfg.horizon as i32)),
    }
}

/// Draws a world by inverting the mass function on a single uniform.
pub fn sample_world<R: Rng + ?Sized>(cfg: &RegimeSwitchConfig, rng: &mut R) -> WorldRealization {
    let u: f64 = rng.random();
    inverse_cdf(cfg, u)
}

fn inverse_cdf(cfg: &RegimeSwitchConfig, u: f64) -> WorldRealization {
    if cfg.p <= 0.0 {
        return WorldRealization::Never;
    }
    if cfg.p >= 1.0 {
        return WorldRealization::Onset(0);
    }
    // smallest k with 1 - (1-p)^(k+1) > u
    let k = ((-u).ln_1p() / (-cfg.p).ln_1p()).floor();
    if k < f64::from(cfg.horizon) {
        WorldRealization::Onset(k as u32)
    } else {
        WorldRealization::Never
    }
}

/// Likelihood ratio `P_base(world) / P_proposal(world)`.
pub fn importance_weight(
    base: &RegimeSwitchConfig,
    proposal: &RegimeSwitchConfig,
    world: WorldRealization,
) -> Result<f64> {
    if base.horizon != proposal.horizon {
        return Err(Error::HorizonMismatch {
            world: proposal.horizon,
            requested: base.horizon,
        });
    }
    let pb = world_prob(base, world)?;
    let pq = world_prob(proposal, world)?;
    if pq == 0.0 {
        if pb == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::AbsoluteContinuity(world.to_string()));
    }
    Ok(pb / pq)
}

/// Checks that `proposal` dominates `base` on every world.
pub fn check_absolute_continuity(
    base: &RegimeSwitchConfig,
    proposal: &RegimeSwitchConfig,
) -> Result<()> {
    for w in base.worlds() {
        importance_weight(base, proposal, w)?;
    }
    Ok(())
}

/// A set of onset values, written in configs as a list of tokens:
/// integers, `"never"`, or inclusive ranges like `"4..19"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OnsetRange(BTreeSet<WorldRealization>);

impl OnsetRange {
    pub fn new(worlds: impl IntoIterator<Item = WorldRealization>) -> Self {
        OnsetRange(worlds.into_iter().collect())
    }

    /// Inclusive span of finite onsets.
    pub fn span(lo: u32, hi: u32) -> Self {
        OnsetRange::new((lo..=hi).map(WorldRealization::Onset))
    }

    pub fn never() -> Self {
        OnsetRange::new([WorldRealization::Never])
    }

    pub fn with_never(mut self) -> Self {
        self.0.insert(WorldRealization::Never);
        self
    }

    pub fn contains(&self, w: WorldRealization) -> bool {
        self.0.contains(&w)
    }

    pub fn iter(&self) -> impl Iterator<Item = WorldRealization> + '_ {
        self.0.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut run: Option<(u32, u32)> = None;
        for w in &self.0 {
            match (*w, run) {
                (WorldRealization::Onset(k), Some((lo, hi))) if k == hi + 1 => run = Some((lo, k)),
                (WorldRealization::Onset(k), prev) => {
                    if let Some(r) = prev {
                        out.push(render_run(r));
                    }
                    run = Some((k, k));
                }
                (WorldRealization::Never, prev) => {
                    if let Some(r) = prev {
                        out.push(render_run(r));
                    }
                    run = None;
                    out.push("never".into());
                }
            }
        }
        if let Some(r) = run {
            out.push(render_run(r));
        }
        out
    }

    fn parse_token(tok: &str, into: &mut BTreeSet<WorldRealization>) -> std::result::Result<(), String> {
        let tok = tok.trim();
        if tok.eq_ignore_ascii_case("never") {
            into.insert(WorldRealization::Never);
            return Ok(());
        }
        if let Some((a, b)) = tok.split_once("..") {
            let lo: u32 = a.trim().parse().map_err(|_| format!("bad range start in `{tok}`"))?;
            let hi: u32 = b.trim().parse().map_err(|_| format!("bad range end in `{tok}`"))?;
            if lo > hi {
                return Err(format!("empty range `{tok}`"));
            }
            into.extend((lo..=hi).map(WorldRealization::Onset));
            return Ok(());
        }
        let k: u32 = tok.parse().map_err(|_| format!("bad onset token `{tok}`"))?;
        into.insert(WorldRealization::Onset(k));
        Ok(())
    }
}

fn render_run((lo, hi): (u32, u32)) -> String {
    if lo == hi {
        lo.to_string()
    } else {
        format!("{lo}..{hi}")
    }
}

impl fmt::Display for OnsetRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.tokens().join(","))
    }
}

impl Serialize for OnsetRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OnsetRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Tok {
            Int(u32),
            Str(String),
        }
        let toks = Vec::<Tok>::deserialize(d)?;
        let mut set = BTreeSet::new();
        for t in toks {
            match t {
                Tok::Int(k) => {
                    set.insert(WorldRealization::Onset(k));
                }
                Tok::Str(s) => OnsetRange::parse_token(&s, &mut set).map_err(serde::de::Error::custom)?,
            }
        }
        Ok(OnsetRange(set))
    }
}

/// Default partition isolating the violation-prone early onsets:
/// `{never}, {0..3}, {4..T-1}`.
pub fn default_partition(cfg: &RegimeSwitchConfig) -> Vec<OnsetRange> {
    let t = cfg.horizon;
    let mut parts = vec![OnsetRange::never(), OnsetRange::span(0, 3.min(t - 1))];
    if t > 4 {
        parts.push(OnsetRange::span(4, t - 1));
    }
    parts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub id: String,
    pub probability: f64,
    pub onset_range: OnsetRange,
}

impl Stratum {
    /// Draws a world from the mass function restricted to this stratum.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        cfg: &RegimeSwitchConfig,
        rng: &mut R,
    ) -> WorldRealization {
        let u: f64 = rng.random();
        let target = u * self.probability;
        let mut acc = 0.0;
        let mut last = None;
        for w in self.onset_range.iter() {
            let m = world_prob(cfg, w).unwrap_or(0.0);
            if m == 0.0 {
                continue;
            }
            acc += m;
            last = Some(w);
            if target < acc {
                return w;
            }
        }
        last.expect("stratum has positive mass")
    }
}

/// Builds strata with exact probabilities from a partition of the world
/// space.
pub fn enumerate_strata(cfg: &RegimeSwitchConfig, partition: &[OnsetRange]) -> Result<Vec<Stratum>> {
    cfg.validate()?;
    if partition.is_empty() {
        return Err(Error::NotAPartition("no ranges given".into()));
    }
    let mut seen = BTreeSet::new();
    for r in partition {
        if r.is_empty() {
            return Err(Error::NotAPartition("empty range".into()));
        }
        for w in r.iter() {
            if !w.is_valid_for(cfg.horizon) {
                return Err(Error::NotAPartition(format!(
                    "onset {w} outside horizon {}",
                    cfg.horizon
                )));
            }
            if !seen.insert(w) {
                return Err(Error::NotAPartition(format!("onset {w} covered twice")));
            }
        }
    }
    if let Some(missing) = cfg.worlds().find(|w| !seen.contains(w)) {
        return Err(Error::NotAPartition(format!("onset {missing} not covered")));
    }
    let mut strata = Vec::with_capacity(partition.len());
    for r in partition {
        let probability: f64 = r.iter().map(|w| world_prob(cfg, w)).sum::<Result<f64>>()?;
        if probability <= 0.0 {
            return Err(Error::NotAPartition(format!("range {r} has zero probability")));
        }
        strata.push(Stratum {
            id: r.tokens().join(","),
            probability,
            onset_range: r.clone(),
        });
    }
    let total: f64 = strata.iter().map(|s| s.probability).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::NotAPartition(format!("probabilities sum to {total}")));
    }
    Ok(strata)
}

/// Wraps a policy with a probabilistic oversight gate that halts the
/// rollout once it detects the Adverse regime.
pub fn wrap_with_intervention(base: &PolicySpec, detect_prob: f64, latency: u32) -> Result<PolicySpec> {
    PolicySpec::new(
        format!("{}+oversight(rho={detect_prob},lat={latency})", base.id),
        PolicyRule::Intervened {
            base: Box::new(base.clone()),
            detect_prob,
            latency,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    fn cfg() -> RegimeSwitchConfig {
        RegimeSwitchConfig::default()
    }

    #[test]
    fn world_prob_examples() {
        let c = cfg();
        assert_eq!(world_prob(&c, WorldRealization::Onset(0)).unwrap(), 0.02);
        let p3 = world_prob(&c, WorldRealization::Onset(3)).unwrap();
        assert!((p3 - 0.01882384).abs() < 1e-15);
        let pn = world_prob(&c, WorldRealization::Never).unwrap();
        assert!((pn - 0.667_607_971_2).abs() < 1e-9);
        assert!(matches!(
            world_prob(&c, WorldRealization::Onset(20)),
            Err(Error::InvalidWorld(_))
        ));
    }

    #[test]
    fn mass_sums_to_one() {
        for &(p, t) in &[(0.02, 20), (0.0, 5), (1.0, 3), (0.37, 1), (0.5, 40)] {
            let c = RegimeSwitchConfig::new(p, t).unwrap();
            let total: f64 = c.worlds().map(|w| world_prob(&c, w).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "p={p} T={t}: {total}");
        }
    }

    #[test]
    fn degenerate_transition_probabilities() {
        let mut rng = substream(1, Domain::World, 0);
        let never = RegimeSwitchConfig::new(0.0, 20).unwrap();
        let always = RegimeSwitchConfig::new(1.0, 20).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_world(&never, &mut rng), WorldRealization::Never);
            assert_eq!(sample_world(&always, &mut rng), WorldRealization::Onset(0));
        }
    }

    #[test]
    fn inverse_cdf_matches_cumulative_mass() {
        // Walk the CDF directly and compare against the closed-form inverse.
        let c = cfg();
        for i in 0..10_000 {
            let u = (i as f64 + 0.5) / 10_000.0;
            let mut acc = 0.0;
            let mut expect = WorldRealization::Never;
            for k in 0..c.horizon {
                acc += world_prob(&c, WorldRealization::Onset(k)).unwrap();
                if u < acc {
                    expect = WorldRealization::Onset(k);
                    break;
                }
            }
            assert_eq!(inverse_cdf(&c, u), expect, "u = {u}");
        }
    }

    #[test]
    fn importance_weight_examples() {
        let base = cfg();
        let prop = RegimeSwitchConfig::new(0.1, 20).unwrap();
        for w in base.worlds() {
            assert_eq!(importance_weight(&base, &base, w).unwrap(), 1.0);
        }
        let w0 = importance_weight(&base, &prop, WorldRealization::Onset(0)).unwrap();
        assert!((w0 - 0.2).abs() < 1e-15);
        let wn = importance_weight(&base, &prop, WorldRealization::Never).unwrap();
        assert!((wn - (0.98f64 / 0.9).powi(20)).abs() < 1e-12);
        assert!((wn - 5.491_25).abs() < 1e-5);

        let zero = RegimeSwitchConfig::new(0.0, 20).unwrap();
        assert!(matches!(
            importance_weight(&base, &zero, WorldRealization::Onset(0)),
            Err(Error::AbsoluteContinuity(_))
        ));
        assert!(check_absolute_continuity(&base, &zero).is_err());
        let short = RegimeSwitchConfig::new(0.1, 10).unwrap();
        assert!(importance_weight(&base, &short, WorldRealization::Never).is_err());
    }

    #[test]
    fn strata_examples() {
        let c = cfg();
        let s = enumerate_strata(&c, &default_partition(&c)).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s[0].probability - 0.98f64.powi(20)).abs() < 1e-15);
        assert!((s[1].probability - 0.07763184).abs() < 1e-12);
        assert!((s[2].probability - 0.254_760_188_867_999_9).abs() < 1e-9);
        let total: f64 = s.iter().map(|x| x.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let all = enumerate_strata(&c, &[OnsetRange::span(0, 19).with_never()]).unwrap();
        assert_eq!(all.len(), 1);
        assert!((all[0].probability - 1.0).abs() < 1e-12);

        let two = enumerate_strata(&c, &[OnsetRange::span(0, 0), OnsetRange::span(1, 19).with_never()]).unwrap();
        assert!((two[0].probability - 0.02).abs() < 1e-15);
        assert!((two[1].probability - 0.98).abs() < 1e-12);
    }

    #[test]
    fn non_partitions_rejected() {
        let c = cfg();
        let overlap = [OnsetRange::span(0, 5), OnsetRange::span(5, 19).with_never()];
        assert!(matches!(enumerate_strata(&c, &overlap), Err(Error::NotAPartition(_))));
        let gap = [OnsetRange::span(0, 5), OnsetRange::never()];
        assert!(enumerate_strata(&c, &gap).is_err());
        let outside = [OnsetRange::span(0, 25).with_never()];
        assert!(enumerate_strata(&c, &outside).is_err());
    }

    #[test]
    fn conditional_samples_stay_in_range() {
        let c = cfg();
        let strata = enumerate_strata(&c, &default_partition(&c)).unwrap();
        for (si, s) in strata.iter().enumerate() {
            let mut counts = std::collections::BTreeMap::new();
            for i in 0..20_000u64 {
                let mut rng = substream(si as u64, Domain::World, i);
                let w = s.sample_conditional(&c, &mut rng);
                assert!(s.onset_range.contains(w));
                *counts.entry(w).or_insert(0u32) += 1;
            }
            // conditional frequency of the first member is near its renormalized mass
            let first = s.onset_range.iter().next().unwrap();
            let expected = world_prob(&c, first).unwrap() / s.probability;
            let got = f64::from(counts[&first]) / 20_000.0;
            let se = (expected * (1.0 - expected) / 20_000.0).sqrt();
            assert!((got - expected).abs() <= 4.0 * se + 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn onset_range_tokens_round_trip() {
        let r: OnsetRange = serde_json::from_str(r#"["never", "0..3", 7]"#).unwrap();
        assert!(r.contains(WorldRealization::Onset(2)));
        assert!(r.contains(WorldRealization::Never));
        assert!(!r.contains(WorldRealization::Onset(4)));
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"["0..3","7","never"]"#);
        assert!(serde_json::from_str::<OnsetRange>(r#"["5..2"]"#).is_err());
    }

    #[test]
    fn wrap_validates_probability() {
        let base = PolicySpec::always_aggressive("pi_A");
        assert!(wrap_with_intervention(&base, 1.2, 0).is_err());
        let w = wrap_with_intervention(&base, 0.5, 3).unwrap();
        assert_eq!(w.intervention_layers(), vec![(0.5, 3)]);
    }
}

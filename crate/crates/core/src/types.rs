//! Domain types shared across the crate: worlds, trajectories, policies,
//! utility parameters, constraints, metric vectors, governance and decisions.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One sampled world: the step at which the latent regime turns Adverse.
///
/// `Onset(k)` means `k` Normal steps precede the Adverse phase. `Never`
/// means the horizon elapses without a transition. Ordering places every
/// finite onset before `Never`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorldRealization {
    Onset(u32),
    Never,
}

impl WorldRealization {
    pub fn onset_step(self) -> Option<u32> {
        match self {
            WorldRealization::Onset(k) => Some(k),
            WorldRealization::Never => None,
        }
    }

    pub fn is_valid_for(self, horizon: u32) -> bool {
        match self {
            WorldRealization::Onset(k) => k < horizon,
            WorldRealization::Never => true,
        }
    }

    pub fn regime_at(self, step: u32) -> Regime {
        match self {
            WorldRealization::Onset(k) if step >= k => Regime::Adverse,
            _ => Regime::Normal,
        }
    }
}

impl fmt::Display for WorldRealization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldRealization::Onset(k) => write!(f, "{k}"),
            WorldRealization::Never => f.write_str("never"),
        }
    }
}

impl Serialize for WorldRealization {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WorldRealization::Onset(k) => s.serialize_u32(*k),
            WorldRealization::Never => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for WorldRealization {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(WorldRealization::Onset(k)),
            Raw::Str(s) if s.eq_ignore_ascii_case("never") => Ok(WorldRealization::Never),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected an onset step or \"never\", got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Normal,
    Adverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionId {
    Aggressive,
    Conservative,
    Defer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub regime: Regime,
    pub action: ActionId,
    pub reward: f64,
}

/// A rolled-out sequence of steps. The onset penalty, when incurred, is
/// already folded into the onset step's reward.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub halted_at: Option<u32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks step numbering and regime consistency against a world.
    pub fn validate(&self, world: WorldRealization) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.step as usize != i {
                return Err(Error::InvalidWorld(format!(
                    "step index {} found at position {i}",
                    s.step
                )));
            }
            if s.regime != world.regime_at(s.step) {
                return Err(Error::InvalidWorld(format!(
                    "step {} has regime {:?} but onset is {world}",
                    s.step, s.regime
                )));
            }
        }
        if let Some(h) = self.halted_at {
            if h as usize != self.steps.len() {
                return Err(Error::InvalidWorld(format!(
                    "halted_at {h} does not match {} executed steps",
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }
}

/// Cumulative utility of a trajectory: the plain sum of its step rewards.
pub fn utility_of(trajectory: &Trajectory) -> f64 {
    trajectory.steps.iter().map(|s| s.reward).sum()
}

/// Loss is negated utility.
pub fn loss_of(trajectory: &Trajectory) -> f64 {
    -utility_of(trajectory)
}

/// A candidate decision policy with a stable identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub id: String,
    pub rule: PolicyRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyRule {
    AlwaysAggressive,
    AlwaysConservative,
    AlwaysDefer,
    /// Oversight wrapper: from `latency` steps after onset, every step
    /// detects independently with probability `detect_prob`; detection
    /// halts the rollout.
    Intervened {
        base: Box<PolicySpec>,
        detect_prob: f64,
        latency: u32,
    },
}

impl PolicySpec {
    pub fn new(id: impl Into<String>, rule: PolicyRule) -> Result<Self> {
        let spec = PolicySpec {
            id: id.into(),
            rule,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn always_aggressive(id: impl Into<String>) -> Self {
        PolicySpec {
            id: id.into(),
            rule: PolicyRule::AlwaysAggressive,
        }
    }

    pub fn always_conservative(id: impl Into<String>) -> Self {
        PolicySpec {
            id: id.into(),
            rule: PolicyRule::AlwaysConservative,
        }
    }

    pub fn always_defer(id: impl Into<String>) -> Self {
        PolicySpec {
            id: id.into(),
            rule: PolicyRule::AlwaysDefer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidConfig("policy id must be nonempty".into()));
        }
        if let PolicyRule::Intervened {
            base, detect_prob, ..
        } = &self.rule
        {
            if !(0.0..=1.0).contains(detect_prob) {
                return Err(Error::OutOfRange(format!(
                    "policy `{}`: detect_prob {detect_prob} not in [0, 1]",
                    self.id
                )));
            }
            base.validate()?;
        }
        Ok(())
    }

    /// The action chosen by the innermost deterministic rule.
    pub fn base_action(&self) -> ActionId {
        match &self.rule {
            PolicyRule::AlwaysAggressive => ActionId::Aggressive,
            PolicyRule::AlwaysConservative => ActionId::Conservative,
            PolicyRule::AlwaysDefer => ActionId::Defer,
            PolicyRule::Intervened { base, .. } => base.base_action(),
        }
    }

    /// Oversight layers from outermost to innermost as `(detect_prob, latency)`.
    pub fn intervention_layers(&self) -> Vec<(f64, u32)> {
        let mut layers = Vec::new();
        let mut cur = self;
        while let PolicyRule::Intervened {
            base,
            detect_prob,
            latency,
        } = &cur.rule
        {
            layers.push((*detect_prob, *latency));
            cur = base;
        }
        layers
    }
}

/// Value parameters of the two-regime utility table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theta {
    pub r_aggressive_normal: f64,
    pub r_conservative_normal: f64,
    pub r_adverse: f64,
    pub onset_penalty_aggressive: f64,
}

impl Default for Theta {
    fn default() -> Self {
        Theta {
            r_aggressive_normal: 1.2,
            r_conservative_normal: 1.0,
            r_adverse: -2.0,
            onset_penalty_aggressive: -10.0,
        }
    }
}

impl Theta {
    fn validate(&self) -> Result<()> {
        let all = [
            self.r_aggressive_normal,
            self.r_conservative_normal,
            self.r_adverse,
            self.onset_penalty_aggressive,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("utility parameters must be finite".into()))
        }
    }
}

/// Closed interval used for uniform value-uncertainty draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

/// Optional uniform distributions per value parameter. Parameters without
/// a declared range stay at their fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaDistribution {
    pub r_aggressive_normal: Option<UniformRange>,
    pub r_conservative_normal: Option<UniformRange>,
    pub r_adverse: Option<UniformRange>,
    pub onset_penalty_aggressive: Option<UniformRange>,
}

impl ThetaDistribution {
    fn ranges(&self) -> [Option<UniformRange>; 4] {
        [
            self.r_aggressive_normal,
            self.r_conservative_normal,
            self.r_adverse,
            self.onset_penalty_aggressive,
        ]
    }

    fn validate(&self) -> Result<()> {
        for r in self.ranges().into_iter().flatten() {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(Error::InvalidConfig(format!(
                    "theta range [{}, {}] is not a finite interval",
                    r.lo, r.hi
                )));
            }
        }
        Ok(())
    }

    /// Draws one parameter vector; consumes exactly four uniforms so that
    /// streams stay aligned regardless of which ranges are declared.
    pub fn sample<R: rand::Rng + ?Sized>(&self, fixed: &Theta, rng: &mut R) -> Theta {
        let mut draw = |range: Option<UniformRange>, v: f64| {
            let u: f64 = rng.random();
            match range {
                Some(r) => r.lo + u * (r.hi - r.lo),
                None => v,
            }
        };
        Theta {
            r_aggressive_normal: draw(self.r_aggressive_normal, fixed.r_aggressive_normal),
            r_conservative_normal: draw(self.r_conservative_normal, fixed.r_conservative_normal),
            r_adverse: draw(self.r_adverse, fixed.r_adverse),
            onset_penalty_aggressive: draw(
                self.onset_penalty_aggressive,
                fixed.onset_penalty_aggressive,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityModel {
    pub theta: Theta,
    pub theta_distribution: Option<ThetaDistribution>,
}

impl UtilityModel {
    pub fn with_theta(theta: Theta) -> Self {
        UtilityModel {
            theta,
            theta_distribution: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if let Some(d) = &self.theta_distribution {
            d.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintRule {
    /// Fires when cumulative utility is at or below the threshold.
    CumulativeUtilityAtMost { threshold: f64 },
}

impl ConstraintRule {
    pub fn fires(&self, utility: f64) -> bool {
        match *self {
            ConstraintRule::CumulativeUtilityAtMost { threshold } => utility <= threshold,
        }
    }
}

/// Trajectory-level constraints; a trajectory violates if any rule fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    pub rules: Vec<ConstraintRule>,
}

impl ConstraintSet {
    pub fn new(rules: Vec<ConstraintRule>) -> Result<Self> {
        let set = ConstraintSet { rules };
        set.validate()?;
        Ok(set)
    }

    pub fn utility_at_most(threshold: f64) -> Self {
        ConstraintSet {
            rules: vec![ConstraintRule::CumulativeUtilityAtMost { threshold }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidConfig(
                "constraint set needs at least one rule".into(),
            ));
        }
        for r in &self.rules {
            let ConstraintRule::CumulativeUtilityAtMost { threshold } = r;
            if !threshold.is_finite() {
                return Err(Error::InvalidConfig("constraint threshold must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn violated_by_utility(&self, utility: f64) -> bool {
        self.rules.iter().any(|r| r.fires(utility))
    }
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet::utility_at_most(-40.0)
    }
}

pub fn violates(trajectory: &Trajectory, constraints: &ConstraintSet) -> bool {
    constraints.violated_by_utility(utility_of(trajectory))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Smallest interval covering both `self` and `v`.
    pub fn including(self, v: f64) -> Self {
        Interval {
            lo: self.lo.min(v),
            hi: self.hi.max(v),
        }
    }
}

/// Distributional estimates for one policy. CVaR is in loss units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricVector {
    pub e_u: f64,
    pub var_u: f64,
    pub p_viol: f64,
    pub cvar: f64,
    pub ci_e_u: Interval,
    pub ci_p_viol: Interval,
    pub ci_cvar: Interval,
    pub n: u64,
    pub alpha: f64,
}

impl MetricVector {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidMetrics(m.to_string()));
        let finite = [
            self.e_u,
            self.var_u,
            self.p_viol,
            self.cvar,
            self.ci_e_u.lo,
            self.ci_e_u.hi,
            self.ci_p_viol.lo,
            self.ci_p_viol.hi,
            self.ci_cvar.lo,
            self.ci_cvar.hi,
            self.alpha,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all fields must be finite");
        }
        if self.var_u < 0.0 {
            return bad("var_u must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.p_viol) {
            return bad("p_viol must lie in [0, 1]");
        }
        for (name, ci) in [
            ("ci_e_u", self.ci_e_u),
            ("ci_p_viol", self.ci_p_viol),
            ("ci_cvar", self.ci_cvar),
        ] {
            if ci.lo > ci.hi {
                return Err(Error::InvalidMetrics(format!("{name} has lo > hi")));
            }
        }
        if !self.ci_e_u.contains(self.e_u) {
            return bad("ci_e_u must contain e_u");
        }
        if !self.ci_p_viol.contains(self.p_viol) {
            return bad("ci_p_viol must contain p_viol");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn point(&self, metric: MetricId) -> f64 {
        match metric {
            MetricId::PViol => self.p_viol,
            MetricId::Cvar => self.cvar,
            MetricId::EU => self.e_u,
            MetricId::VarU => self.var_u,
        }
    }

    /// Confidence interval for a metric; variance carries none.
    pub fn interval(&self, metric: MetricId) -> Option<Interval> {
        match metric {
            MetricId::PViol => Some(self.ci_p_viol),
            MetricId::Cvar => Some(self.ci_cvar),
            MetricId::EU => Some(self.ci_e_u),
            MetricId::VarU => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "p_viol")]
    PViol,
    #[serde(rename = "cvar")]
    Cvar,
    #[serde(rename = "e_u")]
    EU,
    #[serde(rename = "var_u")]
    VarU,
}

impl MetricId {
    pub const ALL: [MetricId; 4] = [MetricId::Cvar, MetricId::EU, MetricId::PViol, MetricId::VarU];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::PViol => "p_viol",
            MetricId::Cvar => "cvar",
            MetricId::EU => "e_u",
            MetricId::VarU => "var_u",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric id `{s}`")))
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl PartialOrd for MetricId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MetricId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "le", alias = "<=")]
    Le,
    #[serde(rename = "ge", alias = ">=")]
    Ge,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Le => "le",
            Comparator::Ge => "ge",
        }
    }

    /// Inclusive comparison.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardConstraint {
    pub metric: MetricId,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl HardConstraint {
    pub fn new(metric: MetricId, comparator: Comparator, threshold: f64) -> Self {
        HardConstraint {
            metric,
            comparator,
            threshold,
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.metric
            .cmp(&other.metric)
            .then_with(|| self.comparator.as_str().cmp(other.comparator.as_str()))
            .then_with(|| self.threshold.total_cmp(&other.threshold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criterion {
    pub metric: MetricId,
    pub direction: Direction,
}

impl Criterion {
    pub fn new(metric: MetricId, direction: Direction) -> Self {
        Criterion { metric, direction }
    }

    /// Orients a metric value so that smaller keys are better.
    pub fn key(&self, m: &MetricVector) -> f64 {
        let v = m.point(self.metric);
        match self.direction {
            Direction::Minimize => v,
            Direction::Maximize => -v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    ByCandidateId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    #[default]
    Point,
    ConservativeBound,
}

/// Compilable governance: hard constraints, ordered criteria, tie rule,
/// estimator mode and tail level.
///
/// Construction canonicalizes the hard list, sorted by
/// `(metric, comparator, threshold)`; constraint indices everywhere else
/// refer to that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGovernance")]
pub struct GovernanceSpec {
    pub hard: Vec<HardConstraint>,
    pub criteria_order: Vec<Criterion>,
    pub tie_rule: TieRule,
    pub estimator_mode: EstimatorMode,
    pub alpha: f64,
    pub confidence: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGovernance {
    #[serde(default)]
    hard: Vec<HardConstraint>,
    criteria_order: Vec<Criterion>,
    #[serde(default)]
    tie_rule: TieRule,
    #[serde(default)]
    estimator_mode: EstimatorMode,
    alpha: f64,
    #[serde(default = "default_confidence")]
    confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl TryFrom<RawGovernance> for GovernanceSpec {
    type Error = Error;

    fn try_from(r: RawGovernance) -> Result<Self> {
        GovernanceSpec::new(
            r.hard,
            r.criteria_order,
            r.tie_rule,
            r.estimator_mode,
            r.alpha,
            r.confidence,
        )
    }
}

impl GovernanceSpec {
    pub fn new(
        mut hard: Vec<HardConstraint>,
        criteria_order: Vec<Criterion>,
        tie_rule: TieRule,
        estimator_mode: EstimatorMode,
        alpha: f64,
        confidence: f64,
    ) -> Result<Self> {
        if criteria_order.is_empty() {
            return Err(Error::InvalidConfig("criteria_order must be nonempty".into()));
        }
        for (i, c) in criteria_order.iter().enumerate() {
            if criteria_order[..i].iter().any(|p| p.metric == c.metric) {
                return Err(Error::InvalidConfig(format!(
                    "criterion `{}` listed twice",
                    c.metric
                )));
            }
        }
        if hard.iter().any(|h| !h.threshold.is_finite()) {
            return Err(Error::InvalidConfig("hard thresholds must be finite".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha {alpha} not in (0, 1)")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::OutOfRange(format!(
                "confidence {confidence} not in (0, 1)"
            )));
        }
        hard.sort_by(HardConstraint::canonical_cmp);
        Ok(GovernanceSpec {
            hard,
            criteria_order,
            tie_rule,
            estimator_mode,
            alpha,
            confidence,
        })
    }

    /// Reference governance for the regime-switching stress test:
    /// `p_viol <= 0.05`, `cvar <= 40`, risk-first lexicographic criteria.
    pub fn regime_switch_reference() -> Self {
        GovernanceSpec::new(
            vec![
                HardConstraint::new(MetricId::PViol, Comparator::Le, 0.05),
                HardConstraint::new(MetricId::Cvar, Comparator::Le, 40.0),
            ],
            vec![
                Criterion::new(MetricId::PViol, Direction::Minimize),
                Criterion::new(MetricId::Cvar, Direction::Minimize),
                Criterion::new(MetricId::EU, Direction::Maximize),
            ],
            TieRule::ByCandidateId,
            EstimatorMode::Point,
            0.05,
            0.95,
        )
        .expect("reference governance is valid")
    }

    /// Copy with all thresholds on `metric` replaced; adds an upper-bound
    /// constraint when none references the metric.
    pub fn with_threshold(&self, metric: MetricId, threshold: f64) -> Result<Self> {
        let mut hard = self.hard.clone();
        let mut touched = false;
        for h in hard.iter_mut().filter(|h| h.metric == metric) {
            h.threshold = threshold;
            touched = true;
        }
        if !touched {
            hard.push(HardConstraint::new(metric, Comparator::Le, threshold));
        }
        GovernanceSpec::new(
            hard,
            self.criteria_order.clone(),
            self.tie_rule,
            self.estimator_mode,
            self.alpha,
            self.confidence,
        )
    }
}

impl Default for GovernanceSpec {
    fn default() -> Self {
        GovernanceSpec::regime_switch_reference()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Act(String),
    Escalate,
    Abort,
}

impl Decision {
    pub fn policy_id(&self) -> Option<&str> {
        match self {
            Decision::Act(id) => Some(id),
            _ => None,
        }
    }

    /// Process exit code: 0 act, 2 escalate, 3 abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Decision::Act(_) => 0,
            Decision::Escalate => 2,
            Decision::Abort => 3,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Act(id) => write!(f, "act({id})"),
            Decision::Escalate => f.write_str("escalate"),
            Decision::Abort => f.write_str("abort"),
        }
    }
}

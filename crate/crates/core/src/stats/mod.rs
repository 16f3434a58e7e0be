//! Distributional estimators over outcome sets.
//!
//! Every estimator is weighted and self-normalized: unit-weight sets give
//! the plain sample statistics, importance sets give self-normalized
//! estimates, and stratified sets carry per-record weight
//! `P(stratum) / n_stratum`.

mod bootstrap;
mod interval;

pub use bootstrap::{
    bootstrap_ci, bootstrap_paired_mean, bootstrap_summary, percentile_interval, BootstrapSummary,
    Resampler, Statistic, DEFAULT_RESAMPLES,
};
pub use interval::{clopper_pearson_ci, normal_quantile, wilson_ci};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::OutcomeSet;
use crate::error::{Error, Result};
use crate::rng::{stream_key, tag, Domain};
use crate::scenario::Stratum;
use crate::types::{ConstraintSet, GovernanceSpec, Interval, MetricVector};

/// Which empirical CVaR to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvarConvention {
    /// Average of the worst `alpha` mass of losses, splitting the boundary
    /// order statistic fractionally.
    #[default]
    FractionalTail,
    /// Average of every loss at or above the lower empirical
    /// `(1 - alpha)` quantile.
    ThresholdSet,
}

/// One weighted observation. `group` is the resampling group (stratum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub utility: f64,
    pub weight: f64,
    pub violated: bool,
    pub group: u32,
}

impl Obs {
    pub fn unit(utility: f64, violated: bool) -> Self {
        Obs {
            utility,
            weight: 1.0,
            violated,
            group: 0,
        }
    }

    #[inline]
    pub fn loss(&self) -> f64 {
        -self.utility
    }
}

/// A weighted sample ready for estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    obs: Vec<Obs>,
}

impl Sample {
    pub fn new(obs: Vec<Obs>) -> Result<Self> {
        if obs.iter().any(|o| !(o.weight > 0.0 && o.weight.is_finite())) {
            return Err(Error::InvalidConfig("observation weights must be positive".into()));
        }
        if obs.iter().any(|o| !o.utility.is_finite()) {
            return Err(Error::InvalidConfig("utilities must be finite".into()));
        }
        Ok(Sample { obs })
    }

    /// Unit-weight sample from raw utilities (violation flags false).
    pub fn from_utilities(utilities: &[f64]) -> Self {
        Sample {
            obs: utilities.iter().map(|&u| Obs::unit(u, false)).collect(),
        }
    }

    pub fn from_outcomes(outcomes: &OutcomeSet) -> Result<Self> {
        let strata = &outcomes.provenance.strata;
        if strata.is_empty() {
            return Sample::new(
                outcomes
                    .records
                    .iter()
                    .map(|r| Obs {
                        utility: r.utility,
                        weight: r.weight,
                        violated: r.violated,
                        group: 0,
                    })
                    .collect(),
            );
        }
        let mut mass = vec![0.0; strata.len()];
        for r in &outcomes.records {
            let s = r.stratum.ok_or_else(|| {
                Error::InvalidConfig("stratified set has a record without a stratum".into())
            })? as usize;
            *mass.get_mut(s).ok_or_else(|| {
                Error::InvalidConfig(format!("record references unknown stratum {s}"))
            })? += r.weight;
        }
        if let Some(s) = mass.iter().position(|&m| m == 0.0) {
            return Err(Error::InsufficientData(format!(
                "stratum `{}` has no records",
                strata[s].id
            )));
        }
        Sample::new(
            outcomes
                .records
                .iter()
                .map(|r| {
                    let s = r.stratum.unwrap_or(0) as usize;
                    Obs {
                        utility: r.utility,
                        weight: strata[s].probability * r.weight / mass[s],
                        violated: r.violated,
                        group: s as u32,
                    }
                })
                .collect(),
        )
    }

    pub fn obs(&self) -> &[Obs] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn is_unit_weight(&self) -> bool {
        self.obs.iter().all(|o| o.weight == 1.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.obs.iter().map(|o| o.weight).sum()
    }

    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub fn effective_size(&self) -> f64 {
        let w: f64 = self.total_weight();
        let w2: f64 = self.obs.iter().map(|o| o.weight * o.weight).sum();
        w * w / w2
    }

    fn nonempty(&self) -> Result<()> {
        if self.obs.is_empty() {
            Err(Error::InsufficientData("empty sample".into()))
        } else {
            Ok(())
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.nonempty()?;
        Ok(weighted_mean(&self.obs, |o| o.utility))
    }

    pub fn p_viol(&self) -> Result<f64> {
        self.nonempty()?;
        Ok(weighted_mean(&self.obs, |o| f64::from(u8::from(o.violated))))
    }

    /// Reliability-weighted variance; the usual `1/(n-1)` estimator for
    /// unit weights.
    pub fn variance(&self) -> Result<f64> {
        if self.obs.len() < 2 {
            return Err(Error::InsufficientData(
                "variance needs at least two observations".into(),
            ));
        }
        let w: f64 = self.total_weight();
        let w2: f64 = self.obs.iter().map(|o| o.weight * o.weight).sum();
        let mu = weighted_mean(&self.obs, |o| o.utility);
        let ss: f64 = self
            .obs
            .iter()
            .map(|o| o.weight * (o.utility - mu) * (o.utility - mu))
            .sum();
        Ok((ss / (w - w2 / w)).max(0.0))
    }

    /// Delta-method standard error of a self-normalized weighted mean.
    pub fn weighted_se(&self, f: impl Fn(&Obs) -> f64) -> Result<f64> {
        self.nonempty()?;
        let w: f64 = self.total_weight();
        let mu = weighted_mean(&self.obs, &f);
        let s: f64 = self
            .obs
            .iter()
            .map(|o| (o.weight * (f(o) - mu)).powi(2))
            .sum();
        Ok(s.sqrt() / w)
    }

    fn sorted_by_loss_desc(&self) -> Vec<Obs> {
        let mut v = self.obs.clone();
        v.sort_by(|a, b| b.loss().total_cmp(&a.loss()));
        v
    }

    pub fn cvar(&self, alpha: f64, convention: CvarConvention) -> Result<f64> {
        check_alpha(alpha)?;
        self.nonempty()?;
        Ok(cvar_sorted_desc(&self.sorted_by_loss_desc(), alpha, convention))
    }

    /// Lower empirical `(1 - alpha)` quantile of loss.
    pub fn value_at_risk(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        self.nonempty()?;
        Ok(var_sorted_desc(&self.sorted_by_loss_desc(), alpha))
    }

    pub fn statistic(&self, stat: Statistic) -> Result<f64> {
        match stat {
            Statistic::Mean => self.mean(),
            Statistic::PViol => self.p_viol(),
            Statistic::Cvar { alpha, convention } => self.cvar(alpha, convention),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("alpha {alpha} not in (0, 1)")))
    }
}

fn weighted_mean(obs: &[Obs], f: impl Fn(&Obs) -> f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for o in obs {
        num += o.weight * f(o);
        den += o.weight;
    }
    num / den
}

// Cumulative weight of the smallest losses counts as reaching the
// (1 - alpha) level once within this relative slack, so that exact
// quantile positions survive binary rounding of (1 - alpha) * n.
const QUANTILE_SLACK: f64 = 1e-12;

/// `sorted` must be ordered by loss, largest first.
pub(crate) fn var_sorted_desc(sorted: &[Obs], alpha: f64) -> f64 {
    let total: f64 = sorted.iter().map(|o| o.weight).sum();
    let target = (1.0 - alpha) * total - QUANTILE_SLACK * total;
    let mut acc = 0.0;
    for o in sorted.iter().rev() {
        acc += o.weight;
        if acc >= target {
            return o.loss();
        }
    }
    sorted[0].loss()
}

/// `sorted` must be ordered by loss, largest first.
pub(crate) fn cvar_sorted_desc(sorted: &[Obs], alpha: f64, convention: CvarConvention) -> f64 {
    match convention {
        CvarConvention::FractionalTail => {
            let total: f64 = sorted.iter().map(|o| o.weight).sum();
            let tail = alpha * total;
            let mut remaining = tail;
            let mut acc = 0.0;
            for o in sorted {
                let take = o.weight.min(remaining);
                acc += take * o.loss();
                remaining -= take;
                if remaining <= 0.0 {
                    break;
                }
            }
            acc / tail
        }
        CvarConvention::ThresholdSet => {
            let q = var_sorted_desc(sorted, alpha);
            let mut num = 0.0;
            let mut den = 0.0;
            for o in sorted.iter().take_while(|o| o.loss() >= q) {
                num += o.weight * o.loss();
                den += o.weight;
            }
            num / den
        }
    }
}

pub fn mean_utility(outcomes: &OutcomeSet) -> Result<f64> {
    Sample::from_outcomes(outcomes)?.mean()
}

pub fn variance_utility(outcomes: &OutcomeSet) -> Result<f64> {
    Sample::from_outcomes(outcomes)?.variance()
}

pub fn violation_probability(outcomes: &OutcomeSet) -> Result<f64> {
    Sample::from_outcomes(outcomes)?.p_viol()
}

pub fn cvar(outcomes: &OutcomeSet, alpha: f64, convention: CvarConvention) -> Result<f64> {
    Sample::from_outcomes(outcomes)?.cvar(alpha, convention)
}

/// Pools per-stratum outcome sets into one sample with weights
/// `P(s) * w_i / sum_s(w)`. Means and violation probabilities of the
/// pooled sample equal `sum_s P(s) * estimate_s`.
pub fn stratified_combine(per_stratum: &[(Stratum, OutcomeSet)]) -> Result<Sample> {
    if per_stratum.is_empty() {
        return Err(Error::NotAPartition("no strata".into()));
    }
    let mut seen = BTreeSet::new();
    for (s, _) in per_stratum {
        for w in s.onset_range.iter() {
            if !seen.insert(w) {
                return Err(Error::NotAPartition(format!("onset {w} in two strata")));
            }
        }
    }
    let total: f64 = per_stratum.iter().map(|(s, _)| s.probability).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::NotAPartition(format!(
            "stratum probabilities sum to {total}"
        )));
    }
    let mut obs = Vec::new();
    for (gi, (s, set)) in per_stratum.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::InsufficientData(format!("stratum `{}` has no records", s.id)));
        }
        let mass: f64 = set.records.iter().map(|r| r.weight).sum();
        obs.extend(set.records.iter().map(|r| Obs {
            utility: r.utility,
            weight: s.probability * r.weight / mass,
            violated: r.violated,
            group: gi as u32,
        }));
    }
    Sample::new(obs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub resamples: usize,
    /// Bootstrap seed; derived from the batch seed and policy id when unset.
    pub seed: Option<u64>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            resamples: DEFAULT_RESAMPLES,
            seed: None,
        }
    }
}

/// Interval family used for each metric, recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    BootstrapPercentile,
    Wilson,
}

pub fn p_viol_interval_method(sample: &Sample) -> IntervalMethod {
    let single_group = sample.obs().iter().all(|o| o.group == 0);
    if sample.is_unit_weight() && single_group {
        IntervalMethod::Wilson
    } else {
        IntervalMethod::BootstrapPercentile
    }
}

pub fn metric_vector(
    outcomes: &OutcomeSet,
    governance: &GovernanceSpec,
    constraints: &ConstraintSet,
) -> Result<MetricVector> {
    metric_vector_with(outcomes, governance, constraints, &MetricOptions::default())
}

pub fn metric_vector_with(
    outcomes: &OutcomeSet,
    governance: &GovernanceSpec,
    constraints: &ConstraintSet,
    opts: &MetricOptions,
) -> Result<MetricVector> {
    if &outcomes.provenance.constraints != constraints {
        return Err(Error::InvalidConfig(
            "outcome set was labelled under a different constraint set".into(),
        ));
    }
    let sample = Sample::from_outcomes(outcomes)?;
    let alpha = governance.alpha;
    let conf = governance.confidence;
    let e_u = sample.mean()?;
    let var_u = sample.variance()?;
    let p_viol = sample.p_viol()?;
    let cvar_stat = Statistic::Cvar {
        alpha,
        convention: CvarConvention::FractionalTail,
    };
    let cvar = sample.statistic(cvar_stat)?;

    let seed = opts.seed.unwrap_or_else(|| {
        stream_key(
            outcomes.provenance.batch.master_seed,
            Domain::Bootstrap,
            tag(&outcomes.provenance.policy_id),
        )
    });
    let method = p_viol_interval_method(&sample);
    let mut stats = vec![Statistic::Mean, cvar_stat];
    if method == IntervalMethod::BootstrapPercentile {
        stats.push(Statistic::PViol);
    }
    let reps = Resampler::new(&sample)?.replicates(&stats, opts.resamples, seed)?;
    let ci_e_u = percentile_interval(&reps[0], conf).including(e_u);
    let ci_cvar = percentile_interval(&reps[1], conf).including(cvar);
    let ci_p_viol = match method {
        IntervalMethod::Wilson => {
            let k = sample.obs().iter().filter(|o| o.violated).count() as u64;
            wilson_ci(k, sample.len() as u64, conf)?
        }
        IntervalMethod::BootstrapPercentile => percentile_interval(&reps[2], conf),
    }
    .including(p_viol);

    let m = MetricVector {
        e_u,
        var_u,
        p_viol,
        cvar,
        ci_e_u,
        ci_p_viol: clamp_unit(ci_p_viol),
        ci_cvar,
        n: outcomes.len() as u64,
        alpha,
    };
    m.validate()?;
    Ok(m)
}

fn clamp_unit(i: Interval) -> Interval {
    Interval::new(i.lo.max(0.0), i.hi.min(1.0))
}

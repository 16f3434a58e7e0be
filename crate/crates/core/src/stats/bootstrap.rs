//! Seeded nonparametric bootstrap.
//!
//! Identical observations are collapsed into classes, so a resample is a
//! vector of class counts. Within each resampling group (one per stratum)
//! counts are drawn either as a multinomial over classes, when there are
//! few distinct classes, or by drawing record indices directly. Both give
//! the same distribution as resampling records with replacement.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cvar_sorted_desc, CvarConvention, Obs, Sample};
use crate::engine::OutcomeSet;
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::types::Interval;

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    PViol,
    Cvar { alpha: f64, convention: CvarConvention },
}

struct Group {
    /// Class indices belonging to this group.
    classes: Vec<usize>,
    /// Records in the group, as class indices; kept only for index draws.
    records: Option<Vec<usize>>,
    n: u64,
}

pub struct Resampler {
    /// Distinct observations ordered by loss, largest first.
    classes: Vec<Obs>,
    freq: Vec<u64>,
    groups: Vec<Group>,
}

impl Resampler {
    pub fn new(sample: &Sample) -> Result<Self> {
        let obs = sample.obs();
        if obs.is_empty() {
            return Err(Error::InsufficientData("cannot resample an empty sample".into()));
        }
        let mut order: Vec<usize> = (0..obs.len()).collect();
        let key = |o: &Obs| (o.loss(), o.group, o.weight, o.violated);
        order.sort_by(|&a, &b| {
            let (la, ga, wa, va) = key(&obs[a]);
            let (lb, gb, wb, vb) = key(&obs[b]);
            lb.total_cmp(&la)
                .then(ga.cmp(&gb))
                .then(wa.total_cmp(&wb))
                .then(va.cmp(&vb))
        });
        let mut classes: Vec<Obs> = Vec::new();
        let mut freq: Vec<u64> = Vec::new();
        let mut class_of = vec![0usize; obs.len()];
        for &i in &order {
            let o = obs[i];
            let same = classes.last().is_some_and(|c: &Obs| {
                c.utility.to_bits() == o.utility.to_bits()
                    && c.group == o.group
                    && c.weight.to_bits() == o.weight.to_bits()
                    && c.violated == o.violated
            });
            if !same {
                classes.push(o);
                freq.push(0);
            }
            *freq.last_mut().unwrap() += 1;
            class_of[i] = classes.len() - 1;
        }

        let n_groups = obs.iter().map(|o| o.group).max().unwrap_or(0) as usize + 1;
        let mut groups: Vec<Group> = (0..n_groups)
            .map(|_| Group {
                classes: Vec::new(),
                records: None,
                n: 0,
            })
            .collect();
        for (ci, c) in classes.iter().enumerate() {
            let g = &mut groups[c.group as usize];
            g.classes.push(ci);
            g.n += freq[ci];
        }
        for (gi, g) in groups.iter_mut().enumerate() {
            // Sequential binomials cost more than index draws once most
            // records are distinct.
            if g.classes.len() as u64 * 4 > g.n {
                g.records = Some(
                    (0..obs.len())
                        .filter(|&i| obs[i].group as usize == gi)
                        .map(|i| class_of[i])
                        .collect(),
                );
            }
        }
        groups.retain(|g| g.n > 0);
        Ok(Resampler {
            classes,
            freq,
            groups,
        })
    }

    pub fn len(&self) -> u64 {
        self.groups.iter().map(|g| g.n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn draw_counts<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.classes.len()];
        for g in &self.groups {
            match &g.records {
                Some(records) => {
                    for _ in 0..g.n {
                        let j = rng.random_range(0..records.len());
                        counts[records[j]] += 1;
                    }
                }
                None => {
                    let mut left_n = g.n;
                    let mut left_f = g.n;
                    let last = g.classes.len() - 1;
                    for (k, &ci) in g.classes.iter().enumerate() {
                        if left_n == 0 {
                            break;
                        }
                        let c = if k == last {
                            left_n
                        } else {
                            let p = self.freq[ci] as f64 / left_f as f64;
                            Binomial::new(left_n, p.min(1.0))
                                .expect("valid binomial")
                                .sample(rng)
                        };
                        counts[ci] += c;
                        left_n -= c;
                        left_f -= self.freq[ci];
                    }
                }
            }
        }
        counts
    }

    fn evaluate(&self, counts: &[u64], stats: &[Statistic]) -> Vec<f64> {
        let resampled: Vec<Obs> = self
            .classes
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(o, &c)| Obs {
                weight: o.weight * c as f64,
                ..*o
            })
            .collect();
        stats
            .iter()
            .map(|s| match *s {
                Statistic::Mean => super::weighted_mean(&resampled, |o| o.utility),
                Statistic::PViol => {
                    super::weighted_mean(&resampled, |o| f64::from(u8::from(o.violated)))
                }
                Statistic::Cvar { alpha, convention } => {
                    cvar_sorted_desc(&resampled, alpha, convention)
                }
            })
            .collect()
    }

    /// Bootstrap replicates, one vector per statistic, all computed from
    /// the same `b` resamples. Resample `j` uses
    /// `substream(seed, Bootstrap, j)`.
    pub fn replicates(&self, stats: &[Statistic], b: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if b < 100 {
            return Err(Error::OutOfRange(format!("bootstrap needs b >= 100, got {b}")));
        }
        for s in stats {
            if let Statistic::Cvar { alpha, .. } = s {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::OutOfRange(format!("alpha {alpha} not in (0, 1)")));
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..b as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = substream(seed, Domain::Bootstrap, j);
                let counts = self.draw_counts(&mut rng);
                self.evaluate(&counts, stats)
            })
            .collect();
        Ok((0..stats.len())
            .map(|k| rows.iter().map(|r| r[k]).collect())
            .collect())
    }
}

/// Percentile interval with linear interpolation between order statistics.
pub fn percentile_interval(replicates: &[f64], confidence: f64) -> Interval {
    let mut v = replicates.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    let tail = (1.0 - confidence) / 2.0;
    Interval::new(q(tail), q(1.0 - tail))
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub estimate: f64,
    pub ci: Interval,
    pub se: f64,
}

fn check_size(sample: &Sample) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData("bootstrap needs at least two records".into()));
    }
    Ok(())
}

pub fn bootstrap_summary(
    outcomes: &OutcomeSet,
    statistic: Statistic,
    b: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    let sample = Sample::from_outcomes(outcomes)?;
    summarize(&sample, statistic, b, confidence, seed)
}

fn summarize(
    sample: &Sample,
    statistic: Statistic,
    b: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    check_size(sample)?;
    let estimate = sample.statistic(statistic)?;
    let reps = Resampler::new(sample)?.replicates(&[statistic], b, seed)?;
    Ok(BootstrapSummary {
        estimate,
        ci: percentile_interval(&reps[0], confidence),
        se: std_dev(&reps[0]),
    })
}

pub fn bootstrap_ci(
    outcomes: &OutcomeSet,
    statistic: Statistic,
    b: usize,
    confidence: f64,
    seed: u64,
) -> Result<Interval> {
    Ok(bootstrap_summary(outcomes, statistic, b, confidence, seed)?.ci)
}

/// Bootstrap of the record-wise difference `U_a - U_b` for two sets
/// generated on shared worlds.
pub fn bootstrap_paired_mean(
    a: &OutcomeSet,
    b: &OutcomeSet,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig("paired sets differ in length".into()));
    }
    let sa = Sample::from_outcomes(a)?;
    let sb = Sample::from_outcomes(b)?;
    let mut diffs = Vec::with_capacity(a.len());
    for (x, y) in sa.obs().iter().zip(sb.obs()) {
        if x.weight.to_bits() != y.weight.to_bits() || x.group != y.group {
            return Err(Error::InvalidConfig("paired sets are not record-aligned".into()));
        }
        diffs.push(Obs {
            utility: x.utility - y.utility,
            weight: x.weight,
            violated: false,
            group: x.group,
        });
    }
    summarize(&Sample::new(diffs)?, Statistic::Mean, resamples, confidence, seed)
}

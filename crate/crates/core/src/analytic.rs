//! Exact outcome distributions by enumeration over onset worlds and
//! oversight halting times. Used as the reference column in reproduction
//! reports and as a test oracle for the Monte Carlo engine.

use crate::error::{Error, Result};
use crate::scenario::{world_prob, RegimeSwitchConfig};
use crate::stats::CvarConvention;
use crate::types::{ActionId, ConstraintSet, PolicySpec, Regime, Theta, UtilityModel};

/// A utility value and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub utility: f64,
    pub prob: f64,
}

/// Finite utility distribution, atoms sorted by utility ascending with
/// equal utilities merged.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMetrics {
    pub e_u: f64,
    pub var_u: f64,
    pub p_viol: f64,
    pub cvar_fractional_tail: f64,
    pub cvar_threshold_set: f64,
}

fn reward(regime: Regime, action: ActionId, onset_step: bool, theta: &Theta) -> f64 {
    let base = match (regime, action) {
        (_, ActionId::Defer) => 0.0,
        (Regime::Normal, ActionId::Aggressive) => theta.r_aggressive_normal,
        (Regime::Normal, ActionId::Conservative) => theta.r_conservative_normal,
        (Regime::Adverse, _) => theta.r_adverse,
    };
    if onset_step && action == ActionId::Aggressive {
        base + theta.onset_penalty_aggressive
    } else {
        base
    }
}

/// Exact distribution of cumulative utility under fixed `theta`.
pub fn exact_distribution(
    policy: &PolicySpec,
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
) -> Result<ExactDistribution> {
    policy.validate()?;
    cfg.validate()?;
    utility.validate()?;
    let action = policy.base_action();
    let layers = policy.intervention_layers();
    let theta = &utility.theta;
    let mut atoms = Vec::new();
    for world in cfg.worlds() {
        let pw = world_prob(cfg, world)?;
        if pw == 0.0 {
            continue;
        }
        let onset = world.onset_step();
        // probability the rollout is still running at the top of step t
        let mut alive = 1.0;
        let mut total = 0.0;
        for t in 0..cfg.horizon {
            total += reward(world.regime_at(t), action, onset == Some(t), theta);
            if let Some(k) = onset {
                let pass: f64 = layers
                    .iter()
                    .filter(|&&(_, lat)| t >= k.saturating_add(lat))
                    .map(|&(rho, _)| 1.0 - rho)
                    .product();
                let halt = alive * (1.0 - pass);
                if halt > 0.0 {
                    atoms.push(Atom {
                        utility: total,
                        prob: pw * halt,
                    });
                }
                alive *= pass;
            }
            if alive == 0.0 {
                break;
            }
        }
        if alive > 0.0 {
            atoms.push(Atom {
                utility: total,
                prob: pw * alive,
            });
        }
    }
    Ok(ExactDistribution::from_atoms(atoms))
}

impl ExactDistribution {
    pub fn from_atoms(mut atoms: Vec<Atom>) -> Self {
        atoms.sort_by(|a, b| a.utility.total_cmp(&b.utility));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.utility == a.utility => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        ExactDistribution { atoms: merged }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.utility).sum::<f64>() / self.total_mass()
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms
            .iter()
            .map(|a| a.prob * (a.utility - mu).powi(2))
            .sum::<f64>()
            / self.total_mass()
    }

    pub fn p_viol(&self, constraints: &ConstraintSet) -> f64 {
        self.atoms
            .iter()
            .filter(|a| constraints.violated_by_utility(a.utility))
            .map(|a| a.prob)
            .sum::<f64>()
            / self.total_mass()
    }

    /// Lower `(1 - alpha)` quantile of loss `-U`.
    pub fn value_at_risk(&self, alpha: f64) -> f64 {
        let total = self.total_mass();
        let target = (1.0 - alpha) * total;
        // ascending loss is descending utility
        let mut acc = 0.0;
        for a in self.atoms.iter().rev() {
            acc += a.prob;
            if acc >= target * (1.0 - 1e-12) {
                return -a.utility;
            }
        }
        -self.atoms[0].utility
    }

    pub fn cvar(&self, alpha: f64, convention: CvarConvention) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange(format!("alpha {alpha} not in (0, 1)")));
        }
        if self.atoms.is_empty() {
            return Err(Error::InsufficientData("empty distribution".into()));
        }
        let total = self.total_mass();
        Ok(match convention {
            CvarConvention::FractionalTail => {
                let tail = alpha * total;
                let mut left = tail;
                let mut acc = 0.0;
                for a in &self.atoms {
                    let take = a.prob.min(left);
                    acc += take * -a.utility;
                    left -= take;
                    if left <= 0.0 {
                        break;
                    }
                }
                acc / tail
            }
            CvarConvention::ThresholdSet => {
                let q = self.value_at_risk(alpha);
                let (num, den) = self
                    .atoms
                    .iter()
                    .filter(|a| -a.utility >= q)
                    .fold((0.0, 0.0), |(n, d), a| (n - a.prob * a.utility, d + a.prob));
                num / den
            }
        })
    }

    pub fn metrics(&self, alpha: f64, constraints: &ConstraintSet) -> Result<ExactMetrics> {
        Ok(ExactMetrics {
            e_u: self.mean(),
            var_u: self.variance(),
            p_viol: self.p_viol(constraints),
            cvar_fractional_tail: self.cvar(alpha, CvarConvention::FractionalTail)?,
            cvar_threshold_set: self.cvar(alpha, CvarConvention::ThresholdSet)?,
        })
    }
}

pub fn exact_metrics(
    policy: &PolicySpec,
    cfg: &RegimeSwitchConfig,
    utility: &UtilityModel,
    constraints: &ConstraintSet,
    alpha: f64,
) -> Result<ExactMetrics> {
    exact_distribution(policy, cfg, utility)?.metrics(alpha, constraints)
}

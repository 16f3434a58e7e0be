//! Admissibility against governance thresholds and the
//! Act / Escalate / Abort decision functional.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Comparator, Decision, EstimatorMode, GovernanceSpec, HardConstraint, MetricId, MetricVector,
    PolicySpec,
};

/// Outcome of one hard constraint for one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint_index: usize,
    pub metric: MetricId,
    pub comparator: Comparator,
    pub threshold: f64,
    pub evaluated_value: f64,
    pub satisfied: bool,
}

impl fmt::Display for ConstraintCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} {} {} ({})",
            self.metric,
            self.evaluated_value,
            self.comparator,
            self.threshold,
            if self.satisfied { "ok" } else { "violated" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub policy_id: String,
    pub admissible: bool,
    pub checks: Vec<ConstraintCheck>,
    /// Every failed constraint.
    pub binding: Vec<ConstraintCheck>,
    pub estimator_mode_used: EstimatorMode,
}

/// The value a constraint is judged on: the point estimate, or the
/// unfavourable confidence bound in conservative mode. Variance carries no
/// interval and is always judged on its point estimate.
pub fn evaluated_value(m: &MetricVector, h: &HardConstraint, mode: EstimatorMode) -> Result<f64> {
    let v = match (mode, m.interval(h.metric)) {
        (EstimatorMode::Point, _) | (EstimatorMode::ConservativeBound, None) => m.point(h.metric),
        (EstimatorMode::ConservativeBound, Some(ci)) => match h.comparator {
            Comparator::Le => ci.hi,
            Comparator::Ge => ci.lo,
        },
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidMetrics(format!("metric `{}` is not available", h.metric)))
    }
}

pub fn admissible(
    policy_id: &str,
    m: &MetricVector,
    governance: &GovernanceSpec,
) -> Result<AdmissibilityReport> {
    let mode = governance.estimator_mode;
    let checks = governance
        .hard
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let v = evaluated_value(m, h, mode)?;
            Ok(ConstraintCheck {
                constraint_index: i,
                metric: h.metric,
                comparator: h.comparator,
                threshold: h.threshold,
                evaluated_value: v,
                satisfied: h.comparator.holds(v, h.threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let binding: Vec<ConstraintCheck> = checks.iter().copied().filter(|c| !c.satisfied).collect();
    Ok(AdmissibilityReport {
        policy_id: policy_id.to_string(),
        admissible: binding.is_empty(),
        checks,
        binding,
        estimator_mode_used: mode,
    })
}

fn check_ids(evaluated: &[(PolicySpec, MetricVector)]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for (p, _) in evaluated {
        if !ids.insert(p.id.as_str()) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    Ok(())
}

/// Highest expected utility among `pool`, ties broken by ascending id.
fn argmax_utility<'a>(pool: impl Iterator<Item = (&'a str, f64)>) -> Option<&'a str> {
    pool.fold(None, |best: Option<(&str, f64)>, (id, eu)| match best {
        Some((bid, beu)) if beu > eu || (beu == eu && bid < id) => Some((bid, beu)),
        _ => Some((id, eu)),
    })
    .map(|(id, _)| id)
}

/// Naive selection: argmax of expected utility, ignoring admissibility.
pub fn naive_choice(
    evaluated: &[(PolicySpec, MetricVector)],
    escalation_policy_id: Option<&str>,
) -> Option<String> {
    argmax_utility(
        evaluated
            .iter()
            .filter(|(p, _)| Some(p.id.as_str()) != escalation_policy_id)
            .map(|(p, m)| (p.id.as_str(), m.e_u)),
    )
    .map(str::to_string)
}

/// Act on the best admissible ordinary candidate; otherwise escalate if
/// the escalation alternative is admissible; otherwise abort.
pub fn decide(
    evaluated: &[(PolicySpec, MetricVector)],
    governance: &GovernanceSpec,
    escalation_policy_id: Option<&str>,
    champion_id: Option<&str>,
) -> Result<Decision> {
    check_ids(evaluated)?;
    let known = |id: &str| evaluated.iter().any(|(p, _)| p.id == id);
    for id in [champion_id, escalation_policy_id].into_iter().flatten() {
        if !known(id) {
            return Err(Error::UnknownId(id.to_string()));
        }
    }
    let mut admissible_ordinary = Vec::new();
    let mut escalation_ok = false;
    for (p, m) in evaluated {
        let ok = admissible(&p.id, m, governance)?.admissible;
        if Some(p.id.as_str()) == escalation_policy_id {
            escalation_ok = ok;
        } else if ok {
            admissible_ordinary.push((p.id.as_str(), m.e_u));
        }
    }
    Ok(match argmax_utility(admissible_ordinary.into_iter()) {
        Some(id) => Decision::Act(id.to_string()),
        None if escalation_ok => Decision::Escalate,
        None => Decision::Abort,
    })
}

/// True when gating reverses the naive expected-utility choice.
pub fn decision_flip_check(naive_choice: &str, gated_choice: &Decision) -> bool {
    gated_choice.policy_id() != Some(naive_choice)
}

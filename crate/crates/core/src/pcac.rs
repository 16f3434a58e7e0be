//! Proof-carrying admissibility compilation.
//!
//! `compile` is a pure function of (candidates, governance, escalation id):
//!
//! 1. canonicalize the governance spec and hash it;
//! 2. keep candidates meeting every hard constraint;
//! 3. prune candidates Pareto-dominated on the ordered criteria, recording
//!    one witness per pruned candidate;
//! 4. pick the lexicographic minimum of the oriented criteria keys;
//! 5. break exact ties by ascending candidate id;
//! 6. emit a certificate that replays byte-for-byte.
//!
//! Hard constraints are judged on the estimate selected by the
//! governance estimator mode; ranking always uses point estimates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_vec};
use crate::error::{Error, Result};
use crate::gate::admissible;
use crate::types::{
    Criterion, Decision, Direction, EstimatorMode, GovernanceSpec, MetricId, MetricVector,
    TieRule,
};

pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub id: String,
    pub metrics: MetricVector,
}

impl CandidateEntry {
    pub fn new(id: impl Into<String>, metrics: MetricVector) -> Self {
        CandidateEntry {
            id: id.into(),
            metrics,
        }
    }
}

pub fn canonical_bytes(governance: &GovernanceSpec) -> Vec<u8> {
    to_canonical_vec(governance).expect("governance serializes")
}

pub fn gov_hash(governance: &GovernanceSpec) -> String {
    sha256_hex(&canonical_bytes(governance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatEntry {
    pub constraint_index: usize,
    pub satisfied: bool,
    pub evaluated_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceWitness {
    pub dominator: String,
    pub dominated: String,
    /// First criterion, in priority order, on which the dominator is
    /// strictly better.
    pub criterion: MetricId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub criterion: MetricId,
    pub direction: Direction,
    pub surviving: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub schema_version: u32,
    pub gov_hash: String,
    pub escalation_policy_id: Option<String>,
    pub verdict: Decision,
    pub selected: Option<String>,
    pub metrics: BTreeMap<String, MetricVector>,
    pub sat_vector: BTreeMap<String, Vec<SatEntry>>,
    pub admissible: Vec<String>,
    pub frontier: Vec<String>,
    pub dominance_witnesses: Vec<DominanceWitness>,
    pub comparison_trace: Vec<TraceStep>,
    pub tie_rule: TieRule,
    pub estimator_mode_used: EstimatorMode,
}

impl Certificate {
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        to_canonical_vec(self).expect("certificate serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_canonical_bytes())
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let cert: Certificate = serde_json::from_slice(bytes)?;
        if cert.schema_version != CERTIFICATE_SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported certificate schema version {}",
                cert.schema_version
            )));
        }
        Ok(cert)
    }
}

fn sorted_unique(candidates: &[CandidateEntry]) -> Result<Vec<&CandidateEntry>> {
    let mut v: Vec<&CandidateEntry> = candidates.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    for w in v.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
    }
    Ok(v)
}

/// Candidates meeting every hard constraint, in id order.
pub fn hard_filter(
    candidates: &[CandidateEntry],
    governance: &GovernanceSpec,
) -> Result<Vec<CandidateEntry>> {
    let mut out = Vec::new();
    for c in sorted_unique(candidates)? {
        if admissible(&c.id, &c.metrics, governance)?.admissible {
            out.push(c.clone());
        }
    }
    Ok(out)
}

/// First criterion on which `a` is strictly better than `b`, when `a`
/// dominates `b` (weakly better everywhere, strictly somewhere).
fn dominance(a: &MetricVector, b: &MetricVector, criteria: &[Criterion]) -> Option<MetricId> {
    let mut first_strict = None;
    for c in criteria {
        let (ka, kb) = (c.key(a), c.key(b));
        if ka > kb {
            return None;
        }
        if ka < kb && first_strict.is_none() {
            first_strict = Some(c.metric);
        }
    }
    first_strict
}

/// Non-dominated candidates plus one witness per pruned candidate. The
/// witness names the lowest-id dominator.
pub fn dominance_frontier(
    admissible: &[CandidateEntry],
    criteria_order: &[Criterion],
) -> (Vec<CandidateEntry>, Vec<DominanceWitness>) {
    let mut sorted: Vec<&CandidateEntry> = admissible.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut frontier = Vec::new();
    let mut witnesses = Vec::new();
    for b in &sorted {
        let witness = sorted.iter().find_map(|a| {
            if a.id == b.id {
                return None;
            }
            dominance(&a.metrics, &b.metrics, criteria_order).map(|criterion| DominanceWitness {
                dominator: a.id.clone(),
                dominated: b.id.clone(),
                criterion,
            })
        });
        match witness {
            Some(w) => witnesses.push(w),
            None => frontier.push((*b).clone()),
        }
    }
    (frontier, witnesses)
}

/// Lexicographic selection with its per-criterion trace.
pub fn select_with_trace(
    frontier: &[CandidateEntry],
    criteria_order: &[Criterion],
    tie_rule: TieRule,
) -> Result<(String, Vec<TraceStep>)> {
    if frontier.is_empty() {
        return Err(Error::EmptyFrontier);
    }
    let mut surviving: Vec<&CandidateEntry> = frontier.iter().collect();
    surviving.sort_by(|a, b| a.id.cmp(&b.id));
    let mut trace = Vec::with_capacity(criteria_order.len());
    for c in criteria_order {
        let best = surviving
            .iter()
            .map(|e| c.key(&e.metrics))
            .fold(f64::INFINITY, f64::min);
        surviving.retain(|e| c.key(&e.metrics) == best);
        trace.push(TraceStep {
            criterion: c.metric,
            direction: c.direction,
            surviving: surviving.iter().map(|e| e.id.clone()).collect(),
        });
    }
    let chosen = match tie_rule {
        TieRule::ByCandidateId => surviving[0].id.clone(),
    };
    Ok((chosen, trace))
}

pub fn select(frontier: &[CandidateEntry], criteria_order: &[Criterion], tie_rule: TieRule) -> Result<String> {
    select_with_trace(frontier, criteria_order, tie_rule).map(|(id, _)| id)
}

pub fn compile(
    candidates: &[CandidateEntry],
    governance: &GovernanceSpec,
    escalation_policy_id: Option<&str>,
) -> Result<(Decision, Certificate)> {
    let sorted = sorted_unique(candidates)?;
    if let Some(esc) = escalation_policy_id {
        if !sorted.iter().any(|c| c.id == esc) {
            return Err(Error::UnknownId(esc.to_string()));
        }
    }

    let mut metrics = BTreeMap::new();
    let mut sat_vector = BTreeMap::new();
    let mut admissible_ids = BTreeSet::new();
    for c in &sorted {
        c.metrics.validate()?;
        let report = admissible(&c.id, &c.metrics, governance)?;
        if report.admissible {
            admissible_ids.insert(c.id.clone());
        }
        sat_vector.insert(
            c.id.clone(),
            report
                .checks
                .iter()
                .map(|k| SatEntry {
                    constraint_index: k.constraint_index,
                    satisfied: k.satisfied,
                    evaluated_value: k.evaluated_value,
                })
                .collect::<Vec<_>>(),
        );
        metrics.insert(c.id.clone(), c.metrics.clone());
    }

    let primary: Vec<CandidateEntry> = sorted
        .iter()
        .filter(|c| admissible_ids.contains(&c.id) && Some(c.id.as_str()) != escalation_policy_id)
        .map(|c| (*c).clone())
        .collect();

    let (verdict, selected, frontier, witnesses, trace) = if primary.is_empty() {
        let escalate = escalation_policy_id.is_some_and(|e| admissible_ids.contains(e));
        let verdict = if escalate { Decision::Escalate } else { Decision::Abort };
        (verdict, None, Vec::new(), Vec::new(), Vec::new())
    } else {
        let (frontier, witnesses) = dominance_frontier(&primary, &governance.criteria_order);
        let (chosen, trace) =
            select_with_trace(&frontier, &governance.criteria_order, governance.tie_rule)?;
        (
            Decision::Act(chosen.clone()),
            Some(chosen),
            frontier.into_iter().map(|c| c.id).collect(),
            witnesses,
            trace,
        )
    };

    let cert = Certificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        gov_hash: gov_hash(governance),
        escalation_policy_id: escalation_policy_id.map(str::to_string),
        verdict: verdict.clone(),
        selected,
        metrics,
        sat_vector,
        admissible: admissible_ids.into_iter().collect(),
        frontier,
        dominance_witnesses: witnesses,
        comparison_trace: trace,
        tie_rule: governance.tie_rule,
        estimator_mode_used: governance.estimator_mode,
    };
    Ok((verdict, cert))
}

/// Recompiles and compares canonical bytes. Never fails: any error or
/// mismatch yields `false`.
pub fn verify(certificate: &Certificate, candidates: &[CandidateEntry], governance: &GovernanceSpec) -> bool {
    if certificate.gov_hash != gov_hash(governance) {
        return false;
    }
    match compile(candidates, governance, certificate.escalation_policy_id.as_deref()) {
        Ok((_, fresh)) => fresh.to_canonical_bytes() == certificate.to_canonical_bytes(),
        Err(_) => false,
    }
}

/// Byte-level verification of a serialized certificate.
pub fn verify_bytes(bytes: &[u8], candidates: &[CandidateEntry], governance: &GovernanceSpec) -> bool {
    let Ok(cert) = Certificate::from_slice(bytes) else {
        return false;
    };
    verify(&cert, candidates, governance) && cert.to_canonical_bytes() == bytes
}

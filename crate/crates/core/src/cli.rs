//! Subcommand implementations. Each returns the bytes to emit and an exit
//! code; `main` only parses flags and routes output.
//!
//! Exit codes: 0 success or `Act`, 1 error, 2 `Escalate`, 3 `Abort`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::analytic::exact_metrics;
use crate::canonical::to_canonical_vec;
use crate::config::{OutputFormat, RunConfig, SweepConfig, REFERENCE_ROLLOUTS};
use crate::engine::{run_paired, OutcomeSet};
use crate::error::{Error, Result};
use crate::gate::{admissible, decide, decision_flip_check, naive_choice};
use crate::pcac::{self, CandidateEntry};
use crate::rng::{stream_key, tag, Domain};
use crate::stats::{
    bootstrap_paired_mean, metric_vector_with, p_viol_interval_method, MetricOptions, Sample,
};
use crate::types::{Decision, GovernanceSpec, MetricId, MetricVector, PolicySpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const EXIT_ERROR: i32 = 1;

/// Command-line overrides applied on top of a config file or preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rollouts: Option<u64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Loads the config (or the reference preset when no path is given) and
/// applies overrides, revalidating the result.
pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::regime_switch_reference(),
    };
    if let Some(s) = ov.seed {
        cfg.batch.master_seed = s;
    }
    if let Some(n) = ov.rollouts {
        cfg.batch.n = n;
    }
    if let Some(a) = ov.alpha {
        let g = &cfg.governance;
        cfg.governance = GovernanceSpec::new(
            g.hard.clone(),
            g.criteria_order.clone(),
            g.tie_rule,
            g.estimator_mode,
            a,
            g.confidence,
        )
        .map_err(|e| Error::InvalidConfig(format!("`--alpha`: {e}")))?;
    }
    if let Some(out) = &ov.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(f) = ov.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommandOutput {
    /// Primary artifact: report, table or certificate.
    pub body: Vec<u8>,
    /// Human-readable status lines.
    pub messages: Vec<String>,
    pub exit_code: i32,
}

impl CommandOutput {
    fn new(body: Vec<u8>, exit_code: i32) -> Self {
        CommandOutput {
            body,
            messages: Vec::new(),
            exit_code,
        }
    }

    fn note(mut self, msg: impl Into<String>) -> Self {
        self.messages.push(msg.into());
        self
    }
}

pub struct Evaluated {
    pub policy: PolicySpec,
    pub outcomes: OutcomeSet,
    pub metrics: Result<MetricVector>,
}

/// Runs every policy on shared worlds and summarizes each.
pub fn evaluate_all(cfg: &RunConfig) -> Result<Vec<Evaluated>> {
    let mut sets = run_paired(
        &cfg.policies,
        &cfg.scenario,
        &cfg.utility,
        &cfg.batch,
        &cfg.constraints,
    )?;
    let opts = MetricOptions {
        resamples: cfg.bootstrap_resamples,
        seed: None,
    };
    Ok(cfg
        .policies
        .iter()
        .map(|p| {
            let outcomes = sets.remove(&p.id).expect("one set per policy");
            let metrics = metric_vector_with(&outcomes, &cfg.governance, &cfg.constraints, &opts);
            Evaluated {
                policy: p.clone(),
                outcomes,
                metrics,
            }
        })
        .collect())
}

fn successful(evaluated: &[Evaluated]) -> Result<Vec<(PolicySpec, MetricVector)>> {
    evaluated
        .iter()
        .map(|e| match &e.metrics {
            Ok(m) => Ok((e.policy.clone(), m.clone())),
            Err(err) => Err(Error::InsufficientData(format!("policy `{}`: {err}", e.policy.id))),
        })
        .collect()
}

fn interval_json(i: crate::types::Interval) -> Value {
    json!([i.lo, i.hi])
}

fn metrics_json(m: &MetricVector, outcomes: &OutcomeSet, gov: &GovernanceSpec) -> Result<Value> {
    let p_method = p_viol_interval_method(&Sample::from_outcomes(outcomes)?);
    let estimator = if outcomes.is_weighted() {
        "self_normalized_weighted"
    } else {
        "sample"
    };
    Ok(json!({
        "n": m.n,
        "confidence": gov.confidence,
        "e_u": {
            "value": m.e_u, "ci": interval_json(m.ci_e_u), "units": "utility",
            "estimator": estimator, "interval": "bootstrap_percentile",
        },
        "var_u": {
            "value": m.var_u, "units": "utility^2", "estimator": estimator,
        },
        "p_viol": {
            "value": m.p_viol, "ci": interval_json(m.ci_p_viol), "units": "probability",
            "estimator": estimator, "interval": p_method,
        },
        "cvar": {
            "value": m.cvar, "ci": interval_json(m.ci_cvar), "units": "loss",
            "alpha": m.alpha, "convention": "fractional_tail",
            "estimator": estimator, "interval": "bootstrap_percentile",
        },
    }))
}

fn report_header(command: &str, cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut r = serde_json::Map::new();
    r.insert("schema_version".into(), json!(REPORT_SCHEMA_VERSION));
    r.insert("command".into(), json!(command));
    r.insert("config".into(), cfg.to_json_value());
    r.insert("seed".into(), json!(cfg.batch.master_seed));
    r.insert("sampling_plan".into(), json!(cfg.batch.sampling_plan.name()));
    r.insert("estimator_mode".into(), json!(cfg.governance.estimator_mode));
    r
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

fn with_timing(mut report: Value, started: Instant) -> Value {
    report["timing"] = json!({ "wall_time_ms": started.elapsed().as_millis() as u64 });
    report
}

/// Evaluation report without the timing block; deterministic in
/// (config, seed) regardless of thread count.
pub fn evaluation_report(cfg: &RunConfig) -> Result<(Value, bool)> {
    let evaluated = evaluate_all(cfg)?;
    let mut all_ok = true;
    let mut rows = Vec::with_capacity(evaluated.len());
    for e in &evaluated {
        rows.push(match &e.metrics {
            Ok(m) => json!({
                "policy_id": e.policy.id,
                "status": "ok",
                "metrics": metrics_json(m, &e.outcomes, &cfg.governance)?,
            }),
            Err(err) => {
                all_ok = false;
                json!({ "policy_id": e.policy.id, "status": "error", "error": err.to_string() })
            }
        });
    }
    let mut r = report_header("evaluate", cfg);
    r.insert("policies".into(), Value::Array(rows));
    Ok((Value::Object(r), all_ok))
}

fn rollout_csv(cfg: &RunConfig) -> Result<Vec<u8>> {
    let evaluated = evaluate_all(cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["policy_id", "record", "onset", "utility", "loss", "violated", "weight", "stratum"])
        .map_err(io)?;
    for e in &evaluated {
        for (i, r) in e.outcomes.records.iter().enumerate() {
            w.write_record([
                e.policy.id.clone(),
                i.to_string(),
                r.onset.to_string(),
                r.utility.to_string(),
                r.loss.to_string(),
                r.violated.to_string(),
                r.weight.to_string(),
                r.stratum.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<CommandOutput> {
    let started = Instant::now();
    if cfg.output.format == OutputFormat::Csv {
        return Ok(CommandOutput::new(rollout_csv(cfg)?, 0));
    }
    let (report, all_ok) = evaluation_report(cfg)?;
    let out = CommandOutput::new(pretty(&with_timing(report, started)), if all_ok { 0 } else { EXIT_ERROR });
    Ok(if all_ok {
        out
    } else {
        out.note("one or more policies could not be summarized; see the `error` entries")
    })
}

/// Paired-difference report for every policy pair, in config order.
pub fn comparison_report(cfg: &RunConfig) -> Result<Value> {
    if cfg.policies.len() < 2 {
        return Err(Error::InvalidConfig("compare needs at least two policies".into()));
    }
    let evaluated = evaluate_all(cfg)?;
    let conf = cfg.governance.confidence;
    let mut pairs = Vec::new();
    for (i, a) in evaluated.iter().enumerate() {
        for b in &evaluated[i + 1..] {
            let seed = stream_key(
                cfg.batch.master_seed,
                Domain::Bootstrap,
                tag(&format!("pair:{}|{}", a.policy.id, b.policy.id)),
            );
            let paired =
                bootstrap_paired_mean(&a.outcomes, &b.outcomes, cfg.bootstrap_resamples, conf, seed)?;
            let sa = Sample::from_outcomes(&a.outcomes)?;
            let sb = Sample::from_outcomes(&b.outcomes)?;
            let independent_se = (sa.weighted_se(|o| o.utility)?.powi(2)
                + sb.weighted_se(|o| o.utility)?.powi(2))
            .sqrt();
            pairs.push(json!({
                "a": a.policy.id,
                "b": b.policy.id,
                "delta_e_u": {
                    "value": paired.estimate,
                    "ci": interval_json(paired.ci),
                    "se": paired.se,
                    "units": "utility",
                    "estimator": "paired_bootstrap",
                },
                "independent_se": independent_se,
            }));
        }
    }
    let mut r = report_header("compare", cfg);
    r.insert("pairs".into(), Value::Array(pairs));
    Ok(Value::Object(r))
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<CommandOutput> {
    let started = Instant::now();
    let report = comparison_report(cfg)?;
    Ok(CommandOutput::new(pretty(&with_timing(report, started)), 0))
}

pub fn gate_report(cfg: &RunConfig) -> Result<(Value, Decision)> {
    if cfg.policies.is_empty() {
        return Err(Error::InvalidConfig("gate needs at least one policy".into()));
    }
    let evaluated = successful(&evaluate_all(cfg)?)?;
    let esc = cfg.escalation_policy_id.as_deref();
    let decision = decide(&evaluated, &cfg.governance, esc, cfg.champion_id.as_deref())?;
    let naive = naive_choice(&evaluated, esc);
    let mut rows = Vec::new();
    for (p, m) in &evaluated {
        let report = admissible(&p.id, m, &cfg.governance)?;
        rows.push(json!({
            "policy_id": p.id,
            "metrics": { "e_u": m.e_u, "p_viol": m.p_viol, "cvar": m.cvar, "var_u": m.var_u, "n": m.n },
            "admissibility": report,
        }));
    }
    let mut r = report_header("gate", cfg);
    r.insert("policies".into(), Value::Array(rows));
    r.insert("decision".into(), serde_json::to_value(&decision)?);
    r.insert("naive_choice".into(), json!(naive));
    r.insert(
        "decision_flip".into(),
        json!(naive.as_deref().map(|n| decision_flip_check(n, &decision))),
    );
    Ok((Value::Object(r), decision))
}

pub fn cmd_gate(cfg: &RunConfig) -> Result<CommandOutput> {
    let started = Instant::now();
    let (report, decision) = gate_report(cfg)?;
    Ok(CommandOutput::new(pretty(&with_timing(report, started)), decision.exit_code())
        .note(format!("decision: {decision}")))
}

pub fn candidates(cfg: &RunConfig) -> Result<Vec<CandidateEntry>> {
    Ok(successful(&evaluate_all(cfg)?)?
        .into_iter()
        .map(|(p, m)| CandidateEntry::new(p.id, m))
        .collect())
}

/// Compiles a certificate; when the config names an output path the
/// certificate is written there and re-verified from disk.
pub fn cmd_compile(cfg: &RunConfig) -> Result<CommandOutput> {
    let cands = candidates(cfg)?;
    let (decision, cert) = pcac::compile(&cands, &cfg.governance, cfg.escalation_policy_id.as_deref())?;
    let bytes = cert.to_canonical_bytes();
    let check = match &cfg.output.path {
        Some(path) => {
            std::fs::write(path, &bytes)
                .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
            std::fs::read(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?
        }
        None => bytes.clone(),
    };
    if !pcac::verify_bytes(&check, &cands, &cfg.governance) {
        return Ok(CommandOutput::new(Vec::new(), EXIT_ERROR).note("certificate failed verification after write"));
    }
    Ok(CommandOutput::new(bytes, decision.exit_code())
        .note(format!("gov_hash: {}", cert.gov_hash))
        .note(format!("verdict: {decision}"))
        .note(format!("digest: {}", cert.digest())))
}

/// Recomputes candidates from the config and checks a stored certificate.
pub fn cmd_verify(cfg: &RunConfig, certificate: &Path) -> Result<CommandOutput> {
    let bytes = std::fs::read(certificate)
        .map_err(|e| Error::Serialization(format!("{}: {e}", certificate.display())))?;
    let cands = candidates(cfg)?;
    Ok(if pcac::verify_bytes(&bytes, &cands, &cfg.governance) {
        CommandOutput::new(Vec::new(), 0).note(format!("{}: verified", certificate.display()))
    } else {
        CommandOutput::new(Vec::new(), EXIT_ERROR).note(format!("{}: verification failed", certificate.display()))
    })
}

fn verdict_token(d: &Decision) -> String {
    match d {
        Decision::Act(id) => format!("act:{id}"),
        Decision::Escalate => "escalate".into(),
        Decision::Abort => "abort".into(),
    }
}

/// Threshold sweep over cached metric vectors.
pub fn sweep_table(
    evaluated: &[(PolicySpec, MetricVector)],
    cfg: &RunConfig,
    sweep: &SweepConfig,
) -> Result<Vec<u8>> {
    if sweep.values.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["threshold", "admissible_ids", "verdict"]).map_err(io)?;
    let esc = cfg.escalation_policy_id.as_deref();
    for &v in &sweep.values {
        let gov = cfg.governance.with_threshold(sweep.metric, v)?;
        let mut ids = Vec::new();
        for (p, m) in evaluated {
            if admissible(&p.id, m, &gov)?.admissible {
                ids.push(p.id.as_str());
            }
        }
        ids.sort_unstable();
        let d = decide(evaluated, &gov, esc, cfg.champion_id.as_deref())?;
        w.write_record([v.to_string(), ids.join(";"), verdict_token(&d)]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn cmd_sweep(cfg: &RunConfig, metric: Option<&str>, values: Option<&[f64]>) -> Result<CommandOutput> {
    let sweep = match (metric, values, &cfg.sweep) {
        (Some(m), Some(v), _) => SweepConfig {
            metric: MetricId::parse(m)?,
            values: v.to_vec(),
        },
        (Some(m), None, Some(s)) => SweepConfig {
            metric: MetricId::parse(m)?,
            values: s.values.clone(),
        },
        (None, Some(v), Some(s)) => SweepConfig {
            metric: s.metric,
            values: v.to_vec(),
        },
        (None, None, Some(s)) => s.clone(),
        _ => {
            return Err(Error::InvalidConfig(
                "sweep needs a metric and a value grid (`sweep` section or --metric/--values)".into(),
            ))
        }
    };
    if sweep.values.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let evaluated = successful(&evaluate_all(cfg)?)?;
    Ok(CommandOutput::new(sweep_table(&evaluated, cfg, &sweep)?, 0))
}

/// One line of the reproduction table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproLine {
    pub policy_id: String,
    pub quantity: &'static str,
    pub estimate: f64,
    pub analytic: f64,
    pub published: f64,
    pub tolerance: f64,
    pub pass: bool,
}

type PublishedRow = (&'static str, f64, f64);

/// Published table values and the 200k-rollout tolerance bands, per
/// policy: (quantity, published, tolerance).
const PUBLISHED: [(&str, [PublishedRow; 3]); 2] = [
    ("pi_A", [("e_u", 8.753, 0.25), ("p_viol", 0.07818, 0.0024), ("cvar", 47.443, 0.35)]),
    ("pi_B", [("e_u", 8.874, 0.25), ("p_viol", 0.02035, 0.0013), ("cvar", 37.604, 0.30)]),
];

/// Runs the reference comparison at `n` rollouts and checks each estimate
/// against the exact value, widening the bands as `sqrt(200000 / n)`.
pub fn reproduce(seed: u64, n: u64) -> Result<Vec<ReproLine>> {
    if n == 0 {
        return Err(Error::InvalidConfig("rollouts must be at least 1".into()));
    }
    let mut cfg = RunConfig::regime_switch_reference();
    cfg.batch.master_seed = seed;
    cfg.batch.n = n;
    let sets = run_paired(
        &cfg.policies,
        &cfg.scenario,
        &cfg.utility,
        &cfg.batch,
        &cfg.constraints,
    )?;
    let scale = (REFERENCE_ROLLOUTS as f64 / n as f64).sqrt();
    let alpha = cfg.governance.alpha;
    let mut lines = Vec::new();
    for (p, (id, rows)) in cfg.policies.iter().zip(PUBLISHED) {
        debug_assert_eq!(p.id, id);
        let exact = exact_metrics(p, &cfg.scenario, &cfg.utility, &cfg.constraints, alpha)?;
        let sample = Sample::from_outcomes(&sets[&p.id])?;
        for (quantity, published, tol) in rows {
            let (estimate, analytic) = match quantity {
                "e_u" => (sample.mean()?, exact.e_u),
                "p_viol" => (sample.p_viol()?, exact.p_viol),
                _ => (
                    sample.cvar(alpha, crate::stats::CvarConvention::FractionalTail)?,
                    exact.cvar_fractional_tail,
                ),
            };
            let tolerance = tol * scale;
            lines.push(ReproLine {
                policy_id: p.id.clone(),
                quantity,
                estimate,
                analytic,
                published,
                tolerance,
                pass: (estimate - analytic).abs() <= tolerance,
            });
        }
    }
    Ok(lines)
}

pub fn cmd_reproduce(seed: u64, n: u64) -> Result<CommandOutput> {
    let lines = reproduce(seed, n)?;
    let mut text = format!(
        "{:<6} {:<8} {:>12} {:>12} {:>10} {:>10}  result\n",
        "policy", "metric", "estimate", "analytic", "published", "tolerance"
    );
    for l in &lines {
        text.push_str(&format!(
            "{:<6} {:<8} {:>12.6} {:>12.6} {:>10} {:>10.5}  {}\n",
            l.policy_id,
            l.quantity,
            l.estimate,
            l.analytic,
            l.published,
            l.tolerance,
            if l.pass { "PASS" } else { "FAIL" }
        ));
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    Ok(CommandOutput::new(text.into_bytes(), 0)
        .note(format!("{passed}/{} quantities within tolerance (seed {seed}, n {n})", lines.len())))
}

/// Canonical bytes of a report with its timing block removed; used to
/// compare runs for determinism.
pub fn deterministic_bytes(report: &[u8]) -> Result<Vec<u8>> {
    let mut v: Value = serde_json::from_slice(report)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    to_canonical_vec(&v)
}

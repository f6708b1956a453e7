//! Structured report documents.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use softmdp_core::{EquivalenceReport, EvaluationMode, SolveConfig, SolveReport, SweepSummary};

use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of the input file, or of the suite description.
    pub input_digest: String,
    pub seed: Option<u64>,
    pub config: ConfigDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

impl Provenance {
    pub fn new(input: &[u8], seed: Option<u64>, config: ConfigDoc, deterministic: bool) -> Self {
        let generated_at_unix = (!deterministic)
            .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()));
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            input_digest: sha256_hex(input),
            seed,
            config,
            generated_at_unix,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigDoc {
    pub method: Option<&'static str>,
    pub regularizers: Vec<&'static str>,
    pub etas: Vec<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub evaluation_mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl ConfigDoc {
    pub fn from_solve_config(config: &SolveConfig<f64>) -> Self {
        ConfigDoc {
            method: None,
            regularizers: Vec::new(),
            etas: Vec::new(),
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
            evaluation_mode: mode_label(config.evaluation_mode),
            threshold: None,
        }
    }
}

pub fn mode_label(mode: EvaluationMode) -> &'static str {
    match mode {
        EvaluationMode::Iterative => "iterative",
        EvaluationMode::ExactLinear => "exact",
    }
}

#[derive(Debug, Serialize)]
pub struct SolveDoc {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub value: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_q_increment: Option<f64>,
}

impl From<&SolveReport<f64>> for SolveDoc {
    fn from(r: &SolveReport<f64>) -> Self {
        SolveDoc {
            converged: r.converged,
            iterations: r.iterations,
            final_residual: r.final_residual,
            value: r.fixed_point_v.as_slice().to_vec(),
            q: r.fixed_point_q.to_rows(),
            policy: r.policy.to_rows(),
            trace: r.trace.clone(),
            min_q_increment: r.min_q_increment,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveReportFile {
    pub provenance: Provenance,
    pub report: SolveDoc,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceDoc {
    pub instance_id: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub eta: f64,
    pub reg: &'static str,
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spi_value_excess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spi_min_q_increment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vi_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spi_iterations: Option<usize>,
}

impl EquivalenceDoc {
    pub fn fill(&mut self, r: &EquivalenceReport<f64>) {
        self.verdict = r.verdict.label();
        self.q_gap = Some(r.q_gap);
        self.v_gap = Some(r.v_gap);
        self.policy_gap = Some(r.policy_gap);
        self.spi_value_excess = Some(r.spi_value_excess);
        self.spi_min_q_increment = Some(r.spi_min_q_increment);
        self.vi_iterations = Some(r.vi_iterations);
        self.spi_iterations = Some(r.spi_iterations);
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryDoc {
    pub instances: usize,
    pub passed: usize,
    pub gap_exceeded: usize,
    pub not_converged: usize,
    pub errors: usize,
    pub max_q_gap: f64,
    pub max_v_gap: f64,
    pub max_policy_gap: f64,
    pub vi_iterations_max: Option<usize>,
    pub vi_iterations_mean: Option<f64>,
    pub spi_iterations_max: Option<usize>,
    pub spi_iterations_mean: Option<f64>,
}

impl From<&SweepSummary<f64>> for SummaryDoc {
    fn from(s: &SweepSummary<f64>) -> Self {
        SummaryDoc {
            instances: s.instances,
            passed: s.passed,
            gap_exceeded: s.gap_exceeded,
            not_converged: s.not_converged,
            errors: s.errors,
            max_q_gap: s.max_q_gap,
            max_v_gap: s.max_v_gap,
            max_policy_gap: s.max_policy_gap,
            vi_iterations_max: s.vi_iterations.map(|i| i.max),
            vi_iterations_mean: s.vi_iterations.map(|i| i.mean),
            spi_iterations_max: s.spi_iterations.map(|i| i.max),
            spi_iterations_mean: s.spi_iterations.map(|i| i.mean),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompareReportFile {
    pub provenance: Provenance,
    pub summary: SummaryDoc,
    pub instances: Vec<EquivalenceDoc>,
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("report documents serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

/// Gap table with a fixed header and column order.
pub fn write_csv<W: std::io::Write>(out: W, rows: &[EquivalenceDoc]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "instance_id",
        "S",
        "A",
        "gamma",
        "eta",
        "reg",
        "q_gap",
        "v_gap",
        "policy_gap",
        "vi_iters",
        "spi_iters",
        "verdict",
    ])?;
    let real = |x: Option<f64>| x.map(crate::mdp_file::fmt_real).unwrap_or_default();
    let count = |x: Option<usize>| x.map(|n| n.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.instance_id.to_string(),
            r.num_states.to_string(),
            r.num_actions.to_string(),
            crate::mdp_file::fmt_real(r.gamma),
            crate::mdp_file::fmt_real(r.eta),
            r.reg.to_string(),
            real(r.q_gap),
            real(r.v_gap),
            real(r.policy_gap),
            count(r.vi_iterations),
            count(r.spi_iterations),
            r.verdict.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! The MDP document format: a JSON object with dense nested arrays.
//!
//! Reals are written in Rust's shortest round-trip form, so
//! `write(parse(write(m))) == write(m)` byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use softmdp_core::{validate_mdp, Policy, TabularMdp};

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    initial_distribution: Option<Vec<f64>>,
    #[serde(default)]
    prior_policy: Option<Vec<Vec<f64>>>,
}

/// A parsed and validated MDP file.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpFile {
    pub mdp: TabularMdp<f64>,
    pub prior: Option<Policy<f64>>,
}

/// Reads `path`; I/O and syntax problems are parse-class errors, broken
/// invariants are validation-class errors listing every violation.
pub fn load(path: &Path) -> CliResult<(MdpFile, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let file = parse(text).map_err(|e| match e {
        ParseError::Syntax(message) => CliError::Parse { path: path.to_path_buf(), message },
        ParseError::Invalid(v) => CliError::Validation(v),
    })?;
    Ok((file, bytes))
}

#[derive(Debug, PartialEq)]
pub enum ParseError {
    Syntax(String),
    Invalid(Vec<String>),
}

pub fn parse(text: &str) -> Result<MdpFile, ParseError> {
    let doc: MdpDocument = serde_json::from_str(text).map_err(|e| ParseError::Syntax(e.to_string()))?;
    let mut violations = Vec::new();
    if doc.rewards.len() != doc.num_states {
        violations.push(format!("rewards has {} rows but num_states is {}", doc.rewards.len(), doc.num_states));
    }
    if let Some(s) = doc.rewards.iter().position(|r| r.len() != doc.num_actions) {
        violations.push(format!(
            "rewards[{s}] has {} entries but num_actions is {}",
            doc.rewards[s].len(),
            doc.num_actions
        ));
    }
    if !violations.is_empty() {
        return Err(ParseError::Invalid(violations));
    }

    let mut mdp = TabularMdp::from_nested_unchecked(doc.gamma, doc.rewards, doc.transitions).map_err(|e| match e {
        softmdp_core::Error::InvalidMdp(v) => ParseError::Invalid(v.iter().map(ToString::to_string).collect()),
        other => ParseError::Invalid(vec![other.to_string()]),
    })?;
    mdp.initial_distribution = doc.initial_distribution;
    violations.extend(validate_mdp(&mdp).iter().map(ToString::to_string));

    let prior = match doc.prior_policy {
        None => None,
        Some(rows) => {
            if rows.len() != doc.num_states || rows.iter().any(|r| r.len() != doc.num_actions) {
                violations.push(format!("prior_policy must be {}x{}", doc.num_states, doc.num_actions));
                None
            } else {
                match Policy::from_rows(rows) {
                    Ok(p) => {
                        if let Some((s, a)) = p.first_zero() {
                            violations.push(format!("prior_policy entry not strictly positive at [{s}][{a}]"));
                        }
                        Some(p)
                    }
                    Err(e) => {
                        violations.push(format!("prior_policy: {e}"));
                        None
                    }
                }
            }
        }
    };
    if violations.is_empty() {
        Ok(MdpFile { mdp, prior })
    } else {
        Err(ParseError::Invalid(violations))
    }
}

/// Shortest decimal that parses back to exactly `x`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn write_row(out: &mut String, row: &[f64]) {
    out.push('[');
    for (i, x) in row.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_real(*x));
    }
    out.push(']');
}

fn write_matrix(out: &mut String, rows: &[Vec<f64>], indent: &str) {
    out.push_str("[\n");
    for (i, row) in rows.iter().enumerate() {
        out.push_str(indent);
        out.push_str("  ");
        write_row(out, row);
        out.push_str(if i + 1 < rows.len() { ",\n" } else { "\n" });
    }
    out.push_str(indent);
    out.push(']');
}

/// Serializes with a fixed field order and one innermost row per line.
pub fn write(file: &MdpFile) -> String {
    let mdp = &file.mdp;
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"num_states\": {},", mdp.num_states);
    let _ = writeln!(out, "  \"num_actions\": {},", mdp.num_actions);
    let _ = writeln!(out, "  \"gamma\": {},", fmt_real(mdp.gamma));
    out.push_str("  \"rewards\": ");
    write_matrix(&mut out, &mdp.rewards_nested(), "  ");
    out.push_str(",\n  \"transitions\": [\n");
    let transitions = mdp.transitions_nested();
    for (s, per_action) in transitions.iter().enumerate() {
        out.push_str("    ");
        write_matrix(&mut out, per_action, "    ");
        out.push_str(if s + 1 < transitions.len() { ",\n" } else { "\n" });
    }
    out.push_str("  ]");
    if let Some(init) = &mdp.initial_distribution {
        out.push_str(",\n  \"initial_distribution\": ");
        write_row(&mut out, init);
    }
    if let Some(prior) = &file.prior {
        out.push_str(",\n  \"prior_policy\": ");
        write_matrix(&mut out, &prior.to_rows(), "  ");
    }
    out.push_str("\n}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use softmdp_core::{random_mdp, random_positive_policy, seeded_rng};

    const SYMMETRIC: &str = r#"{
  "num_states": 1,
  "num_actions": 2,
  "gamma": 0.5,
  "rewards": [[0.0, 0.0]],
  "transitions": [[[1.0], [1.0]]]
}"#;

    #[test]
    fn parses_minimal_document() {
        let f = parse(SYMMETRIC).unwrap();
        assert_eq!(f.mdp.num_actions, 2);
        assert!(f.prior.is_none());
    }

    #[test]
    fn write_parse_write_is_byte_identical() {
        let mdp = random_mdp(42, 3, 2, 0.9, (-1.0, 1.0)).unwrap();
        let prior = random_positive_policy(&mut seeded_rng(1), 3, 2);
        let file = MdpFile { mdp, prior: Some(prior) };
        let text = write(&file);
        let back = parse(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(write(&back), text);
    }

    #[test]
    fn syntax_errors_are_distinct_from_violations() {
        assert!(matches!(parse("{ not json"), Err(ParseError::Syntax(_))));
        assert!(matches!(parse(r#"{"num_states": 1}"#), Err(ParseError::Syntax(_))));
        let bad = SYMMETRIC.replace("[[[1.0], [1.0]]]", "[[[0.9], [1.0]]]");
        match parse(&bad) {
            Err(ParseError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert!(v[0].contains("[0][0]"), "{}", v[0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn declared_counts_must_match_tables() {
        let bad = SYMMETRIC.replace("\"num_actions\": 2", "\"num_actions\": 3");
        assert!(matches!(parse(&bad), Err(ParseError::Invalid(_))));
    }

    #[test]
    fn prior_must_be_strictly_positive() {
        let with_prior = SYMMETRIC.replace("\n}", ",\n  \"prior_policy\": [[1.0, 0.0]]\n}");
        assert!(matches!(parse(&with_prior), Err(ParseError::Invalid(_))));
        let with_prior = SYMMETRIC.replace("\n}", ",\n  \"prior_policy\": [[0.25, 0.75]]\n}");
        assert!(parse(&with_prior).unwrap().prior.is_some());
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 0.9000000000000001] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_real(0.0), "0.0");
    }
}

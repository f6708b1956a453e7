use std::io::Write as _;
use std::path::Path;

use softmdp_core::oracle::{exhaustive_policy_check, kkt_residual, proposition1_check, EXHAUSTIVE_LIMIT};
use softmdp_core::solvers::DEFAULT_TOLERANCE;
use softmdp_core::{
    generate_suite, random_mdp_with, random_positive_policy, seeded_rng, soft_policy_iteration, soft_value_iteration,
    sweep, uniform_policy, EvaluationMode, RegKind, Regularizer, SolveConfig, SolveReport, SuiteSpec, TabularMdp,
};

use crate::error::{CliError, CliResult};
use crate::mdp_file::{self, MdpFile};
use crate::report::{
    self, CompareReportFile, ConfigDoc, EquivalenceDoc, Provenance, SolveDoc, SolveReportFile, SummaryDoc,
};
use crate::{CheckKind, CompareArgs, EvalModeArg, GenerateArgs, Method, RegArg, SolveArgs, SolverFlags, VerifyArgs};

const TOLERANCE_ENV: &str = "SOFTMDP_DEFAULT_TOL";
const SUMMARY_STATES: usize = 10;

fn guard(msg: impl Into<String>) -> CliError {
    CliError::Guard(msg.into())
}

/// Flag, then `$SOFTMDP_DEFAULT_TOL`, then the library default.
fn resolve_tolerance(flag: Option<f64>) -> CliResult<f64> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOLERANCE_ENV) {
            Ok(s) => s.trim().parse::<f64>().map_err(|_| guard(format!("{TOLERANCE_ENV}={s:?} is not a number")))?,
            Err(_) => DEFAULT_TOLERANCE,
        },
    };
    if tol > 0.0 && tol.is_finite() {
        Ok(tol)
    } else {
        Err(guard(format!("tolerance must be positive, got {tol}")))
    }
}

fn solve_config(flags: &SolverFlags, mode: EvaluationMode) -> CliResult<SolveConfig<f64>> {
    let config = SolveConfig::default()
        .with_tolerance(resolve_tolerance(flags.tol)?)
        .with_max_iterations(flags.max_iter)
        .with_evaluation_mode(mode);
    config.validate().map_err(|e| guard(e.to_string()))?;
    Ok(config)
}

fn eval_mode(arg: EvalModeArg) -> EvaluationMode {
    match arg {
        EvalModeArg::Iterative => EvaluationMode::Iterative,
        EvalModeArg::Exact => EvaluationMode::ExactLinear,
    }
}

fn parse_pair<T: std::str::FromStr>(text: &str, sep: &str, what: &str) -> CliResult<(T, T)> {
    let parsed = text.split_once(sep).and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.ok_or_else(|| guard(format!("{what} must look like LO{sep}HI, got {text:?}")))
}

/// Builds the regularizer for a file-backed command.
fn build_regularizer(
    reg: RegArg,
    eta: Option<f64>,
    file: &MdpFile,
    uniform_prior: bool,
) -> CliResult<Regularizer<f64>> {
    if uniform_prior && reg != RegArg::Kl {
        return Err(guard("--uniform-prior only applies to --reg kl"));
    }
    let eta_value = eta.unwrap_or(1.0);
    match reg {
        RegArg::None => {
            if eta.is_some() {
                eprintln!("warning: --eta is ignored with --reg none");
            }
            Ok(Regularizer::None)
        }
        RegArg::Entropy => Regularizer::entropy(eta_value).map_err(|e| guard(e.to_string())),
        RegArg::Kl => {
            let prior = match (&file.prior, uniform_prior) {
                (Some(_), true) => return Err(guard("--uniform-prior conflicts with the prior_policy in the file")),
                (Some(p), false) => p.clone(),
                (None, true) => uniform_policy(&file.mdp),
                (None, false) => return Err(guard("--reg kl requires prior_policy in the file or --uniform-prior")),
            };
            Regularizer::kl_to_prior(eta_value, prior).map_err(|e| guard(e.to_string()))
        }
    }
}

pub fn check(path: &Path) -> CliResult<()> {
    mdp_file::load(path).map(|_| ())
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let range: (f64, f64) = parse_pair(&args.reward_range, ",", "--reward-range")?;
    let mut rng = seeded_rng(args.seed);
    let mdp =
        random_mdp_with(&mut rng, args.states, args.actions, args.gamma, range).map_err(|e| guard(e.to_string()))?;
    let prior = args.with_prior.then(|| random_positive_policy(&mut rng, args.states, args.actions));
    let text = mdp_file::write(&MdpFile { mdp, prior });
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write { path: path.clone(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_summary(method: Method, reg: &Regularizer<f64>, report: &SolveReport<f64>) {
    let method = match method {
        Method::Vi => "soft value iteration",
        Method::Spi => "soft policy iteration",
    };
    println!("method:      {method}");
    match reg.eta() {
        Some(eta) => println!("regularizer: {} (eta = {eta})", reg.name()),
        None => println!("regularizer: none"),
    }
    println!("converged:   {}", report.converged);
    println!("iterations:  {}", report.iterations);
    println!("residual:    {:e}", report.final_residual);
    let v = report.fixed_point_v.as_slice();
    for (s, value) in v.iter().enumerate().take(SUMMARY_STATES) {
        println!("V[{s}] = {}", mdp_file::fmt_real(*value));
    }
    if v.len() > SUMMARY_STATES {
        println!("... {} more states in the report file", v.len() - SUMMARY_STATES);
    }
}

pub fn solve(args: &SolveArgs, deterministic: bool) -> CliResult<()> {
    if args.method == Method::Vi && args.eval_mode.is_some() {
        return Err(guard("--eval-mode only applies to --method spi"));
    }
    let (file, bytes) = mdp_file::load(&args.path)?;
    let reg = build_regularizer(args.reg, args.eta, &file, args.solver.uniform_prior)?;
    let mode = eval_mode(args.eval_mode.unwrap_or(EvalModeArg::Exact));
    let config = solve_config(&args.solver, mode)?.with_trace(args.trace);
    let report = match args.method {
        Method::Vi => soft_value_iteration(&file.mdp, &reg, &config, None)?,
        Method::Spi => soft_policy_iteration(&file.mdp, &reg, &config, None)?,
    };
    print_summary(args.method, &reg, &report);

    if let Some(out) = &args.out {
        let mut cfg = ConfigDoc::from_solve_config(&config);
        cfg.method = Some(match args.method {
            Method::Vi => "vi",
            Method::Spi => "spi",
        });
        cfg.regularizers = vec![reg.name()];
        cfg.etas = reg.eta().into_iter().collect();
        let doc = SolveReportFile {
            provenance: Provenance::new(&bytes, None, cfg, deterministic),
            report: SolveDoc::from(&report),
        };
        report::write_json(out, &doc)?;
    }
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "no convergence after {} iterations (residual {:e})",
            report.iterations, report.final_residual
        )))
    }
}

struct Instance {
    id: usize,
    reg_label: &'static str,
    eta: f64,
    mdp: TabularMdp<f64>,
    reg: Regularizer<f64>,
}

struct Instances {
    list: Vec<Instance>,
    regs: Vec<RegArg>,
    digest_input: Vec<u8>,
    seed: Option<u64>,
}

fn compare_instances(args: &CompareArgs) -> CliResult<Instances> {
    let mut regs = args.reg.clone().unwrap_or_else(|| vec![RegArg::Entropy, RegArg::Kl]);
    if regs.contains(&RegArg::None) {
        return Err(guard("compare needs an entropy or kl regularizer"));
    }
    if args.eta_list.is_empty() || args.eta_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(guard("every --eta-list entry must be positive"));
    }
    match (&args.path, args.random_suite) {
        (Some(_), Some(_)) => Err(guard("give either an MDP file or --random-suite, not both")),
        (None, None) => Err(guard("give an MDP file or --random-suite N")),
        (Some(path), None) => {
            let (file, bytes) = mdp_file::load(path)?;
            if args.reg.is_none() && file.prior.is_none() && !args.solver.uniform_prior {
                regs.retain(|&r| r != RegArg::Kl);
            }
            let mut out = Vec::new();
            for &eta in &args.eta_list {
                for &reg in &regs {
                    let r = build_regularizer(reg, Some(eta), &file, args.solver.uniform_prior && reg == RegArg::Kl)?;
                    out.push(Instance { id: 0, reg_label: r.name(), eta, mdp: file.mdp.clone(), reg: r });
                }
            }
            Ok(Instances { list: out, regs, digest_input: bytes, seed: None })
        }
        (None, Some(count)) => {
            if count == 0 {
                return Err(guard("--random-suite needs at least one instance"));
            }
            let spec = SuiteSpec {
                count,
                seed: args.seed,
                states: parse_pair(&args.states, "..", "--states")?,
                actions: parse_pair(&args.actions, "..", "--actions")?,
                gamma: parse_pair(&args.gamma_range, "..", "--gamma-range")?,
                reward_range: parse_pair(&args.reward_range, ",", "--reward-range")?,
                etas: args.eta_list.clone(),
                kinds: regs
                    .iter()
                    .map(|r| match (r, args.solver.uniform_prior) {
                        (RegArg::Kl, true) => RegKind::KlUniform,
                        (RegArg::Kl, false) => RegKind::KlRandomPrior,
                        _ => RegKind::Entropy,
                    })
                    .collect(),
            };
            let description = format!("{spec:?}");
            let suite = generate_suite(&spec).map_err(|e| guard(e.to_string()))?;
            let out = suite
                .into_iter()
                .map(|s| Instance { id: s.instance_id, reg_label: s.kind.label(), eta: s.eta, mdp: s.mdp, reg: s.reg })
                .collect();
            Ok(Instances { list: out, regs, digest_input: description.into_bytes(), seed: Some(args.seed) })
        }
    }
}

pub fn compare(args: &CompareArgs, deterministic: bool) -> CliResult<()> {
    if !(args.threshold >= 0.0 && args.threshold.is_finite()) {
        return Err(guard("--threshold must be nonnegative"));
    }
    let config = solve_config(&args.solver, eval_mode(args.eval_mode))?;
    let Instances { list: instances, regs, digest_input, seed } = compare_instances(args)?;
    let pairs: Vec<_> = instances.iter().map(|i| (i.mdp.clone(), i.reg.clone())).collect();

    let run = || sweep(&pairs, &config, args.threshold);
    let result = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| guard(e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    let docs: Vec<EquivalenceDoc> = instances
        .iter()
        .zip(&result.reports)
        .map(|(inst, outcome)| {
            let mut doc = EquivalenceDoc {
                instance_id: inst.id,
                num_states: inst.mdp.num_states,
                num_actions: inst.mdp.num_actions,
                gamma: inst.mdp.gamma,
                eta: inst.eta,
                reg: inst.reg_label,
                verdict: "error",
                error: None,
                q_gap: None,
                v_gap: None,
                policy_gap: None,
                spi_value_excess: None,
                spi_min_q_increment: None,
                vi_iterations: None,
                spi_iterations: None,
            };
            match outcome {
                Ok(r) => doc.fill(r),
                Err(e) => doc.error = Some(e.to_string()),
            }
            doc
        })
        .collect();

    match &args.csv {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| CliError::Write { path: path.clone(), source })?;
            report::write_csv(file, &docs)
                .map_err(|e| CliError::Write { path: path.clone(), source: std::io::Error::other(e) })?;
        }
        None => {
            let stdout = std::io::stdout();
            report::write_csv(stdout.lock(), &docs)
                .map_err(|e| CliError::Write { path: "<stdout>".into(), source: std::io::Error::other(e) })?;
        }
    }

    let summary = &result.summary;
    if let Some(out) = &args.out {
        let mut cfg = ConfigDoc::from_solve_config(&config);
        cfg.regularizers = regs
            .iter()
            .map(|r| match r {
                RegArg::Entropy => "entropy",
                RegArg::Kl => "kl",
                RegArg::None => "none",
            })
            .collect();
        cfg.etas = args.eta_list.clone();
        cfg.threshold = Some(args.threshold);
        let doc = CompareReportFile {
            provenance: Provenance::new(&digest_input, seed, cfg, deterministic),
            summary: SummaryDoc::from(summary),
            instances: docs,
        };
        report::write_json(out, &doc)?;
    }

    eprintln!(
        "{} of {} comparisons passed (threshold {:e}); max q_gap {:e}, max policy_gap {:e}",
        summary.passed, summary.instances, args.threshold, summary.max_q_gap, summary.max_policy_gap
    );
    let _ = std::io::stderr().flush();
    if summary.not_converged > 0 {
        Err(CliError::NotConverged(format!("{} comparison(s) did not converge", summary.not_converged)))
    } else if !summary.all_passed() {
        Err(CliError::EquivalenceFailed(format!(
            "{} comparison(s) exceeded the threshold, {} errored",
            summary.gap_exceeded, summary.errors
        )))
    } else {
        Ok(())
    }
}

fn status(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    let (file, _) = mdp_file::load(&args.path)?;
    let reg = build_regularizer(args.reg, args.eta, &file, args.solver.uniform_prior)?;
    let wants = |k: CheckKind| args.checks == k || args.checks == CheckKind::All;
    let (ns, na) = (file.mdp.num_states, file.mdp.num_actions);
    if wants(CheckKind::Exhaustive) && (ns > EXHAUSTIVE_LIMIT || na > EXHAUSTIVE_LIMIT) {
        return Err(guard(format!(
            "exhaustive check is limited to {EXHAUSTIVE_LIMIT} states and {EXHAUSTIVE_LIMIT} actions; \
             this instance has {ns} states and {na} actions"
        )));
    }
    if args.checks == CheckKind::Kkt && matches!(reg, Regularizer::None) {
        return Err(guard("the kkt check needs an entropy or kl regularizer"));
    }

    let config = solve_config(&args.solver, EvaluationMode::ExactLinear)?;
    let solved = soft_value_iteration(&file.mdp, &reg, &config, None)?;
    if !solved.converged {
        return Err(CliError::NotConverged(format!(
            "value iteration did not converge in {} iterations",
            solved.iterations
        )));
    }
    let bound = 10.0 * config.tolerance;
    let mut all_pass = true;

    if wants(CheckKind::Kkt) {
        match reg.eta() {
            Some(eta) => {
                let kkt = kkt_residual(&file.mdp, &reg, &solved.fixed_point_v, &solved.policy)?;
                let (res, gap) = (kkt.max_abs_residual(), kkt.multiplier_identity_gap(&solved.fixed_point_v, eta));
                let pass = res <= bound && gap <= bound;
                all_pass &= pass;
                println!("kkt         max_residual={res:e} multiplier_gap={gap:e} bound={bound:e} {}", status(pass));
            }
            None => println!("kkt         skipped (unregularized)"),
        }
    }
    if wants(CheckKind::Prop1) {
        let dom = proposition1_check(&file.mdp, &solved.fixed_point_v, args.trials, args.seed)?;
        all_pass &= dom.passed();
        println!(
            "prop1       trials={} max_excess={:e} violations={} {}",
            dom.trials,
            dom.max_excess,
            dom.violations.len(),
            status(dom.passed())
        );
    }
    if wants(CheckKind::Exhaustive) {
        let ex = exhaustive_policy_check(&file.mdp, &reg, &solved.fixed_point_q, args.grid)?;
        all_pass &= ex.passed();
        println!(
            "exhaustive  policies={} max_excess={:e} closest_gap={:e} violations={} {}",
            ex.policies_checked,
            ex.max_excess,
            ex.closest_gap,
            ex.violations,
            status(ex.passed())
        );
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::EquivalenceFailed("at least one certificate failed".into()))
    }
}

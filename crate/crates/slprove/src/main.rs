//! Command-line front end: parse input files, prove every query, emit a
//! text table or JSON report.
//!
//! Exit codes: 0 = all queries Valid; 1 = some Unknown/Timeout; 2 = usage or
//! parse error; 3 = the oracle cross-check refuted a Valid verdict.

use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use slprove::engine::{render_tree_text, SearchBudget};
use slprove::parser::parse_program;
use slprove::pure::{Backend, SolverConfig};
use slprove::report::{emit_json, emit_text, summary_line, ReportVerdict, RunReport};
use slprove::runner::{any_soundness_violation, run_program, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "slprove",
    version,
    about = "Separation-logic entailment prover"
)]
struct Cli {
    /// Input files (sort/pred declarations and checkentail queries).
    #[arg(required = true)]
    files: Vec<String>,

    /// Per-query proof search budget in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,

    /// Maximum induction applications per proof path.
    #[arg(long)]
    max_induction: Option<u32>,

    /// Maximum right-hand predicate unfoldings per proof path.
    #[arg(long)]
    max_unfold: Option<u32>,

    /// Single-path induction: premises never see sibling-derived hypotheses.
    #[arg(long)]
    single_path: bool,

    /// Restrict FalseLeft1 to its syntactic u != u form.
    #[arg(long)]
    strict_rules: bool,

    /// Cross-check verdicts against bounded-model enumeration with heap size
    /// and location count K (integer range [-2, 2]).
    #[arg(long, value_name = "K")]
    check_oracle: Option<usize>,

    /// Attach rendered proof trees to Valid verdicts.
    #[arg(long)]
    trace: bool,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Pure-arithmetic backend: `internal` or `cmd:<shell template>` (an
    /// SMT-LIB 2 LIA solver reading stdin, e.g. `cmd:z3 -in`).
    #[arg(long, default_value = "internal")]
    pure_solver: String,
}

fn solver_config(cli: &Cli) -> Result<SolverConfig, String> {
    let backend = if cli.pure_solver == "internal" {
        Backend::Internal
    } else if let Some(cmd) = cli.pure_solver.strip_prefix("cmd:") {
        if cmd.trim().is_empty() {
            return Err("--pure-solver cmd: template is empty".into());
        }
        Backend::External(cmd.to_string())
    } else {
        return Err(format!(
            "--pure-solver must be `internal` or `cmd:<template>`, got `{}`",
            cli.pure_solver
        ));
    };
    Ok(SolverConfig {
        backend,
        ..SolverConfig::default()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let solver = match solver_config(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(2);
        }
    };
    let mut budget = SearchBudget {
        timeout_ms: cli.timeout_ms,
        mutual_mode: !cli.single_path,
        strict_rules: cli.strict_rules,
        ..SearchBudget::default()
    };
    if let Some(n) = cli.max_induction {
        budget.max_induction_apps = n;
    }
    if let Some(n) = cli.max_unfold {
        budget.max_right_unfolds = n;
    }
    let cfg = RunConfig {
        budget,
        solver,
        check_oracle: cli.check_oracle,
        trace: cli.trace,
    };

    let mut all_reports: Vec<RunReport> = Vec::new();
    let mut summaries: Vec<String> = Vec::new();
    let mut trees: Vec<(String, String)> = Vec::new();
    let mut violation = false;

    for file in &cli.files {
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {}: {}", file, e);
                return ExitCode::from(2);
            }
        };
        let prog = match parse_program(&text) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: {}: {}", file, e);
                return ExitCode::from(2);
            }
        };
        let outcomes = match run_program(&prog, &cfg) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {}: {}", file, e);
                return ExitCode::from(2);
            }
        };
        violation |= any_soundness_violation(&outcomes);
        if cli.trace {
            for o in &outcomes {
                if let Some(t) = &o.tree {
                    trees.push((o.report.name.clone(), render_tree_text(t)));
                }
            }
        }
        summaries.push(summary_line(
            file,
            &outcomes
                .iter()
                .map(|o| o.report.clone())
                .collect::<Vec<_>>(),
        ));
        all_reports.extend(outcomes.into_iter().map(|o| o.report));
    }

    match cli.format {
        Format::Text => {
            print!("{}", emit_text(&all_reports));
            for (name, rendered) in &trees {
                println!("\nproof {}:\n{}", name, rendered.trim_end());
            }
            for s in &summaries {
                println!("{}", s);
            }
        }
        Format::Json => print!("{}", emit_json(&all_reports)),
    }

    if violation {
        for r in &all_reports {
            if r.oracle
                .as_ref()
                .is_some_and(|o| o.result == "soundness-violation")
            {
                eprintln!(
                    "SOUNDNESS VIOLATION: {} proved Valid but the oracle found a counter-model",
                    r.name
                );
            }
        }
        return ExitCode::from(3);
    }
    if all_reports
        .iter()
        .all(|r| r.verdict == ReportVerdict::Valid)
    {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

//! Runs every query of a parsed program through the prover, optionally
//! cross-checking verdicts against the bounded-model oracle, and produces
//! `RunReport`s in input order.

use crate::ast::VarGen;
use crate::engine::{tree_json, ProofTree, Prover, SearchBudget, Verdict};
use crate::parser::Program;
use crate::pure::SolverConfig;
use crate::report::{OracleReport, ReportVerdict, RunReport};
use crate::semantics::{model_json, Bounds, Oracle, OracleError};

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub budget: SearchBudget,
    pub solver: SolverConfig,
    /// `Some(k)` enables counter-model search at Bounds(k, k, [-2, 2]).
    pub check_oracle: Option<usize>,
    /// Attach proof trees to Valid reports.
    pub trace: bool,
}

/// Everything `run_program` produces for one query, including the pieces a
/// caller may want beyond the report (the tree, for audits).
pub struct QueryOutcome {
    pub report: RunReport,
    pub tree: Option<ProofTree>,
}

fn run_query(
    prog: &Program,
    index: usize,
    cfg: &RunConfig,
    oracle: Option<&Oracle<'_>>,
) -> QueryOutcome {
    let q = &prog.queries[index];
    let start = std::time::Instant::now();
    let mut prover = Prover::new(
        &prog.preds,
        cfg.budget.clone(),
        cfg.solver.clone(),
        VarGen::starting_at(prog.next_var_id),
    );
    let res = prover.prove(&q.entailment);
    let time_ms = start.elapsed().as_millis() as u64;

    let verdict = match (res.verdict, res.timed_out) {
        (Verdict::Valid, _) => ReportVerdict::Valid,
        (Verdict::Unknown, true) => ReportVerdict::Timeout,
        (Verdict::Unknown, false) => ReportVerdict::Unknown,
    };
    let rule_counts = res
        .tree
        .as_ref()
        .map(|t| {
            t.rule_counts()
                .into_iter()
                .map(|(r, n)| (r.as_str().to_string(), n))
                .collect()
        })
        .unwrap_or_default();

    let oracle_report = oracle.map(|o| {
        let found = o.find_counter_model(&q.entailment);
        let bound = cfg.check_oracle.unwrap_or_default();
        match (verdict, found) {
            (_, Err(e)) => OracleReport {
                bound,
                result: format!("error: {}", e),
                counter_model: None,
            },
            (ReportVerdict::Valid, Ok(Some(m))) => OracleReport {
                bound,
                result: "soundness-violation".into(),
                counter_model: Some(model_json(&m, &prog.sorts)),
            },
            (ReportVerdict::Valid, Ok(None)) => OracleReport {
                bound,
                result: "pass".into(),
                counter_model: None,
            },
            (_, Ok(Some(m))) => OracleReport {
                bound,
                result: "refuted-within-bounds".into(),
                counter_model: Some(model_json(&m, &prog.sorts)),
            },
            (_, Ok(None)) => OracleReport {
                bound,
                result: "no-counter-model-within-bounds".into(),
                counter_model: None,
            },
        }
    });

    let tree_value = match (&res.tree, cfg.trace) {
        (Some(t), true) => Some(tree_json(t)),
        _ => None,
    };

    QueryOutcome {
        report: RunReport {
            name: q.name.clone(),
            verdict,
            time_ms,
            rule_counts,
            hypotheses_recorded: prover.stats.hypotheses_recorded,
            hypotheses_applied: prover.stats.hypotheses_applied,
            oracle: oracle_report,
            tree: tree_value,
        },
        tree: res.tree,
    }
}

/// Proves every query (one engine instance each) and reports in input order.
/// Queries run on a worker pool when the `parallel` feature is enabled.
pub fn run_program(prog: &Program, cfg: &RunConfig) -> Result<Vec<QueryOutcome>, OracleError> {
    let oracle = match cfg.check_oracle {
        Some(k) => Some(Oracle::new(
            &prog.preds,
            &prog.sorts,
            Bounds::new(k, k as u32, Some((-2, 2))),
        )?),
        None => None,
    };
    let indices: Vec<usize> = (0..prog.queries.len()).collect();

    #[cfg(feature = "parallel")]
    let outcomes: Vec<QueryOutcome> = {
        use rayon::prelude::*;
        indices
            .par_iter()
            .map(|&i| run_query(prog, i, cfg, oracle.as_ref()))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<QueryOutcome> = indices
        .iter()
        .map(|&i| run_query(prog, i, cfg, oracle.as_ref()))
        .collect();

    Ok(outcomes)
}

/// True when any oracle cross-check flagged a Valid verdict.
pub fn any_soundness_violation(outcomes: &[QueryOutcome]) -> bool {
    outcomes.iter().any(|o| {
        o.report
            .oracle
            .as_ref()
            .is_some_and(|r| r.result == "soundness-violation")
    })
}

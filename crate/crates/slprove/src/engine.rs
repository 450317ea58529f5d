//! The sequent calculus and recursive proof search with mutual explicit
//! induction.
//!
//! Rule priority: axioms, then normalization (deterministic, applied one
//! rewrite per search step so the trace discipline holds), then frame rules
//! (`StarData` before `StarPred`), then hypothesis application, then right
//! unfolding, then induction. Within a group, instances are tried in
//! canonical (left-to-right) order and the search backtracks across them.
//!
//! The hypothesis vault threads through premises left to right; in mutual
//! mode each premise additionally receives the entailments derived by its
//! finished siblings, in single-path mode only the vault the rule itself
//! introduced. A goal is promoted to valid status exactly when every
//! hypothesis used in its subproof was derived inside that subproof (or is
//! the goal itself).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use crate::ast::{
    free_vars, subst_apply, unfold_cases, AddrExpr, CmpOp, Entailment, Expr, IntExpr, PredEnv,
    Pure, SpatialAtom, Subst, SymbolicHeap, Term, Var, VarGen,
};
use crate::canon::{entailment_key, CanonKey};
use crate::printer::print_entailment;
use crate::pure::{check_implication, prove_pure, PureVerdict, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Unknown,
}

/// Hypothesis status: ⊤ (proved) or ⊥ (not yet known). Monotone ⊥→⊤.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Valid,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub ent: Entailment,
    pub status: Status,
}

/// Ordered set of hypotheses keyed by the canonical form of the entailment.
/// `insert` is the ⊕ union-and-update operator; a ⊤ status is never demoted.
#[derive(Debug, Clone, Default)]
pub struct HypoVault {
    entries: Vec<Hypothesis>,
    index: HashMap<CanonKey, usize>,
}

impl HypoVault {
    pub fn new() -> Self {
        HypoVault::default()
    }

    pub fn insert(&mut self, ent: Entailment, status: Status) {
        let key = entailment_key(&ent);
        match self.index.get(&key) {
            Some(&i) => {
                if status == Status::Valid {
                    self.entries[i].status = Status::Valid;
                }
            }
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(Hypothesis { ent, status });
            }
        }
    }

    pub fn merge(&mut self, other: &HypoVault) {
        for h in &other.entries {
            self.insert(h.ent.clone(), h.status);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, ent: &Entailment) -> bool {
        self.index.contains_key(&entailment_key(ent))
    }

    /// Entries in a deterministic order (per-entry canonical key, then
    /// status), for building path keys.
    fn ordered_entries(&self) -> Vec<(&Entailment, bool)> {
        let mut keyed: Vec<(CanonKey, bool, &Entailment)> = self
            .entries
            .iter()
            .map(|h| (entailment_key(&h.ent), h.status == Status::Valid, &h.ent))
            .collect();
        keyed.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        keyed.into_iter().map(|(_, v, e)| (e, v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleName {
    PureEntail,
    FalseLeft1,
    FalseLeft2,
    EqualLeft,
    EqualRight,
    ExistsLeft,
    ExistsRight,
    EmpLeft,
    EmpRight,
    StarData,
    StarPred,
    PredIntroRight,
    Induction,
    Hypo,
}

impl RuleName {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleName::PureEntail => "PureEntail",
            RuleName::FalseLeft1 => "FalseLeft1",
            RuleName::FalseLeft2 => "FalseLeft2",
            RuleName::EqualLeft => "EqualLeft",
            RuleName::EqualRight => "EqualRight",
            RuleName::ExistsLeft => "ExistsLeft",
            RuleName::ExistsRight => "ExistsRight",
            RuleName::EmpLeft => "EmpLeft",
            RuleName::EmpRight => "EmpRight",
            RuleName::StarData => "StarData",
            RuleName::StarPred => "StarPred",
            RuleName::PredIntroRight => "PredIntroRight",
            RuleName::Induction => "Induction",
            RuleName::Hypo => "Hypo",
        }
    }

    pub const ALL: [RuleName; 14] = [
        RuleName::PureEntail,
        RuleName::FalseLeft1,
        RuleName::FalseLeft2,
        RuleName::EqualLeft,
        RuleName::EqualRight,
        RuleName::ExistsLeft,
        RuleName::ExistsRight,
        RuleName::EmpLeft,
        RuleName::EmpRight,
        RuleName::StarData,
        RuleName::StarPred,
        RuleName::PredIntroRight,
        RuleName::Induction,
        RuleName::Hypo,
    ];

    pub fn is_axiom(&self) -> bool {
        matches!(
            self,
            RuleName::PureEntail | RuleName::FalseLeft1 | RuleName::FalseLeft2
        )
    }
}

impl std::fmt::Display for RuleName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Chronological rule list, most recent first ("(R) ⋉ 𝒯" prepends).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProofTrace(Vec<RuleName>);

impl ProofTrace {
    pub fn new() -> Self {
        ProofTrace(Vec::new())
    }

    pub fn push(&self, r: RuleName) -> ProofTrace {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(r);
        v.extend(self.0.iter().copied());
        ProofTrace(v)
    }

    /// Rules newest first.
    pub fn head_first(&self) -> &[RuleName] {
        &self.0
    }
}

/// Which disjunct of the †(Hypo) decreasing side condition held.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HypoEvidence {
    /// (status = ⊤): the hypothesis is already proved.
    ValidStatus,
    /// The leftover Σ′ contains a points-to atom.
    LeftoverPointsTo,
    /// 𝒯 = 𝒯1 ⧺ [StarData] ⧺ 𝒯2 with Induction ∉ 𝒯1 and Induction ∈ 𝒯2
    /// (indices counted from the head, i.e. most recent rule first).
    TraceSplit {
        star_data_at: usize,
        first_induction_at: usize,
    },
}

/// †(Hypo): succeeds iff the hypothesis may be applied without breaking the
/// decreasing condition of the induction principle.
pub fn check_hypo_side_condition(
    status: Status,
    leftover: &[SpatialAtom],
    trace: &ProofTrace,
) -> Option<HypoEvidence> {
    if status == Status::Valid {
        return Some(HypoEvidence::ValidStatus);
    }
    if leftover
        .iter()
        .any(|a| matches!(a, SpatialAtom::PointsTo { .. }))
    {
        return Some(HypoEvidence::LeftoverPointsTo);
    }
    let rules = trace.head_first();
    let first_ind = rules.iter().position(|r| *r == RuleName::Induction)?;
    let star = rules[..first_ind]
        .iter()
        .position(|r| *r == RuleName::StarData)?;
    Some(HypoEvidence::TraceSplit {
        star_data_at: star,
        first_induction_at: first_ind,
    })
}

/// Record of a hypothesis application, kept on the proof tree for audit.
#[derive(Debug, Clone)]
pub struct HypoUse {
    pub hypothesis: Entailment,
    pub status: Status,
    pub theta: Subst,
    pub leftover: Vec<SpatialAtom>,
    pub evidence: HypoEvidence,
}

#[derive(Debug, Clone)]
pub struct Premise {
    pub vault: HypoVault,
    pub trace: ProofTrace,
    pub goal: Entailment,
}

/// A rule with its conclusion unified against a goal: ready-to-prove
/// premises plus audit data. Premises are empty iff the rule is an axiom.
#[derive(Debug, Clone)]
pub struct RuleInstance {
    pub name: RuleName,
    pub premises: Vec<Premise>,
    pub hypo: Option<HypoUse>,
    /// FalseLeft1 only: the unsatisfiability was established by the pure
    /// solver rather than a syntactic `u != u` conjunct.
    pub generalized: bool,
}

impl RuleInstance {
    fn plain(name: RuleName, premises: Vec<Premise>) -> RuleInstance {
        RuleInstance {
            name,
            premises,
            hypo: None,
            generalized: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProofTree {
    pub goal: Entailment,
    pub rule: RuleName,
    /// Trace at this node's conclusion.
    pub trace: ProofTrace,
    pub hypo: Option<HypoUse>,
    pub generalized: bool,
    pub used: Vec<Entailment>,
    pub children: Vec<ProofTree>,
}

impl ProofTree {
    pub fn rule_counts(&self) -> BTreeMap<RuleName, u64> {
        let mut out = BTreeMap::new();
        self.walk(&mut |n| *out.entry(n.rule).or_insert(0) += 1);
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&ProofTree)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchBudget {
    pub timeout_ms: u64,
    pub max_induction_apps: u32,
    pub max_right_unfolds: u32,
    /// false = the single-path variant: premises see only the vault the
    /// applied rule introduced, never sibling-derived entailments.
    pub mutual_mode: bool,
    /// Restrict FalseLeft1 to the syntactic `u != u` form.
    pub strict_rules: bool,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            timeout_ms: 30_000,
            max_induction_apps: 3,
            max_right_unfolds: 8,
            mutual_mode: true,
            strict_rules: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchStats {
    /// Rule applications attempted (premises entered or axiom fired).
    pub rule_attempts: BTreeMap<RuleName, u64>,
    pub hypotheses_recorded: u64,
    pub hypotheses_applied: u64,
}

#[derive(Debug, Clone)]
pub struct ProveResult {
    pub verdict: Verdict,
    pub derived: HypoVault,
    pub used: Vec<Entailment>,
    pub tree: Option<ProofTree>,
    pub timed_out: bool,
}

// ------------------------------------------------------------------ rules

fn heap_without(h: &SymbolicHeap, drop: usize) -> SymbolicHeap {
    let spatial: Vec<SpatialAtom> = h
        .spatial
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != drop)
        .map(|(_, a)| a.clone())
        .collect();
    SymbolicHeap::new(h.exists.clone(), spatial, h.pure.clone())
}

fn syntactically_equal_exprs(a: &Expr, b: &Expr) -> bool {
    a == b
}

/// The equality `a = b` as a pure formula, by kind.
fn expr_eq(a: &Expr, b: &Expr) -> Pure {
    match (a, b) {
        (Expr::Addr(x), Expr::Addr(y)) => Pure::AddrEq(x.clone(), y.clone()),
        (Expr::Int(x), Expr::Int(y)) => Pure::IntCmp(CmpOp::Eq, x.clone(), y.clone()),
        (Expr::Addr(AddrExpr::Var(v)), Expr::Int(e))
        | (Expr::Int(e), Expr::Addr(AddrExpr::Var(v))) => {
            Pure::IntCmp(CmpOp::Eq, IntExpr::Var(v.clone()), e.clone())
        }
        // nil can never equal an integer expression
        (Expr::Addr(AddrExpr::Nil), Expr::Int(_)) | (Expr::Int(_), Expr::Addr(AddrExpr::Nil)) => {
            Pure::False
        }
    }
}

/// Axiom rules: FalseLeft1 (contradictory antecedent pure part), FalseLeft2
/// (overlaid points-to roots), PureEntail (both sides spatially emp and the
/// pure implication holds).
pub fn try_axiom(goal: &Entailment, solver: &SolverConfig, strict: bool) -> Option<RuleInstance> {
    // FalseLeft1, syntactic u != u
    let syntactic_absurd = goal.ante.pure.conjuncts().iter().any(|c| match c {
        Pure::AddrNe(a, b) => a == b,
        Pure::IntCmp(CmpOp::Ne, a, b) => a == b,
        Pure::False => true,
        _ => false,
    });
    if syntactic_absurd {
        return Some(RuleInstance::plain(RuleName::FalseLeft1, Vec::new()));
    }
    // FalseLeft2: two data nodes with the same root
    let mut roots: HashSet<u32> = HashSet::new();
    for atom in goal.ante.atoms() {
        if let SpatialAtom::PointsTo { root, .. } = atom {
            if !roots.insert(root.id) {
                return Some(RuleInstance::plain(RuleName::FalseLeft2, Vec::new()));
            }
        }
    }
    // PureEntail
    if goal.ante.is_spatially_emp() && goal.cons.is_spatially_emp() {
        if let Ok(PureVerdict::Valid) =
            prove_pure(&goal.ante.pure, &goal.cons.exists, &goal.cons.pure, solver)
        {
            return Some(RuleInstance::plain(RuleName::PureEntail, Vec::new()));
        }
    }
    // FalseLeft1 generalized to solver-proved unsatisfiability
    if !strict {
        if let Ok(PureVerdict::Valid) = check_implication(&goal.ante.pure, &Pure::False, solver) {
            return Some(RuleInstance {
                name: RuleName::FalseLeft1,
                premises: Vec::new(),
                hypo: None,
                generalized: true,
            });
        }
    }
    None
}

fn is_trivial_eq(p: &Pure) -> bool {
    match p {
        Pure::AddrEq(a, b) => a == b,
        Pure::IntCmp(CmpOp::Eq, a, b) => a == b,
        _ => false,
    }
}

/// First applicable normalization rewrite, or none when the goal is
/// normalization-stable.
pub fn try_normalize(
    goal: &Entailment,
    vault: &HypoVault,
    trace: &ProofTrace,
    vars: &mut VarGen,
) -> Option<RuleInstance> {
    let mk = |name: RuleName, ent: Entailment| {
        Some(RuleInstance::plain(
            name,
            vec![Premise {
                vault: vault.clone(),
                trace: trace.push(name),
                goal: ent,
            }],
        ))
    };

    // ExistsLeft: strip one antecedent binder as a fresh free variable
    if let Some(x) = goal.ante.exists.first().cloned() {
        let u = vars.fresh(&x.name);
        let stripped = SymbolicHeap {
            exists: goal.ante.exists[1..].to_vec(),
            spatial: goal.ante.spatial.clone(),
            pure: goal.ante.pure.clone(),
        };
        if let Ok(ante) = subst_apply(&stripped, &Subst::single(x, Term::Var(u)), vars) {
            return mk(
                RuleName::ExistsLeft,
                Entailment {
                    ante,
                    cons: goal.cons.clone(),
                },
            );
        }
    }

    // EqualLeft: drop an antecedent equality and substitute it away
    let ante_conjs: Vec<Pure> = goal.ante.pure.conjuncts().into_iter().cloned().collect();
    for (i, c) in ante_conjs.iter().enumerate() {
        let Pure::AddrEq(a, b) = c else { continue };
        let mut subs: Vec<Subst> = Vec::new();
        if let AddrExpr::Var(v) = b {
            let t = match a {
                AddrExpr::Nil => Term::Nil,
                AddrExpr::Var(u) => Term::Var(u.clone()),
            };
            subs.push(Subst::single(v.clone(), t));
        }
        if let AddrExpr::Var(u) = a {
            let t = match b {
                AddrExpr::Nil => Term::Nil,
                AddrExpr::Var(v) => Term::Var(v.clone()),
            };
            subs.push(Subst::single(u.clone(), t));
        }
        if a == b {
            subs.push(Subst::new()); // u = u: drop only
        }
        for s in subs {
            let rest = Pure::conj_of(
                ante_conjs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, p)| p.clone())
                    .collect(),
            );
            let stripped = SymbolicHeap {
                exists: goal.ante.exists.clone(),
                spatial: goal.ante.spatial.clone(),
                pure: rest,
            };
            let (ante, cons) = match (
                subst_apply(&stripped, &s, vars),
                subst_apply(&goal.cons, &s, vars),
            ) {
                (Ok(a2), Ok(c2)) => (a2, c2),
                _ => continue, // sort clash (nil into an integer position)
            };
            return mk(RuleName::EqualLeft, Entailment { ante, cons });
        }
    }

    // EqualRight: drop a trivial consequent equality e = e
    let cons_conjs: Vec<Pure> = goal.cons.pure.conjuncts().into_iter().cloned().collect();
    if let Some(i) = cons_conjs.iter().position(is_trivial_eq) {
        let rest = Pure::conj_of(
            cons_conjs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect(),
        );
        let cons = SymbolicHeap {
            exists: goal.cons.exists.clone(),
            spatial: goal.cons.spatial.clone(),
            pure: rest,
        };
        return mk(
            RuleName::EqualRight,
            Entailment {
                ante: goal.ante.clone(),
                cons,
            },
        );
    }

    // EmpLeft / EmpRight: delete an emp atom when another atom remains
    if goal.ante.spatial.len() > 1 {
        if let Some(i) = goal.ante.spatial.iter().position(|a| a.is_emp()) {
            return mk(
                RuleName::EmpLeft,
                Entailment {
                    ante: heap_without(&goal.ante, i),
                    cons: goal.cons.clone(),
                },
            );
        }
    }
    if goal.cons.spatial.len() > 1 {
        if let Some(i) = goal.cons.spatial.iter().position(|a| a.is_emp()) {
            return mk(
                RuleName::EmpRight,
                Entailment {
                    ante: goal.ante.clone(),
                    cons: heap_without(&goal.cons, i),
                },
            );
        }
    }

    // ExistsRight: instantiate a consequent binder whose witness an equality
    // conjunct syntactically determines
    let prefix = &goal.cons.exists;
    if !prefix.is_empty() {
        for c in &cons_conjs {
            let cand: Option<(Var, Term)> = match c {
                Pure::AddrEq(AddrExpr::Var(x), e) if prefix.contains(x) => Some((
                    x.clone(),
                    match e {
                        AddrExpr::Nil => Term::Nil,
                        AddrExpr::Var(v) => Term::Var(v.clone()),
                    },
                )),
                Pure::AddrEq(e, AddrExpr::Var(x)) if prefix.contains(x) => Some((
                    x.clone(),
                    match e {
                        AddrExpr::Nil => Term::Nil,
                        AddrExpr::Var(v) => Term::Var(v.clone()),
                    },
                )),
                Pure::IntCmp(CmpOp::Eq, IntExpr::Var(x), e) if prefix.contains(x) => {
                    Some((x.clone(), Term::Int(e.clone())))
                }
                Pure::IntCmp(CmpOp::Eq, e, IntExpr::Var(x)) if prefix.contains(x) => {
                    Some((x.clone(), Term::Int(e.clone())))
                }
                _ => None,
            };
            let Some((x, t)) = cand else { continue };
            // the witness must not mention any remaining binder
            let mut wvars = std::collections::BTreeSet::new();
            match &t {
                Term::Var(v) => {
                    wvars.insert(v.clone());
                }
                Term::Nil => {}
                Term::Int(e) => {
                    let probe =
                        SymbolicHeap::pure_only(Pure::IntCmp(CmpOp::Eq, e.clone(), e.clone()));
                    wvars = free_vars(&probe);
                }
            }
            if wvars.iter().any(|v| prefix.contains(v)) {
                continue;
            }
            let opened = SymbolicHeap {
                exists: prefix.iter().filter(|v| **v != x).cloned().collect(),
                spatial: goal.cons.spatial.clone(),
                pure: goal.cons.pure.clone(),
            };
            if let Ok(cons) = subst_apply(&opened, &Subst::single(x, t), vars) {
                return mk(
                    RuleName::ExistsRight,
                    Entailment {
                        ante: goal.ante.clone(),
                        cons,
                    },
                );
            }
        }
    }

    None
}

/// Frame rules: all StarData instances (in antecedent-major order), then all
/// StarPred instances. Atoms are paired only when their roots (the cell
/// address, or a predicate's first argument) are syntactically equal or
/// already equal under the antecedent's pure part: pairing arbitrary atoms
/// and emitting the root equality as an obligation floods the search with
/// unprovable premises, while a root equality that only becomes derivable
/// after an antecedent unfold is found anyway on the induction branch.
pub fn try_frame(
    goal: &Entailment,
    vault: &HypoVault,
    trace: &ProofTrace,
    solver: &SolverConfig,
) -> Vec<RuleInstance> {
    let mut out = Vec::new();
    let roots_match = |eq: &Pure| {
        matches!(
            check_implication(&goal.ante.pure, eq, solver),
            Ok(PureVerdict::Valid)
        )
    };
    let mut push = |name: RuleName, ai: usize, ci: usize, eqs: Pure| {
        let ante = heap_without(&goal.ante, ai);
        let trimmed = heap_without(&goal.cons, ci);
        let cons = SymbolicHeap::new(
            trimmed.exists.clone(),
            trimmed.spatial.clone(),
            trimmed.pure.clone().and(eqs),
        );
        out.push(RuleInstance::plain(
            name,
            vec![Premise {
                vault: vault.clone(),
                trace: trace.push(name),
                goal: Entailment { ante, cons },
            }],
        ));
    };
    for (ai, aatom) in goal.ante.spatial.iter().enumerate() {
        let SpatialAtom::PointsTo {
            root: u,
            sort,
            args: va,
        } = aatom
        else {
            continue;
        };
        for (ci, catom) in goal.cons.spatial.iter().enumerate() {
            let SpatialAtom::PointsTo {
                root: t,
                sort: csort,
                args: wa,
            } = catom
            else {
                continue;
            };
            if sort != csort {
                continue;
            }
            let mut eqs: Vec<Pure> = Vec::new();
            if u != t {
                let eq = Pure::AddrEq(AddrExpr::Var(u.clone()), AddrExpr::Var(t.clone()));
                if !roots_match(&eq) {
                    continue;
                }
                eqs.push(eq);
            }
            for (x, y) in va.iter().zip(wa) {
                if !syntactically_equal_exprs(x, y) {
                    eqs.push(expr_eq(x, y));
                }
            }
            push(RuleName::StarData, ai, ci, Pure::conj_of(eqs));
        }
    }
    for (ai, aatom) in goal.ante.spatial.iter().enumerate() {
        let SpatialAtom::PredApp { pred, args: va } = aatom else {
            continue;
        };
        for (ci, catom) in goal.cons.spatial.iter().enumerate() {
            let SpatialAtom::PredApp {
                pred: cpred,
                args: wa,
            } = catom
            else {
                continue;
            };
            if pred != cpred {
                continue;
            }
            if let (Some(x0), Some(y0)) = (va.first(), wa.first()) {
                if !syntactically_equal_exprs(x0, y0) && !roots_match(&expr_eq(x0, y0)) {
                    continue;
                }
            }
            let mut eqs: Vec<Pure> = Vec::new();
            for (x, y) in va.iter().zip(wa) {
                if !syntactically_equal_exprs(x, y) {
                    eqs.push(expr_eq(x, y));
                }
            }
            push(RuleName::StarPred, ai, ci, Pure::conj_of(eqs));
        }
    }
    out
}

/// PredIntroRight: unfold one consequent predicate occurrence by one
/// definition case, hoisting the case existentials into the prefix.
pub fn try_unfold_right(
    goal: &Entailment,
    env: &PredEnv,
    vault: &HypoVault,
    trace: &ProofTrace,
    vars: &mut VarGen,
) -> Vec<RuleInstance> {
    let mut out = Vec::new();
    for (ci, atom) in goal.cons.spatial.iter().enumerate() {
        let SpatialAtom::PredApp { pred, args } = atom else {
            continue;
        };
        let Ok(cases) = unfold_cases(pred, args, env, vars) else {
            continue;
        };
        for case in cases {
            let mut exists = goal.cons.exists.clone();
            exists.extend(case.exists.iter().cloned());
            let mut spatial: Vec<SpatialAtom> = goal
                .cons
                .spatial
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != ci)
                .map(|(_, a)| a.clone())
                .collect();
            spatial.extend(case.spatial.iter().cloned());
            let cons = SymbolicHeap::new(exists, spatial, goal.cons.pure.clone().and(case.pure));
            out.push(RuleInstance::plain(
                RuleName::PredIntroRight,
                vec![Premise {
                    vault: vault.clone(),
                    trace: trace.push(RuleName::PredIntroRight),
                    goal: Entailment {
                        ante: goal.ante.clone(),
                        cons,
                    },
                }],
            ));
        }
    }
    out
}

fn expr_vars(e: &Expr, out: &mut HashSet<u32>) {
    match e {
        Expr::Addr(AddrExpr::Var(v)) => {
            out.insert(v.id);
        }
        Expr::Addr(AddrExpr::Nil) => {}
        Expr::Int(i) => int_expr_vars(i, out),
    }
}

fn int_expr_vars(e: &IntExpr, out: &mut HashSet<u32>) {
    match e {
        IntExpr::Const(_) => {}
        IntExpr::Var(v) => {
            out.insert(v.id);
        }
        IntExpr::Neg(a) => int_expr_vars(a, out),
        IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
            int_expr_vars(a, out);
            int_expr_vars(b, out);
        }
    }
}

/// Induction: record the goal as an induction hypothesis (status ⊥) and
/// unfold one antecedent predicate occurrence; one premise per definition
/// case. Occurrences are ordered by how many variables their arguments share
/// with the consequent; the rule itself does not fix the choice.
pub fn try_induction(
    goal: &Entailment,
    env: &PredEnv,
    vault: &HypoVault,
    trace: &ProofTrace,
    vars: &mut VarGen,
) -> Vec<RuleInstance> {
    let cons_vars: HashSet<u32> = free_vars(&goal.cons).iter().map(|v| v.id).collect();
    let mut occurrences: Vec<(usize, usize)> = Vec::new(); // (index, shared count)
    for (ai, atom) in goal.ante.spatial.iter().enumerate() {
        let SpatialAtom::PredApp { args, .. } = atom else {
            continue;
        };
        let mut ids = HashSet::new();
        for a in args {
            expr_vars(a, &mut ids);
        }
        let shared = ids.intersection(&cons_vars).count();
        occurrences.push((ai, shared));
    }
    occurrences.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut out = Vec::new();
    for (ai, _) in occurrences {
        let SpatialAtom::PredApp { pred, args } = &goal.ante.spatial[ai] else {
            continue;
        };
        let Ok(cases) = unfold_cases(pred, args, env, vars) else {
            continue;
        };
        let mut vault_rec = vault.clone();
        vault_rec.insert(goal.clone(), Status::Unknown);
        let trace_rec = trace.push(RuleName::Induction);
        let mut premises = Vec::with_capacity(cases.len());
        for case in cases {
            // hoist the freshened case existentials as free variables
            let mut spatial: Vec<SpatialAtom> = goal
                .ante
                .spatial
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != ai)
                .map(|(_, a)| a.clone())
                .collect();
            spatial.extend(case.spatial.iter().cloned());
            let ante = SymbolicHeap::new(
                goal.ante.exists.clone(),
                spatial,
                goal.ante.pure.clone().and(case.pure),
            );
            premises.push(Premise {
                vault: vault_rec.clone(),
                trace: trace_rec.clone(),
                goal: Entailment {
                    ante,
                    cons: goal.cons.clone(),
                },
            });
        }
        out.push(RuleInstance::plain(RuleName::Induction, premises));
    }
    out
}

fn apply_theta_int(e: &IntExpr, theta: &Subst) -> Option<IntExpr> {
    Some(match e {
        IntExpr::Const(c) => IntExpr::Const(*c),
        IntExpr::Var(v) => match theta.lookup(v)? {
            Term::Var(u) => IntExpr::Var(u.clone()),
            Term::Int(i) => i.clone(),
            Term::Nil => return None,
        },
        IntExpr::Neg(a) => IntExpr::Neg(Box::new(apply_theta_int(a, theta)?)),
        IntExpr::Add(a, b) => IntExpr::Add(
            Box::new(apply_theta_int(a, theta)?),
            Box::new(apply_theta_int(b, theta)?),
        ),
        IntExpr::Sub(a, b) => IntExpr::Sub(
            Box::new(apply_theta_int(a, theta)?),
            Box::new(apply_theta_int(b, theta)?),
        ),
    })
}

fn match_expr(hyp_e: &Expr, goal_e: &Expr, theta: &mut Subst) -> bool {
    match hyp_e {
        Expr::Addr(AddrExpr::Var(w)) | Expr::Int(IntExpr::Var(w)) => {
            theta.bind(w.clone(), Term::from_expr(goal_e))
        }
        Expr::Addr(AddrExpr::Nil) => matches!(goal_e, Expr::Addr(AddrExpr::Nil)),
        Expr::Int(e) => match goal_e {
            // a compound hypothesis argument must be fully determined
            Expr::Int(g) => apply_theta_int(e, theta).is_some_and(|inst| &inst == g),
            Expr::Addr(_) => false,
        },
    }
}

fn match_atoms(hyp_atom: &SpatialAtom, goal_atom: &SpatialAtom, theta: &Subst) -> Option<Subst> {
    let mut t = theta.clone();
    let ok = match (hyp_atom, goal_atom) {
        (
            SpatialAtom::PointsTo {
                root: r3,
                sort: s3,
                args: a3,
            },
            SpatialAtom::PointsTo {
                root: r1,
                sort: s1,
                args: a1,
            },
        ) => {
            s3 == s1
                && t.bind(r3.clone(), Term::Var(r1.clone()))
                && a3.iter().zip(a1).all(|(x, y)| match_expr(x, y, &mut t))
        }
        (
            SpatialAtom::PredApp { pred: p3, args: a3 },
            SpatialAtom::PredApp { pred: p1, args: a1 },
        ) => p3 == p1 && a3.iter().zip(a1).all(|(x, y)| match_expr(x, y, &mut t)),
        _ => false,
    };
    ok.then_some(t)
}

/// AC unification of a hypothesis antecedent into a goal antecedent:
/// enumerate injective matchings of the hypothesis atoms into the goal atoms
/// (θ binds hypothesis-side variables only), keep those whose instantiated
/// pure part follows from the goal's.
pub fn unify_antecedent(
    goal_ante: &SymbolicHeap,
    hyp_ante: &SymbolicHeap,
    solver: &SolverConfig,
) -> Vec<(Subst, Vec<SpatialAtom>)> {
    if !hyp_ante.exists.is_empty() {
        return Vec::new();
    }
    let hyp_atoms: Vec<&SpatialAtom> = hyp_ante.atoms().collect();
    // a spatially-emp hypothesis antecedent unifies against anything with
    // θ = ∅ and Σ′ = Σ1; applying it only ever grows the goal
    if hyp_atoms.is_empty() {
        return Vec::new();
    }
    let goal_atoms: Vec<&SpatialAtom> = goal_ante.atoms().collect();
    if hyp_atoms.len() > goal_atoms.len() {
        return Vec::new();
    }
    let mut results = Vec::new();
    let mut used = vec![false; goal_atoms.len()];
    fn go(
        k: usize,
        hyp_atoms: &[&SpatialAtom],
        goal_atoms: &[&SpatialAtom],
        used: &mut Vec<bool>,
        theta: &Subst,
        results: &mut Vec<(Subst, Vec<usize>)>,
    ) {
        if k == hyp_atoms.len() {
            let leftover: Vec<usize> = (0..goal_atoms.len()).filter(|i| !used[*i]).collect();
            results.push((theta.clone(), leftover));
            return;
        }
        for i in 0..goal_atoms.len() {
            if used[i] {
                continue;
            }
            // identical goal atoms give symmetric matchings: keep the first
            if (0..i).any(|j| !used[j] && goal_atoms[j] == goal_atoms[i]) {
                continue;
            }
            if let Some(t) = match_atoms(hyp_atoms[k], goal_atoms[i], theta) {
                used[i] = true;
                go(k + 1, hyp_atoms, goal_atoms, used, &t, results);
                used[i] = false;
            }
        }
    }
    let mut raw = Vec::new();
    go(
        0,
        &hyp_atoms,
        &goal_atoms,
        &mut used,
        &Subst::new(),
        &mut raw,
    );

    let mut scratch = VarGen::starting_at(0);
    for (theta, leftover_idx) in raw {
        // Π1 ⇒ Π3θ
        let pi3 = match subst_apply(
            &SymbolicHeap::pure_only(hyp_ante.pure.clone()),
            &theta,
            &mut scratch,
        ) {
            Ok(h) => h.pure,
            Err(_) => continue,
        };
        match check_implication(&goal_ante.pure, &pi3, solver) {
            Ok(PureVerdict::Valid) => {}
            _ => continue,
        }
        let leftover: Vec<SpatialAtom> = leftover_idx
            .into_iter()
            .map(|i| goal_atoms[i].clone())
            .collect();
        results.push((theta, leftover));
    }
    results
}

/// Hypo: apply a vault hypothesis whose antecedent unifies into the goal's,
/// subject to the †(Hypo) decreasing condition. The premise replaces the
/// matched part by the hypothesis consequent (existentials renamed to fresh
/// free variables), keeps the leftover Σ′ and the goal's pure part Π1 (the
/// instantiated Π3θ is dropped, following the rule as stated).
pub fn try_hypothesis(
    goal: &Entailment,
    vault: &HypoVault,
    trace: &ProofTrace,
    solver: &SolverConfig,
    vars: &mut VarGen,
) -> Vec<RuleInstance> {
    try_hypothesis_filtered(goal, vault, trace, solver, vars, true)
}

/// Like [`try_hypothesis`], but with `allow_unknown_status = false` only
/// hypotheses already proved (status ⊤) are applied; used to cap chains of
/// unproved-hypothesis applications, which merely restate the goal.
pub fn try_hypothesis_filtered(
    goal: &Entailment,
    vault: &HypoVault,
    trace: &ProofTrace,
    solver: &SolverConfig,
    vars: &mut VarGen,
    allow_unknown_status: bool,
) -> Vec<RuleInstance> {
    let mut out = Vec::new();
    if !goal.ante.exists.is_empty() {
        return out;
    }
    for h in vault.iter() {
        if !allow_unknown_status && h.status != Status::Valid {
            continue;
        }
        for (theta, leftover) in unify_antecedent(&goal.ante, &h.ent.ante, solver) {
            let Some(evidence) = check_hypo_side_condition(h.status, &leftover, trace) else {
                continue;
            };
            let Ok(f4) = subst_apply(&h.ent.cons, &theta, vars) else {
                continue;
            };
            // rename the consequent's existentials to fresh free variables
            let mut ren = Subst::new();
            for v in &f4.exists {
                ren.bind(v.clone(), Term::Var(vars.fresh(&v.name)));
            }
            let opened = SymbolicHeap {
                exists: Vec::new(),
                spatial: f4.spatial.clone(),
                pure: f4.pure.clone(),
            };
            let Ok(f4o) = subst_apply(&opened, &ren, vars) else {
                continue;
            };
            let mut spatial = f4o.spatial.clone();
            spatial.extend(leftover.iter().cloned());
            let ante = SymbolicHeap::new(
                Vec::new(),
                spatial,
                f4o.pure.clone().and(goal.ante.pure.clone()),
            );
            // search heuristic: a hypothesis application that increases the
            // number of predicate atoms (e.g. rewriting a cell into a
            // segment) opens an unbounded detour space; skip it
            let preds = |h: &SymbolicHeap| {
                h.atoms()
                    .filter(|a| matches!(a, SpatialAtom::PredApp { .. }))
                    .count()
            };
            if preds(&ante) > preds(&goal.ante) {
                continue;
            }
            out.push(RuleInstance {
                name: RuleName::Hypo,
                premises: vec![Premise {
                    vault: vault.clone(),
                    trace: trace.push(RuleName::Hypo),
                    goal: Entailment {
                        ante,
                        cons: goal.cons.clone(),
                    },
                }],
                hypo: Some(HypoUse {
                    hypothesis: h.ent.clone(),
                    status: h.status,
                    theta,
                    leftover,
                    evidence,
                }),
                generalized: false,
            });
        }
    }
    out
}

// ----------------------------------------------------------------- search

#[derive(Debug, Clone, Copy)]
struct PathBudget {
    inductions: u32,
    unfolds: u32,
    /// Consecutive hypothesis applications (normalization steps in between
    /// do not reset the count).
    hypo_chain: u32,
}

const MAX_DEPTH: usize = 256;

/// Unproved (status ⊥) hypothesis applications replace a matched sub-heap by
/// an entailed one and so can chain forever, each link restating the goal;
/// after this many in a row the search only applies proved hypotheses until
/// another rule makes progress.
const MAX_HYPO_CHAIN: u32 = 1;

/// Goals whose spatial parts outgrow this are pruned: hypothesis application
/// may splice a consequent larger than the matched part, and without a bound
/// such chains grow without making progress.
const MAX_GOAL_ATOMS: usize = 24;

pub struct Prover<'a> {
    env: &'a PredEnv,
    budget: SearchBudget,
    solver: SolverConfig,
    vars: VarGen,
    pub stats: SearchStats,
    deadline: Option<Instant>,
    timed_out: bool,
    /// Known-Unknown goals (path key + remaining budgets) whose failure did
    /// not depend on the surrounding path.
    unknown_cache: HashSet<(String, u32, u32, u32)>,
    /// Shallowest visited-stack index a cycle cut in the current subtree
    /// referred to; failures are memoizable only when every cut stayed at or
    /// below the node's own frame (usize::MAX = no cut seen).
    cut_floor: usize,
}

impl<'a> Prover<'a> {
    pub fn new(env: &'a PredEnv, budget: SearchBudget, solver: SolverConfig, vars: VarGen) -> Self {
        Prover {
            env,
            budget,
            solver,
            vars,
            stats: SearchStats::default(),
            deadline: None,
            timed_out: false,
            unknown_cache: HashSet::new(),
            cut_floor: usize::MAX,
        }
    }

    pub fn prove(&mut self, goal: &Entailment) -> ProveResult {
        self.deadline =
            Some(Instant::now() + std::time::Duration::from_millis(self.budget.timeout_ms));
        self.timed_out = false;
        self.unknown_cache.clear();
        self.cut_floor = usize::MAX;
        let vault = HypoVault::new();
        let trace = ProofTrace::new();
        let mut visited = Vec::new();
        let mut res = self.prove_rec(
            &vault,
            &trace,
            goal,
            PathBudget {
                inductions: 0,
                unfolds: 0,
                hypo_chain: 0,
            },
            &mut visited,
        );
        res.timed_out = self.timed_out && res.verdict == Verdict::Unknown;
        res
    }

    fn out_of_time(&mut self) -> bool {
        match self.deadline {
            Some(d) if Instant::now() >= d => {
                self.timed_out = true;
                true
            }
            _ => false,
        }
    }

    fn unknown() -> ProveResult {
        ProveResult {
            verdict: Verdict::Unknown,
            derived: HypoVault::new(),
            used: Vec::new(),
            tree: None,
            timed_out: false,
        }
    }

    fn prove_rec(
        &mut self,
        vault: &HypoVault,
        trace: &ProofTrace,
        goal: &Entailment,
        path: PathBudget,
        visited: &mut Vec<String>,
    ) -> ProveResult {
        if self.out_of_time() {
            return Self::unknown();
        }
        if visited.len() >= MAX_DEPTH {
            self.cut_floor = 0;
            return Self::unknown();
        }
        if goal.ante.atoms().count() + goal.cons.atoms().count() > MAX_GOAL_ATOMS {
            return Self::unknown();
        }
        if let Some(inst) = try_axiom(goal, &self.solver, self.budget.strict_rules) {
            *self.stats.rule_attempts.entry(inst.name).or_insert(0) += 1;
            let tree = ProofTree {
                goal: goal.clone(),
                rule: inst.name,
                trace: trace.clone(),
                hypo: None,
                generalized: inst.generalized,
                used: Vec::new(),
                children: Vec::new(),
            };
            return ProveResult {
                verdict: Verdict::Valid,
                derived: HypoVault::new(),
                used: Vec::new(),
                tree: Some(tree),
                timed_out: false,
            };
        }

        // dead-end prunes (these can only turn a branch into Unknown, never
        // produce a wrong Valid): a points-to atom always denotes one cell,
        // so once the axioms above have failed, an antecedent with a
        // points-to can never entail a spatially-emp consequent, and a
        // spatially-emp antecedent can never entail a consequent points-to.
        let ante_has_pts = goal
            .ante
            .atoms()
            .any(|a| matches!(a, SpatialAtom::PointsTo { .. }));
        let cons_has_pts = goal
            .cons
            .atoms()
            .any(|a| matches!(a, SpatialAtom::PointsTo { .. }));
        if (ante_has_pts && goal.cons.is_spatially_emp())
            || (cons_has_pts && goal.ante.is_spatially_emp())
        {
            return Self::unknown();
        }

        // Normalization rewrites strictly shrink the goal (binders, resolved
        // equalities, emp atoms) and cannot loop, so they bypass the cycle
        // bookkeeping below; their canonical form often equals the parent's.
        if let Some(norm) = try_normalize(goal, vault, trace, &mut self.vars) {
            return self.try_instances(vec![norm], trace, goal, path, visited);
        }

        // cycle cut-off: same goal (up to renaming) with the same vault
        let key = crate::canon::path_key(goal, vault.ordered_entries());
        if let Some(j) = visited.iter().position(|k| *k == key) {
            // this failure depends on the matched ancestor frame
            self.cut_floor = self.cut_floor.min(j);
            return Self::unknown();
        }
        let cache_key = (key.clone(), path.inductions, path.unfolds, path.hypo_chain);
        if self.unknown_cache.contains(&cache_key) {
            return Self::unknown();
        }
        let my_index = visited.len();
        visited.push(key);
        let mut candidates = try_frame(goal, vault, trace, &self.solver);
        candidates.extend(try_hypothesis_filtered(
            goal,
            vault,
            trace,
            &self.solver,
            &mut self.vars,
            path.hypo_chain < MAX_HYPO_CHAIN,
        ));
        if path.unfolds < self.budget.max_right_unfolds {
            candidates.extend(try_unfold_right(
                goal,
                self.env,
                vault,
                trace,
                &mut self.vars,
            ));
        }
        if path.inductions < self.budget.max_induction_apps {
            candidates.extend(try_induction(goal, self.env, vault, trace, &mut self.vars));
        }
        let saved_floor = self.cut_floor;
        self.cut_floor = usize::MAX;
        let res = self.try_instances(candidates, trace, goal, path, visited);
        visited.pop();
        // Memoize failures whose cycle cuts (if any) stayed within this
        // node's own subtree: they reproduce wherever this goal appears with
        // the same vault and budgets. Cuts against strict ancestors and
        // deadline aborts are context-dependent and not cached.
        if res.verdict == Verdict::Unknown && self.cut_floor >= my_index && !self.timed_out {
            self.unknown_cache.insert(cache_key);
        }
        self.cut_floor = self.cut_floor.min(saved_floor);
        res
    }

    fn try_instances(
        &mut self,
        candidates: Vec<RuleInstance>,
        trace: &ProofTrace,
        goal: &Entailment,
        path: PathBudget,
        visited: &mut Vec<String>,
    ) -> ProveResult {
        'instances: for inst in candidates {
            if self.out_of_time() {
                return Self::unknown();
            }
            *self.stats.rule_attempts.entry(inst.name).or_insert(0) += 1;
            match inst.name {
                RuleName::Induction => self.stats.hypotheses_recorded += 1,
                RuleName::Hypo => self.stats.hypotheses_applied += 1,
                _ => {}
            }
            let next_path = PathBudget {
                inductions: path.inductions + u32::from(inst.name == RuleName::Induction),
                unfolds: path.unfolds + u32::from(inst.name == RuleName::PredIntroRight),
                hypo_chain: match inst.name {
                    // proved (⊤) hypotheses are settled lemmas; only chains
                    // of unproved ones are capped
                    RuleName::Hypo => {
                        let proved = inst
                            .hypo
                            .as_ref()
                            .is_some_and(|h| h.status == Status::Valid);
                        if proved {
                            path.hypo_chain
                        } else {
                            path.hypo_chain + 1
                        }
                    }
                    RuleName::EqualLeft
                    | RuleName::EqualRight
                    | RuleName::ExistsLeft
                    | RuleName::ExistsRight
                    | RuleName::EmpLeft
                    | RuleName::EmpRight => path.hypo_chain,
                    _ => 0,
                },
            };
            let mut derived = HypoVault::new();
            let mut used: Vec<Entailment> = Vec::new();
            if let Some(h) = &inst.hypo {
                push_used(&mut used, &h.hypothesis);
            }
            let mut children = Vec::with_capacity(inst.premises.len());
            for prem in &inst.premises {
                let pv = if self.budget.mutual_mode {
                    let mut v = prem.vault.clone();
                    v.merge(&derived);
                    v
                } else {
                    prem.vault.clone()
                };
                let res = self.prove_rec(&pv, &prem.trace, &prem.goal, next_path, visited);
                if res.verdict == Verdict::Unknown {
                    continue 'instances; // backtrack to the next instance
                }
                derived.merge(&res.derived);
                for u in &res.used {
                    push_used(&mut used, u);
                }
                children.push(res.tree.expect("valid result carries a tree"));
            }
            // status promotion: were all used hypotheses derived here?
            let goal_key = entailment_key(goal);
            let derived_keys: HashSet<CanonKey> =
                derived.iter().map(|h| entailment_key(&h.ent)).collect();
            let promoted = used.iter().all(|u| {
                let k = entailment_key(u);
                k == goal_key || derived_keys.contains(&k)
            });
            derived.insert(
                goal.clone(),
                if promoted {
                    Status::Valid
                } else {
                    Status::Unknown
                },
            );
            let tree = ProofTree {
                goal: goal.clone(),
                rule: inst.name,
                trace: trace.clone(),
                hypo: inst.hypo,
                generalized: inst.generalized,
                used: used.clone(),
                children,
            };
            return ProveResult {
                verdict: Verdict::Valid,
                derived,
                used,
                tree: Some(tree),
                timed_out: false,
            };
        }
        Self::unknown()
    }
}

fn push_used(list: &mut Vec<Entailment>, ent: &Entailment) {
    let key = entailment_key(ent);
    if !list.iter().any(|e| entailment_key(e) == key) {
        list.push(ent.clone());
    }
}

// -------------------------------------------------------------- rendering

fn evidence_label(e: &HypoEvidence) -> String {
    match e {
        HypoEvidence::ValidStatus => "status=valid".to_string(),
        HypoEvidence::LeftoverPointsTo => "leftover-points-to".to_string(),
        HypoEvidence::TraceSplit {
            star_data_at,
            first_induction_at,
        } => format!(
            "trace-split(star-data@{}, induction@{})",
            star_data_at, first_induction_at
        ),
    }
}

fn subst_label(s: &Subst) -> String {
    let parts: Vec<String> = s
        .pairs()
        .iter()
        .map(|(v, t)| {
            let t = match t {
                Term::Var(u) => u.to_string(),
                Term::Nil => "nil".to_string(),
                Term::Int(e) => crate::printer::int_str(e, false),
            };
            format!("{}:={}", v, t)
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// Deterministic plain-text rendering: one goal per line, children indented.
pub fn render_tree_text(t: &ProofTree) -> String {
    fn go(t: &ProofTree, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push('[');
        out.push_str(t.rule.as_str());
        if t.generalized {
            out.push_str(" generalized");
        }
        out.push_str("] ");
        out.push_str(&print_entailment(&t.goal));
        if let Some(h) = &t.hypo {
            out.push_str(&format!(
                "  {{hypo: {}; theta: {}; {}}}",
                print_entailment(&h.hypothesis),
                subst_label(&h.theta),
                evidence_label(&h.evidence)
            ));
        }
        out.push('\n');
        for c in &t.children {
            go(c, depth + 1, out);
        }
    }
    let mut s = String::new();
    go(t, 0, &mut s);
    s
}

/// JSON rendering with fields goal, rule, bindings, evidence, children.
pub fn tree_json(t: &ProofTree) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("goal".into(), print_entailment(&t.goal).into());
    obj.insert("rule".into(), t.rule.as_str().into());
    obj.insert(
        "bindings".into(),
        match &t.hypo {
            Some(h) => subst_label(&h.theta).into(),
            None => serde_json::Value::Null,
        },
    );
    obj.insert(
        "evidence".into(),
        match &t.hypo {
            Some(h) => {
                let mut e = serde_json::Map::new();
                e.insert("hypothesis".into(), print_entailment(&h.hypothesis).into());
                e.insert(
                    "status".into(),
                    match h.status {
                        Status::Valid => "valid",
                        Status::Unknown => "unknown",
                    }
                    .into(),
                );
                e.insert("disjunct".into(), evidence_label(&h.evidence).into());
                serde_json::Value::Object(e)
            }
            None if t.generalized => serde_json::json!({ "generalized": true }),
            None => serde_json::Value::Null,
        },
    );
    obj.insert(
        "children".into(),
        serde_json::Value::Array(t.children.iter().map(tree_json).collect()),
    );
    serde_json::Value::Object(obj)
}

/// Re-check the †(Hypo) evidence stored on every Hypo node of a tree without
/// re-running the search: the recorded disjunct must re-verify against the
/// node's stored status, leftover and conclusion trace, and the premise must
/// actually contain the leftover atoms. Also re-checks the trace discipline.
pub fn audit_tree(t: &ProofTree) -> Result<(), String> {
    for (i, c) in t.children.iter().enumerate() {
        let expect = t.trace.push(t.rule);
        if c.trace != expect {
            return Err(format!(
                "trace discipline broken at child {} of a {} node",
                i,
                t.rule.as_str()
            ));
        }
        audit_tree(c)?;
    }
    if t.rule == RuleName::Hypo {
        let Some(h) = &t.hypo else {
            return Err("Hypo node without recorded hypothesis".into());
        };
        match check_hypo_side_condition(h.status, &h.leftover, &t.trace) {
            Some(e) if e == h.evidence => {}
            Some(e) => {
                return Err(format!(
                    "evidence mismatch: stored {} but re-check gives {}",
                    evidence_label(&h.evidence),
                    evidence_label(&e)
                ))
            }
            None => return Err("stored †(Hypo) evidence does not re-verify".into()),
        }
        // the leftover must occur in the premise antecedent
        if let Some(child) = t.children.first() {
            for atom in &h.leftover {
                if !child.goal.ante.spatial.contains(atom) {
                    return Err("leftover atom missing from the Hypo premise".into());
                }
            }
        }
    }
    if t.children.is_empty() && !t.rule.is_axiom() {
        return Err(format!("leaf with non-axiom rule {}", t.rule.as_str()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::tests::list_env;
    use crate::parser::parse_program;

    const MOTIVATING: &str = r"
        sort node { addr next };
        pred ls(x, y) := emp & x = y \/ exists u. x->node{u} * ls(u, y);
        pred tmp(x) := emp
            \/ exists u. x->node{u} * tmp(u)
            \/ exists u v. x->node{u} * u->node{v} * tmp(v);
        name E: checkentail tmp(x) |- exists y. ls(x, y);
    ";

    fn prove_first(text: &str, budget: SearchBudget) -> (ProveResult, SearchStats) {
        let prog = parse_program(text).expect("parse");
        let mut p = Prover::new(
            &prog.preds,
            budget,
            SolverConfig::default(),
            VarGen::starting_at(prog.next_var_id),
        );
        let res = p.prove(&prog.queries[0].entailment);
        (res, p.stats.clone())
    }

    #[test]
    fn motivating_entailment_is_valid_with_expected_rule_path() {
        let (res, stats) = prove_first(MOTIVATING, SearchBudget::default());
        assert_eq!(res.verdict, Verdict::Valid);
        let tree = res.tree.expect("tree");
        audit_tree(&tree).expect("audit");
        assert!(stats.hypotheses_recorded >= 1);
        assert!(stats.hypotheses_applied >= 1);
        // some root-to-leaf path carries the expected rule sequence in order
        let want = [
            RuleName::Hypo,
            RuleName::PredIntroRight,
            RuleName::StarData,
            RuleName::StarPred,
            RuleName::PureEntail,
        ];
        fn path_has(t: &ProofTree, want: &[RuleName]) -> bool {
            let rest = if Some(&t.rule) == want.first() {
                &want[1..]
            } else {
                want
            };
            if rest.is_empty() {
                return true;
            }
            t.children.iter().any(|c| path_has(c, rest))
        }
        assert!(
            path_has(&tree, &want),
            "missing expected rule sequence:\n{}",
            render_tree_text(&tree)
        );
    }

    #[test]
    fn base_premise_is_valid_standalone() {
        let text = r"
            sort node { addr next };
            pred ls(x, y) := emp & x = y \/ exists u. x->node{u} * ls(u, y);
            checkentail emp |- exists y. ls(x, y);
        ";
        let (res, _) = prove_first(text, SearchBudget::default());
        assert_eq!(res.verdict, Verdict::Valid);
        audit_tree(&res.tree.unwrap()).unwrap();
    }

    #[test]
    fn invalid_reversal_is_unknown() {
        let text = r"
            sort node { addr next };
            pred ls(x, y) := emp & x = y \/ exists u. x->node{u} * ls(u, y);
            checkentail ls(x, y) |- ls(y, x);
        ";
        let (res, _) = prove_first(
            text,
            SearchBudget {
                timeout_ms: 5_000,
                ..SearchBudget::default()
            },
        );
        assert_eq!(res.verdict, Verdict::Unknown);
    }

    #[test]
    fn single_path_mode_still_proves_the_motivating_entailment() {
        let budget = SearchBudget {
            mutual_mode: false,
            ..SearchBudget::default()
        };
        let (res, _) = prove_first(MOTIVATING, budget);
        assert_eq!(res.verdict, Verdict::Valid);
        audit_tree(&res.tree.unwrap()).unwrap();
    }

    #[test]
    fn axioms_fire_on_their_side_conditions() {
        let solver = SolverConfig::default();
        let prog = parse_program(
            r"
            sort node { addr next };
            checkentail x->node{u} * x->node{v} |- emp;
            checkentail emp & u != u |- emp;
            checkentail emp & x = y |- exists w. emp & w = y & x = w;
            checkentail x->node{u} & x < x |- emp;
        ",
        )
        .unwrap();
        let names: Vec<(RuleName, bool)> = prog
            .queries
            .iter()
            .map(|q| {
                let i = try_axiom(&q.entailment, &solver, false).expect("axiom");
                (i.name, i.generalized)
            })
            .collect();
        assert_eq!(
            names,
            vec![
                (RuleName::FalseLeft2, false),
                (RuleName::FalseLeft1, false),
                (RuleName::PureEntail, false),
                (RuleName::FalseLeft1, true),
            ]
        );
        // strict mode refuses the generalized variant
        assert!(try_axiom(&prog.queries[3].entailment, &solver, true).is_none());
    }

    #[test]
    fn unify_antecedent_matches_the_fig2_situation() {
        // Σ1 = x->node{u} * tmp(u), hypothesis Σ3 = tmp(x'):
        // θ = [x' := u], Σ′ = x->node{u}
        let solver = SolverConfig::default();
        let prog = parse_program(
            r"
            sort node { addr next };
            pred tmp(x) := emp \/ exists u. x->node{u} * tmp(u);
            checkentail x->node{u} * tmp(u) |- emp;
            checkentail tmp(q) |- emp;
        ",
        )
        .unwrap();
        let goal_ante = &prog.queries[0].entailment.ante;
        let hyp_ante = &prog.queries[1].entailment.ante;
        let ms = unify_antecedent(goal_ante, hyp_ante, &solver);
        assert_eq!(ms.len(), 1);
        let (theta, leftover) = &ms[0];
        assert_eq!(theta.pairs().len(), 1);
        assert!(matches!(&theta.pairs()[0].1, Term::Var(v) if v.name == "u"));
        assert_eq!(leftover.len(), 1);
        assert!(matches!(&leftover[0], SpatialAtom::PointsTo { root, .. } if root.name == "x"));
    }

    #[test]
    fn hypo_side_condition_disjuncts() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let pts = SpatialAtom::PointsTo {
            root: x.clone(),
            sort: "node".into(),
            args: vec![],
        };
        let pred = SpatialAtom::PredApp {
            pred: "p".into(),
            args: vec![],
        };
        let empty_trace = ProofTrace::new();
        assert_eq!(
            check_hypo_side_condition(Status::Valid, &[], &empty_trace),
            Some(HypoEvidence::ValidStatus)
        );
        assert_eq!(
            check_hypo_side_condition(Status::Unknown, &[pred.clone(), pts.clone()], &empty_trace),
            Some(HypoEvidence::LeftoverPointsTo)
        );
        // trace split: StarData strictly before the first Induction (head side)
        let t = ProofTrace::new()
            .push(RuleName::Induction)
            .push(RuleName::PredIntroRight)
            .push(RuleName::StarData)
            .push(RuleName::Hypo);
        assert_eq!(
            check_hypo_side_condition(Status::Unknown, std::slice::from_ref(&pred), &t),
            Some(HypoEvidence::TraceSplit {
                star_data_at: 1,
                first_induction_at: 3
            })
        );
        // no StarData before the first Induction
        let t2 = ProofTrace::new()
            .push(RuleName::StarData)
            .push(RuleName::Induction);
        assert_eq!(
            check_hypo_side_condition(Status::Unknown, &[pred], &t2),
            None
        );
    }

    #[test]
    fn normalization_strips_binders_equalities_and_emp() {
        let mut vars = VarGen::new();
        let env = list_env(&mut vars);
        let _ = env;
        let prog = parse_program(
            r"
            sort node { addr next };
            checkentail exists u. x->node{u} |- x->node{w} * emp;
        ",
        )
        .unwrap();
        let vault = HypoVault::new();
        let trace = ProofTrace::new();
        let mut vg = VarGen::starting_at(prog.next_var_id);
        let inst = try_normalize(&prog.queries[0].entailment, &vault, &trace, &mut vg).unwrap();
        assert_eq!(inst.name, RuleName::ExistsLeft);
        let next = &inst.premises[0].goal;
        assert!(next.ante.exists.is_empty());
        let inst2 = try_normalize(next, &vault, &inst.premises[0].trace, &mut vg).unwrap();
        assert_eq!(inst2.name, RuleName::EmpRight);
    }

    #[test]
    fn derived_vault_statuses_are_promoted_consistently() {
        let (res, _) = prove_first(MOTIVATING, SearchBudget::default());
        assert_eq!(res.verdict, Verdict::Valid);
        // the root goal itself must always be in the derived set
        let prog = parse_program(MOTIVATING).unwrap();
        assert!(res.derived.contains(&prog.queries[0].entailment));
        // the E4 subgoal (x->node{u} * ls(u,t) |- exists y. ls(x,y)) is
        // promoted to valid status during the search
        let any_valid = res.derived.iter().any(|h| h.status == Status::Valid);
        assert!(any_valid);
    }

    #[test]
    fn rendering_is_deterministic() {
        let (a, _) = prove_first(MOTIVATING, SearchBudget::default());
        let (b, _) = prove_first(MOTIVATING, SearchBudget::default());
        let (ta, tb) = (a.tree.unwrap(), b.tree.unwrap());
        assert_eq!(render_tree_text(&ta), render_tree_text(&tb));
        assert_eq!(tree_json(&ta).to_string(), tree_json(&tb).to_string());
    }
}

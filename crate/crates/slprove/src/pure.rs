//! Validity of pure implications `hyp => exists xs. goal`.
//!
//! The internal backend is sound but incomplete and never answers anything
//! stronger than it can justify: existentials are eliminated only through
//! equality witnesses, the rest is negated, put in disjunctive normal form
//! and refuted clause by clause with union-find over value (dis)equalities
//! plus Fourier-Motzkin elimination over the rationals. Integer-only facts
//! are recovered by tightening strict bounds (`a < b` becomes `a <= b - 1`),
//! which is sound because variables in arithmetic positions range over the
//! integers. Anything left over is `Unknown`.
//!
//! The external backend pipes an SMT-LIB 2 script to a user-supplied command
//! (logic LIA; `nil` is one uninterpreted integer constant) and maps `unsat`
//! on the negated implication to `Valid`. Crashes and timeouts degrade to
//! `Unknown`; a malformed answer is a configuration error.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::ast::{AddrExpr, CmpOp, IntExpr, Pure, Subst, SymbolicHeap, Term, Var, VarGen};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PureVerdict {
    Valid,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Internal,
    /// Shell command reading SMT-LIB 2 on stdin, answering on stdout.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub backend: Backend,
    pub timeout_ms: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: Backend::Internal,
            timeout_ms: 5_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("external solver returned a malformed answer: `{0}`")]
    MalformedAnswer(String),
}

/// `hyp => exists goal_exists. goal`, valid for every assignment?
pub fn prove_pure(
    hyp: &Pure,
    goal_exists: &[Var],
    goal: &Pure,
    cfg: &SolverConfig,
) -> Result<PureVerdict, SolverError> {
    match &cfg.backend {
        Backend::Internal => Ok(internal_prove(hyp, goal_exists, goal)),
        Backend::External(cmd) => external_prove(hyp, goal_exists, goal, cmd, cfg.timeout_ms),
    }
}

/// `hyp => concl` with no existentials.
pub fn check_implication(
    hyp: &Pure,
    concl: &Pure,
    cfg: &SolverConfig,
) -> Result<PureVerdict, SolverError> {
    prove_pure(hyp, &[], concl, cfg)
}

// ---------------------------------------------------------------- internal

fn internal_prove(hyp: &Pure, goal_exists: &[Var], goal: &Pure) -> PureVerdict {
    let (goal_conjs, remaining) = eliminate_witnesses(goal, goal_exists, hyp);
    // leftovers beyond equality witnesses: sound answer is Unknown
    if goal_conjs.iter().any(|c| mentions_any(c, &remaining)) {
        return PureVerdict::Unknown;
    }
    let goal_qf = Pure::conj_of(goal_conjs);
    let negated = Pure::And(
        Box::new(hyp.clone()),
        Box::new(Pure::Not(Box::new(goal_qf))),
    );
    let mut kinds = HashSet::new();
    collect_int_vars(&negated, &mut kinds);
    let shaped = split_literals(&nnf(&negated, false), &kinds);
    let Some(clauses) = dnf(&shaped) else {
        return PureVerdict::Unknown;
    };
    if clauses.iter().all(|c| refute_clause(c)) {
        PureVerdict::Valid
    } else {
        PureVerdict::Unknown
    }
}

/// Substitute away every existential pinned down by an equality conjunct of
/// the goal whose other side mentions no remaining existential.
fn eliminate_witnesses(goal: &Pure, exists: &[Var], hyp: &Pure) -> (Vec<Pure>, Vec<Var>) {
    let mut vars = VarGen::starting_at(
        [goal, hyp]
            .iter()
            .map(|p| max_var_id(p))
            .max()
            .unwrap_or(0)
            .saturating_add(1)
            .max(exists.iter().map(|v| v.id + 1).max().unwrap_or(0)),
    );
    let mut conjs: Vec<Pure> = goal.conjuncts().into_iter().cloned().collect();
    let mut remaining: Vec<Var> = exists.to_vec();
    loop {
        let mut witness: Option<(Var, Term)> = None;
        'scan: for c in &conjs {
            let candidates: [(Option<&Var>, Option<Term>); 2] = match c {
                Pure::AddrEq(AddrExpr::Var(x), rhs) => [
                    (Some(x), Some(addr_term(rhs))),
                    match rhs {
                        AddrExpr::Var(y) => (Some(y), Some(Term::Var(x.clone()))),
                        AddrExpr::Nil => (None, None),
                    },
                ],
                Pure::AddrEq(AddrExpr::Nil, AddrExpr::Var(y)) => {
                    [(Some(y), Some(Term::Nil)), (None, None)]
                }
                Pure::IntCmp(CmpOp::Eq, IntExpr::Var(x), rhs) => [
                    (Some(x), Some(Term::Int(rhs.clone()))),
                    match rhs {
                        IntExpr::Var(y) => (Some(y), Some(Term::Var(x.clone()))),
                        _ => (None, None),
                    },
                ],
                Pure::IntCmp(CmpOp::Eq, lhs, IntExpr::Var(y)) => {
                    [(Some(y), Some(Term::Int(lhs.clone()))), (None, None)]
                }
                _ => continue,
            };
            for (x, t) in candidates.into_iter().flat_map(|(x, t)| x.zip(t)) {
                if remaining.contains(x) && !term_mentions_any(&t, &remaining) {
                    witness = Some((x.clone(), t));
                    break 'scan;
                }
            }
        }
        let Some((x, t)) = witness else {
            return (conjs, remaining);
        };
        remaining.retain(|v| v != &x);
        let s = Subst::single(x, t);
        let rebuilt = crate::ast::subst_apply(
            &SymbolicHeap::pure_only(Pure::conj_of(conjs)),
            &s,
            &mut vars,
        )
        .expect("pure substitution cannot hit a points-to root");
        conjs = rebuilt.pure.conjuncts().into_iter().cloned().collect();
        if conjs.is_empty() {
            conjs.push(Pure::True);
        }
    }
}

fn addr_term(a: &AddrExpr) -> Term {
    match a {
        AddrExpr::Nil => Term::Nil,
        AddrExpr::Var(v) => Term::Var(v.clone()),
    }
}

fn term_mentions_any(t: &Term, vars: &[Var]) -> bool {
    match t {
        Term::Nil => false,
        Term::Var(v) => vars.contains(v),
        Term::Int(e) => {
            let mut out = HashSet::new();
            int_vars_of(e, &mut out);
            vars.iter().any(|v| out.contains(&v.id))
        }
    }
}

fn mentions_any(p: &Pure, vars: &[Var]) -> bool {
    if vars.is_empty() {
        return false;
    }
    let mut ids = HashSet::new();
    all_var_ids(p, &mut ids);
    vars.iter().any(|v| ids.contains(&v.id))
}

fn int_vars_of(e: &IntExpr, out: &mut HashSet<u32>) {
    match e {
        IntExpr::Const(_) => {}
        IntExpr::Var(v) => {
            out.insert(v.id);
        }
        IntExpr::Neg(a) => int_vars_of(a, out),
        IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
            int_vars_of(a, out);
            int_vars_of(b, out);
        }
    }
}

fn all_var_ids(p: &Pure, out: &mut HashSet<u32>) {
    match p {
        Pure::True | Pure::False => {}
        Pure::AddrEq(a, b) | Pure::AddrNe(a, b) => {
            for e in [a, b] {
                if let AddrExpr::Var(v) = e {
                    out.insert(v.id);
                }
            }
        }
        Pure::IntCmp(_, a, b) => {
            int_vars_of(a, out);
            int_vars_of(b, out);
        }
        Pure::Not(a) => all_var_ids(a, out),
        Pure::And(a, b) | Pure::Or(a, b) | Pure::Imp(a, b) => {
            all_var_ids(a, out);
            all_var_ids(b, out);
        }
        Pure::Forall(v, a) | Pure::Exists(v, a) => {
            out.insert(v.id);
            all_var_ids(a, out);
        }
    }
}

fn max_var_id(p: &Pure) -> u32 {
    let mut ids = HashSet::new();
    all_var_ids(p, &mut ids);
    ids.into_iter().max().unwrap_or(0)
}

fn collect_int_vars(p: &Pure, out: &mut HashSet<u32>) {
    match p {
        Pure::True | Pure::False | Pure::AddrEq(..) | Pure::AddrNe(..) => {}
        Pure::IntCmp(_, a, b) => {
            int_vars_of(a, out);
            int_vars_of(b, out);
        }
        Pure::Not(a) | Pure::Forall(_, a) | Pure::Exists(_, a) => collect_int_vars(a, out),
        Pure::And(a, b) | Pure::Or(a, b) | Pure::Imp(a, b) => {
            collect_int_vars(a, out);
            collect_int_vars(b, out);
        }
    }
}

/// Negation normal form; quantified subformulas are kept opaque (wrapped in
/// `Not` when under a negation) — the refuter simply cannot use them.
fn nnf(p: &Pure, neg: bool) -> Pure {
    match p {
        Pure::True => {
            if neg {
                Pure::False
            } else {
                Pure::True
            }
        }
        Pure::False => {
            if neg {
                Pure::True
            } else {
                Pure::False
            }
        }
        Pure::AddrEq(a, b) => {
            if neg {
                Pure::AddrNe(a.clone(), b.clone())
            } else {
                p.clone()
            }
        }
        Pure::AddrNe(a, b) => {
            if neg {
                Pure::AddrEq(a.clone(), b.clone())
            } else {
                p.clone()
            }
        }
        Pure::IntCmp(op, a, b) => {
            let op = if neg {
                match op {
                    CmpOp::Eq => CmpOp::Ne,
                    CmpOp::Ne => CmpOp::Eq,
                    CmpOp::Lt => CmpOp::Ge,
                    CmpOp::Le => CmpOp::Gt,
                    CmpOp::Gt => CmpOp::Le,
                    CmpOp::Ge => CmpOp::Lt,
                }
            } else {
                *op
            };
            Pure::IntCmp(op, a.clone(), b.clone())
        }
        Pure::Not(a) => nnf(a, !neg),
        Pure::And(a, b) => {
            let (l, r) = (nnf(a, neg), nnf(b, neg));
            if neg {
                Pure::Or(Box::new(l), Box::new(r))
            } else {
                Pure::And(Box::new(l), Box::new(r))
            }
        }
        Pure::Or(a, b) => {
            let (l, r) = (nnf(a, neg), nnf(b, neg));
            if neg {
                Pure::And(Box::new(l), Box::new(r))
            } else {
                Pure::Or(Box::new(l), Box::new(r))
            }
        }
        Pure::Imp(a, b) => {
            let (l, r) = (nnf(a, !neg), nnf(b, neg));
            if neg {
                // not (a => b) = a and not b
                Pure::And(Box::new(l), Box::new(r))
            } else {
                Pure::Or(Box::new(l), Box::new(r))
            }
        }
        Pure::Forall(..) | Pure::Exists(..) => {
            if neg {
                Pure::Not(Box::new(p.clone()))
            } else {
                p.clone()
            }
        }
    }
}

/// Equivalence-preserving literal reshaping after NNF:
/// integer disequality splits into an order disjunction; value (dis)equality
/// touching an integer-kinded variable becomes arithmetic (it can never be
/// `nil`).
fn split_literals(p: &Pure, kinds: &HashSet<u32>) -> Pure {
    match p {
        Pure::And(a, b) => Pure::And(
            Box::new(split_literals(a, kinds)),
            Box::new(split_literals(b, kinds)),
        ),
        Pure::Or(a, b) => Pure::Or(
            Box::new(split_literals(a, kinds)),
            Box::new(split_literals(b, kinds)),
        ),
        Pure::IntCmp(CmpOp::Ne, a, b) => Pure::Or(
            Box::new(Pure::IntCmp(CmpOp::Lt, a.clone(), b.clone())),
            Box::new(Pure::IntCmp(CmpOp::Gt, a.clone(), b.clone())),
        ),
        Pure::AddrEq(a, b) => match (a, b) {
            (AddrExpr::Var(x), AddrExpr::Var(y))
                if kinds.contains(&x.id) || kinds.contains(&y.id) =>
            {
                Pure::IntCmp(CmpOp::Eq, IntExpr::Var(x.clone()), IntExpr::Var(y.clone()))
            }
            (AddrExpr::Var(x), AddrExpr::Nil) | (AddrExpr::Nil, AddrExpr::Var(x))
                if kinds.contains(&x.id) =>
            {
                Pure::False
            }
            _ => p.clone(),
        },
        Pure::AddrNe(a, b) => match (a, b) {
            (AddrExpr::Var(x), AddrExpr::Var(y))
                if kinds.contains(&x.id) && kinds.contains(&y.id) =>
            {
                Pure::Or(
                    Box::new(Pure::IntCmp(
                        CmpOp::Lt,
                        IntExpr::Var(x.clone()),
                        IntExpr::Var(y.clone()),
                    )),
                    Box::new(Pure::IntCmp(
                        CmpOp::Gt,
                        IntExpr::Var(x.clone()),
                        IntExpr::Var(y.clone()),
                    )),
                )
            }
            (AddrExpr::Var(x), AddrExpr::Nil) | (AddrExpr::Nil, AddrExpr::Var(x))
                if kinds.contains(&x.id) =>
            {
                Pure::True
            }
            _ => p.clone(),
        },
        other => other.clone(),
    }
}

const DNF_CLAUSE_CAP: usize = 512;

/// DNF as clause lists; `None` when the clause count explodes.
fn dnf(p: &Pure) -> Option<Vec<Vec<Pure>>> {
    match p {
        Pure::Or(a, b) => {
            let mut l = dnf(a)?;
            let r = dnf(b)?;
            l.extend(r);
            if l.len() > DNF_CLAUSE_CAP {
                return None;
            }
            Some(l)
        }
        Pure::And(a, b) => {
            let l = dnf(a)?;
            let r = dnf(b)?;
            if l.len().saturating_mul(r.len()) > DNF_CLAUSE_CAP {
                return None;
            }
            let mut out = Vec::with_capacity(l.len() * r.len());
            for cl in &l {
                for cr in &r {
                    let mut c = cl.clone();
                    c.extend(cr.iter().cloned());
                    out.push(c);
                }
            }
            Some(out)
        }
        lit => Some(vec![vec![lit.clone()]]),
    }
}

/// Union-find over values: variables by id, `nil` as a distinguished node.
struct UnionFind {
    parent: Vec<usize>,
    ids: HashMap<Option<u32>, usize>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind {
            parent: Vec::new(),
            ids: HashMap::new(),
        }
    }

    fn node(&mut self, key: Option<u32>) -> usize {
        if let Some(&i) = self.ids.get(&key) {
            return i;
        }
        let i = self.parent.len();
        self.parent.push(i);
        self.ids.insert(key, i);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
    }

    fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// One linear row `sum coef_i * x_i <= k`.
#[derive(Debug, Clone)]
struct Row {
    coefs: BTreeMap<u32, i64>,
    k: i64,
}

fn linearize(e: &IntExpr, sign: i64, row: &mut Row) -> Option<()> {
    match e {
        IntExpr::Const(c) => {
            // constant moves to the bound side with flipped sign
            row.k = row.k.checked_sub(sign.checked_mul(*c)?)?;
            Some(())
        }
        IntExpr::Var(v) => {
            let slot = row.coefs.entry(v.id).or_insert(0);
            *slot = slot.checked_add(sign)?;
            Some(())
        }
        IntExpr::Neg(a) => linearize(a, sign.checked_neg()?, row),
        IntExpr::Add(a, b) => {
            linearize(a, sign, row)?;
            linearize(b, sign, row)
        }
        IntExpr::Sub(a, b) => {
            linearize(a, sign, row)?;
            linearize(b, sign.checked_neg()?, row)
        }
    }
}

/// Rows for `a (op) b`; `None` on coefficient overflow.
fn rows_for(op: CmpOp, a: &IntExpr, b: &IntExpr) -> Option<Vec<Row>> {
    let base = || -> Option<Row> {
        // a - b <= 0 skeleton
        let mut r = Row {
            coefs: BTreeMap::new(),
            k: 0,
        };
        linearize(a, 1, &mut r)?;
        linearize(b, -1, &mut r)?;
        r.coefs.retain(|_, c| *c != 0);
        Some(r)
    };
    let flip = |r: &Row| -> Option<Row> {
        let mut f = Row {
            coefs: BTreeMap::new(),
            k: r.k.checked_neg()?,
        };
        for (v, c) in &r.coefs {
            f.coefs.insert(*v, c.checked_neg()?);
        }
        Some(f)
    };
    let r = base()?;
    Some(match op {
        CmpOp::Le => vec![r],
        CmpOp::Lt => {
            // integer tightening: a < b  <=>  a - b <= -1
            let mut t = r;
            t.k = t.k.checked_sub(1)?;
            vec![t]
        }
        CmpOp::Ge => vec![flip(&r)?],
        CmpOp::Gt => {
            let mut t = flip(&r)?;
            t.k = t.k.checked_sub(1)?;
            vec![t]
        }
        CmpOp::Eq => {
            let f = flip(&r)?;
            vec![r, f]
        }
        // split away before this point; treating it as unusable is sound
        CmpOp::Ne => vec![],
    })
}

const FM_ROW_CAP: usize = 2_000;

/// Fourier-Motzkin over the rationals: complete for rational satisfiability,
/// so `true` really means the rows have no solution. Overflow or blow-up
/// gives up with `false` (not refuted).
fn fm_unsat(mut rows: Vec<Row>) -> bool {
    loop {
        let mut pending: Vec<Row> = Vec::new();
        for r in &rows {
            if r.coefs.is_empty() {
                if r.k < 0 {
                    return true;
                }
            } else {
                pending.push(r.clone());
            }
        }
        rows = pending;
        let Some(&v) = rows.iter().find_map(|r| r.coefs.keys().next()) else {
            return false;
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rest = Vec::new();
        for r in rows {
            match r.coefs.get(&v).copied().unwrap_or(0) {
                c if c > 0 => pos.push(r),
                c if c < 0 => neg.push(r),
                _ => rest.push(r),
            }
        }
        if pos
            .len()
            .saturating_mul(neg.len())
            .saturating_add(rest.len())
            > FM_ROW_CAP
        {
            return false;
        }
        for p in &pos {
            for n in &neg {
                let a = p.coefs[&v]; // > 0
                let b = -n.coefs[&v]; // > 0
                let combined = (|| -> Option<Row> {
                    let mut out = Row {
                        coefs: BTreeMap::new(),
                        k: 0,
                    };
                    for (var, c) in &p.coefs {
                        out.coefs.insert(*var, c.checked_mul(b)?);
                    }
                    for (var, c) in &n.coefs {
                        let add = c.checked_mul(a)?;
                        let slot = out.coefs.entry(*var).or_insert(0);
                        *slot = slot.checked_add(add)?;
                    }
                    out.coefs.retain(|_, c| *c != 0);
                    out.k = p.k.checked_mul(b)?.checked_add(n.k.checked_mul(a)?)?;
                    Some(out)
                })();
                match combined {
                    Some(row) => rest.push(row),
                    None => return false, // overflow: give up soundly
                }
            }
        }
        rows = rest;
    }
}

/// Is this conjunction of literals contradictory?
fn refute_clause(clause: &[Pure]) -> bool {
    let mut uf = UnionFind::new();
    let mut diseqs: Vec<(Option<u32>, Option<u32>)> = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    let key = |a: &AddrExpr| match a {
        AddrExpr::Nil => None,
        AddrExpr::Var(v) => Some(v.id),
    };
    for lit in clause {
        match lit {
            Pure::True => {}
            Pure::False => return true,
            Pure::AddrEq(a, b) => {
                let (ka, kb) = (key(a), key(b));
                let (na, nb) = (uf.node(ka), uf.node(kb));
                uf.union(na, nb);
            }
            Pure::AddrNe(a, b) => {
                let (ka, kb) = (key(a), key(b));
                if ka == kb {
                    return true; // x != x / nil != nil
                }
                diseqs.push((ka, kb));
            }
            Pure::IntCmp(op, a, b) => {
                // an integer equality between variables is also a value
                // equality, so union-find gets to see it
                if let (CmpOp::Eq, IntExpr::Var(x), IntExpr::Var(y)) = (op, a, b) {
                    let (nx, ny) = (uf.node(Some(x.id)), uf.node(Some(y.id)));
                    uf.union(nx, ny);
                }
                if let Some(mut rs) = rows_for(*op, a, b) {
                    rows.append(&mut rs);
                }
                // overflow: drop the literal, which only weakens refutation
            }
            // quantified or otherwise opaque literal: unusable but harmless
            _ => {}
        }
    }
    for (ka, kb) in diseqs {
        let (na, nb) = (uf.node(ka), uf.node(kb));
        if uf.same(na, nb) {
            return true;
        }
    }
    // value equalities between variables also hold numerically
    let eq_pairs: Vec<(u32, u32)> = {
        let keys: Vec<Option<u32>> = uf.ids.keys().copied().collect();
        let mut out = Vec::new();
        for (i, ka) in keys.iter().enumerate() {
            for kb in &keys[i + 1..] {
                if let (Some(x), Some(y)) = (ka, kb) {
                    let (na, nb) = (uf.node(Some(*x)), uf.node(Some(*y)));
                    if uf.same(na, nb) {
                        out.push((*x, *y));
                    }
                }
            }
        }
        out
    };
    for (x, y) in eq_pairs {
        let mk = |a: u32, b: u32| {
            let mut r = Row {
                coefs: BTreeMap::new(),
                k: 0,
            };
            r.coefs.insert(a, 1);
            r.coefs.insert(b, -1);
            r
        };
        rows.push(mk(x, y));
        rows.push(mk(y, x));
    }
    fm_unsat(rows)
}

// ---------------------------------------------------------------- external

fn smt_name(v: &Var) -> String {
    format!("v{}", v.id)
}

fn smt_int(e: &IntExpr) -> String {
    match e {
        IntExpr::Const(c) if *c < 0 => format!("(- {})", c.unsigned_abs()),
        IntExpr::Const(c) => c.to_string(),
        IntExpr::Var(v) => smt_name(v),
        IntExpr::Neg(a) => format!("(- {})", smt_int(a)),
        IntExpr::Add(a, b) => format!("(+ {} {})", smt_int(a), smt_int(b)),
        IntExpr::Sub(a, b) => format!("(- {} {})", smt_int(a), smt_int(b)),
    }
}

fn smt_addr(a: &AddrExpr) -> String {
    match a {
        AddrExpr::Nil => "slnil".to_string(),
        AddrExpr::Var(v) => smt_name(v),
    }
}

fn smt_pure(p: &Pure) -> String {
    match p {
        Pure::True => "true".into(),
        Pure::False => "false".into(),
        Pure::AddrEq(a, b) => format!("(= {} {})", smt_addr(a), smt_addr(b)),
        Pure::AddrNe(a, b) => format!("(not (= {} {}))", smt_addr(a), smt_addr(b)),
        Pure::IntCmp(op, a, b) => {
            let (l, r) = (smt_int(a), smt_int(b));
            match op {
                CmpOp::Eq => format!("(= {} {})", l, r),
                CmpOp::Ne => format!("(not (= {} {}))", l, r),
                CmpOp::Lt => format!("(< {} {})", l, r),
                CmpOp::Le => format!("(<= {} {})", l, r),
                CmpOp::Gt => format!("(> {} {})", l, r),
                CmpOp::Ge => format!("(>= {} {})", l, r),
            }
        }
        Pure::Not(a) => format!("(not {})", smt_pure(a)),
        Pure::And(a, b) => format!("(and {} {})", smt_pure(a), smt_pure(b)),
        Pure::Or(a, b) => format!("(or {} {})", smt_pure(a), smt_pure(b)),
        Pure::Imp(a, b) => format!("(=> {} {})", smt_pure(a), smt_pure(b)),
        Pure::Forall(v, a) => format!("(forall (({} Int)) {})", smt_name(v), smt_pure(a)),
        Pure::Exists(v, a) => format!("(exists (({} Int)) {})", smt_name(v), smt_pure(a)),
    }
}

fn to_smtlib(hyp: &Pure, goal_exists: &[Var], goal: &Pure) -> String {
    let mut free = HashSet::new();
    all_var_ids(hyp, &mut free);
    all_var_ids(goal, &mut free);
    for v in goal_exists {
        free.remove(&v.id);
    }
    let mut script = String::from("(set-logic LIA)\n(declare-const slnil Int)\n");
    let mut ids: Vec<u32> = free.into_iter().collect();
    ids.sort_unstable();
    for id in ids {
        script.push_str(&format!("(declare-const v{} Int)\n", id));
    }
    let goal_str = if goal_exists.is_empty() {
        smt_pure(goal)
    } else {
        let binders: Vec<String> = goal_exists
            .iter()
            .map(|v| format!("({} Int)", smt_name(v)))
            .collect();
        format!("(exists ({}) {})", binders.join(" "), smt_pure(goal))
    };
    script.push_str(&format!(
        "(assert (not (=> {} {})))\n(check-sat)\n",
        smt_pure(hyp),
        goal_str
    ));
    script
}

fn external_prove(
    hyp: &Pure,
    goal_exists: &[Var],
    goal: &Pure,
    command: &str,
    timeout_ms: u64,
) -> Result<PureVerdict, SolverError> {
    use std::process::{Command, Stdio};

    let script = to_smtlib(hyp, goal_exists, goal);
    let spawned = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(_) => return Ok(PureVerdict::Unknown), // crash-equivalent
    };
    if let Some(mut stdin) = child.stdin.take() {
        let _ = stdin.write_all(script.as_bytes());
        // dropping stdin closes the pipe
    }
    let deadline = std::time::Instant::now() + std::time::Duration::from_millis(timeout_ms);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if std::time::Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(PureVerdict::Unknown);
                }
                std::thread::sleep(std::time::Duration::from_millis(5));
            }
            Err(_) => return Ok(PureVerdict::Unknown),
        }
    }
    let output = match child.wait_with_output() {
        Ok(o) => o,
        Err(_) => return Ok(PureVerdict::Unknown),
    };
    if !output.status.success() && output.stdout.is_empty() {
        return Ok(PureVerdict::Unknown);
    }
    let text = String::from_utf8_lossy(&output.stdout);
    for line in text.lines() {
        match line.trim() {
            "unsat" => return Ok(PureVerdict::Valid),
            "sat" | "unknown" => return Ok(PureVerdict::Unknown),
            "" => continue,
            _ => {}
        }
    }
    Err(SolverError::MalformedAnswer(text.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::VarGen;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn veq(a: &Var, b: &Var) -> Pure {
        Pure::AddrEq(AddrExpr::Var(a.clone()), AddrExpr::Var(b.clone()))
    }

    fn icmp(op: CmpOp, a: IntExpr, b: IntExpr) -> Pure {
        Pure::IntCmp(op, a, b)
    }

    fn iv(v: &Var) -> IntExpr {
        IntExpr::Var(v.clone())
    }

    #[test]
    fn equality_witnesses_prove_the_motivating_side_condition() {
        // true => exists y w. (u = w and t = y)
        let mut vars = VarGen::new();
        let (u, t, y, w) = (
            vars.fresh("u"),
            vars.fresh("t"),
            vars.fresh("y"),
            vars.fresh("w"),
        );
        let goal = veq(&u, &w).and(veq(&t, &y));
        let v = prove_pure(&Pure::True, &[y, w], &goal, &cfg()).unwrap();
        assert_eq!(v, PureVerdict::Valid);
    }

    #[test]
    fn identity_and_true_are_valid() {
        let mut vars = VarGen::new();
        let (x, y) = (vars.fresh("x"), vars.fresh("y"));
        let pi = veq(&x, &y).and(icmp(CmpOp::Ge, iv(&x), IntExpr::Const(0)));
        assert_eq!(
            check_implication(&pi, &pi, &cfg()).unwrap(),
            PureVerdict::Valid
        );
        assert_eq!(
            check_implication(&Pure::True, &Pure::True, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn rational_only_witness_stays_unknown() {
        // true => x + x = 1 has no integer solution but also no integer
        // refutation by this solver; the honest answer is Unknown
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let goal = icmp(
            CmpOp::Eq,
            IntExpr::Add(Box::new(iv(&x)), Box::new(iv(&x))),
            IntExpr::Const(1),
        );
        assert_eq!(
            prove_pure(&Pure::True, &[], &goal, &cfg()).unwrap(),
            PureVerdict::Unknown
        );
    }

    #[test]
    fn equality_chains_feed_arithmetic() {
        // x = 5 and y = x => y = 5
        let mut vars = VarGen::new();
        let (x, y) = (vars.fresh("x"), vars.fresh("y"));
        let hyp = icmp(CmpOp::Eq, iv(&x), IntExpr::Const(5)).and(veq(&y, &x));
        let goal = icmp(CmpOp::Eq, iv(&y), IntExpr::Const(5));
        assert_eq!(
            check_implication(&hyp, &goal, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn non_valid_implication_is_unknown() {
        // x >= 0 => x >= 1 is refuted by x = 0
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let hyp = icmp(CmpOp::Ge, iv(&x), IntExpr::Const(0));
        let goal = icmp(CmpOp::Ge, iv(&x), IntExpr::Const(1));
        assert_eq!(
            check_implication(&hyp, &goal, &cfg()).unwrap(),
            PureVerdict::Unknown
        );
    }

    #[test]
    fn integer_tightening_closes_rational_gaps() {
        // x < y and y < x + 1 is integer-unsatisfiable, so anything follows
        let mut vars = VarGen::new();
        let (x, y) = (vars.fresh("x"), vars.fresh("y"));
        let hyp = icmp(CmpOp::Lt, iv(&x), iv(&y)).and(icmp(
            CmpOp::Lt,
            iv(&y),
            IntExpr::Add(Box::new(iv(&x)), Box::new(IntExpr::Const(1))),
        ));
        assert_eq!(
            check_implication(&hyp, &Pure::False, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn address_disequality_conflicts_make_the_hypothesis_absurd() {
        let mut vars = VarGen::new();
        let (x, y, z) = (vars.fresh("x"), vars.fresh("y"), vars.fresh("z"));
        let hyp = veq(&x, &y).and(veq(&y, &z)).and(Pure::AddrNe(
            AddrExpr::Var(x.clone()),
            AddrExpr::Var(z.clone()),
        ));
        assert_eq!(
            check_implication(&hyp, &Pure::False, &cfg()).unwrap(),
            PureVerdict::Valid
        );

        let nil_clash = Pure::AddrEq(AddrExpr::Var(x.clone()), AddrExpr::Nil)
            .and(Pure::AddrNe(AddrExpr::Var(x), AddrExpr::Nil));
        assert_eq!(
            check_implication(&nil_clash, &Pure::False, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn integer_kinded_variables_cannot_be_nil() {
        // x > 0 and x = nil is contradictory
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let hyp = icmp(CmpOp::Gt, iv(&x), IntExpr::Const(0))
            .and(Pure::AddrEq(AddrExpr::Var(x.clone()), AddrExpr::Nil));
        assert_eq!(
            check_implication(&hyp, &Pure::False, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn disjunctive_goals_and_hypotheses() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let one = icmp(CmpOp::Eq, iv(&x), IntExpr::Const(1));
        let two = icmp(CmpOp::Eq, iv(&x), IntExpr::Const(2));
        let goal = Pure::Or(Box::new(one.clone()), Box::new(two.clone()));
        assert_eq!(
            check_implication(&one, &goal, &cfg()).unwrap(),
            PureVerdict::Valid
        );
        // hypothesis split: x = 1 or x = 2 => x >= 1
        let hyp = Pure::Or(Box::new(one), Box::new(two));
        let ge = icmp(CmpOp::Ge, iv(&x), IntExpr::Const(1));
        assert_eq!(
            check_implication(&hyp, &ge, &cfg()).unwrap(),
            PureVerdict::Valid
        );
    }

    #[test]
    fn quantified_goals_are_unknown() {
        let mut vars = VarGen::new();
        let a = vars.fresh("a");
        let goal = Pure::Forall(a.clone(), Box::new(veq(&a, &a)));
        assert_eq!(
            check_implication(&Pure::True, &goal, &cfg()).unwrap(),
            PureVerdict::Unknown
        );
    }

    #[test]
    fn unresolved_existentials_are_unknown() {
        // true => exists y. y > 0 (true, but needs a non-equality witness)
        let mut vars = VarGen::new();
        let y = vars.fresh("y");
        let goal = icmp(CmpOp::Gt, iv(&y), IntExpr::Const(0));
        assert_eq!(
            prove_pure(&Pure::True, &[y], &goal, &cfg()).unwrap(),
            PureVerdict::Unknown
        );
    }

    #[test]
    fn overflow_degrades_to_unknown() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let huge = IntExpr::Add(
            Box::new(IntExpr::Const(i64::MAX)),
            Box::new(IntExpr::Const(i64::MAX)),
        );
        let hyp = icmp(CmpOp::Lt, iv(&x), huge.clone()).and(icmp(CmpOp::Gt, iv(&x), huge));
        assert_eq!(
            check_implication(&hyp, &Pure::False, &cfg()).unwrap(),
            PureVerdict::Unknown
        );
    }

    #[cfg(unix)]
    #[test]
    fn external_backend_protocol() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let goal = veq(&x, &x);
        let unsat = SolverConfig {
            backend: Backend::External("cat > /dev/null; echo unsat".into()),
            timeout_ms: 2_000,
        };
        assert_eq!(
            prove_pure(&Pure::True, &[], &goal, &unsat).unwrap(),
            PureVerdict::Valid
        );

        let sat = SolverConfig {
            backend: Backend::External("cat > /dev/null; echo sat".into()),
            timeout_ms: 2_000,
        };
        assert_eq!(
            prove_pure(&Pure::True, &[], &goal, &sat).unwrap(),
            PureVerdict::Unknown
        );

        let crash = SolverConfig {
            backend: Backend::External("cat > /dev/null; exit 3".into()),
            timeout_ms: 2_000,
        };
        assert_eq!(
            prove_pure(&Pure::True, &[], &goal, &crash).unwrap(),
            PureVerdict::Unknown
        );

        let slow = SolverConfig {
            backend: Backend::External("sleep 30".into()),
            timeout_ms: 100,
        };
        assert_eq!(
            prove_pure(&Pure::True, &[], &goal, &slow).unwrap(),
            PureVerdict::Unknown
        );

        let malformed = SolverConfig {
            backend: Backend::External("cat > /dev/null; echo maybe".into()),
            timeout_ms: 2_000,
        };
        assert!(prove_pure(&Pure::True, &[], &goal, &malformed).is_err());
    }

    #[test]
    fn emitted_smtlib_is_wellformed_text() {
        let mut vars = VarGen::new();
        let (x, y) = (vars.fresh("x"), vars.fresh("y"));
        let hyp = Pure::AddrEq(AddrExpr::Var(x.clone()), AddrExpr::Nil);
        let goal = icmp(CmpOp::Le, iv(&x), IntExpr::Const(-2));
        let s = to_smtlib(&hyp, &[y], &goal);
        assert!(s.contains("(set-logic LIA)"));
        assert!(s.contains("(declare-const slnil Int)"));
        assert!(s.contains(&format!("(= v{} slnil)", x.id)));
        assert!(s.contains("(- 2)"));
        assert!(s.contains("(exists ("));
        assert!(s.ends_with("(check-sat)\n"));
    }
}

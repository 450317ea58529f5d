//! Assertion language: variables, expressions, pure formulas, spatial atoms,
//! symbolic heaps, predicate definitions and substitution.
//!
//! Every assertion is kept in the normalized shape `exists xs. (Sigma & Pi)`:
//! an existential prefix, a multiset of spatial atoms (with `Emp` standing in
//! for an empty spatial part) and a pure formula.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// A program variable. Identity is the numeric id; the name is kept for
/// rendering only. Two distinct binders never share an id.
#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub id: u32,
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Var {}

impl std::hash::Hash for Var {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Var {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.name, self.id).cmp(&(&other.name, other.id))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name, self.id)
    }
}

/// Fresh-variable source. One generator per parse session or proof search;
/// ids are unique within a session.
#[derive(Debug, Clone)]
pub struct VarGen {
    next: u32,
}

impl VarGen {
    pub fn new() -> Self {
        VarGen { next: 0 }
    }

    /// Start above every id already present, so freshened variables never
    /// collide with parsed ones.
    pub fn starting_at(next: u32) -> Self {
        VarGen { next }
    }

    pub fn fresh(&mut self, name: &str) -> Var {
        let id = self.next;
        self.next += 1;
        Var {
            name: name.to_string(),
            id,
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next
    }
}

impl Default for VarGen {
    fn default() -> Self {
        Self::new()
    }
}

/// A record sort: name plus per-field value kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sort {
    pub name: String,
    pub fields: Vec<Field>,
}

impl Sort {
    pub fn arity(&self) -> usize {
        self.fields.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Addr,
    Int,
}

/// Integer expressions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IntExpr {
    Const(i64),
    Var(Var),
    Neg(Box<IntExpr>),
    Add(Box<IntExpr>, Box<IntExpr>),
    Sub(Box<IntExpr>, Box<IntExpr>),
}

/// Address expressions: `nil` or a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AddrExpr {
    Nil,
    Var(Var),
}

/// An argument expression, either side of the value kind split.
///
/// A bare variable parses as `Addr`; since stacks are untyped this loses
/// nothing, and arithmetic contexts force `Int`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Addr(AddrExpr),
    Int(IntExpr),
}

impl Expr {
    pub fn var(v: Var) -> Expr {
        Expr::Addr(AddrExpr::Var(v))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Expr::Addr(AddrExpr::Var(v)) => Some(v),
            Expr::Int(IntExpr::Var(v)) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Pure (heap-free) assertions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pure {
    True,
    False,
    /// Generic value (dis)equality; evaluates on raw stack values, so it is
    /// meaningful for addresses and integers alike.
    AddrEq(AddrExpr, AddrExpr),
    AddrNe(AddrExpr, AddrExpr),
    IntCmp(CmpOp, IntExpr, IntExpr),
    Not(Box<Pure>),
    And(Box<Pure>, Box<Pure>),
    Or(Box<Pure>, Box<Pure>),
    Imp(Box<Pure>, Box<Pure>),
    Forall(Var, Box<Pure>),
    Exists(Var, Box<Pure>),
}

impl Pure {
    pub fn and(self, other: Pure) -> Pure {
        match (self, other) {
            (Pure::True, p) | (p, Pure::True) => p,
            (a, b) => Pure::And(Box::new(a), Box::new(b)),
        }
    }

    /// Flatten the top-level conjunction into a list.
    pub fn conjuncts(&self) -> Vec<&Pure> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Pure, out: &mut Vec<&'a Pure>) {
            match p {
                Pure::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Pure::True => {}
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Rebuild a conjunction from parts.
    pub fn conj_of(parts: Vec<Pure>) -> Pure {
        parts.into_iter().fold(Pure::True, Pure::and)
    }
}

/// Spatial atoms: `emp`, a points-to cell, or an inductive predicate call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpatialAtom {
    Emp,
    PointsTo {
        root: Var,
        sort: String,
        args: Vec<Expr>,
    },
    PredApp {
        pred: String,
        args: Vec<Expr>,
    },
}

impl SpatialAtom {
    pub fn is_emp(&self) -> bool {
        matches!(self, SpatialAtom::Emp)
    }
}

/// A symbolic heap `exists xs. (Sigma & Pi)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicHeap {
    pub exists: Vec<Var>,
    pub spatial: Vec<SpatialAtom>,
    pub pure: Pure,
}

impl SymbolicHeap {
    pub fn new(exists: Vec<Var>, mut spatial: Vec<SpatialAtom>, pure: Pure) -> SymbolicHeap {
        if spatial.is_empty() {
            spatial.push(SpatialAtom::Emp);
        }
        SymbolicHeap {
            exists,
            spatial,
            pure,
        }
    }

    pub fn pure_only(pure: Pure) -> SymbolicHeap {
        SymbolicHeap::new(Vec::new(), Vec::new(), pure)
    }

    /// True when the spatial part asserts nothing beyond an empty heap.
    pub fn is_spatially_emp(&self) -> bool {
        self.spatial.iter().all(SpatialAtom::is_emp)
    }

    /// Non-emp atoms, in order.
    pub fn atoms(&self) -> impl Iterator<Item = &SpatialAtom> {
        self.spatial.iter().filter(|a| !a.is_emp())
    }
}

/// A definition case together with its base/inductive classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredCase {
    pub body: SymbolicHeap,
    /// Computed from the call graph: base iff the body mentions no predicate
    /// (mutually) recursive with the owner.
    pub base: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredDef {
    pub name: String,
    pub params: Vec<Var>,
    pub cases: Vec<PredCase>,
}

impl PredDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// The system of inductive predicate definitions.
#[derive(Debug, Clone, Default)]
pub struct PredEnv {
    defs: Vec<PredDef>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown predicate `{0}`")]
    UnknownPred(String),
    #[error("predicate `{0}` expects {1} arguments, got {2}")]
    PredArity(String, usize, usize),
    #[error("duplicate predicate definition `{0}`")]
    DuplicatePred(String),
}

impl PredEnv {
    pub fn new() -> Self {
        PredEnv { defs: Vec::new() }
    }

    pub fn insert(&mut self, def: PredDef) -> Result<(), EnvError> {
        if self.get(&def.name).is_some() {
            return Err(EnvError::DuplicatePred(def.name));
        }
        self.defs.push(def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&PredDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn defs(&self) -> &[PredDef] {
        &self.defs
    }

    /// Recompute base/inductive flags from the call graph: a case is base iff
    /// it contains no predicate in the same strongly connected component as
    /// its owner.
    pub fn classify_cases(&mut self) {
        let names: Vec<String> = self.defs.iter().map(|d| d.name.clone()).collect();
        let idx_of = |n: &str| names.iter().position(|m| m == n);
        // direct call edges
        let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.defs.len()];
        for (i, def) in self.defs.iter().enumerate() {
            for case in &def.cases {
                for atom in &case.body.spatial {
                    if let SpatialAtom::PredApp { pred, .. } = atom {
                        if let Some(j) = idx_of(pred) {
                            edges[i].insert(j);
                        }
                    }
                }
            }
        }
        // reachability closure
        let n = self.defs.len();
        let mut reach = vec![vec![false; n]; n];
        for (i, es) in edges.iter().enumerate() {
            let mut stack: Vec<usize> = es.iter().copied().collect();
            while let Some(j) = stack.pop() {
                if !reach[i][j] {
                    reach[i][j] = true;
                    stack.extend(edges[j].iter().copied());
                }
            }
        }
        let mutual = |i: usize, j: usize| i == j || (reach[i][j] && reach[j][i]);
        for i in 0..n {
            let mut flags = Vec::new();
            for case in &self.defs[i].cases {
                let recursive = case.body.spatial.iter().any(|a| match a {
                    SpatialAtom::PredApp { pred, .. } => idx_of(pred).is_some_and(|j| mutual(i, j)),
                    _ => false,
                });
                flags.push(!recursive);
            }
            for (case, base) in self.defs[i].cases.iter_mut().zip(flags) {
                case.base = base;
            }
        }
    }
}

/// An entailment `ante |- cons`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entailment {
    pub ante: SymbolicHeap,
    pub cons: SymbolicHeap,
}

/// A substitution term: something a variable may be replaced by.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Var),
    Nil,
    Int(IntExpr),
}

impl Term {
    pub fn from_expr(e: &Expr) -> Term {
        match e {
            Expr::Addr(AddrExpr::Var(v)) => Term::Var(v.clone()),
            Expr::Addr(AddrExpr::Nil) => Term::Nil,
            Expr::Int(IntExpr::Var(v)) => Term::Var(v.clone()),
            Expr::Int(e) => Term::Int(e.clone()),
        }
    }

    fn free_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Nil => {}
            Term::Int(e) => int_free_vars(e, out),
        }
    }
}

/// A simultaneous substitution with pairwise distinct domain variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subst {
    pairs: Vec<(Var, Term)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SortError {
    #[error("cannot substitute integer expression for `{0}` in an address position")]
    IntForAddr(String),
    #[error("cannot substitute `nil` for `{0}` in an integer position")]
    NilForInt(String),
    #[error("cannot substitute a non-variable for points-to root `{0}`")]
    NonVarRoot(String),
}

impl Subst {
    pub fn new() -> Self {
        Subst { pairs: Vec::new() }
    }

    pub fn single(v: Var, t: Term) -> Self {
        Subst {
            pairs: vec![(v, t)],
        }
    }

    /// Bind `v` to `t`. Returns false (and leaves the map unchanged) when `v`
    /// is already bound to a different term.
    pub fn bind(&mut self, v: Var, t: Term) -> bool {
        match self.lookup(&v) {
            Some(existing) => existing == &t,
            None => {
                self.pairs.push((v, t));
                true
            }
        }
    }

    pub fn lookup(&self, v: &Var) -> Option<&Term> {
        self.pairs.iter().find(|(u, _)| u == v).map(|(_, t)| t)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Var, Term)] {
        &self.pairs
    }

    pub fn range_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for (_, t) in &self.pairs {
            t.free_vars(&mut out);
        }
        out
    }
}

fn int_free_vars(e: &IntExpr, out: &mut BTreeSet<Var>) {
    match e {
        IntExpr::Const(_) => {}
        IntExpr::Var(v) => {
            out.insert(v.clone());
        }
        IntExpr::Neg(a) => int_free_vars(a, out),
        IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
            int_free_vars(a, out);
            int_free_vars(b, out);
        }
    }
}

fn pure_free_vars(p: &Pure, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
    match p {
        Pure::True | Pure::False => {}
        Pure::AddrEq(a, b) | Pure::AddrNe(a, b) => {
            for e in [a, b] {
                if let AddrExpr::Var(v) = e {
                    if !bound.contains(v) {
                        out.insert(v.clone());
                    }
                }
            }
        }
        Pure::IntCmp(_, a, b) => {
            let mut vars = BTreeSet::new();
            int_free_vars(a, &mut vars);
            int_free_vars(b, &mut vars);
            for v in vars {
                if !bound.contains(&v) {
                    out.insert(v);
                }
            }
        }
        Pure::Not(a) => pure_free_vars(a, bound, out),
        Pure::And(a, b) | Pure::Or(a, b) | Pure::Imp(a, b) => {
            pure_free_vars(a, bound, out);
            pure_free_vars(b, bound, out);
        }
        Pure::Forall(v, a) | Pure::Exists(v, a) => {
            bound.push(v.clone());
            pure_free_vars(a, bound, out);
            bound.pop();
        }
    }
}

fn expr_free_vars(e: &Expr, out: &mut BTreeSet<Var>) {
    match e {
        Expr::Addr(AddrExpr::Var(v)) => {
            out.insert(v.clone());
        }
        Expr::Addr(AddrExpr::Nil) => {}
        Expr::Int(i) => int_free_vars(i, out),
    }
}

/// Free variables of a symbolic heap: everything outside the existential
/// prefix and inner pure binders.
pub fn free_vars(f: &SymbolicHeap) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    for atom in &f.spatial {
        match atom {
            SpatialAtom::Emp => {}
            SpatialAtom::PointsTo { root, args, .. } => {
                out.insert(root.clone());
                for a in args {
                    expr_free_vars(a, &mut out);
                }
            }
            SpatialAtom::PredApp { args, .. } => {
                for a in args {
                    expr_free_vars(a, &mut out);
                }
            }
        }
    }
    let mut bound = Vec::new();
    pure_free_vars(&f.pure, &mut bound, &mut out);
    for v in &f.exists {
        out.remove(v);
    }
    out
}

pub fn entailment_free_vars(e: &Entailment) -> BTreeSet<Var> {
    let mut out = free_vars(&e.ante);
    out.extend(free_vars(&e.cons));
    out
}

fn subst_int(e: &IntExpr, s: &Subst) -> Result<IntExpr, SortError> {
    Ok(match e {
        IntExpr::Const(c) => IntExpr::Const(*c),
        IntExpr::Var(v) => match s.lookup(v) {
            None => IntExpr::Var(v.clone()),
            Some(Term::Var(u)) => IntExpr::Var(u.clone()),
            Some(Term::Int(x)) => x.clone(),
            Some(Term::Nil) => return Err(SortError::NilForInt(v.name.clone())),
        },
        IntExpr::Neg(a) => IntExpr::Neg(Box::new(subst_int(a, s)?)),
        IntExpr::Add(a, b) => IntExpr::Add(Box::new(subst_int(a, s)?), Box::new(subst_int(b, s)?)),
        IntExpr::Sub(a, b) => IntExpr::Sub(Box::new(subst_int(a, s)?), Box::new(subst_int(b, s)?)),
    })
}

fn subst_addr(e: &AddrExpr, s: &Subst) -> Result<AddrExpr, SortError> {
    Ok(match e {
        AddrExpr::Nil => AddrExpr::Nil,
        AddrExpr::Var(v) => match s.lookup(v) {
            None => AddrExpr::Var(v.clone()),
            Some(Term::Var(u)) => AddrExpr::Var(u.clone()),
            Some(Term::Nil) => AddrExpr::Nil,
            Some(Term::Int(_)) => return Err(SortError::IntForAddr(v.name.clone())),
        },
    })
}

fn subst_expr(e: &Expr, s: &Subst) -> Result<Expr, SortError> {
    Ok(match e {
        Expr::Addr(a) => Expr::Addr(subst_addr(a, s)?),
        Expr::Int(i) => Expr::Int(subst_int(i, s)?),
    })
}

fn subst_pure(p: &Pure, s: &Subst, vars: &mut VarGen) -> Result<Pure, SortError> {
    Ok(match p {
        Pure::True => Pure::True,
        Pure::False => Pure::False,
        Pure::AddrEq(a, b) => Pure::AddrEq(subst_addr(a, s)?, subst_addr(b, s)?),
        Pure::AddrNe(a, b) => Pure::AddrNe(subst_addr(a, s)?, subst_addr(b, s)?),
        Pure::IntCmp(op, a, b) => Pure::IntCmp(*op, subst_int(a, s)?, subst_int(b, s)?),
        Pure::Not(a) => Pure::Not(Box::new(subst_pure(a, s, vars)?)),
        Pure::And(a, b) => Pure::And(
            Box::new(subst_pure(a, s, vars)?),
            Box::new(subst_pure(b, s, vars)?),
        ),
        Pure::Or(a, b) => Pure::Or(
            Box::new(subst_pure(a, s, vars)?),
            Box::new(subst_pure(b, s, vars)?),
        ),
        Pure::Imp(a, b) => Pure::Imp(
            Box::new(subst_pure(a, s, vars)?),
            Box::new(subst_pure(b, s, vars)?),
        ),
        Pure::Forall(v, a) => {
            let (v2, body) = subst_under_binder(v, a, s, vars)?;
            Pure::Forall(v2, Box::new(body))
        }
        Pure::Exists(v, a) => {
            let (v2, body) = subst_under_binder(v, a, s, vars)?;
            Pure::Exists(v2, Box::new(body))
        }
    })
}

fn subst_under_binder(
    v: &Var,
    body: &Pure,
    s: &Subst,
    vars: &mut VarGen,
) -> Result<(Var, Pure), SortError> {
    // Drop any binding of the bound variable itself, rename on capture.
    let mut inner = Subst::new();
    for (u, t) in s.pairs() {
        if u != v {
            inner.pairs.push((u.clone(), t.clone()));
        }
    }
    if inner.range_vars().contains(v) {
        let fresh = vars.fresh(&v.name);
        inner.pairs.push((v.clone(), Term::Var(fresh.clone())));
        let body2 = subst_pure(body, &inner, vars)?;
        Ok((fresh, body2))
    } else {
        Ok((v.clone(), subst_pure(body, &inner, vars)?))
    }
}

fn subst_atom(a: &SpatialAtom, s: &Subst) -> Result<SpatialAtom, SortError> {
    Ok(match a {
        SpatialAtom::Emp => SpatialAtom::Emp,
        SpatialAtom::PointsTo { root, sort, args } => {
            let root2 = match s.lookup(root) {
                None => root.clone(),
                Some(Term::Var(u)) => u.clone(),
                Some(_) => return Err(SortError::NonVarRoot(root.name.clone())),
            };
            let args2 = args
                .iter()
                .map(|e| subst_expr(e, s))
                .collect::<Result<_, _>>()?;
            SpatialAtom::PointsTo {
                root: root2,
                sort: sort.clone(),
                args: args2,
            }
        }
        SpatialAtom::PredApp { pred, args } => SpatialAtom::PredApp {
            pred: pred.clone(),
            args: args
                .iter()
                .map(|e| subst_expr(e, s))
                .collect::<Result<_, _>>()?,
        },
    })
}

/// Capture-avoiding simultaneous substitution over a symbolic heap.
pub fn subst_apply(
    f: &SymbolicHeap,
    s: &Subst,
    vars: &mut VarGen,
) -> Result<SymbolicHeap, SortError> {
    // Restrict to bindings whose domain variable is actually free here.
    let fv = free_vars(f);
    let mut active = Subst::new();
    for (u, t) in s.pairs() {
        if fv.contains(u) {
            active.pairs.push((u.clone(), t.clone()));
        }
    }
    if active.is_empty() {
        return Ok(f.clone());
    }
    // Rename prefix binders hit by the range.
    let range = active.range_vars();
    let mut exists = Vec::with_capacity(f.exists.len());
    for v in &f.exists {
        if range.contains(v) {
            let fresh = vars.fresh(&v.name);
            active.pairs.push((v.clone(), Term::Var(fresh.clone())));
            exists.push(fresh);
        } else {
            exists.push(v.clone());
        }
    }
    let spatial = f
        .spatial
        .iter()
        .map(|a| subst_atom(a, &active))
        .collect::<Result<Vec<_>, _>>()?;
    let pure = subst_pure(&f.pure, &active, vars)?;
    Ok(SymbolicHeap {
        exists,
        spatial,
        pure,
    })
}

/// Syntactic equivalence of spatial parts: multiset equality of atoms
/// (the AC closure of `*`), ignoring `emp` padding.
pub fn syn_equiv(s1: &[SpatialAtom], s2: &[SpatialAtom]) -> bool {
    let mut a: Vec<&SpatialAtom> = s1.iter().filter(|x| !x.is_emp()).collect();
    let mut b: Vec<&SpatialAtom> = s2.iter().filter(|x| !x.is_emp()).collect();
    if a.len() != b.len() {
        return false;
    }
    a.sort();
    b.sort();
    a == b
}

#[derive(Debug, Error)]
pub enum UnfoldError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sort(#[from] SortError),
}

/// Instantiate every definition case of `pred(args)`: formals replaced by the
/// actuals, case existentials freshened.
pub fn unfold_cases(
    pred: &str,
    args: &[Expr],
    env: &PredEnv,
    vars: &mut VarGen,
) -> Result<Vec<SymbolicHeap>, UnfoldError> {
    let def = env
        .get(pred)
        .ok_or_else(|| EnvError::UnknownPred(pred.to_string()))?;
    if def.arity() != args.len() {
        return Err(EnvError::PredArity(pred.to_string(), def.arity(), args.len()).into());
    }
    let mut out = Vec::with_capacity(def.cases.len());
    for case in &def.cases {
        // Freshen case existentials first so actuals can never be captured.
        let mut renaming = Subst::new();
        let mut fresh_exists = Vec::with_capacity(case.body.exists.len());
        for v in &case.body.exists {
            let fresh = vars.fresh(&v.name);
            renaming.pairs.push((v.clone(), Term::Var(fresh.clone())));
            fresh_exists.push(fresh);
        }
        let spatial = case
            .body
            .spatial
            .iter()
            .map(|a| subst_atom(a, &renaming))
            .collect::<Result<Vec<_>, SortError>>()?;
        let pure = subst_pure(&case.body.pure, &renaming, vars)?;
        let opened = SymbolicHeap {
            exists: fresh_exists,
            spatial,
            pure,
        };

        let mut inst = Subst::new();
        for (param, actual) in def.params.iter().zip(args) {
            inst.pairs.push((param.clone(), Term::from_expr(actual)));
        }
        let body = subst_apply(&opened, &inst, vars)?;
        out.push(body);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn pts(root: Var, arg: Var) -> SpatialAtom {
        SpatialAtom::PointsTo {
            root,
            sort: "node".into(),
            args: vec![Expr::var(arg)],
        }
    }

    fn papp(pred: &str, args: &[Var]) -> SpatialAtom {
        SpatialAtom::PredApp {
            pred: pred.into(),
            args: args.iter().cloned().map(Expr::var).collect(),
        }
    }

    /// The running two-predicate environment: a list segment and a
    /// one-or-two-step list cover.
    pub(crate) fn list_env(vars: &mut VarGen) -> PredEnv {
        let mut env = PredEnv::new();
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let w = vars.fresh("w");
        env.insert(PredDef {
            name: "ls".into(),
            params: vec![x.clone(), y.clone()],
            cases: vec![
                PredCase {
                    body: SymbolicHeap::new(
                        vec![],
                        vec![],
                        Pure::AddrEq(AddrExpr::Var(x.clone()), AddrExpr::Var(y.clone())),
                    ),
                    base: true,
                },
                PredCase {
                    body: SymbolicHeap::new(
                        vec![w.clone()],
                        vec![
                            pts(x.clone(), w.clone()),
                            papp("ls", &[w.clone(), y.clone()]),
                        ],
                        Pure::True,
                    ),
                    base: false,
                },
            ],
        })
        .unwrap();
        let x2 = vars.fresh("x");
        let u = vars.fresh("u");
        let u2 = vars.fresh("u");
        let v2 = vars.fresh("v");
        env.insert(PredDef {
            name: "tmp".into(),
            params: vec![x2.clone()],
            cases: vec![
                PredCase {
                    body: SymbolicHeap::new(vec![], vec![], Pure::True),
                    base: true,
                },
                PredCase {
                    body: SymbolicHeap::new(
                        vec![u.clone()],
                        vec![
                            pts(x2.clone(), u.clone()),
                            papp("tmp", std::slice::from_ref(&u)),
                        ],
                        Pure::True,
                    ),
                    base: false,
                },
                PredCase {
                    body: SymbolicHeap::new(
                        vec![u2.clone(), v2.clone()],
                        vec![
                            pts(x2.clone(), u2.clone()),
                            pts(u2.clone(), v2.clone()),
                            papp("tmp", std::slice::from_ref(&v2)),
                        ],
                        Pure::True,
                    ),
                    base: false,
                },
            ],
        })
        .unwrap();
        env.classify_cases();
        env
    }

    #[test]
    fn subst_replaces_pred_arg() {
        // (tmp(x))[u/x] -> tmp(u)
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let u = vars.fresh("u");
        let f = SymbolicHeap::new(
            vec![],
            vec![papp("tmp", std::slice::from_ref(&x))],
            Pure::True,
        );
        let s = Subst::single(x, Term::Var(u.clone()));
        let g = subst_apply(&f, &s, &mut vars).unwrap();
        assert_eq!(g.spatial, vec![papp("tmp", &[u])]);
    }

    #[test]
    fn subst_identity_is_structural_noop() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let f = SymbolicHeap::new(
            vec![],
            vec![papp("tmp", std::slice::from_ref(&x))],
            Pure::True,
        );
        let s = Subst::single(x.clone(), Term::Var(x));
        let g = subst_apply(&f, &s, &mut vars).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn subst_avoids_capture() {
        // (exists y. ls(x, y))[y/x] renames the binder when the range
        // contains the bound variable itself
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let f = SymbolicHeap::new(
            vec![y.clone()],
            vec![papp("ls", &[x.clone(), y.clone()])],
            Pure::True,
        );
        let s = Subst::single(x, Term::Var(y.clone()));
        let g = subst_apply(&f, &s, &mut vars).unwrap();
        assert_eq!(g.exists.len(), 1);
        let renamed = &g.exists[0];
        assert_ne!(renamed, &y);
        assert_eq!(g.spatial, vec![papp("ls", &[y, renamed.clone()])]);
    }

    #[test]
    fn free_vars_basic() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let u = vars.fresh("u");
        let f = SymbolicHeap::new(
            vec![],
            vec![
                pts(x.clone(), u.clone()),
                papp("tmp", std::slice::from_ref(&u)),
            ],
            Pure::True,
        );
        let fv = free_vars(&f);
        assert_eq!(fv, [x, u].into_iter().collect());
    }

    #[test]
    fn free_vars_skips_binders() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let f = SymbolicHeap::new(
            vec![y.clone()],
            vec![papp("ls", &[x.clone(), y])],
            Pure::True,
        );
        assert_eq!(free_vars(&f), [x].into_iter().collect());
        let emp = SymbolicHeap::pure_only(Pure::True);
        assert!(free_vars(&emp).is_empty());
    }

    #[test]
    fn syn_equiv_is_permutation_invariant() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let u = vars.fresh("u");
        let a = pts(x.clone(), u.clone());
        let b = papp("tmp", std::slice::from_ref(&u));
        assert!(syn_equiv(&[SpatialAtom::Emp], &[SpatialAtom::Emp]));
        assert!(syn_equiv(&[a.clone(), b.clone()], &[b.clone(), a.clone()]));
        let c = pts(x.clone(), x.clone());
        assert!(!syn_equiv(&[pts(x.clone(), u)], &[c]));
    }

    #[test]
    fn unfold_matches_declared_case_counts() {
        let mut vars = VarGen::new();
        let env = list_env(&mut vars);
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let ls_cases =
            unfold_cases("ls", &[Expr::var(x.clone()), Expr::var(y)], &env, &mut vars).unwrap();
        assert_eq!(ls_cases.len(), 2);
        assert!(ls_cases[0].is_spatially_emp());
        let tmp_cases = unfold_cases("tmp", &[Expr::var(x.clone())], &env, &mut vars).unwrap();
        assert_eq!(tmp_cases.len(), 3);
        // freshness: two unfoldings yield distinct existential ids
        let again = unfold_cases("tmp", &[Expr::var(x)], &env, &mut vars).unwrap();
        assert_ne!(tmp_cases[1].exists, again[1].exists);
    }

    #[test]
    fn base_case_classification_uses_call_graph() {
        let mut vars = VarGen::new();
        let env = list_env(&mut vars);
        let ls = env.get("ls").unwrap();
        assert!(ls.cases[0].base);
        assert!(!ls.cases[1].base);
        let tmp = env.get("tmp").unwrap();
        assert_eq!(
            tmp.cases.iter().map(|c| c.base).collect::<Vec<_>>(),
            vec![true, false, false]
        );
    }
}

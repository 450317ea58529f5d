//! Bounded-model semantics: stacks, finite heaps, formula evaluation, model
//! enumeration and counter-model search.
//!
//! Satisfaction of inductive predicates is the least fixed point of the
//! definition cases over a finite universe. The oracle precomputes one dense
//! truth table per (heap, predicate, argument tuple); heaps are enumerated in
//! increasing size, so each table row only consults rows of strictly smaller
//! heaps (plus itself, for cases that consume no cells) and the fixpoint is
//! reached stratum by stratum.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::ast::{
    entailment_free_vars, AddrExpr, CmpOp, Entailment, Expr, IntExpr, PredEnv, Pure, Sort,
    SpatialAtom, SymbolicHeap, Var,
};
use crate::kinds::KindMap;

/// A stack value: `nil`, an allocated location, or an integer.
///
/// The derived order (`Nil < Loc < Int`, each ascending) is the enumeration
/// order of the universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Nil,
    Loc(u32),
    Int(i64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => write!(f, "nil"),
            Value::Loc(l) => write!(f, "Loc{}", l),
            Value::Int(n) => write!(f, "{}", n),
        }
    }
}

pub type Stack = BTreeMap<Var, Value>;

/// One allocated cell: location, record sort (index into the sort list) and
/// field values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeapCell {
    pub loc: u32,
    pub sort: usize,
    pub fields: Vec<Value>,
}

/// A finite heap; cells are kept sorted by location and locations are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Heap {
    cells: Vec<HeapCell>,
}

impl Heap {
    pub fn empty() -> Heap {
        Heap::default()
    }

    /// Returns `None` when two cells share a location.
    pub fn from_cells(mut cells: Vec<HeapCell>) -> Option<Heap> {
        cells.sort();
        if cells.windows(2).any(|w| w[0].loc == w[1].loc) {
            return None;
        }
        Some(Heap { cells })
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[HeapCell] {
        &self.cells
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub stack: Stack,
    pub heap: Heap,
}

/// The well-founded model order: strictly fewer allocated cells.
pub fn model_lt(a: &Model, b: &Model) -> bool {
    a.heap.size() < b.heap.size()
}

/// Enumeration bounds: maximum heap size, number of locations, and an
/// inclusive integer interval (`None` for no integers at all).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub max_heap_size: usize,
    pub loc_count: u32,
    pub int_range: Option<(i64, i64)>,
}

impl Bounds {
    pub fn new(max_heap_size: usize, loc_count: u32, int_range: Option<(i64, i64)>) -> Bounds {
        Bounds {
            max_heap_size,
            loc_count,
            int_range,
        }
    }

    /// `nil`, the locations, then the integers, in enumeration order.
    pub fn universe(&self) -> Vec<Value> {
        let mut u = vec![Value::Nil];
        u.extend((1..=self.loc_count).map(Value::Loc));
        u.extend(self.ints());
        u
    }

    pub fn ints(&self) -> Vec<Value> {
        match self.int_range {
            Some((lo, hi)) if lo <= hi => (lo..=hi).map(Value::Int).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("`{0}` holds a non-integer value in an arithmetic context")]
    NonInteger(String),
    #[error("integer overflow during evaluation")]
    Overflow,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown predicate `{0}`")]
    UnknownPred(String),
    #[error("unknown sort `{0}`")]
    UnknownSort(String),
    #[error("predicate `{0}` expects {1} arguments, got {2}")]
    PredArity(String, usize, usize),
    #[error("sort `{0}` has {1} fields, points-to supplies {2}")]
    SortArity(String, usize, usize),
    #[error("case body of `{0}` mentions `{1}`, which is neither a parameter nor bound")]
    OpenDefinition(String, String),
    #[error("model heap is not within the oracle bounds")]
    HeapOutOfBounds,
    #[error("stack value for `{0}` is outside the universe")]
    StackValueOutOfBounds(String),
}

fn eval_int(e: &IntExpr, s: &Stack) -> Result<i64, EvalError> {
    match e {
        IntExpr::Const(c) => Ok(*c),
        IntExpr::Var(v) => match s.get(v) {
            Some(Value::Int(n)) => Ok(*n),
            Some(_) => Err(EvalError::NonInteger(v.name.clone())),
            None => Err(EvalError::UnboundVar(v.name.clone())),
        },
        IntExpr::Neg(a) => eval_int(a, s)?.checked_neg().ok_or(EvalError::Overflow),
        IntExpr::Add(a, b) => eval_int(a, s)?
            .checked_add(eval_int(b, s)?)
            .ok_or(EvalError::Overflow),
        IntExpr::Sub(a, b) => eval_int(a, s)?
            .checked_sub(eval_int(b, s)?)
            .ok_or(EvalError::Overflow),
    }
}

fn eval_addr(e: &AddrExpr, s: &Stack) -> Result<Value, EvalError> {
    match e {
        AddrExpr::Nil => Ok(Value::Nil),
        AddrExpr::Var(v) => s
            .get(v)
            .copied()
            .ok_or_else(|| EvalError::UnboundVar(v.name.clone())),
    }
}

fn eval_expr(e: &Expr, s: &Stack) -> Result<Value, EvalError> {
    match e {
        Expr::Addr(a) => eval_addr(a, s),
        Expr::Int(i) => Ok(Value::Int(eval_int(i, s)?)),
    }
}

fn cmp_holds(op: CmpOp, a: i64, b: i64) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    }
}

/// Evaluate a pure formula under a stack. Quantifiers range over the bounded
/// universe; integer-kinded binders range over the integer values only.
pub fn eval_pure(
    p: &Pure,
    s: &Stack,
    universe: &[Value],
    ints: &[Value],
    kinds: &KindMap,
) -> Result<bool, EvalError> {
    let mut local = s.clone();
    eval_pure_mut(p, &mut local, universe, ints, kinds)
}

fn eval_pure_mut(
    p: &Pure,
    s: &mut Stack,
    universe: &[Value],
    ints: &[Value],
    kinds: &KindMap,
) -> Result<bool, EvalError> {
    Ok(match p {
        Pure::True => true,
        Pure::False => false,
        Pure::AddrEq(a, b) => eval_addr(a, s)? == eval_addr(b, s)?,
        Pure::AddrNe(a, b) => eval_addr(a, s)? != eval_addr(b, s)?,
        Pure::IntCmp(op, a, b) => cmp_holds(*op, eval_int(a, s)?, eval_int(b, s)?),
        Pure::Not(a) => !eval_pure_mut(a, s, universe, ints, kinds)?,
        Pure::And(a, b) => {
            eval_pure_mut(a, s, universe, ints, kinds)?
                & eval_pure_mut(b, s, universe, ints, kinds)?
        }
        Pure::Or(a, b) => {
            eval_pure_mut(a, s, universe, ints, kinds)?
                | eval_pure_mut(b, s, universe, ints, kinds)?
        }
        Pure::Imp(a, b) => {
            !eval_pure_mut(a, s, universe, ints, kinds)?
                | eval_pure_mut(b, s, universe, ints, kinds)?
        }
        Pure::Forall(v, a) => {
            let vals = if kinds.is_int(v) { ints } else { universe };
            let saved = s.get(v).copied();
            let mut all = true;
            for val in vals {
                s.insert(v.clone(), *val);
                if !eval_pure_mut(a, s, universe, ints, kinds)? {
                    all = false;
                    break;
                }
            }
            restore(s, v, saved);
            all
        }
        Pure::Exists(v, a) => {
            let vals = if kinds.is_int(v) { ints } else { universe };
            let saved = s.get(v).copied();
            let mut any = false;
            for val in vals {
                s.insert(v.clone(), *val);
                if eval_pure_mut(a, s, universe, ints, kinds)? {
                    any = true;
                    break;
                }
            }
            restore(s, v, saved);
            any
        }
    })
}

fn restore(s: &mut Stack, v: &Var, saved: Option<Value>) {
    match saved {
        Some(val) => {
            s.insert(v.clone(), val);
        }
        None => {
            s.remove(v);
        }
    }
}

/// Odometer over index tuples; dimension 0 is the most significant.
struct Assignments {
    radii: Vec<usize>,
    idx: Vec<usize>,
    fresh: bool,
    dead: bool,
}

fn assignments(radii: Vec<usize>) -> Assignments {
    let dead = radii.contains(&0);
    Assignments {
        idx: vec![0; radii.len()],
        radii,
        fresh: true,
        dead,
    }
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.dead {
            return None;
        }
        if self.fresh {
            self.fresh = false;
            return Some(self.idx.clone());
        }
        for d in (0..self.idx.len()).rev() {
            if self.idx[d] + 1 < self.radii[d] {
                self.idx[d] += 1;
                return Some(self.idx.clone());
            }
            self.idx[d] = 0;
        }
        self.dead = true;
        None
    }
}

fn combinations(items: &[u32], k: usize) -> Vec<Vec<u32>> {
    fn rec(items: &[u32], k: usize, start: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// One truth-table row: `row[pred][tuple]`.
type TableRow = Vec<Vec<bool>>;

/// The bounded-model oracle for a fixed predicate environment, sort list and
/// bounds. Building it computes the full predicate tables once; `sat` and
/// counter-model search are table lookups plus quantifier enumeration.
pub struct Oracle<'a> {
    env: &'a PredEnv,
    sorts: &'a [Sort],
    bounds: Bounds,
    universe: Vec<Value>,
    int_values: Vec<Value>,
    value_idx: HashMap<Value, usize>,
    kinds: KindMap,
    sort_idx: HashMap<String, usize>,
    pred_idx: HashMap<String, usize>,
    heaps: Vec<Heap>,
    heap_ids: HashMap<Heap, u32>,
    /// index ranges into `heaps`, one per heap size
    strata: Vec<(usize, usize)>,
    tables: Vec<TableRow>,
}

impl<'a> Oracle<'a> {
    pub fn new(
        env: &'a PredEnv,
        sorts: &'a [Sort],
        bounds: Bounds,
    ) -> Result<Oracle<'a>, OracleError> {
        let universe = bounds.universe();
        let value_idx = universe.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let sort_idx: HashMap<String, usize> = sorts
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        let pred_idx: HashMap<String, usize> = env
            .defs()
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), i))
            .collect();

        let (heaps, strata) = enumerate_heaps(sorts, &bounds);
        let heap_ids = heaps
            .iter()
            .enumerate()
            .map(|(i, h)| (h.clone(), i as u32))
            .collect();

        let mut oracle = Oracle {
            env,
            sorts,
            bounds,
            universe,
            int_values: bounds.ints(),
            value_idx,
            kinds: KindMap::for_env(env),
            sort_idx,
            pred_idx,
            heaps,
            heap_ids,
            strata,
            tables: Vec::new(),
        };
        oracle.validate_env()?;
        oracle.tables = oracle.build_tables()?;
        Ok(oracle)
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn heap_count(&self) -> usize {
        self.heaps.len()
    }

    fn validate_env(&self) -> Result<(), OracleError> {
        for def in self.env.defs() {
            for case in &def.cases {
                self.validate_formula(&case.body)?;
                let params: Vec<&Var> = def.params.iter().collect();
                for v in crate::ast::free_vars(&case.body) {
                    if !params.contains(&&v) {
                        return Err(OracleError::OpenDefinition(
                            def.name.clone(),
                            v.name.clone(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_formula(&self, f: &SymbolicHeap) -> Result<(), OracleError> {
        for atom in f.atoms() {
            match atom {
                SpatialAtom::Emp => {}
                SpatialAtom::PointsTo { sort, args, .. } => {
                    let si = *self
                        .sort_idx
                        .get(sort)
                        .ok_or_else(|| OracleError::UnknownSort(sort.clone()))?;
                    let want = self.sorts[si].arity();
                    if want != args.len() {
                        return Err(OracleError::SortArity(sort.clone(), want, args.len()));
                    }
                }
                SpatialAtom::PredApp { pred, args } => {
                    let def = self
                        .env
                        .get(pred)
                        .ok_or_else(|| OracleError::UnknownPred(pred.clone()))?;
                    if def.arity() != args.len() {
                        return Err(OracleError::PredArity(
                            pred.clone(),
                            def.arity(),
                            args.len(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn encode_tuple(&self, vals: &[Value]) -> Option<usize> {
        let u = self.universe.len();
        let mut idx = 0usize;
        for v in vals {
            idx = idx * u + self.value_idx.get(v)?;
        }
        Some(idx)
    }

    fn decode_tuple(&self, mut idx: usize, arity: usize) -> Vec<Value> {
        let u = self.universe.len();
        let mut out = vec![Value::Nil; arity];
        for slot in out.iter_mut().rev() {
            *slot = self.universe[idx % u];
            idx /= u;
        }
        out
    }

    fn tuple_count(&self, arity: usize) -> usize {
        self.universe.len().pow(arity as u32)
    }

    fn build_tables(&self) -> Result<Vec<TableRow>, OracleError> {
        let mut tables: Vec<TableRow> = Vec::with_capacity(self.heaps.len());
        for &(start, end) in &self.strata {
            let done = &tables;
            #[cfg(feature = "parallel")]
            let rows: Result<Vec<TableRow>, OracleError> = (start..end)
                .into_par_iter()
                .map(|hi| self.compute_row(hi, done))
                .collect();
            #[cfg(not(feature = "parallel"))]
            let rows: Result<Vec<TableRow>, OracleError> =
                (start..end).map(|hi| self.compute_row(hi, done)).collect();
            tables.extend(rows?);
        }
        Ok(tables)
    }

    /// The fixpoint for one heap. Rows of strictly smaller heaps are final in
    /// `done`; self-references (cases consuming no cells) go through the row
    /// under construction, iterated in rounds until stable.
    fn compute_row(&self, hi: usize, done: &[TableRow]) -> Result<TableRow, OracleError> {
        let mut row: TableRow = self
            .env
            .defs()
            .iter()
            .map(|d| vec![false; self.tuple_count(d.arity())])
            .collect();
        loop {
            let mut updates = Vec::new();
            {
                let lookup = |p: usize, t: usize, id: u32| {
                    if id as usize == hi {
                        row[p][t]
                    } else {
                        done[id as usize][p][t]
                    }
                };
                for (pi, def) in self.env.defs().iter().enumerate() {
                    // ti is both a row index and a tuple code, so a plain
                    // range reads better than enumerate over the row
                    #[allow(clippy::needless_range_loop)]
                    for ti in 0..self.tuple_count(def.arity()) {
                        if row[pi][ti] {
                            continue;
                        }
                        let args = self.decode_tuple(ti, def.arity());
                        // an integer-kinded parameter bound to a non-integer
                        // denotes nothing; leave the row false rather than
                        // evaluating arithmetic on an address
                        let mismatched = def
                            .params
                            .iter()
                            .zip(&args)
                            .any(|(p, v)| self.kinds.is_int(p) && !matches!(v, Value::Int(_)));
                        if mismatched {
                            continue;
                        }
                        let mut holds = false;
                        for case in &def.cases {
                            let stack: Stack = def
                                .params
                                .iter()
                                .cloned()
                                .zip(args.iter().copied())
                                .collect();
                            if self.sat_with(&stack, hi, &case.body, &self.kinds, &lookup)? {
                                holds = true;
                                break;
                            }
                        }
                        if holds {
                            updates.push((pi, ti));
                        }
                    }
                }
            }
            if updates.is_empty() {
                return Ok(row);
            }
            for (pi, ti) in updates {
                row[pi][ti] = true;
            }
        }
    }

    /// Satisfaction of a symbolic heap against heap `hi` under `base_stack`,
    /// enumerating the existential prefix.
    fn sat_with<L: Fn(usize, usize, u32) -> bool>(
        &self,
        base_stack: &Stack,
        hi: usize,
        f: &SymbolicHeap,
        kinds: &KindMap,
        lookup: &L,
    ) -> Result<bool, OracleError> {
        let options: Vec<&[Value]> = f
            .exists
            .iter()
            .map(|v| {
                if kinds.is_int(v) {
                    self.int_values.as_slice()
                } else {
                    self.universe.as_slice()
                }
            })
            .collect();
        let radii: Vec<usize> = options.iter().map(|o| o.len()).collect();
        for idx in assignments(radii) {
            let mut stack = base_stack.clone();
            for (d, v) in f.exists.iter().enumerate() {
                stack.insert(v.clone(), options[d][idx[d]]);
            }
            if !eval_pure(&f.pure, &stack, &self.universe, &self.int_values, kinds)? {
                continue;
            }
            if self.sat_spatial(f, &stack, hi, lookup)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Exact-cover matching of the spatial part against heap `hi`: points-to
    /// atoms claim their cells, then every split of the remaining cells among
    /// the predicate atoms is tried.
    fn sat_spatial<L: Fn(usize, usize, u32) -> bool>(
        &self,
        f: &SymbolicHeap,
        stack: &Stack,
        hi: usize,
        lookup: &L,
    ) -> Result<bool, OracleError> {
        let heap = &self.heaps[hi];
        let n = heap.cells().len();
        let mut consumed = vec![false; n];
        let mut preds: Vec<(usize, usize)> = Vec::new();
        for atom in f.atoms() {
            match atom {
                SpatialAtom::Emp => {}
                SpatialAtom::PointsTo { root, sort, args } => {
                    let rv = stack
                        .get(root)
                        .copied()
                        .ok_or_else(|| EvalError::UnboundVar(root.name.clone()))?;
                    let Value::Loc(l) = rv else { return Ok(false) };
                    let Some(ci) = heap.cells().iter().position(|c| c.loc == l) else {
                        return Ok(false);
                    };
                    if consumed[ci] {
                        return Ok(false);
                    }
                    let cell = &heap.cells()[ci];
                    let si = self.sort_idx[sort.as_str()];
                    if cell.sort != si || cell.fields.len() != args.len() {
                        return Ok(false);
                    }
                    for (a, fv) in args.iter().zip(&cell.fields) {
                        if eval_expr(a, stack)? != *fv {
                            return Ok(false);
                        }
                    }
                    consumed[ci] = true;
                }
                SpatialAtom::PredApp { pred, args } => {
                    let pi = self.pred_idx[pred.as_str()];
                    let vals = args
                        .iter()
                        .map(|a| eval_expr(a, stack))
                        .collect::<Result<Vec<_>, _>>()?;
                    // An argument outside the universe (e.g. arithmetic past
                    // the integer range) makes the atom unsatisfiable here.
                    let Some(t) = self.encode_tuple(&vals) else {
                        return Ok(false);
                    };
                    preds.push((pi, t));
                }
            }
        }
        let remaining: Vec<usize> = (0..n).filter(|&i| !consumed[i]).collect();
        if preds.is_empty() {
            return Ok(remaining.is_empty());
        }
        if !remaining.is_empty() && preds.len() == 1 {
            // single split, skip the odometer
            let cells = remaining.iter().map(|&i| heap.cells()[i].clone()).collect();
            let sub = Heap::from_cells(cells).expect("subheap locations are unique");
            let id = self.heap_ids[&sub];
            let (pi, t) = preds[0];
            return Ok(lookup(pi, t, id));
        }
        for assign in assignments(vec![preds.len(); remaining.len()]) {
            let ok = preds.iter().enumerate().all(|(j, &(pi, t))| {
                let cells: Vec<HeapCell> = remaining
                    .iter()
                    .zip(&assign)
                    .filter(|&(_, &owner)| owner == j)
                    .map(|(&ci, _)| heap.cells()[ci].clone())
                    .collect();
                let sub = Heap::from_cells(cells).expect("subheap locations are unique");
                let id = self.heap_ids[&sub];
                lookup(pi, t, id)
            });
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Does the model satisfy the formula?
    pub fn sat(&self, m: &Model, f: &SymbolicHeap) -> Result<bool, OracleError> {
        self.validate_formula(f)?;
        for (v, val) in &m.stack {
            if !self.value_idx.contains_key(val) {
                return Err(OracleError::StackValueOutOfBounds(v.name.clone()));
            }
        }
        let hi = *self
            .heap_ids
            .get(&m.heap)
            .ok_or(OracleError::HeapOutOfBounds)? as usize;
        let mut kinds = self.kinds.clone();
        kinds.extend_with(f);
        let lookup = |p: usize, t: usize, id: u32| self.tables[id as usize][p][t];
        self.sat_with(&m.stack, hi, f, &kinds, &lookup)
    }

    /// Every model within bounds over the given stack variables, duplicate
    /// free, heaps in increasing size.
    pub fn models(&self, vars: &[Var]) -> impl Iterator<Item = Model> + '_ {
        let vars: Vec<Var> = vars.to_vec();
        self.heaps.iter().flat_map(move |h| {
            let vars = vars.clone();
            assignments(vec![self.universe.len(); vars.len()]).map(move |idx| Model {
                stack: vars
                    .iter()
                    .cloned()
                    .zip(idx.iter().map(|&i| self.universe[i]))
                    .collect(),
                heap: h.clone(),
            })
        })
    }

    /// Search for a model of the antecedent that refutes the consequent.
    /// Returns a counter-model with a minimal heap when one exists.
    pub fn find_counter_model(&self, e: &Entailment) -> Result<Option<Model>, OracleError> {
        #[cfg(feature = "parallel")]
        {
            self.find_counter_model_par(e)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.find_counter_model_seq(e)
        }
    }

    fn counter_search_setup(&self, e: &Entailment) -> Result<(Vec<Var>, KindMap), OracleError> {
        self.validate_formula(&e.ante)?;
        self.validate_formula(&e.cons)?;
        let mut kinds = self.kinds.clone();
        kinds.extend_with(&e.ante);
        kinds.extend_with(&e.cons);
        let vars: Vec<Var> = entailment_free_vars(e).into_iter().collect();
        Ok((vars, kinds))
    }

    /// First counter-stack for heap `hi`, in stack enumeration order.
    fn counter_in_heap(
        &self,
        hi: usize,
        e: &Entailment,
        vars: &[Var],
        kinds: &KindMap,
    ) -> Result<Option<Model>, OracleError> {
        let options: Vec<&[Value]> = vars
            .iter()
            .map(|v| {
                if kinds.is_int(v) {
                    self.int_values.as_slice()
                } else {
                    self.universe.as_slice()
                }
            })
            .collect();
        let lookup = |p: usize, t: usize, id: u32| self.tables[id as usize][p][t];
        for idx in assignments(options.iter().map(|o| o.len()).collect()) {
            let stack: Stack = vars
                .iter()
                .cloned()
                .zip(idx.iter().enumerate().map(|(d, &i)| options[d][i]))
                .collect();
            if self.sat_with(&stack, hi, &e.ante, kinds, &lookup)?
                && !self.sat_with(&stack, hi, &e.cons, kinds, &lookup)?
            {
                return Ok(Some(Model {
                    stack,
                    heap: self.heaps[hi].clone(),
                }));
            }
        }
        Ok(None)
    }

    pub fn find_counter_model_seq(&self, e: &Entailment) -> Result<Option<Model>, OracleError> {
        let (vars, kinds) = self.counter_search_setup(e)?;
        for hi in 0..self.heaps.len() {
            if let Some(m) = self.counter_in_heap(hi, e, &vars, &kinds)? {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    /// Parallel search. Strata are scanned in size order and the hit with the
    /// lowest heap index wins, so the result matches the sequential search.
    #[cfg(feature = "parallel")]
    pub fn find_counter_model_par(&self, e: &Entailment) -> Result<Option<Model>, OracleError> {
        let (vars, kinds) = self.counter_search_setup(e)?;
        for &(start, end) in &self.strata {
            let hit = (start..end)
                .into_par_iter()
                .map(|hi| self.counter_in_heap(hi, e, &vars, &kinds).transpose())
                .find_first(|o: &Option<Result<Model, OracleError>>| o.is_some())
                .flatten();
            if let Some(r) = hit {
                return r.map(Some);
            }
        }
        Ok(None)
    }
}

fn enumerate_heaps(sorts: &[Sort], bounds: &Bounds) -> (Vec<Heap>, Vec<(usize, usize)>) {
    // every (sort, field values) a cell can carry; field values respect the
    // declared field kind
    let ints = bounds.ints();
    let mut addrs = vec![Value::Nil];
    addrs.extend((1..=bounds.loc_count).map(Value::Loc));
    let mut cell_options: Vec<(usize, Vec<Value>)> = Vec::new();
    for (si, sort) in sorts.iter().enumerate() {
        let field_values: Vec<&[Value]> = sort
            .fields
            .iter()
            .map(|f| match f.kind {
                crate::ast::FieldKind::Addr => addrs.as_slice(),
                crate::ast::FieldKind::Int => ints.as_slice(),
            })
            .collect();
        for idx in assignments(field_values.iter().map(|v| v.len()).collect()) {
            let fields = idx
                .iter()
                .enumerate()
                .map(|(d, &i)| field_values[d][i])
                .collect();
            cell_options.push((si, fields));
        }
    }

    let locs: Vec<u32> = (1..=bounds.loc_count).collect();
    let mut heaps = Vec::new();
    let mut strata = Vec::new();
    let max_k = bounds.max_heap_size.min(locs.len());
    for k in 0..=max_k {
        let start = heaps.len();
        for combo in combinations(&locs, k) {
            for idx in assignments(vec![cell_options.len(); k]) {
                let cells: Vec<HeapCell> = combo
                    .iter()
                    .zip(&idx)
                    .map(|(&loc, &oi)| {
                        let (sort, fields) = &cell_options[oi];
                        HeapCell {
                            loc,
                            sort: *sort,
                            fields: fields.clone(),
                        }
                    })
                    .collect();
                heaps.push(Heap { cells });
            }
        }
        if heaps.len() > start {
            strata.push((start, heaps.len()));
        }
    }
    (heaps, strata)
}

/// Names for rendering: the bare variable name when unambiguous, `name#id`
/// otherwise.
fn display_names(stack: &Stack) -> BTreeMap<Var, String> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for v in stack.keys() {
        *by_name.entry(v.name.as_str()).or_insert(0) += 1;
    }
    stack
        .keys()
        .map(|v| {
            let label = if by_name[v.name.as_str()] > 1 {
                format!("{}#{}", v.name, v.id)
            } else {
                v.name.clone()
            };
            (v.clone(), label)
        })
        .collect()
}

/// One-line human rendering, e.g.
/// `stack: x=Loc1, y=nil; heap: Loc1 -> node(nil)`.
pub fn render_model(m: &Model, sorts: &[Sort]) -> String {
    let names = display_names(&m.stack);
    let stack_part = m
        .stack
        .iter()
        .map(|(v, val)| format!("{}={}", names[v], val))
        .collect::<Vec<_>>()
        .join(", ");
    let heap_part = if m.heap.size() == 0 {
        "emp".to_string()
    } else {
        m.heap
            .cells()
            .iter()
            .map(|c| {
                let fields = c
                    .fields
                    .iter()
                    .map(Value::to_string)
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("Loc{} -> {}({})", c.loc, sorts[c.sort].name, fields)
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!("stack: {}; heap: {}", stack_part, heap_part)
}

/// JSON rendering with a stable key order (stack by variable, heap by
/// location).
pub fn model_json(m: &Model, sorts: &[Sort]) -> serde_json::Value {
    let names = display_names(&m.stack);
    let mut stack = serde_json::Map::new();
    for (v, val) in &m.stack {
        stack.insert(names[v].clone(), serde_json::Value::String(val.to_string()));
    }
    let mut heap = serde_json::Map::new();
    for c in m.heap.cells() {
        let fields: Vec<serde_json::Value> = c
            .fields
            .iter()
            .map(|f| serde_json::Value::String(f.to_string()))
            .collect();
        heap.insert(
            format!("Loc{}", c.loc),
            serde_json::json!({ "sort": sorts[c.sort].name, "fields": fields }),
        );
    }
    serde_json::json!({ "stack": stack, "heap": heap })
}

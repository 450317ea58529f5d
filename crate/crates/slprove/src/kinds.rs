//! Value-kind inference: which variables must hold integers.
//!
//! Stacks are untyped, but arithmetic is only defined on integers. A variable
//! that occurs inside an integer expression (directly, or through a predicate
//! parameter that does) is flagged as integer-kinded; bounded enumeration then
//! draws its values from the integer range only, which keeps evaluation total
//! and matches what the pure solver assumes.

use std::collections::{HashMap, HashSet};

use crate::ast::{Expr, IntExpr, PredEnv, Pure, SpatialAtom, SymbolicHeap, Var};

#[derive(Debug, Clone, Default)]
pub struct KindMap {
    int_vars: HashSet<u32>,
    int_params: HashMap<String, Vec<bool>>,
}

impl KindMap {
    /// Fixpoint over the predicate definitions: a parameter is
    /// integer-kinded when some case uses it as an integer.
    pub fn for_env(env: &PredEnv) -> KindMap {
        let mut map = KindMap::default();
        for def in env.defs() {
            map.int_params
                .insert(def.name.clone(), vec![false; def.params.len()]);
        }
        loop {
            let before = map.int_vars.len();
            for def in env.defs() {
                for case in &def.cases {
                    map.collect_heap(&case.body);
                }
                let flags: Vec<bool> = def
                    .params
                    .iter()
                    .map(|p| map.int_vars.contains(&p.id))
                    .collect();
                map.int_params.insert(def.name.clone(), flags);
            }
            if map.int_vars.len() == before {
                break;
            }
        }
        map
    }

    pub fn is_int(&self, v: &Var) -> bool {
        self.int_vars.contains(&v.id)
    }

    /// Flag the integer-kinded variables of a standalone formula.
    pub fn extend_with(&mut self, f: &SymbolicHeap) {
        // One extra sweep so vars flagged through a pred arg propagate into
        // sibling occurrences seen earlier in the same formula.
        self.collect_heap(f);
        self.collect_heap(f);
    }

    fn collect_heap(&mut self, f: &SymbolicHeap) {
        for atom in &f.spatial {
            match atom {
                SpatialAtom::Emp => {}
                SpatialAtom::PointsTo { args, .. } => {
                    for a in args {
                        self.collect_expr(a, false);
                    }
                }
                SpatialAtom::PredApp { pred, args } => {
                    let flags = self.int_params.get(pred).cloned().unwrap_or_default();
                    for (i, a) in args.iter().enumerate() {
                        let forced = flags.get(i).copied().unwrap_or(false);
                        self.collect_expr(a, forced);
                    }
                }
            }
        }
        self.collect_pure(&f.pure);
    }

    fn collect_expr(&mut self, e: &Expr, forced_int: bool) {
        match e {
            Expr::Addr(crate::ast::AddrExpr::Var(v)) => {
                if forced_int {
                    self.int_vars.insert(v.id);
                }
            }
            Expr::Addr(crate::ast::AddrExpr::Nil) => {}
            Expr::Int(i) => self.collect_int(i),
        }
    }

    fn collect_int(&mut self, e: &IntExpr) {
        match e {
            IntExpr::Const(_) => {}
            IntExpr::Var(v) => {
                self.int_vars.insert(v.id);
            }
            IntExpr::Neg(a) => self.collect_int(a),
            IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
                self.collect_int(a);
                self.collect_int(b);
            }
        }
    }

    fn collect_pure(&mut self, p: &Pure) {
        match p {
            Pure::True | Pure::False | Pure::AddrEq(..) | Pure::AddrNe(..) => {}
            Pure::IntCmp(_, a, b) => {
                self.collect_int(a);
                self.collect_int(b);
            }
            Pure::Not(a) => self.collect_pure(a),
            Pure::And(a, b) | Pure::Or(a, b) | Pure::Imp(a, b) => {
                self.collect_pure(a);
                self.collect_pure(b);
            }
            Pure::Forall(_, a) | Pure::Exists(_, a) => self.collect_pure(a),
        }
    }
}

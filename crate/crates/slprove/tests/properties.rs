//! Randomized structural properties: the printer/parser round-trip, alpha
//! invariance of the canonical entailment key, and monotonicity of the
//! bounded counter-model search in its bounds.

use proptest::prelude::*;

use slprove::ast::{
    AddrExpr, CmpOp, Entailment, Expr, IntExpr, Pure, SpatialAtom, SymbolicHeap, Var, VarGen,
};
use slprove::canon::path_key;
use slprove::parser::parse_program;
use slprove::printer::{print_entailment, print_program};
use slprove::semantics::{Bounds, Oracle};

/// Abstract atom over variable indices, realized against a name table so the
/// same recipe can be instantiated with different variable names.
#[derive(Debug, Clone)]
enum AtomR {
    Pts(usize, Option<usize>), // None = nil target
    Ls(usize, usize),
}

#[derive(Debug, Clone)]
enum LitR {
    Eq(usize, usize),
    Ne(usize, usize),
    Cmp(usize, i64), // int var <= constant
}

#[derive(Debug, Clone)]
struct HeapR {
    atoms: Vec<AtomR>,
    lits: Vec<LitR>,
}

#[derive(Debug, Clone)]
struct EntR {
    ante: HeapR,
    cons: HeapR,
}

const ADDR_SLOTS: usize = 3;

fn atom_r() -> impl Strategy<Value = AtomR> {
    prop_oneof![
        (0..ADDR_SLOTS, proptest::option::of(0..ADDR_SLOTS)).prop_map(|(a, b)| AtomR::Pts(a, b)),
        (0..ADDR_SLOTS, 0..ADDR_SLOTS).prop_map(|(a, b)| AtomR::Ls(a, b)),
    ]
}

fn lit_r() -> impl Strategy<Value = LitR> {
    prop_oneof![
        (0..ADDR_SLOTS, 0..ADDR_SLOTS).prop_map(|(a, b)| LitR::Eq(a, b)),
        (0..ADDR_SLOTS, 0..ADDR_SLOTS).prop_map(|(a, b)| LitR::Ne(a, b)),
        (0..2usize, -2..=2i64).prop_map(|(v, c)| LitR::Cmp(v, c)),
    ]
}

fn heap_r() -> impl Strategy<Value = HeapR> {
    (
        proptest::collection::vec(atom_r(), 0..3),
        proptest::collection::vec(lit_r(), 0..2),
    )
        .prop_map(|(atoms, lits)| HeapR { atoms, lits })
}

fn ent_r() -> impl Strategy<Value = EntR> {
    (heap_r(), heap_r()).prop_map(|(ante, cons)| EntR { ante, cons })
}

struct Table {
    addr: Vec<Var>,
    int: Vec<Var>,
}

fn table(names: [&str; ADDR_SLOTS], ints: [&str; 2]) -> Table {
    let mut vars = VarGen::new();
    Table {
        addr: names.iter().map(|n| vars.fresh(n)).collect(),
        int: ints.iter().map(|n| vars.fresh(n)).collect(),
    }
}

fn realize_heap(r: &HeapR, t: &Table) -> SymbolicHeap {
    let spatial = r
        .atoms
        .iter()
        .map(|a| match a {
            AtomR::Pts(root, tgt) => SpatialAtom::PointsTo {
                root: t.addr[*root].clone(),
                sort: "node".into(),
                args: vec![Expr::Addr(match tgt {
                    Some(i) => AddrExpr::Var(t.addr[*i].clone()),
                    None => AddrExpr::Nil,
                })],
            },
            AtomR::Ls(a, b) => SpatialAtom::PredApp {
                pred: "ls".into(),
                args: vec![
                    Expr::Addr(AddrExpr::Var(t.addr[*a].clone())),
                    Expr::Addr(AddrExpr::Var(t.addr[*b].clone())),
                ],
            },
        })
        .collect();
    let pure = Pure::conj_of(
        r.lits
            .iter()
            .map(|l| match l {
                LitR::Eq(a, b) => Pure::AddrEq(
                    AddrExpr::Var(t.addr[*a].clone()),
                    AddrExpr::Var(t.addr[*b].clone()),
                ),
                LitR::Ne(a, b) => Pure::AddrNe(
                    AddrExpr::Var(t.addr[*a].clone()),
                    AddrExpr::Var(t.addr[*b].clone()),
                ),
                LitR::Cmp(v, c) => Pure::IntCmp(
                    CmpOp::Le,
                    IntExpr::Var(t.int[*v].clone()),
                    IntExpr::Const(*c),
                ),
            })
            .collect(),
    );
    SymbolicHeap::new(Vec::new(), spatial, pure)
}

fn realize(r: &EntR, t: &Table) -> Entailment {
    Entailment {
        ante: realize_heap(&r.ante, t),
        cons: realize_heap(&r.cons, t),
    }
}

fn alpha_key(e: &Entailment) -> String {
    path_key(e, std::iter::empty::<(&Entailment, bool)>())
}

const HEADER: &str =
    "sort node { addr next };\npred ls(x, y) := emp & x = y \\/ exists u. x->node{u} * ls(u, y);\n";

proptest! {
    /// Printing a parsed program and re-parsing reaches a fixpoint: the
    /// second print equals the first.
    #[test]
    fn print_parse_print_is_a_fixpoint(r in ent_r()) {
        let t = table(["x", "y", "z"], ["m", "n"]);
        let text = format!("{}checkentail {};\n", HEADER, print_entailment(&realize(&r, &t)));
        let p1 = parse_program(&text).expect("generated program parses");
        let s1 = print_program(&p1);
        let p2 = parse_program(&s1).expect("printed program parses");
        let s2 = print_program(&p2);
        prop_assert_eq!(s1, s2);
        prop_assert_eq!(p1.queries.len(), p2.queries.len());
    }

    /// The canonical key is invariant under renaming all variables.
    #[test]
    fn canonical_key_ignores_variable_names(r in ent_r()) {
        let t1 = table(["x", "y", "z"], ["m", "n"]);
        let t2 = table(["p", "q", "r"], ["i", "j"]);
        prop_assert_eq!(alpha_key(&realize(&r, &t1)), alpha_key(&realize(&r, &t2)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A counter-model found within small bounds persists in larger bounds:
    /// growing the search space never loses refutations.
    #[test]
    fn counter_models_persist_in_larger_bounds(r in ent_r()) {
        let prog = parse_program(&format!("{}checkentail emp |- emp;\n", HEADER)).unwrap();
        let t = table(["x", "y", "z"], ["m", "n"]);
        let e = realize(&r, &t);
        let small = Oracle::new(&prog.preds, &prog.sorts, Bounds::new(2, 2, Some((-1, 1))))
            .unwrap()
            .find_counter_model(&e)
            .unwrap();
        if small.is_some() {
            let large = Oracle::new(&prog.preds, &prog.sorts, Bounds::new(3, 3, Some((-2, 2))))
                .unwrap()
                .find_counter_model(&e)
                .unwrap();
            prop_assert!(large.is_some());
        }
    }
}

//! Canonical keys for goal memoization and the hypothesis vault.
//!
//! Two symbolic heaps get the same key when they are alpha-equivalent up to
//! reordering of spatial atoms (`*` is AC) and of top-level pure conjuncts.

use std::collections::HashMap;

use crate::ast::{
    AddrExpr, CmpOp, Entailment, Expr, IntExpr, Pure, SpatialAtom, SymbolicHeap, Var,
};

/// An opaque, order- and alpha-insensitive key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonKey(String);

impl CanonKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

struct Namer {
    /// prefix binder ids
    bound: Vec<u32>,
    /// canonical names assigned to bound ids (second pass only)
    names: HashMap<u32, String>,
    next: usize,
    erase: bool,
    /// rename every variable, free or bound (path keys)
    all: bool,
}

impl Namer {
    fn erased(bound: &[Var]) -> Namer {
        Namer {
            bound: bound.iter().map(|v| v.id).collect(),
            names: HashMap::new(),
            next: 0,
            erase: true,
            all: false,
        }
    }

    fn naming(bound: &[Var]) -> Namer {
        Namer {
            bound: bound.iter().map(|v| v.id).collect(),
            names: HashMap::new(),
            next: 0,
            erase: false,
            all: false,
        }
    }

    fn erase_all() -> Namer {
        Namer {
            bound: Vec::new(),
            names: HashMap::new(),
            next: 0,
            erase: true,
            all: true,
        }
    }

    fn shared() -> Namer {
        Namer {
            bound: Vec::new(),
            names: HashMap::new(),
            next: 0,
            erase: false,
            all: true,
        }
    }

    fn var(&mut self, v: &Var) -> String {
        if !self.all && !self.bound.contains(&v.id) {
            return format!("{}#{}", v.name, v.id);
        }
        if self.erase {
            return "?".to_string();
        }
        if let Some(n) = self.names.get(&v.id) {
            return n.clone();
        }
        let n = format!("?{}", self.next);
        self.next += 1;
        self.names.insert(v.id, n.clone());
        n
    }

    fn enter(&mut self, v: &Var) {
        self.bound.push(v.id);
    }

    fn exit(&mut self) {
        self.bound.pop();
    }
}

fn render_int(e: &IntExpr, n: &mut Namer, out: &mut String) {
    match e {
        IntExpr::Const(c) => out.push_str(&c.to_string()),
        IntExpr::Var(v) => out.push_str(&n.var(v)),
        IntExpr::Neg(a) => {
            out.push_str("-(");
            render_int(a, n, out);
            out.push(')');
        }
        IntExpr::Add(a, b) => {
            out.push('(');
            render_int(a, n, out);
            out.push('+');
            render_int(b, n, out);
            out.push(')');
        }
        IntExpr::Sub(a, b) => {
            out.push('(');
            render_int(a, n, out);
            out.push('-');
            render_int(b, n, out);
            out.push(')');
        }
    }
}

fn render_addr(e: &AddrExpr, n: &mut Namer, out: &mut String) {
    match e {
        AddrExpr::Nil => out.push_str("nil"),
        AddrExpr::Var(v) => out.push_str(&n.var(v)),
    }
}

fn render_expr(e: &Expr, n: &mut Namer, out: &mut String) {
    match e {
        Expr::Addr(a) => render_addr(a, n, out),
        Expr::Int(i) => render_int(i, n, out),
    }
}

fn cmp_sym(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "=",
        CmpOp::Ne => "!=",
        CmpOp::Lt => "<",
        CmpOp::Le => "<=",
        CmpOp::Gt => ">",
        CmpOp::Ge => ">=",
    }
}

fn render_pure(p: &Pure, n: &mut Namer, out: &mut String) {
    match p {
        Pure::True => out.push_str("true"),
        Pure::False => out.push_str("false"),
        Pure::AddrEq(a, b) => {
            render_addr(a, n, out);
            out.push('=');
            render_addr(b, n, out);
        }
        Pure::AddrNe(a, b) => {
            render_addr(a, n, out);
            out.push_str("!=");
            render_addr(b, n, out);
        }
        Pure::IntCmp(op, a, b) => {
            render_int(a, n, out);
            out.push_str(cmp_sym(*op));
            render_int(b, n, out);
        }
        Pure::Not(a) => {
            out.push_str("!(");
            render_pure(a, n, out);
            out.push(')');
        }
        Pure::And(a, b) | Pure::Or(a, b) | Pure::Imp(a, b) => {
            let sym = match p {
                Pure::And(..) => "&",
                Pure::Or(..) => "|",
                _ => "=>",
            };
            out.push('(');
            render_pure(a, n, out);
            out.push_str(sym);
            render_pure(b, n, out);
            out.push(')');
        }
        Pure::Forall(v, a) | Pure::Exists(v, a) => {
            out.push_str(if matches!(p, Pure::Forall(..)) {
                "A"
            } else {
                "E"
            });
            n.enter(v);
            let name = n.var(v);
            out.push_str(&name);
            out.push('.');
            render_pure(a, n, out);
            n.exit();
        }
    }
}

fn render_atom(a: &SpatialAtom, n: &mut Namer) -> String {
    let mut out = String::new();
    match a {
        SpatialAtom::Emp => out.push_str("emp"),
        SpatialAtom::PointsTo { root, sort, args } => {
            out.push_str(&n.var(root));
            out.push_str("->");
            out.push_str(sort);
            out.push('{');
            for (i, e) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render_expr(e, n, &mut out);
            }
            out.push('}');
        }
        SpatialAtom::PredApp { pred, args } => {
            out.push_str(pred);
            out.push('(');
            for (i, e) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render_expr(e, n, &mut out);
            }
            out.push(')');
        }
    }
    out
}

fn canon_heap_with(f: &SymbolicHeap, mut erased: Namer, namer: &mut Namer) -> String {
    let atoms: Vec<&SpatialAtom> = f.spatial.iter().filter(|a| !a.is_emp()).collect();
    let conjs = f.pure.conjuncts();

    // First pass: order atoms and conjuncts by their binder-erased renders.
    let mut atom_order: Vec<usize> = (0..atoms.len()).collect();
    let atom_erased: Vec<String> = atoms.iter().map(|a| render_atom(a, &mut erased)).collect();
    atom_order.sort_by(|&i, &j| atom_erased[i].cmp(&atom_erased[j]));
    let mut conj_order: Vec<usize> = (0..conjs.len()).collect();
    let conj_erased: Vec<String> = conjs
        .iter()
        .map(|c| {
            let mut s = String::new();
            render_pure(c, &mut erased, &mut s);
            s
        })
        .collect();
    conj_order.sort_by(|&i, &j| conj_erased[i].cmp(&conj_erased[j]));

    // Second pass: assign canonical names in first-occurrence order.
    for v in &f.exists {
        namer.enter(v);
    }
    let mut atom_final: Vec<String> = atom_order
        .iter()
        .map(|&i| render_atom(atoms[i], namer))
        .collect();
    let mut conj_final: Vec<String> = conj_order
        .iter()
        .map(|&i| {
            let mut s = String::new();
            render_pure(conjs[i], namer, &mut s);
            s
        })
        .collect();
    for _ in &f.exists {
        namer.exit();
    }
    atom_final.sort();
    conj_final.sort();

    format!(
        "ex{}[{}][{}]",
        f.exists.len(),
        atom_final.join("*"),
        conj_final.join("&")
    )
}

fn canon_heap(f: &SymbolicHeap) -> String {
    canon_heap_with(f, Namer::erased(&f.exists), &mut Namer::naming(&f.exists))
}

pub fn canonical_key(f: &SymbolicHeap) -> CanonKey {
    CanonKey(canon_heap(f))
}

pub fn entailment_key(e: &Entailment) -> CanonKey {
    CanonKey(format!("{}|-{}", canon_heap(&e.ante), canon_heap(&e.cons)))
}

/// A cycle-detection key for a proof-search node, alpha-invariant over *all*
/// variables (free ones included). The goal and every vault entry share one
/// renaming, so a goal that recurs with nothing changed but fresh variable
/// identities still collides with its ancestor. `vault` must be supplied in a
/// deterministic order; `bool` is the entry's valid-status.
pub fn path_key<'a, I>(goal: &Entailment, vault: I) -> String
where
    I: IntoIterator<Item = (&'a Entailment, bool)>,
{
    let mut shared = Namer::shared();
    let render_ent = |e: &Entailment, shared: &mut Namer| {
        format!(
            "{}|-{}",
            canon_heap_with(&e.ante, Namer::erase_all(), shared),
            canon_heap_with(&e.cons, Namer::erase_all(), shared)
        )
    };
    let mut out = render_ent(goal, &mut shared);
    for (e, valid) in vault {
        out.push_str(if valid { ";T:" } else { ";U:" });
        out.push_str(&render_ent(e, &mut shared));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::VarGen;

    fn pts(root: Var, arg: Var) -> SpatialAtom {
        SpatialAtom::PointsTo {
            root,
            sort: "node".into(),
            args: vec![Expr::var(arg)],
        }
    }

    fn ls(a: Var, b: Var) -> SpatialAtom {
        SpatialAtom::PredApp {
            pred: "ls".into(),
            args: vec![Expr::var(a), Expr::var(b)],
        }
    }

    #[test]
    fn ac_invariance() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let u = vars.fresh("u");
        let pi = Pure::AddrNe(AddrExpr::Var(x.clone()), AddrExpr::Nil);
        let f1 = SymbolicHeap::new(
            vec![],
            vec![pts(x.clone(), u.clone()), ls(u.clone(), x.clone())],
            pi.clone(),
        );
        let f2 = SymbolicHeap::new(
            vec![],
            vec![ls(u.clone(), x.clone()), pts(x.clone(), u.clone())],
            pi,
        );
        assert_eq!(canonical_key(&f1), canonical_key(&f2));
    }

    #[test]
    fn alpha_invariance() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let z = vars.fresh("z");
        let f1 = SymbolicHeap::new(vec![y.clone()], vec![ls(x.clone(), y.clone())], Pure::True);
        let f2 = SymbolicHeap::new(vec![z.clone()], vec![ls(x.clone(), z.clone())], Pure::True);
        assert_eq!(canonical_key(&f1), canonical_key(&f2));
    }

    #[test]
    fn argument_order_matters() {
        let mut vars = VarGen::new();
        let x = vars.fresh("x");
        let y = vars.fresh("y");
        let f1 = SymbolicHeap::new(vec![], vec![ls(x.clone(), y.clone())], Pure::True);
        let f2 = SymbolicHeap::new(vec![], vec![ls(y, x)], Pure::True);
        assert_ne!(canonical_key(&f1), canonical_key(&f2));
    }
}

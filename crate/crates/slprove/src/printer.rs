//! Pretty printer for the surface syntax. Printing a parsed program and
//! parsing it back reaches a fixpoint: `print . parse` is idempotent.

use crate::ast::{
    AddrExpr, CmpOp, Entailment, Expr, FieldKind, IntExpr, PredDef, Pure, Sort, SpatialAtom,
    SymbolicHeap,
};
use crate::parser::Program;

fn addr_str(a: &AddrExpr) -> String {
    match a {
        AddrExpr::Nil => "nil".to_string(),
        AddrExpr::Var(v) => v.name.clone(),
    }
}

/// Integer expression; parent contexts pass whether the operand sits to the
/// right of a `+`/`-` (where `a - (b + c)` needs parentheses).
pub(crate) fn int_str(e: &IntExpr, as_operand: bool) -> String {
    match e {
        IntExpr::Const(c) => c.to_string(),
        IntExpr::Var(v) => v.name.clone(),
        IntExpr::Neg(a) => format!("-{}", int_str(a, true)),
        IntExpr::Add(a, b) | IntExpr::Sub(a, b) => {
            let op = if matches!(e, IntExpr::Add(..)) {
                "+"
            } else {
                "-"
            };
            let s = format!("{} {} {}", int_str(a, false), op, int_str(b, true));
            if as_operand {
                format!("({})", s)
            } else {
                s
            }
        }
    }
}

fn expr_str(e: &Expr) -> String {
    match e {
        Expr::Addr(a) => addr_str(a),
        Expr::Int(i) => int_str(i, false),
    }
}

fn cmp_str(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "=",
        CmpOp::Ne => "!=",
        CmpOp::Lt => "<",
        CmpOp::Le => "<=",
        CmpOp::Gt => ">",
        CmpOp::Ge => ">=",
    }
}

// precedence levels: 0 = =>, 1 = |, 2 = &, 3 = unary/atoms
fn pure_prec(p: &Pure, prec: u8) -> String {
    let (s, level) = match p {
        Pure::True => ("true".to_string(), 3),
        Pure::False => ("false".to_string(), 3),
        Pure::AddrEq(a, b) => (format!("{} = {}", addr_str(a), addr_str(b)), 3),
        Pure::AddrNe(a, b) => (format!("{} != {}", addr_str(a), addr_str(b)), 3),
        Pure::IntCmp(op, a, b) => (
            format!(
                "{} {} {}",
                int_str(a, false),
                cmp_str(*op),
                int_str(b, false)
            ),
            3,
        ),
        Pure::Not(a) => (format!("!{}", pure_prec(a, 3)), 3),
        Pure::And(a, b) => (format!("{} & {}", pure_prec(a, 2), pure_prec(b, 2)), 2),
        Pure::Or(a, b) => (format!("{} | {}", pure_prec(a, 1), pure_prec(b, 1)), 1),
        Pure::Imp(a, b) => (format!("{} => {}", pure_prec(a, 1), pure_prec(b, 0)), 0),
        Pure::Forall(..) | Pure::Exists(..) => {
            // fold runs of like binders into one prefix
            let forall = matches!(p, Pure::Forall(..));
            let mut names = Vec::new();
            let mut cur = p;
            // not a while-let: the pattern also keys on the binder kind
            #[allow(clippy::while_let_loop)]
            loop {
                match (forall, cur) {
                    (true, Pure::Forall(v, body)) | (false, Pure::Exists(v, body)) => {
                        names.push(v.name.clone());
                        cur = body;
                    }
                    _ => break,
                }
            }
            let kw = if forall { "forall" } else { "exists" };
            // a binder scopes as far right as possible, so it always needs
            // parentheses in a tighter context
            (
                format!("{} {}. {}", kw, names.join(" "), pure_prec(cur, 0)),
                0,
            )
        }
    };
    if level < prec {
        format!("({})", s)
    } else {
        s
    }
}

pub fn print_pure(p: &Pure) -> String {
    pure_prec(p, 0)
}

fn atom_str(a: &SpatialAtom) -> String {
    match a {
        SpatialAtom::Emp => "emp".to_string(),
        SpatialAtom::PointsTo { root, sort, args } => format!(
            "{}->{}{{{}}}",
            root.name,
            sort,
            args.iter().map(expr_str).collect::<Vec<_>>().join(", ")
        ),
        SpatialAtom::PredApp { pred, args } => format!(
            "{}({})",
            pred,
            args.iter().map(expr_str).collect::<Vec<_>>().join(", ")
        ),
    }
}

pub fn print_heap(f: &SymbolicHeap) -> String {
    let mut out = String::new();
    if !f.exists.is_empty() {
        out.push_str("exists ");
        out.push_str(
            &f.exists
                .iter()
                .map(|v| v.name.clone())
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push_str(". ");
    }
    if f.is_spatially_emp() {
        if f.pure == Pure::True {
            out.push_str("emp");
        } else {
            // `& pure` after an explicit emp keeps the spatial reading
            if !f.exists.is_empty() {
                out.push_str("emp & ");
            }
            out.push_str(&print_pure(&f.pure));
        }
    } else {
        let atoms: Vec<String> = f.atoms().map(atom_str).collect();
        out.push_str(&atoms.join(" * "));
        if f.pure != Pure::True {
            out.push_str(" & ");
            out.push_str(&print_pure(&f.pure));
        }
    }
    out
}

pub fn print_entailment(e: &Entailment) -> String {
    format!("{} |- {}", print_heap(&e.ante), print_heap(&e.cons))
}

fn print_sort(s: &Sort) -> String {
    let fields: Vec<String> = s
        .fields
        .iter()
        .map(|f| {
            let kind = match f.kind {
                FieldKind::Addr => "addr",
                FieldKind::Int => "int",
            };
            format!("{} {}", kind, f.name)
        })
        .collect();
    format!("sort {} {{ {} }};", s.name, fields.join(", "))
}

fn print_pred(d: &PredDef) -> String {
    let params: Vec<String> = d.params.iter().map(|p| p.name.clone()).collect();
    let cases: Vec<String> = d.cases.iter().map(|c| print_heap(&c.body)).collect();
    format!(
        "pred {}({}) :=\n  {};",
        d.name,
        params.join(", "),
        cases.join("\n  \\/ ")
    )
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for s in &p.sorts {
        out.push_str(&print_sort(s));
        out.push('\n');
    }
    for d in p.preds.defs() {
        out.push_str(&print_pred(d));
        out.push('\n');
    }
    for q in &p.queries {
        out.push_str(&format!(
            "name {}: checkentail {};\n",
            q.name,
            print_entailment(&q.entailment)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    const PROG: &str = "\
sort node { addr next, int val };
pred lsn(x, y, n) := emp & x = y & n = 0 \\/ exists w m. x->node{w, m} * lsn(w, y, n - 1);
name A: checkentail lsn(x, y, n) & n >= 1 |- exists u. x->node{u, -3 + k} * lsn(u, y, n - 1);
checkentail exists a. a = nil & (p = q | !(forall b. b != a)) |- true => p = p;
";

    #[test]
    fn print_parse_is_a_fixpoint() {
        let once = print_program(&parse_program(PROG).unwrap());
        let twice = print_program(&parse_program(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn printed_text_is_readable() {
        let prog = parse_program(PROG).unwrap();
        let text = print_program(&prog);
        assert!(text.contains("pred lsn(x, y, n) :="));
        assert!(text.contains("exists w m. x->node{w, m} * lsn(w, y, n - 1)"));
        assert!(text.contains("name A: checkentail"));
    }
}

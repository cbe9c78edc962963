use crate::lang::{Annot, AnnotatedProgram, AssignOp, DeclItem, IdStack, Program, Prog, Stmt, StmtKind};

/// Annotate: every evaluating statement gains an empty identifier stack.
pub fn ann(p: &Program) -> AnnotatedProgram {
    p.map_annot(&mut |_| IdStack::new())
}

/// Program inversion. Statement order is reversed, constructive updates and
/// declarations swap with their opposites, stacks are carried over.
pub fn inv<A: Annot>(p: &Prog<A>) -> Prog<A> {
    match p {
        Prog::Empty => Prog::Empty,
        Prog::Stmt(s) => Prog::from_stmt(inv_stmt(s)),
        Prog::Seq(items) => Prog::Seq(items.iter().rev().map(inv).collect()),
        Prog::Par(l, r) => Prog::par(inv(l), inv(r)),
    }
}

pub fn inv_stmt<A: Annot>(s: &Stmt<A>) -> Stmt<A> {
    let kind = match &s.kind {
        StmtKind::Skip { .. } => s.kind.clone(),
        StmtKind::Assign { target, op, expr, ann } => StmtKind::Assign {
            target: target.clone(),
            op: match op {
                AssignOp::Set => AssignOp::Set,
                AssignOp::Add => AssignOp::Sub,
                AssignOp::Sub => AssignOp::Add,
            },
            expr: expr.clone(),
            ann: ann.clone(),
        },
        StmtKind::If { id, cond, mark, then_p, else_p, ann } => StmtKind::If {
            id: id.clone(),
            cond: cond.clone(),
            mark: *mark,
            then_p: inv(then_p),
            else_p: inv(else_p),
            ann: ann.clone(),
        },
        StmtKind::While { id, cond, mark, body, ann } => StmtKind::While {
            id: id.clone(),
            cond: cond.clone(),
            mark: *mark,
            body: inv(body),
            ann: ann.clone(),
        },
        StmtKind::Block { id, body } => StmtKind::Block { id: id.clone(), body: inv(body) },
        StmtKind::Decl { removal, item, ann } => StmtKind::Decl {
            removal: !removal,
            item: match item {
                DeclItem::Proc { id, name, body } => {
                    DeclItem::Proc { id: id.clone(), name: name.clone(), body: inv(body) }
                }
                other => other.clone(),
            },
            ann: ann.clone(),
        },
        StmtKind::Call { .. } => s.kind.clone(),
        StmtKind::Runc { id, name, body, stack } => StmtKind::Runc {
            id: id.clone(),
            name: name.clone(),
            body: inv(body),
            stack: stack.clone(),
        },
    };
    Stmt { site: s.site, kind }
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;
    use crate::lang::{erase_annotations, structural_eq};

    #[test]
    fn involution_and_erasure() {
        let p = parse_program(
            "begin var t = 0; arr[2] a; proc f is X += 1; t -= 2 end; \
             a[0] = 3 par { call f; if a[0] > 1 then t += 1 else a[1] -= 4 end }; \
             while X > 0 do X -= 1 end end",
        )
        .unwrap();
        let ap = ann(&p);
        assert!(structural_eq(&inv(&inv(&ap)), &ap));
        assert_eq!(erase_annotations(&ap), p);
    }

    #[test]
    fn swaps_and_reverses() {
        let p = ann(&parse_program("X += 1; Y = 2").unwrap());
        let i = inv(&p);
        let items = i.items();
        assert!(matches!(
            &items[0].as_stmt().unwrap().kind,
            StmtKind::Assign { op: AssignOp::Set, .. }
        ));
        assert!(matches!(
            &items[1].as_stmt().unwrap().kind,
            StmtKind::Assign { op: AssignOp::Sub, .. }
        ));
    }
}

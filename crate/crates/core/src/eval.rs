//! Expression evaluation against a state. Evaluation never changes state.

use crate::error::{ExecError, ExecResult};
use crate::lang::{Annot, ArithOp, BoolExpr, Expr, StmtPath};
use crate::scalar::Scalar;
use crate::state::{BindingKind, ProgState};

pub fn eval_arith<V: Scalar, A: Annot>(e: &Expr, pa: &StmtPath, st: &ProgState<V, A>) -> ExecResult<V> {
    match e {
        Expr::Lit(n) => V::from_literal(n).ok_or(ExecError::Overflow),
        Expr::Var(x) => {
            let b = st.gamma.eval_var(x, pa)?;
            match b.kind {
                BindingKind::Scalar => Ok(st.sigma.read(b.loc)),
                BindingKind::Array { .. } => Err(ExecError::NotScalar(x.clone())),
            }
        }
        Expr::Elem(a, i) => {
            let loc = element_loc(a, i, pa, st)?;
            Ok(st.sigma.read(loc))
        }
        Expr::Bin(l, op, r) => {
            let l = eval_arith(l, pa, st)?;
            let r = eval_arith(r, pa, st)?;
            match op {
                ArithOp::Add => l.checked_add(&r),
                ArithOp::Sub => l.checked_sub(&r),
            }
            .ok_or(ExecError::Overflow)
        }
    }
}

/// Memory location of `name[index]`, bounds checked.
pub fn element_loc<V: Scalar, A: Annot>(
    name: &str,
    index: &Expr,
    pa: &StmtPath,
    st: &ProgState<V, A>,
) -> ExecResult<usize> {
    let b = st.gamma.eval_var(name, pa)?;
    let (base, len) = st.array_base(name, &b)?;
    let n = eval_arith(index, pa, st)?;
    match n.to_loc() {
        Some(i) if i < len => Ok(base + i),
        _ => Err(ExecError::IndexOutOfRange { name: name.to_string(), index: n.to_string(), len }),
    }
}

pub fn eval_bool<V: Scalar, A: Annot>(b: &BoolExpr, pa: &StmtPath, st: &ProgState<V, A>) -> ExecResult<bool> {
    Ok(match b {
        BoolExpr::True => true,
        BoolExpr::False => false,
        BoolExpr::Not(b) => !eval_bool(b, pa, st)?,
        BoolExpr::Eq(l, r) => eval_arith(l, pa, st)? == eval_arith(r, pa, st)?,
        BoolExpr::Gt(l, r) => eval_arith(l, pa, st)? > eval_arith(r, pa, st)?,
        BoolExpr::Lt(l, r) => eval_arith(r, pa, st)? > eval_arith(l, pa, st)?,
        BoolExpr::And(l, r) => eval_bool(l, pa, st)? && eval_bool(r, pa, st)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{ConstructId, IdStack};
    use crate::state::Binding;
    use num_bigint::BigInt;
    use std::collections::BTreeMap;

    fn state() -> (ProgState<BigInt, IdStack>, StmtPath) {
        let init: BTreeMap<String, BigInt> =
            [("X".to_string(), BigInt::from(8)), ("Y".to_string(), BigInt::from(2))].into_iter().collect();
        let mut st = ProgState::with_globals(["X", "Y"], &init);
        let b1: ConstructId = "b1".parse().unwrap();
        let l = st.sigma.next_loc();
        let base = st.sigma.next_loc_block(5);
        st.sigma.write(l, BigInt::from(base));
        for (i, v) in [7, 3, 4, 1, 6].into_iter().enumerate() {
            st.sigma.write(base + i, BigInt::from(v));
        }
        st.gamma.bind_local("l", &b1, Binding { loc: l, kind: BindingKind::Array { len: 5 } });
        (st, StmtPath(vec![b1]))
    }

    fn e(src: &str) -> BoolExpr {
        match crate::frontend::parse(&format!("if {src} then skip end")).unwrap() {
            crate::frontend::RawProg::Stmt(s) => match s.kind {
                crate::frontend::RawKind::If { cond, .. } => cond,
                _ => unreachable!(),
            },
            _ => unreachable!(),
        }
    }

    #[test]
    fn arithmetic() {
        let (st, pa) = state();
        let x_minus_y = Expr::Bin(Box::new(Expr::Var("X".into())), ArithOp::Sub, Box::new(Expr::Var("Y".into())));
        assert_eq!(eval_arith(&x_minus_y, &pa, &st).unwrap(), BigInt::from(6));
        assert_eq!(eval_arith(&Expr::lit(7), &pa, &st).unwrap(), BigInt::from(7));
        let l1 = Expr::Elem("l".into(), Box::new(Expr::lit(1)));
        assert_eq!(eval_arith(&l1, &pa, &st).unwrap(), BigInt::from(3));
        let l5 = Expr::Elem("l".into(), Box::new(Expr::lit(5)));
        assert!(matches!(eval_arith(&l5, &pa, &st), Err(ExecError::IndexOutOfRange { .. })));
        assert!(matches!(eval_arith(&Expr::Var("Z".into()), &pa, &st), Err(ExecError::Unbound(_))));
    }

    #[test]
    fn booleans() {
        let (st, pa) = state();
        assert!(eval_bool(&BoolExpr::True, &pa, &st).unwrap());
        assert!(eval_bool(&e("(l[0] > l[1])"), &pa, &st).unwrap());
        assert!(!eval_bool(&e("not (2 == 2)"), &pa, &st).unwrap());
        assert!(eval_bool(&e("Y < X and X > 3"), &pa, &st).unwrap());
        assert!(!eval_bool(&e("X < Y"), &pa, &st).unwrap());
    }

    #[test]
    fn fixed_width_overflow() {
        let init: BTreeMap<String, i8> = [("X".to_string(), 120i8)].into_iter().collect();
        let st: ProgState<i8, ()> = ProgState::with_globals(["X"], &init);
        let sum = Expr::Bin(Box::new(Expr::Var("X".into())), ArithOp::Add, Box::new(Expr::lit(10)));
        assert_eq!(eval_arith(&sum, &StmtPath::default(), &st), Err(ExecError::Overflow));
    }
}

//! Plain small-step interpreter: no δ, no identifier stacks.
//!
//! Redex positions and the order of loop and call renamings match the
//! annotated machine, so a script recorded by one drives the other. Only a
//! counter of identifier steps is kept.

use crate::copies::{rename_fresh, RenameSupply};
use crate::error::{ExecError, ExecResult};
use crate::eval::{element_loc, eval_arith, eval_bool};
use crate::exec::Scheduler;
use crate::frontend::globals;
use crate::lang::{
    AssignOp, ConstructId, DeclItem, Mark, PathStep, Prog, Program, RedexPath, Site, Stmt, StmtKind, Target,
};
use crate::redex::{Redex, RuleFamily, StepKind};
use crate::scalar::Scalar;
use crate::state::{Binding, BindingKind, ProcEntry, ProgState, Value};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct Traditional<V> {
    pub prog: Program,
    pub state: ProgState<V, ()>,
    pub renames: RenameSupply,
    /// Identifier steps taken.
    pub ident_steps: u64,
}

fn skip() -> Program {
    Prog::from_stmt(Stmt::skip(Site::NONE, None))
}

fn idle(what: &str) -> ExecError {
    ExecError::NotEnabled(what.to_string())
}

impl<V: Scalar> Traditional<V> {
    pub fn new(p: &Program, init: &BTreeMap<String, V>) -> Self {
        let names = globals(p);
        Traditional {
            renames: RenameSupply::for_program(p),
            prog: p.clone(),
            state: ProgState::with_globals(names.iter().map(String::as_str), init),
            ident_steps: 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.prog.is_empty() || self.prog.is_skip()
    }

    pub fn globals(&self) -> BTreeMap<String, Value<V>> {
        self.state.global_values()
    }

    pub fn enabled(&self) -> Vec<Redex> {
        let mut out = Vec::new();
        collect(&self.prog, RedexPath::default(), &mut out);
        out
    }

    pub fn step(&mut self, path: &RedexPath) -> ExecResult<()> {
        let mut next = self.clone();
        let mut prog = std::mem::replace(&mut next.prog, Prog::Empty);
        next.at(&mut prog, &path.0)?;
        next.prog = prog;
        *self = next;
        Ok(())
    }

    /// Run to the end; returns the redex positions taken.
    pub fn run(&mut self, sched: &mut dyn Scheduler, budget: u64) -> ExecResult<Vec<RedexPath>> {
        let mut taken = Vec::new();
        loop {
            let en = self.enabled();
            if en.is_empty() {
                return Ok(taken);
            }
            if taken.len() as u64 >= budget {
                return Err(ExecError::StepBudget(budget));
            }
            let i = sched.choose(&en, taken.len() as u64)?;
            let r = en.get(i).ok_or_else(|| idle("choice out of range"))?;
            self.step(&r.path)?;
            taken.push(r.path.clone());
        }
    }

    fn at(&mut self, p: &mut Program, path: &[PathStep]) -> ExecResult<()> {
        let Some((first, rest)) = path.split_first() else {
            return match p {
                Prog::Seq(items) if items[0].is_skip() => {
                    let mut items = std::mem::take(items);
                    items.remove(0);
                    *p = Prog::seq(items);
                    Ok(())
                }
                Prog::Par(l, r) if l.is_skip() && r.is_skip() => {
                    *p = skip();
                    Ok(())
                }
                Prog::Stmt(s) => self.exec(s),
                _ => Err(idle("no rule applies")),
            };
        };
        match (first, p) {
            (PathStep::Item(0), Prog::Seq(items)) => self.at(&mut items[0], rest),
            (PathStep::Left, Prog::Par(l, _)) => self.at(l, rest),
            (PathStep::Right, Prog::Par(_, r)) => self.at(r, rest),
            (step, Prog::Stmt(s)) => match (&mut s.kind, step) {
                (StmtKind::If { mark: Mark::True, then_p, .. }, PathStep::Then) => self.at(then_p, rest),
                (StmtKind::If { mark: Mark::False, else_p, .. }, PathStep::Else) => self.at(else_p, rest),
                (StmtKind::Block { body, .. }, PathStep::Body)
                | (StmtKind::While { mark: Mark::True, body, .. }, PathStep::Body)
                | (StmtKind::Runc { body, .. }, PathStep::Body) => self.at(body, rest),
                _ => Err(idle("path does not match")),
            },
            _ => Err(idle("path does not match")),
        }
    }

    fn exec(&mut self, s: &mut Stmt<()>) -> ExecResult<()> {
        let st = &mut self.state;
        let done = match &mut s.kind {
            StmtKind::Assign { target, op, expr, ann } => {
                let loc = match target {
                    Target::Var(x) => {
                        let b = st.gamma.eval_var(x, &ann.path)?;
                        if b.kind != BindingKind::Scalar {
                            return Err(ExecError::NotScalar(x.clone()));
                        }
                        b.loc
                    }
                    Target::Elem(a, i) => element_loc(a, i, &ann.path, st)?,
                };
                let v = eval_arith(expr, &ann.path, st)?;
                let old = st.sigma.read(loc);
                let new = match op {
                    AssignOp::Set => v,
                    AssignOp::Add => old.checked_add(&v).ok_or(ExecError::Overflow)?,
                    AssignOp::Sub => old.checked_sub(&v).ok_or(ExecError::Overflow)?,
                };
                st.sigma.write(loc, new);
                true
            }
            StmtKind::If { cond, mark, then_p, else_p, ann, .. } => match mark {
                Mark::Pending => {
                    *mark = if eval_bool(cond, &ann.path, st)? { Mark::True } else { Mark::False };
                    false
                }
                Mark::True if then_p.is_skip() => true,
                Mark::False if else_p.is_skip() => true,
                _ => return Err(idle("branch not finished")),
            },
            StmtKind::While { id, cond, mark, body, ann } => match mark {
                Mark::Pending => {
                    if eval_bool(cond, &ann.path, st)? {
                        rename_fresh(body, &mut self.renames);
                        *mark = Mark::True;
                        let copy = StmtKind::While {
                            id: id.clone(),
                            cond: cond.clone(),
                            mark: Mark::Pending,
                            body: body.clone(),
                            ann: ann.clone(),
                        };
                        st.beta.0.insert(id.clone(), Stmt::new(s.site, copy));
                        self.ident_steps += 1;
                        return Ok(());
                    }
                    st.beta.0.remove(id);
                    true
                }
                _ if body.is_skip() => {
                    let copy = st.beta.0.get(id).cloned().ok_or_else(|| ExecError::Invalid(format!("loop {id} has no copy")))?;
                    *s = copy;
                    return Ok(());
                }
                _ => return Err(idle("loop body not finished")),
            },
            StmtKind::Block { body, .. } => {
                if !body.is_skip() {
                    return Err(idle("block body not finished"));
                }
                *s = Stmt::skip(s.site, None);
                return Ok(());
            }
            StmtKind::Decl { removal, item, ann } => {
                let bn = ann.path.head().cloned().ok_or_else(|| ExecError::Invalid("declaration outside a block".into()))?;
                let local = |st: &ProgState<V, ()>, name: &str| {
                    st.gamma.local(name, &bn).ok_or_else(|| ExecError::Unbound(name.to_string()))
                };
                match (*removal, &*item) {
                    (false, DeclItem::Var { name, init }) => {
                        let v = eval_arith(init, &ann.path, st)?;
                        let l = st.sigma.next_loc();
                        st.gamma.bind_local(name, &bn, Binding { loc: l, kind: BindingKind::Scalar });
                        st.sigma.write(l, v);
                    }
                    (false, DeclItem::Proc { id, name, body }) => st.mu.declare(&bn, id, name, body.clone()),
                    (false, DeclItem::Arr { name, len }) => {
                        let l = st.sigma.next_loc();
                        let base = st.sigma.next_loc_block(*len);
                        st.sigma.write(l, V::from_loc(base).ok_or(ExecError::Overflow)?);
                        st.gamma.bind_local(name, &bn, Binding { loc: l, kind: BindingKind::Array { len: *len } });
                    }
                    (true, DeclItem::Var { name, .. }) => {
                        let b = local(st, name)?;
                        st.sigma.free(b.loc);
                        st.gamma.unbind_local(name, &bn);
                    }
                    (true, DeclItem::Proc { id, name, .. }) => {
                        if !st.mu.undeclare(&bn, id, name) {
                            return Err(ExecError::UnboundProc(name.clone()));
                        }
                    }
                    (true, DeclItem::Arr { name, .. }) => {
                        let b = local(st, name)?;
                        let (base, len) = st.array_base(name, &b)?;
                        for l in base..base + len.max(1) {
                            st.sigma.free(l);
                        }
                        st.sigma.free(b.loc);
                        st.gamma.unbind_local(name, &bn);
                    }
                }
                true
            }
            StmtKind::Call { id, name, ann } => {
                let pn = st.mu.eval_proc(name, &ann.path)?;
                let mut body = st
                    .mu
                    .entries
                    .get(&pn)
                    .map(|e| e.body.clone())
                    .ok_or_else(|| ExecError::Invalid(format!("procedure {pn} is not declared")))?;
                rename_fresh(&mut body, &mut self.renames);
                st.mu.entries.insert(id.clone(), ProcEntry { name: name.clone(), body: body.clone() });
                let run = StmtKind::Runc { id: id.clone(), name: name.clone(), body, stack: () };
                *s = Stmt::new(s.site, run);
                self.ident_steps += 1;
                return Ok(());
            }
            StmtKind::Runc { id, body, .. } => {
                if !body.is_skip() {
                    return Err(idle("call body not finished"));
                }
                st.mu.entries.remove(&*id);
                true
            }
            StmtKind::Skip { .. } => return Err(idle("skip")),
        };
        self.ident_steps += 1;
        if done {
            *s = Stmt::skip(s.site, None);
        }
        Ok(())
    }
}

fn collect(p: &Program, path: RedexPath, out: &mut Vec<Redex>) {
    let skip_redex = |path: RedexPath, family, rule: &str, site| Redex { path, kind: StepKind::Skip, family, rule: rule.into(), site };
    match p {
        Prog::Empty => {}
        Prog::Seq(items) => {
            if items[0].is_skip() {
                out.push(skip_redex(path, RuleFamily::Sequence, "S2a", None));
            } else {
                collect(&items[0], path.child(PathStep::Item(0)), out);
            }
        }
        Prog::Par(l, r) => {
            if l.is_skip() && r.is_skip() {
                out.push(skip_redex(path, RuleFamily::Parallel, "P3a", None));
            } else {
                collect(l, path.child(PathStep::Left), out);
                collect(r, path.child(PathStep::Right), out);
            }
        }
        Prog::Stmt(s) => {
            let site = Some(s.site);
            let ident = |family: RuleFamily, rule: String, out: &mut Vec<Redex>| {
                out.push(Redex { path: path.clone(), kind: StepKind::Identifier, family, rule, site })
            };
            match &s.kind {
                StmtKind::Skip { .. } => {}
                StmtKind::Assign { target, op, .. } => {
                    let (family, n) = match (target, op) {
                        (Target::Var(_), AssignOp::Set) => (RuleFamily::Destructive, 1),
                        (Target::Elem(..), AssignOp::Set) => (RuleFamily::Destructive, 2),
                        (Target::Var(_), AssignOp::Add) => (RuleFamily::Constructive, 1),
                        (Target::Var(_), AssignOp::Sub) => (RuleFamily::Constructive, 2),
                        (Target::Elem(..), AssignOp::Add) => (RuleFamily::Constructive, 3),
                        (Target::Elem(..), AssignOp::Sub) => (RuleFamily::Constructive, 4),
                    };
                    ident(family, format!("{}{n}a", family.letter()), out)
                }
                StmtKind::If { mark, then_p, else_p, .. } => match mark {
                    Mark::Pending => ident(RuleFamily::Conditional, "I1a".into(), out),
                    Mark::True if then_p.is_skip() => ident(RuleFamily::Conditional, "I4a".into(), out),
                    Mark::False if else_p.is_skip() => ident(RuleFamily::Conditional, "I5a".into(), out),
                    Mark::True => collect(then_p, path.child(PathStep::Then), out),
                    Mark::False => collect(else_p, path.child(PathStep::Else), out),
                },
                StmtKind::While { mark, body, .. } => match mark {
                    Mark::Pending => ident(RuleFamily::Loop, "W1a-W4a".into(), out),
                    _ if body.is_skip() => out.push(skip_redex(path, RuleFamily::Loop, "W6a", site)),
                    _ => collect(body, path.child(PathStep::Body), out),
                },
                StmtKind::Block { body, .. } => {
                    if body.is_skip() {
                        out.push(skip_redex(path, RuleFamily::Block, "B2a", site));
                    } else {
                        collect(body, path.child(PathStep::Body), out);
                    }
                }
                StmtKind::Decl { removal, item, .. } => {
                    let n = match item {
                        DeclItem::Var { .. } => 1,
                        DeclItem::Proc { .. } => 2,
                        DeclItem::Arr { .. } => 3,
                    };
                    let family = if *removal { RuleFamily::Removal } else { RuleFamily::Declaration };
                    ident(family, format!("{}{n}a", family.letter()), out)
                }
                StmtKind::Call { .. } => ident(RuleFamily::Call, "G1a".into(), out),
                StmtKind::Runc { body, .. } => {
                    if body.is_skip() {
                        ident(RuleFamily::Call, "G3a".into(), out);
                    } else {
                        collect(body, path.child(PathStep::Body), out);
                    }
                }
            }
        }
    }
}

/// Name of the loop copy for `id`, for tests.
pub fn loop_copy<V: Scalar>(t: &Traditional<V>, id: &ConstructId) -> Option<Program> {
    t.state.beta.0.get(id).map(|s| Prog::from_stmt(s.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::scheduler::{LeftFirst, SeededRandom};
    use num_bigint::BigInt;

    #[test]
    fn sorts() {
        let p = parse_program(include_str!("../../tests/fixtures/sort.rpl")).unwrap();
        for seed in 0..5 {
            let mut t: Traditional<BigInt> = Traditional::new(&p, &BTreeMap::new());
            t.run(&mut SeededRandom::new(seed), 100_000).unwrap();
            assert!(t.is_terminal());
            assert_eq!(t.ident_steps, 79);
            assert_eq!(t.globals()["count"].to_string(), "4");
        }
    }

    #[test]
    fn empty_program_keeps_state() {
        let init: BTreeMap<String, BigInt> = [("X".to_string(), BigInt::from(4))].into_iter().collect();
        let mut t = Traditional::new(&Prog::Empty, &init);
        assert!(t.run(&mut LeftFirst, 10).unwrap().is_empty());
        assert_eq!(t.globals()["X"].to_string(), "4");
    }

    #[test]
    fn procedures() {
        let p = parse_program("begin proc f is if N > 0 then N -= 1; S += 1; call f end end; call f end").unwrap();
        let init: BTreeMap<String, BigInt> = [("N".to_string(), BigInt::from(3))].into_iter().collect();
        let mut t = Traditional::new(&p, &init);
        t.run(&mut LeftFirst, 1000).unwrap();
        assert_eq!(t.globals()["S"].to_string(), "3");
        assert!(t.state.mu.entries.is_empty());
    }
}

//! Annotated forward execution and inverse execution over one machine
//! configuration `(program | δ, σ, γ, β, μ)`.

use crate::copies::{get_ai, reflect, rename_fresh, set_ai, RenameSupply};
use crate::error::{ExecError, ExecResult};
use crate::eval::{element_loc, eval_arith, eval_bool};
use crate::frontend::{ann, globals, inv, inv_stmt};
use crate::lang::{
    AnnotatedProgram, AssignOp, ConstructId, DeclItem, IdStack, Ident, Mark, PathStep, Prog, Program, RedexPath,
    Site, Stmt, StmtKind, StmtPath, Target,
};
use crate::redex::{DeltaAction, DeltaOp, Direction, Redex, RuleFamily, StepKind, StepLabel};
use crate::scalar::Scalar;
use crate::state::{AuxStore, Binding, BindingKind, IdSequencer, ProcEntry, ProgState, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// Step budget, overridable through `REVINT_MAX_STEPS`.
pub fn default_budget() -> u64 {
    std::env::var("REVINT_MAX_STEPS").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_STEP_BUDGET)
}

/// Counters for expression evaluation, used to check that inverse
/// execution never evaluates conditions or destructive right-hand sides.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStats {
    pub bool_evals: u64,
    pub destructive_evals: u64,
}

/// Picks one of the enabled redexes.
pub trait Scheduler {
    /// `enabled` is non-empty and in canonical order; `step` counts the
    /// transitions taken so far in the run.
    fn choose(&mut self, enabled: &[Redex], step: u64) -> ExecResult<usize>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "V: Scalar")]
pub struct Machine<V> {
    pub direction: Direction,
    /// Current program.
    pub prog: AnnotatedProgram,
    /// The program as started in this direction, with the stacks of the live
    /// program reflected into it.
    pub record: AnnotatedProgram,
    pub state: ProgState<V, IdStack>,
    pub delta: AuxStore<V>,
    pub seq: IdSequencer,
    pub renames: RenameSupply,
    #[serde(default)]
    pub stats: EvalStats,
}

impl<V: Scalar> Machine<V> {
    /// Forward machine for `p`; globals not listed in `init` start at 0.
    pub fn new(p: &Program, init: &BTreeMap<String, V>) -> Self {
        let names = globals(p);
        let ap = ann(p);
        Machine {
            direction: Direction::Forward,
            renames: RenameSupply::for_program(&ap),
            record: ap.clone(),
            prog: ap,
            state: ProgState::with_globals(names.iter().map(String::as_str), init),
            delta: AuxStore::default(),
            seq: IdSequencer::default(),
            stats: EvalStats::default(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.prog.is_empty() || self.prog.is_skip()
    }

    /// Named values of the globals.
    pub fn globals(&self) -> BTreeMap<String, Value<V>> {
        self.state.global_values()
    }

    pub fn global(&self, name: &str) -> Option<Value<V>> {
        self.globals().remove(name)
    }

    /// Enabled redexes, depth first, left before right.
    pub fn enabled(&self) -> Vec<Redex> {
        let mut out = Vec::new();
        self.collect(&self.prog, RedexPath::default(), &mut out);
        out
    }

    pub fn is_stuck(&self) -> bool {
        !self.is_terminal() && self.enabled().is_empty()
    }

    fn collect(&self, p: &Prog<IdStack>, path: RedexPath, out: &mut Vec<Redex>) {
        let d = self.direction.suffix();
        match p {
            Prog::Empty => {}
            Prog::Seq(items) => {
                if items[0].is_skip() {
                    out.push(skip_redex(path, RuleFamily::Sequence, format!("S2{d}"), None));
                } else {
                    self.collect(&items[0], path.child(PathStep::Item(0)), out);
                }
            }
            Prog::Par(l, r) => {
                if l.is_skip() && r.is_skip() {
                    out.push(skip_redex(path, RuleFamily::Parallel, format!("P3{d}"), None));
                } else {
                    self.collect(l, path.child(PathStep::Left), out);
                    self.collect(r, path.child(PathStep::Right), out);
                }
            }
            Prog::Stmt(s) => self.collect_stmt(s, path, out),
        }
    }

    fn collect_stmt(&self, s: &Stmt<IdStack>, path: RedexPath, out: &mut Vec<Redex>) {
        let d = self.direction.suffix();
        let rev = self.direction == Direction::Reverse;
        let site = Some(s.site);
        let ident = |family: RuleFamily, rule: String, out: &mut Vec<Redex>| {
            if rev {
                let head = s.stack().and_then(IdStack::head);
                if head.is_none() || head != self.seq.previous() {
                    return;
                }
            }
            out.push(Redex { path: path.clone(), kind: StepKind::Identifier, family, rule, site });
        };
        match &s.kind {
            StmtKind::Skip { .. } => {}
            StmtKind::Assign { target, op, .. } => {
                let (family, n) = assign_rule(target, *op, self.direction);
                ident(family, format!("{}{n}{d}", family.letter()), out);
            }
            StmtKind::If { mark, then_p, else_p, .. } => match mark {
                Mark::Pending => ident(RuleFamily::Conditional, format!("I1{d}"), out),
                Mark::True if then_p.is_skip() => ident(RuleFamily::Conditional, format!("I4{d}"), out),
                Mark::False if else_p.is_skip() => ident(RuleFamily::Conditional, format!("I5{d}"), out),
                Mark::True => self.collect(then_p, path.child(PathStep::Then), out),
                Mark::False => self.collect(else_p, path.child(PathStep::Else), out),
            },
            StmtKind::While { mark, body, .. } => match mark {
                Mark::Pending => ident(RuleFamily::Loop, format!("W1{d}-W4{d}"), out),
                _ if body.is_skip() => out.push(skip_redex(path, RuleFamily::Loop, format!("W6{d}"), site)),
                _ => self.collect(body, path.child(PathStep::Body), out),
            },
            StmtKind::Block { body, .. } => {
                if body.is_skip() {
                    out.push(skip_redex(path, RuleFamily::Block, format!("B2{d}"), site));
                } else {
                    self.collect(body, path.child(PathStep::Body), out);
                }
            }
            StmtKind::Decl { removal, item, .. } => {
                let n = match item {
                    DeclItem::Var { .. } => 1,
                    DeclItem::Proc { .. } => 2,
                    DeclItem::Arr { .. } => 3,
                };
                let family = if *removal { RuleFamily::Removal } else { RuleFamily::Declaration };
                ident(family, format!("{}{n}{d}", family.letter()), out);
            }
            StmtKind::Call { .. } => ident(RuleFamily::Call, format!("G1{d}"), out),
            StmtKind::Runc { body, .. } => {
                if body.is_skip() {
                    ident(RuleFamily::Call, format!("G3{d}"), out);
                } else {
                    self.collect(body, path.child(PathStep::Body), out);
                }
            }
        }
    }

    /// Apply an enabled redex. On error the machine is left unchanged.
    pub fn step(&mut self, path: &RedexPath) -> ExecResult<StepLabel> {
        if !self.enabled().iter().any(|r| &r.path == path) {
            return Err(ExecError::NotEnabled(path.to_string()));
        }
        let mut next = self.clone();
        let label = next.apply(path)?;
        *self = next;
        Ok(label)
    }

    fn apply(&mut self, path: &RedexPath) -> ExecResult<StepLabel> {
        let mut ctx = Ctx {
            dir: self.direction,
            state: &mut self.state,
            delta: &mut self.delta,
            seq: &mut self.seq,
            renames: &mut self.renames,
            stats: &mut self.stats,
            rule: String::new(),
            id: None,
            ops: Vec::new(),
        };
        ctx.step_at(&mut self.prog, &path.0)?;
        let label = StepLabel { rule: ctx.rule, id: ctx.id, redex: path.clone(), delta_ops: ctx.ops };
        reflect(&mut self.record, &self.prog);
        Ok(label)
    }

    /// Run until nothing is enabled. Labels are appended to `trace` as they
    /// happen, so a failed run still reports its prefix.
    pub fn run(&mut self, sched: &mut dyn Scheduler, budget: u64, trace: &mut Vec<StepLabel>) -> ExecResult<()> {
        let mut taken = 0u64;
        loop {
            let en = self.enabled();
            if en.is_empty() {
                return Ok(());
            }
            if taken >= budget {
                return Err(ExecError::StepBudget(budget));
            }
            let i = sched.choose(&en, trace.len() as u64)?;
            let r = en.get(i).ok_or_else(|| ExecError::NotEnabled(format!("choice {i}")))?;
            let mut next = self.clone();
            let label = next.apply(&r.path)?;
            *self = next;
            trace.push(label);
            taken += 1;
        }
    }

    /// Switch a forward machine to inverse execution of what has run so
    /// far. The executed part of the program is cut out of the record,
    /// inverted, and the loop and procedure environments are inverted with
    /// it; σ, δ and the sequencer carry over.
    pub fn flip(&mut self) -> ExecResult<()> {
        if self.direction != Direction::Forward {
            return Err(ExecError::Invalid("only a forward machine can be inverted in place".into()));
        }
        let done = executed(&self.record, &self.prog, &self.state)?;
        let rev = inv(&done);
        for s in self.state.beta.0.values_mut() {
            *s = inv_stmt(s);
        }
        for e in self.state.mu.entries.values_mut() {
            e.body = inv(&e.body);
        }
        self.record = rev.clone();
        self.prog = rev;
        self.direction = Direction::Reverse;
        Ok(())
    }
}

fn skip_redex(path: RedexPath, family: RuleFamily, rule: String, site: Option<Site>) -> Redex {
    Redex { path, kind: StepKind::Skip, family, rule, site }
}

/// Family and number of an assignment rule. The inverse array rules number
/// decrement before increment.
fn assign_rule(t: &Target, op: AssignOp, dir: Direction) -> (RuleFamily, u8) {
    match (t, op, dir) {
        (Target::Var(_), AssignOp::Set, _) => (RuleFamily::Destructive, 1),
        (Target::Elem(..), AssignOp::Set, _) => (RuleFamily::Destructive, 2),
        (Target::Var(_), AssignOp::Add, _) => (RuleFamily::Constructive, 1),
        (Target::Var(_), AssignOp::Sub, _) => (RuleFamily::Constructive, 2),
        (Target::Elem(..), AssignOp::Add, Direction::Forward) => (RuleFamily::Constructive, 3),
        (Target::Elem(..), AssignOp::Sub, Direction::Forward) => (RuleFamily::Constructive, 4),
        (Target::Elem(..), AssignOp::Sub, Direction::Reverse) => (RuleFamily::Constructive, 3),
        (Target::Elem(..), AssignOp::Add, Direction::Reverse) => (RuleFamily::Constructive, 4),
    }
}

struct Ctx<'a, V> {
    dir: Direction,
    state: &'a mut ProgState<V, IdStack>,
    delta: &'a mut AuxStore<V>,
    seq: &'a mut IdSequencer,
    renames: &'a mut RenameSupply,
    stats: &'a mut EvalStats,
    rule: String,
    id: Option<Ident>,
    ops: Vec<DeltaOp>,
}

fn not_enabled(what: &str) -> ExecError {
    ExecError::NotEnabled(what.to_string())
}

fn block_of(pa: &StmtPath) -> ExecResult<ConstructId> {
    pa.head().cloned().ok_or_else(|| ExecError::Invalid("declaration outside a block".into()))
}

fn closed(site: Site, stack: IdStack) -> Stmt<IdStack> {
    Stmt::skip(site, Some(stack))
}

fn free_array<V: Scalar>(st: &mut ProgState<V, IdStack>, name: &str, b: &Binding) -> ExecResult<()> {
    let (base, len) = st.array_base(name, b)?;
    for l in base..base + len.max(1) {
        st.sigma.free(l);
    }
    st.sigma.free(b.loc);
    Ok(())
}

impl<V: Scalar> Ctx<'_, V> {
    fn rule(&mut self, r: impl Into<String>) {
        self.rule = r.into();
    }

    fn push_op(&mut self, stack: &str, m: Ident, value: impl std::fmt::Display) {
        self.ops.push(DeltaOp::new(DeltaAction::Push, stack, m, value));
    }

    fn pop_op(&mut self, stack: &str, m: Ident, value: impl std::fmt::Display) {
        self.ops.push(DeltaOp::new(DeltaAction::Pop, stack, m, value));
    }

    fn fresh(&mut self) -> Ident {
        let m = self.seq.take();
        self.id = Some(m);
        m
    }

    /// Pop the identifier at the head of the statement's stack, which must
    /// be the most recently used one.
    fn take(&mut self, stack: &mut IdStack) -> ExecResult<Ident> {
        let prev = self.seq.previous().ok_or(ExecError::SequencerUnderflow)?;
        if stack.head() != Some(prev) {
            return Err(not_enabled("identifier stack head is not the previous identifier"));
        }
        stack.pop();
        self.seq.consume_previous()?;
        self.id = Some(prev);
        Ok(prev)
    }

    fn step_at(&mut self, p: &mut Prog<IdStack>, path: &[PathStep]) -> ExecResult<()> {
        let d = self.dir.suffix();
        let Some((first, rest)) = path.split_first() else {
            return match p {
                Prog::Seq(items) if items[0].is_skip() => {
                    let mut items = std::mem::take(items);
                    items.remove(0);
                    *p = Prog::seq(items);
                    self.rule(format!("S2{d}"));
                    Ok(())
                }
                Prog::Par(l, r) if l.is_skip() && r.is_skip() => {
                    *p = Prog::from_stmt(Stmt::skip(Site::NONE, None));
                    self.rule(format!("P3{d}"));
                    Ok(())
                }
                Prog::Stmt(s) => match self.dir {
                    Direction::Forward => self.forward(s),
                    Direction::Reverse => self.reverse(s),
                },
                _ => Err(not_enabled("no rule applies here")),
            };
        };
        match (first, p) {
            (PathStep::Item(0), Prog::Seq(items)) => self.step_at(&mut items[0], rest),
            (PathStep::Left, Prog::Par(l, _)) => self.step_at(l, rest),
            (PathStep::Right, Prog::Par(_, r)) => self.step_at(r, rest),
            (step, Prog::Stmt(s)) => self.step_inside(s, *step, rest),
            _ => Err(not_enabled("path does not match the program")),
        }
    }

    /// Context rules: I2/I3, W5, B1, G2.
    fn step_inside(&mut self, s: &mut Stmt<IdStack>, step: PathStep, rest: &[PathStep]) -> ExecResult<()> {
        match (&mut s.kind, step) {
            (StmtKind::If { mark: Mark::True, then_p, .. }, PathStep::Then) => self.step_at(then_p, rest),
            (StmtKind::If { mark: Mark::False, else_p, .. }, PathStep::Else) => self.step_at(else_p, rest),
            (StmtKind::Block { body, .. }, PathStep::Body) => self.step_at(body, rest),
            (StmtKind::While { id, mark: Mark::True, body, .. }, PathStep::Body) => {
                if !self.state.beta.0.contains_key(id) {
                    return Err(ExecError::Invalid(format!("loop {id} has no copy in the while environment")));
                }
                self.step_at(body, rest)?;
                if let Some(Stmt { kind: StmtKind::While { body: copy, .. }, .. }) = self.state.beta.0.get_mut(id) {
                    reflect(copy, body);
                }
                Ok(())
            }
            (StmtKind::Runc { id, body, .. }, PathStep::Body) => {
                if !self.state.mu.entries.contains_key(id) {
                    return Err(ExecError::Invalid(format!("call {id} has no copy in the procedure environment")));
                }
                self.step_at(body, rest)?;
                if let Some(e) = self.state.mu.entries.get_mut(id) {
                    reflect(&mut e.body, body);
                }
                Ok(())
            }
            _ => Err(not_enabled("path does not match the program")),
        }
    }

    fn assign_loc(&self, target: &Target, pa: &StmtPath) -> ExecResult<usize> {
        match target {
            Target::Var(x) => {
                let b = self.state.gamma.eval_var(x, pa)?;
                match b.kind {
                    BindingKind::Scalar => Ok(b.loc),
                    BindingKind::Array { .. } => Err(ExecError::NotScalar(x.clone())),
                }
            }
            Target::Elem(a, i) => element_loc(a, i, pa, self.state),
        }
    }

    fn forward(&mut self, s: &mut Stmt<IdStack>) -> ExecResult<()> {
        let site = s.site;
        let replacement = match &mut s.kind {
            StmtKind::Assign { target, op, expr, ann } => {
                let loc = self.assign_loc(target, &ann.path)?;
                let v = eval_arith(expr, &ann.path, self.state)?;
                let old = self.state.sigma.read(loc);
                let new = match op {
                    AssignOp::Set => {
                        self.stats.destructive_evals += 1;
                        v
                    }
                    AssignOp::Add => old.checked_add(&v).ok_or(ExecError::Overflow)?,
                    AssignOp::Sub => old.checked_sub(&v).ok_or(ExecError::Overflow)?,
                };
                let (family, n) = assign_rule(target, *op, Direction::Forward);
                self.rule(format!("{}{n}a", family.letter()));
                let m = self.fresh();
                if *op == AssignOp::Set {
                    let name = target.name().to_string();
                    self.push_op(&name, m, &old);
                    self.delta.push_value(&name, m, old);
                }
                self.state.sigma.write(loc, new);
                ann.stack.push(m);
                Some(closed(site, ann.stack.clone()))
            }
            StmtKind::If { cond, mark, then_p, else_p, ann, .. } => match mark {
                Mark::Pending => {
                    let b = eval_bool(cond, &ann.path, self.state)?;
                    self.stats.bool_evals += 1;
                    let m = self.fresh();
                    ann.stack.push(m);
                    *mark = if b { Mark::True } else { Mark::False };
                    self.rule(if b { "I1aT" } else { "I1aF" });
                    None
                }
                Mark::True | Mark::False => {
                    let b = *mark == Mark::True;
                    let branch = if b { &*then_p } else { &*else_p };
                    if !branch.is_skip() {
                        return Err(not_enabled("conditional branch has not finished"));
                    }
                    let m = self.fresh();
                    self.push_op("B", m, if b { 1 } else { 0 });
                    self.delta.b.push((m, b));
                    self.rule(if b { "I4a" } else { "I5a" });
                    ann.stack.push(m);
                    Some(closed(site, ann.stack.clone()))
                }
            },
            StmtKind::While { id, cond, mark, body, ann } => match mark {
                Mark::Pending => {
                    let b = eval_bool(cond, &ann.path, self.state)?;
                    self.stats.bool_evals += 1;
                    let defined = self.state.beta.0.contains_key(id);
                    let m = self.fresh();
                    ann.stack.push(m);
                    if !b {
                        if defined {
                            let copy = self.state.beta.0.remove(id).expect("checked");
                            let rec = match &copy.kind {
                                StmtKind::While { body, .. } => get_ai(body),
                                _ => return Err(ExecError::Invalid(format!("while copy {id} is not a loop"))),
                            };
                            self.push_op("W", m, 1);
                            self.push_op("WI", m, rec.0.len());
                            self.delta.w.push((m, true));
                            self.delta.wi.push((m, rec));
                            self.rule("W2a");
                        } else {
                            self.push_op("W", m, 0);
                            self.delta.w.push((m, false));
                            self.rule("W1a");
                        }
                        Some(closed(site, ann.stack.clone()))
                    } else {
                        let mut fresh = body.clone();
                        rename_fresh(&mut fresh, self.renames);
                        *body = fresh.clone();
                        *mark = Mark::True;
                        let copy = Stmt::new(
                            site,
                            StmtKind::While {
                                id: id.clone(),
                                cond: cond.clone(),
                                mark: Mark::Pending,
                                body: fresh,
                                ann: ann.clone(),
                            },
                        );
                        self.state.beta.0.insert(id.clone(), copy);
                        self.push_op("W", m, if defined { 1 } else { 0 });
                        self.delta.w.push((m, defined));
                        self.rule(if defined { "W4a" } else { "W3a" });
                        None
                    }
                }
                _ => {
                    if !body.is_skip() {
                        return Err(not_enabled("loop body has not finished"));
                    }
                    self.rule("W6a");
                    Some(self.loop_reset(id)?)
                }
            },
            StmtKind::Block { body, .. } => {
                if !body.is_skip() {
                    return Err(not_enabled("block body has not finished"));
                }
                self.rule("B2a");
                Some(Stmt::skip(site, None))
            }
            StmtKind::Decl { removal, item, ann } => {
                let bn = block_of(&ann.path)?;
                match (*removal, &*item) {
                    (false, DeclItem::Var { name, init }) => {
                        let v = eval_arith(init, &ann.path, self.state)?;
                        let m = self.fresh();
                        let l = self.state.sigma.next_loc();
                        self.state.gamma.bind_local(name, &bn, Binding { loc: l, kind: BindingKind::Scalar });
                        self.state.sigma.write(l, v);
                        self.rule("L1a");
                        ann.stack.push(m);
                    }
                    (false, DeclItem::Proc { id, name, body }) => {
                        let m = self.fresh();
                        self.state.mu.declare(&bn, id, name, body.clone());
                        self.rule("L2a");
                        ann.stack.push(m);
                    }
                    (false, DeclItem::Arr { name, len }) => {
                        let m = self.fresh();
                        self.alloc_array(name, *len, &bn, None)?;
                        self.rule("L3a");
                        ann.stack.push(m);
                    }
                    (true, DeclItem::Var { name, .. }) => {
                        let b = self.local(name, &bn)?;
                        let m = self.fresh();
                        let v = self.state.sigma.read(b.loc);
                        self.push_op(name, m, &v);
                        self.delta.push_value(name, m, v);
                        self.state.sigma.free(b.loc);
                        self.state.gamma.unbind_local(name, &bn);
                        self.rule("H1a");
                        ann.stack.push(m);
                    }
                    (true, DeclItem::Proc { id, name, .. }) => {
                        let m = self.fresh();
                        if !self.state.mu.undeclare(&bn, id, name) {
                            return Err(ExecError::UnboundProc(name.clone()));
                        }
                        self.rule("H2a");
                        ann.stack.push(m);
                    }
                    (true, DeclItem::Arr { name, .. }) => {
                        let b = self.local(name, &bn)?;
                        let m = self.fresh();
                        if let Value::Array(vals) = self.state.value_of(name, &b)? {
                            for v in vals {
                                self.push_op(name, m, &v);
                                self.delta.push_value(name, m, v);
                            }
                        }
                        free_array(self.state, name, &b)?;
                        self.state.gamma.unbind_local(name, &bn);
                        self.rule("H3a");
                        ann.stack.push(m);
                    }
                }
                Some(closed(site, ann.stack.clone()))
            }
            StmtKind::Call { id, name, ann } => {
                let pn = self.state.mu.eval_proc(name, &ann.path)?;
                let mut body = self.proc_body(&pn)?;
                rename_fresh(&mut body, self.renames);
                let m = self.fresh();
                let mut stack = ann.stack.clone();
                stack.push(m);
                self.state.mu.entries.insert(id.clone(), ProcEntry { name: name.clone(), body: body.clone() });
                self.rule("G1a");
                Some(Stmt::new(site, StmtKind::Runc { id: id.clone(), name: name.clone(), body, stack }))
            }
            StmtKind::Runc { id, body, stack, .. } => {
                if !body.is_skip() {
                    return Err(not_enabled("call body has not finished"));
                }
                let copy = self
                    .state
                    .mu
                    .entries
                    .remove(id)
                    .ok_or_else(|| ExecError::Invalid(format!("call {id} has no copy")))?;
                let rec = get_ai(&copy.body);
                let m = self.fresh();
                self.push_op("Pr", m, rec.0.len());
                self.delta.pr.push((m, rec));
                self.rule("G3a");
                stack.push(m);
                Some(closed(site, stack.clone()))
            }
            StmtKind::Skip { .. } => return Err(not_enabled("skip")),
        };
        if let Some(r) = replacement {
            *s = r;
        }
        Ok(())
    }

    fn reverse(&mut self, s: &mut Stmt<IdStack>) -> ExecResult<()> {
        let site = s.site;
        let replacement = match &mut s.kind {
            StmtKind::Assign { target, op, expr, ann } => {
                let loc = self.assign_loc(target, &ann.path)?;
                let (family, n) = assign_rule(target, *op, Direction::Reverse);
                self.rule(format!("{}{n}r", family.letter()));
                let m = self.take(&mut ann.stack)?;
                let new = match op {
                    AssignOp::Set => {
                        let name = target.name().to_string();
                        let v = self.delta.pop_value(&name, m)?;
                        self.pop_op(&name, m, &v);
                        v
                    }
                    AssignOp::Add | AssignOp::Sub => {
                        let v = eval_arith(expr, &ann.path, self.state)?;
                        let old = self.state.sigma.read(loc);
                        if *op == AssignOp::Add { old.checked_add(&v) } else { old.checked_sub(&v) }
                            .ok_or(ExecError::Overflow)?
                    }
                };
                self.state.sigma.write(loc, new);
                Some(closed(site, ann.stack.clone()))
            }
            StmtKind::If { mark, then_p, else_p, ann, .. } => match mark {
                Mark::Pending => {
                    let m = self.take(&mut ann.stack)?;
                    let b = self.delta.pop_b(m)?;
                    self.pop_op("B", m, if b { 1 } else { 0 });
                    *mark = if b { Mark::True } else { Mark::False };
                    self.rule(if b { "I1rT" } else { "I1rF" });
                    None
                }
                Mark::True | Mark::False => {
                    let b = *mark == Mark::True;
                    let branch = if b { &*then_p } else { &*else_p };
                    if !branch.is_skip() {
                        return Err(not_enabled("conditional branch has not finished"));
                    }
                    self.take(&mut ann.stack)?;
                    self.rule(if b { "I4r" } else { "I5r" });
                    Some(closed(site, ann.stack.clone()))
                }
            },
            StmtKind::While { id, cond, mark, body, ann } => match mark {
                Mark::Pending => {
                    let defined = self.state.beta.0.contains_key(id);
                    let m = self.take(&mut ann.stack)?;
                    let more = self.delta.pop_w(m)?;
                    self.pop_op("W", m, if more { 1 } else { 0 });
                    if !more {
                        if defined {
                            self.state.beta.0.remove(id);
                            self.rule("W2r");
                        } else {
                            self.rule("W1r");
                        }
                        Some(closed(site, ann.stack.clone()))
                    } else {
                        let mut copy = body.clone();
                        if defined {
                            rename_fresh(&mut copy, self.renames);
                            self.rule("W4r");
                        } else {
                            let rec = self.delta.pop_wi(m)?;
                            self.pop_op("WI", m, rec.0.len());
                            set_ai(&mut copy, &rec)?;
                            for c in copy.construct_ids() {
                                self.renames.observe_id(&c);
                            }
                            self.rule("W3r");
                        }
                        *body = copy.clone();
                        *mark = Mark::True;
                        let stored = Stmt::new(
                            site,
                            StmtKind::While {
                                id: id.clone(),
                                cond: cond.clone(),
                                mark: Mark::Pending,
                                body: copy,
                                ann: ann.clone(),
                            },
                        );
                        self.state.beta.0.insert(id.clone(), stored);
                        None
                    }
                }
                _ => {
                    if !body.is_skip() {
                        return Err(not_enabled("loop body has not finished"));
                    }
                    self.rule("W6r");
                    Some(self.loop_reset(id)?)
                }
            },
            StmtKind::Block { body, .. } => {
                if !body.is_skip() {
                    return Err(not_enabled("block body has not finished"));
                }
                self.rule("B2r");
                Some(Stmt::skip(site, None))
            }
            StmtKind::Decl { removal, item, ann } => {
                let bn = block_of(&ann.path)?;
                match (*removal, &*item) {
                    (false, DeclItem::Var { name, .. }) => {
                        let m = self.take(&mut ann.stack)?;
                        let v = self.delta.pop_value(name, m)?;
                        self.pop_op(name, m, &v);
                        let l = self.state.sigma.next_loc();
                        self.state.gamma.bind_local(name, &bn, Binding { loc: l, kind: BindingKind::Scalar });
                        self.state.sigma.write(l, v);
                        self.rule("L1r");
                    }
                    (false, DeclItem::Proc { id, name, body }) => {
                        self.take(&mut ann.stack)?;
                        self.state.mu.declare(&bn, id, name, body.clone());
                        self.rule("L2r");
                    }
                    (false, DeclItem::Arr { name, len }) => {
                        let m = self.take(&mut ann.stack)?;
                        let mut vals = self.delta.drain(name, m);
                        if vals.len() != *len {
                            return Err(ExecError::Invalid(format!(
                                "array `{name}` needs {len} saved values under identifier {m}, found {}",
                                vals.len()
                            )));
                        }
                        for v in &vals {
                            self.pop_op(name, m, v);
                        }
                        vals.reverse();
                        self.alloc_array(name, *len, &bn, Some(vals))?;
                        self.rule("L3r");
                    }
                    (true, DeclItem::Var { name, .. }) => {
                        let b = self.local(name, &bn)?;
                        self.take(&mut ann.stack)?;
                        self.state.sigma.free(b.loc);
                        self.state.gamma.unbind_local(name, &bn);
                        self.rule("H1r");
                    }
                    (true, DeclItem::Proc { id, name, .. }) => {
                        self.take(&mut ann.stack)?;
                        if !self.state.mu.undeclare(&bn, id, name) {
                            return Err(ExecError::UnboundProc(name.clone()));
                        }
                        self.rule("H2r");
                    }
                    (true, DeclItem::Arr { name, .. }) => {
                        let b = self.local(name, &bn)?;
                        self.take(&mut ann.stack)?;
                        free_array(self.state, name, &b)?;
                        self.state.gamma.unbind_local(name, &bn);
                        self.rule("H3r");
                    }
                }
                Some(closed(site, ann.stack.clone()))
            }
            StmtKind::Call { id, name, ann } => {
                let pn = self.state.mu.eval_proc(name, &ann.path)?;
                let mut body = self.proc_body(&pn)?;
                let m = self.take(&mut ann.stack)?;
                let rec = self.delta.pop_pr(m)?;
                self.pop_op("Pr", m, rec.0.len());
                set_ai(&mut body, &rec)?;
                for c in body.construct_ids() {
                    self.renames.observe_id(&c);
                }
                self.state.mu.entries.insert(id.clone(), ProcEntry { name: name.clone(), body: body.clone() });
                self.rule("G1r");
                Some(Stmt::new(
                    site,
                    StmtKind::Runc { id: id.clone(), name: name.clone(), body, stack: ann.stack.clone() },
                ))
            }
            StmtKind::Runc { id, body, stack, .. } => {
                if !body.is_skip() {
                    return Err(not_enabled("call body has not finished"));
                }
                self.take(stack)?;
                if self.state.mu.entries.remove(id).is_none() {
                    return Err(ExecError::Invalid(format!("call {id} has no copy")));
                }
                self.rule("G3r");
                Some(closed(site, stack.clone()))
            }
            StmtKind::Skip { .. } => return Err(not_enabled("skip")),
        };
        if let Some(r) = replacement {
            *s = r;
        }
        Ok(())
    }

    fn loop_reset(&self, id: &ConstructId) -> ExecResult<Stmt<IdStack>> {
        self.state
            .beta
            .0
            .get(id)
            .cloned()
            .ok_or_else(|| ExecError::Invalid(format!("loop {id} has no copy in the while environment")))
    }

    fn local(&self, name: &str, bn: &ConstructId) -> ExecResult<Binding> {
        self.state.gamma.local(name, bn).ok_or_else(|| ExecError::Unbound(name.to_string()))
    }

    fn proc_body(&self, pn: &ConstructId) -> ExecResult<Prog<IdStack>> {
        self.state
            .mu
            .entries
            .get(pn)
            .map(|e| e.body.clone())
            .ok_or_else(|| ExecError::Invalid(format!("procedure {pn} is not declared")))
    }

    /// Pointer cell plus `len` element cells, elements zero or `vals`.
    fn alloc_array(&mut self, name: &str, len: usize, bn: &ConstructId, vals: Option<Vec<V>>) -> ExecResult<()> {
        let l = self.state.sigma.next_loc();
        let l1 = self.state.sigma.next_loc_block(len);
        self.state.sigma.write(l, V::from_loc(l1).ok_or(ExecError::Overflow)?);
        if let Some(vals) = vals {
            for (i, v) in vals.into_iter().enumerate() {
                self.state.sigma.write(l1 + i, v);
            }
        }
        self.state.gamma.bind_local(name, bn, Binding { loc: l, kind: BindingKind::Array { len } });
        Ok(())
    }
}

fn placeholder_skip() -> Prog<IdStack> {
    Prog::from_stmt(Stmt::skip(Site::NONE, None))
}

fn or_skip(p: Prog<IdStack>) -> Prog<IdStack> {
    if p.is_empty() {
        placeholder_skip()
    } else {
        p
    }
}

fn misaligned() -> ExecError {
    ExecError::Invalid("current program does not line up with its record".into())
}

/// The part of `o` (a record with reflected stacks) that has already run,
/// given the remaining program `r`. Running loops and calls take their
/// bodies from β and μ.
fn executed<V: Scalar>(o: &Prog<IdStack>, r: &Prog<IdStack>, st: &ProgState<V, IdStack>) -> ExecResult<Prog<IdStack>> {
    if r.is_skip() {
        return Ok(o.clone());
    }
    match (o, r) {
        (Prog::Empty, _) => Ok(Prog::Empty),
        (Prog::Par(ol, or), Prog::Par(rl, rr)) => {
            let l = executed(ol, rl, st)?;
            let rt = executed(or, rr, st)?;
            Ok(match (l.is_empty(), rt.is_empty()) {
                (true, _) => rt,
                (_, true) => l,
                _ => Prog::par(l, rt),
            })
        }
        (Prog::Seq(os), _) => {
            let rs = r.items();
            if rs.is_empty() || rs.len() > os.len() {
                return Err(misaligned());
            }
            let j = os.len() - rs.len();
            let mut out: Vec<Prog<IdStack>> = os[..j].to_vec();
            out.push(executed(&os[j], rs[0], st)?);
            Ok(Prog::seq(out))
        }
        (Prog::Stmt(os), Prog::Stmt(rs)) => executed_stmt(os, rs, st),
        _ => Err(misaligned()),
    }
}

fn executed_stmt<V: Scalar>(
    o: &Stmt<IdStack>,
    r: &Stmt<IdStack>,
    st: &ProgState<V, IdStack>,
) -> ExecResult<Prog<IdStack>> {
    if o.site != r.site {
        return Err(misaligned());
    }
    let kind = match (&o.kind, &r.kind) {
        (_, StmtKind::If { mark: Mark::Pending, .. }) => return Ok(Prog::Empty),
        (StmtKind::If { then_p: ot, else_p: oe, .. }, StmtKind::If { id, cond, mark, then_p, else_p, ann }) => {
            let (t, e) = if *mark == Mark::True {
                (or_skip(executed(ot, then_p, st)?), oe.clone())
            } else {
                (ot.clone(), or_skip(executed(oe, else_p, st)?))
            };
            StmtKind::If { id: id.clone(), cond: cond.clone(), mark: *mark, then_p: t, else_p: e, ann: ann.clone() }
        }
        (_, StmtKind::While { id, mark, .. }) if *mark == Mark::Pending => {
            if st.beta.0.contains_key(id) {
                r.kind.clone()
            } else {
                return Ok(Prog::Empty);
            }
        }
        (_, StmtKind::While { id, cond, mark, body, ann }) => {
            let copy = match st.beta.0.get(id) {
                Some(Stmt { kind: StmtKind::While { body, .. }, .. }) => body,
                _ => return Err(ExecError::Invalid(format!("loop {id} has no copy in the while environment"))),
            };
            StmtKind::While {
                id: id.clone(),
                cond: cond.clone(),
                mark: *mark,
                body: or_skip(executed(copy, body, st)?),
                ann: ann.clone(),
            }
        }
        (StmtKind::Block { body: ob, .. }, StmtKind::Block { id, body }) => {
            let b = executed(ob, body, st)?;
            if b.is_empty() {
                return Ok(Prog::Empty);
            }
            StmtKind::Block { id: id.clone(), body: b }
        }
        (_, StmtKind::Runc { id, name, body, stack }) => {
            let copy = st
                .mu
                .entries
                .get(id)
                .ok_or_else(|| ExecError::Invalid(format!("call {id} has no copy")))?;
            StmtKind::Runc {
                id: id.clone(),
                name: name.clone(),
                body: or_skip(executed(&copy.body, body, st)?),
                stack: stack.clone(),
            }
        }
        (_, StmtKind::Assign { .. } | StmtKind::Decl { .. } | StmtKind::Call { .. }) => return Ok(Prog::Empty),
        _ => return Err(misaligned()),
    };
    Ok(Prog::from_stmt(Stmt::new(r.site, kind)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use num_bigint::BigInt;

    struct First;
    impl Scheduler for First {
        fn choose(&mut self, _: &[Redex], _: u64) -> ExecResult<usize> {
            Ok(0)
        }
    }

    fn machine(src: &str, init: &[(&str, i64)]) -> Machine<BigInt> {
        let p = parse_program(src).unwrap();
        let init = init.iter().map(|(n, v)| (n.to_string(), BigInt::from(*v))).collect();
        Machine::new(&p, &init)
    }

    fn val(m: &Machine<BigInt>, n: &str) -> String {
        m.global(n).unwrap().to_string()
    }

    fn roundtrip(src: &str, init: &[(&str, i64)]) -> Machine<BigInt> {
        let mut m = machine(src, init);
        let start = m.globals();
        let mut t = Vec::new();
        m.run(&mut First, 100_000, &mut t).unwrap();
        assert!(m.is_terminal());
        let fwd = m.clone();
        m.flip().unwrap();
        m.run(&mut First, 100_000, &mut t).unwrap();
        assert!(m.is_terminal(), "stuck: {:?}", m.prog);
        assert_eq!(m.globals(), start);
        assert!(m.delta.is_empty());
        assert_eq!(m.seq.next, 0);
        assert!(m.state.beta.0.is_empty() && m.state.mu.entries.is_empty());
        assert!(m.state.gamma.locals.is_empty());
        fwd
    }

    #[test]
    fn intro_assignment() {
        let mut m = machine("X = 5", &[("X", 2)]);
        let l = m.step(&RedexPath::default()).unwrap();
        assert_eq!(l.rule, "D1a");
        assert_eq!(l.id, Some(0));
        assert_eq!(val(&m, "X"), "5");
        assert_eq!(m.delta.values["X"], vec![(0, BigInt::from(2))]);
        m.flip().unwrap();
        let l = m.step(&RedexPath::default()).unwrap();
        assert_eq!(l.rule, "D1r");
        assert_eq!(val(&m, "X"), "2");
        assert!(m.delta.is_empty());
        assert_eq!(m.stats.destructive_evals, 1);
    }

    #[test]
    fn constructive_saves_nothing() {
        let mut m = machine("X += 3", &[]);
        m.step(&RedexPath::default()).unwrap();
        assert_eq!(val(&m, "X"), "3");
        assert!(m.delta.is_empty());
        roundtrip("X += 3; Y -= X", &[]);
    }

    #[test]
    fn enabled_sets() {
        let m = machine("X = 5 par Y = 2", &[]);
        let en = m.enabled();
        assert_eq!(en.len(), 2);
        assert!(en.iter().all(|r| r.kind == StepKind::Identifier));
        assert_eq!(en[0].path.to_string(), "/L");
        let mut m = machine("skip; X = 1", &[]);
        let en = m.enabled();
        assert_eq!(en.len(), 1);
        assert_eq!(en[0].rule, "S2a");
        m.step(&en[0].path).unwrap();
        m.step(&RedexPath::default()).unwrap();
        assert!(m.enabled().is_empty());
        assert!(m.is_terminal());
    }

    #[test]
    fn disabled_step_leaves_machine_alone() {
        let mut m = machine("X = 1; Y = 2", &[]);
        let before = m.clone();
        assert!(m.step(&"/1".parse().unwrap()).is_err());
        assert_eq!(m, before);
        let mut m = machine("begin arr[2] a; X = a[5] end", &[]);
        m.step(&"/body/0".parse().unwrap()).unwrap();
        m.step(&"/body".parse().unwrap()).unwrap();
        let before = m.clone();
        assert!(matches!(m.step(&"/body/0".parse().unwrap()), Err(ExecError::IndexOutOfRange { .. })));
        assert_eq!(m, before);
    }

    #[test]
    fn conditional_and_loop_roundtrip() {
        let m = roundtrip("if X > 0 then Y = 1 else Y = 2 end", &[("X", 1)]);
        assert_eq!(val(&m, "Y"), "1");
        assert_eq!(m.delta.b, vec![(2, true)]);
        let m = roundtrip("while X > 0 do X -= 1; Y += 2 end", &[("X", 3)]);
        assert_eq!(val(&m, "Y"), "6");
        assert_eq!(m.delta.w, vec![(0, false), (3, true), (6, true), (9, true)]);
        assert_eq!(m.delta.wi.len(), 1);
        roundtrip("while X > 0 do X -= 1 end", &[]);
    }

    #[test]
    fn blocks_arrays_procs() {
        let m = roundtrip(
            "begin var t = 4; arr[3] a; proc f is a[1] += t; Y = a[1] end; \
             call f; call f; a[2] = 7; X = a[2] end",
            &[],
        );
        assert_eq!(val(&m, "Y"), "8");
        assert_eq!(val(&m, "X"), "7");
        assert!(m.state.gamma.locals.is_empty());
        assert_eq!(m.delta.pr.len(), 2);
        let a = &m.delta.values["a"];
        assert_eq!(a.iter().map(|(_, v)| v.to_string()).collect::<Vec<_>>(), ["0", "0", "8", "7"]);
    }

    #[test]
    fn nested_loops_and_recursion() {
        roundtrip(
            "while X > 0 do X -= 1; begin var k = 2; while k > 0 do k -= 1; Y += 1 end end end",
            &[("X", 3)],
        );
        roundtrip(
            "begin proc f is if N > 0 then N -= 1; S += 1; call f else skip end end; call f end",
            &[("N", 4)],
        );
    }

    #[test]
    fn parallel_interleavings_roundtrip() {
        struct Last;
        impl Scheduler for Last {
            fn choose(&mut self, e: &[Redex], _: u64) -> ExecResult<usize> {
                Ok(e.len() - 1)
            }
        }
        let mut m = machine("X = 1; X += 2 par X = 4", &[("X", 9)]);
        let mut t = Vec::new();
        m.run(&mut Last, 1000, &mut t).unwrap();
        assert_eq!(val(&m, "X"), "6");
        m.flip().unwrap();
        m.run(&mut Last, 1000, &mut t).unwrap();
        assert_eq!(val(&m, "X"), "9");
        assert!(m.delta.is_empty());
        assert_eq!(m.stats.bool_evals, 0);
    }

    #[test]
    fn reverse_evaluates_no_conditions() {
        let mut m = machine("while X > 0 do X -= 1; if X > 1 then Y = X end end", &[("X", 4)]);
        m.run(&mut First, 1000, &mut Vec::new()).unwrap();
        let before = m.stats.clone();
        m.flip().unwrap();
        m.run(&mut First, 1000, &mut Vec::new()).unwrap();
        assert_eq!(m.stats, before);
        assert_eq!(val(&m, "X"), "4");
    }

    #[test]
    fn prefix_flip() {
        let src = "begin var t = 1; proc g is Z += 1 end; while X > 0 do X -= 1; t += X; call g end; Y = t end";
        let mut full = machine(src, &[("X", 3)]);
        full.run(&mut First, 1000, &mut Vec::new()).unwrap();
        let total = full.seq.next;
        for k in 0..=total {
            let mut m = machine(src, &[("X", 3)]);
            let start = m.globals();
            while m.seq.next < k {
                let r = m.enabled()[0].path.clone();
                m.step(&r).unwrap();
            }
            m.flip().unwrap();
            m.run(&mut First, 1000, &mut Vec::new()).unwrap();
            assert!(m.is_terminal(), "k={k}: {:?}", m.prog);
            assert_eq!(m.globals(), start, "k={k}");
            assert!(m.delta.is_empty(), "k={k}");
            assert_eq!(m.seq.next, 0);
        }
    }

    #[test]
    fn budget_guard() {
        let mut m = machine("while T do X += 1 end", &[]);
        assert_eq!(m.run(&mut First, 50, &mut Vec::new()), Err(ExecError::StepBudget(50)));
    }
}

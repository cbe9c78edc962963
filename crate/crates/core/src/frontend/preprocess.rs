use super::parser::{RawDecl, RawKind, RawProg, RawStmt};
use super::{FrontendError, Pos};
use crate::lang::{
    Ann, AssignOp, IdStack, BoolExpr, ConstructId, ConstructKind, DeclItem, Expr, Program, Prog, Site, Stmt,
    StmtKind, StmtPath, Target,
};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

/// Turn a parsed program into the original syntax: every construct named,
/// every evaluating statement given its path, removals made explicit and
/// statements numbered with static sites.
pub fn preprocess(raw: &RawProg) -> Result<Program, FrontendError> {
    preprocess_with_stacks(raw).map(|(p, _)| p)
}

/// As [`preprocess`], also returning the written identifier stacks by site.
pub fn preprocess_with_stacks(raw: &RawProg) -> Result<(Program, BTreeMap<Site, IdStack>), FrontendError> {
    let mut explicit = HashSet::new();
    collect_explicit(raw, &mut explicit)?;
    let mut pp = Pre { used: explicit, counters: HashMap::new(), scopes: Vec::new(), stacks: Vec::new() };
    let mut prog = pp.prog(raw, &StmtPath::default())?;
    // written stacks ride on temporary sites 1.. until real numbering
    let mut stacks = BTreeMap::new();
    let mut next = 0u32;
    prog.for_each_stmt_mut(true, &mut |s| {
        if s.site.0 > 0 {
            stacks.insert(Site(next), IdStack::from_head_first(&pp.stacks[s.site.0 as usize - 1]));
        }
        s.site = Site(next);
        next += 1;
    });
    fill_removal_bodies(&mut prog);
    Ok((prog, stacks))
}

/// Names read or written as scalars without a local declaration in scope.
pub fn globals(p: &Program) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut scopes: Vec<HashSet<String>> = Vec::new();
    collect_globals(p, &mut scopes, &mut out);
    out
}

fn collect_globals(p: &Program, scopes: &mut Vec<HashSet<String>>, out: &mut BTreeSet<String>) {
    for item in p.items() {
        match item {
            Prog::Par(l, r) => {
                collect_globals(l, scopes, out);
                collect_globals(r, scopes, out);
            }
            Prog::Stmt(s) => globals_stmt(s, scopes, out),
            _ => {}
        }
    }
}

fn note_expr(e: &Expr, scopes: &[HashSet<String>], out: &mut BTreeSet<String>) {
    e.for_each_name(&mut |n, is_arr| {
        if !is_arr && !scopes.iter().any(|f| f.contains(n)) {
            out.insert(n.to_string());
        }
    });
}

fn globals_stmt(s: &Stmt<()>, scopes: &mut Vec<HashSet<String>>, out: &mut BTreeSet<String>) {
    match &s.kind {
        StmtKind::Assign { target, expr, .. } => {
            match target {
                Target::Var(x) => note_expr(&Expr::Var(x.clone()), scopes, out),
                Target::Elem(_, i) => note_expr(i, scopes, out),
            }
            note_expr(expr, scopes, out);
        }
        StmtKind::If { cond, then_p, else_p, .. } => {
            cond.for_each_expr(&mut |e| note_expr(e, scopes, out));
            collect_globals(then_p, scopes, out);
            collect_globals(else_p, scopes, out);
        }
        StmtKind::While { cond, body, .. } => {
            cond.for_each_expr(&mut |e| note_expr(e, scopes, out));
            collect_globals(body, scopes, out);
        }
        StmtKind::Block { body, .. } => {
            scopes.push(HashSet::new());
            collect_globals(body, scopes, out);
            scopes.pop();
        }
        StmtKind::Decl { removal: false, item, .. } => match item {
            DeclItem::Var { name, init } => {
                note_expr(init, scopes, out);
                if let Some(f) = scopes.last_mut() {
                    f.insert(name.clone());
                }
            }
            DeclItem::Arr { name, .. } => {
                if let Some(f) = scopes.last_mut() {
                    f.insert(name.clone());
                }
            }
            DeclItem::Proc { body, .. } => collect_globals(body, scopes, out),
        },
        StmtKind::Runc { body, .. } => collect_globals(body, scopes, out),
        StmtKind::Decl { .. } | StmtKind::Skip { .. } | StmtKind::Call { .. } => {}
    }
}

fn collect_explicit(raw: &RawProg, out: &mut HashSet<String>) -> Result<(), FrontendError> {
    fn add(out: &mut HashSet<String>, id: &Option<ConstructId>, kind: ConstructKind, pos: Pos) -> Result<(), FrontendError> {
        if let Some(id) = id {
            if id.version != 0 {
                return Err(FrontendError::new(pos, format!("construct name `{id}` must have version 0 in source")));
            }
            if id.kind() != Some(kind) {
                return Err(FrontendError::new(
                    pos,
                    format!("construct name `{}` must start with `{}`", id.base, kind.prefix()),
                ));
            }
            if !out.insert(id.base.clone()) {
                return Err(FrontendError::new(pos, format!("construct name `{}` used twice", id.base)));
            }
        }
        Ok(())
    }
    let mut stack = vec![raw];
    let mut stmts: Vec<&RawStmt> = Vec::new();
    while let Some(p) = stack.pop() {
        match p {
            RawProg::Empty => {}
            RawProg::Stmt(s) => stmts.push(s),
            RawProg::Seq(v) => stack.extend(v.iter()),
            RawProg::Par(l, r) => {
                stack.push(l);
                stack.push(r);
            }
        }
    }
    while let Some(s) = stmts.pop() {
        let mut sub: Vec<&RawProg> = Vec::new();
        match &s.kind {
            RawKind::If { id, then_p, else_p, .. } => {
                add(out, id, ConstructKind::Cond, s.pos)?;
                sub.push(then_p);
                sub.extend(else_p.iter());
            }
            RawKind::While { id, body, .. } => {
                add(out, id, ConstructKind::While, s.pos)?;
                sub.push(body);
            }
            RawKind::Block { id, body } => {
                add(out, id, ConstructKind::Block, s.pos)?;
                sub.push(body);
            }
            RawKind::Call { id, .. } => add(out, id, ConstructKind::Call, s.pos)?,
            RawKind::Decl { removal: false, item: RawDecl::Proc { id, body, .. } } => {
                add(out, id, ConstructKind::Proc, s.pos)?;
                sub.extend(body.iter());
            }
            _ => {}
        }
        for p in sub {
            collect_explicit(p, out)?;
        }
    }
    Ok(())
}

#[derive(Default)]
struct Frame {
    scalars: HashSet<String>,
    arrays: HashSet<String>,
    procs: HashMap<String, ConstructId>,
}

struct Pre {
    used: HashSet<String>,
    counters: HashMap<char, u32>,
    scopes: Vec<Frame>,
    stacks: Vec<Vec<u64>>,
}

impl Pre {
    fn tag(&mut self, s: &RawStmt) -> Site {
        match &s.stack {
            Some(ids) => {
                self.stacks.push(ids.clone());
                Site(self.stacks.len() as u32)
            }
            None => Site(0),
        }
    }

    fn fresh(&mut self, given: &Option<ConstructId>, kind: ConstructKind) -> ConstructId {
        if let Some(id) = given {
            return id.clone();
        }
        let c = self.counters.entry(kind.prefix()).or_insert(0);
        loop {
            *c += 1;
            let base = format!("{}{}", kind.prefix(), c);
            if self.used.insert(base.clone()) {
                return ConstructId::new(base, 0);
            }
        }
    }

    fn scalar_ok(&self, name: &str, pos: Pos) -> Result<(), FrontendError> {
        for f in self.scopes.iter().rev() {
            if f.scalars.contains(name) {
                return Ok(());
            }
            if f.arrays.contains(name) {
                return Err(FrontendError::new(pos, format!("array `{name}` used as a variable")));
            }
        }
        Ok(())
    }

    fn array_ok(&self, name: &str, pos: Pos) -> Result<(), FrontendError> {
        for f in self.scopes.iter().rev() {
            if f.arrays.contains(name) {
                return Ok(());
            }
            if f.scalars.contains(name) {
                return Err(FrontendError::new(pos, format!("variable `{name}` indexed as an array")));
            }
        }
        Err(FrontendError::new(pos, format!("array `{name}` is not declared in an enclosing block")))
    }

    fn check_expr(&self, e: &Expr, pos: Pos) -> Result<(), FrontendError> {
        let mut err = Ok(());
        e.for_each_name(&mut |n, is_arr| {
            if err.is_ok() {
                err = if is_arr { self.array_ok(n, pos) } else { self.scalar_ok(n, pos) };
            }
        });
        err
    }

    fn check_bool(&self, b: &BoolExpr, pos: Pos) -> Result<(), FrontendError> {
        let mut err = Ok(());
        b.for_each_expr(&mut |e| {
            if err.is_ok() {
                err = self.check_expr(e, pos);
            }
        });
        err
    }

    fn prog(&mut self, raw: &RawProg, pa: &StmtPath) -> Result<Program, FrontendError> {
        Ok(match raw {
            RawProg::Empty => Prog::Empty,
            RawProg::Stmt(s) => Prog::from_stmt(self.stmt(s, pa)?),
            RawProg::Seq(items) => {
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    out.push(self.prog(it, pa)?);
                }
                Prog::seq(out)
            }
            RawProg::Par(l, r) => {
                let l = self.body(l, pa)?;
                let r = self.body(r, pa)?;
                Prog::par(l, r)
            }
        })
    }

    /// Non-empty program, with an empty one replaced by `skip`.
    fn body(&mut self, raw: &RawProg, pa: &StmtPath) -> Result<Program, FrontendError> {
        let p = self.prog(raw, pa)?;
        Ok(if p.is_empty() { Prog::from_stmt(Stmt::skip(Site(0), None)) } else { p })
    }

    fn stmt(&mut self, s: &RawStmt, pa: &StmtPath) -> Result<Stmt<()>, FrontendError> {
        let pos = s.pos;
        let ann = || Ann::new(pa.clone());
        let kind = match &s.kind {
            RawKind::Skip => StmtKind::Skip { stack: None },
            RawKind::Assign { target, op, expr } => {
                match target {
                    Target::Var(x) => self.scalar_ok(x, pos)?,
                    Target::Elem(a, i) => {
                        self.array_ok(a, pos)?;
                        self.check_expr(i, pos)?;
                    }
                }
                self.check_expr(expr, pos)?;
                check_self_reference(target, *op, expr, pos)?;
                StmtKind::Assign { target: target.clone(), op: *op, expr: expr.clone(), ann: ann() }
            }
            RawKind::If { id, cond, then_p, else_p } => {
                self.check_bool(cond, pos)?;
                let id = self.fresh(id, ConstructKind::Cond);
                let then_p = self.body(then_p, pa)?;
                let else_p = match else_p {
                    Some(e) => self.body(e, pa)?,
                    None => Prog::from_stmt(Stmt::skip(Site(0), None)),
                };
                StmtKind::If { id, cond: cond.clone(), mark: crate::lang::Mark::Pending, then_p, else_p, ann: ann() }
            }
            RawKind::While { id, cond, body } => {
                self.check_bool(cond, pos)?;
                let id = self.fresh(id, ConstructKind::While);
                let body = self.body(body, pa)?;
                StmtKind::While { id, cond: cond.clone(), mark: crate::lang::Mark::Pending, body, ann: ann() }
            }
            RawKind::Block { id, body } => {
                let id = self.fresh(id, ConstructKind::Block);
                let inner = pa.push_inner(id.clone());
                self.scopes.push(Frame::default());
                let res = self.block_body(body, &inner, &id);
                self.scopes.pop();
                StmtKind::Block { id, body: res? }
            }
            RawKind::Call { id, name } => {
                if self.lookup_proc(name).is_none() {
                    return Err(FrontendError::new(pos, format!("procedure `{name}` is not declared in an enclosing block")));
                }
                let id = self.fresh(id, ConstructKind::Call);
                StmtKind::Call { id, name: name.clone(), ann: ann() }
            }
            RawKind::Decl { removal, .. } => {
                let what = if *removal { "removal" } else { "declaration" };
                return Err(FrontendError::new(
                    pos,
                    format!("{what} must appear at the {} of a block", if *removal { "end" } else { "start" }),
                ));
            }
        };
        Ok(Stmt::new(self.tag(s), kind))
    }

    fn lookup_proc(&self, name: &str) -> Option<&ConstructId> {
        self.scopes.iter().rev().find_map(|f| f.procs.get(name))
    }

    fn block_body(&mut self, raw: &RawProg, pa: &StmtPath, block: &ConstructId) -> Result<Program, FrontendError> {
        let items = raw.items();
        let is_decl = |p: &RawProg, rem: bool| {
            matches!(p, RawProg::Stmt(s) if matches!(&s.kind, RawKind::Decl { removal, .. } if *removal == rem))
        };
        let n_decl = items.iter().take_while(|p| is_decl(p, false)).count();
        let n_rem = items[n_decl..].iter().rev().take_while(|p| is_decl(p, true)).count();
        let decls: Vec<&RawStmt> = items[..n_decl].iter().map(|p| raw_stmt(p)).collect();
        let middle = &items[n_decl..items.len() - n_rem];
        let removals: Vec<&RawStmt> = items[items.len() - n_rem..].iter().map(|p| raw_stmt(p)).collect();

        // vars, then arrays, then procedures
        let rank = |d: &RawDecl| match d {
            RawDecl::Var { .. } => 0,
            RawDecl::Arr { .. } => 1,
            RawDecl::Proc { .. } => 2,
        };
        let mut last = 0;
        for d in &decls {
            let RawKind::Decl { item, .. } = &d.kind else { unreachable!() };
            if rank(item) < last {
                return Err(FrontendError::new(
                    d.pos,
                    "declarations in a block must list variables, then arrays, then procedures",
                ));
            }
            last = rank(item);
        }

        let ann = || Ann::new(pa.clone());
        let mut out: Vec<Program> = Vec::new();
        let mut mirror: Vec<(Site, StmtKind<()>)> = Vec::new();
        for d in &decls {
            let RawKind::Decl { item, .. } = &d.kind else { unreachable!() };
            let (decl, removal) = match item {
                RawDecl::Var { name, init } => {
                    self.check_expr(init, d.pos)?;
                    self.scopes.last_mut().unwrap().scalars.insert(name.clone());
                    let it = DeclItem::Var { name: name.clone(), init: init.clone() };
                    (it.clone(), it)
                }
                RawDecl::Arr { name, len } => {
                    self.scopes.last_mut().unwrap().arrays.insert(name.clone());
                    let it = DeclItem::Arr { name: name.clone(), len: *len };
                    (it.clone(), it)
                }
                RawDecl::Proc { id, name, body } => {
                    let id = self.fresh(id, ConstructKind::Proc);
                    // visible inside its own body, which allows recursion
                    self.scopes.last_mut().unwrap().procs.insert(name.clone(), id.clone());
                    let body = match body {
                        Some(b) => self.body(b, pa)?,
                        None => unreachable!("parser requires a body on declarations"),
                    };
                    (
                        DeclItem::Proc { id: id.clone(), name: name.clone(), body },
                        DeclItem::Proc { id, name: name.clone(), body: Prog::Empty },
                    )
                }
            };
            let site = self.tag(d);
            out.push(Prog::from_stmt(Stmt::new(site, StmtKind::Decl { removal: false, item: decl, ann: ann() })));
            mirror.push((Site(0), StmtKind::Decl { removal: true, item: removal, ann: ann() }));
        }

        let middle_raw = RawProg::Seq(middle.iter().map(|p| (*p).clone()).collect());
        let mid = self.prog(&middle_raw, pa)?;
        let empty_block = decls.is_empty() && mid.is_empty();
        out.push(mid);

        // explicit removals must mirror the declarations exactly
        if !removals.is_empty() {
            if removals.len() != mirror.len() {
                return Err(FrontendError::new(
                    removals[0].pos,
                    format!("block `{block}` declares {} names but removes {}", mirror.len(), removals.len()),
                ));
            }
            for (r, (_, want)) in removals.iter().zip(mirror.iter().rev()) {
                let RawKind::Decl { item, .. } = &r.kind else { unreachable!() };
                let StmtKind::Decl { item: want, .. } = want else { unreachable!() };
                let ok = match (item, want) {
                    (RawDecl::Var { name: a, .. }, DeclItem::Var { name: b, .. }) => a == b,
                    (RawDecl::Arr { name: a, len: n }, DeclItem::Arr { name: b, len: m }) => a == b && n == m,
                    (RawDecl::Proc { id, name: a, .. }, DeclItem::Proc { id: wid, name: b, .. }) => {
                        a == b && id.as_ref().is_none_or(|i| i == wid)
                    }
                    _ => false,
                };
                if !ok {
                    return Err(FrontendError::new(
                        r.pos,
                        format!("removals must undo the declarations of block `{block}` in reverse order"),
                    ));
                }
                if let RawDecl::Var { init, .. } = item {
                    self.check_expr(init, r.pos)?;
                }
            }
        }
        for (i, (site, kind)) in mirror.into_iter().rev().enumerate() {
            // keep a written removal expression, otherwise repeat the initialiser
            let kind = match (kind, removals.get(i)) {
                (
                    StmtKind::Decl { removal, item: DeclItem::Var { name, .. }, ann },
                    Some(RawStmt { kind: RawKind::Decl { item: RawDecl::Var { init, .. }, .. }, .. }),
                ) => StmtKind::Decl { removal, item: DeclItem::Var { name, init: init.clone() }, ann },
                (k, _) => k,
            };
            let site = match removals.get(i) {
                Some(r) => self.tag(r),
                None => site,
            };
            out.push(Prog::from_stmt(Stmt::new(site, kind)));
        }
        let body = Prog::seq(out);
        Ok(if empty_block { Prog::from_stmt(Stmt::skip(Site(0), None)) } else { body })
    }
}

fn raw_stmt(p: &RawProg) -> &RawStmt {
    match p {
        RawProg::Stmt(s) => s,
        _ => unreachable!(),
    }
}

fn check_self_reference(target: &Target, op: AssignOp, e: &Expr, pos: Pos) -> Result<(), FrontendError> {
    match (target, op) {
        (Target::Var(x), AssignOp::Add | AssignOp::Sub) if e.mentions(x) => Err(FrontendError::new(
            pos,
            format!("`{x} {} ...` may not read `{x}` on the right-hand side", op.symbol()),
        )),
        (Target::Elem(a, i), AssignOp::Add | AssignOp::Sub) if e.mentions(a) || i.mentions(a) => {
            Err(FrontendError::new(pos, format!("update of `{a}[...]` may not read `{a}`")))
        }
        (Target::Elem(a, i), AssignOp::Set) if i.mentions(a) => {
            Err(FrontendError::new(pos, format!("index of an assignment to `{a}` may not read `{a}`")))
        }
        _ => Ok(()),
    }
}

/// Copy each procedure body into the removal that mirrors its declaration.
fn fill_removal_bodies(p: &mut Program) {
    let mut todo: Vec<&mut Program> = vec![p];
    while let Some(p) = todo.pop() {
        match p {
            Prog::Empty => {}
            Prog::Seq(v) => todo.extend(v.iter_mut()),
            Prog::Par(l, r) => {
                todo.push(l);
                todo.push(r);
            }
            Prog::Stmt(s) => match &mut s.kind {
                StmtKind::Block { body, .. } => {
                    fill_block(body);
                    todo.push(body);
                }
                StmtKind::If { then_p, else_p, .. } => {
                    todo.push(then_p);
                    todo.push(else_p);
                }
                StmtKind::While { body, .. } | StmtKind::Runc { body, .. } => todo.push(body),
                _ => {}
            },
        }
    }
}

fn fill_block(body: &mut Program) {
    // inner blocks first so copied bodies are complete
    if let Prog::Seq(items) = body {
        for it in items.iter_mut() {
            if let Some(Stmt { kind: StmtKind::Decl { removal: false, item: DeclItem::Proc { body, .. }, .. }, .. }) =
                it.as_stmt_mut()
            {
                fill_removal_bodies(body);
            }
        }
        let decls: HashMap<ConstructId, Program> = items
            .iter()
            .filter_map(|it| match it.as_stmt().map(|s| &s.kind) {
                Some(StmtKind::Decl { removal: false, item: DeclItem::Proc { id, body, .. }, .. }) => {
                    Some((id.clone(), body.clone()))
                }
                _ => None,
            })
            .collect();
        for it in items.iter_mut() {
            if let Some(Stmt { kind: StmtKind::Decl { removal: true, item: DeclItem::Proc { id, body, .. }, .. }, .. }) =
                it.as_stmt_mut()
            {
                *body = decls[id].clone();
            }
        }
    }
}

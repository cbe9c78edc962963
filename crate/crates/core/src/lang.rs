//! Abstract syntax shared by original and annotated programs.
//!
//! A single tree type [`Prog`] is parameterised by the annotation carried on
//! evaluating statements: `()` for original programs and [`IdStack`] for
//! annotated ones. Conditionals and loops also store an evaluated-condition
//! marker so that intermediate configurations are ordinary trees.

use num_bigint::BigInt;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Interleaving identifier handed out by the sequencer.
pub type Ident = u64;

// ---------------------------------------------------------------------------
// Construct identifiers and paths
// ---------------------------------------------------------------------------

/// Name of a conditional, loop, block, procedure or call, e.g. `b2.1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstructId {
    pub base: String,
    pub version: u32,
}

impl ConstructId {
    pub fn new(base: impl Into<String>, version: u32) -> Self {
        ConstructId { base: base.into(), version }
    }

    pub fn with_version(&self, version: u32) -> Self {
        ConstructId { base: self.base.clone(), version }
    }

    pub fn kind(&self) -> Option<ConstructKind> {
        self.base.chars().next().and_then(ConstructKind::from_prefix)
    }
}

impl fmt::Display for ConstructId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.base, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed construct identifier `{0}`")]
pub struct BadConstructId(pub String);

impl FromStr for ConstructId {
    type Err = BadConstructId;

    /// Accepts `b2` (version 0) and `b2.3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadConstructId(s.to_string());
        let (base, version) = match s.split_once('.') {
            Some((b, v)) => (b, v.parse::<u32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let mut chars = base.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return Err(bad()),
        }
        if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(bad());
        }
        Ok(ConstructId::new(base, version))
    }
}

impl Serialize for ConstructId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConstructId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstructKind {
    Cond,
    While,
    Block,
    Proc,
    Call,
}

impl ConstructKind {
    pub fn prefix(self) -> char {
        match self {
            ConstructKind::Cond => 'i',
            ConstructKind::While => 'w',
            ConstructKind::Block => 'b',
            ConstructKind::Proc => 'p',
            ConstructKind::Call => 'c',
        }
    }

    pub fn from_prefix(c: char) -> Option<Self> {
        Some(match c {
            'i' => ConstructKind::Cond,
            'w' => ConstructKind::While,
            'b' => ConstructKind::Block,
            'p' => ConstructKind::Proc,
            'c' => ConstructKind::Call,
            _ => return None,
        })
    }
}

/// Enclosing block names, innermost first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StmtPath(pub Vec<ConstructId>);

impl StmtPath {
    pub fn head(&self) -> Option<&ConstructId> {
        self.0.first()
    }

    pub fn push_inner(&self, block: ConstructId) -> StmtPath {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(block);
        v.extend(self.0.iter().cloned());
        StmtPath(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConstructId> {
        self.0.iter()
    }
}

impl fmt::Display for StmtPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Identifier stacks
// ---------------------------------------------------------------------------

/// Identifier stack attached to an annotated statement.
///
/// Stored bottom first; the head is the most recent identifier. Serialized
/// head first as decimal strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct IdStack(Vec<Ident>);

impl IdStack {
    pub fn new() -> Self {
        IdStack(Vec::new())
    }

    /// Build from identifiers listed head first, as printed in listings.
    pub fn from_head_first(ids: &[Ident]) -> Self {
        IdStack(ids.iter().rev().copied().collect())
    }

    pub fn head(&self) -> Option<Ident> {
        self.0.last().copied()
    }

    pub fn push(&mut self, id: Ident) {
        self.0.push(id);
    }

    pub fn pop(&mut self) -> Option<Ident> {
        self.0.pop()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Identifiers head first.
    pub fn head_first(&self) -> impl Iterator<Item = Ident> + '_ {
        self.0.iter().rev().copied()
    }

    /// Strictly decreasing from head to bottom.
    pub fn is_well_ordered(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }
}

impl fmt::Display for IdStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("⟨")?;
        for (i, id) in self.head_first().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("⟩")
    }
}

impl Serialize for IdStack {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.head_first().map(|i| i.to_string()))
    }
}

impl<'de> Deserialize<'de> for IdStack {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        let mut ids = Vec::with_capacity(items.len());
        for s in items {
            ids.push(s.parse::<Ident>().map_err(serde::de::Error::custom)?);
        }
        Ok(IdStack::from_head_first(&ids))
    }
}

/// Annotation slot carried by evaluating statements.
pub trait Annot:
    Clone + fmt::Debug + PartialEq + Eq + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
    fn id_stack(&self) -> Option<&IdStack>;
    fn id_stack_mut(&mut self) -> Option<&mut IdStack>;
}

impl Annot for () {
    fn id_stack(&self) -> Option<&IdStack> {
        None
    }
    fn id_stack_mut(&mut self) -> Option<&mut IdStack> {
        None
    }
}

impl Annot for IdStack {
    fn id_stack(&self) -> Option<&IdStack> {
        Some(self)
    }
    fn id_stack_mut(&mut self) -> Option<&mut IdStack> {
        Some(self)
    }
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

pub(crate) mod big_dec {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Var(String),
    Lit(#[serde(with = "big_dec")] BigInt),
    Elem(String, Box<Expr>),
    Bin(Box<Expr>, ArithOp, Box<Expr>),
}

impl Expr {
    pub fn lit(n: i64) -> Expr {
        Expr::Lit(BigInt::from(n))
    }

    /// Does the expression read `name`, either as a variable or an array?
    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Var(x) => x == name,
            Expr::Lit(_) => false,
            Expr::Elem(a, i) => a == name || i.mentions(name),
            Expr::Bin(l, _, r) => l.mentions(name) || r.mentions(name),
        }
    }

    pub fn for_each_name(&self, f: &mut dyn FnMut(&str, bool)) {
        match self {
            Expr::Var(x) => f(x, false),
            Expr::Lit(_) => {}
            Expr::Elem(a, i) => {
                f(a, true);
                i.for_each_name(f);
            }
            Expr::Bin(l, _, r) => {
                l.for_each_name(f);
                r.for_each_name(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolExpr {
    True,
    False,
    Not(Box<BoolExpr>),
    Eq(Expr, Expr),
    Gt(Expr, Expr),
    /// `a < b`, evaluated as `b > a`.
    Lt(Expr, Expr),
    And(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn for_each_expr(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Not(b) => b.for_each_expr(f),
            BoolExpr::Eq(a, b) | BoolExpr::Gt(a, b) | BoolExpr::Lt(a, b) => {
                f(a);
                f(b);
            }
            BoolExpr::And(a, b) => {
                a.for_each_expr(f);
                b.for_each_expr(f);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Statements and programs
// ---------------------------------------------------------------------------

/// Static statement identity assigned by preprocessing, preorder.
///
/// Copies, renamings and inversion keep sites, so a statement in a loop copy
/// can be matched with its counterpart in the stored copy or in an inverted
/// body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub u32);

impl Site {
    /// Site of synthetic statements such as the skip left by a finished `par`.
    pub const NONE: Site = Site(u32::MAX);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Pending,
    True,
    False,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignOp {
    #[serde(rename = "=")]
    Set,
    #[serde(rename = "+=")]
    Add,
    #[serde(rename = "-=")]
    Sub,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Var(String),
    Elem(String, Expr),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Var(x) | Target::Elem(x, _) => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(bound = "A: Annot")]
pub struct Ann<A> {
    pub path: StmtPath,
    pub stack: A,
}

impl<A: Annot> Ann<A> {
    pub fn new(path: StmtPath) -> Self {
        Ann { path, stack: A::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "A: Annot")]
pub enum DeclItem<A> {
    Var { name: String, init: Expr },
    Arr { name: String, len: usize },
    Proc { id: ConstructId, name: String, body: Prog<A> },
}

impl<A> DeclItem<A> {
    pub fn name(&self) -> &str {
        match self {
            DeclItem::Var { name, .. } | DeclItem::Arr { name, .. } | DeclItem::Proc { name, .. } => {
                name
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "A: Annot")]
pub enum StmtKind<A> {
    Skip {
        stack: Option<A>,
    },
    Assign {
        target: Target,
        op: AssignOp,
        expr: Expr,
        ann: Ann<A>,
    },
    If {
        id: ConstructId,
        cond: BoolExpr,
        mark: Mark,
        then_p: Prog<A>,
        else_p: Prog<A>,
        ann: Ann<A>,
    },
    While {
        id: ConstructId,
        cond: BoolExpr,
        mark: Mark,
        body: Prog<A>,
        ann: Ann<A>,
    },
    Block {
        id: ConstructId,
        body: Prog<A>,
    },
    /// Declaration, or its removal when `removal` is set.
    Decl {
        removal: bool,
        item: DeclItem<A>,
        ann: Ann<A>,
    },
    Call {
        id: ConstructId,
        name: String,
        ann: Ann<A>,
    },
    /// Running call: the renamed body of the called procedure.
    Runc {
        id: ConstructId,
        name: String,
        body: Prog<A>,
        stack: A,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(bound = "A: Annot")]
pub struct Stmt<A> {
    pub site: Site,
    pub kind: StmtKind<A>,
}

impl<A: Annot> Stmt<A> {
    pub fn new(site: Site, kind: StmtKind<A>) -> Self {
        Stmt { site, kind }
    }

    pub fn skip(site: Site, stack: Option<A>) -> Self {
        Stmt { site, kind: StmtKind::Skip { stack } }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self.kind, StmtKind::Skip { .. })
    }

    /// Construct identifier owned by this statement, if any.
    pub fn construct_id(&self) -> Option<&ConstructId> {
        match &self.kind {
            StmtKind::If { id, .. }
            | StmtKind::While { id, .. }
            | StmtKind::Block { id, .. }
            | StmtKind::Call { id, .. }
            | StmtKind::Runc { id, .. } => Some(id),
            StmtKind::Decl { item: DeclItem::Proc { id, .. }, .. } => Some(id),
            _ => None,
        }
    }

    pub fn construct_id_mut(&mut self) -> Option<&mut ConstructId> {
        match &mut self.kind {
            StmtKind::If { id, .. }
            | StmtKind::While { id, .. }
            | StmtKind::Block { id, .. }
            | StmtKind::Call { id, .. }
            | StmtKind::Runc { id, .. } => Some(id),
            StmtKind::Decl { item: DeclItem::Proc { id, .. }, .. } => Some(id),
            _ => None,
        }
    }

    /// Annotation slot of the statement (the optional one for skip).
    pub fn stack(&self) -> Option<&A> {
        match &self.kind {
            StmtKind::Skip { stack } => stack.as_ref(),
            StmtKind::Block { .. } => None,
            StmtKind::Runc { stack, .. } => Some(stack),
            StmtKind::Assign { ann, .. }
            | StmtKind::If { ann, .. }
            | StmtKind::While { ann, .. }
            | StmtKind::Decl { ann, .. }
            | StmtKind::Call { ann, .. } => Some(&ann.stack),
        }
    }

    pub fn stack_mut(&mut self) -> Option<&mut A> {
        match &mut self.kind {
            StmtKind::Skip { stack } => stack.as_mut(),
            StmtKind::Block { .. } => None,
            StmtKind::Runc { stack, .. } => Some(stack),
            StmtKind::Assign { ann, .. }
            | StmtKind::If { ann, .. }
            | StmtKind::While { ann, .. }
            | StmtKind::Decl { ann, .. }
            | StmtKind::Call { ann, .. } => Some(&mut ann.stack),
        }
    }

    pub fn path(&self) -> Option<&StmtPath> {
        match &self.kind {
            StmtKind::Assign { ann, .. }
            | StmtKind::If { ann, .. }
            | StmtKind::While { ann, .. }
            | StmtKind::Decl { ann, .. }
            | StmtKind::Call { ann, .. } => Some(&ann.path),
            _ => None,
        }
    }

    fn path_mut(&mut self) -> Option<&mut StmtPath> {
        match &mut self.kind {
            StmtKind::Assign { ann, .. }
            | StmtKind::If { ann, .. }
            | StmtKind::While { ann, .. }
            | StmtKind::Decl { ann, .. }
            | StmtKind::Call { ann, .. } => Some(&mut ann.path),
            _ => None,
        }
    }

    /// Child programs. `deep` includes loop bodies, running call bodies and
    /// procedure bodies held by declarations.
    fn children(&self, deep: bool) -> Vec<&Prog<A>> {
        match &self.kind {
            StmtKind::If { then_p, else_p, .. } => vec![then_p, else_p],
            StmtKind::Block { body, .. } => vec![body],
            StmtKind::While { body, .. } | StmtKind::Runc { body, .. } if deep => vec![body],
            StmtKind::Decl { item: DeclItem::Proc { body, .. }, .. } if deep => vec![body],
            _ => vec![],
        }
    }

    fn children_mut(&mut self, deep: bool) -> Vec<&mut Prog<A>> {
        match &mut self.kind {
            StmtKind::If { then_p, else_p, .. } => vec![then_p, else_p],
            StmtKind::Block { body, .. } => vec![body],
            StmtKind::While { body, .. } | StmtKind::Runc { body, .. } if deep => vec![body],
            StmtKind::Decl { item: DeclItem::Proc { body, .. }, .. } if deep => vec![body],
            _ => vec![],
        }
    }

    pub fn map_annot<B: Annot>(&self, f: &mut dyn FnMut(&A) -> B) -> Stmt<B> {
        let ann = |a: &Ann<A>, f: &mut dyn FnMut(&A) -> B| Ann { path: a.path.clone(), stack: f(&a.stack) };
        let kind = match &self.kind {
            StmtKind::Skip { stack } => StmtKind::Skip { stack: stack.as_ref().map(&mut *f) },
            StmtKind::Assign { target, op, expr, ann: a } => StmtKind::Assign {
                target: target.clone(),
                op: *op,
                expr: expr.clone(),
                ann: ann(a, f),
            },
            StmtKind::If { id, cond, mark, then_p, else_p, ann: a } => StmtKind::If {
                id: id.clone(),
                cond: cond.clone(),
                mark: *mark,
                then_p: then_p.map_annot(f),
                else_p: else_p.map_annot(f),
                ann: ann(a, f),
            },
            StmtKind::While { id, cond, mark, body, ann: a } => StmtKind::While {
                id: id.clone(),
                cond: cond.clone(),
                mark: *mark,
                body: body.map_annot(f),
                ann: ann(a, f),
            },
            StmtKind::Block { id, body } => StmtKind::Block { id: id.clone(), body: body.map_annot(f) },
            StmtKind::Decl { removal, item, ann: a } => StmtKind::Decl {
                removal: *removal,
                item: match item {
                    DeclItem::Var { name, init } => DeclItem::Var { name: name.clone(), init: init.clone() },
                    DeclItem::Arr { name, len } => DeclItem::Arr { name: name.clone(), len: *len },
                    DeclItem::Proc { id, name, body } => DeclItem::Proc {
                        id: id.clone(),
                        name: name.clone(),
                        body: body.map_annot(f),
                    },
                },
                ann: ann(a, f),
            },
            StmtKind::Call { id, name, ann: a } => StmtKind::Call {
                id: id.clone(),
                name: name.clone(),
                ann: ann(a, f),
            },
            StmtKind::Runc { id, name, body, stack } => StmtKind::Runc {
                id: id.clone(),
                name: name.clone(),
                body: body.map_annot(f),
                stack: f(stack),
            },
        };
        Stmt { site: self.site, kind }
    }
}

/// `P ::= ε | S | P;P | P par P`.
///
/// Sequences are kept flat: a `Seq` holds at least two items, none of which
/// is `Empty` or another `Seq`. Use [`Prog::seq`] to build one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "A: Annot")]
pub enum Prog<A> {
    Empty,
    Stmt(Box<Stmt<A>>),
    Seq(Vec<Prog<A>>),
    Par(Box<Prog<A>>, Box<Prog<A>>),
}

/// Original (unannotated) program.
pub type Program = Prog<()>;
/// Annotated program: every evaluating statement carries an identifier stack.
pub type AnnotatedProgram = Prog<IdStack>;

impl<A: Annot> Prog<A> {
    pub fn from_stmt(s: Stmt<A>) -> Self {
        Prog::Stmt(Box::new(s))
    }

    pub fn par(l: Prog<A>, r: Prog<A>) -> Self {
        Prog::Par(Box::new(l), Box::new(r))
    }

    /// Flattening sequence constructor.
    pub fn seq(items: Vec<Prog<A>>) -> Self {
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            match it {
                Prog::Empty => {}
                Prog::Seq(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Prog::Empty,
            1 => out.pop().unwrap(),
            _ => Prog::Seq(out),
        }
    }

    /// Items of a sequence; a non-sequence is a one-item list.
    pub fn items(&self) -> Vec<&Prog<A>> {
        match self {
            Prog::Empty => vec![],
            Prog::Seq(v) => v.iter().collect(),
            other => vec![other],
        }
    }

    pub fn into_items(self) -> Vec<Prog<A>> {
        match self {
            Prog::Empty => vec![],
            Prog::Seq(v) => v,
            other => vec![other],
        }
    }

    pub fn as_stmt(&self) -> Option<&Stmt<A>> {
        match self {
            Prog::Stmt(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_stmt_mut(&mut self) -> Option<&mut Stmt<A>> {
        match self {
            Prog::Stmt(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, Prog::Stmt(s) if s.is_skip())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Prog::Empty)
    }

    pub fn map_annot<B: Annot>(&self, f: &mut dyn FnMut(&A) -> B) -> Prog<B> {
        match self {
            Prog::Empty => Prog::Empty,
            Prog::Stmt(s) => Prog::Stmt(Box::new(s.map_annot(f))),
            Prog::Seq(v) => Prog::Seq(v.iter().map(|p| p.map_annot(f)).collect()),
            Prog::Par(l, r) => Prog::Par(Box::new(l.map_annot(f)), Box::new(r.map_annot(f))),
        }
    }

    /// Visit statements in preorder, left first. With `deep == false` the walk
    /// stays inside the current copy: loop bodies, running call bodies and
    /// procedure bodies are not entered (the owning statement is visited).
    pub fn for_each_stmt<'a>(&'a self, deep: bool, f: &mut dyn FnMut(&'a Stmt<A>)) {
        match self {
            Prog::Empty => {}
            Prog::Stmt(s) => {
                f(s);
                for c in s.children(deep) {
                    c.for_each_stmt(deep, f);
                }
            }
            Prog::Seq(v) => v.iter().for_each(|p| p.for_each_stmt(deep, f)),
            Prog::Par(l, r) => {
                l.for_each_stmt(deep, f);
                r.for_each_stmt(deep, f);
            }
        }
    }

    pub fn for_each_stmt_mut(&mut self, deep: bool, f: &mut dyn FnMut(&mut Stmt<A>)) {
        match self {
            Prog::Empty => {}
            Prog::Stmt(s) => {
                f(s);
                for c in s.children_mut(deep) {
                    c.for_each_stmt_mut(deep, f);
                }
            }
            Prog::Seq(v) => v.iter_mut().for_each(|p| p.for_each_stmt_mut(deep, f)),
            Prog::Par(l, r) => {
                l.for_each_stmt_mut(deep, f);
                r.for_each_stmt_mut(deep, f);
            }
        }
    }

    /// Rewrite every construct identifier and every path entry through `f`.
    pub fn rename_all(&mut self, f: &dyn Fn(&ConstructId) -> Option<ConstructId>) {
        self.for_each_stmt_mut(true, &mut |s| {
            if let Some(id) = s.construct_id_mut() {
                if let Some(n) = f(id) {
                    *id = n;
                }
            }
            if let Some(p) = s.path_mut() {
                for b in p.0.iter_mut() {
                    if let Some(n) = f(b) {
                        *b = n;
                    }
                }
            }
        });
    }

    /// Every construct identifier in the tree, preorder, including loop and
    /// procedure bodies.
    pub fn construct_ids(&self) -> Vec<ConstructId> {
        let mut out = Vec::new();
        self.for_each_stmt(true, &mut |s| {
            if let Some(id) = s.construct_id() {
                out.push(id.clone());
            }
        });
        out
    }

    pub fn count_stmts(&self) -> usize {
        let mut n = 0;
        self.for_each_stmt(true, &mut |_| n += 1);
        n
    }
}

/// Strip identifier stacks and clear evaluated-condition markers.
pub fn erase_annotations<A: Annot>(ap: &Prog<A>) -> Program {
    let mut p = ap.map_annot(&mut |_| ());
    p.for_each_stmt_mut(true, &mut |s| match &mut s.kind {
        StmtKind::If { mark, .. } | StmtKind::While { mark, .. } => *mark = Mark::Pending,
        StmtKind::Skip { stack } => *stack = None,
        _ => {}
    });
    p
}

/// Full structural equality, stacks, paths and identifiers included.
pub fn structural_eq<A: Annot>(a: &Prog<A>, b: &Prog<A>) -> bool {
    a == b
}

// ---------------------------------------------------------------------------
// Addresses inside a program
// ---------------------------------------------------------------------------

/// One step from a program node towards a redex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathStep {
    Item(usize),
    Left,
    Right,
    Then,
    Else,
    Body,
}

/// Position of a redex, from the program root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RedexPath(pub Vec<PathStep>);

impl RedexPath {
    pub fn child(&self, step: PathStep) -> RedexPath {
        let mut v = self.0.clone();
        v.push(step);
        RedexPath(v)
    }
}

impl fmt::Display for RedexPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("/")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match s {
                PathStep::Item(n) => write!(f, "{n}")?,
                PathStep::Left => f.write_str("L")?,
                PathStep::Right => f.write_str("R")?,
                PathStep::Then => f.write_str("then")?,
                PathStep::Else => f.write_str("else")?,
                PathStep::Body => f.write_str("body")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed redex path `{0}`")]
pub struct BadRedexPath(pub String);

impl FromStr for RedexPath {
    type Err = BadRedexPath;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s.strip_prefix('/').ok_or_else(|| BadRedexPath(s.to_string()))?;
        let mut steps = Vec::new();
        if rest.is_empty() {
            return Ok(RedexPath(steps));
        }
        for part in rest.split('/') {
            steps.push(match part {
                "L" => PathStep::Left,
                "R" => PathStep::Right,
                "then" => PathStep::Then,
                "else" => PathStep::Else,
                "body" => PathStep::Body,
                n => PathStep::Item(n.parse().map_err(|_| BadRedexPath(s.to_string()))?),
            });
        }
        Ok(RedexPath(steps))
    }
}

impl Serialize for RedexPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RedexPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construct_id_parsing() {
        assert_eq!("b2".parse::<ConstructId>().unwrap(), ConstructId::new("b2", 0));
        assert_eq!("w1.3".parse::<ConstructId>().unwrap(), ConstructId::new("w1", 3));
        assert_eq!(ConstructId::new("b2", 1).to_string(), "b2.1");
        assert!("2b".parse::<ConstructId>().is_err());
        assert!("b2.x".parse::<ConstructId>().is_err());
    }

    #[test]
    fn stack_order() {
        let s = IdStack::from_head_first(&[35, 10]);
        assert_eq!(s.head(), Some(35));
        assert!(s.is_well_ordered());
        assert_eq!(s.to_string(), "⟨35,10⟩");
        let bad = IdStack::from_head_first(&[3, 10]);
        assert!(!bad.is_well_ordered());
    }

    #[test]
    fn seq_flattens() {
        let sk = |n| Prog::<()>::from_stmt(Stmt::skip(Site(n), None));
        let p = Prog::seq(vec![Prog::Empty, Prog::seq(vec![sk(1), sk(2)]), sk(3)]);
        assert_eq!(p.items().len(), 3);
        assert_eq!(Prog::<()>::seq(vec![Prog::Empty]), Prog::Empty);
        assert_eq!(Prog::seq(vec![sk(4)]), sk(4));
    }

    #[test]
    fn redex_path_round_trip() {
        let p = RedexPath(vec![PathStep::Body, PathStep::Item(0), PathStep::Left, PathStep::Then]);
        let s = p.to_string();
        assert_eq!(s, "/body/0/L/then");
        assert_eq!(s.parse::<RedexPath>().unwrap(), p);
        assert_eq!("/".parse::<RedexPath>().unwrap(), RedexPath::default());
    }

    #[test]
    fn erase_skip() {
        let p: AnnotatedProgram = Prog::from_stmt(Stmt::skip(Site(0), Some(IdStack::new())));
        assert_eq!(erase_annotations(&p), Prog::from_stmt(Stmt::skip(Site(0), None)));
    }
}

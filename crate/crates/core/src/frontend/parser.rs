use super::lexer::{lex, Tok, Token};
use super::{FrontendError, Pos};
use crate::lang::{ArithOp, AssignOp, BoolExpr, ConstructId, ConstructKind, Expr, Target};
use num_bigint::BigInt;
use std::collections::HashSet;

/// Surface program as written: optional construct names, no paths, no
/// inserted removals.
#[derive(Clone, Debug, PartialEq)]
pub enum RawProg {
    Empty,
    Stmt(Box<RawStmt>),
    Seq(Vec<RawProg>),
    Par(Box<RawProg>, Box<RawProg>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawStmt {
    pub pos: Pos,
    pub kind: RawKind,
    /// Written identifier stack, head first (annotated sources only).
    pub stack: Option<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawKind {
    Skip,
    Assign { target: Target, op: AssignOp, expr: Expr },
    If { id: Option<ConstructId>, cond: BoolExpr, then_p: RawProg, else_p: Option<RawProg> },
    While { id: Option<ConstructId>, cond: BoolExpr, body: RawProg },
    Block { id: Option<ConstructId>, body: RawProg },
    Decl { removal: bool, item: RawDecl },
    Call { id: Option<ConstructId>, name: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawDecl {
    Var { name: String, init: Expr },
    Arr { name: String, len: usize },
    Proc { id: Option<ConstructId>, name: String, body: Option<RawProg> },
}

impl RawDecl {
    pub fn name(&self) -> &str {
        match self {
            RawDecl::Var { name, .. } | RawDecl::Arr { name, .. } | RawDecl::Proc { name, .. } => name,
        }
    }
}

impl RawProg {
    fn seq(mut items: Vec<RawProg>) -> RawProg {
        match items.len() {
            0 => RawProg::Empty,
            1 => items.pop().unwrap(),
            _ => RawProg::Seq(items),
        }
    }

    pub fn items(&self) -> Vec<&RawProg> {
        match self {
            RawProg::Empty => vec![],
            RawProg::Seq(v) => v.iter().collect(),
            other => vec![other],
        }
    }
}

const KEYWORDS: &[&str] = &[
    "begin", "end", "var", "arr", "proc", "remove", "call", "if", "then", "else", "while", "do", "par",
    "skip", "is", "T", "F", "runc", "abort",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parse surface source text.
pub fn parse(source: &str) -> Result<RawProg, FrontendError> {
    parse_with(source, false)
}

/// Parse source whose statements may be followed by identifier stacks.
pub fn parse_with_stacks(source: &str) -> Result<RawProg, FrontendError> {
    parse_with(source, true)
}

fn parse_with(source: &str, annotated: bool) -> Result<RawProg, FrontendError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, i: 0, annotated };
    let prog = p.seq()?;
    if !p.at(&Tok::Eof) {
        return Err(p.unexpected("a statement separator"));
    }
    Ok(prog)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    annotated: bool,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> FrontendError {
        FrontendError::new(self.pos(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, t: Tok) -> Result<(), FrontendError> {
        if self.at(&t) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&t.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), FrontendError> {
        if self.at_kw(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn nat(&mut self) -> Result<usize, FrontendError> {
        let pos = self.pos();
        match self.advance() {
            Tok::Int(n) => {
                usize::try_from(&n).map_err(|_| FrontendError::new(pos, "array length out of range"))
            }
            t => Err(FrontendError::new(pos, format!("expected an array length, found {}", t.describe()))),
        }
    }

    fn seq_ends(&self) -> bool {
        matches!(self.peek(), Tok::Eof | Tok::RBrace) || self.at_kw("end") || self.at_kw("else")
    }

    fn seq(&mut self) -> Result<RawProg, FrontendError> {
        let mut items = Vec::new();
        while !self.seq_ends() {
            items.push(self.par_unit()?);
            if self.at(&Tok::Semi) {
                self.advance();
            } else {
                break;
            }
        }
        Ok(RawProg::seq(items))
    }

    fn par_unit(&mut self) -> Result<RawProg, FrontendError> {
        let mut left = self.unit()?;
        while self.at_kw("par") {
            self.advance();
            let right = self.unit()?;
            left = RawProg::Par(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn braced(&mut self) -> Result<RawProg, FrontendError> {
        self.expect(Tok::LBrace)?;
        let p = self.seq()?;
        self.expect(Tok::RBrace)?;
        Ok(p)
    }

    fn unit(&mut self) -> Result<RawProg, FrontendError> {
        if self.at(&Tok::LBrace) {
            return self.braced();
        }
        if self.at_kw("par") {
            self.advance();
            let l = self.braced()?;
            let r = self.braced()?;
            return Ok(RawProg::Par(Box::new(l), Box::new(r)));
        }
        Ok(RawProg::Stmt(Box::new(self.stmt()?)))
    }

    /// Optional construct name after `if`/`while`/`begin`. `starts` tells
    /// whether the token following a bare name begins the construct's
    /// payload, which is what distinguishes a name from a variable.
    fn opt_cid(&mut self, starts: fn(&Tok, &Tok) -> bool) -> Option<ConstructId> {
        match self.peek().clone() {
            Tok::Dotted(b, v) => {
                self.advance();
                Some(ConstructId::new(b, v))
            }
            Tok::Ident(s) if !is_keyword(&s) && starts(self.peek_at(1), self.peek_at(2)) => {
                // `if Z - 1 > 0` reads Z as an operand unless Z names a construct
                let named = matches!(ConstructId::new(s.clone(), 0).kind(), Some(ConstructKind::Cond | ConstructKind::While));
                if self.peek_at(1) == &Tok::Minus && !named {
                    return None;
                }
                self.advance();
                Some(ConstructId::new(s, 0))
            }
            _ => None,
        }
    }

    /// `proc`/`call` take a name, optionally preceded by a construct name.
    fn opt_cid_before_name(&mut self) -> Option<ConstructId> {
        match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::Dotted(b, v), _) => {
                self.advance();
                Some(ConstructId::new(b, v))
            }
            (Tok::Ident(a), Tok::Ident(b)) if !is_keyword(&a) && !is_keyword(&b) => {
                self.advance();
                Some(ConstructId::new(a, 0))
            }
            _ => None,
        }
    }

    fn stmt(&mut self) -> Result<RawStmt, FrontendError> {
        let pos = self.pos();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("a statement")),
        };
        let kind = match word.as_str() {
            "skip" => {
                self.advance();
                RawKind::Skip
            }
            "if" => {
                self.advance();
                let id = self.opt_cid(begins_cond);
                let cond = self.bexpr()?;
                self.expect_kw("then")?;
                let then_p = self.seq()?;
                let else_p = if self.at_kw("else") {
                    self.advance();
                    Some(self.seq()?)
                } else {
                    None
                };
                self.expect_kw("end")?;
                RawKind::If { id, cond, then_p, else_p }
            }
            "while" => {
                self.advance();
                let id = self.opt_cid(begins_cond);
                let cond = self.bexpr()?;
                self.expect_kw("do")?;
                let body = self.seq()?;
                self.expect_kw("end")?;
                RawKind::While { id, cond, body }
            }
            "begin" => {
                self.advance();
                let id = self.opt_cid(begins_block_body);
                let body = self.seq()?;
                self.expect_kw("end")?;
                check_duplicate_decls(&body)?;
                RawKind::Block { id, body }
            }
            "var" | "arr" | "proc" => RawKind::Decl { removal: false, item: self.decl_item(false)? },
            "remove" => {
                self.advance();
                RawKind::Decl { removal: true, item: self.decl_item(true)? }
            }
            "call" => {
                self.advance();
                let id = self.opt_cid_before_name();
                let name = self.ident()?;
                RawKind::Call { id, name }
            }
            "runc" | "abort" => {
                return Err(FrontendError::new(pos, format!("`{word}` may not appear in a source program")))
            }
            w if is_keyword(w) => return Err(self.unexpected("a statement")),
            _ => self.assignment()?,
        };
        let stack = match self.peek().clone() {
            Tok::Stack(ids) => {
                if !self.annotated {
                    return Err(self.unexpected("`;` or the end of the statement"));
                }
                if matches!(kind, RawKind::Block { .. }) {
                    return Err(FrontendError::new(self.pos(), "blocks carry no identifier stack"));
                }
                self.advance();
                Some(ids)
            }
            _ => None,
        };
        Ok(RawStmt { pos, kind, stack })
    }

    fn decl_item(&mut self, removal: bool) -> Result<RawDecl, FrontendError> {
        if self.at_kw("arr") {
            self.advance();
            self.expect(Tok::LBrack)?;
            let pos = self.pos();
            let len = self.nat()?;
            if len == 0 {
                return Err(FrontendError::new(pos, "arrays must have at least one element"));
            }
            self.expect(Tok::RBrack)?;
            let name = self.ident()?;
            return Ok(RawDecl::Arr { name, len });
        }
        if self.at_kw("proc") {
            self.advance();
            let id = self.opt_cid_before_name();
            let name = self.ident()?;
            let body = if removal {
                if self.at_kw("is") {
                    return Err(self.unexpected("the end of the removal (its body is implied)"));
                }
                None
            } else {
                self.expect_kw("is")?;
                let b = self.seq()?;
                self.expect_kw("end")?;
                Some(b)
            };
            return Ok(RawDecl::Proc { id, name, body });
        }
        if !removal {
            self.expect_kw("var")?;
        } else if self.at_kw("var") {
            self.advance();
        }
        let name = self.ident()?;
        self.expect(Tok::Assign)?;
        let init = self.expr()?;
        Ok(RawDecl::Var { name, init })
    }

    fn assignment(&mut self) -> Result<RawKind, FrontendError> {
        let name = self.ident()?;
        let target = if self.at(&Tok::LBrack) {
            self.advance();
            let idx = self.expr()?;
            self.expect(Tok::RBrack)?;
            Target::Elem(name, idx)
        } else {
            Target::Var(name)
        };
        let op = match self.peek() {
            Tok::Assign => AssignOp::Set,
            Tok::AddAssign => AssignOp::Add,
            Tok::SubAssign => AssignOp::Sub,
            _ => return Err(self.unexpected("`=`, `+=` or `-=`")),
        };
        self.advance();
        let expr = self.expr()?;
        Ok(RawKind::Assign { target, op, expr })
    }

    // -- boolean expressions ------------------------------------------------

    fn bexpr(&mut self) -> Result<BoolExpr, FrontendError> {
        let mut left = self.bnot()?;
        while self.at(&Tok::And) {
            self.advance();
            let right = self.bnot()?;
            left = BoolExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn bnot(&mut self) -> Result<BoolExpr, FrontendError> {
        if self.at(&Tok::Not) {
            self.advance();
            return Ok(BoolExpr::Not(Box::new(self.bnot()?)));
        }
        self.batom()
    }

    fn batom(&mut self) -> Result<BoolExpr, FrontendError> {
        if self.at_kw("T") {
            self.advance();
            return Ok(BoolExpr::True);
        }
        if self.at_kw("F") {
            self.advance();
            return Ok(BoolExpr::False);
        }
        if self.at(&Tok::LParen) {
            // A parenthesis opens either a boolean or an arithmetic operand
            // of a comparison; try the boolean reading first.
            let save = self.i;
            self.advance();
            if let Ok(b) = self.bexpr() {
                if self.at(&Tok::RParen) {
                    self.advance();
                    if !is_comparison_or_arith(self.peek()) {
                        return Ok(b);
                    }
                }
            }
            self.i = save;
        }
        let lhs = self.expr()?;
        let op = self.advance();
        let rhs = self.expr()?;
        Ok(match op {
            Tok::EqEq => BoolExpr::Eq(lhs, rhs),
            Tok::Gt => BoolExpr::Gt(lhs, rhs),
            Tok::Lt => BoolExpr::Lt(lhs, rhs),
            t => {
                self.i -= 1;
                return Err(FrontendError::new(
                    self.pos(),
                    format!("expected a comparison, found {}", t.describe()),
                ));
            }
        })
    }

    // -- arithmetic ---------------------------------------------------------

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.term()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, FrontendError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::Lit(n))
            }
            Tok::Minus => {
                self.advance();
                match self.advance() {
                    Tok::Int(n) => Ok(Expr::Lit(-n)),
                    _ => {
                        self.i -= 1;
                        Err(self.unexpected("an integer literal after `-`"))
                    }
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.advance();
                if self.at(&Tok::LBrack) {
                    self.advance();
                    let idx = self.expr()?;
                    self.expect(Tok::RBrack)?;
                    Ok(Expr::Elem(s, Box::new(idx)))
                } else {
                    Ok(Expr::Var(s))
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

fn is_comparison_or_arith(t: &Tok) -> bool {
    matches!(t, Tok::EqEq | Tok::Gt | Tok::Lt | Tok::Plus | Tok::Minus)
}

/// After `if NAME` / `while NAME`: does the next token start a condition?
fn begins_cond(t: &Tok, _after: &Tok) -> bool {
    match t {
        Tok::LParen | Tok::Not | Tok::Int(_) | Tok::Minus | Tok::Dotted(..) => true,
        Tok::Ident(s) => s == "T" || s == "F" || !is_keyword(s),
        _ => false,
    }
}

/// After `begin NAME`: is NAME a block name rather than an assignment target?
fn begins_block_body(t: &Tok, _after: &Tok) -> bool {
    !matches!(t, Tok::Assign | Tok::AddAssign | Tok::SubAssign | Tok::LBrack)
}

fn check_duplicate_decls(body: &RawProg) -> Result<(), FrontendError> {
    let mut vars = HashSet::new();
    let mut procs = HashSet::new();
    for it in body.items() {
        let RawProg::Stmt(st) = it else { continue };
        if let RawStmt { pos, kind: RawKind::Decl { removal: false, item }, .. } = &**st {
            let fresh = match item {
                RawDecl::Proc { name, .. } => procs.insert(name.clone()),
                other => vars.insert(other.name().to_string()),
            };
            if !fresh {
                return Err(FrontendError::new(
                    *pos,
                    format!("`{}` is declared twice in the same block", item.name()),
                ));
            }
        }
    }
    Ok(())
}

/// Integer literal helper for tests and generators.
pub fn lit(n: i64) -> Expr {
    Expr::Lit(BigInt::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(src: &str) -> RawKind {
        match parse(src).unwrap() {
            RawProg::Stmt(s) => s.kind,
            other => panic!("not a single statement: {other:?}"),
        }
    }

    #[test]
    fn assignment_forms() {
        assert_eq!(
            one("X = 5"),
            RawKind::Assign { target: Target::Var("X".into()), op: AssignOp::Set, expr: lit(5) }
        );
        assert!(matches!(one("l[1] -= X + -2"), RawKind::Assign { op: AssignOp::Sub, .. }));
        assert_eq!(parse("").unwrap(), RawProg::Empty);
        assert_eq!(parse("// nothing\n").unwrap(), RawProg::Empty);
    }

    #[test]
    fn construct_names() {
        match one("if i2.0 (l[0] > l[1]) then skip end") {
            RawKind::If { id, else_p, .. } => {
                assert_eq!(id, Some(ConstructId::new("i2", 0)));
                assert!(else_p.is_none());
            }
            k => panic!("{k:?}"),
        }
        match one("if x > 3 then skip end") {
            RawKind::If { id, .. } => assert_eq!(id, None),
            k => panic!("{k:?}"),
        }
        match one("while w1 (c > 0) do c -= 1 end") {
            RawKind::While { id, .. } => assert_eq!(id, Some(ConstructId::new("w1", 0))),
            k => panic!("{k:?}"),
        }
        match one("begin b1 x = 1 end") {
            RawKind::Block { id, .. } => assert_eq!(id, Some(ConstructId::new("b1", 0))),
            k => panic!("{k:?}"),
        }
        match one("begin x = 1 end") {
            RawKind::Block { id, .. } => assert_eq!(id, None),
            k => panic!("{k:?}"),
        }
        match one("call c3 f") {
            RawKind::Call { id, name } => {
                assert_eq!(id, Some(ConstructId::new("c3", 0)));
                assert_eq!(name, "f");
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn parallel_forms() {
        let infix = parse("X = 3 par X = 5").unwrap();
        let braced = parse("par { X = 3 } { X = 5 }").unwrap();
        assert!(matches!(infix, RawProg::Par(..)));
        // positions differ, shapes agree
        match (infix, braced) {
            (RawProg::Par(a, b), RawProg::Par(c, d)) => {
                assert!(matches!((*a, *c), (RawProg::Stmt(_), RawProg::Stmt(_))));
                assert!(matches!((*b, *d), (RawProg::Stmt(_), RawProg::Stmt(_))));
            }
            _ => unreachable!(),
        }
        let p = parse("a = 1; b = 2 par c = 3; d = 4").unwrap();
        assert_eq!(p.items().len(), 3);
    }

    #[test]
    fn booleans() {
        match one("if ((a + 1) > b and not (c == 2)) then skip end") {
            RawKind::If { cond: BoolExpr::And(l, r), .. } => {
                assert!(matches!(*l, BoolExpr::Gt(..)));
                assert!(matches!(*r, BoolExpr::Not(_)));
            }
            k => panic!("{k:?}"),
        }
        assert!(matches!(one("while (count < 4) do skip end"), RawKind::While { cond: BoolExpr::Lt(..), .. }));
        assert!(matches!(one("if Z - 5 == 2 then skip end"), RawKind::If { id: None, .. }));
        assert!(matches!(one("if i4 -1 < X then skip end"), RawKind::If { id: Some(_), .. }));
    }

    #[test]
    fn rejects() {
        assert!(parse("runc c1 skip end").is_err());
        assert!(parse("abort").is_err());
        let e = parse("begin var x = 1; var x = 2; skip end").unwrap_err();
        assert!(e.to_string().contains("declared twice"));
        let e = parse("x = ").unwrap_err();
        assert_eq!(e.pos, Some(Pos { line: 1, col: 5 }));
        assert!(parse("X = 5 Y = 3").is_err());
    }
}

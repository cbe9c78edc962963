//! Surface printing of programs.
//!
//! Programs that have not started print back as parseable source; with
//! `stacks` on, the identifier stacks follow each statement in the form
//! accepted by `parse_annotated`. Statements part-way through execution
//! print with their state in trailing comments, and running calls as
//! `runc`, which does not parse.

use crate::lang::{
    Annot, ArithOp, BoolExpr, DeclItem, Expr, Mark, PathStep, Prog, RedexPath, Stmt, StmtKind, Target,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Byte range in the printed text, with 1-based first and last lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub end_line: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Printed {
    pub text: String,
    /// Every program node, by its position.
    pub spans: BTreeMap<RedexPath, Span>,
}

pub fn print<A: Annot>(p: &Prog<A>, stacks: bool) -> Printed {
    let mut pr = Printer { out: String::new(), stacks, spans: BTreeMap::new(), indent: 0 };
    if !p.is_empty() {
        pr.prog(p, &RedexPath::default());
        pr.out.push('\n');
    }
    Printed { text: pr.out, spans: pr.spans }
}

pub fn program_text<A: Annot>(p: &Prog<A>) -> String {
    print(p, false).text
}

pub fn expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

pub fn cond(b: &BoolExpr) -> String {
    let mut s = String::new();
    write_bool(&mut s, b);
    s
}

fn write_expr(s: &mut String, e: &Expr) {
    match e {
        Expr::Var(x) => s.push_str(x),
        Expr::Lit(n) => {
            let _ = write!(s, "{n}");
        }
        Expr::Elem(a, i) => {
            s.push_str(a);
            s.push('[');
            write_expr(s, i);
            s.push(']');
        }
        Expr::Bin(l, op, r) => {
            write_expr(s, l);
            s.push_str(match op {
                ArithOp::Add => " + ",
                ArithOp::Sub => " - ",
            });
            if matches!(**r, Expr::Bin(..)) {
                s.push('(');
                write_expr(s, r);
                s.push(')');
            } else {
                write_expr(s, r);
            }
        }
    }
}

fn write_bool(s: &mut String, b: &BoolExpr) {
    match b {
        BoolExpr::True => s.push('T'),
        BoolExpr::False => s.push('F'),
        BoolExpr::Not(x) => {
            s.push_str("not ");
            if matches!(**x, BoolExpr::And(..)) {
                s.push('(');
                write_bool(s, x);
                s.push(')');
            } else {
                write_bool(s, x);
            }
        }
        BoolExpr::Eq(a, c) | BoolExpr::Gt(a, c) | BoolExpr::Lt(a, c) => {
            write_expr(s, a);
            s.push_str(match b {
                BoolExpr::Eq(..) => " == ",
                BoolExpr::Gt(..) => " > ",
                _ => " < ",
            });
            write_expr(s, c);
        }
        BoolExpr::And(l, r) => {
            write_bool(s, l);
            s.push_str(" and ");
            if matches!(**r, BoolExpr::And(..)) {
                s.push('(');
                write_bool(s, r);
                s.push(')');
            } else {
                write_bool(s, r);
            }
        }
    }
}

struct Printer {
    out: String,
    stacks: bool,
    spans: BTreeMap<RedexPath, Span>,
    indent: usize,
}

impl Printer {
    fn line(&self) -> u32 {
        1 + self.out.matches('\n').count() as u32
    }

    fn newline(&mut self) {
        self.out.push('\n');
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn prog<A: Annot>(&mut self, p: &Prog<A>, at: &RedexPath) {
        let (start, line) = (self.out.len(), self.line());
        match p {
            Prog::Empty => self.out.push_str("skip"),
            Prog::Stmt(s) => self.stmt(s, at),
            Prog::Seq(items) => {
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        self.out.push(';');
                        self.newline();
                    }
                    self.prog(it, &at.child(PathStep::Item(i)));
                }
            }
            Prog::Par(l, r) => {
                self.out.push_str("par {");
                self.nested(l, &at.child(PathStep::Left));
                self.out.push_str("} {");
                self.nested(r, &at.child(PathStep::Right));
                self.out.push('}');
            }
        }
        let span = Span { start, end: self.out.len(), line, end_line: self.line() };
        self.spans.insert(at.clone(), span);
    }

    fn nested<A: Annot>(&mut self, p: &Prog<A>, at: &RedexPath) {
        self.indent += 1;
        self.newline();
        self.prog(p, at);
        self.indent -= 1;
        self.newline();
    }

    fn stack<A: Annot>(&mut self, a: Option<&A>) {
        if !self.stacks {
            return;
        }
        if let Some(st) = a.and_then(Annot::id_stack) {
            let _ = write!(self.out, " {st}");
        }
    }

    fn mark(&mut self, m: Mark) {
        match m {
            Mark::Pending => {}
            Mark::True => self.out.push_str(" // T"),
            Mark::False => self.out.push_str(" // F"),
        }
    }

    fn stmt<A: Annot>(&mut self, s: &Stmt<A>, at: &RedexPath) {
        match &s.kind {
            StmtKind::Skip { stack } => {
                self.out.push_str("skip");
                self.stack(stack.as_ref());
            }
            StmtKind::Assign { target, op, expr, ann } => {
                match target {
                    Target::Var(x) => self.out.push_str(x),
                    Target::Elem(a, i) => {
                        self.out.push_str(a);
                        self.out.push('[');
                        write_expr(&mut self.out, i);
                        self.out.push(']');
                    }
                }
                let _ = write!(self.out, " {} ", op.symbol());
                write_expr(&mut self.out, expr);
                self.stack(Some(&ann.stack));
            }
            StmtKind::If { id, cond, mark, then_p, else_p, ann } => {
                let _ = write!(self.out, "if {id} (");
                write_bool(&mut self.out, cond);
                self.out.push_str(") then");
                self.mark(*mark);
                self.nested(then_p, &at.child(PathStep::Then));
                self.out.push_str("else");
                self.nested(else_p, &at.child(PathStep::Else));
                self.out.push_str("end");
                self.stack(Some(&ann.stack));
            }
            StmtKind::While { id, cond, mark, body, ann } => {
                let _ = write!(self.out, "while {id} (");
                write_bool(&mut self.out, cond);
                self.out.push_str(") do");
                self.mark(*mark);
                self.nested(body, &at.child(PathStep::Body));
                self.out.push_str("end");
                self.stack(Some(&ann.stack));
            }
            StmtKind::Block { id, body } => {
                let _ = write!(self.out, "begin {id}");
                self.nested(body, &at.child(PathStep::Body));
                self.out.push_str("end");
            }
            StmtKind::Decl { removal, item, ann } => {
                if *removal {
                    self.out.push_str("remove ");
                }
                match item {
                    DeclItem::Var { name, init } => {
                        let _ = write!(self.out, "var {name} = ");
                        write_expr(&mut self.out, init);
                    }
                    DeclItem::Arr { name, len } => {
                        let _ = write!(self.out, "arr[{len}] {name}");
                    }
                    DeclItem::Proc { id, name, body } => {
                        let _ = write!(self.out, "proc {id} {name}");
                        if !*removal {
                            self.out.push_str(" is");
                            // the declaration body is not a redex position
                            let mut inner = Printer { out: String::new(), stacks: self.stacks, spans: BTreeMap::new(), indent: self.indent + 1 };
                            inner.newline();
                            inner.prog(body, &RedexPath::default());
                            self.out.push_str(&inner.out);
                            self.newline();
                            self.out.push_str("end");
                        }
                    }
                }
                self.stack(Some(&ann.stack));
            }
            StmtKind::Call { id, name, ann } => {
                let _ = write!(self.out, "call {id} {name}");
                self.stack(Some(&ann.stack));
            }
            StmtKind::Runc { id, name, body, stack } => {
                let _ = write!(self.out, "runc {id} {name} is");
                self.nested(body, &at.child(PathStep::Body));
                self.out.push_str("end");
                self.stack(Some(stack));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{ann, parse_annotated, parse_program};
    use crate::lang::{erase_annotations, Program};

    fn round(src: &str) {
        let p = parse_program(src).unwrap();
        let text = program_text(&p);
        let q = parse_program(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(p, q, "{text}");
    }

    #[test]
    fn reparses() {
        round("X = 5");
        round("X = 1 par Y = 2 - (3 - Z); while (not X > 0 and T and (Y == -2)) do X -= Z + 1 end");
        round("begin var k = 2; arr[3] a; proc f is if N > 0 then N -= 1; call f end end; call f; a[0] += k end");
        round("begin b1.0 var t = 0; t += 1; remove var t = 1 end");
        assert_eq!(program_text(&Program::Empty), "");
    }

    #[test]
    fn stacks_and_spans() {
        let src = "begin b1.0 var t = 0 ⟨3,0⟩; t += 1 ⟨1⟩; remove var t = 0 ⟨2⟩ end";
        let (p, stacks) = parse_annotated(src).unwrap();
        let mut a = ann(&p);
        a.for_each_stmt_mut(true, &mut |s| {
            if let Some(st) = stacks.get(&s.site) {
                *s.stack_mut().unwrap() = st.clone();
            }
        });
        let out = print(&a, true);
        let (q, stacks2) = parse_annotated(&out.text).unwrap();
        assert_eq!(q, erase_annotations(&a));
        assert_eq!(stacks, stacks2);
        let sp = out.spans[&"/body/1".parse().unwrap()];
        assert_eq!(&out.text[sp.start..sp.end], "t += 1 ⟨1⟩");
        assert_eq!(sp.line, 3);
    }
}

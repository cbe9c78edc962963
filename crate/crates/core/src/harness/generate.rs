//! Random well-formed programs.
//!
//! Output is source text run through the frontend, so removals and
//! construct names come from preprocessing. Every loop counts down a
//! counter of its own, which nothing else writes.

use crate::frontend::parse_program;
use crate::lang::Program;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GLOBALS: [&str; 3] = ["X", "Y", "Z"];

const MAX_DEPTH: u32 = 3;

#[derive(Clone, Default)]
struct Scope {
    /// Writable scalars.
    vars: Vec<String>,
    /// Loop counters: readable only.
    counters: Vec<String>,
    arrays: Vec<(String, usize)>,
    procs: Vec<String>,
}

struct Gen {
    rng: ChaCha8Rng,
    budget: u32,
    fresh: u32,
}

impl Gen {
    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn expr(&mut self, sc: &Scope, avoid: Option<&str>, depth: u32) -> String {
        let readable: Vec<&String> =
            sc.vars.iter().chain(&sc.counters).filter(|v| Some(v.as_str()) != avoid).collect();
        let arrays: Vec<&(String, usize)> = sc.arrays.iter().filter(|(a, _)| Some(a.as_str()) != avoid).collect();
        match self.rng.gen_range(0..10) {
            0..=2 => self.rng.gen_range(0..6).to_string(),
            3..=5 if !readable.is_empty() => readable[self.rng.gen_range(0..readable.len())].clone(),
            6 if !arrays.is_empty() => {
                let (a, n) = arrays[self.rng.gen_range(0..arrays.len())];
                format!("{a}[{}]", self.rng.gen_range(0..*n))
            }
            7..=9 if depth < 2 => {
                let op = if self.rng.gen_bool(0.5) { "+" } else { "-" };
                let l = self.expr(sc, avoid, depth + 1);
                let r = self.expr(sc, avoid, depth + 1);
                if r.contains(' ') {
                    format!("{l} {op} ({r})")
                } else {
                    format!("{l} {op} {r}")
                }
            }
            _ => self.rng.gen_range(0..6).to_string(),
        }
    }

    fn cond(&mut self, sc: &Scope) -> String {
        let l = self.expr(sc, None, 1);
        let r = self.expr(sc, None, 1);
        let op = ["<", ">", "=="][self.rng.gen_range(0..3)];
        if self.rng.gen_ratio(1, 5) {
            format!("not {l} {op} {r}")
        } else {
            format!("{l} {op} {r}")
        }
    }

    fn assign(&mut self, sc: &Scope) -> String {
        let op = ["=", "+=", "-="][self.rng.gen_range(0..3)];
        if !sc.arrays.is_empty() && self.rng.gen_ratio(1, 3) {
            let (a, n) = sc.arrays[self.rng.gen_range(0..sc.arrays.len())].clone();
            let i = self.rng.gen_range(0..n);
            let e = self.expr(sc, Some(&a), 0);
            return format!("{a}[{i}] {op} {e}");
        }
        let x = sc.vars[self.rng.gen_range(0..sc.vars.len())].clone();
        let avoid = if op == "=" { None } else { Some(x.as_str()) };
        let e = self.expr(sc, avoid, 0);
        format!("{x} {op} {e}")
    }

    fn seq(&mut self, sc: &Scope, depth: u32) -> String {
        let mut out = vec![self.stmt(sc, depth)];
        while self.budget > 0 && self.rng.gen_ratio(2, 3) {
            out.push(self.stmt(sc, depth));
        }
        out.join("; ")
    }

    fn stmt(&mut self, sc: &Scope, depth: u32) -> String {
        self.budget = self.budget.saturating_sub(1);
        let nested = depth < MAX_DEPTH && self.budget > 0;
        match self.rng.gen_range(0..12) {
            0 | 6 if !sc.procs.is_empty() => format!("call {}", sc.procs[self.rng.gen_range(0..sc.procs.len())]),
            1 | 2 if nested => {
                let c = self.cond(sc);
                let t = self.seq(sc, depth + 1);
                if self.rng.gen_bool(0.3) {
                    format!("if {c} then {t} end")
                } else {
                    let e = self.seq(sc, depth + 1);
                    format!("if {c} then {t} else {e} end")
                }
            }
            3 if nested => {
                let cnt = self.name("c");
                let k = self.rng.gen_range(0..4);
                let mut inner = sc.clone();
                inner.counters.push(cnt.clone());
                let body = self.seq(&inner, depth + 1);
                format!("begin var {cnt} = {k}; while {cnt} > 0 do {cnt} -= 1; {body} end end")
            }
            4 if nested => self.block(sc, depth),
            5 if nested => {
                let l = self.seq(sc, depth + 1);
                let r = self.seq(sc, depth + 1);
                format!("par {{{l}}} {{{r}}}")
            }
            _ => self.assign(sc),
        }
    }

    fn block(&mut self, sc: &Scope, depth: u32) -> String {
        let mut inner = sc.clone();
        // variables, then arrays, then procedures
        let mut decls: [Vec<String>; 3] = Default::default();
        let n = self.rng.gen_range(1..3);
        let mut kinds: Vec<u8> = (0..n).map(|_| self.rng.gen_range(0..3)).collect();
        kinds.sort();
        for k in kinds {
            match k {
                0 => {
                    let v = self.name("v");
                    let e = self.expr(&inner, None, 0);
                    decls[0].push(format!("var {v} = {e}"));
                    inner.vars.push(v);
                }
                1 => {
                    let a = self.name("a");
                    let n = self.rng.gen_range(1..4);
                    decls[1].push(format!("arr[{n}] {a}"));
                    inner.arrays.push((a, n));
                }
                _ => {
                    let f = self.name("f");
                    // no recursion: the body sees only procedures declared before it
                    let body = self.seq(&inner, depth + 1);
                    decls[2].push(format!("proc {f} is {body} end"));
                    inner.procs.push(f);
                }
            }
        }
        let body = self.seq(&inner, depth + 1);
        format!("begin {}; {body} end", decls.concat().join("; "))
    }
}

/// Source text of a random program; empty for budget 0.
pub fn generate_source(seed: u64, budget: u32) -> String {
    if budget == 0 {
        return String::new();
    }
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), budget, fresh: 0 };
    let sc = Scope { vars: GLOBALS.iter().map(|s| s.to_string()).collect(), ..Scope::default() };
    let mut out = vec![g.stmt(&sc, 0)];
    while g.budget > 0 {
        out.push(g.stmt(&sc, 0));
    }
    out.join(";\n")
}

pub fn generate_program(seed: u64, budget: u32) -> Program {
    let src = generate_source(seed, budget);
    parse_program(&src).unwrap_or_else(|e| panic!("generated program does not preprocess: {e}\n{src}"))
}

//! Interleaving policies.

use crate::error::{ExecError, ExecResult};
use crate::exec::{Machine, Scheduler};
use crate::lang::{IdStack, Ident, Prog, RedexPath, Site, Stmt};
use crate::redex::{Redex, StepLabel};
use crate::scalar::Scalar;
use rand::{RngCore, SeedableRng};
use rand_xorshift::XorShiftRng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Always the first enabled redex.
#[derive(Clone, Copy, Debug, Default)]
pub struct LeftFirst;

impl Scheduler for LeftFirst {
    fn choose(&mut self, _: &[Redex], _: u64) -> ExecResult<usize> {
        Ok(0)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Pseudo-random choice that depends only on the seed, the step number and
/// the size of the enabled set.
///
/// For step `k` an `XorShiftRng` is seeded with
/// `seed_from_u64(seed + k * 0x9E3779B97F4A7C15)` (wrapping arithmetic) and
/// the choice is its first `next_u64()` modulo the number of enabled redexes.
#[derive(Clone, Copy, Debug)]
pub struct SeededRandom {
    pub seed: u64,
}

impl SeededRandom {
    pub fn new(seed: u64) -> Self {
        SeededRandom { seed }
    }

    pub fn pick(seed: u64, step: u64, n: usize) -> usize {
        let mut rng = XorShiftRng::seed_from_u64(seed.wrapping_add(step.wrapping_mul(GOLDEN)));
        (rng.next_u64() % n as u64) as usize
    }
}

impl Scheduler for SeededRandom {
    fn choose(&mut self, enabled: &[Redex], step: u64) -> ExecResult<usize> {
        Ok(Self::pick(self.seed, step, enabled.len()))
    }
}

/// Fires any enabled skip step first (leftmost, depth first); otherwise
/// defers to the wrapped policy.
#[derive(Clone, Debug)]
pub struct Uniform<S>(pub S);

impl<S: Scheduler> Scheduler for Uniform<S> {
    fn choose(&mut self, enabled: &[Redex], step: u64) -> ExecResult<usize> {
        match enabled.iter().position(Redex::is_skip) {
            Some(i) => Ok(i),
            None => self.0.choose(enabled, step),
        }
    }
}

/// Replays a fixed sequence of redex positions, e.g. from a trace.
#[derive(Clone, Debug)]
pub struct ScriptedRedexes {
    steps: Vec<RedexPath>,
    pos: usize,
}

impl ScriptedRedexes {
    pub fn new(steps: Vec<RedexPath>) -> Self {
        ScriptedRedexes { steps, pos: 0 }
    }

    pub fn from_labels(labels: &[StepLabel]) -> Self {
        Self::new(labels.iter().map(|l| l.redex.clone()).collect())
    }

    pub fn remaining(&self) -> usize {
        self.steps.len() - self.pos
    }
}

impl Scheduler for ScriptedRedexes {
    fn choose(&mut self, enabled: &[Redex], _: u64) -> ExecResult<usize> {
        let want = self.steps.get(self.pos).ok_or_else(|| ExecError::Divergence {
            step: self.pos,
            detail: "script exhausted while steps remain enabled".into(),
        })?;
        let i = enabled.iter().position(|r| &r.path == want).ok_or_else(|| ExecError::Divergence {
            step: self.pos,
            detail: format!("scripted redex {want} is not enabled"),
        })?;
        self.pos += 1;
        Ok(i)
    }
}

/// Replays an interleaving given as the statement site of each identifier:
/// identifier `m` goes to the enabled statement at `sites[m]`. Skip steps
/// are taken only when that statement is not yet enabled.
#[derive(Clone, Debug)]
pub struct IdentifierScript {
    sites: Vec<Site>,
    next: usize,
}

impl IdentifierScript {
    pub fn new(sites: Vec<Site>) -> Self {
        IdentifierScript { sites, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

impl Scheduler for IdentifierScript {
    fn choose(&mut self, enabled: &[Redex], step: u64) -> ExecResult<usize> {
        if let Some(site) = self.sites.get(self.next) {
            if let Some(i) = enabled.iter().position(|r| !r.is_skip() && r.site == Some(*site)) {
                self.next += 1;
                return Ok(i);
            }
        }
        enabled.iter().position(Redex::is_skip).ok_or_else(|| ExecError::Divergence {
            step: step as usize,
            detail: match self.sites.get(self.next) {
                Some(s) => format!("identifier {} belongs to site {} which is not enabled", self.next, s.0),
                None => format!("all {} identifiers used but identifier steps remain", self.sites.len()),
            },
        })
    }
}

/// Choice supplied from outside, one call per step.
pub struct Interactive<F>(pub F);

impl<F: FnMut(&[Redex]) -> ExecResult<usize>> Scheduler for Interactive<F> {
    fn choose(&mut self, enabled: &[Redex], _: u64) -> ExecResult<usize> {
        (self.0)(enabled)
    }
}

/// Serializable description of a policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    LeftFirst,
    SeededRandom { seed: u64 },
    Scripted { steps: Vec<RedexPath> },
    Identifiers { sites: Vec<Site> },
    Uniform { inner: Box<Policy> },
}

impl Default for Policy {
    fn default() -> Self {
        Policy::SeededRandom { seed: 0 }
    }
}

impl Policy {
    pub fn scheduler(&self) -> Box<dyn Scheduler + Send> {
        match self {
            Policy::LeftFirst => Box::new(LeftFirst),
            Policy::SeededRandom { seed } => Box::new(SeededRandom::new(*seed)),
            Policy::Scripted { steps } => Box::new(ScriptedRedexes::new(steps.clone())),
            Policy::Identifiers { sites } => Box::new(IdentifierScript::new(sites.clone())),
            Policy::Uniform { inner } => Box::new(Uniform(inner.scheduler())),
        }
    }
}

impl Scheduler for Box<dyn Scheduler + Send> {
    fn choose(&mut self, enabled: &[Redex], step: u64) -> ExecResult<usize> {
        (**self).choose(enabled, step)
    }
}

impl From<IdentifierScript> for Policy {
    fn from(s: IdentifierScript) -> Self {
        Policy::Identifiers { sites: s.sites }
    }
}

/// Turn a site → stack table into an identifier script. Every identifier
/// `0..n` must appear exactly once.
pub fn script_from_stacks<'a>(stacks: impl IntoIterator<Item = (Site, &'a IdStack)>) -> ExecResult<IdentifierScript> {
    let mut by_id: BTreeMap<Ident, Site> = BTreeMap::new();
    for (site, st) in stacks {
        for m in st.head_first() {
            if let Some(prev) = by_id.insert(m, site) {
                return Err(ExecError::Invalid(format!(
                    "identifier {m} appears at sites {} and {}",
                    prev.0, site.0
                )));
            }
        }
    }
    let mut sites = Vec::with_capacity(by_id.len());
    for (i, (m, s)) in by_id.into_iter().enumerate() {
        if m != i as Ident {
            return Err(ExecError::Invalid(format!("identifier {i} is missing")));
        }
        sites.push(s);
    }
    Ok(IdentifierScript::new(sites))
}

/// Script that reproduces the interleaving of a run so far, read from the
/// identifier stacks of the program, the live loop and call copies, and the
/// copies archived in δ.
pub fn replay_from_identifiers<V: Scalar>(m: &Machine<V>) -> ExecResult<IdentifierScript> {
    // A site can hold ids in several places (a loop body copy in β and in
    // the program, a nested loop archived once per outer iteration), so
    // collect sets and merge.
    let mut all: BTreeMap<Site, BTreeSet<Ident>> = BTreeMap::new();
    let mut add = |s: &Stmt<IdStack>| {
        if let Some(st) = s.stack() {
            if s.site != Site::NONE && !st.is_empty() {
                all.entry(s.site).or_default().extend(st.head_first());
            }
        }
    };
    m.record.for_each_stmt(true, &mut add);
    m.prog.for_each_stmt(true, &mut add);
    for s in m.state.beta.0.values() {
        Prog::Stmt(Box::new(s.clone())).for_each_stmt(true, &mut add);
    }
    for e in m.state.mu.entries.values() {
        e.body.for_each_stmt(true, &mut add);
    }
    for (_, rec) in m.delta.wi.iter().chain(m.delta.pr.iter()) {
        for e in &rec.0 {
            if let Some(st) = &e.stack {
                all.entry(e.site).or_default().extend(st.head_first());
            }
        }
    }
    let stacks: Vec<(Site, IdStack)> = all
        .into_iter()
        .map(|(s, ids)| (s, IdStack::from_head_first(&ids.into_iter().rev().collect::<Vec<_>>())))
        .collect();
    script_from_stacks(stacks.iter().map(|(s, st)| (*s, st)))
}

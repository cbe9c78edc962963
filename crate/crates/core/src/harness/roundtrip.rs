//! Forward run, inversion, reverse run, and the checks on the result.

use super::equiv::{check_equiv_fwd, check_equiv_rev};
use super::traditional::Traditional;
use crate::error::ExecError;
use crate::exec::{Machine, Scheduler};
use crate::frontend::{ann, inv};
use crate::lang::{erase_annotations, Ident, Program};
use crate::pretty::program_text;
use crate::redex::{Redex, StepKind, StepLabel};
use crate::scalar::Scalar;
use crate::scheduler::{Policy, ScriptedRedexes};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passes {
    /// Restored state equivalent to the initial one.
    pub state: bool,
    pub delta_empty: bool,
    /// Reverse takes the forward identifiers in exactly the opposite order
    /// and the sequencer ends at 0.
    pub id_conservation: bool,
}

impl Passes {
    pub fn all(&self) -> bool {
        self.state && self.delta_empty && self.id_conservation
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub program_hash: String,
    pub seed: u64,
    pub steps_fwd: usize,
    pub steps_rev: usize,
    pub pass: Passes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.pass.all() && self.failure_detail.is_none()
    }
}

/// A report plus what produced it.
#[derive(Clone, Debug)]
pub struct Roundtrip {
    pub report: Report,
    pub forward: Vec<StepLabel>,
    pub reverse: Vec<StepLabel>,
    /// Largest number of identifier redexes enabled at once in reverse.
    pub max_reverse_choices: usize,
    /// The plain interpreter driven by the forward script, compared with
    /// the annotated machine after the forward run.
    pub oracle: Result<(), String>,
}

pub fn program_hash(p: &Program) -> String {
    hex::encode(Sha256::digest(program_text(p).as_bytes()))
}

fn ident_choices(en: &[Redex]) -> usize {
    en.iter().filter(|r| r.kind == StepKind::Identifier).count()
}

/// ann, forward under `policy`, invert, reverse under the same policy.
pub fn roundtrip<V: Scalar>(p: &Program, init: &BTreeMap<String, V>, policy: &Policy, seed: u64, budget: u64) -> Roundtrip {
    let start = Machine::new(p, init);
    let mut m = start.clone();
    let mut out = Roundtrip {
        report: Report {
            program_hash: program_hash(p),
            seed,
            steps_fwd: 0,
            steps_rev: 0,
            pass: Passes::default(),
            failure_detail: None,
        },
        forward: Vec::new(),
        reverse: Vec::new(),
        max_reverse_choices: 0,
        oracle: Err("not run".into()),
    };
    let fail = |phase: &str, trace: &[StepLabel], e: ExecError| {
        let at = trace.last().map(|l| format!(" after {l}")).unwrap_or_default();
        Some(format!("{phase} step {}{at}: {e}", trace.len()))
    };

    let mut sched = policy.scheduler();
    if let Err(e) = m.run(&mut sched, budget, &mut out.forward) {
        out.report.steps_fwd = out.forward.len();
        out.report.failure_detail = fail("forward", &out.forward, e);
        return out;
    }
    out.report.steps_fwd = out.forward.len();
    out.oracle = oracle(p, init, &out.forward, &m, budget);

    if let Err(e) = m.flip() {
        out.report.failure_detail = fail("inversion", &[], e);
        return out;
    }
    let mut sched = policy.scheduler();
    loop {
        let en = m.enabled();
        if en.is_empty() {
            break;
        }
        out.max_reverse_choices = out.max_reverse_choices.max(ident_choices(&en));
        let step = out.reverse.len() as u64;
        if step >= budget {
            out.report.failure_detail = fail("reverse", &out.reverse, ExecError::StepBudget(budget));
            break;
        }
        let r = sched.choose(&en, step).and_then(|i| {
            en.get(i).cloned().ok_or_else(|| ExecError::NotEnabled(format!("choice {i}")))
        });
        match r.and_then(|r| m.step(&r.path)) {
            Ok(l) => out.reverse.push(l),
            Err(e) => {
                out.report.failure_detail = fail("reverse", &out.reverse, e);
                break;
            }
        }
    }
    out.report.steps_rev = out.reverse.len();

    let fwd: Vec<Ident> = out.forward.iter().filter_map(|l| l.id).collect();
    let mut rev: Vec<Ident> = out.reverse.iter().filter_map(|l| l.id).collect();
    rev.reverse();
    let pass = &mut out.report.pass;
    pass.delta_empty = m.delta.is_empty();
    pass.id_conservation = fwd == rev && m.seq.next == 0 && fwd.iter().copied().eq(0..fwd.len() as Ident);
    match check_equiv_rev(&start, &m) {
        Ok(()) => pass.state = m.is_terminal(),
        Err(d) => {
            pass.state = false;
            out.report.failure_detail.get_or_insert(d);
        }
    }
    if let Err(e) = &out.oracle {
        out.report.failure_detail.get_or_insert_with(|| format!("plain interpreter disagrees: {e}"));
    }
    if !out.report.pass.id_conservation {
        out.report.failure_detail.get_or_insert_with(|| format!("forward ids {fwd:?}, reverse ids reversed {rev:?}"));
    }
    out
}

/// Drive the plain interpreter with the forward run's redex choices and
/// compare final states.
pub fn oracle<V: Scalar>(
    p: &Program,
    init: &BTreeMap<String, V>,
    forward: &[StepLabel],
    m: &Machine<V>,
    budget: u64,
) -> Result<(), String> {
    let mut t = Traditional::new(p, init);
    let mut script = ScriptedRedexes::from_labels(forward);
    let taken = t.run(&mut script, budget).map_err(|e| e.to_string())?;
    if taken.len() != forward.len() {
        return Err(format!("plain run took {} steps, annotated {}", taken.len(), forward.len()));
    }
    if t.ident_steps != m.seq.next {
        return Err(format!("plain run took {} identifier steps, annotated {}", t.ident_steps, m.seq.next));
    }
    check_equiv_fwd(&t, m)
}

/// `inv(inv(AP)) == AP` and `erase(ann(P)) == P`, for the program and for
/// every annotated program a forward run passes through.
pub fn check_involution<V: Scalar>(p: &Program, init: &BTreeMap<String, V>, sched: &mut dyn Scheduler, budget: u64) -> Result<(), String> {
    let ap = ann(p);
    if erase_annotations(&ap) != *p {
        return Err("erasing the annotation does not give the program back".into());
    }
    let mut m = Machine::new(p, init);
    let mut step = 0u64;
    loop {
        for (what, x) in [("program", &m.prog), ("record", &m.record)] {
            if inv(&inv(x)) != *x {
                return Err(format!("inversion is not an involution on the {what} at step {step}"));
            }
        }
        let en = m.enabled();
        if en.is_empty() || step >= budget {
            return Ok(());
        }
        let i = sched.choose(&en, step).map_err(|e| e.to_string())?;
        m.step(&en[i].path).map_err(|e| e.to_string())?;
        step += 1;
    }
}

pub fn table(reports: &[Report]) -> String {
    let mut s = String::new();
    let mark = |b: bool| if b { "ok" } else { "FAIL" };
    let _ = writeln!(s, "{:<14} {:>6} {:>7} {:>7}  {:<5} {:<5} {:<5}  detail", "program", "seed", "fwd", "rev", "state", "delta", "ids");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>7} {:>7}  {:<5} {:<5} {:<5}  {}",
            &r.program_hash[..12.min(r.program_hash.len())],
            r.seed,
            r.steps_fwd,
            r.steps_rev,
            mark(r.pass.state),
            mark(r.pass.delta_empty),
            mark(r.pass.id_conservation),
            r.failure_detail.as_deref().unwrap_or("")
        );
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(s, "{} runs, {failed} failed", reports.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::harness::generate::generate_program;
    use crate::scheduler::SeededRandom;
    use num_bigint::BigInt;

    fn seeded(seed: u64) -> Policy {
        Policy::SeededRandom { seed }
    }

    #[test]
    fn sort_roundtrips() {
        let p = parse_program(include_str!("../../tests/fixtures/sort.rpl")).unwrap();
        for seed in 0..10 {
            let r = roundtrip::<BigInt>(&p, &BTreeMap::new(), &seeded(seed), seed, 100_000);
            assert!(r.report.passed(), "{:?}", r.report);
            assert_eq!(r.oracle, Ok(()));
            assert_eq!(r.max_reverse_choices, 1);
        }
    }

    #[test]
    fn intro_assignment() {
        let p = parse_program("X = 5").unwrap();
        let init = [("X".to_string(), BigInt::from(2))].into_iter().collect();
        let r = roundtrip(&p, &init, &seeded(0), 0, 100);
        assert!(r.report.passed());
        assert_eq!((r.report.steps_fwd, r.report.steps_rev), (1, 1));
    }

    #[test]
    fn generated_corpus() {
        for seed in 0..60 {
            let p = generate_program(seed, 12);
            let r = roundtrip::<BigInt>(&p, &BTreeMap::new(), &seeded(seed), seed, 100_000);
            assert!(r.report.passed(), "seed {seed}: {:?}\n{}", r.report, program_text(&p));
            assert_eq!(r.oracle, Ok(()), "seed {seed}");
            assert!(r.max_reverse_choices <= 1);
            check_involution::<BigInt>(&p, &BTreeMap::new(), &mut SeededRandom::new(seed), 100_000).unwrap();
        }
    }

    #[test]
    fn report_json_and_table() {
        let p = parse_program("X += 1").unwrap();
        let r = roundtrip::<BigInt>(&p, &BTreeMap::new(), &seeded(2), 2, 10).report;
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["pass"], serde_json::json!({"state": true, "delta_empty": true, "id_conservation": true}));
        assert_eq!(v["program_hash"].as_str().unwrap().len(), 64);
        assert!(v.get("failure_detail").is_none());
        assert!(table(&[r]).ends_with("1 runs, 0 failed\n"));
    }

    #[test]
    fn budget_failure_is_reported() {
        let p = parse_program("while T do X += 1 end").unwrap();
        let r = roundtrip::<BigInt>(&p, &BTreeMap::new(), &seeded(0), 0, 50).report;
        assert!(!r.passed());
        assert!(r.failure_detail.unwrap().starts_with("forward step 50"));
    }
}

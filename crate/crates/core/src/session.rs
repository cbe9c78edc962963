//! A live execution that can be stepped, flipped and inspected.

use crate::error::{ExecError, ExecResult};
use crate::exec::{default_budget, Machine, Scheduler};
use crate::frontend::parse_program;
use crate::lang::{Ident, Program};
use crate::pretty::{print, Span};
use crate::redex::{Direction, Redex, StepLabel};
use crate::scalar::Scalar;
use crate::scheduler::{Policy, ScriptedRedexes};
use crate::state::AuxStore;
use crate::trace::{parse_initial, wire_state, Bundle, Trace, WireValue, TRACE_VERSION};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Terminal,
    Stuck,
    Error,
}

/// Which redex to fire: an index into the enabled set, or the policy's pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Index(usize),
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Until {
    Steps(u64),
    Terminal,
    /// Stop after the step that takes this identifier.
    Identifier(Ident),
}

pub struct Session<V> {
    pub source: String,
    program: Program,
    initial: BTreeMap<String, V>,
    pub machine: Machine<V>,
    pub policy: Policy,
    sched: Box<dyn Scheduler + Send>,
    /// Every step taken, in both directions.
    pub trace: Vec<StepLabel>,
    /// Forward steps from the start that lead to the current point.
    history: Vec<StepLabel>,
    pub error: Option<String>,
    pub budget: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnabledView {
    pub index: usize,
    #[serde(flatten)]
    pub redex: Redex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "V: Scalar")]
pub struct View<V> {
    pub direction: Direction,
    pub status: Status,
    pub program: String,
    pub enabled: Vec<EnabledView>,
    pub state: BTreeMap<String, WireValue>,
    pub delta: AuxStore<V>,
    pub next_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_id: Option<String>,
    pub steps: usize,
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<V: Scalar> Session<V> {
    pub fn new(source: &str, initial: BTreeMap<String, V>, policy: Policy) -> ExecResult<Self> {
        let program = parse_program(source)?;
        let machine = Machine::new(&program, &initial);
        Ok(Session {
            source: source.to_string(),
            program,
            initial,
            machine,
            sched: policy.scheduler(),
            policy,
            trace: Vec::new(),
            history: Vec::new(),
            error: None,
            budget: default_budget(),
        })
    }

    pub fn from_bundle(b: Bundle<V>, policy: Policy) -> ExecResult<Self> {
        let program = parse_program(&b.program_source)?;
        let initial = parse_initial(&b.initial)?;
        Ok(Session {
            source: b.program_source,
            program,
            initial,
            machine: b.machine,
            sched: policy.scheduler(),
            policy,
            trace: Vec::new(),
            history: b.history,
            error: None,
            budget: default_budget(),
        })
    }

    /// Session positioned after the forward steps of a trace file.
    pub fn from_trace(t: &Trace<V>, policy: Policy) -> ExecResult<Self> {
        let mut s = Session::new(&t.program_source, t.initial_values()?, policy)?;
        for (k, l) in t.steps.iter().enumerate() {
            let i = s.machine.enabled().iter().position(|r| r.path == l.redex).ok_or_else(|| ExecError::Divergence {
                step: k,
                detail: format!("redex {} of `{}` is not enabled", l.redex, l.rule),
            })?;
            let got = s.step(Choice::Index(i))?;
            if got.id != l.id || got.rule != l.rule {
                return Err(ExecError::Divergence { step: k, detail: format!("trace has {l}, replay took {got}") });
            }
        }
        Ok(s)
    }

    pub fn initial(&self) -> &BTreeMap<String, V> {
        &self.initial
    }

    pub fn bundle(&self) -> Bundle<V> {
        Bundle {
            version: TRACE_VERSION,
            program_source: self.source.clone(),
            initial: self.initial.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
            history: self.history.clone(),
            machine: self.machine.clone(),
        }
    }

    pub fn status(&self) -> Status {
        if self.machine.is_terminal() {
            Status::Terminal
        } else if self.error.is_some() {
            Status::Error
        } else if self.machine.enabled().is_empty() {
            Status::Stuck
        } else {
            Status::Running
        }
    }

    pub fn step(&mut self, choice: Choice) -> ExecResult<StepLabel> {
        let en = self.machine.enabled();
        if en.is_empty() {
            return Err(ExecError::NotEnabled("nothing is enabled".into()));
        }
        let i = match choice {
            Choice::Index(i) => i,
            Choice::Auto => self.sched.choose(&en, self.trace.len() as u64)?,
        };
        let r = en
            .get(i)
            .ok_or_else(|| ExecError::NotEnabled(format!("choice {i}: only {} redexes are enabled", en.len())))?;
        match self.machine.step(&r.path) {
            Ok(label) => {
                self.error = None;
                if self.machine.direction == Direction::Forward {
                    self.history.push(label.clone());
                }
                self.trace.push(label.clone());
                Ok(label)
            }
            Err(e) => {
                if !matches!(e, ExecError::NotEnabled(_)) {
                    self.error = Some(e.to_string());
                }
                Err(e)
            }
        }
    }

    /// Steps taken by this call.
    pub fn run_until(&mut self, until: Until) -> ExecResult<u64> {
        let mut n = 0u64;
        loop {
            match until {
                Until::Steps(k) if n >= k => return Ok(n),
                _ => {}
            }
            if self.machine.enabled().is_empty() {
                return Ok(n);
            }
            if n >= self.budget {
                return Err(ExecError::StepBudget(self.budget));
            }
            let label = self.step(Choice::Auto)?;
            n += 1;
            if let Until::Identifier(m) = until {
                if label.id == Some(m) {
                    return Ok(n);
                }
            }
        }
    }

    /// Toggle direction. Going back to forward rebuilds the forward machine
    /// by replaying the forward steps that precede the first identifier
    /// already undone.
    pub fn flip(&mut self) -> ExecResult<()> {
        match self.machine.direction {
            Direction::Forward => self.machine.flip(),
            Direction::Reverse => {
                let next = self.machine.seq.next;
                if next > 0 && !self.history.iter().any(|l| l.id == Some(next - 1)) {
                    return Err(ExecError::Invalid("no forward history to replay".into()));
                }
                // everything before the first identifier not yet undone
                let keep = self.history.iter().position(|l| l.id.is_some_and(|m| m >= next)).unwrap_or(self.history.len());
                self.history.truncate(keep);
                let mut m = Machine::new(&self.program, &self.initial);
                let mut sched = ScriptedRedexes::from_labels(&self.history);
                let mut replayed = Vec::new();
                for _ in 0..self.history.len() {
                    let en = m.enabled();
                    let i = sched.choose(&en, replayed.len() as u64)?;
                    replayed.push(m.step(&en[i].path)?);
                }
                if replayed != self.history {
                    return Err(ExecError::Divergence { step: 0, detail: "forward replay differs from history".into() });
                }
                self.machine = m;
                Ok(())
            }
        }
    }

    pub fn trace_file(&self) -> Trace<V> {
        Trace::new(&self.source, self.trace.clone(), &self.machine).with_initial(&self.initial)
    }

    pub fn view(&self) -> View<V> {
        let printed = print(&self.machine.prog, true);
        let enabled = self
            .machine
            .enabled()
            .into_iter()
            .enumerate()
            .map(|(index, r)| EnabledView { index, span: printed.spans.get(&r.path).copied(), redex: r })
            .collect();
        View {
            direction: self.machine.direction,
            status: self.status(),
            program: printed.text,
            enabled,
            state: wire_state(&self.machine),
            delta: self.machine.delta.clone(),
            next_id: self.machine.seq.next.to_string(),
            previous_id: self.machine.seq.previous().map(|m| m.to_string()),
            steps: self.trace.len(),
            policy: self.policy.clone(),
            error: self.error.clone(),
        }
    }
}

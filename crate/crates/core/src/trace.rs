//! Trace files, session bundles and state dumps.

use crate::error::{ExecError, ExecResult};
use crate::exec::Machine;
use crate::redex::StepLabel;
use crate::scalar::Scalar;
use crate::state::{AuxStore, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

pub const TRACE_VERSION: u32 = 1;

/// A global's value on the wire: decimal strings, arrays as lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireValue {
    Scalar(String),
    Array(Vec<String>),
}

impl<V: Scalar> From<&Value<V>> for WireValue {
    fn from(v: &Value<V>) -> Self {
        match v {
            Value::Scalar(x) => WireValue::Scalar(x.to_string()),
            Value::Array(xs) => WireValue::Array(xs.iter().map(|x| x.to_string()).collect()),
        }
    }
}

pub fn wire_state<V: Scalar>(m: &Machine<V>) -> BTreeMap<String, WireValue> {
    m.globals().iter().map(|(k, v)| (k.clone(), WireValue::from(v))).collect()
}

/// A recorded run. The step list doubles as a replay script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "V: Scalar")]
pub struct Trace<V> {
    pub version: u32,
    pub program_source: String,
    /// Starting values of globals that are not zero.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<String, String>,
    pub steps: Vec<StepLabel>,
    pub final_state: BTreeMap<String, WireValue>,
    pub delta: AuxStore<V>,
    pub next_id: String,
}

impl<V: Scalar> Trace<V> {
    pub fn new(source: &str, steps: Vec<StepLabel>, m: &Machine<V>) -> Self {
        Trace {
            version: TRACE_VERSION,
            program_source: source.to_string(),
            initial: BTreeMap::new(),
            steps,
            final_state: wire_state(m),
            delta: m.delta.clone(),
            next_id: m.seq.next.to_string(),
        }
    }

    pub fn with_initial(mut self, init: &BTreeMap<String, V>) -> Self {
        self.initial = init.iter().filter(|(_, v)| !v.is_zero()).map(|(k, v)| (k.clone(), v.to_string())).collect();
        self
    }

    pub fn initial_values(&self) -> ExecResult<BTreeMap<String, V>> {
        parse_initial(&self.initial)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> ExecResult<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| ExecError::Invalid(format!("bad trace file: {e}")))?;
        if t.version != TRACE_VERSION {
            return Err(ExecError::Invalid(format!("unsupported trace version {}", t.version)));
        }
        Ok(t)
    }
}

/// Saved machine, resumable in either direction. `history` holds the
/// forward steps from the start, which a reverse machine needs to go
/// forward again.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "V: Scalar")]
pub struct Bundle<V> {
    pub version: u32,
    pub program_source: String,
    #[serde(default)]
    pub initial: BTreeMap<String, String>,
    #[serde(default)]
    pub history: Vec<StepLabel>,
    pub machine: Machine<V>,
}

impl<V: Scalar> Bundle<V> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> ExecResult<Self> {
        let b: Self = serde_json::from_str(text).map_err(|e| ExecError::Invalid(format!("bad bundle: {e}")))?;
        if b.version != TRACE_VERSION {
            return Err(ExecError::Invalid(format!("unsupported bundle version {}", b.version)));
        }
        Ok(b)
    }
}

pub fn parse_initial<V: Scalar>(m: &BTreeMap<String, String>) -> ExecResult<BTreeMap<String, V>> {
    m.iter()
        .map(|(k, v)| {
            let x = V::parse_decimal(v).ok_or_else(|| ExecError::Invalid(format!("bad initial value `{v}` for {k}")))?;
            Ok((k.clone(), x))
        })
        .collect()
}

/// `name = value` per global, sorted by name.
pub fn dump_state<V: Scalar>(m: &Machine<V>) -> String {
    let mut s = String::new();
    for (k, v) in m.globals() {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// One line per δ stack, head first; empty stacks are left out.
pub fn dump_delta<V: Scalar>(d: &AuxStore<V>) -> String {
    let mut s = String::new();
    let mut line = |name: &str, items: Vec<String>| {
        if !items.is_empty() {
            let _ = writeln!(s, "{name}: {}", items.join(" "));
        }
    };
    for (k, st) in &d.values {
        line(k, st.iter().rev().map(|(m, v)| format!("⟨{m},{v}⟩")).collect());
    }
    let b = |v: &[(u64, bool)]| v.iter().rev().map(|(m, b)| format!("⟨{m},{}⟩", if *b { 'T' } else { 'F' })).collect();
    line("B", b(&d.b));
    line("W", b(&d.w));
    line("WI", d.wi.iter().rev().map(|(m, c)| format!("⟨{m},[{}]⟩", c.0.len())).collect());
    line("Pr", d.pr.iter().rev().map(|(m, c)| format!("⟨{m},[{}]⟩", c.0.len())).collect());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::scheduler::LeftFirst;
    use num_bigint::BigInt;

    fn run(src: &str) -> (Machine<BigInt>, Vec<StepLabel>) {
        let p = parse_program(src).unwrap();
        let init = [("X".to_string(), BigInt::from(2))].into_iter().collect();
        let mut m = Machine::new(&p, &init);
        let mut t = Vec::new();
        m.run(&mut LeftFirst, 1000, &mut t).unwrap();
        (m, t)
    }

    #[test]
    fn trace_round_trip() {
        let src = "X = 5; begin arr[2] a; a[1] = 3; Y = a[1] end; if Y > 1 then Z += 1 end";
        let (m, t) = run(src);
        let tr = Trace::new(src, t, &m);
        let j = tr.to_json();
        assert_eq!(Trace::<BigInt>::from_json(&j).unwrap(), tr);
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["final_state"]["X"], "5");
        assert_eq!(v["next_id"], "8");
        assert_eq!(v["delta"]["values"]["X"][0], serde_json::json!(["0", "2"]));
        assert_eq!(v["delta"]["B"][0], serde_json::json!(["7", "1"]));
        assert!(Trace::<BigInt>::from_json("{}").is_err());
    }

    #[test]
    fn dumps() {
        let (m, _) = run("X = 5; Y -= 3");
        assert_eq!(dump_state(&m), "X = 5\nY = -3\n");
        assert_eq!(dump_delta(&m.delta), "X: ⟨0,2⟩\n");
        let b = Bundle { version: 1, program_source: "X = 5".into(), initial: BTreeMap::new(), history: vec![], machine: m };
        assert_eq!(Bundle::from_json(&b.to_json()).unwrap(), b);
    }
}

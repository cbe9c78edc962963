//! Program state: variable environment γ, data store σ, while environment β,
//! procedure environment μ, the auxiliary store δ and the identifier
//! sequencer.

use crate::error::{ExecError, ExecResult};
use crate::lang::{Annot, ConstructId, IdStack, Ident, Prog, Site, Stmt, StmtPath};
use crate::scalar::{Dec, Scalar};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};

// ---------------------------------------------------------------------------
// γ
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BindingKind {
    Scalar,
    Array { len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub loc: usize,
    #[serde(flatten)]
    pub kind: BindingKind,
}

/// `(name, block | global) -> location`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarEnv {
    pub globals: BTreeMap<String, Binding>,
    pub locals: BTreeMap<ConstructId, BTreeMap<String, Binding>>,
}

impl VarEnv {
    /// Resolve through the path innermost first, then globals.
    pub fn eval_var(&self, name: &str, pa: &StmtPath) -> ExecResult<Binding> {
        for b in pa.iter() {
            if let Some(bind) = self.locals.get(b).and_then(|m| m.get(name)) {
                return Ok(*bind);
            }
        }
        self.globals.get(name).copied().ok_or_else(|| ExecError::Unbound(name.to_string()))
    }

    pub fn bind_local(&mut self, name: &str, block: &ConstructId, b: Binding) {
        self.locals.entry(block.clone()).or_default().insert(name.to_string(), b);
    }

    pub fn local(&self, name: &str, block: &ConstructId) -> Option<Binding> {
        self.locals.get(block).and_then(|m| m.get(name)).copied()
    }

    pub fn unbind_local(&mut self, name: &str, block: &ConstructId) -> Option<Binding> {
        let m = self.locals.get_mut(block)?;
        let b = m.remove(name);
        if m.is_empty() {
            self.locals.remove(block);
        }
        b
    }

    /// All bindings as `(name, scope, binding)`; scope `None` is global.
    pub fn entries(&self) -> Vec<(String, Option<ConstructId>, Binding)> {
        let mut v: Vec<_> = self.globals.iter().map(|(n, b)| (n.clone(), None, *b)).collect();
        for (blk, m) in &self.locals {
            for (n, b) in m {
                v.push((n.clone(), Some(blk.clone()), *b));
            }
        }
        v
    }
}

// ---------------------------------------------------------------------------
// σ
// ---------------------------------------------------------------------------

/// Memory: unset locations read as zero. Allocation takes the lowest free
/// location (or run of locations); removal zeroes and frees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataStore<V> {
    values: BTreeMap<usize, V>,
    used: BTreeSet<usize>,
}

impl<V: Scalar> Default for DataStore<V> {
    fn default() -> Self {
        DataStore { values: BTreeMap::new(), used: BTreeSet::new() }
    }
}

impl<V: Scalar> DataStore<V> {
    pub fn read(&self, loc: usize) -> V {
        self.values.get(&loc).cloned().unwrap_or_else(V::zero)
    }

    pub fn write(&mut self, loc: usize, v: V) {
        if v.is_zero() {
            self.values.remove(&loc);
        } else {
            self.values.insert(loc, v);
        }
    }

    pub fn next_loc(&mut self) -> usize {
        self.next_loc_block(1)
    }

    /// Reserve `n` consecutive free locations, returning the first.
    pub fn next_loc_block(&mut self, n: usize) -> usize {
        let n = n.max(1);
        let mut base = 0usize;
        while let Some(taken) = (base..base + n).find(|l| self.used.contains(l)) {
            base = taken + 1;
        }
        self.used.extend(base..base + n);
        base
    }

    pub fn free(&mut self, loc: usize) {
        self.values.remove(&loc);
        self.used.remove(&loc);
    }

    pub fn is_used(&self, loc: usize) -> bool {
        self.used.contains(&loc)
    }

    pub fn used(&self) -> impl Iterator<Item = usize> + '_ {
        self.used.iter().copied()
    }

    /// Nonzero cells.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, &V)> {
        self.values.iter().map(|(l, v)| (*l, v))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct DataStoreRepr<V: Scalar> {
    values: BTreeMap<usize, Dec<V>>,
    used: Vec<usize>,
}

impl<V: Scalar> Serialize for DataStore<V> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DataStoreRepr {
            values: self.values.iter().map(|(l, v)| (*l, Dec(v.clone()))).collect(),
            used: self.used.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de, V: Scalar> Deserialize<'de> for DataStore<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = DataStoreRepr::<V>::deserialize(d)?;
        Ok(DataStore {
            values: r.values.into_iter().filter(|(_, v)| !v.0.is_zero()).map(|(l, v)| (l, v.0)).collect(),
            used: r.used.into_iter().collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// β and μ
// ---------------------------------------------------------------------------

/// Loop copies of loops currently mid-execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent, bound = "A: Annot")]
pub struct WhileEnv<A>(pub BTreeMap<ConstructId, Stmt<A>>);

impl<A> Default for WhileEnv<A> {
    fn default() -> Self {
        WhileEnv(BTreeMap::new())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "A: Annot")]
pub struct ProcEntry<A> {
    pub name: String,
    pub body: Prog<A>,
}

/// Procedure bodies keyed by `Pn` (declared) or `Cn` (running call), plus
/// the scoped name bindings used by `eval_proc`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "A: Annot")]
pub struct ProcEnv<A> {
    pub entries: BTreeMap<ConstructId, ProcEntry<A>>,
    pub bindings: BTreeMap<ConstructId, BTreeMap<String, ConstructId>>,
}

impl<A> Default for ProcEnv<A> {
    fn default() -> Self {
        ProcEnv { entries: BTreeMap::new(), bindings: BTreeMap::new() }
    }
}

impl<A: Annot> ProcEnv<A> {
    pub fn eval_proc(&self, name: &str, pa: &StmtPath) -> ExecResult<ConstructId> {
        for b in pa.iter() {
            if let Some(p) = self.bindings.get(b).and_then(|m| m.get(name)) {
                return Ok(p.clone());
            }
        }
        Err(ExecError::UnboundProc(name.to_string()))
    }

    pub fn declare(&mut self, block: &ConstructId, pn: &ConstructId, name: &str, body: Prog<A>) {
        self.bindings.entry(block.clone()).or_default().insert(name.to_string(), pn.clone());
        self.entries.insert(pn.clone(), ProcEntry { name: name.to_string(), body });
    }

    pub fn undeclare(&mut self, block: &ConstructId, pn: &ConstructId, name: &str) -> bool {
        if let Some(m) = self.bindings.get_mut(block) {
            m.remove(name);
            if m.is_empty() {
                self.bindings.remove(block);
            }
        }
        self.entries.remove(pn).is_some()
    }
}

/// `(γ, σ, β, μ)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "V: Scalar, A: Annot")]
pub struct ProgState<V, A> {
    pub gamma: VarEnv,
    pub sigma: DataStore<V>,
    pub beta: WhileEnv<A>,
    pub mu: ProcEnv<A>,
}

impl<V: Scalar, A: Annot> Default for ProgState<V, A> {
    fn default() -> Self {
        ProgState {
            gamma: VarEnv::default(),
            sigma: DataStore::default(),
            beta: WhileEnv::default(),
            mu: ProcEnv::default(),
        }
    }
}

impl<V: Scalar, A: Annot> ProgState<V, A> {
    /// State with the given globals bound, in name order, to fresh locations.
    pub fn with_globals<'a>(names: impl IntoIterator<Item = &'a str>, init: &BTreeMap<String, V>) -> Self {
        let mut st = ProgState::default();
        let mut names: Vec<&str> = names.into_iter().collect();
        for n in init.keys() {
            names.push(n);
        }
        names.sort();
        names.dedup();
        for n in names {
            let loc = st.sigma.next_loc();
            st.gamma.globals.insert(n.to_string(), Binding { loc, kind: BindingKind::Scalar });
            if let Some(v) = init.get(n) {
                st.sigma.write(loc, v.clone());
            }
        }
        st
    }

    /// Base location of an array from its pointer cell.
    pub fn array_base(&self, name: &str, b: &Binding) -> ExecResult<(usize, usize)> {
        match b.kind {
            BindingKind::Array { len } => {
                let base = self.sigma.read(b.loc).to_loc().ok_or_else(|| ExecError::BadPointer(name.to_string()))?;
                Ok((base, len))
            }
            BindingKind::Scalar => Err(ExecError::NotArray(name.to_string())),
        }
    }

    /// Current value of a bound name: a scalar or the array elements.
    pub fn value_of(&self, name: &str, b: &Binding) -> ExecResult<Value<V>> {
        Ok(match b.kind {
            BindingKind::Scalar => Value::Scalar(self.sigma.read(b.loc)),
            BindingKind::Array { .. } => {
                let (base, len) = self.array_base(name, b)?;
                Value::Array((0..len).map(|i| self.sigma.read(base + i)).collect())
            }
        })
    }

    /// Named view of the globals.
    pub fn global_values(&self) -> BTreeMap<String, Value<V>> {
        self.gamma
            .globals
            .iter()
            .filter_map(|(n, b)| self.value_of(n, b).ok().map(|v| (n.clone(), v)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value<V> {
    Scalar(V),
    Array(Vec<V>),
}

impl<V: Scalar> std::fmt::Display for Value<V> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Scalar(v) => write!(f, "{v}"),
            Value::Array(vs) => {
                f.write_str("[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// δ
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CopyEntry {
    pub site: Site,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ConstructId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<IdStack>,
}

/// Construct names and identifier stacks harvested from a loop or call copy,
/// in preorder over the copy (loop bodies, call bodies and procedure bodies
/// nested in it are not entered: they are archived separately).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CopyRecord(pub Vec<CopyEntry>);

/// Named value stacks plus `B`, `W`, `WI` and `Pr`. Each `Vec` is stored
/// bottom first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuxStore<V> {
    pub values: BTreeMap<String, Vec<(Ident, V)>>,
    pub b: Vec<(Ident, bool)>,
    pub w: Vec<(Ident, bool)>,
    pub wi: Vec<(Ident, CopyRecord)>,
    pub pr: Vec<(Ident, CopyRecord)>,
}

impl<V> Default for AuxStore<V> {
    fn default() -> Self {
        AuxStore { values: BTreeMap::new(), b: Vec::new(), w: Vec::new(), wi: Vec::new(), pr: Vec::new() }
    }
}

fn pop_checked<T>(stack: &mut Vec<(Ident, T)>, name: &str, m: Ident) -> ExecResult<T> {
    match stack.last() {
        None => Err(ExecError::DeltaEmpty(name.to_string())),
        Some((id, _)) if *id != m => {
            Err(ExecError::DeltaMismatch { stack: name.to_string(), expected: m, found: *id })
        }
        Some(_) => Ok(stack.pop().unwrap().1),
    }
}

fn peek_checked<'a, T>(stack: &'a [(Ident, T)], name: &str, m: Ident) -> ExecResult<&'a T> {
    match stack.last() {
        None => Err(ExecError::DeltaEmpty(name.to_string())),
        Some((id, _)) if *id != m => {
            Err(ExecError::DeltaMismatch { stack: name.to_string(), expected: m, found: *id })
        }
        Some((_, t)) => Ok(t),
    }
}

impl<V: Scalar> AuxStore<V> {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty() && self.b.is_empty() && self.w.is_empty() && self.wi.is_empty() && self.pr.is_empty()
    }

    pub fn push_value(&mut self, name: &str, m: Ident, v: V) {
        self.values.entry(name.to_string()).or_default().push((m, v));
    }

    pub fn pop_value(&mut self, name: &str, m: Ident) -> ExecResult<V> {
        let st = self.values.get_mut(name).ok_or_else(|| ExecError::DeltaEmpty(name.to_string()))?;
        let v = pop_checked(st, name, m)?;
        if st.is_empty() {
            self.values.remove(name);
        }
        Ok(v)
    }

    /// Pop every head record carrying `m`; values come back head first.
    pub fn drain(&mut self, name: &str, m: Ident) -> Vec<V> {
        let mut out = Vec::new();
        if let Some(st) = self.values.get_mut(name) {
            while matches!(st.last(), Some((id, _)) if *id == m) {
                out.push(st.pop().unwrap().1);
            }
            if st.is_empty() {
                self.values.remove(name);
            }
        }
        out
    }

    pub fn pop_b(&mut self, m: Ident) -> ExecResult<bool> {
        pop_checked(&mut self.b, "B", m)
    }

    pub fn peek_w(&self, m: Ident) -> ExecResult<bool> {
        peek_checked(&self.w, "W", m).copied()
    }

    pub fn pop_w(&mut self, m: Ident) -> ExecResult<bool> {
        pop_checked(&mut self.w, "W", m)
    }

    pub fn pop_wi(&mut self, m: Ident) -> ExecResult<CopyRecord> {
        pop_checked(&mut self.wi, "WI", m)
    }

    pub fn pop_pr(&mut self, m: Ident) -> ExecResult<CopyRecord> {
        pop_checked(&mut self.pr, "Pr", m)
    }

    /// Total number of records.
    pub fn len(&self) -> usize {
        self.values.values().map(Vec::len).sum::<usize>() + self.b.len() + self.w.len() + self.wi.len() + self.pr.len()
    }
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_bool<E: serde::de::Error>(s: &str) -> Result<bool, E> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(E::custom(format!("expected \"1\" or \"0\", found `{s}`"))),
    }
}

fn parse_ident<E: serde::de::Error>(s: &str) -> Result<Ident, E> {
    s.parse().map_err(|_| E::custom(format!("bad identifier `{s}`")))
}

/// Wire form: stacks listed head first, identifiers and values as decimal
/// strings, booleans as "1"/"0".
#[derive(Serialize, Deserialize)]
struct AuxRepr {
    values: BTreeMap<String, Vec<(String, String)>>,
    #[serde(rename = "B")]
    b: Vec<(String, String)>,
    #[serde(rename = "W")]
    w: Vec<(String, String)>,
    #[serde(rename = "WI")]
    wi: Vec<(String, CopyRecord)>,
    #[serde(rename = "Pr")]
    pr: Vec<(String, CopyRecord)>,
}

impl<V: Scalar> Serialize for AuxStore<V> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bools = |v: &[(Ident, bool)]| v.iter().rev().map(|(m, b)| (m.to_string(), bool_str(*b).to_string())).collect();
        AuxRepr {
            values: self
                .values
                .iter()
                .map(|(k, st)| (k.clone(), st.iter().rev().map(|(m, v)| (m.to_string(), v.to_string())).collect()))
                .collect(),
            b: bools(&self.b),
            w: bools(&self.w),
            wi: self.wi.iter().rev().map(|(m, c)| (m.to_string(), c.clone())).collect(),
            pr: self.pr.iter().rev().map(|(m, c)| (m.to_string(), c.clone())).collect(),
        }
        .serialize(s)
    }
}

impl<'de, V: Scalar> Deserialize<'de> for AuxStore<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = AuxRepr::deserialize(d)?;
        let mut out = AuxStore::default();
        for (k, st) in r.values {
            let mut v = Vec::with_capacity(st.len());
            for (m, x) in st.into_iter().rev() {
                let x = V::parse_decimal(&x).ok_or_else(|| D::Error::custom(format!("bad integer `{x}`")))?;
                v.push((parse_ident(&m)?, x));
            }
            if !v.is_empty() {
                out.values.insert(k, v);
            }
        }
        let bools = |st: Vec<(String, String)>| -> Result<Vec<(Ident, bool)>, D::Error> {
            st.into_iter().rev().map(|(m, b)| Ok((parse_ident(&m)?, parse_bool(&b)?))).collect()
        };
        out.b = bools(r.b)?;
        out.w = bools(r.w)?;
        let recs = |st: Vec<(String, CopyRecord)>| -> Result<Vec<(Ident, CopyRecord)>, D::Error> {
            st.into_iter().rev().map(|(m, c)| Ok((parse_ident(&m)?, c))).collect()
        };
        out.wi = recs(r.wi)?;
        out.pr = recs(r.pr)?;
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Sequencer
// ---------------------------------------------------------------------------

/// Consecutive identifiers 0, 1, 2, ...; `next` is the first unused one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdSequencer {
    #[serde(with = "ident_str")]
    pub next: Ident,
}

mod ident_str {
    use crate::lang::Ident;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Ident, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ident, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl IdSequencer {
    pub fn take(&mut self) -> Ident {
        let m = self.next;
        self.next += 1;
        m
    }

    /// Most recently used identifier, if any.
    pub fn previous(&self) -> Option<Ident> {
        self.next.checked_sub(1)
    }

    /// Give back the most recent identifier (reverse direction).
    pub fn consume_previous(&mut self) -> ExecResult<Ident> {
        let m = self.previous().ok_or(ExecError::SequencerUnderflow)?;
        self.next = m;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn c(s: &str) -> ConstructId {
        s.parse().unwrap()
    }

    #[test]
    fn sequencer() {
        let mut s = IdSequencer::default();
        assert_eq!(s.previous(), None);
        assert!(s.consume_previous().is_err());
        assert_eq!((s.take(), s.take(), s.take()), (0, 1, 2));
        assert_eq!(s.next, 3);
        assert_eq!(s.previous(), Some(2));
        assert_eq!(s.consume_previous().unwrap(), 2);
        assert_eq!(s.next, 2);
    }

    #[test]
    fn scoped_lookup() {
        let mut g = VarEnv::default();
        g.globals.insert("X".into(), Binding { loc: 0, kind: BindingKind::Scalar });
        let sc = |l| Binding { loc: l, kind: BindingKind::Scalar };
        g.bind_local("v", &c("b1"), sc(1));
        g.bind_local("v", &c("b2"), sc(2));
        let inner = StmtPath(vec![c("b2"), c("b1")]);
        let outer = StmtPath(vec![c("b1")]);
        assert_eq!(g.eval_var("X", &StmtPath::default()).unwrap().loc, 0);
        assert_eq!(g.eval_var("v", &inner).unwrap().loc, 2);
        assert_eq!(g.eval_var("v", &outer).unwrap().loc, 1);
        assert!(g.eval_var("w", &inner).is_err());
        g.unbind_local("v", &c("b2"));
        assert_eq!(g.eval_var("v", &inner).unwrap().loc, 1);
        assert!(!g.locals.contains_key(&c("b2")));
    }

    #[test]
    fn proc_lookup() {
        let mut mu: ProcEnv<()> = ProcEnv::default();
        mu.declare(&c("b1"), &c("p1"), "f", Prog::Empty);
        mu.declare(&c("b2"), &c("p2"), "f", Prog::Empty);
        assert_eq!(mu.eval_proc("f", &StmtPath(vec![c("b2"), c("b1")])).unwrap(), c("p2"));
        assert_eq!(mu.eval_proc("f", &StmtPath(vec![c("b1")])).unwrap(), c("p1"));
        assert!(mu.eval_proc("g", &StmtPath(vec![c("b1")])).is_err());
    }

    #[test]
    fn allocator_lowest_free() {
        let mut s: DataStore<BigInt> = DataStore::default();
        let x = s.next_loc();
        let a = s.next_loc();
        let b = s.next_loc_block(5);
        assert_eq!((x, a, b), (0, 1, 2));
        s.write(a, BigInt::from(9));
        s.free(a);
        assert_eq!(s.read(a), BigInt::from(0));
        // a single slot fits the hole, a block of two does not
        assert_eq!(s.next_loc_block(2), 7);
        assert_eq!(s.next_loc(), 1);
    }

    #[test]
    fn delta_stacks() {
        let mut d: AuxStore<BigInt> = AuxStore::default();
        d.push_value("X", 0, BigInt::from(2));
        assert_eq!(d.pop_value("X", 0).unwrap(), BigInt::from(2));
        assert!(matches!(d.pop_value("X", 0), Err(ExecError::DeltaEmpty(_))));
        for v in [1, 3, 4, 6, 7] {
            d.push_value("l", 78, BigInt::from(v));
        }
        d.push_value("k", 5, BigInt::from(1));
        d.push_value("k", 6, BigInt::from(2));
        assert_eq!(d.drain("k", 5), Vec::<BigInt>::new());
        assert_eq!(d.drain("k", 6), vec![BigInt::from(2)]);
        let drained = d.drain("l", 78);
        assert_eq!(drained, [7, 6, 4, 3, 1].map(BigInt::from).to_vec());
        d.b.push((3, true));
        assert!(matches!(d.pop_b(4), Err(ExecError::DeltaMismatch { found: 3, .. })));
        assert!(d.pop_b(3).unwrap());
    }

    #[test]
    fn delta_wire_format() {
        let mut d: AuxStore<BigInt> = AuxStore::default();
        d.push_value("count", 6, BigInt::from(0));
        d.w.push((7, false));
        d.w.push((32, true));
        let j = serde_json::to_value(&d).unwrap();
        assert_eq!(j["W"][0], serde_json::json!(["32", "1"]));
        assert_eq!(j["values"]["count"][0], serde_json::json!(["6", "0"]));
        let back: AuxStore<BigInt> = serde_json::from_value(j).unwrap();
        assert_eq!(back, d);
    }
}

//! State equivalence between executors.
//!
//! Each check returns the first difference found, as text.

use super::traditional::Traditional;
use crate::exec::Machine;
use crate::frontend::inv;
use crate::lang::{erase_annotations, Annot, ConstructId, Prog, Program, Stmt};
use crate::scalar::Scalar;
use crate::state::{ProgState, Value};
use std::collections::BTreeMap;

pub type Mismatch = String;

type Bindings<V> = BTreeMap<(String, Option<ConstructId>), Value<V>>;

fn bindings<V: Scalar, A: Annot>(st: &ProgState<V, A>) -> Result<Bindings<V>, Mismatch> {
    st.gamma
        .entries()
        .into_iter()
        .map(|(n, scope, b)| {
            let v = st.value_of(&n, &b).map_err(|e| format!("{n}: {e}"))?;
            Ok(((n, scope), v))
        })
        .collect()
}

fn erased_beta<V, A: Annot>(st: &ProgState<V, A>, f: &dyn Fn(&Prog<A>) -> Prog<A>) -> BTreeMap<ConstructId, Program> {
    st.beta
        .0
        .iter()
        .map(|(k, s)| (k.clone(), erase_annotations(&f(&Prog::from_stmt(s.clone())))))
        .collect()
}

fn erased_mu<V, A: Annot>(st: &ProgState<V, A>, f: &dyn Fn(&Prog<A>) -> Prog<A>) -> BTreeMap<ConstructId, (String, Program)> {
    st.mu
        .entries
        .iter()
        .map(|(k, e)| (k.clone(), (e.name.clone(), erase_annotations(&f(&e.body)))))
        .collect()
}

fn same<T: PartialEq + std::fmt::Debug>(what: &str, a: T, b: T) -> Result<(), Mismatch> {
    if a == b {
        Ok(())
    } else {
        Err(format!("{what} differ: {a:?} vs {b:?}"))
    }
}

/// Plain configuration against annotated configuration: same program once
/// stacks are erased, same variables with the same values, same loop and
/// procedure environments.
pub fn check_equiv_fwd<V: Scalar>(t: &Traditional<V>, m: &Machine<V>) -> Result<(), Mismatch> {
    same("programs", erase_annotations(&t.prog), erase_annotations(&m.prog))?;
    same("bindings", bindings(&t.state)?, bindings(&m.state)?)?;
    same("memory", t.state.sigma.nonzero().collect::<Vec<_>>(), m.state.sigma.nonzero().collect::<Vec<_>>())?;
    same("loop copies", erased_beta(&t.state, &|p| p.clone()), erased_beta(&m.state, &|p| p.clone()))?;
    same("procedure entries", erased_mu(&t.state, &|p| p.clone()), erased_mu(&m.state, &|p| p.clone()))?;
    same("procedure bindings", &t.state.mu.bindings, &m.state.mu.bindings)
}

/// A machine after reversal against the machine it started from: same
/// variables, memory and δ; loop and procedure environments equal once the
/// reversed side is inverted back.
pub fn check_equiv_rev<V: Scalar>(start: &Machine<V>, back: &Machine<V>) -> Result<(), Mismatch> {
    same("bindings", bindings(&start.state)?, bindings(&back.state)?)?;
    same("memory", start.state.sigma.nonzero().collect::<Vec<_>>(), back.state.sigma.nonzero().collect::<Vec<_>>())?;
    same("loop copies", erased_beta(&start.state, &|p| p.clone()), erased_beta(&back.state, &|p| inv(p)))?;
    same("procedure entries", erased_mu(&start.state, &|p| p.clone()), erased_mu(&back.state, &|p| inv(p)))?;
    same("procedure bindings", &start.state.mu.bindings, &back.state.mu.bindings)?;
    same("δ", &start.delta, &back.delta)?;
    same("next identifier", start.seq.next, back.seq.next)
}

/// Loop copy as a one-statement program.
pub fn copy_program<A: Annot>(s: &Stmt<A>) -> Prog<A> {
    Prog::from_stmt(s.clone())
}

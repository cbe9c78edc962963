use num_bigint::BigInt;
use proptest::prelude::*;
use revint_core::exec::Machine;
use revint_core::frontend::{ann, inv, parse_program};
use revint_core::harness::equiv::check_equiv_rev;
use revint_core::harness::generate::{generate_program, generate_source};
use revint_core::harness::roundtrip::roundtrip;
use revint_core::lang::{erase_annotations, Prog, Stmt, StmtKind};
use revint_core::pretty::program_text;
use revint_core::scheduler::{replay_from_identifiers, Policy, SeededRandom};
use revint_core::state::AuxStore;
use revint_core::trace::Trace;
use std::collections::BTreeMap;

type M = Machine<BigInt>;

fn globals() -> impl Strategy<Value = BTreeMap<String, BigInt>> {
    (-5i64..6, -5i64..6, -5i64..6).prop_map(|(x, y, z)| {
        [("X", x), ("Y", y), ("Z", z)].into_iter().map(|(k, v)| (k.to_string(), BigInt::from(v))).collect()
    })
}

fn forward(p: &revint_core::lang::Program, init: &BTreeMap<String, BigInt>, seed: u64) -> (M, Vec<revint_core::redex::StepLabel>) {
    let mut m = Machine::new(p, init);
    let mut t = Vec::new();
    m.run(&mut SeededRandom::new(seed), 1_000_000, &mut t).unwrap();
    (m, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_restores(pseed in 0u64..10_000, budget in 1u32..25, seed in any::<u64>(), init in globals()) {
        let p = generate_program(pseed, budget);
        let r = roundtrip(&p, &init, &Policy::SeededRandom { seed }, seed, 1_000_000);
        prop_assert!(r.report.passed(), "{:?}", r.report);
        prop_assert_eq!(r.oracle, Ok(()));
        prop_assert!(r.max_reverse_choices <= 1);
    }

    #[test]
    fn uniform_policy_roundtrips(pseed in 0u64..10_000, seed in any::<u64>()) {
        let p = generate_program(pseed, 15);
        let policy = Policy::Uniform { inner: Box::new(Policy::SeededRandom { seed }) };
        let r = roundtrip::<BigInt>(&p, &BTreeMap::new(), &policy, seed, 1_000_000);
        prop_assert!(r.report.passed(), "{:?}", r.report);
    }

    #[test]
    fn inversion_and_erasure(pseed in 0u64..10_000, budget in 0u32..30) {
        let p = generate_program(pseed, budget);
        let ap = ann(&p);
        prop_assert_eq!(inv(&inv(&ap)), ap.clone());
        prop_assert_eq!(erase_annotations(&ap), p.clone());
        prop_assert_eq!(inv(&inv(&p)), p);
    }

    #[test]
    fn printing_reparses(pseed in 0u64..10_000, budget in 0u32..30) {
        let p = generate_program(pseed, budget);
        let text = program_text(&p);
        prop_assert_eq!(parse_program(&text).unwrap(), p);
        let again = parse_program(&generate_source(pseed, budget)).unwrap();
        prop_assert_eq!(program_text(&again), text);
    }

    #[test]
    fn stacks_stay_ordered(pseed in 0u64..10_000, seed in any::<u64>()) {
        let p = generate_program(pseed, 15);
        let (m, _) = forward(&p, &BTreeMap::new(), seed);
        let mut ok = true;
        m.record.for_each_stmt(true, &mut |s| {
            if let Some(st) = s.stack() {
                ok &= st.is_well_ordered();
            }
        });
        prop_assert!(ok);
    }

    #[test]
    fn identifiers_replay_the_run(pseed in 0u64..10_000, seed in any::<u64>()) {
        let p = generate_program(pseed, 15);
        let (m, t) = forward(&p, &BTreeMap::new(), seed);
        let mut script = replay_from_identifiers(&m).unwrap();
        let mut n: M = Machine::new(&p, &BTreeMap::new());
        let mut t2 = Vec::new();
        n.run(&mut script, 1_000_000, &mut t2).unwrap();
        prop_assert_eq!(&n.delta, &m.delta);
        prop_assert_eq!(n.globals(), m.globals());
        let ids = |t: &[revint_core::redex::StepLabel]| t.iter().filter(|l| l.id.is_some()).map(|l| (l.id, l.rule.clone())).collect::<Vec<_>>();
        prop_assert_eq!(ids(&t2), ids(&t));
    }

    #[test]
    fn trace_and_delta_serialise(pseed in 0u64..10_000, seed in any::<u64>(), init in globals()) {
        let p = generate_program(pseed, 12);
        let (m, t) = forward(&p, &init, seed);
        let src = program_text(&p);
        let tr = Trace::new(&src, t, &m);
        prop_assert_eq!(Trace::<BigInt>::from_json(&tr.to_json()).unwrap(), tr);
        let d: AuxStore<BigInt> = serde_json::from_str(&serde_json::to_string(&m.delta).unwrap()).unwrap();
        prop_assert_eq!(d, m.delta.clone());
        let back: M = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn equivalence_is_reflexive_and_symmetric(pseed in 0u64..10_000, seed in any::<u64>()) {
        let p = generate_program(pseed, 12);
        let start: M = Machine::new(&p, &BTreeMap::new());
        let (m, _) = forward(&p, &BTreeMap::new(), seed);
        prop_assert!(check_equiv_rev(&start, &start).is_ok());
        prop_assert!(check_equiv_rev(&m, &m).is_ok());
        prop_assert_eq!(check_equiv_rev(&start, &m).is_ok(), check_equiv_rev(&m, &start).is_ok());
    }

    #[test]
    fn seeded_choice_in_range(seed in any::<u64>(), step in any::<u64>(), n in 1usize..50) {
        let i = SeededRandom::pick(seed, step, n);
        prop_assert!(i < n);
        prop_assert_eq!(i, SeededRandom::pick(seed, step, n));
    }
}

#[test]
fn equivalence_notices_one_cell() {
    let p = parse_program("X = 1").unwrap();
    let a: M = Machine::new(&p, &BTreeMap::new());
    let mut b = a.clone();
    b.state.sigma.write(0, BigInt::from(9));
    assert!(check_equiv_rev(&a, &b).is_err());
    let mut c = a.clone();
    c.delta.push_value("X", 0, BigInt::from(1));
    assert!(check_equiv_rev(&a, &c).unwrap_err().contains("δ"));
}

#[test]
fn equivalence_notices_a_procedure_body() {
    let p = parse_program("begin proc f is X += 1 end; call f end").unwrap();
    let mut a: M = Machine::new(&p, &BTreeMap::new());
    let step = a.enabled()[0].path.clone();
    a.step(&step).unwrap();
    assert_eq!(a.state.mu.entries.len(), 1);
    let mut b = a.clone();
    // check_equiv_rev inverts the second side's bodies, so b must hold inv of a's
    for e in b.state.mu.entries.values_mut() {
        e.body = inv(&e.body);
    }
    assert!(check_equiv_rev(&a, &b).is_ok());
    let mut c = b.clone();
    for e in c.state.mu.entries.values_mut() {
        e.body = Prog::from_stmt(Stmt::skip(revint_core::lang::Site(0), None));
        assert!(!matches!(e.body.as_stmt().map(|s| &s.kind), Some(StmtKind::Assign { .. })));
    }
    assert!(check_equiv_rev(&a, &c).unwrap_err().contains("procedure"));
}

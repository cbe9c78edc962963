use num_bigint::BigInt;
use revint_core::exec::Machine;
use revint_core::frontend::{parse_annotated, parse_program};
use revint_core::scheduler::{replay_from_identifiers, script_from_stacks, SeededRandom};
use std::collections::BTreeMap;

const SORT: &str = include_str!("fixtures/sort.rpl");
const EXECUTED: &str = include_str!("fixtures/sort_executed.rpl");

fn head_first<T: ToString>(v: &[(u64, T)]) -> Vec<(u64, String)> {
    v.iter().rev().map(|(m, x)| (*m, x.to_string())).collect()
}

fn pairs(v: &[(u64, i64)]) -> Vec<(u64, String)> {
    v.iter().map(|(m, x)| (*m, x.to_string())).collect()
}

fn replay() -> Machine<BigInt> {
    let (p, stacks) = parse_annotated(EXECUTED).unwrap();
    let mut script = script_from_stacks(stacks.iter().map(|(s, st)| (*s, st))).unwrap();
    assert_eq!(script.len(), 79);
    let mut m = Machine::new(&p, &BTreeMap::new());
    m.run(&mut script, 100_000, &mut Vec::new()).unwrap();
    assert!(m.is_terminal());
    m
}

#[test]
fn executed_sort_delta() {
    let m = replay();
    let temp = [(54, 7), (51, 0), (44, 7), (42, 3), (39, 0), (36, 0), (29, 7), (26, 0), (19, 4), (18, 7), (13, 0), (12, 0)];
    assert_eq!(head_first(&m.delta.values["temp"]), pairs(&temp));
    assert_eq!(head_first(&m.delta.values["count"]), pairs(&[(6, 0)]));
    let l = [
        (78, 7), (78, 6), (78, 4), (78, 3), (78, 1), (53, 6), (52, 7), (43, 4), (41, 7), (40, 1), (38, 3),
        (28, 1), (27, 7), (17, 3), (16, 1), (15, 4), (14, 7), (5, 0), (4, 0), (3, 0), (2, 0), (1, 0),
    ];
    assert_eq!(head_first(&m.delta.values["l"]), pairs(&l));
    let w: Vec<(u64, bool)> = m.delta.w.iter().rev().cloned().collect();
    assert_eq!(w, vec![(77, true), (67, true), (57, true), (32, true), (7, false)]);
    // condition i3 is evaluated at 60 (stack ⟨71,69,60,...⟩) and is false
    let b: Vec<(u64, bool)> = m.delta.b.iter().rev().cloned().collect();
    let t = true;
    let f = false;
    assert_eq!(
        b,
        vec![
            (75, f), (73, f), (71, f), (70, f), (65, f), (64, f), (61, f), (60, f),
            (55, t), (50, f), (46, t), (45, t), (30, t), (24, f), (21, t), (20, t)
        ]
    );
    assert_eq!(m.delta.values.len(), 3);
    assert!(m.delta.wi.len() == 1 && m.delta.pr.is_empty());
}

#[test]
fn executed_sort_replays_itself() {
    let m = replay();
    let mut again = replay_from_identifiers(&m).unwrap();
    let (p, _) = parse_annotated(EXECUTED).unwrap();
    let mut n: Machine<BigInt> = Machine::new(&p, &BTreeMap::new());
    n.run(&mut again, 100_000, &mut Vec::new()).unwrap();
    assert_eq!(n.delta, m.delta);
}

#[test]
fn sorts_under_any_seed() {
    let p = parse_program(SORT).unwrap();
    for seed in 0..20 {
        let mut m: Machine<BigInt> = Machine::new(&p, &BTreeMap::new());
        m.run(&mut SeededRandom::new(seed), 100_000, &mut Vec::new()).unwrap();
        assert_eq!(m.seq.next, 79);
        assert_eq!(m.global("count").unwrap().to_string(), "4");
        // the removal of l saves the final array, highest index first
        let fin: Vec<String> = head_first(&m.delta.values["l"])[..5].iter().rev().map(|(_, v)| v.clone()).collect();
        assert_eq!(fin, ["1", "3", "4", "6", "7"]);
    }
}

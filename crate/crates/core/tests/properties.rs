mod common;

use common::{corpus_lts, lts_of};
use crashmpst::context::{Endpoint, ReductionMode};
use crashmpst::properties::{
    check, check_deadlock_freedom, check_liveness, check_never_termination, check_safety, check_termination,
    fair_lasso_oracle, OracleOutcome, Verdict,
};
use crashmpst::syntax::parse_type;
use crashmpst::{Lts, Property};

fn verdicts(lts: &Lts) -> [bool; 5] {
    Property::ALL.map(|p| check(lts, p).holds)
}

/// Every witness step is an edge of the LTS, and each step's state is the next one's source.
fn assert_replayable(lts: &Lts, v: &Verdict) {
    let Some(w) = &v.witness else {
        assert!(v.holds, "failing verdict without witness");
        return;
    };
    assert!(!v.holds);
    assert_eq!(w.trace.first().map(|s| s.state), Some(lts.initial()));
    for walk in [&w.trace, &w.cycle] {
        for pair in walk.windows(2) {
            let label = pair[0].label.as_ref().expect("inner steps carry a label");
            assert!(
                lts.out_edges(pair[0].state).any(|e| &e.label.to_string() == label
                    && e.target == pair[1].state
                    && e.label.is_reduction(ReductionMode::MaybeCrash)),
                "step {label} from {} to {} is not a reduction edge",
                pair[0].state,
                pair[1].state
            );
        }
        for s in walk.iter() {
            assert_eq!(s.context, lts.states[s.state].to_string());
        }
    }
    if let (Some(last), Some(first)) = (w.trace.last(), w.cycle.first()) {
        assert_eq!(last.state, first.state, "cycle must start where the prefix ends");
        assert_eq!(w.cycle.last().unwrap().state, first.state, "cycle must be closed");
        assert!(w.cycle.len() >= 2);
    }
}

#[test]
fn corpus_verdicts() {
    //                      safe   df     live   term   nterm
    let expected = [
        ("dns.mpst", [true, true, true, true, false]),
        ("adder.mpst", [true, true, true, false, false]),
        ("twobuyers.mpst", [true, true, true, true, false]),
        ("negotiate.mpst", [false, false, false, false, false]),
        ("broadcast.mpst", [true, true, true, true, false]),
    ];
    for (file, want) in expected {
        let lts = corpus_lts(file, None);
        assert_eq!(verdicts(&lts), want, "{file}");
        for p in Property::ALL {
            assert_replayable(&lts, &check(&lts, p));
        }
    }
}

#[test]
fn gamma_verdicts() {
    let cases: [(&str, &[&str], [bool; 5]); 8] = [
        ("gamma_a.mpst", &[], [true, false, false, false, false]),
        ("gamma_a.mpst", &["r"], [true, false, false, false, false]),
        ("gamma_a.mpst", &["p"], [true, true, true, false, false]),
        ("gamma_b.mpst", &[], [true, true, false, false, false]),
        ("gamma_b.mpst", &["r"], [true, true, false, false, true]),
        ("gamma_c.mpst", &["p", "q", "r"], [true, true, true, true, false]),
        ("gamma_c.mpst", &["p"], [true, false, false, false, false]),
        ("gamma_c.mpst", &[], [false, false, false, false, false]),
    ];
    for (file, reliable, want) in cases {
        let lts = corpus_lts(file, Some(reliable));
        assert_eq!(verdicts(&lts), want, "{file} with {reliable:?}");
        for p in Property::ALL {
            assert_replayable(&lts, &check(&lts, p));
        }
    }
}

#[test]
fn gamma_a_deadlock_leaves_the_backup_waiting() {
    let lts = corpus_lts("gamma_a.mpst", Some(&["r"]));
    let v = check_deadlock_freedom(&lts);
    let last = v.witness.unwrap().trace.last().unwrap().state;
    let g = &lts.states[last];
    assert!(g.get(&Endpoint::new("s", "p")).unwrap().is_stop());
    assert_eq!(g.get(&Endpoint::new("s", "q")).unwrap(), &parse_type("end").unwrap());
    assert_eq!(g.get(&Endpoint::new("s", "r")).unwrap(), &parse_type("q?{ok.end, crash.end}").unwrap());
}

#[test]
fn label_mismatch_is_unsafe_at_the_start() {
    let lts = lts_of(&[("p", "q!{a.end}"), ("q", "p?{b.end}")], &["p", "q"]);
    let v = check_safety(&lts);
    assert!(!v.holds);
    let w = v.witness.as_ref().unwrap();
    assert_eq!(w.trace.len(), 1);
    assert_eq!(w.trace[0].state, 0);
}

#[test]
fn ended_context() {
    let lts = lts_of(&[("p", "end"), ("q", "end")], &[]);
    assert!(check_safety(&lts).holds);
    assert!(check_deadlock_freedom(&lts).holds);
    assert!(check_termination(&lts).holds);
    assert!(check_liveness(&lts).holds);
    let v = check_never_termination(&lts);
    assert!(!v.holds);
    assert_eq!(v.witness.unwrap().trace.last().unwrap().state, 0);
}

#[test]
fn pure_recovery_and_stop_count_as_finished() {
    // q waits only for p's crash; p is reliable so it never comes.
    let lts = lts_of(&[("p", "end"), ("q", "p?{crash.end}")], &["p"]);
    assert!(check_deadlock_freedom(&lts).holds);
    // q waits for a real message that never comes.
    let lts = lts_of(&[("p", "end"), ("q", "p?{a.end, crash.end}")], &["p"]);
    assert!(!check_deadlock_freedom(&lts).holds);
}

#[test]
fn recursion_defeats_termination_but_not_deadlock_freedom() {
    let lts = lts_of(&[("p", "rec t.q!{a.t}"), ("q", "rec t.p?{a.t}")], &["p", "q"]);
    assert!(check_deadlock_freedom(&lts).holds);
    assert!(check_never_termination(&lts).holds);
    let v = check_termination(&lts);
    assert!(!v.holds);
    assert_replayable(&lts, &v);
    assert!(!v.witness.unwrap().cycle.is_empty());
}

/// p and q exchange `a` forever in a two-state loop while r's output to q is never taken.
fn starving_loop() -> Lts {
    lts_of(
        &[("p", "rec t.q!{a.q!{a.t}}"), ("q", "rec t.p?{a.p?{a.t}}"), ("r", "q!{b.end}")],
        &["p", "q", "r"],
    )
}

#[test]
fn oracle_on_starving_loop() {
    let lts = starving_loop();
    assert_eq!(lts.reduction_reachable().len(), 2);
    match fair_lasso_oracle(&lts, 200) {
        OracleOutcome::NotLive(w) => {
            assert!(w.reason.contains('r'), "{}", w.reason);
            assert_eq!(w.cycle.len(), 3);
            assert_eq!(w.cycle[0].state, w.cycle[2].state);
        }
        other => panic!("expected a violation, got {other:?}"),
    }
    let v = check_liveness(&lts);
    assert!(!v.holds);
    assert_replayable(&lts, &v);
}

#[test]
fn oracle_basic_cases() {
    let lts = lts_of(&[("p", "end")], &[]);
    assert_eq!(fair_lasso_oracle(&lts, 10), OracleOutcome::Live);
    let lts = corpus_lts("gamma_b.mpst", Some(&[]));
    assert!(matches!(fair_lasso_oracle(&lts, 200), OracleOutcome::NotLive(_)));
    let lts = corpus_lts("twobuyers.mpst", None);
    assert!(matches!(fair_lasso_oracle(&lts, 5), OracleOutcome::Inconclusive(_)));
}

#[test]
fn fairness_forces_alternation() {
    // q alternates between p and r, so neither sender starves.
    let lts = lts_of(
        &[
            ("p", "rec t.q!{a.t}"),
            ("r", "rec t.q!{b.t}"),
            ("q", "rec t.p?{a.r?{b.t}}"),
        ],
        &["p", "q", "r"],
    );
    assert!(check_liveness(&lts).holds);
    assert_eq!(fair_lasso_oracle(&lts, 200), OracleOutcome::Live);
}

/// Whether some reduction path from the initial state visits more than `n` states,
/// by exhaustive depth-bounded search.
fn has_path_longer_than(lts: &Lts, n: usize) -> bool {
    fn go(lts: &Lts, at: usize, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        lts.out_edges(at)
            .filter(|e| e.label.is_reduction(ReductionMode::MaybeCrash))
            .any(|e| go(lts, e.target, left - 1))
    }
    go(lts, lts.initial(), n)
}

#[test]
fn termination_matches_bounded_paths_on_small_instances() {
    let mut checked = 0;
    for (desc, lts) in common::random_lts_batch(21, 150, 10) {
        let n = lts.reduction_reachable().len();
        let bounded = check_deadlock_freedom(&lts).holds && !has_path_longer_than(&lts, n);
        assert_eq!(check_termination(&lts).holds, bounded, "{desc}");
        checked += 1;
    }
    assert_eq!(checked, 150);
}

#[test]
fn termination_implies_deadlock_freedom_and_excludes_never_termination() {
    let mut all: Vec<(String, Lts)> = common::random_lts_batch(22, 200, 200);
    for f in common::CORPUS.iter().chain(common::GAMMAS.iter()) {
        all.push((f.to_string(), corpus_lts(f, None)));
    }
    for (desc, lts) in &all {
        let term = check_termination(lts).holds;
        if term {
            assert!(check_deadlock_freedom(lts).holds, "{desc}");
        }
        assert!(!(term && check_never_termination(lts).holds), "{desc}");
    }
}

#[test]
fn all_reliable_corpus_variants_are_safe() {
    for file in ["dns_reliable.mpst", "twobuyers.mpst", "broadcast.mpst", "adder.mpst"] {
        let doc = common::load(file);
        let s = doc.session.clone().unwrap();
        let lts = crashmpst::build_lts(&doc.context, &s, &doc.context.roles(&s), &Default::default()).unwrap();
        assert!(check_safety(&lts).holds, "{file}");
    }
}

#[test]
fn random_witnesses_replay() {
    for (_, lts) in common::random_lts_batch(23, 100, 200) {
        for p in Property::ALL {
            assert_replayable(&lts, &check(&lts, p));
        }
    }
}

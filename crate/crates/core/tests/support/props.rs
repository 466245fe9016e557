//! Core property checks, shared by the core test suite and the acceptance
//! harness. Each check runs a fixed number of generated cases and returns
//! how many it ran.

#![allow(dead_code)]

use std::cell::Cell;
use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use proptest::test_runner::{TestCaseError, TestRng, TestRunner};
use serde_json::{Map, Value};

use smcgate_core::crypto::Validity;
use smcgate_core::{
    build_label_superset, parse_predicate, query_matches, signing_input, to_canonical_bytes, Atom,
    Grant, Identity, Label, PeerProfile, Predicate, Preprocessor, Preselector, Query, UnsignedGrant,
};

// Small alphabets so that generated predicates and label sets overlap often.
fn token() -> impl Strategy<Value = String> + Clone {
    prop_oneof![
        prop::sample::select(vec!["a", "b", "type", "roomtype", "level", "x-1", "k.v", "é"])
            .prop_map(str::to_owned),
        "[a-z0-9_:/@+#.-]{1,6}",
    ]
}

fn small_token() -> impl Strategy<Value = String> + Clone {
    prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(str::to_owned)
}

#[derive(Debug, Clone)]
enum RawAtom {
    Eq(String, String),
    In(String, Vec<String>),
}

fn raw_atom(tok: impl Strategy<Value = String> + Clone) -> impl Strategy<Value = RawAtom> {
    prop_oneof![
        (tok.clone(), tok.clone()).prop_map(|(k, v)| RawAtom::Eq(k, v)),
        (tok.clone(), prop::collection::btree_set(tok, 1..4))
            .prop_map(|(k, vs)| RawAtom::In(k, vs.into_iter().collect())),
    ]
}

fn to_atom(a: &RawAtom) -> Atom {
    match a {
        RawAtom::Eq(k, v) => Atom::Eq {
            key: k.clone(),
            value: v.clone(),
        },
        RawAtom::In(k, vs) => Atom::In {
            key: k.clone(),
            values: vs.clone(),
        },
    }
}

/// Renders atoms in the given order with the given membership-list order.
fn render(atoms: &[RawAtom], reverse_lists: bool, spaced: bool) -> String {
    let sep = if spaced { "  ∧\t" } else { "∧" };
    atoms
        .iter()
        .map(|a| match a {
            RawAtom::Eq(k, v) if spaced => format!("{k}   =  {v}"),
            RawAtom::Eq(k, v) => format!("{k}={v}"),
            RawAtom::In(k, vs) => {
                let mut vs = vs.clone();
                if reverse_lists {
                    vs.reverse();
                }
                format!("{k} ∈ [{}]", vs.join(" , "))
            }
        })
        .collect::<Vec<_>>()
        .join(sep)
}

/// Reference semantics, written independently of the library evaluator.
fn oracle_eval(atoms: &[RawAtom], labels: &HashSet<(String, String)>) -> bool {
    atoms.iter().all(|a| match a {
        RawAtom::Eq(k, v) => labels.contains(&(k.clone(), v.clone())),
        RawAtom::In(k, vs) => vs.iter().any(|v| labels.contains(&(k.clone(), v.clone()))),
    })
}

fn label_set(pairs: &[(String, String)]) -> BTreeSet<Label> {
    pairs
        .iter()
        .map(|(k, v)| Label::new(k.clone(), v.clone()).unwrap())
        .collect()
}

fn predicate(tok: impl Strategy<Value = String> + Clone) -> impl Strategy<Value = Predicate> {
    prop::collection::vec(raw_atom(tok), 1..4)
        .prop_map(|atoms| Predicate::new(atoms.iter().map(to_atom)).unwrap())
}

fn query(tok: impl Strategy<Value = String> + Clone) -> impl Strategy<Value = Query> {
    (
        predicate(tok),
        prop::sample::select(Preselector::ALL.to_vec()),
        prop::sample::select(Preprocessor::ALL.to_vec()),
        prop::sample::select(vec!["sum", "median"]),
        prop::sample::select(vec!["power_consumption", "temperature"]),
    )
        .prop_map(|(p, s, f, proto, input)| Query::new(p, s, f, proto, input).unwrap())
}

pub fn identity() -> Identity {
    Identity::self_signed("authority", "", Validity::new(0, 1 << 40).unwrap())
}

fn check<S: Strategy>(
    cases: u32,
    deterministic: bool,
    strategy: S,
    body: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let config = ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = if deterministic {
        TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm))
    } else {
        TestRunner::new(config)
    };
    let ran = Cell::new(0u32);
    runner
        .run(&strategy, |v| {
            ran.set(ran.get() + 1);
            body(v)
        })
        .map_err(|e| e.to_string())?;
    Ok(ran.get())
}

pub type Property = (&'static str, fn(u32, bool) -> Result<u32, String>);

pub const PROPERTIES: &[Property] = &[
    ("predicate canonical round-trip", predicate_round_trip),
    ("predicate source order irrelevant", predicate_source_order),
    ("eval agrees with reference", eval_reference),
    ("eval monotone in labels", eval_monotone),
    ("label superset permutation invariant", label_superset_permutation),
    ("query_matches equivalence laws", query_matches_equivalence),
    ("query_matches ignores atom order", query_matches_atom_order),
    ("canonical bytes deterministic", canonical_deterministic),
    ("canonical bytes ignore key order", canonical_key_order),
    ("signature field excluded", signature_field_excluded),
];

pub fn predicate_round_trip(cases: u32, det: bool) -> Result<u32, String> {
    check(cases, det, prop::collection::vec(raw_atom(token()), 1..5), |atoms| {
        let p = Predicate::new(atoms.iter().map(to_atom)).unwrap();
        let canonical = p.canonical();
        prop_assert_eq!(parse_predicate(&canonical).unwrap(), p.clone());
        prop_assert_eq!(parse_predicate(&canonical).unwrap().canonical(), canonical);
        Ok(())
    })
}

pub fn predicate_source_order(cases: u32, det: bool) -> Result<u32, String> {
    let s = (prop::collection::vec(raw_atom(token()), 1..5), any::<bool>(), any::<bool>());
    check(cases, det, s, |(atoms, reverse_lists, spaced)| {
        let forward = parse_predicate(&render(&atoms, false, false)).unwrap();
        let mut rev = atoms.clone();
        rev.reverse();
        let backward = parse_predicate(&render(&rev, reverse_lists, spaced)).unwrap();
        prop_assert_eq!(forward, backward);
        Ok(())
    })
}

pub fn eval_reference(cases: u32, det: bool) -> Result<u32, String> {
    let s = (
        prop::collection::vec(raw_atom(small_token()), 1..4),
        prop::collection::vec((small_token(), small_token()), 0..8),
    );
    check(cases, det, s, |(atoms, pairs)| {
        let p = Predicate::new(atoms.iter().map(to_atom)).unwrap();
        let set: HashSet<_> = pairs.iter().cloned().collect();
        prop_assert_eq!(p.eval(&label_set(&pairs)), oracle_eval(&atoms, &set));
        Ok(())
    })
}

pub fn eval_monotone(cases: u32, det: bool) -> Result<u32, String> {
    let s = (
        predicate(small_token()),
        prop::collection::vec((small_token(), small_token()), 0..8),
        prop::collection::vec((small_token(), small_token()), 0..8),
    );
    check(cases, det, s, |(p, base, extra)| {
        let small = label_set(&base);
        let mut big = small.clone();
        big.extend(label_set(&extra));
        if p.eval(&small) {
            prop_assert!(p.eval(&big));
        }
        Ok(())
    })
}

pub fn label_superset_permutation(cases: u32, det: bool) -> Result<u32, String> {
    let key = identity();
    let s = (
        prop::collection::vec(prop::collection::vec((small_token(), small_token()), 1..5), 0..6),
        any::<u64>(),
    );
    check(cases, det, s, |(peers, seed)| {
        let profiles: Vec<PeerProfile> = peers
            .iter()
            .enumerate()
            .map(|(i, pairs)| PeerProfile {
                peer_id: format!("p{i}"),
                certificate: key.certificate().clone(),
                labels: label_set(pairs),
                inputs: ["x".to_owned()].into(),
                protocols: ["sum".to_owned()].into(),
            })
            .collect();
        let mut shuffled = profiles.clone();
        // Deterministic Fisher-Yates driven by the generated seed.
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let expected: BTreeSet<Label> = label_set(&peers.concat());
        prop_assert_eq!(build_label_superset(&profiles), expected.clone());
        prop_assert_eq!(build_label_superset(&shuffled), expected);
        Ok(())
    })
}

pub fn query_matches_equivalence(cases: u32, det: bool) -> Result<u32, String> {
    let s = (
        query(small_token()),
        query(small_token()),
        query(small_token()),
        any::<bool>(),
        any::<bool>(),
    );
    check(cases, det, s, |(a, b, c, b_copies_a, c_copies_b)| {
        // Copies are rebuilt from text so equal queries are distinct values.
        let reparse = |q: &Query| {
            Query::new(
                parse_predicate(&q.predicate.to_string()).unwrap(),
                q.preselector,
                q.preprocessor,
                q.protocol.clone(),
                q.input.clone(),
            )
            .unwrap()
        };
        let b = if b_copies_a { reparse(&a) } else { b };
        let c = if c_copies_b { reparse(&b) } else { c };
        prop_assert!(query_matches(&a, &a));
        prop_assert_eq!(query_matches(&a, &b), query_matches(&b, &a));
        if query_matches(&a, &b) && query_matches(&b, &c) {
            prop_assert!(query_matches(&a, &c));
        }
        prop_assert_eq!(query_matches(&a, &b), a.canonical_string() == b.canonical_string());
        Ok(())
    })
}

pub fn query_matches_atom_order(cases: u32, det: bool) -> Result<u32, String> {
    check(cases, det, prop::collection::vec(raw_atom(small_token()), 1..4), |atoms| {
        let mut rev = atoms.clone();
        rev.reverse();
        let mk = |text: String| {
            Query::new(
                parse_predicate(&text).unwrap(),
                Preselector::Last6Hours,
                Preprocessor::Average,
                "sum",
                "power_consumption",
            )
            .unwrap()
        };
        prop_assert!(query_matches(&mk(render(&atoms, false, false)), &mk(render(&rev, true, true))));
        Ok(())
    })
}

pub fn canonical_deterministic(cases: u32, det: bool) -> Result<u32, String> {
    check(cases, det, (query(token()), query(token())), |(a, b)| {
        let ba = to_canonical_bytes(&a).unwrap();
        prop_assert_eq!(&ba, &to_canonical_bytes(&a.clone()).unwrap());
        let bb = to_canonical_bytes(&b).unwrap();
        prop_assert_eq!(a == b, ba == bb);
        let back: Query = serde_json::from_slice(&ba).unwrap();
        prop_assert_eq!(back, a);
        Ok(())
    })
}

pub fn canonical_key_order(cases: u32, det: bool) -> Result<u32, String> {
    check(cases, det, prop::collection::btree_map("[a-z]{1,5}", any::<i32>(), 0..8), |entries| {
        let forward: Map<String, Value> = entries.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        let mut backward = Map::new();
        for (k, v) in entries.iter().rev() {
            backward.insert(k.clone(), Value::from(*v));
        }
        let fa = to_canonical_bytes(&Value::Object(forward)).unwrap();
        let fb = to_canonical_bytes(&Value::Object(backward)).unwrap();
        prop_assert_eq!(&fa, &fb);
        // Keys come out sorted.
        let s = String::from_utf8(fa).unwrap();
        let mut pos = 0;
        for k in entries.keys() {
            let at = s[pos..].find(&format!("\"{k}\":")).map(|i| i + pos);
            prop_assert!(at.is_some());
            pos = at.unwrap();
        }
        Ok(())
    })
}

pub fn signature_field_excluded(cases: u32, det: bool) -> Result<u32, String> {
    let authority = identity();
    let s = (
        prop::collection::btree_set(query(small_token()), 1..3),
        0u64..1_000_000,
        1u64..100_000,
        prop::collection::vec(any::<u8>(), 0..80),
    );
    check(cases, det, s, |(qs, nb, life, junk)| {
        let unsigned = UnsignedGrant {
            queries: qs,
            holder: authority.fingerprint(),
            purpose: "analytics".into(),
            not_before: nb,
            not_after: nb + life,
        };
        let expected = to_canonical_bytes(&unsigned).unwrap();
        let grant = unsigned.sign(&authority).unwrap();
        prop_assert_eq!(grant.signing_input(), expected.clone());
        let mut forged: Grant = grant.clone();
        forged.sig_issuer.0 = junk;
        prop_assert_eq!(forged.signing_input(), expected.clone());
        prop_assert_eq!(signing_input(&grant, &["sig_issuer"]).unwrap(), expected);
        Ok(())
    })
}

//! Property tests for the invariants each module promises.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use proptest::prelude::*;

use priming::context::{
    build_trials, terminate_sentence, ExcludeScope, LengthGrid, Polarity, PrefixStrategy,
    SuitePool, TrialPlan, TrialSpec,
};
use priming::dataset::{parse_pair_suite, MinimalPair, PairSuite, RegionSequence, SentenceId};
use priming::metrics::{
    aggregate, baselined_accuracy, margin, pair_accuracy, Outcome, TrialResult,
};
use priming::prediction::{
    evaluate, parse, Arith, ArithOp, Atom, CmpOp, Formula, RegionRef, SurprisalTable,
};
use priming::scorer::{
    region_surprisals, score_continuation, sequence_loglik, ScoreCache, ScoreRequest,
    ScoringBackend, TrigramBackend,
};
use priming::similarity::{
    bag_f1, bag_f1_with, DefaultTokenizer, OverlapMode, TokenBag, Tokenizer,
};
use priming::stats::{fit_logistic, point_biserial, spearman, RegressionSpec, RegressionTrial};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

// ---------------------------------------------------------------- formulas

const CONDITIONS: [&str; 4] = ["a", "b_gap", "what-nogap", "c2"];

fn atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        3 => (1u32..6, 0usize..CONDITIONS.len()).prop_map(|(r, c)| Atom::Ref(RegionRef::new(r, CONDITIONS[c]))),
        1 => (0.0f64..1e6).prop_map(Atom::Number),
        1 => (0u32..100).prop_map(|n| Atom::Number(f64::from(n))),
    ]
}

fn arith() -> impl Strategy<Value = Arith> {
    (
        atom(),
        prop::collection::vec((prop::bool::ANY, atom()), 0..3),
    )
        .prop_map(|(first, rest)| Arith {
            first,
            rest: rest
                .into_iter()
                .map(|(add, a)| (if add { ArithOp::Add } else { ArithOp::Sub }, a))
                .collect(),
        })
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = (prop::bool::ANY, arith(), arith()).prop_map(|(lt, l, r)| {
        Formula::Compare(if lt { CmpOp::Less } else { CmpOp::Greater }, l, r)
    });
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Formula::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::Or(Box::new(a), Box::new(b))),
        ]
    })
}

/// A table covering every region and condition the generators can produce.
fn covering_table() -> impl Strategy<Value = SurprisalTable> {
    prop::collection::vec(0.0f64..30.0, 5 * CONDITIONS.len()).prop_map(|vals| {
        let mut t = SurprisalTable::new();
        for r in 1..=5u32 {
            for (ci, c) in CONDITIONS.iter().enumerate() {
                t.insert(
                    (r, c.to_string()),
                    vals[(r as usize - 1) * CONDITIONS.len() + ci],
                );
            }
        }
        t
    })
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn formula_text_round_trips(f in formula()) {
        let text = f.to_string();
        let back = parse(&text).unwrap_or_else(|e| panic!("{text:?}: {e}"));
        prop_assert_eq!(back, f);
    }

    #[test]
    fn evaluation_is_total_on_covering_tables(f in formula(), t in covering_table()) {
        prop_assert!(evaluate(&f, &t).is_ok());
    }

    #[test]
    fn lowering_the_left_of_less_never_breaks_it(
        l in covering_table(), region in 1u32..6, cond in 0usize..CONDITIONS.len(), delta in 0.0f64..10.0,
        other in arith(),
    ) {
        let r = RegionRef::new(region, CONDITIONS[cond]);
        let f = Formula::Compare(CmpOp::Less, Arith::atom(Atom::Ref(r.clone())), other);
        let before = evaluate(&f, &l).unwrap();
        let mut lowered = l.clone();
        *lowered.get_mut(&(r.region, r.condition.clone())).unwrap() -= delta;
        // The right side may mention the same atom, in which case both move.
        let mentions_self = match &f {
            Formula::Compare(_, _, rhs) => std::iter::once(&rhs.first)
                .chain(rhs.rest.iter().map(|(_, a)| a))
                .any(|a| matches!(a, Atom::Ref(x) if *x == r)),
            _ => false,
        };
        if before && !mentions_self {
            prop_assert!(evaluate(&f, &lowered).unwrap());
        }
    }
}

// ---------------------------------------------------------------- datasets

fn sentence() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{1,6}( [a-z]{1,7}){1,6}\\.".prop_map(|s| s)
}

fn pair_suite() -> impl Strategy<Value = PairSuite> {
    (
        "[a-z_]{3,12}",
        "[a-z_]{3,12}",
        prop::collection::vec((sentence(), sentence()), 1..12),
    )
        .prop_filter_map("identical members", |(suite_id, phenomenon, raw)| {
            if raw.iter().any(|(g, b)| g == b) {
                return None;
            }
            let pairs = raw
                .into_iter()
                .enumerate()
                .map(|(i, (acceptable, unacceptable))| MinimalPair {
                    id: i.to_string(),
                    suite_id: suite_id.clone(),
                    phenomenon: phenomenon.clone(),
                    acceptable,
                    unacceptable,
                })
                .collect();
            Some(PairSuite {
                suite_id,
                phenomenon,
                pairs,
            })
        })
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn pair_suites_survive_a_write_and_reload(suite in pair_suite()) {
        let text = suite.to_jsonl();
        let back = parse_pair_suite(&text, Path::new("x.jsonl")).unwrap();
        prop_assert_eq!(&back, &suite);
        // Same bytes, same structure.
        prop_assert_eq!(parse_pair_suite(&text, Path::new("x.jsonl")).unwrap(), back);
    }
}

// ---------------------------------------------------------------- prefixes

/// Counts characters, like the reference backend.
struct Chars;

impl priming::context::TokenCounter for Chars {
    fn count_tokens(&self, text: &str) -> priming::error::Result<usize> {
        Ok(text.chars().count())
    }
}

/// Suites of at least two pairs, so every target has in-domain neighbours.
fn suites() -> impl Strategy<Value = Vec<PairSuite>> {
    prop::collection::vec(
        pair_suite().prop_filter("two pairs", |s| s.pairs.len() > 1),
        2..4,
    )
    .prop_map(|mut v| {
        for (i, s) in v.iter_mut().enumerate() {
            s.suite_id = format!("suite{i}");
            s.phenomenon = format!("ph{}", i % 2);
            for p in &mut s.pairs {
                p.suite_id = s.suite_id.clone();
                p.phenomenon = s.phenomenon.clone();
            }
        }
        v
    })
}

fn plan(seed: u64, grid: Vec<usize>) -> TrialPlan {
    TrialPlan {
        strategies: vec![
            PrefixStrategy::in_domain(Polarity::Acceptable),
            PrefixStrategy::in_domain(Polarity::Unacceptable),
            PrefixStrategy::out_of_domain(Polarity::Acceptable),
            PrefixStrategy::out_of_domain(Polarity::Unacceptable),
        ],
        grid: LengthGrid::new(grid, 1000).unwrap(),
        seed,
        exclude_scope: ExcludeScope::Suite,
    }
}

fn build(suites: &[PairSuite], seed: u64, grid: Vec<usize>) -> Vec<TrialSpec> {
    let pools: Vec<SuitePool> = suites.iter().map(SuitePool::from_pairs).collect();
    let plan = plan(seed, grid);
    let mut out = Vec::new();
    for p in &pools {
        out.extend(build_trials(p, &pools, None, &plan, &Chars).unwrap());
    }
    out
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn prefixes_nest_across_checkpoints(
        suites in suites(), seed in any::<u64>(), grid in prop::collection::btree_set(1usize..400, 1..5),
    ) {
        let grid: Vec<usize> = std::iter::once(0).chain(grid).collect();
        let trials = build(&suites, seed, grid);
        let mut by_stream: BTreeMap<(String, String), Vec<&TrialSpec>> = BTreeMap::new();
        for t in trials.iter().filter(|t| !t.is_baseline()) {
            by_stream.entry((t.target.key(), t.strategy.unwrap().to_string())).or_default().push(t);
        }
        for ts in by_stream.values() {
            for w in ts.windows(2) {
                let (a, b) = (&w[0].prefix, &w[1].prefix);
                prop_assert!(a.checkpoint < b.checkpoint);
                prop_assert!(b.sentence_ids.starts_with(&a.sentence_ids));
                prop_assert!(b.text.starts_with(&a.text));
                // Strictly longer when both are filled, unless the sentence
                // that crossed the smaller checkpoint also crossed the larger.
                if !a.underfilled && !b.underfilled && a.token_length < b.checkpoint {
                    prop_assert!(b.sentence_ids.len() > a.sentence_ids.len());
                }
            }
        }
    }

    #[test]
    fn in_domain_prefixes_exclude_the_target(suites in suites(), seed in any::<u64>()) {
        for t in build(&suites, seed, vec![0, 50, 200]) {
            let priming::context::TargetRef::Pair { suite_id, pair_id } = &t.target else { unreachable!() };
            let own = [SentenceId::pair(suite_id, pair_id, true), SentenceId::pair(suite_id, pair_id, false)];
            prop_assert!(!t.prefix.sentence_ids.iter().any(|id| own.contains(id)));
        }
    }

    #[test]
    fn prefix_text_is_made_of_the_right_polarity(suites in suites(), seed in any::<u64>()) {
        let text: HashMap<SentenceId, &str> = suites
            .iter()
            .flat_map(|s| &s.pairs)
            .flat_map(|p| [(p.sentence_id(true), p.acceptable.as_str()), (p.sentence_id(false), p.unacceptable.as_str())])
            .collect();
        for t in build(&suites, seed, vec![0, 50, 200]) {
            let Some(s) = t.strategy else { continue };
            let side = if s.polarity() == Polarity::Unacceptable { ":bad" } else { ":good" };
            for id in &t.prefix.sentence_ids {
                prop_assert!(id.as_str().ends_with(side), "{id} in a {s} prefix");
            }
            let joined: Vec<String> = t.prefix.sentence_ids.iter().map(|id| terminate_sentence(text[id])).collect();
            prop_assert_eq!(&t.prefix.text, &joined.join(" "));
        }
    }

    #[test]
    fn trial_building_is_pure(suites in suites(), seed in any::<u64>()) {
        prop_assert_eq!(build(&suites, seed, vec![0, 30, 90]), build(&suites, seed, vec![0, 30, 90]));
    }
}

// ---------------------------------------------------------------- metrics

fn finite() -> impl Strategy<Value = f64> {
    -1e6f64..1e6
}

fn results(suites: usize) -> impl Strategy<Value = Vec<TrialResult>> {
    prop::collection::vec((0..suites, 0usize..3, finite(), finite()), 1..60).prop_map(move |raw| {
        let mut out: Vec<TrialResult> = (0..suites)
            .map(|s| result(s, None, 0, -1.0, -2.0))
            .collect();
        for (s, k, a, b) in raw {
            let strategy = match k {
                0 => None,
                1 => Some(PrefixStrategy::in_domain(Polarity::Acceptable)),
                _ => Some(PrefixStrategy::out_of_domain(Polarity::Unacceptable)),
            };
            let checkpoint = if strategy.is_none() { 0 } else { 20 };
            out.push(result(s, strategy, checkpoint, a, b));
        }
        out
    })
}

fn result(
    suite: usize,
    strategy: Option<PrefixStrategy>,
    checkpoint: usize,
    a: f64,
    b: f64,
) -> TrialResult {
    TrialResult {
        trial_id: String::new(),
        suite_id: format!("s{suite}"),
        phenomenon: "p".into(),
        target: String::new(),
        strategy,
        source_suite: None,
        checkpoint,
        prefix_tokens: checkpoint,
        outcome: Outcome::Pair {
            loglik_acceptable: a,
            loglik_unacceptable: b,
        },
        correct: a > b,
    }
}

proptest! {
    #![proptest_config(config(512))]

    #[test]
    fn accuracy_is_a_strict_preference(a in finite(), b in prop_oneof![finite(), Just(0.0)]) {
        let sum = pair_accuracy(a, b).unwrap() + pair_accuracy(b, a).unwrap();
        prop_assert!(sum <= 1);
        prop_assert_eq!(sum == 1, a != b);
        prop_assert_eq!(pair_accuracy(a, a).unwrap(), 0);
    }

    #[test]
    fn margin_ignores_a_shared_shift(a in finite(), b in finite(), c in -1e3f64..1e3) {
        let m = margin(a, b).unwrap();
        let shifted = margin(a + c, b + c).unwrap();
        // Exact up to the rounding of the two additions.
        prop_assert!((m - shifted).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())));
    }

    #[test]
    fn baselined_accuracy_is_antisymmetric(xs in prop::collection::vec((0u8..2, 0u8..2), 1..50)) {
        let (p, q): (Vec<u8>, Vec<u8>) = xs.into_iter().unzip();
        let fwd = baselined_accuracy(&p, &q).unwrap();
        let back = baselined_accuracy(&q, &p).unwrap();
        prop_assert_eq!(fwd, -back);
    }

    #[test]
    fn aggregate_counts_add_up(r1 in results(3), r2 in results(3)) {
        let counts = |rs: &[TrialResult]| -> BTreeMap<(String, String, usize), (usize, usize)> {
            aggregate(rs)
                .unwrap()
                .into_iter()
                .map(|c| ((c.suite_id, format!("{:?}", c.strategy), c.checkpoint), (c.n, c.n_correct)))
                .collect()
        };
        let (c1, c2) = (counts(&r1), counts(&r2));
        let both: Vec<TrialResult> = r1.iter().chain(&r2).cloned().collect();
        let c12 = counts(&both);
        let keys: HashSet<_> = c1.keys().chain(c2.keys()).cloned().collect();
        prop_assert_eq!(keys.len(), c12.len());
        for k in keys {
            let (n1, k1) = c1.get(&k).copied().unwrap_or_default();
            let (n2, k2) = c2.get(&k).copied().unwrap_or_default();
            prop_assert_eq!(c12[&k], (n1 + n2, k1 + k2));
        }
    }
}

// ---------------------------------------------------------------- scoring

fn backend() -> TrigramBackend {
    let corpus: Vec<String> = [
        "The cat sleeps on the mat.",
        "Dogs bark at night, and the neighbours complain.",
        "She said that he had left early.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    TrigramBackend::from_sentences(&corpus, 0.1).unwrap()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn scores_chain_across_a_boundary(c1 in "[a-zA-Z .,'é]{1,40}", c2 in "[a-zA-Z .,'é]{1,40}") {
        prop_assume!(!c2.trim().is_empty());
        let b = backend();
        let joint = b.score(&ScoreRequest::new("m", "", format!("{c1}{c2}"))).unwrap();
        let head = b.score(&ScoreRequest::new("m", "", c1.clone())).unwrap();
        let tail = b.score(&ScoreRequest::new("m", c1, c2)).unwrap();
        let diff = sequence_loglik(&joint) - sequence_loglik(&head) - sequence_loglik(&tail);
        prop_assert!(diff.abs() < 1e-6, "{diff}");
    }

    #[test]
    fn region_surprisals_partition_the_sentence(
        regions in prop::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,2}", 1..6),
        prefix in "[a-zA-Z .]{0,20}",
    ) {
        let seq = RegionSequence::new(&regions.iter().map(String::as_str).collect::<Vec<_>>());
        let text = seq.text();
        let scored = backend().score(&ScoreRequest::new("m", prefix, text.clone())).unwrap();
        let parts = region_surprisals(&scored, &seq, &text).unwrap();
        prop_assert_eq!(parts.len(), regions.len());
        let total: f64 = parts.values().sum();
        prop_assert!((total + sequence_loglik(&scored)).abs() < 1e-9);
    }

    #[test]
    fn the_cache_is_transparent(prefix in "[a-z .]{0,20}", cont in "[a-z][a-z .]{0,20}") {
        let b = backend();
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::open(dir.path()).unwrap();
        let req = ScoreRequest::new("m", prefix, cont);
        let plain = score_continuation(&req, &b, None).unwrap();
        let first = score_continuation(&req, &b, Some(&cache)).unwrap();
        let second = score_continuation(&req, &b, Some(&cache)).unwrap();
        prop_assert_eq!(&plain, &first);
        prop_assert_eq!(&plain, &second);
        prop_assert_eq!(cache.hits(), 1);
    }
}

// ---------------------------------------------------------------- statistics

fn regression_data() -> impl Strategy<Value = Vec<RegressionTrial>> {
    prop::collection::vec(
        (1usize..500, 0u8..2, 0u8..2, 0usize..3, 0.0f64..1.0),
        150..300,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .map(|(len, pol, dom, suite, u)| {
                let polarity = if pol == 1 {
                    Polarity::Acceptable
                } else {
                    Polarity::Unacceptable
                };
                let domain = if dom == 1 {
                    priming::context::Domain::InDomain
                } else {
                    priming::context::Domain::OutOfDomain
                };
                // A mild true effect keeps the classes balanced.
                let eta = -0.3
                    + 0.15 * (len as f64).ln() * if pol == 1 { 1.0 } else { -1.0 }
                    + 0.2 * suite as f64;
                RegressionTrial {
                    correct: u < 1.0 / (1.0 + (-eta).exp()),
                    prefix_tokens: len,
                    polarity,
                    domain,
                    suite_id: format!("s{suite}"),
                }
            })
            .collect()
    })
}

const LENGTH_TERMS: [&str; 4] = [
    "log_length",
    "log_length:polarity",
    "log_length:domain",
    "log_length:polarity:domain",
];

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn rescaling_length_moves_only_non_length_terms(data in regression_data(), k in 2usize..9) {
        let spec = RegressionSpec::default();
        let base = fit_logistic(&spec, &data).unwrap();
        prop_assume!(base.converged);
        let scaled: Vec<RegressionTrial> = data
            .iter()
            .cloned()
            .map(|mut t| {
                t.prefix_tokens *= k;
                t
            })
            .collect();
        let moved = fit_logistic(&spec, &scaled).unwrap();
        prop_assert!(moved.converged);
        for term in LENGTH_TERMS {
            let (a, b) = (base.get(term).unwrap().estimate, moved.get(term).unwrap().estimate);
            prop_assert!((a - b).abs() < 1e-6, "{term}: {a} vs {b}");
        }
        // Suite effects are ridge-penalized but do not interact with length.
        for c in base.coefficients.iter().filter(|c| c.penalized) {
            let b = moved.get(&c.name).unwrap().estimate;
            prop_assert!((c.estimate - b).abs() < 1e-6, "{}: {} vs {b}", c.name, c.estimate);
        }
    }

    #[test]
    fn more_ridge_never_grows_suite_effects(data in regression_data(), l1 in 0.01f64..5.0, extra in 0.0f64..20.0) {
        let norm = |lambda: f64| {
            let fit = fit_logistic(&RegressionSpec { group_by_suite: true, ridge_lambda: lambda }, &data).unwrap();
            fit.coefficients.iter().filter(|c| c.penalized).map(|c| c.estimate * c.estimate).sum::<f64>().sqrt()
        };
        let (small, large) = (norm(l1), norm(l1 + extra));
        prop_assert!(large <= small + 1e-8, "{large} > {small}");
    }
}

fn binary_and_values() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    prop::collection::vec((0u8..2, -100.0f64..100.0), 3..80)
        .prop_filter("both classes, spread", |v| {
            let ones = v.iter().filter(|(b, _)| *b == 1).count();
            let first = v[0].1;
            ones > 0 && ones < v.len() && v.iter().any(|(_, x)| (x - first).abs() > 1e-3)
        })
        .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn point_biserial_ignores_positive_affine_maps((b, x) in binary_and_values(), scale in 0.01f64..100.0, shift in -1e3f64..1e3) {
        let r = point_biserial(&b, &x).unwrap().coefficient;
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        prop_assert!((point_biserial(&b, &y).unwrap().coefficient - r).abs() < 1e-9);
        let flipped: Vec<u8> = b.iter().map(|v| 1 - v).collect();
        prop_assert!((point_biserial(&flipped, &x).unwrap().coefficient + r).abs() < 1e-12);
    }

    #[test]
    fn spearman_ignores_monotone_maps(xy in prop::collection::vec((-50i32..50, -50i32..50), 3..60)) {
        let x: Vec<f64> = xy.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = xy.iter().map(|p| f64::from(p.1)).collect();
        let Ok(base) = spearman(&x, &y) else { return Ok(()) };
        let fx: Vec<f64> = x.iter().map(|v| v * v * v + 2.0 * v).collect();
        let gy: Vec<f64> = y.iter().map(|v| (v / 10.0).exp()).collect();
        prop_assert!((spearman(&fx, &y).unwrap().coefficient - base.coefficient).abs() < 1e-12);
        prop_assert!((spearman(&x, &gy).unwrap().coefficient - base.coefficient).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------- similarity

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn bag_f1_is_symmetric_and_bounded(a in "[a-z ,.']{1,60}", b in "[a-z ,.']{1,60}") {
        let tok = DefaultTokenizer;
        let (ta, tb) = (tok.tokenize(&a).unwrap(), tok.tokenize(&b).unwrap());
        prop_assume!(!ta.is_empty() && !tb.is_empty());
        let (ba, bb) = (TokenBag::new(ta).unwrap(), TokenBag::new(tb).unwrap());
        for mode in [OverlapMode::Multiset, OverlapMode::Set] {
            let f = bag_f1_with(&ba, &bb, mode).unwrap();
            prop_assert_eq!(f, bag_f1_with(&bb, &ba, mode).unwrap());
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(bag_f1_with(&ba, &ba, mode).unwrap(), 1.0);
        }
    }

    #[test]
    fn dependency_bags_are_bounded(a in prop::collection::vec("(det|nsubj|root|obj|punct|amod)", 1..12),
                                   b in prop::collection::vec("(det|nsubj|root|obj|punct|amod)", 1..12)) {
        let f = bag_f1(&TokenBag::new(a).unwrap(), &TokenBag::new(b).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

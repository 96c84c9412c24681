//! Acceptance criteria as plain functions: `Ok(detail)` on success,
//! `Err(reason)` on the first violated check.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use irollan::action_space::{partition, render_elimination_prompt};
use irollan::backend::{Backend, MockBackend};
use irollan::driver::{
    compute_arousal, compute_bias, compute_dominance, compute_pleasure, recency_weight, update_driver,
    AffectSignals, DriverState, EmotionWeights, Pad,
};
use irollan::field::{
    average_rows, blend, circular_delta, field_similarity, row_similarity, spherical_similarity, BlendConfig,
    FieldRow, PhenomenalField, Position,
};
use irollan::ltrha::{act_probability, compute_topic, gate_with_draw, rank_to_allocation, ResourceLedger};
use irollan::memory::{
    compress_segment, ConsciousnessChannel, MemoryFrame, MemoryStore, PersistenceDrift, ProtentionPredictor,
};
use irollan::runtime::{run_to_dir, server, RunManifest, Simulation, SimulationConfig, METRICS_FILE, STEPS_FILE};
use irollan::world::{Location, Status, WorldState, OUTSIDE};
use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::grammar::{clauses, parse_observation, Seen};

pub type Outcome = Result<String, String>;

pub struct Criterion {
    pub name: &'static str,
    pub limit: Duration,
    pub run: fn() -> Outcome,
}

pub fn primary() -> Vec<Criterion> {
    vec![
        Criterion {
            name: "formula oracle suite",
            limit: Duration::from_secs(5),
            run: formula_oracles,
        },
        Criterion {
            name: "blend property suite",
            limit: Duration::from_secs(30),
            run: blend_properties,
        },
        Criterion {
            name: "memory suite",
            limit: Duration::from_secs(60),
            run: memory_suite,
        },
        Criterion {
            name: "arousal weights sum to one (exact)",
            limit: Duration::from_secs(5),
            run: arousal_weights_exact,
        },
        Criterion {
            name: "world conformance",
            limit: Duration::from_secs(60),
            run: world_conformance,
        },
        Criterion {
            name: "end-to-end 6 agents x 75 steps",
            limit: Duration::from_secs(30),
            run: end_to_end,
        },
        Criterion {
            name: "server conformance",
            limit: Duration::from_secs(60),
            run: server_conformance,
        },
    ]
}

pub const AGENTS: [&str; 6] = ["AY", "LL", "MD", "SG", "WL", "WM"];
const TOL: f64 = 1e-9;

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

#[derive(Default)]
struct Checks {
    count: usize,
}

impl Checks {
    fn close(&mut self, what: &str, got: f64, want: f64) -> Result<(), String> {
        self.count += 1;
        ensure((got - want).abs() <= TOL, || format!("{what}: got {got}, want {want}"))
    }

    fn that(&mut self, what: &str, cond: bool) -> Result<(), String> {
        self.count += 1;
        ensure(cond, || what.to_string())
    }
}

fn pos(theta: f64, phi: f64, gamma: f64) -> Position {
    Position::new(theta, phi, gamma).expect("test positions are in range")
}

fn row(emb: &[f64], p: Position) -> FieldRow {
    FieldRow::new(emb.to_vec(), p)
}

fn field(rows: Vec<FieldRow>) -> PhenomenalField {
    PhenomenalField::new(rows).expect("test rows share a dimension")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Independent piecewise allocation oracle.
pub fn allocation_oracle(j: usize, n: usize, s_min: f64, s_max: f64) -> f64 {
    let (jf, half) = (j as f64, n as f64 / 2.0);
    if n % 2 == 1 && j == n.div_ceil(2) {
        return 0.0;
    }
    let step = (s_max - s_min) / (half - 1.0).abs();
    if jf <= half {
        s_min + (jf - half).abs() * step
    } else {
        -(s_min + (jf - half - 1.0).abs() * step)
    }
}

pub fn formula_oracles() -> Outcome {
    let mut c = Checks::default();
    let unit = BlendConfig::default();
    let half = BlendConfig {
        weight_embedding: 0.5,
        weight_position: 0.5,
        ..BlendConfig::default()
    };

    // Spherical similarity.
    c.close(
        "spherical, antipodal theta",
        spherical_similarity(&pos(0.0, 0.0, 1.0), &pos(PI, 0.0, 1.0), &unit),
        2.0 / 3.0,
    )?;
    c.close(
        "spherical, saturated gamma",
        spherical_similarity(&pos(0.0, 0.0, 0.0), &pos(0.0, 0.0, 1000.0), &unit),
        1.0 - 1000f64.tanh() / 3.0,
    )?;
    c.close(
        "spherical, saturated gamma value",
        spherical_similarity(&pos(0.0, 0.0, 0.0), &pos(0.0, 0.0, 1000.0), &unit),
        0.666_666_666_666_666_6,
    )?;

    // Row similarity.
    let p = pos(1.0, 2.0, 0.5);
    c.close(
        "row, orthogonal embeddings",
        row_similarity(&row(&[1.0, 0.0], p), &row(&[0.0, 1.0], p), &half).map_err(err)?,
        0.5,
    )?;
    c.close(
        "row, opposite embeddings and antipodal theta",
        row_similarity(&row(&[1.0, 0.0], pos(0.0, 1.0, 0.5)), &row(&[-1.0, 0.0], pos(PI, 1.0, 0.5)), &half)
            .map_err(err)?,
        -1.0 / 6.0,
    )?;

    // Field similarity.
    let r = row(&[1.0, 0.0], p);
    c.close(
        "field, one row against its duplicate pair",
        field_similarity(&field(vec![r.clone()]), &field(vec![r.clone(), r.clone()]), &unit).map_err(err)?,
        0.5,
    )?;
    let cos = 5.0 / 7.0;
    let r8 = row(&[cos, (1.0 - cos * cos).sqrt()], p);
    c.close(
        "field, single rows at 0.8",
        field_similarity(&field(vec![r.clone()]), &field(vec![r8]), &unit).map_err(err)?,
        0.8,
    )?;

    // Circular mean.
    let avg = average_rows(&row(&[1.0], pos(1.0, 0.1, 0.0)), &row(&[1.0], pos(1.0, TAU - 0.1, 0.0))).map_err(err)?;
    c.close("circular mean of 0.1 and 2pi-0.1", circular_delta(0.0, avg.position().phi), 0.0)?;

    // Pleasure.
    let s = AffectSignals::new(5.0, 0.0).map_err(err)?;
    c.close("pleasure, desire 5", compute_pleasure(&s), 5f64.tanh())?;
    c.close("pleasure, desire 5 value", compute_pleasure(&s), 0.999_909_204_262_595_1)?;
    let s = AffectSignals::new(0.0, 1.0).map_err(err)?;
    c.close("pleasure, pain 1", compute_pleasure(&s), -(1f64.tanh()))?;

    // Arousal: two retained frames each at diff 0.5 from the present.
    let present = field(vec![row(&[1.0, 0.0], p)]);
    let cos = 9.0 / 14.0;
    let earlier = field(vec![row(&[cos, (1.0 - cos * cos).sqrt()], p)]);
    c.close(
        "arousal, t = 3",
        compute_arousal(&present, &[earlier.clone(), earlier], 3, 2.0, &unit),
        0.5f64.tanh(),
    )?;

    // Dominance: completely dissimilar protention.
    let cos = -3.0 / 7.0;
    let opposite = field(vec![row(&[cos, (1.0 - cos * cos).sqrt()], p)]);
    c.close(
        "dominance, similarity 0",
        compute_dominance(&present, Some(&opposite), 2.0, &unit),
        2f64.tanh(),
    )?;

    // Bias.
    let mut st = DriverState::new(1.0, EmotionWeights::default()).map_err(err)?;
    st.pad = Pad {
        pleasure: 0.6,
        arousal: 0.4,
        dominance: 0.3,
    };
    st.previous_arousal = 0.4;
    c.close("bias, equal weights", compute_bias(&st).map_err(err)?, 1.9 / 3.0)?;
    st.weights = EmotionWeights {
        pleasure: 0.5,
        arousal: 0.25,
        dominance: 0.25,
    };
    st.pad = Pad {
        pleasure: -0.5,
        arousal: 0.2,
        dominance: 0.0,
    };
    st.previous_arousal = 0.2;
    c.close("bias, unequal weights", compute_bias(&st).map_err(err)?, 0.0)?;

    // Driver update.
    let mut st = DriverState::new(1.0, EmotionWeights::default()).map_err(err)?;
    st.previous_bias = 0.2;
    c.close("need, rising bias", update_driver(&mut st, 0.6), 0.2)?;
    c.close("driver, rising bias", st.driver, 1.12)?;
    let before = st.driver;
    c.close("need, falling bias", update_driver(&mut st, -0.4), 0.5)?;
    c.close("driver decrease, falling bias", before - st.driver, 0.2)?;

    // Elimination prompt and partition.
    let prompt = render_elimination_prompt("find SG", &["go to SG's Home".to_string()], "go to SG's Home").map_err(err)?;
    c.that(
        "elimination prompt template",
        prompt
            == "Your task is to: find SG. The actions you can take are: go to SG's Home. The go to SG's Home will be relevant?",
    )?;
    let actions: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let red = partition(&actions, &[5.0, 2.0, 4.0], 3.0);
    c.that("partition kept", red.kept_texts() == ["a", "c"])?;
    c.that(
        "partition eliminated",
        red.eliminated.iter().map(|x| x.text.as_str()).collect::<Vec<_>>() == ["b"],
    )?;

    // Topic and gate.
    c.close(
        "topic, single occupant",
        compute_topic(&[Pad {
            pleasure: 0.5,
            arousal: 0.0,
            dominance: 0.0,
        }]),
        0.25,
    )?;
    c.that("act probability at balance 0 is exactly 0.75", act_probability(0) == 0.75)?;
    c.close("act probability at -3", act_probability(-3), 0.5 + 0.5 / (1.0 + 3f64.exp()))?;
    c.close("act probability at -3 value", act_probability(-3), 0.523_712_936_588_783_4)?;
    c.close("act probability at +10", act_probability(10), 0.5 + 0.5 / (1.0 + (-10f64).exp()))?;
    c.that("act probability at +10 about 0.99998", (act_probability(10) - 0.99998).abs() < 5e-6)?;
    c.that("gate at +10 with draw 0.5 executes", gate_with_draw(10, 0.5).executed)?;

    // Allocation.
    let six: Vec<f64> = (1..=6).map(|j| rank_to_allocation(j, 6, 1, 3)).collect::<Result<_, _>>().map_err(err)?;
    c.that("allocation n = 6", six == [3.0, 2.0, 1.0, -1.0, -2.0, -3.0])?;
    let five: Vec<f64> = (1..=5).map(|j| rank_to_allocation(j, 5, 1, 3)).collect::<Result<_, _>>().map_err(err)?;
    for (got, want) in five.iter().zip([3.0, 5.0 / 3.0, 0.0, -5.0 / 3.0, -3.0]) {
        c.close("allocation n = 5", *got, want)?;
    }
    for n in 3..=12 {
        for (lo, hi) in [(1, 3), (1, 5), (2, 7), (3, 3)] {
            let mut sum = 0.0;
            for j in 1..=n {
                let v = rank_to_allocation(j, n, lo, hi).map_err(err)?;
                c.close(
                    &format!("allocation oracle n={n} j={j} ({lo},{hi})"),
                    v,
                    allocation_oracle(j, n, lo as f64, hi as f64),
                )?;
                sum += v;
            }
            c.close(&format!("allocation zero-sum n={n} ({lo},{hi})"), sum, 0.0)?;
        }
    }

    // Ledger under identity ranking.
    let ids: Vec<String> = AGENTS.iter().map(|s| s.to_string()).collect();
    let mut ledger = ResourceLedger::new(ids.clone(), 1, 3, 10).map_err(err)?;
    let rep = ledger.apply_ranking("x", &ids).map_err(err)?;
    c.that("identity ranking deltas", rep.deltas == [3, 2, 1, -1, -2, -3])?;
    ledger.apply_ranking("x", &ids).map_err(err)?;
    let balances: Vec<i64> = ids.iter().map(|a| ledger.balance(a)).collect::<Result<_, _>>().map_err(err)?;
    c.that("two identity rankings", balances == [7, 5, 3, -1, -3, -5])?;

    // Default predictor extrapolates matched rows.
    let at = |g: f64| field(vec![row(&[1.0, 0.0], pos(1.0, 1.0, g))]);
    let channel = ConsciousnessChannel {
        retention: VecDeque::from([at(1.0), at(2.0)]),
        ..ConsciousnessChannel::default()
    };
    let predicted = PersistenceDrift::new(unit).predict(&channel, &at(2.0), 1.0).map_err(err)?;
    c.close("predicted gamma", predicted.rows()[0].position().gamma, 3.0)?;

    // Mock embeddings.
    let mock = MockBackend::new(5, 64);
    let mut prev = mock.embed("text 0").map_err(err)?;
    c.that("mock embedding is stable", prev == mock.embed("text 0").map_err(err)?)?;
    for i in 1..=1000 {
        let v = mock.embed(&format!("text {i}")).map_err(err)?;
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.close("mock embedding norm", norm, 1.0)?;
        let dot: f64 = v.iter().zip(&prev).map(|(a, b)| a * b).sum();
        c.that("distinct texts embed apart", dot < 1.0 - 1e-6)?;
        prev = v;
    }
    Ok(format!("{} checks", c.count))
}

fn row_strategy() -> impl Strategy<Value = FieldRow> {
    let comp = prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0]);
    (
        prop::collection::vec(comp, 3),
        prop::sample::select(vec![0.0, PI / 2.0, PI]),
        prop::sample::select(vec![0.0, 1.0, 3.0]),
        prop::sample::select(vec![0.0, 0.5, 1.0]),
    )
        .prop_map(|(e, t, p, g)| FieldRow::new(e, Position::normalized(t, p, g)))
}

fn field_strategy() -> impl Strategy<Value = PhenomenalField> {
    prop::collection::vec(row_strategy(), 0..6).prop_map(|rows| PhenomenalField::new(rows).unwrap())
}

fn same_rows(a: &PhenomenalField, b: &PhenomenalField) -> bool {
    a.rows().iter().all(|r| b.contains_approx(r)) && b.rows().iter().all(|r| a.contains_approx(r))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

pub fn blend_properties() -> Outcome {
    let cases = 1000;
    let mut runner = runner(cases);
    let strategy = (field_strategy(), field_strategy(), any::<u64>(), 0.0..=1.0f64, 0.5..=1.0f64);
    runner
        .run(&strategy, |(x, y, seed, r, t)| {
            let cfg = BlendConfig {
                blend_probability: r,
                similarity_threshold: t,
                ..BlendConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);

            let xx = blend(&x, &x, &cfg, &mut rng).unwrap();
            prop_assert!(same_rows(&xx, &x), "blend(f, f) differs from f");

            let z = blend(&x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(z.len() <= x.len() + y.len(), "row bound: {} > {} + {}", z.len(), x.len(), y.len());
            let again = blend(&x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(
                serde_json::to_string(&z).unwrap(),
                serde_json::to_string(&again).unwrap(),
                "same seed, different output"
            );

            // r = 0: every row comes from a matched pair.
            let strict = BlendConfig {
                blend_probability: 0.0,
                ..cfg
            };
            let z0 = blend(&x, &y, &strict, &mut rng).unwrap();
            for out in z0.rows() {
                let traced = x.rows().iter().any(|xi| {
                    y.rows().iter().any(|yj| {
                        let s = row_similarity(xi, yj, &strict).unwrap();
                        s >= strict.similarity_threshold
                            && (out.approx_eq(xi) || out.approx_eq(yj) || out.approx_eq(&average_rows(xi, yj).unwrap()))
                    })
                });
                prop_assert!(traced, "untraceable row with r = 0");
            }

            // r = 1 with an unreachable threshold: the union, deduplicated.
            let open = BlendConfig {
                blend_probability: 1.0,
                similarity_threshold: 1.5,
                ..cfg
            };
            let z1 = blend(&x, &y, &open, &mut rng).unwrap();
            let union = x.concat(&y).unwrap();
            prop_assert!(same_rows(&z1, &union), "r = 1 is not the union");
            let closed = BlendConfig {
                blend_probability: 0.0,
                ..open
            };
            prop_assert!(blend(&x, &y, &closed, &mut rng).unwrap().is_empty(), "r = 0 unmatched is not empty");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} randomized cases"))
}

fn random_field<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> PhenomenalField {
    field(
        (0..rows)
            .map(|_| {
                let e: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                row(
                    &e,
                    Position::normalized(rng.random_range(0.0..PI), rng.random_range(0.0..TAU), rng.random_range(0.0..1.0)),
                )
            })
            .collect(),
    )
}

/// Compression written out step by step.
fn unrolled_compression(segment: &[MemoryFrame], cfg: &BlendConfig, seed: u64) -> MemoryFrame {
    let mut key = 0;
    for i in 1..segment.len() {
        if segment[i].arousal > segment[key].arousal {
            key = i;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = segment[key].field.clone();
    for frame in segment {
        acc = blend(&acc, &frame.field, cfg, &mut rng).unwrap();
    }
    let mut out = MemoryFrame::new(
        acc,
        segment[segment.len() - 1].timestamp,
        segment[key].arousal,
        segment[key].pleasure,
    );
    out.compressed = true;
    out.span.first = segment[0].span.first;
    out
}

pub fn memory_suite() -> Outcome {
    let cfg = BlendConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Compression against the unrolled oracle.
    let mut compressions = 0;
    for n in 1..=8 {
        for trial in 0..25 {
            let segment: Vec<MemoryFrame> = (0..n)
                .map(|i| {
                    let rows = rng.random_range(1..4);
                    let f = random_field(&mut rng, rows, 4);
                    MemoryFrame::new(f, i as u64 + 1, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
                .collect();
            let seed = (n * 100 + trial) as u64;
            let got = compress_segment(&segment, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
            let want = unrolled_compression(&segment, &cfg, seed);
            ensure(got == want, || format!("compression of {n} frames differs from the unrolled fold"))?;
            compressions += 1;
        }
    }

    // Capacity 10, window 5, one frame over.
    let mut store = MemoryStore::new(10, 5).map_err(err)?;
    for t in 1..=11 {
        let f = random_field(&mut rng, 2, 4);
        store.store_frame(MemoryFrame::new(f, t, 0.0, 0.0), &cfg, &mut rng).map_err(err)?;
    }
    ensure(store.len() == 7, || format!("store size {} after overflow, want 7", store.len()))?;
    let first = &store.frames()[0];
    ensure(first.compressed && first.span.first == 1 && first.span.last == 5, || {
        format!("oldest five frames not compressed: {:?}", first.span)
    })?;

    // Bounded size over 10^4 insertions.
    let (capacity, window) = (50, 10);
    let mut store = MemoryStore::new(capacity, window).map_err(err)?;
    for t in 1..=10_000u64 {
        let f = random_field(&mut rng, 2, 4);
        let a = rng.random_range(-1.0..1.0);
        store.store_frame(MemoryFrame::new(f, t, a, 0.0), &cfg, &mut rng).map_err(err)?;
        ensure(store.len() <= capacity + window, || format!("store grew to {} at {t}", store.len()))?;
    }

    // Mood-congruent ordering: equal similarity, higher arousal first.
    let p = pos(1.0, 1.0, 0.5);
    let pi = field(vec![row(&[1.0, 0.0], p)]);
    let cos = 6.0 / 7.0;
    let recalled = field(vec![row(&[cos, (1.0 - cos * cos).sqrt()], p)]);
    ensure((field_similarity(&recalled, &pi, &cfg).map_err(err)? - 0.9).abs() < TOL, || {
        "similarity setup is not 0.9".into()
    })?;
    let mut store = MemoryStore::new(10, 5).map_err(err)?;
    store
        .store_frame(MemoryFrame::new(recalled.clone(), 1, 0.1, 0.0), &cfg, &mut rng)
        .map_err(err)?;
    store
        .store_frame(MemoryFrame::new(recalled, 2, 0.8, 0.0), &cfg, &mut rng)
        .map_err(err)?;
    let ranked = store.rank(&pi, &cfg);
    ensure(ranked[0].0 == 1, || format!("0.8-arousal frame not first: {ranked:?}"))?;
    ensure((ranked[0].1 - 1.8 * 0.9).abs() < TOL && (ranked[1].1 - 1.1 * 0.9).abs() < TOL, || {
        format!("weighted scores wrong: {ranked:?}")
    })?;

    // Ordering against a brute-force oracle.
    for _ in 0..50 {
        let mut store = MemoryStore::new(40, 5).map_err(err)?;
        for t in 1..=30 {
            let rows = rng.random_range(1..4);
                    let f = random_field(&mut rng, rows, 4);
            let a = rng.random_range(-1.0..1.0);
            store.store_frame(MemoryFrame::new(f, t, a, 0.0), &cfg, &mut rng).map_err(err)?;
        }
        let probe = random_field(&mut rng, 2, 4);
        let mut oracle: Vec<(usize, f64)> = store
            .frames()
            .iter()
            .enumerate()
            .map(|(i, f)| (i, field_similarity(&f.field, &probe, &cfg).unwrap() * (1.0 + f.arousal.abs())))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<usize> = store.rank(&probe, &cfg).iter().map(|x| x.0).collect();
        let want: Vec<usize> = oracle.iter().map(|x| x.0).collect();
        ensure(got == want, || "retrieval order differs from the weighted-score oracle".into())?;
    }
    Ok(format!("{compressions} compressions, 10^4 insertions, 50 retrieval orders"))
}

pub fn arousal_weights_exact() -> Outcome {
    for t in 2u64..=10_000 {
        let denom = t * (t - 1);
        let numer: u64 = (1..t).map(|n| 2 * n).sum();
        ensure(Ratio::new(numer, denom) == Ratio::from_integer(1), || format!("weights at t = {t} do not sum to 1"))?;
        for n in [1, t / 2, t - 1] {
            if n == 0 {
                continue;
            }
            let exact = Ratio::new(2 * n, denom);
            let as_float = *exact.numer() as f64 / *exact.denom() as f64;
            ensure(recency_weight(n, t) == as_float, || format!("weight ({n}, {t}) is not the rounded rational"))?;
        }
    }
    // Term-by-term rational sums for small t.
    for t in 2u64..=300 {
        let sum = (1..t).fold(Ratio::from_integer(0u64), |acc, n| acc + Ratio::new(2 * n, t * (t - 1)));
        ensure(sum == Ratio::from_integer(1), || format!("term-by-term sum at t = {t} is {sum}"))?;
    }
    Ok("t = 2..10^4".into())
}

/// Reconstructions of the published step-51 scene. Returns (world, agent, expected).
pub fn appendix_scenes() -> Vec<(WorldState, &'static str, String)> {
    let mut scenes = Vec::new();

    let mut w = WorldState::irollan_valley();
    w.place_agent("AY", OUTSIDE).unwrap();
    w.set_activity("AY", Some("moving")).unwrap();
    w.give_item("AY", "SG's clothes 1").unwrap();
    w.set_status("SG's clothes 1", &[Status::Clean, Status::Damp]).unwrap();
    scenes.push((
        w,
        "AY",
        "You are in outside. Looking around you, you see a door to AY's Home, a door to WM's Home, a door to MD's Home, \
         a door to Public Canteen, a door to LL's Home, a door to Public Reading Room, a door to SG's Home, and a door to \
         WL's Home. You are holding the SG's clothes 1 in the clean damp status. You are moving."
            .to_string(),
    ));

    let room = "Public Reading Room";
    let mut w = WorldState::irollan_valley();
    for a in ["LL", "WM", "SG"] {
        w.place_agent(a, room).unwrap();
        w.set_activity(a, Some("moving")).unwrap();
    }
    w.place_item("AY's clothes 1", "storagebin 12").unwrap();
    w.give_item("SG", "book 10").unwrap();
    w.give_item("SG", "10 dollar").unwrap();
    w.give_item("LL", "1 gold coin").unwrap();
    w.give_item("WM", "book 11").unwrap();
    let listing = "a door to outside, the table 13, the table 14, the table 15, the table 16, the table 17, the table 18, \
        the chair 22, the chair 23, the chair 24, the chair 25, the chair 26, the chair 27, the bookshelf 9, the bookshelf 10, \
        the bookshelf 11, the bookshelf 12, the bookshelf 13, the bookshelf 14, the bookshelf 15, the bookshelf 16, \
        the storagebin 8, the storagebin 9, the storagebin 10, the storagebin 11, the storagebin 12, the storagebin 13, \
        the book 12 placed on the bookshelf 12, the book 13 placed on the bookshelf 13, the book 14 placed on the bookshelf 14, \
        the book 15 placed on the bookshelf 15, the book 16 placed on the bookshelf 16, the beverage 3 placed on the storagebin 9, \
        the beverage 4 placed on the storagebin 10, the beverage 5 placed on the storagebin 12, and the AY's clothes 1 placed \
        on the storagebin 12.";
    for (agent, others, held) in [
        ("SG", ["LL", "WM"], "the book 10, the 10 dollar"),
        ("LL", ["WM", "SG"], "the 1 gold coin"),
        ("WM", ["LL", "SG"], "the book 11"),
    ] {
        scenes.push((
            w.clone(),
            agent,
            format!(
                "You are in {room}. Looking around you, you see a person named {} who is moving, a person named {} who is moving, \
                 {listing} You are holding {held}. You are moving.",
                others[0], others[1]
            ),
        ));
    }

    let mut w = WorldState::irollan_valley();
    for a in ["AY", "MD"] {
        w.place_agent(a, "WL's Home").unwrap();
        w.set_activity(a, Some("moving")).unwrap();
    }
    w.place_agent("WL", "LL's Home").unwrap();
    w.set_activity("WL", None).unwrap();
    w.place_item("WL's clothes 1", "chair 4").unwrap();
    w.place_item("MD's clothes 1", "wardrobe 5").unwrap();
    scenes.push((
        w.clone(),
        "MD",
        "You are in WL's Home. Looking around you, you see a person named AY who is moving, a door to outside, the table 5, \
         the table 6, the chair 9, the chair 10, the bed 4, the bookshelf 4, the bookshelf 5, the bookshelf 6, the storagebin 4, \
         the storagebin 5, the wardrobe 5, the nightstand 3, the nightstand 4, the food 9 placed on the storagebin 5, the toy 1 \
         placed on the table 6, the toy 2 placed on the nightstand 3, the book 4 placed on the bookshelf 4, the book 5 placed on \
         the bookshelf 5, the book 6 placed on the bookshelf 6, the beverage 2 placed on the storagebin 4, and the MD's clothes 1 \
         placed on the wardrobe 5. You are moving."
            .to_string(),
    ));

    w.place_agent("LL", "Public Reading Room").unwrap();
    w.give_item("WL", "beefsteak").unwrap();
    w.give_item("WL", "food 12").unwrap();
    w.place_item("toy 3", "chair 7").unwrap();
    w.set_status("toy 3", &[Status::Clean, Status::Damp]).unwrap();
    w.place_item("book 3", "table 2").unwrap();
    w.place_item("LL's clothes 1", "chair 7").unwrap();
    w.place_item("LL's clothes 2", "chair 7").unwrap();
    scenes.push((
        w,
        "WL",
        "You are in LL's Home. Looking around you, you see a door to outside, the table 2, the table 3, the chair 2, the chair 3, \
         the chair 4, the chair 5, the chair 6, the chair 7, the bed 2, the bookshelf 1, the bookshelf 2, the bookshelf 3, \
         the countertop 1, the foodshelf 2, the sinkbasin 1, the storagebin 1, the storagebin 2, the stoveburner 1, the wardrobe 2, \
         the wardrobe 3, the nightstand 1, the nightstand 2, the toy 3 placed on the chair 7 in the clean damp status, the book 1 \
         placed on the bookshelf 1, the book 2 placed on the bookshelf 2, the book 3 placed on the table 2, the LL's clothes 1 \
         placed on the chair 7, the LL's clothes 2 placed on the chair 7, and the WL's clothes 1 placed on the chair 4. You are \
         holding the beefsteak, the food 12."
            .to_string(),
    ));
    scenes
}

/// Item bookkeeping checked without the engine's own invariant code.
fn conservation(w: &WorldState, expected_items: &BTreeSet<String>) -> Result<(), String> {
    let ids: BTreeSet<String> = w.items().iter().map(|i| i.id.clone()).collect();
    ensure(ids == *expected_items && ids.len() == w.items().len(), || "item set changed".into())?;
    let furniture: BTreeSet<&str> = w
        .areas()
        .iter()
        .flat_map(|a| a.furniture.iter().map(String::as_str))
        .collect();
    let mut held_total = 0;
    for agent in AGENTS {
        let st = w.agent(agent).map_err(err)?;
        for h in &st.held {
            let item = w.item(h).map_err(err)?;
            ensure(item.location == Location::HeldBy(agent.to_string()), || {
                format!("{h} listed as held by {agent} but located at {:?}", item.location)
            })?;
        }
        held_total += st.held.len();
    }
    for item in w.items() {
        ensure(!(item.status.contains(&Status::Damp) && item.status.contains(&Status::Hot)), || {
            format!("{} is damp and hot", item.id)
        })?;
        match &item.location {
            Location::On(f) => ensure(furniture.contains(f.as_str()), || format!("{} on unknown {f}", item.id))?,
            Location::Floor(a) => ensure(w.area(a).is_ok(), || format!("{} on the floor of unknown {a}", item.id))?,
            Location::HeldBy(_) => {}
        }
    }
    let by_location = w.items().iter().filter(|i| matches!(i.location, Location::HeldBy(_))).count();
    ensure(by_location == held_total, || format!("{by_location} items held, {held_total} in hands"))
}

fn illegal_action<R: Rng>(rng: &mut R, w: &WorldState, agent: &str) -> String {
    let held = &w.agent(agent).unwrap().held;
    let candidates = [
        "dance around".to_string(),
        String::new(),
        "go to".to_string(),
        "go to Atlantis".to_string(),
        "take book 1 from bookshelf 99".to_string(),
        "take the moon from table 1".to_string(),
        "use nothing 3".to_string(),
        format!("chat with {agent}: hi myself"),
        "chat with SG: ".to_string(),
        "leave nobody".to_string(),
        "put book 1 in/on wardrobe 7".to_string(),
        "Go To outside".to_string(),
        format!("use {}", held.first().map_or("beefsteak", String::as_str)).replace("use ", "use  "),
    ];
    candidates.choose(rng).unwrap().clone()
}

pub fn world_conformance() -> Outcome {
    // Published scene reconstructions.
    let scenes = appendix_scenes();
    for (w, agent, expected) in &scenes {
        let got = w.observe(agent).map_err(err)?;
        ensure(got == *expected, || format!("{agent}'s view differs:\n got: {got}\nwant: {expected}"))?;
        parse_observation(&got).map_err(|e| format!("{agent}'s view does not parse: {e}"))?;
    }
    let outside = w_outside_reference();
    for (w, agent, _) in scenes.iter().take(1) {
        let got = w.observe(agent).map_err(err)?;
        let have: BTreeSet<String> = clauses(&got).into_iter().collect();
        for clause in clauses(&outside) {
            ensure(have.contains(&clause), || format!("missing clause {clause:?}"))?;
        }
    }

    // Enumeration for an agent outside in the initial world.
    let mut w = WorldState::irollan_valley();
    w.place_agent("AY", OUTSIDE).map_err(err)?;
    let doors: Vec<String> = w.area(OUTSIDE).map_err(err)?.doors.iter().map(|d| format!("go to {d}")).collect();
    let space = w.action_space_for("AY").map_err(err)?;
    ensure(space == doors, || format!("outside action space {space:?}"))?;
    let w = WorldState::irollan_valley();
    ensure(
        w.action_space_for("LL").map_err(err)?.contains(&"take book 1 from bookshelf 1".to_string()),
        || "LL cannot take book 1".into(),
    )?;

    // Random walk of legal and illegal actions.
    let mut w = WorldState::irollan_valley();
    let items: BTreeSet<String> = w.items().iter().map(|i| i.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (mut legal, mut failed) = (0, 0);
    for i in 0..10_000 {
        let agent = *AGENTS.choose(&mut rng).unwrap();
        if rng.random_bool(0.2) {
            let action = illegal_action(&mut rng, &w, agent);
            let before = serde_json::to_string(&w).unwrap();
            let outcome = w.apply_action(agent, &action).map_err(err)?;
            ensure(!outcome.is_success(), || format!("illegal {action:?} succeeded"))?;
            ensure(serde_json::to_string(&w).unwrap() == before, || {
                format!("failed action {action:?} changed the world")
            })?;
            failed += 1;
        } else {
            let space = w.action_space_for(agent).map_err(err)?;
            let mut action = space.choose(&mut rng).ok_or("empty action space")?.clone();
            if action.starts_with("chat with ") && rng.random_bool(0.5) {
                action = format!("{action}: message {i}");
            }
            let outcome = w.apply_action(agent, &action).map_err(err)?;
            ensure(outcome.is_success(), || format!("legal {action:?} for {agent} failed: {outcome}"))?;
            legal += 1;
        }
        w.check_invariants().map_err(err)?;
        conservation(&w, &items)?;
        if i % 25 == 0 {
            for a in AGENTS {
                let text = w.observe(a).map_err(err)?;
                let obs = parse_observation(&text).map_err(|e| format!("step {i}, {a}: {e}\n{text}"))?;
                let doors = obs.seen.iter().filter(|s| matches!(s, Seen::Door(_))).count();
                let gos = w.action_space_for(a).map_err(err)?.iter().filter(|x| x.starts_with("go to ")).count();
                ensure(doors == gos, || format!("{a}: {doors} doors but {gos} go actions"))?;
            }
        }
    }
    Ok(format!("{} scenes, {legal} legal and {failed} failed actions", scenes.len()))
}

fn w_outside_reference() -> String {
    "You are in outside. Looking around you, you see a door to AY's Home, a door to WM's Home, a door to MD's Home, a door \
     to Public Canteen, a door to LL's Home, a door to Public Reading Room, a door to SG's Home, and a door to WL's Home. \
     You are holding the SG's clothes 1 in the clean damp status. You are moving."
        .to_string()
}

fn mock_config(seed: u64) -> SimulationConfig {
    SimulationConfig {
        seed,
        steps: 75,
        ..SimulationConfig::default()
    }
}

pub fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let (a, b, replay) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("replay"));
    let mut sim = Simulation::new(mock_config(7)).map_err(err)?;
    run_to_dir(&mut sim, &a).map_err(err)?;

    let steps = std::fs::read_to_string(a.join(STEPS_FILE)).map_err(err)?;
    let lines: Vec<&str> = steps.lines().collect();
    ensure(lines.len() == 450, || format!("{} step records, want 450", lines.len()))?;
    let metrics = std::fs::read_to_string(a.join(METRICS_FILE)).map_err(err)?;
    let rows = metrics.lines().count() - 1;
    ensure(rows == 75 * (6 + 18 + 6 + 9), || format!("{rows} metric rows, want {}", 75 * 39))?;
    let m = sim.metrics();
    ensure(m.steps == 75, || "metrics steps".into())?;
    ensure(
        m.driver.values().chain(m.topic.values()).all(|s| s.len() == 75)
            && m.pad.values().all(|s| s.len() == 75)
            && m.resources.values().all(|s| s.len() == 75),
        || "series lengths differ from the step count".into(),
    )?;
    let chats = m.interaction_matrix.total();
    ensure(chats > 0, || "interaction matrix is zero".into())?;

    // Same seed, same bytes; replay from the manifest, same bytes.
    let mut again = Simulation::new(mock_config(7)).map_err(err)?;
    run_to_dir(&mut again, &b).map_err(err)?;
    let second = std::fs::read(b.join(STEPS_FILE)).map_err(err)?;
    ensure(second == steps.as_bytes(), || "second run differs".into())?;
    let manifest = RunManifest::load(&a.join(irollan::runtime::MANIFEST_FILE)).map_err(err)?;
    let mut replayed = manifest.simulation().map_err(err)?;
    run_to_dir(&mut replayed, &replay).map_err(err)?;
    ensure(std::fs::read(replay.join(STEPS_FILE)).map_err(err)? == steps.as_bytes(), || {
        "manifest replay differs".into()
    })?;

    // Paired transfers keep the crowd total at its starting value.
    let initial = irollan::ltrha::INITIAL_BALANCE * AGENTS.len() as i64;
    let mut max_drift = 0i64;
    for s in 0..75 {
        let total: i64 = m.resources.values().map(|v| v[s]).sum();
        max_drift = max_drift.max((total - initial).abs());
    }
    ensure(max_drift == 0, || format!("resource total drifted by {max_drift}"))?;

    for (area, series) in &m.topic {
        ensure(series.iter().all(|t| (-1.0..=1.0).contains(t)), || format!("topic of {area} out of range"))?;
    }
    for (agent, series) in &m.pad {
        ensure(series.iter().flatten().all(|v| v.abs() < 1.0), || format!("PAD of {agent} out of (-1, 1)"))?;
    }
    for line in &lines {
        let v: Value = serde_json::from_str(line).map_err(err)?;
        let e = v["emotion"].as_array().ok_or("record without emotion")?;
        ensure(e.iter().all(|x| x.as_f64().is_some_and(|x| x.abs() < 1.0)), || "record PAD out of range".into())?;
        if v["filtered"] == true {
            ensure(
                v["action"].as_str().unwrap_or_default().starts_with(irollan::ltrha::FILTER_MARKER),
                || "filtered record without its marker".into(),
            )?;
        }
    }
    Ok(format!("450 records, {chats} chats"))
}

struct TestServer {
    runtime: tokio::runtime::Runtime,
    base: String,
}

impl TestServer {
    fn start(config: SimulationConfig) -> Result<Self, String> {
        let runtime = tokio::runtime::Runtime::new().map_err(err)?;
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .map_err(err)?;
        let addr = listener.local_addr().map_err(err)?;
        let sim = Arc::new(Mutex::new(Simulation::new(config).map_err(err)?));
        runtime.spawn(server::serve_listener(sim, listener));
        Ok(Self {
            runtime,
            base: format!("http://{addr}"),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        let rt = std::mem::replace(&mut self.runtime, tokio::runtime::Builder::new_current_thread().build().unwrap());
        rt.shutdown_background();
    }
}

fn get(client: &reqwest::blocking::Client, url: &str) -> Result<(u16, Value), String> {
    let r = client.get(url).send().map_err(err)?;
    let status = r.status().as_u16();
    Ok((status, r.json().map_err(err)?))
}

fn post(client: &reqwest::blocking::Client, url: &str, body: &str) -> Result<(u16, Value), String> {
    let r = client
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .map_err(err)?;
    let status = r.status().as_u16();
    Ok((status, r.json().map_err(err)?))
}

pub fn server_conformance() -> Outcome {
    let srv = TestServer::start(SimulationConfig {
        seed: 3,
        ..SimulationConfig::default()
    })?;
    let client = reqwest::blocking::Client::new();
    let mut checks = 0;
    let mut check = |cond: bool, what: &str| {
        checks += 1;
        ensure(cond, || what.to_string())
    };

    let (s, metrics) = get(&client, &srv.url("/metrics"))?;
    check(s == 200 && metrics["steps"] == 0, "metrics before any step")?;
    check(
        metrics["driver"].as_object().is_some_and(|m| m.values().all(|v| v.as_array().is_some_and(Vec::is_empty))),
        "series empty before any step",
    )?;
    let counts = metrics["interaction_matrix"]["counts"].as_array().ok_or("matrix counts missing")?;
    check(counts.iter().flat_map(|r| r.as_array().unwrap()).all(|c| c == 0), "matrix zero")?;

    let (s, obs) = get(&client, &srv.url("/observe/AY"))?;
    check(s == 200, "observe status")?;
    let text = obs["observation"].as_str().ok_or("observation missing")?;
    parse_observation(text).map_err(|e| format!("served observation does not parse: {e}"))?;
    check(obs["action_space"].as_array().is_some_and(|a| !a.is_empty()), "nonempty action space")?;

    let (s, e) = get(&client, &srv.url("/observe/ZZ"))?;
    check(s == 404 && e["error"].is_string(), "unknown agent is 404 with error")?;

    let (_, before) = get(&client, &srv.url("/state"))?;
    let (s, act) = post(&client, &srv.url("/act"), r#"{"agent":"AY","action":"fly to the moon"}"#)?;
    check(s == 200, "gibberish act status")?;
    check(act["outcome"].as_str().is_some_and(|o| o.starts_with("failure(parse)")), "gibberish is a parse failure")?;
    let (_, after) = get(&client, &srv.url("/state"))?;
    check(before == after, "gibberish left the world unchanged")?;

    for (body, code) in [
        ("{not json", 400),
        (r#"{"agent":"AY"}"#, 400),
        (r#"{"agent":"AY","action":"go to outside","extra":1}"#, 400),
        (r#"["AY","go to outside"]"#, 400),
        (r#"{"agent":"ZZ","action":"go to outside"}"#, 404),
    ] {
        let (s, e) = post(&client, &srv.url("/act"), body)?;
        check(s == code && e["error"].is_string(), &format!("{body} should be {code}"))?;
    }
    let (_, unchanged) = get(&client, &srv.url("/state"))?;
    check(unchanged == before, "malformed requests left the world unchanged")?;

    let r0 = before["revision"].as_u64().ok_or("revision missing")?;
    let (s, act) = post(&client, &srv.url("/act"), r#"{"agent":"AY","action":"go to outside"}"#)?;
    check(s == 200 && act["outcome"] == "success", "legal act succeeds")?;
    check(act["revision"].as_u64() == Some(r0 + 1), "legal act bumps the revision once")?;
    check(
        act["observation"].as_str().is_some_and(|o| o.starts_with("You are in outside.")),
        "act returns the new observation",
    )?;

    let (s, step) = post(&client, &srv.url("/step"), "")?;
    check(s == 200 && step["records"].as_array().is_some_and(|r| r.len() == 6), "step returns six records")?;
    let (_, state) = get(&client, &srv.url("/state"))?;
    check(state["completed_steps"] == 1, "state after one step")?;
    let (_, metrics) = get(&client, &srv.url("/metrics"))?;
    check(metrics["steps"] == 1, "metrics after one step")?;
    let (s, _) = get(&client, &srv.url("/nowhere"))?;
    check(s == 404, "unknown route")?;

    // Serial mutation under 16 concurrent clients.
    let (_, start) = get(&client, &srv.url("/state"))?;
    let start_rev = start["revision"].as_u64().ok_or("revision missing")?;
    let revisions: Arc<Mutex<Vec<u64>>> = Arc::default();
    let failures: Arc<Mutex<Vec<String>>> = Arc::default();
    std::thread::scope(|scope| {
        for t in 0..16usize {
            let (revisions, failures, base) = (revisions.clone(), failures.clone(), srv.base.clone());
            scope.spawn(move || {
                let client = reqwest::blocking::Client::new();
                let run = || -> Result<(), String> {
                    for i in 0..12 {
                        if t % 4 == 0 && i % 4 == 0 {
                            let (s, v) = post(&client, &format!("{base}/step"), "")?;
                            ensure(s == 200, || format!("step status {s}"))?;
                            revisions.lock().unwrap().push(v["revision"].as_u64().ok_or("no revision")?);
                            continue;
                        }
                        let agent = AGENTS[(t + i) % AGENTS.len()];
                        let (_, obs) = get(&client, &format!("{base}/observe/{agent}"))?;
                        let space: Vec<String> = serde_json::from_value(obs["action_space"].clone()).map_err(err)?;
                        let action = space.iter().find(|a| a.starts_with("go to ")).unwrap_or(&space[0]);
                        let body = json!({ "agent": agent, "action": action }).to_string();
                        let (s, v) = post(&client, &format!("{base}/act"), &body)?;
                        ensure(s == 200, || format!("act status {s}"))?;
                        if v["outcome"] == "success" {
                            revisions.lock().unwrap().push(v["revision"].as_u64().ok_or("no revision")?);
                        }
                    }
                    Ok(())
                };
                if let Err(e) = run() {
                    failures.lock().unwrap().push(e);
                }
            });
        }
    });
    if let Some(e) = failures.lock().unwrap().first() {
        return Err(format!("concurrent client failed: {e}"));
    }
    let mut revs = revisions.lock().unwrap().clone();
    revs.sort_unstable();
    let (_, end) = get(&client, &srv.url("/state"))?;
    let end_rev = end["revision"].as_u64().ok_or("revision missing")?;
    let expected: Vec<u64> = (start_rev + 1..=end_rev).collect();
    check(
        revs == expected,
        &format!("mutation revisions are not one contiguous serial sequence: {} mutations, {start_rev}..{end_rev}", revs.len()),
    )?;
    let (_, end_metrics) = get(&client, &srv.url("/metrics"))?;
    let stepped = end_metrics["steps"].as_u64().unwrap_or_default();
    check(stepped == 1 + 4 * 3, "every concurrent step was applied once")?;
    Ok(format!("{checks} checks, {} concurrent mutations", revs.len()))
}

#[allow(dead_code)]
pub fn balances_of(sim: &Simulation) -> BTreeMap<String, i64> {
    sim.ledger().balances().clone()
}

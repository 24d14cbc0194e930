//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use coarsehash::bench::{run_bench, BenchConfig, BenchReport};
use coarsehash::dataset::{self, DatasetRecipe};
use coarsehash::eval::{
    cluster_balance, op_count, storage_report, throughput_hz, OpConfig, StorageConfig, SystemKind, MAX_RADIUS,
};
use coarsehash::hashindex::InvertedIndex;
use coarsehash::pipeline::{train, GroundTruth, QueryPlan, TrainConfig, TrainedModel};
use coarsehash::quantizer::{QuantVector, Quantizer};
use coarsehash::seqmatch::{Matcher, SequenceMatcher};
use coarsehash::system::{Localizer, ProposedLocalizer};
use coarsehash::DescriptorMatrix;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2020;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Desk {
    model: TrainedModel,
    codes: Vec<QuantVector>,
}

fn desk() -> Desk {
    let data = dataset::build(&DatasetRecipe::twenty_k(SEED)).unwrap();
    let model = train(&data.reference, TrainConfig { d: 15, k: 2, batch: None }).unwrap();
    let codes = model.encode(&data.query).unwrap();
    Desk { model, codes }
}

fn window(codes: &[QuantVector], start: usize, l: usize) -> &[QuantVector] {
    let start = start.min(codes.len() - l);
    &codes[start..start + l]
}

fn c1_hash_and_partition() -> Check {
    let mut total = 0u64;
    for d in 1..=12 {
        let qz = Quantizer::from_centers(2, d, (0..d).flat_map(|_| [0.0, 1.0]).collect()).unwrap();
        let mut seen = vec![false; qz.address_space() as usize];
        for h in 0..qz.address_space() {
            let q = qz.unhash(h).unwrap();
            ensure(qz.hash(&q).unwrap() == h, format!("d={d}: round trip of {h} failed"))?;
            let p = positional(&q.0, 2) as usize;
            ensure(!seen[p], format!("d={d}: vector {p} decoded twice"))?;
            seen[p] = true;
            total += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let data: Vec<f32> = (0..10_000 * 15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let refs = DescriptorMatrix::new(10_000, 15, data, "uniform").unwrap();
    let qz = Quantizer::fit(&refs, 2).unwrap();
    let idx = InvertedIndex::build(&refs, &qz).unwrap();
    let addresses: Vec<u64> = refs.iter_rows().map(|r| qz.hash(&qz.quantize_f32(r).unwrap()).unwrap()).collect();
    let oracle: Vec<(u64, Vec<u32>)> = group_by(&addresses).into_iter().collect();
    let got: Vec<(u64, Vec<u32>)> = idx.buckets().map(|(h, b)| (h, b.to_vec())).collect();
    ensure(got == oracle, "bucket partition differs from group-by oracle")?;
    Ok(format!("{total} addresses round-tripped; {} buckets match group-by", got.len()))
}

fn c2_online_equivalence(desk: &Desk) -> Check {
    let matcher = Matcher::new(&desk.model.index, &desk.model.quantizer).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut compared = 0;
    for w in 0..500 {
        let l = rng.random_range(1..=60);
        let slide = rng.random_range(0..4);
        let start = rng.random_range(0..desk.codes.len() - l - slide);
        let frames = &desk.codes[start..start + l + slide];
        let mut online = SequenceMatcher::new(&matcher, l).unwrap();
        for (t, f) in frames.iter().enumerate() {
            let out = online.push(f.clone()).unwrap();
            if t + 1 >= l {
                let batch = matcher.match_sequence(&frames[t + 1 - l..=t]).unwrap();
                ensure(out.as_ref() == Some(&batch), format!("window {w} (L={l}, start {start}) differs at frame {t}"))?;
                compared += 1;
            }
        }
    }
    Ok(format!("500 windows, {compared} online results identical to batch"))
}

fn c3_naive_oracle(desk: &Desk) -> Check {
    let (idx, qz) = (&desk.model.index, &desk.model.quantizer);
    let matcher = Matcher::new(idx, qz).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    for w in 0..200 {
        let win = window(&desk.codes, rng.random_range(0..desk.codes.len()), 50);
        let got = matcher.match_sequence(win).unwrap();
        let candidates = window_candidates(idx, qz, win);
        ensure(got.candidates == candidates, format!("window {w}: candidate sets differ"))?;
        let (best, score) = naive_sequence(idx, qz, win, &candidates);
        ensure(
            got.best == best && got.score == score,
            format!("window {w}: ({}, {}) vs oracle ({best}, {score})", got.best, got.score),
        )?;
    }
    Ok("200 windows at L=50 identical to direct scorer".into())
}

fn c4_op_counts() -> Check {
    let reported = OpConfig {
        input_dims: 96,
        d: 24,
        k: 2,
        ref_count: 10_047_781,
        candidates: 32,
        new_pairs: 50,
        precision: 64,
    };
    let ops = op_count(reported, SystemKind::Proposed).unwrap();
    ensure(ops.seq_ops == 37_400.0, format!("seq_ops = {}, expected 37400", ops.seq_ops))?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    for _ in 0..1000 {
        let (d, k, nx, nr) = (
            rng.random_range(1u64..65),
            rng.random_range(2u64..17),
            rng.random_range(1u64..20_000_000),
            rng.random_range(1u64..5000),
        );
        let cfg = OpConfig { d, k, ref_count: nx, candidates: nr, ..reported };
        let p = op_count(cfg, SystemKind::Proposed).unwrap();
        let b = op_count(cfg, SystemKind::Baseline).unwrap();
        ensure(p.quant_ops == d * (2 * k - 1), "quantize ops")?;
        ensure(p.hash_ops == 2 * d - 1, "hash ops")?;
        ensure(b.lookup_ops == 3 * d * nx, "baseline retrieval ops")?;
        ensure(p.score_update_ops == 3 * nr - 1 && b.score_update_ops == 3 * nr - 1, "score update ops")?;
    }
    let hz = throughput_hz(1.3e12, ops.seq_ops);
    Ok(format!("seq_ops = {}; 1000 random configs agree; 1.3 TFLOP/s -> {:.1} MHz", ops.seq_ops, hz / 1e6))
}

fn c5_storage() -> Check {
    let configs = [(20_000u64, 15u64, 0.2), (1_047_781, 20, 8.4), (10_047_781, 24, 80.4)];
    let mut lines = Vec::new();
    let mut ok = true;
    for (nx, d, want) in configs {
        let mb = storage_report(StorageConfig { ref_count: nx, input_dims: 96, d, k: 2 }).total_mb();
        let rel = (mb - want).abs() / want;
        ok &= rel <= 0.005;
        lines.push(format!("N_x={nx} d={d}: {mb:.4} MB vs {want} ({:.2}%)", 100.0 * rel));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bench_report() -> BenchReport {
    let cfg = BenchConfig {
        sequence_lengths: vec![1, 50, 100],
        noise_scales: vec![1.0, 2.0],
        d: 15,
        k: 2,
        stride: 10,
        ..BenchConfig::new("20K", DatasetRecipe::twenty_k(SEED))
    };
    run_bench(&cfg).unwrap()
}

fn c6_separation(report: &BenchReport) -> Check {
    let p = report.run("proposed", 50, 1.0).unwrap();
    let b = report.run("baseline", 50, 1.0).unwrap();
    let (rp, rb) = (p.recall_at(20), b.recall_at(20));
    let msg = format!(
        "recall@20 proposed {rp:.3} vs baseline {rb:.3} (cap {}, mean N_r {:.1})",
        b.cap.unwrap_or(0),
        p.mean_nr
    );
    ensure(rp > 0.0 && rp >= 5.0 * rb, msg.clone())?;
    Ok(msg)
}

fn c7_monotonicity(report: &BenchReport) -> Check {
    let mut notes = Vec::new();
    for noise in [1.0, 2.0] {
        let r = |l| report.run("proposed", l, noise).unwrap().recall_at(20);
        let (r1, r50, r100) = (r(1), r(50), r(100));
        ensure(
            r100 >= r50 - 0.02 && r50 >= r1 - 0.02,
            format!("noise {noise}: recall@20 L=1 {r1:.3}, L=50 {r50:.3}, L=100 {r100:.3}"),
        )?;
        notes.push(format!("noise {noise}: {r1:.3} <= {r50:.3} <= {r100:.3}"));
    }
    for l in [1, 50, 100] {
        let qm1 = report.run("proposed", l, 1.0).unwrap();
        let qm2 = report.run("proposed", l, 2.0).unwrap();
        for radius in 0..=MAX_RADIUS {
            ensure(
                qm2.recall_at(radius) <= qm1.recall_at(radius),
                format!("L={l} radius {radius}: QM2 {} > QM1 {}", qm2.recall_at(radius), qm1.recall_at(radius)),
            )?;
        }
    }
    notes.push("QM2 <= QM1 at every radius for L in {1, 50, 100}".into());
    Ok(notes.join("; "))
}

fn c8_upper_bound(report: &BenchReport) -> Check {
    for run in &report.runs {
        for radius in 0..=MAX_RADIUS {
            ensure(
                run.in_list_recall_at(radius) >= run.recall_at(radius),
                format!("{} L={} noise {} radius {radius}", run.system, run.l, run.noise_scale),
            )?;
        }
    }
    Ok(format!("{} runs, in-list >= selected at all radii", report.runs.len()))
}

fn c9_balance() -> Check {
    let balance = |align| {
        let data = dataset::build_with(&DatasetRecipe::twenty_k(SEED), align).unwrap();
        let m = train(&data.reference, TrainConfig { d: 15, k: 2, batch: None }).unwrap();
        cluster_balance(&m.index, &m.quantizer)
    };
    let with = balance(true);
    let without = balance(false);
    let worst = with.max_imbalance(0..10);
    let contrast = (0..3).any(|j| without.imbalance(j) > with.imbalance(j));
    let msg = format!(
        "rescaled max imbalance (dims 0-9) {worst:.3}; first 3 dims without/with: {}",
        (0..3)
            .map(|j| format!("{:.3}/{:.3}", without.imbalance(j), with.imbalance(j)))
            .collect::<Vec<_>>()
            .join(", ")
    );
    ensure(worst <= 0.15 && contrast, msg.clone())?;
    Ok(msg)
}

fn mean_nr(recipe: &DatasetRecipe, stride: usize) -> (usize, usize, f64) {
    let data = dataset::build(recipe).unwrap();
    let n = data.reference.rows();
    let d = (n as f64).log2().ceil() as usize + 1;
    let model = train(&data.reference, TrainConfig { d, k: 2, batch: None }).unwrap();
    let plan = QueryPlan::new(50, stride).unwrap();
    let truth = GroundTruth::new(&data.reference, &data.query);
    let records = ProposedLocalizer::new(&model)
        .unwrap()
        .localize(&data.query, &plan, &truth)
        .unwrap();
    (n, d, records.iter().map(|r| r.n_r as f64).sum::<f64>() / records.len() as f64)
}

fn c10_sublinear() -> Check {
    let (n_small, d_small, nr_small) = mean_nr(&DatasetRecipe::twenty_k(SEED), 10);
    let (n_large, d_large, nr_large) = mean_nr(&DatasetRecipe::one_m(SEED), 100);
    let ratio = nr_large / nr_small;
    let bound = (n_large as f64 / n_small as f64) / 10.0;
    let msg = format!(
        "N_r {nr_small:.1} (N_x={n_small}, d={d_small}) -> {nr_large:.1} (N_x={n_large}, d={d_large}); ratio {ratio:.3} < {bound:.3}"
    );
    ensure(ratio < bound, msg.clone())?;
    Ok(msg)
}

fn run(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}")),
        other => other,
    };
    let (tag, msg) = match &outcome {
        Ok(m) => ("PASS", m),
        Err(m) => ("FAIL", m),
    };
    println!("{tag} criterion {n:>2} {name} [{elapsed:.1?}]: {msg}");
    outcome.is_ok()
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "hash bijectivity and index partition", secs(5), c1_hash_and_partition);
    let setup = Instant::now();
    let desk = desk();
    println!("     20K fixture built in {:.1?}", setup.elapsed());
    ok &= run(2, "batch/online equivalence", secs(30), || c2_online_equivalence(&desk));
    ok &= run(3, "direct scorer equivalence", secs(120), || c3_naive_oracle(&desk));
    drop(desk);
    ok &= run(4, "op-count reproduction", secs(1), c4_op_counts);
    ok &= run(5, "storage model reproduction", secs(1), c5_storage);
    let setup = Instant::now();
    let report = bench_report();
    println!("     20K bench (L 1/50/100, QM1/QM2, both systems) in {:.1?}", setup.elapsed());
    ok &= run(6, "proposed vs baseline separation", secs(600), || c6_separation(&report));
    ok &= run(7, "sequence length and noise monotonicity", secs(600), || c7_monotonicity(&report));
    ok &= run(8, "in-list recall upper bound", secs(1), || c8_upper_bound(&report));
    drop(report);
    ok &= run(9, "cluster balance contrast", secs(120), c9_balance);
    ok &= run(10, "sublinear N_r growth", secs(1800), c10_sublinear);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

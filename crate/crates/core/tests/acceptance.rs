//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use truewalks::embed::{self, SkipGramConfig};
use truewalks::eval::wilcoxon::SignedRanks;
use truewalks::eval::{self, mccv_splits, median, wilcoxon_signed_rank, EvalConfig, ForestParams};
use truewalks::fixtures::{self, random_graph};
use truewalks::ingest::{self, IngestError};
use truewalks::par::Exec;
use truewalks::pipeline::{self, PipelineConfig};
use truewalks::synth::{self, SynthConfig};
use truewalks::walk::build_corpus;
use truewalks::{Polarity, WalkConfig, WalkStrategy};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn walk_soundness() -> Outcome {
    let start = Instant::now();
    let mut walks = 0;
    for seed in 0..100u64 {
        let nodes = 2 + (seed as usize % 11);
        let kg = random_graph(seed, nodes);
        let depth = 2 + (seed as usize % 4);
        let cfg = WalkConfig {
            max_walks: 50,
            max_depth: depth,
            seed,
        };
        let corpus = build_corpus(&kg, &cfg, WalkStrategy::TrueWalks, Exec::Sequential)
            .map_err(|e| e.to_string())?;
        for status in [Polarity::Positive, Polarity::Negative] {
            for root in kg.root_entities() {
                let tok = kg.token(*root);
                let oracle = common::oracle_walks(&kg, &tok, status, depth);
                for w in corpus.walks(status).iter().filter(|w| w.root() == tok) {
                    check(
                        oracle.contains(&w.tokens),
                        format!("graph {seed}: walk {:?} not enumerable", w.tokens),
                    )?;
                    check(w.status == status, format!("graph {seed}: wrong status"))?;
                    common::check_walk(&kg, w).map_err(|e| format!("graph {seed}: {e}"))?;
                    walks += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(30),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "{walks} walks over 100 graphs legal, {elapsed:.2?}"
    ))
}

fn reverse_inheritance() -> Outcome {
    let kg = fixtures::reverse_inheritance();
    let id = |s: &str| kg.iri_id(s).unwrap();
    let names = |set: BTreeSet<truewalks::NodeId>| -> BTreeSet<String> {
        set.into_iter().map(|n| kg.token(n)).collect()
    };
    let set = |xs: &[&str]| -> BTreeSet<String> { xs.iter().map(|s| s.to_string()).collect() };
    let p1_pos = names(kg.entailed_annotations(id("P1"), Polarity::Positive));
    let p2_neg = names(kg.entailed_annotations(id("P2"), Polarity::Negative));
    check(
        p1_pos == set(&["F1", "F2", "F3"]),
        format!("P1 positive closure {p1_pos:?}"),
    )?;
    check(
        p2_neg == set(&["F1", "F3"]),
        format!("P2 negative closure {p2_neg:?}"),
    )?;
    check(!p2_neg.contains("F2"), "P2 negatively inherits F2")?;
    let p2_pos = names(kg.entailed_annotations(id("P2"), Polarity::Positive));
    let p1_neg = names(kg.entailed_annotations(id("P1"), Polarity::Negative));
    check(
        p2_pos.is_empty() && p1_neg.is_empty(),
        "unexpected entailments",
    )?;
    Ok("P1 +{F1,F2,F3}; P2 -{F1,F3}; F2 not negatively inherited".into())
}

fn gradient_check() -> Outcome {
    let worst = common::gradient_check(100, 1e-5, 2024);
    check(worst < 1e-4, format!("worst relative error {worst:e}"))?;
    Ok(format!("100 instances, worst relative error {worst:.2e}"))
}

fn order_aware_structure() -> Outcome {
    let corpus = common::always_follows_corpus(17, 400);
    let cfg = SkipGramConfig {
        dim: 16,
        window: 5,
        order_aware: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (m, _) = embed::train(&corpus, &cfg, &mut rng, 1).map_err(|e| e.to_string())?;
    check(
        m.outputs.len() == 10,
        format!("{} output matrices", m.outputs.len()),
    )?;
    check(m.is_finite(), "non-finite parameters")?;
    let after = m.score("a", "b", 1).unwrap();
    let before = m.score("a", "b", -1).unwrap();
    check(
        after > before,
        format!("score(+1)={after} <= score(-1)={before}"),
    )?;
    Ok(format!(
        "10 output matrices; score(a->b,+1)={after:.3} > score(a->b,-1)={before:.3}"
    ))
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let mut ours = Vec::new();
    let mut base = Vec::new();
    for seed in 0..10u64 {
        let data = synth::gen_kg(&SynthConfig {
            signal: 0.9,
            n_entities: 60,
            n_pairs: 200,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let mut cfg = PipelineConfig::default();
        cfg.set_seed(seed);
        cfg.embed.dim = 50;
        cfg.deterministic = true;
        for (mode, out) in [
            (WalkStrategy::TrueWalks, &mut ours),
            (WalkStrategy::PositiveOnly, &mut base),
        ] {
            cfg.mode = mode;
            let (_, _, table) = pipeline::embed_graph(&data.kg, &cfg).map_err(|e| e.to_string())?;
            out.push(
                pipeline::rank_stage(&table, &data.pairs)
                    .map_err(|e| e.to_string())?
                    .auc,
            );
        }
    }
    let (m_ours, m_base) = (median(&ours), median(&base));
    let p = wilcoxon_signed_rank(&ours, &base).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!("median AUC {m_ours:.3} vs {m_base:.3}, p={p:.4}, {elapsed:.1?}");
    check(m_ours - m_base >= 0.10, format!("gap too small: {detail}"))?;
    check(p < 0.05, format!("not significant: {detail}"))?;
    check(
        elapsed < Duration::from_secs(300),
        format!("too slow: {detail}"),
    )?;
    Ok(detail)
}

fn wilcoxon_correctness() -> Outcome {
    for n in 5..=12 {
        let a: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let p = wilcoxon_signed_rank(&a, &vec![0.0; n]).map_err(|e| e.to_string())?;
        let expected = 2.0 / (1u64 << n) as f64;
        check(
            (p - expected).abs() < 1e-15,
            format!("n={n}: p={p}, expected {expected}"),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let shift = rng.random_range(-1.0..1.0);
        let a: Vec<f64> = (0..12)
            .map(|_| rng.random_range(-1.0..1.0) + shift)
            .collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sr = SignedRanks::new(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((sr.exact_p() - sr.normal_p()).abs());
    }
    check(worst < 0.02, format!("exact vs normal divergence {worst}"))?;
    Ok(format!(
        "2/2^n for n=5..12; max exact-normal divergence at n=12 {worst:.4}"
    ))
}

fn protocol_fidelity() -> Outcome {
    let cfg = EvalConfig::default();
    let grid: HashSet<ForestParams> = cfg.grid().into_iter().collect();
    let mut expected = HashSet::new();
    for n in [50, 100, 200] {
        for d in [Some(2), Some(4), Some(6), None] {
            expected.insert(ForestParams::new(n, d));
        }
    }
    check(grid == expected && cfg.grid().len() == 12, "grid differs")?;

    let data = synth::gen_kg(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let mut pcfg = PipelineConfig::default();
    pcfg.embed.dim = 50;
    pcfg.deterministic = true;
    let (_, _, table) = pipeline::embed_graph(&data.kg, &pcfg).map_err(|e| e.to_string())?;
    let n = data.pairs.len();
    let results =
        eval::classify(&table, &data.pairs, &cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    check(results.len() == 30, format!("{} splits", results.len()))?;
    let k = (0.3 * n as f64).round() as usize;
    for (i, (r, s)) in results
        .iter()
        .zip(mccv_splits(n, 30, 0.3, cfg.seed))
        .enumerate()
    {
        check(
            r.split == i && r.test_size == k && r.train_size == n - k,
            format!("split {i} sizes"),
        )?;
        check(
            s.test.len() == k,
            format!("split {i}: |test|={}", s.test.len()),
        )?;
        let train: HashSet<usize> = s.train.iter().copied().collect();
        check(
            s.test.iter().all(|t| !train.contains(t)),
            format!("split {i} overlaps"),
        )?;
        check(
            train.len() + s.test.len() == n,
            format!("split {i} does not cover"),
        )?;
        check(
            expected.contains(&ForestParams::new(r.n_estimators, r.max_depth)),
            "params outside grid",
        )?;
    }
    Ok(format!(
        "30 disjoint splits with |test|={k} of {n}; grid {{50,100,200}}x{{2,4,6,None}}"
    ))
}

fn fused_dimension() -> Outcome {
    let kg = fixtures::reverse_inheritance_both_polarities();
    let cfg = PipelineConfig::default();
    let (_, models, table) = pipeline::embed_graph(&kg, &cfg).map_err(|e| e.to_string())?;
    let pipeline::Models::Dual(dual) = models else {
        return Err("default mode did not train two models".into());
    };
    check(
        table.dim() == 200 && table.dim_pos == 100 && table.dim_neg == 100,
        format!("dim {}", table.dim()),
    )?;
    for (e, v) in table.iter() {
        check(v.len() == 200, format!("{e}: {}", v.len()))?;
        check(
            dual.positive.vector(e) == Some(&v[..100]),
            format!("{e}: positive half"),
        )?;
        check(
            dual.negative.vector(e) == Some(&v[100..]),
            format!("{e}: negative half"),
        )?;
    }
    Ok(format!(
        "{} entities x 200 = 100 (pos) + 100 (neg)",
        table.len()
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synth::gen_kg(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let inputs = [
        (pipeline::ONTOLOGY_FILE, data.ontology_text()),
        (pipeline::ANNOTATIONS_FILE, data.annotations_text()),
        (pipeline::PAIRS_FILE, data.pairs_text()),
    ];
    for (name, text) in &inputs {
        fs::write(dir.path().join(name), text).map_err(|e| e.to_string())?;
    }
    let files = [
        pipeline::CORPUS_FILE,
        pipeline::POS_MODEL_FILE,
        pipeline::NEG_MODEL_FILE,
        pipeline::EMBEDDINGS_FILE,
        pipeline::REPORT_FILE,
        pipeline::SIMILARITY_FILE,
    ];
    let mut outputs = Vec::new();
    for run in ["one", "two"] {
        let mut cfg = PipelineConfig {
            ontology: Some(dir.path().join(pipeline::ONTOLOGY_FILE)),
            annotations: Some(dir.path().join(pipeline::ANNOTATIONS_FILE)),
            pairs: Some(dir.path().join(pipeline::PAIRS_FILE)),
            out: dir.path().join(run),
            workers: 4,
            deterministic: true,
            ..Default::default()
        };
        cfg.set_seed(7);
        pipeline::run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| fs::read(cfg.out_path(f)).map_err(|e| format!("{f}: {e}")))
            .collect::<Result<_, _>>()?;
        outputs.push(bytes);
    }
    for (i, f) in files.iter().enumerate() {
        check(
            outputs[0][i] == outputs[1][i],
            format!("{f} differs between runs"),
        )?;
    }
    Ok(format!(
        "{} artifacts byte-identical across two runs",
        files.len()
    ))
}

fn negative_assertion_parsing() -> Outcome {
    let (text, expected) = synth::reified_negatives(1000, 99);
    let triples = ingest::parse_ntriples(text.as_bytes()).map_err(|e| e.to_string())?;
    check(triples.len() == 4000, format!("{} triples", triples.len()))?;
    let folded = ingest::fold_negative_assertions(&triples).map_err(|e| e.to_string())?;
    check(folded.len() == 1000, format!("{} statements", folded.len()))?;
    check(
        folded.iter().all(|s| s.polarity == Polarity::Negative),
        "positive residue",
    )?;
    check(
        folded
            .iter()
            .all(|s| !s.predicate.starts_with("http://www.w3.org/")),
        "reification vocabulary left over",
    )?;
    check(
        folded == expected,
        "folded statements differ from the generated ones",
    )?;

    let lines: Vec<&str> = text.lines().collect();
    // cluster k occupies lines 4k+1..=4k+4: type, source, property, target
    let mut missing_target = lines.clone();
    missing_target.remove(4 * 10 + 3);
    let err = fold(&missing_target.join("\n"));
    check(
        matches!(err, Some(IngestError::IncompleteNegativeAssertion { line: 41, missing, .. }) if missing.contains("target")),
        format!("missing target: {err:?}"),
    )?;

    let orphan = format!(
        "{}\n_:stray <http://www.w3.org/2002/07/owl#sourceIndividual> <x> .",
        lines[..8].join("\n")
    );
    let err = fold(&orphan);
    check(
        matches!(
            err,
            Some(IngestError::OrphanReificationFragment { line: 9, .. })
        ),
        format!("orphan fragment: {err:?}"),
    )?;

    let mut broken = lines.clone();
    broken[6] = "_:npa1 <http://www.w3.org/2002/07/owl#assertionProperty> .";
    let err = ingest::parse_ntriples(broken.join("\n").as_bytes()).err();
    check(
        matches!(err, Some(IngestError::Syntax { line: 7, .. })),
        format!("syntax error: {err:?}"),
    )?;
    Ok(
        "1000 clusters -> 1000 negative statements; malformed clusters rejected at lines 41, 9, 7"
            .into(),
    )
}

fn fold(text: &str) -> Option<IngestError> {
    match ingest::parse_ntriples(text.as_bytes()) {
        Ok(t) => ingest::fold_negative_assertions(&t).err(),
        Err(e) => Some(e),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("walk soundness on 100 fuzzed graphs", walk_soundness),
        ("reverse-inheritance entailments", reverse_inheritance),
        ("skip-gram gradient check", gradient_check),
        (
            "order-aware output matrices and position sensitivity",
            order_aware_structure,
        ),
        ("planted-signal separation", planted_signal),
        ("Wilcoxon signed-rank correctness", wilcoxon_correctness),
        ("MCCV protocol and forest grid", protocol_fidelity),
        ("fused dimensionality", fused_dimension),
        ("byte-identical determinism", determinism),
        ("negative-assertion parsing", negative_assertion_parsing),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

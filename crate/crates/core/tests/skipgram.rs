mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use truewalks::embed::{train, train_dual, NoiseTable, SkipGramConfig, Vocab};
use truewalks::eval::cosine;
use truewalks::fixtures;
use truewalks::par::Exec;
use truewalks::walk::build_corpus;
use truewalks::{WalkConfig, WalkStrategy};

fn sentences(lines: &[&str]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

#[test]
fn gradients_match_central_differences() {
    let worst = common::gradient_check(100, 1e-5, 11);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn noise_frequencies_follow_smoothed_unigram() {
    let mut lines = Vec::new();
    for (tok, count) in [("a", 1), ("b", 3), ("c", 10), ("d", 40), ("e", 100)] {
        for _ in 0..count {
            lines.push(tok);
        }
    }
    let corpus = sentences(&[&lines.join(" ")]);
    let vocab = Vocab::build(&corpus, 1);
    let table = NoiseTable::new(&vocab);
    let weights: Vec<f64> = (0..vocab.len())
        .map(|i| (vocab.count(i) as f64).powf(0.75))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 1_000_000;
    let mut hist = vec![0usize; vocab.len()];
    for i in table.sample(draws, None, &mut rng) {
        hist[i] += 1;
    }
    for i in 0..vocab.len() {
        let expected = weights[i] / total;
        let observed = hist[i] as f64 / draws as f64;
        assert!(
            (observed - expected).abs() < 0.01,
            "{}: {observed} vs {expected}",
            vocab.token(i)
        );
    }
}

#[test]
fn co_occurring_tokens_end_up_closer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut corpus = Vec::new();
    for _ in 0..300 {
        let k = rng.random_range(0..5);
        let j = rng.random_range(0..5);
        corpus.push(vec!["a".to_string(), "b".to_string(), format!("c{k}")]);
        corpus.push(vec!["b".to_string(), "a".to_string(), format!("c{j}")]);
        corpus.push(vec!["x".to_string(), "y".to_string(), format!("d{k}")]);
        corpus.push(vec!["y".to_string(), "x".to_string(), format!("d{j}")]);
    }
    for seed in 0..5 {
        let cfg = SkipGramConfig {
            dim: 20,
            window: 2,
            epochs: 5,
            seed,
            ..Default::default()
        };
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = train(&corpus, &cfg, &mut r, 1).unwrap();
        let v = |t: &str| m.vector(t).unwrap();
        assert!(
            cosine(v("a"), v("b")) > cosine(v("a"), v("x")),
            "seed {seed}"
        );
    }
}

/// Sentences from a random sparse Markov chain, shaped like walk corpora.
fn markov_corpus(
    rng: &mut ChaCha8Rng,
    states: usize,
    sentences: usize,
    len: usize,
) -> Vec<Vec<String>> {
    let next: Vec<Vec<usize>> = (0..states)
        .map(|_| (0..3).map(|_| rng.random_range(0..states)).collect())
        .collect();
    (0..sentences)
        .map(|_| {
            let mut s = rng.random_range(0..states);
            (0..len)
                .map(|_| {
                    let tok = format!("w{s}");
                    s = next[s][rng.random_range(0..3)];
                    tok
                })
                .collect()
        })
        .collect()
}

#[test]
fn epoch_loss_does_not_increase() {
    let mut ok = 0;
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let corpus = markov_corpus(&mut rng, 40, 200, 8);
        let cfg = SkipGramConfig {
            dim: 16,
            seed: trial,
            ..Default::default()
        };
        let (_, stats) = train(&corpus, &cfg, &mut rng, 1).unwrap();
        let l = &stats.epoch_losses;
        if l[1] <= l[0] && l[2] <= l[1] {
            ok += 1;
        }
    }
    assert!(ok >= 19, "{ok}/20 trials non-increasing");
}

#[test]
fn order_aware_shapes() {
    let corpus = sentences(&["a b c d e f g", "g f e d c b a"]);
    for (order_aware, window, expected) in [(false, 5, 1), (true, 5, 10), (true, 2, 4)] {
        let cfg = SkipGramConfig {
            dim: 8,
            window,
            order_aware,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, _) = train(&corpus, &cfg, &mut rng, 1).unwrap();
        assert_eq!(m.outputs.len(), expected);
        assert!(m.outputs.iter().all(|o| o.rows == 7 && o.cols == 8));
        assert!(m.is_finite());
    }
}

#[test]
fn order_aware_model_knows_what_follows() {
    let corpus = common::always_follows_corpus(9, 400);
    for seed in 0..5 {
        let cfg = SkipGramConfig {
            dim: 16,
            window: 2,
            order_aware: true,
            seed,
            ..Default::default()
        };
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = train(&corpus, &cfg, &mut r, 1).unwrap();
        let after = m.score("a", "b", 1).unwrap();
        let before = m.score("a", "b", -1).unwrap();
        assert!(after > before, "seed {seed}: {after} vs {before}");
    }
}

#[test]
fn parallel_training_stays_finite_and_learns() {
    let corpus = sentences(&["a b c", "b a c", "x y z", "y x z"].repeat(100));
    let cfg = SkipGramConfig {
        dim: 16,
        window: 2,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (m, stats) = train(&corpus, &cfg, &mut rng, 4).unwrap();
    assert!(m.is_finite());
    assert_eq!(stats.epoch_losses.len(), 5);
    assert!(stats.epoch_losses[4] < stats.epoch_losses[0]);
}

#[test]
fn dual_models_follow_walk_polarity() {
    let kg = fixtures::reverse_inheritance_both_polarities();
    let wcfg = WalkConfig::default();
    let corpus = build_corpus(&kg, &wcfg, WalkStrategy::TrueWalks, Exec::Sequential).unwrap();
    let cfg = SkipGramConfig {
        dim: 8,
        ..Default::default()
    };
    let (dual, _) = train_dual(&corpus, &cfg, 1).unwrap();
    for p in ["P1", "P2"] {
        assert!(dual.positive.vector(p).is_some(), "{p} positive");
        assert!(dual.negative.vector(p).is_some(), "{p} negative");
    }
    let (again, _) = train_dual(&corpus, &cfg, 1).unwrap();
    assert_eq!(dual, again);

    // on the plain graph P1 has no negative statements and P2 no positive ones
    let kg = fixtures::reverse_inheritance();
    let corpus = build_corpus(&kg, &wcfg, WalkStrategy::TrueWalks, Exec::Sequential).unwrap();
    let (dual, _) = train_dual(&corpus, &cfg, 1).unwrap();
    assert!(dual.positive.vector("P1").is_some() && dual.negative.vector("P1").is_none());
    assert!(dual.negative.vector("P2").is_some());
}

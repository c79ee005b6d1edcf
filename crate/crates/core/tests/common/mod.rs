//! Brute-force walk oracle built straight from the statement list.
#![allow(dead_code)]

use std::collections::BTreeSet;

use truewalks::kg::{SUBCLASS_TOKEN, SUPERCLASS_TOKEN};
use truewalks::{KnowledgeGraph, Polarity, Walk};

struct Edge {
    s: String,
    p: String,
    o: String,
    polarity: Polarity,
    subclass: bool,
}

fn edges(kg: &KnowledgeGraph) -> Vec<Edge> {
    kg.statements()
        .iter()
        .filter(|st| !kg.term(st.object).is_literal())
        .map(|st| Edge {
            s: kg.token(st.subject),
            p: kg.token(st.predicate),
            o: kg.token(st.object),
            polarity: st.polarity,
            subclass: kg.is_subclass(st),
        })
        .collect()
}

/// Legal `(edge token, target)` moves out of `node`.
fn moves(edges: &[Edge], node: &str, status: Polarity, first: bool) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for e in edges {
        if first {
            if e.s == node && !e.subclass && e.polarity == status {
                out.insert((e.p.clone(), e.o.clone()));
            }
            continue;
        }
        if e.subclass {
            match status {
                Polarity::Positive if e.s == node => {
                    out.insert((SUBCLASS_TOKEN.to_string(), e.o.clone()));
                }
                Polarity::Negative if e.o == node => {
                    out.insert((SUPERCLASS_TOKEN.to_string(), e.s.clone()));
                }
                _ => {}
            }
        } else if e.s == node && (status == Polarity::Negative || e.polarity == Polarity::Positive)
        {
            out.insert((e.p.clone(), e.o.clone()));
        }
    }
    out
}

/// All legal walks of 1 to `max_depth - 1` hops from `root`.
pub fn oracle_walks(
    kg: &KnowledgeGraph,
    root: &str,
    status: Polarity,
    max_depth: usize,
) -> BTreeSet<Vec<String>> {
    let edges = edges(kg);
    let mut out = BTreeSet::new();
    let mut frontier = vec![vec![root.to_string()]];
    for hop in 0..max_depth.saturating_sub(1) {
        let mut next = Vec::new();
        for walk in frontier {
            let node = walk.last().unwrap();
            for (edge, target) in moves(&edges, node, status, hop == 0) {
                let mut w = walk.clone();
                w.push(edge);
                w.push(target);
                out.insert(w.clone());
                next.push(w);
            }
        }
        frontier = next;
    }
    out
}

/// Checks polarity purity and the direction of every structural token.
pub fn check_walk(kg: &KnowledgeGraph, walk: &Walk) -> Result<(), String> {
    let edges = edges(kg);
    let t = &walk.tokens;
    if t.len() < 3 || t.len().is_multiple_of(2) {
        return Err(format!("malformed walk {t:?}"));
    }
    for (i, pair) in t[1..].chunks(2).enumerate() {
        let (from, edge, to) = (&t[2 * i], &pair[0], &pair[1]);
        let ok = if i == 0 {
            edges.iter().any(|e| {
                &e.s == from
                    && &e.p == edge
                    && &e.o == to
                    && !e.subclass
                    && e.polarity == walk.status
            })
        } else if edge == SUBCLASS_TOKEN {
            walk.status == Polarity::Positive
                && edges
                    .iter()
                    .any(|e| e.subclass && &e.s == from && &e.o == to)
        } else if edge == SUPERCLASS_TOKEN {
            walk.status == Polarity::Negative
                && edges
                    .iter()
                    .any(|e| e.subclass && &e.s == to && &e.o == from)
        } else {
            edges.iter().any(|e| {
                !e.subclass
                    && &e.s == from
                    && &e.p == edge
                    && &e.o == to
                    && (walk.status == Polarity::Negative || e.polarity == Polarity::Positive)
            })
        };
        if !ok {
            return Err(format!("illegal hop {i} ({from} {edge} {to}) in {t:?}"));
        }
    }
    Ok(())
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use truewalks::embed::{sg_step_loss_grad, EmbeddingModel, SkipGramConfig, Vocab};

/// A model of random shape with every parameter drawn from [-1, 1), and a
/// legal context offset for it.
pub fn random_model(rng: &mut ChaCha8Rng) -> (EmbeddingModel, isize) {
    let n_tokens = rng.random_range(2..12);
    let corpus: Vec<Vec<String>> = vec![(0..n_tokens).map(|i| format!("t{i}")).collect()];
    let cfg = SkipGramConfig {
        dim: rng.random_range(1..16),
        window: rng.random_range(1..6),
        order_aware: rng.random_bool(0.5),
        ..Default::default()
    };
    let mut model = EmbeddingModel::new(Vocab::build(&corpus, 1), &cfg, rng);
    for m in std::iter::once(&mut model.input).chain(model.outputs.iter_mut()) {
        for x in &mut m.data {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    let c = cfg.window as i64;
    let mut offset = 0;
    while offset == 0 {
        offset = rng.random_range(-c..=c);
    }
    (model, offset as isize)
}

/// ||a - b|| / (||a|| + ||b||), zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm =
        a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Worst relative error between analytic gradients and central differences
/// with step `h` over `instances` random models. Every row of the selected
/// output matrix is checked, touched or not.
pub fn gradient_check(instances: usize, h: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (mut model, offset) = random_model(&mut rng);
        let n = model.vocab.len();
        let center = rng.random_range(0..n);
        let context = rng.random_range(0..n);
        let noise: Vec<usize> = (0..rng.random_range(0..6))
            .map(|_| rng.random_range(0..n))
            .collect();
        let (_, grads) = sg_step_loss_grad(&model, center, context, offset, &noise);
        let slot = grads.slot;
        let loss = |m: &EmbeddingModel| sg_step_loss_grad(m, center, context, offset, &noise).0;

        let mut analytic = grads.d_center.clone();
        let mut numeric = Vec::new();
        for i in 0..model.dim {
            let x = model.input.row(center)[i];
            model.input.row_mut(center)[i] = x + h;
            let up = loss(&model);
            model.input.row_mut(center)[i] = x - h;
            let down = loss(&model);
            model.input.row_mut(center)[i] = x;
            numeric.push((up - down) / (2.0 * h));
        }
        for row in 0..n {
            let d = grads
                .d_outputs
                .iter()
                .find(|(r, _)| *r == row)
                .map(|(_, d)| d.clone())
                .unwrap_or_else(|| vec![0.0; model.dim]);
            analytic.extend(d);
            for i in 0..model.dim {
                let x = model.outputs[slot].row(row)[i];
                model.outputs[slot].row_mut(row)[i] = x + h;
                let up = loss(&model);
                model.outputs[slot].row_mut(row)[i] = x - h;
                let down = loss(&model);
                model.outputs[slot].row_mut(row)[i] = x;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Sentences of random filler tokens in which `b` always directly follows `a`.
pub fn always_follows_corpus(seed: u64, sentences: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers = ["p", "q", "r", "s"];
    (0..sentences)
        .map(|_| {
            let mut s: Vec<String> = (0..3)
                .map(|_| fillers[rng.random_range(0..4)].to_string())
                .collect();
            let at = rng.random_range(0..=s.len());
            s.insert(at, "b".into());
            s.insert(at, "a".into());
            s
        })
        .collect()
}

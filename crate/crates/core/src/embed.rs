//! Skip-gram with negative sampling, plain and order-aware.
//!
//! The plain model keeps one output matrix shared by every context offset.
//! The order-aware (structured) model keeps one output matrix per signed
//! offset `-c..=-1, 1..=c`, so predicting the token two steps to the right
//! uses different parameters from predicting the token one step to the left.
//!
//! Entity vectors are the rows of the input matrix.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::par::{self, Exec};
use crate::walk::{Walk, WalkCorpus};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid skip-gram config: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub noise_k: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub order_aware: bool,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 100,
            window: 5,
            epochs: 5,
            noise_k: 5,
            learning_rate: 0.025,
            min_count: 1,
            order_aware: false,
            seed: 42,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(EmbedError::Config("window must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EmbedError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn output_matrices(&self) -> usize {
        if self.order_aware {
            2 * self.window
        } else {
            1
        }
    }
}

/// Token vocabulary, indexed by descending frequency with lexicographic ties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<u64>,
    pub min_count: u64,
}

impl Vocab {
    pub fn build<S: AsRef<[String]>>(sentences: &[S], min_count: u64) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for s in sentences {
            for t in s.as_ref() {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut entries: Vec<(&str, u64)> =
            freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = entries.iter().map(|(t, _)| t.to_string()).collect();
        let counts = entries.iter().map(|&(_, c)| c).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            index,
            tokens,
            counts,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }
}

/// Noise distribution proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    dist: Option<WeightedIndex<f64>>,
    probs: Vec<f64>,
}

pub const NOISE_EXPONENT: f64 = 0.75;
const NOISE_RETRIES: usize = 100;

impl NoiseTable {
    pub fn new(vocab: &Vocab) -> Self {
        let weights: Vec<f64> = vocab
            .counts
            .iter()
            .map(|&c| (c as f64).powf(NOISE_EXPONENT))
            .collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.iter().map(|w| w / total).collect();
        NoiseTable {
            dist: WeightedIndex::new(&weights).ok(),
            probs,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `k` i.i.d. draws. A draw equal to `avoid` is redrawn up to 100 times
    /// and then kept.
    pub fn sample(&self, k: usize, avoid: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        self.sample_into(k, avoid, rng, &mut out);
        out
    }

    fn sample_into(
        &self,
        k: usize,
        avoid: Option<usize>,
        rng: &mut impl Rng,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        let Some(dist) = &self.dist else { return };
        for _ in 0..k {
            let mut draw = dist.sample(rng);
            let mut tries = 0;
            while Some(draw) == avoid && tries < NOISE_RETRIES {
                draw = dist.sample(rng);
                tries += 1;
            }
            out.push(draw);
        }
    }
}

pub fn sample_noise(vocab: &Vocab, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    NoiseTable::new(vocab).sample(k, None, rng)
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub vocab: Vocab,
    pub dim: usize,
    pub window: usize,
    pub order_aware: bool,
    /// Entity vectors.
    pub input: Matrix,
    /// One matrix, or `2 * window` matrices ordered `-c..=-1, 1..=c`.
    pub outputs: Vec<Matrix>,
}

/// Output matrix for a signed context offset.
pub fn offset_slot(order_aware: bool, window: usize, offset: isize) -> usize {
    debug_assert!(offset != 0 && offset.unsigned_abs() <= window);
    if !order_aware {
        0
    } else if offset < 0 {
        (offset + window as isize) as usize
    } else {
        offset as usize + window - 1
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddingModel {
    pub fn new(vocab: Vocab, cfg: &SkipGramConfig, rng: &mut impl Rng) -> Self {
        let n = vocab.len();
        let mut input = Matrix::zeros(n, cfg.dim);
        let half = 0.5 / cfg.dim as f64;
        for x in &mut input.data {
            *x = rng.random_range(-half..half);
        }
        let outputs = (0..cfg.output_matrices())
            .map(|_| Matrix::zeros(n, cfg.dim))
            .collect();
        EmbeddingModel {
            vocab,
            dim: cfg.dim,
            window: cfg.window,
            order_aware: cfg.order_aware,
            input,
            outputs,
        }
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.get(token).map(|i| self.input.row(i))
    }

    pub fn slot(&self, offset: isize) -> usize {
        offset_slot(self.order_aware, self.window, offset)
    }

    /// Model probability that `context` appears at `offset` from `center`.
    pub fn score(&self, center: &str, context: &str, offset: isize) -> Option<f64> {
        let c = self.vocab.get(center)?;
        let x = self.vocab.get(context)?;
        let out = &self.outputs[self.slot(offset)];
        Some(sigmoid(dot(self.input.row(c), out.row(x))))
    }

    pub fn is_finite(&self) -> bool {
        self.input
            .data
            .iter()
            .chain(self.outputs.iter().flat_map(|m| &m.data))
            .all(|x| x.is_finite())
    }

    /// Word2vec-style text dump of the input matrix.
    pub fn to_text(&self) -> String {
        let rows = (0..self.vocab.len()).map(|i| (self.vocab.token(i), self.input.row(i)));
        write_vectors(self.dim, rows)
    }
}

/// Exact partials of the negative-sampling loss for one (center, context)
/// pair, with repeated rows accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub center: usize,
    pub d_center: Vec<f64>,
    pub slot: usize,
    /// `(row, d_row)` in the selected output matrix, rows ascending.
    pub d_outputs: Vec<(usize, Vec<f64>)>,
}

/// Loss `-ln σ(u_ctx·v_c) - Σ ln σ(-u_n·v_c)` and its gradients.
pub fn sg_step_loss_grad(
    model: &EmbeddingModel,
    center: usize,
    context: usize,
    offset: isize,
    noise: &[usize],
) -> (f64, StepGrads) {
    let slot = model.slot(offset);
    let v = model.input.row(center);
    let out = &model.outputs[slot];
    let mut loss = 0.0;
    let mut d_center = vec![0.0; model.dim];
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let targets = std::iter::once((context, 1.0)).chain(noise.iter().map(|&n| (n, 0.0)));
    for (row, label) in targets {
        let u = out.row(row);
        let f = dot(u, v);
        loss += if label > 0.0 {
            neg_log_sigmoid(f)
        } else {
            neg_log_sigmoid(-f)
        };
        // dL/df = σ(f) - label
        let g = sigmoid(f) - label;
        for (d, ui) in d_center.iter_mut().zip(u) {
            *d += g * ui;
        }
        let du: Vec<f64> = v.iter().map(|vi| g * vi).collect();
        match rows.iter_mut().find(|(r, _)| *r == row) {
            Some((_, acc)) => acc.iter_mut().zip(&du).for_each(|(a, d)| *a += d),
            None => rows.push((row, du)),
        }
    }
    rows.sort_by_key(|(r, _)| *r);
    (
        loss,
        StepGrads {
            center,
            d_center,
            slot,
            d_outputs: rows,
        },
    )
}

/// Row storage the training kernel reads and updates.
trait Params {
    fn load_input(&self, row: usize, buf: &mut [f64]);
    fn load_output(&self, slot: usize, row: usize, buf: &mut [f64]);
    fn add_input(&mut self, row: usize, delta: &[f64]);
    fn add_output(&mut self, slot: usize, row: usize, scale: f64, v: &[f64]);
}

struct DenseParams<'a> {
    input: &'a mut Matrix,
    outputs: &'a mut [Matrix],
}

impl Params for DenseParams<'_> {
    fn load_input(&self, row: usize, buf: &mut [f64]) {
        buf.copy_from_slice(self.input.row(row));
    }

    fn load_output(&self, slot: usize, row: usize, buf: &mut [f64]) {
        buf.copy_from_slice(self.outputs[slot].row(row));
    }

    fn add_input(&mut self, row: usize, delta: &[f64]) {
        for (x, d) in self.input.row_mut(row).iter_mut().zip(delta) {
            *x += d;
        }
    }

    fn add_output(&mut self, slot: usize, row: usize, scale: f64, v: &[f64]) {
        for (x, d) in self.outputs[slot].row_mut(row).iter_mut().zip(v) {
            *x += scale * d;
        }
    }
}

/// Lock-free shared parameters for asynchronous SGD. Updates may be lost
/// under contention; individual scalars are never torn.
struct AtomicMatrix {
    cols: usize,
    data: Vec<AtomicU64>,
}

impl AtomicMatrix {
    fn from(m: &Matrix) -> Self {
        AtomicMatrix {
            cols: m.cols,
            data: m.data.iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
        }
    }

    fn into_matrix(self, rows: usize) -> Matrix {
        Matrix {
            rows,
            cols: self.cols,
            data: self
                .data
                .into_iter()
                .map(|a| f64::from_bits(a.into_inner()))
                .collect(),
        }
    }

    fn load(&self, row: usize, buf: &mut [f64]) {
        let base = row * self.cols;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = f64::from_bits(self.data[base + i].load(Ordering::Relaxed));
        }
    }

    fn add(&self, row: usize, scale: f64, v: &[f64]) {
        let base = row * self.cols;
        for (i, d) in v.iter().enumerate() {
            let cell = &self.data[base + i];
            let x = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((x + scale * d).to_bits(), Ordering::Relaxed);
        }
    }
}

struct SharedParams {
    input: AtomicMatrix,
    outputs: Vec<AtomicMatrix>,
}

struct SharedView<'a>(&'a SharedParams);

impl Params for SharedView<'_> {
    fn load_input(&self, row: usize, buf: &mut [f64]) {
        self.0.input.load(row, buf);
    }

    fn load_output(&self, slot: usize, row: usize, buf: &mut [f64]) {
        self.0.outputs[slot].load(row, buf);
    }

    fn add_input(&mut self, row: usize, delta: &[f64]) {
        self.0.input.add(row, 1.0, delta);
    }

    fn add_output(&mut self, slot: usize, row: usize, scale: f64, v: &[f64]) {
        self.0.outputs[slot].add(row, scale, v);
    }
}

struct Scratch {
    v: Vec<f64>,
    u: Vec<f64>,
    neu1e: Vec<f64>,
    noise: Vec<usize>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            v: vec![0.0; dim],
            u: vec![0.0; dim],
            neu1e: vec![0.0; dim],
            noise: Vec::new(),
        }
    }
}

/// One SGD step on a (center, context) pair; returns the pre-update loss.
fn sgd_step<P: Params>(
    params: &mut P,
    s: &mut Scratch,
    center: usize,
    context: usize,
    slot: usize,
    alpha: f64,
) -> f64 {
    params.load_input(center, &mut s.v);
    s.neu1e.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0;
    let noise = std::mem::take(&mut s.noise);
    for (row, label) in std::iter::once((context, 1.0)).chain(noise.iter().map(|&n| (n, 0.0))) {
        params.load_output(slot, row, &mut s.u);
        let f = dot(&s.u, &s.v);
        loss += if label > 0.0 {
            neg_log_sigmoid(f)
        } else {
            neg_log_sigmoid(-f)
        };
        let g = (label - sigmoid(f)) * alpha;
        for (e, ui) in s.neu1e.iter_mut().zip(&s.u) {
            *e += g * ui;
        }
        params.add_output(slot, row, g, &s.v);
    }
    s.noise = noise;
    params.add_input(center, &s.neu1e);
    loss
}

/// Per-epoch mean loss over (center, context) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

struct Schedule {
    alpha: f64,
    total: f64,
}

impl Schedule {
    fn rate(&self, processed: usize) -> f64 {
        let a = self.alpha * (1.0 - processed as f64 / (self.total + 1.0));
        a.max(self.alpha * 1e-4)
    }
}

#[allow(clippy::too_many_arguments)]
fn train_sentences<P: Params>(
    params: &mut P,
    sentences: &[Vec<usize>],
    cfg: &SkipGramConfig,
    noise: &NoiseTable,
    schedule: &Schedule,
    processed: &AtomicUsize,
    rng: &mut ChaCha8Rng,
    s: &mut Scratch,
) -> (f64, usize) {
    let c = cfg.window as isize;
    let mut loss = 0.0;
    let mut pairs = 0;
    for sent in sentences {
        let len = sent.len() as isize;
        for l in 0..len {
            let done = processed.fetch_add(1, Ordering::Relaxed);
            let alpha = schedule.rate(done);
            let center = sent[l as usize];
            for j in (-c..=c).filter(|&j| j != 0) {
                let p = l + j;
                if p < 0 || p >= len {
                    continue;
                }
                let context = sent[p as usize];
                let slot = offset_slot(cfg.order_aware, cfg.window, j);
                let mut buf = std::mem::take(&mut s.noise);
                noise.sample_into(cfg.noise_k, Some(context), rng, &mut buf);
                s.noise = buf;
                loss += sgd_step(params, s, center, context, slot, alpha);
                pairs += 1;
            }
        }
    }
    (loss, pairs)
}

/// Trains one skip-gram model. `workers > 1` enables asynchronous parallel
/// SGD, which gives up bitwise reproducibility.
pub fn train<S: AsRef<[String]>>(
    sentences: &[S],
    cfg: &SkipGramConfig,
    rng: &mut ChaCha8Rng,
    workers: usize,
) -> Result<(EmbeddingModel, TrainStats), EmbedError> {
    cfg.validate()?;
    let vocab = Vocab::build(sentences, cfg.min_count);
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.as_ref().iter().filter_map(|t| vocab.get(t)).collect())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let noise = NoiseTable::new(&vocab);
    let mut model = EmbeddingModel::new(vocab, cfg, rng);
    let total_tokens: usize = encoded.iter().map(Vec::len).sum();
    let schedule = Schedule {
        alpha: cfg.learning_rate,
        total: (cfg.epochs * total_tokens) as f64,
    };
    let processed = AtomicUsize::new(0);
    let mut stats = TrainStats::default();
    let exec = Exec::from_workers(workers);

    if !exec.is_parallel() {
        let mut scratch = Scratch::new(cfg.dim);
        let EmbeddingModel { input, outputs, .. } = &mut model;
        let mut params = DenseParams { input, outputs };
        for _ in 0..cfg.epochs {
            let (loss, pairs) = train_sentences(
                &mut params,
                &encoded,
                cfg,
                &noise,
                &schedule,
                &processed,
                rng,
                &mut scratch,
            );
            stats.pairs_per_epoch = pairs;
            stats
                .epoch_losses
                .push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
        }
        return Ok((model, stats));
    }

    let shared = SharedParams {
        input: AtomicMatrix::from(&model.input),
        outputs: model.outputs.iter().map(AtomicMatrix::from).collect(),
    };
    let chunk = encoded.len().div_ceil(workers).max(1);
    let chunks: Vec<&[Vec<usize>]> = encoded.chunks(chunk).collect();
    let base_seed: u64 = rng.random();
    par::with_workers(workers, || {
        for epoch in 0..cfg.epochs {
            let results = par::map_range(exec, chunks.len(), |w| {
                let mut wrng = par::stream_rng(
                    base_seed,
                    &[&(epoch as u64).to_le_bytes(), &(w as u64).to_le_bytes()],
                );
                let mut scratch = Scratch::new(cfg.dim);
                let mut view = SharedView(&shared);
                train_sentences(
                    &mut view,
                    chunks[w],
                    cfg,
                    &noise,
                    &schedule,
                    &processed,
                    &mut wrng,
                    &mut scratch,
                )
            });
            let (loss, pairs) = results
                .into_iter()
                .fold((0.0, 0), |(l, p), (l2, p2)| (l + l2, p + p2));
            stats.pairs_per_epoch = pairs;
            stats
                .epoch_losses
                .push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
        }
    });
    let rows = model.vocab.len();
    model.input = shared.input.into_matrix(rows);
    model.outputs = shared
        .outputs
        .into_iter()
        .map(|m| m.into_matrix(rows))
        .collect();
    Ok((model, stats))
}

impl AsRef<[String]> for Walk {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualModel {
    pub positive: EmbeddingModel,
    pub negative: EmbeddingModel,
}

/// Independent models over the positive and the negative walks.
pub fn train_dual(
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    workers: usize,
) -> Result<(DualModel, [TrainStats; 2]), EmbedError> {
    let mut pos_rng = par::stream_rng(cfg.seed, &[b"skipgram", b"pos"]);
    let mut neg_rng = par::stream_rng(cfg.seed, &[b"skipgram", b"neg"]);
    let (positive, ps) = train(&corpus.positive, cfg, &mut pos_rng, workers)?;
    let (negative, ns) = train(&corpus.negative, cfg, &mut neg_rng, workers)?;
    Ok((DualModel { positive, negative }, [ps, ns]))
}

/// Single model over the positive walk set, as used by the baselines.
pub fn train_single(
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    workers: usize,
) -> Result<(EmbeddingModel, TrainStats), EmbedError> {
    let mut rng = par::stream_rng(cfg.seed, &[b"skipgram", b"pos"]);
    train(&corpus.positive, cfg, &mut rng, workers)
}

/// Writes `<count> <dim>` followed by one `<token> <x1> ... <xdim>` line
/// per row. Floats use the shortest representation that round-trips.
pub fn write_vectors<'a>(
    dim: usize,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", rows.len(), dim).unwrap();
    for (tok, v) in rows {
        out.push_str(tok);
        for x in v {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub type VectorRows = Vec<(String, Vec<f64>)>;

/// Parses the embedding text format into `(dim, rows)`.
pub fn read_vectors(text: &str) -> Result<(usize, VectorRows), EmbedError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(EmbedError::Format {
        line: 1,
        message: "missing header".into(),
    })?;
    let bad = |line: usize, message: &str| EmbedError::Format {
        line,
        message: message.into(),
    };
    let mut h = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(count)), Some(Ok(dim)), None) = (h.next(), h.next(), h.next()) else {
        return Err(bad(1, "header must be `<count> <dim>`"));
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let mut parts = line.split(' ');
        let token = parts
            .next()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| bad(i + 2, "empty token"))?;
        let v: Vec<f64> = parts
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i + 2, "invalid float"))?;
        if v.len() != dim {
            return Err(bad(i + 2, "wrong vector length"));
        }
        rows.push((token.to_string(), v));
    }
    if rows.len() != count {
        return Err(bad(1, "row count does not match header"));
    }
    Ok((dim, rows))
}

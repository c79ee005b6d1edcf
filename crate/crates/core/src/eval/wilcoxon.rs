//! Two-sided Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped. With at most [`EXACT_MAX_N`] non-zero
//! differences the null distribution of the signed-rank statistic is
//! enumerated over all sign assignments (average ranks for ties); above that
//! a normal approximation with tie and continuity correction is used.

use statrs::function::erf::erfc;
use thiserror::Error;

pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WilcoxonError {
    #[error("paired samples differ in length ({0} vs {1})")]
    Length(usize, usize),
}

/// Non-zero differences with their average ranks by absolute value.
#[derive(Debug, Clone)]
pub struct SignedRanks {
    pub ranks: Vec<f64>,
    pub positive: Vec<bool>,
    /// Sizes of tie groups among the absolute differences.
    pub ties: Vec<usize>,
}

impl SignedRanks {
    pub fn new(a: &[f64], b: &[f64]) -> Result<Self, WilcoxonError> {
        if a.len() != b.len() {
            return Err(WilcoxonError::Length(a.len(), b.len()));
        }
        let mut d: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        let n = d.len();
        let mut ranks = vec![0.0; n];
        let mut ties = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && d[j + 1].abs() == d[i].abs() {
                j += 1;
            }
            let avg = (i + j + 2) as f64 / 2.0;
            ranks[i..=j].iter_mut().for_each(|r| *r = avg);
            ties.push(j - i + 1);
            i = j + 1;
        }
        Ok(SignedRanks {
            ranks,
            positive: d.iter().map(|&x| x > 0.0).collect(),
            ties,
        })
    }

    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    /// Sum of ranks of the positive differences.
    pub fn w_plus(&self) -> f64 {
        self.ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, &p)| p)
            .map(|(r, _)| r)
            .sum()
    }

    fn mean(&self) -> f64 {
        let n = self.n() as f64;
        n * (n + 1.0) / 4.0
    }

    /// Exact two-sided p-value by enumerating all `2^n` sign assignments.
    pub fn exact_p(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 1.0;
        }
        assert!(n <= 20, "exact enumeration is limited to n <= 20");
        let mu = self.mean();
        let observed = (self.w_plus() - mu).abs();
        let mut extreme = 0u64;
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| self.ranks[i])
                .sum();
            if (w - mu).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        (extreme as f64 / (1u64 << n) as f64).min(1.0)
    }

    /// Normal approximation with tie and continuity correction.
    pub fn normal_p(&self) -> f64 {
        let n = self.n() as f64;
        if self.n() == 0 {
            return 1.0;
        }
        let tie_term: f64 = self
            .ties
            .iter()
            .map(|&t| (t * t * t - t) as f64)
            .sum::<f64>()
            / 48.0;
        let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            return 1.0;
        }
        let z = ((self.w_plus() - self.mean()).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    }
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64, WilcoxonError> {
    let sr = SignedRanks::new(a, b)?;
    Ok(if sr.n() == 0 {
        1.0
    } else if sr.n() <= EXACT_MAX_N {
        sr.exact_p()
    } else {
        sr.normal_p()
    })
}

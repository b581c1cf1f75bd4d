//! Linear SVM trained on the L2-regularized hinge loss.
//!
//! The objective, with the bias folded into the regularizer, is
//!
//! ```text
//! J(w, b) = 1/2 (|w|^2 + b^2)
//!         + C * ( 1/(2 n+) sum_pos hinge + 1/(2 n-) sum_neg hinge )
//! ```
//!
//! Each class contributes its mean hinge loss, so duplicating every sample
//! leaves `J` unchanged, and a lone positive is not drowned out by hundreds
//! of negatives. It is minimized by dual coordinate descent, visiting samples
//! in a seeded random order each epoch.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn zeros(dim: usize) -> Self {
        LinearSvm {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub max_epochs: usize,
    /// Stop once every projected dual gradient is below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_epochs: 1000,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Bounded positive and negative sample stores; the oldest entry is evicted
/// when a store is full.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCache {
    positives: VecDeque<Vec<f64>>,
    negatives: VecDeque<Vec<f64>>,
    pos_capacity: usize,
    neg_capacity: usize,
}

impl SampleCache {
    pub fn new(pos_capacity: usize, neg_capacity: usize) -> Self {
        SampleCache {
            positives: VecDeque::with_capacity(pos_capacity),
            negatives: VecDeque::with_capacity(neg_capacity),
            pos_capacity: pos_capacity.max(1),
            neg_capacity: neg_capacity.max(1),
        }
    }

    pub fn push_positive(&mut self, f: Vec<f64>) {
        if self.positives.len() == self.pos_capacity {
            self.positives.pop_front();
        }
        self.positives.push_back(f);
    }

    pub fn push_negative(&mut self, f: Vec<f64>) {
        if self.negatives.len() == self.neg_capacity {
            self.negatives.pop_front();
        }
        self.negatives.push_back(f);
    }

    pub fn positives(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.positives.iter()
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.negatives.iter()
    }

    pub fn num_positives(&self) -> usize {
        self.positives.len()
    }

    pub fn num_negatives(&self) -> usize {
        self.negatives.len()
    }

    pub fn capacities(&self) -> (usize, usize) {
        (self.pos_capacity, self.neg_capacity)
    }

    fn labeled(&self) -> Vec<(&[f64], f64)> {
        self.positives
            .iter()
            .map(|v| (v.as_slice(), 1.0))
            .chain(self.negatives.iter().map(|v| (v.as_slice(), -1.0)))
            .collect()
    }
}

/// Value of the training objective for `svm` on the cache contents.
pub fn objective(svm: &LinearSvm, cache: &SampleCache, c: f64) -> f64 {
    let reg = 0.5 * (dot(&svm.weights, &svm.weights) + svm.bias * svm.bias);
    let mean_hinge = |it: &mut dyn Iterator<Item = &Vec<f64>>, y: f64| {
        let mut sum = 0.0;
        let mut n = 0usize;
        for x in it {
            sum += (1.0 - y * svm.decision(x)).max(0.0);
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let pos = mean_hinge(&mut cache.positives(), 1.0);
    let neg = mean_hinge(&mut cache.negatives(), -1.0);
    reg + c * 0.5 * (pos + neg)
}

/// Trains on the cache. Needs at least one sample of each class.
pub fn train(cache: &SampleCache, params: &SvmParams) -> Result<LinearSvm> {
    let (np, nn) = (cache.num_positives(), cache.num_negatives());
    if np == 0 || nn == 0 {
        return Err(Error::SingleClass {
            positives: np,
            negatives: nn,
        });
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidParameter(format!("SVM C must be positive, got {}", params.c)));
    }
    let samples = cache.labeled();
    let dim = samples[0].0.len();
    if samples.iter().any(|(x, _)| x.len() != dim) {
        return Err(Error::InvalidParameter("training samples differ in length".into()));
    }

    let upper: Vec<f64> = samples
        .iter()
        .map(|&(_, y)| params.c / (2.0 * if y > 0.0 { np } else { nn } as f64))
        .collect();
    // Diagonal of the dual Hessian; the +1 accounts for the bias feature.
    let q_diag: Vec<f64> = samples.iter().map(|(x, _)| dot(x, x) + 1.0).collect();

    let mut svm = LinearSvm::zeros(dim);
    let mut alpha = vec![0.0; samples.len()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let (x, y) = samples[i];
            let g = y * svm.decision(x) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper[i] {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y;
                if step != 0.0 {
                    for (w, xi) in svm.weights.iter_mut().zip(x) {
                        *w += step * xi;
                    }
                    svm.bias += step;
                }
            }
        }
        if max_violation < params.tolerance {
            break;
        }
    }

    // The trivial model bounds what training may return.
    let zero = LinearSvm::zeros(dim);
    if objective(&svm, cache, params.c) > objective(&zero, cache, params.c) {
        return Ok(zero);
    }
    Ok(svm)
}

//! Class-balanced batches and in-batch triplet selection.
//!
//! Selectors work on a precomputed squared-distance matrix `D` of the batch.
//! For an anchor `a`, positive `p` and negative `n` the triplet loss is
//! `D[a][p] − D[a][n] + α`. Anchor-positive pairs are visited in ascending
//! `(a, p)` order; each selector emits at most one triplet per pair.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Triplet, TripletSet};

/// One epoch of batches, each a list of dataset row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
}

/// Builds one epoch of P×K batches.
///
/// Each class keeps a shuffled queue of its rows. The epoch runs
/// `ceil(largest_class / K)` rounds; every round shuffles the classes, chunks
/// them into groups of `P`, and pulls `K` rows per class from its queue. A
/// class with fewer than `K` rows left is topped up by drawing its own rows
/// with replacement. When `P` does not divide the class count, the last group
/// of a round is completed with other classes whose rows are drawn with
/// replacement, so every batch has exactly `P` labels.
pub fn balanced_batches(
    labels: &[u32],
    classes_per_batch: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<BatchPlan> {
    if classes_per_batch == 0 || samples_per_class == 0 {
        return Err(Error::InvalidArgument("P and K must both be at least 1".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    if classes_per_batch > num_classes {
        return Err(Error::InvalidArgument(format!(
            "P = {classes_per_batch} exceeds the {num_classes} classes present"
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("class {c} has no samples")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<Vec<usize>> = members.clone();
    for q in &mut queues {
        q.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; num_classes];
    let largest = members.iter().map(Vec::len).max().unwrap_or(0);
    let rounds = largest.div_ceil(samples_per_class);

    let mut batches = Vec::new();
    let mut order: Vec<usize> = (0..num_classes).collect();
    for _ in 0..rounds {
        order.shuffle(&mut rng);
        for group in order.chunks(classes_per_batch) {
            let mut batch = Vec::with_capacity(classes_per_batch * samples_per_class);
            for &c in group {
                let take = (queues[c].len() - cursor[c]).min(samples_per_class);
                batch.extend_from_slice(&queues[c][cursor[c]..cursor[c] + take]);
                cursor[c] += take;
                for _ in take..samples_per_class {
                    batch.push(members[c][rng.random_range(0..members[c].len())]);
                }
            }
            if group.len() < classes_per_batch {
                let mut fillers: Vec<usize> = (0..num_classes).filter(|c| !group.contains(c)).collect();
                fillers.shuffle(&mut rng);
                for &c in fillers.iter().take(classes_per_batch - group.len()) {
                    for _ in 0..samples_per_class {
                        batch.push(members[c][rng.random_range(0..members[c].len())]);
                    }
                }
            }
            batches.push(batch);
        }
    }
    Ok(BatchPlan {
        batches,
        classes_per_batch,
        samples_per_class,
    })
}

/// Every valid `(a, p, n)` in lexicographic order. Used as a test oracle.
pub fn enumerate_valid_triplets(labels: &[u32]) -> TripletSet {
    let b = labels.len();
    let mut out = Vec::new();
    for a in 0..b {
        for p in 0..b {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..b {
                if labels[n] != labels[a] {
                    out.push(Triplet::new(a, p, n));
                }
            }
        }
    }
    TripletSet { triplets: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    /// Negatives with loss strictly inside `(0, α)`.
    #[default]
    SemiHard,
    /// The highest-loss negative per anchor-positive pair.
    Hardest,
    /// Any negative with positive loss.
    RandomNegative,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::SemiHard => "semi_hard",
            SelectorKind::Hardest => "hardest",
            SelectorKind::RandomNegative => "random_negative",
        }
    }
}

fn check_inputs(d: ArrayView2<'_, f64>, labels: &[u32]) -> Result<()> {
    if d.nrows() != labels.len() || d.ncols() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "distance matrix {:?} for {} labels",
            d.dim(),
            labels.len()
        )));
    }
    Ok(())
}

/// Visits ordered anchor-positive pairs and the per-negative losses.
fn for_each_pair(d: ArrayView2<'_, f64>, labels: &[u32], alpha: f64, mut f: impl FnMut(usize, usize, &[(usize, f64)])) {
    let b = labels.len();
    let mut negs: Vec<(usize, f64)> = Vec::with_capacity(b);
    for a in 0..b {
        for p in 0..b {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            negs.clear();
            let d_ap = d[[a, p]];
            for n in 0..b {
                if labels[n] != labels[a] {
                    negs.push((n, d_ap - d[[a, n]] + alpha));
                }
            }
            f(a, p, &negs);
        }
    }
}

pub fn select_semi_hard(d: ArrayView2<'_, f64>, labels: &[u32], alpha: f64, rng: &mut impl Rng) -> Result<TripletSet> {
    check_inputs(d, labels)?;
    let mut out = Vec::new();
    let mut window = Vec::new();
    let mut positive = Vec::new();
    for_each_pair(d, labels, alpha, |a, p, negs| {
        window.clear();
        positive.clear();
        for &(n, loss) in negs {
            if loss > 0.0 {
                positive.push(n);
                if loss < alpha {
                    window.push(n);
                }
            }
        }
        let pool = if window.is_empty() { &positive } else { &window };
        if !pool.is_empty() {
            let n = pool[rng.random_range(0..pool.len())];
            out.push(Triplet::new(a, p, n));
        }
    });
    Ok(TripletSet { triplets: out })
}

pub fn select_hardest(d: ArrayView2<'_, f64>, labels: &[u32], alpha: f64) -> Result<TripletSet> {
    check_inputs(d, labels)?;
    let mut out = Vec::new();
    for_each_pair(d, labels, alpha, |a, p, negs| {
        let mut best: Option<(usize, f64)> = None;
        for &(n, loss) in negs {
            if best.is_none_or(|(_, l)| loss > l) {
                best = Some((n, loss));
            }
        }
        if let Some((n, loss)) = best {
            if loss > 0.0 {
                out.push(Triplet::new(a, p, n));
            }
        }
    });
    Ok(TripletSet { triplets: out })
}

pub fn select_random_negative(
    d: ArrayView2<'_, f64>,
    labels: &[u32],
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<TripletSet> {
    check_inputs(d, labels)?;
    let mut out = Vec::new();
    let mut pool = Vec::new();
    for_each_pair(d, labels, alpha, |a, p, negs| {
        pool.clear();
        pool.extend(negs.iter().filter(|(_, l)| *l > 0.0).map(|&(n, _)| n));
        if !pool.is_empty() {
            out.push(Triplet::new(a, p, pool[rng.random_range(0..pool.len())]));
        }
    });
    Ok(TripletSet { triplets: out })
}

pub fn select(
    kind: SelectorKind,
    d: ArrayView2<'_, f64>,
    labels: &[u32],
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<TripletSet> {
    match kind {
        SelectorKind::SemiHard => select_semi_hard(d, labels, alpha, rng),
        SelectorKind::Hardest => select_hardest(d, labels, alpha),
        SelectorKind::RandomNegative => select_random_negative(d, labels, alpha, rng),
    }
}

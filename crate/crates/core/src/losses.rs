//! Triplet objectives on an embedding batch, with analytic `dL/dU`.
//!
//! Every loss here takes the batch output `U` (`B × K`) and returns the loss
//! value together with its gradient with respect to `U`, ready to hand to
//! [`crate::model::backward`]. Accumulation over triplets runs in ascending
//! triplet order so results are bit-reproducible.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sign;

/// Row indices into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn new(anchor: usize, positive: usize, negative: usize) -> Self {
        Self {
            anchor,
            positive,
            negative,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.triplets.iter()
    }

    /// Checks the label constraints and index bounds for a batch.
    pub fn validate(&self, labels: &[u32]) -> Result<()> {
        for t in &self.triplets {
            let b = labels.len();
            if t.anchor >= b || t.positive >= b || t.negative >= b {
                return Err(Error::InvalidArgument(format!("{t:?} out of range for batch of {b}")));
            }
            if t.anchor == t.positive
                || t.anchor == t.negative
                || labels[t.anchor] != labels[t.positive]
                || labels[t.anchor] == labels[t.negative]
            {
                return Err(Error::InvalidArgument(format!("{t:?} violates triplet label rules")));
            }
        }
        Ok(())
    }
}

impl FromIterator<Triplet> for TripletSet {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        Self {
            triplets: iter.into_iter().collect(),
        }
    }
}

/// Margin and quantization weight of the hash objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashLossParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl HashLossParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_finite() && self.alpha >= 0.0 && self.lambda.is_finite() && self.lambda >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "alpha and lambda must be finite and >= 0, got {self:?}"
            )))
        }
    }
}

/// How per-item terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Divide by the number of terms (triplets, or rows for the penalty).
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn scale(self, count: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / count as f64,
            Reduction::Sum => 1.0,
        }
    }
}

fn check_finite(u: ArrayView2<'_, f64>) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("embedding batch".into()))
    }
}

fn check_triplets(u: ArrayView2<'_, f64>, triplets: &TripletSet) -> Result<()> {
    let b = u.nrows();
    if let Some(t) = triplets
        .iter()
        .find(|t| t.anchor >= b || t.positive >= b || t.negative >= b)
    {
        return Err(Error::InvalidArgument(format!("{t:?} out of range for batch of {b}")));
    }
    Ok(())
}

#[inline]
fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `D[i][j] = ‖uᵢ − uⱼ‖²`, computed from explicit differences so every entry
/// is non-negative and the matrix is exactly symmetric with a zero diagonal.
pub fn pairwise_sq_dists(u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_finite(u)?;
    let b = u.nrows();
    let mut d = Array2::zeros((b, b));
    for i in 0..b {
        for j in i + 1..b {
            let v = sq_dist(u.row(i), u.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Hinge triplet loss `max(0, ‖a−p‖² − ‖a−n‖² + α)`.
///
/// Triplets whose hinge argument is exactly zero count as active.
pub fn triplet_margin_loss(
    u: ArrayView2<'_, f64>,
    triplets: &TripletSet,
    alpha: f64,
    reduction: Reduction,
) -> Result<(f64, Array2<f64>)> {
    check_finite(u)?;
    check_triplets(u, triplets)?;
    let mut grad = Array2::zeros(u.raw_dim());
    if triplets.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = reduction.scale(triplets.len());
    let mut loss = 0.0;
    for t in triplets.iter() {
        let (a, p, n) = (u.row(t.anchor), u.row(t.positive), u.row(t.negative));
        let arg = sq_dist(a, p) - sq_dist(a, n) + alpha;
        if arg < 0.0 {
            continue;
        }
        loss += arg;
        // d/da = 2(n − p), d/dp = 2(p − a), d/dn = 2(a − n)
        for k in 0..u.ncols() {
            grad[[t.anchor, k]] += scale * 2.0 * (n[k] - p[k]);
            grad[[t.positive, k]] += scale * 2.0 * (p[k] - a[k]);
            grad[[t.negative, k]] += scale * 2.0 * (a[k] - n[k]);
        }
    }
    Ok((loss * scale, grad))
}

/// Overflow-safe `log(1 + eˣ)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `½ aᵀb`.
#[inline]
pub fn theta(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    0.5 * a.dot(&b)
}

/// The per-triplet logit `Θ(q,p) − Θ(q,n) − α`.
pub fn hash_logit(u: ArrayView2<'_, f64>, t: &Triplet, alpha: f64) -> f64 {
    let q = u.row(t.anchor);
    theta(q, u.row(t.positive)) - theta(q, u.row(t.negative)) - alpha
}

/// Negative log-likelihood of the triplet ordering under a logistic model on
/// `s = Θ(q,p) − Θ(q,n) − α`: each triplet contributes `softplus(−s)`,
/// i.e. `−(s − log(1 + eˢ))`.
pub fn hash_likelihood_loss(
    u: ArrayView2<'_, f64>,
    triplets: &TripletSet,
    alpha: f64,
    reduction: Reduction,
) -> Result<(f64, Array2<f64>)> {
    check_finite(u)?;
    check_triplets(u, triplets)?;
    let mut grad = Array2::zeros(u.raw_dim());
    if triplets.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = reduction.scale(triplets.len());
    let mut loss = 0.0;
    for t in triplets.iter() {
        let s = hash_logit(u, t, alpha);
        loss += softplus(-s);
        // dℓ/ds = −σ(−s); ds/dq = ½(p − n), ds/dp = ½q, ds/dn = −½q
        let w = scale * 0.5 * sigmoid(-s);
        let (q, p, n) = (u.row(t.anchor), u.row(t.positive), u.row(t.negative));
        for k in 0..u.ncols() {
            grad[[t.anchor, k]] -= w * (p[k] - n[k]);
            grad[[t.positive, k]] -= w * q[k];
            grad[[t.negative, k]] += w * q[k];
        }
    }
    Ok((loss * scale, grad))
}

/// `λ Σₙ ‖bₙ − uₙ‖²` with `b = sgn(u)` held constant.
pub fn quantization_penalty(u: ArrayView2<'_, f64>, lambda: f64, reduction: Reduction) -> Result<(f64, Array2<f64>)> {
    check_finite(u)?;
    let b = u.nrows();
    if b == 0 {
        return Ok((0.0, Array2::zeros(u.raw_dim())));
    }
    let w = lambda * reduction.scale(b);
    let mut loss = 0.0;
    let grad = u.mapv(|x| {
        let diff = f64::from(sign(x)) - x;
        loss += diff * diff;
        -2.0 * w * diff
    });
    Ok((w * loss, grad))
}

/// Mean squared gap between outputs and their signs, per bit.
pub fn quantization_error_per_bit(u: ArrayView2<'_, f64>) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    let total: f64 = u
        .iter()
        .map(|&x| {
            let d = f64::from(sign(x)) - x;
            d * d
        })
        .sum();
    total / u.len() as f64
}

/// Largest relative error between the analytic gradient reported by `f` and
/// central differences with step `h`, over every coordinate of `x`.
///
/// The relative error of a coordinate is `|g − ĝ| / max(|g|, |ĝ|, 1e-8)`.
pub fn grad_check_flat<F>(f: F, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x);
    assert_eq!(analytic.len(), x.len(), "gradient length must match input");
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let (plus, _) = f(&probe);
        probe[i] = x[i] - h;
        let (minus, _) = f(&probe);
        probe[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// [`grad_check_flat`] for a loss of an embedding batch.
pub fn grad_check<F>(loss_fn: F, u: ArrayView2<'_, f64>, h: f64) -> f64
where
    F: Fn(ArrayView2<'_, f64>) -> (f64, Array2<f64>),
{
    let shape = u.raw_dim();
    let flat: Vec<f64> = u.iter().copied().collect();
    grad_check_flat(
        |x| {
            let m = ArrayView2::from_shape(shape, x).expect("shape preserved");
            let (l, g) = loss_fn(m);
            (l, g.iter().copied().collect())
        },
        &flat,
        h,
    )
}

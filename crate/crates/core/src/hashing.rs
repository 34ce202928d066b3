//! Sign binarization, bit packing, and exact Hamming search.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Elementwise sign with `sgn(0) = +1`.
pub fn binarize(u: ArrayView2<'_, f64>) -> Array2<i8> {
    u.mapv(sign)
}

#[inline]
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Row-major bit-packed sign codes.
///
/// `+1` is stored as a set bit. Bits past `nbits` in the last word of each
/// row are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    nbits: u32,
    words_per_row: usize,
    words: Vec<u64>,
}

impl PackedCodes {
    pub fn words_for(nbits: u32) -> usize {
        (nbits as usize).div_ceil(64)
    }

    fn tail_mask(nbits: u32) -> u64 {
        match nbits % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    /// Wraps an already packed word array, checking the tail-bit invariant.
    pub fn from_words(nbits: u32, words: Vec<u64>) -> Result<Self> {
        if nbits == 0 {
            return Err(Error::InvalidArgument("codes need nbits >= 1".into()));
        }
        let wpr = Self::words_for(nbits);
        if !words.len().is_multiple_of(wpr) {
            return Err(Error::ShapeMismatch(format!(
                "{} words is not a multiple of {wpr} words per row",
                words.len()
            )));
        }
        let mask = Self::tail_mask(nbits);
        for (row, chunk) in words.chunks_exact(wpr).enumerate() {
            if chunk[wpr - 1] & !mask != 0 {
                return Err(Error::Corrupt(format!("row {row} has bits set beyond nbits={nbits}")));
            }
        }
        Ok(Self {
            nbits,
            words_per_row: wpr,
            words,
        })
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.words_per_row
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Packs a matrix of `±1` entries.
    pub fn pack(signs: ArrayView2<'_, i8>) -> Result<Self> {
        let nbits =
            u32::try_from(signs.ncols()).map_err(|_| Error::InvalidArgument("too many bits per code".into()))?;
        if nbits == 0 {
            return Err(Error::InvalidArgument("codes need nbits >= 1".into()));
        }
        let wpr = Self::words_for(nbits);
        let mut words = vec![0u64; signs.nrows() * wpr];
        for (r, row) in signs.rows().into_iter().enumerate() {
            let out = &mut words[r * wpr..(r + 1) * wpr];
            for (j, &s) in row.iter().enumerate() {
                match s {
                    1 => out[j / 64] |= 1u64 << (j % 64),
                    -1 => {}
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "sign entry {other} at ({r}, {j}) is not ±1"
                        )))
                    }
                }
            }
        }
        Ok(Self {
            nbits,
            words_per_row: wpr,
            words,
        })
    }

    /// Binarizes and packs real-valued outputs in one go.
    pub fn from_real(u: ArrayView2<'_, f64>) -> Result<Self> {
        Self::pack(binarize(u).view())
    }

    pub fn unpack(&self) -> Array2<i8> {
        let k = self.nbits as usize;
        Array2::from_shape_fn((self.len(), k), |(r, j)| {
            if self.row(r)[j / 64] >> (j % 64) & 1 == 1 {
                1
            } else {
                -1
            }
        })
    }

    pub fn hamming(&self, i: usize, j: usize) -> u32 {
        hamming_words(self.row(i), self.row(j))
    }

    /// `½ bᵢᵀbⱼ`, which equals `K/2 − hamming(i, j)` for sign codes.
    pub fn theta(&self, i: usize, j: usize) -> f64 {
        0.5 * self.nbits as f64 - self.hamming(i, j) as f64
    }
}

#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub row: usize,
    pub distance: u32,
}

/// The `k` nearest rows of `db` to `query`, ordered by `(distance, row)`.
///
/// Exact linear scan. Distances are bounded by `nbits`, so the ranking is a
/// counting sort: one pass to histogram distances, one pass to place rows.
/// Row order within a distance bucket is ascending by construction.
pub fn scan(db: &PackedCodes, query: &[u64], k: usize) -> Vec<Hit> {
    let n = db.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let nbits = db.nbits as usize;
    let mut dist = Vec::with_capacity(n);
    let mut counts = vec![0usize; nbits + 2];
    for row in db.words.chunks_exact(db.words_per_row) {
        let d = hamming_words(row, query);
        counts[d as usize] += 1;
        dist.push(d);
    }

    // Smallest cutoff distance whose cumulative count reaches k.
    let mut cutoff = 0usize;
    let mut below = 0usize;
    while below + counts[cutoff] < k {
        below += counts[cutoff];
        cutoff += 1;
    }
    let mut quota_at_cutoff = k - below;

    // Bucket start offsets for distances < cutoff.
    let mut offsets = vec![0usize; cutoff + 1];
    for d in 1..=cutoff {
        offsets[d] = offsets[d - 1] + counts[d - 1];
    }

    let mut out = vec![Hit { row: 0, distance: 0 }; k];
    for (row, &d) in dist.iter().enumerate() {
        let d = d as usize;
        if d < cutoff {
            out[offsets[d]] = Hit {
                row,
                distance: d as u32,
            };
            offsets[d] += 1;
        } else if d == cutoff && quota_at_cutoff > 0 {
            out[offsets[cutoff]] = Hit {
                row,
                distance: d as u32,
            };
            offsets[cutoff] += 1;
            quota_at_cutoff -= 1;
        }
    }
    out
}

/// Immutable Hamming index over packed codes and their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingIndex {
    codes: PackedCodes,
    labels: Vec<u32>,
}

impl HammingIndex {
    pub fn build(codes: PackedCodes, labels: Vec<u32>) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} codes but {} labels",
                codes.len(),
                labels.len()
            )));
        }
        Ok(Self { codes, labels })
    }

    pub fn codes(&self) -> &PackedCodes {
        &self.codes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn nbits(&self) -> u32 {
        self.codes.nbits
    }

    /// Top-`k` search for row `row` of `queries`.
    pub fn search(&self, queries: &PackedCodes, row: usize, k: usize) -> Result<Vec<Hit>> {
        if queries.nbits != self.codes.nbits {
            return Err(Error::ShapeMismatch(format!(
                "query has {} bits, index has {}",
                queries.nbits, self.codes.nbits
            )));
        }
        if row >= queries.len() {
            return Err(Error::InvalidArgument(format!(
                "query row {row} out of range ({} rows)",
                queries.len()
            )));
        }
        self.search_words(queries.row(row), k)
    }

    /// Top-`k` search for a raw packed query.
    pub fn search_words(&self, query: &[u64], k: usize) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.len() != self.codes.words_per_row {
            return Err(Error::ShapeMismatch(format!(
                "query has {} words, index rows have {}",
                query.len(),
                self.codes.words_per_row
            )));
        }
        Ok(scan(&self.codes, query, k))
    }
}

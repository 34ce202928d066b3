//! Datasets, synthetic generation, splits, and on-disk formats.
//!
//! Three formats are supported:
//!
//! - `FEAT` (feat-bin): `"FEAT"`, u32 version, u64 n, u32 d, n·d f32 row-major
//!   features, n u32 labels. All little-endian; the header is 20 bytes.
//! - `BCOD`: `"BCOD"`, u32 version, u64 n, u32 nbits, n·ceil(nbits/64) u64 words,
//!   n u32 labels. Bit `j` of a row lives in word `j / 64`, bit `j % 64`.
//! - CSV: `label,f0,f1,...` per line, no header.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hashing::PackedCodes;

pub const FEAT_MAGIC: [u8; 4] = *b"FEAT";
pub const BCOD_MAGIC: [u8; 4] = *b"BCOD";
pub const FORMAT_VERSION: u32 = 1;
pub const FEAT_HEADER_LEN: usize = 20;
pub const BCOD_HEADER_LEN: usize = 20;

/// A labelled feature matrix.
///
/// Labels are dense class ids `0..num_classes`. A dataset with no rows has
/// zero classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f32>,
    labels: Vec<u32>,
    num_classes: u32,
}

impl Dataset {
    /// Builds a dataset, checking finiteness and label consistency.
    ///
    /// Every class in `0..=max(label)` must occur at least once.
    pub fn new(features: Array2<f32>, labels: Vec<u32>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            let d = features.ncols().max(1);
            return Err(Error::NonFinite(format!(
                "feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let num_classes = dense_class_count(&labels)?;
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
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

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    /// Features widened to 64-bit, the precision used for training.
    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels)
    }

    pub fn into_parts(self) -> (Array2<f32>, Vec<u32>) {
        (self.features, self.labels)
    }
}

fn dense_class_count(labels: &[u32]) -> Result<u32> {
    let Some(&max) = labels.iter().max() else {
        return Ok(0);
    };
    let classes = max as usize + 1;
    let mut seen = vec![false; classes];
    for &l in labels {
        seen[l as usize] = true;
    }
    let present = seen.iter().filter(|&&s| s).count() as u32;
    if present as usize != classes {
        return Err(Error::LabelOutOfRange {
            label: max,
            classes: present,
        });
    }
    Ok(max + 1)
}

/// Parameters of the isotropic Gaussian blob generator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: u32,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the class means.
    pub center_scale: f64,
    /// Standard deviation of the per-sample noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.classes < 2 {
            return bad("blob spec needs at least 2 classes");
        }
        if self.dim < 1 {
            return bad("blob spec needs dim >= 1");
        }
        if self.samples_per_class < 1 {
            return bad("blob spec needs samples_per_class >= 1");
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return bad("center_scale must be positive and finite");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive and finite");
        }
        Ok(())
    }
}

/// A generated dataset together with the class means it was drawn around.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub dataset: Dataset,
    /// `classes × dim`, row `c` is the mean of class `c`.
    pub centers: Array2<f64>,
}

/// Draws `classes` centers from N(0, s²I) and `samples_per_class` points
/// around each one with N(0, σ²I) noise. Rows are grouped by class.
pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset> {
    generate_blobs_with_centers(spec).map(|b| b.dataset)
}

pub fn generate_blobs_with_centers(spec: &BlobSpec) -> Result<Blobs> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center_dist = Normal::new(0.0, spec.center_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noise_dist = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let c = spec.classes as usize;
    let centers = Array2::from_shape_fn((c, spec.dim), |_| center_dist.sample(&mut rng));

    let n = c * spec.samples_per_class;
    let mut features = Array2::<f32>::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (row, mut out) in features.rows_mut().into_iter().enumerate() {
        let class = row / spec.samples_per_class;
        for (j, v) in out.iter_mut().enumerate() {
            *v = (centers[[class, j]] + noise_dist.sample(&mut rng)) as f32;
        }
        labels.push(class as u32);
    }
    Ok(Blobs {
        dataset: Dataset::new(features, labels)?,
        centers,
    })
}

/// Stratified split returning `(train_indices, test_indices)`, each ascending.
///
/// Per class, `round(test_fraction × count)` rows go to the test side.
pub fn split_indices(labels: &[u32], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let classes = dense_class_count(labels)? as usize;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} sample(s); split needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.labels(), test_fraction, seed)?;
    Ok((ds.select(&train)?, ds.select(&test)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    FeatBin,
}

/// What a file on disk contains, decided by its leading magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    FeatBin,
    Codes,
    Csv,
}

pub fn detect_kind(path: impl AsRef<Path>) -> Result<FileKind> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut got = 0;
    while got < 4 {
        match f.read(&mut head[got..]).map_err(|e| Error::file(path, e))? {
            0 => break,
            k => got += k,
        }
    }
    Ok(match (got, head) {
        (4, FEAT_MAGIC) => FileKind::FeatBin,
        (4, BCOD_MAGIC) => FileKind::Codes,
        _ => FileKind::Csv,
    })
}

pub fn read_features(path: impl AsRef<Path>, format: FeatureFormat) -> Result<Dataset> {
    let path = path.as_ref();
    match format {
        FeatureFormat::FeatBin => {
            let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
            decode_feat_bin(&bytes)
        }
        FeatureFormat::Csv => {
            let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
            parse_csv(BufReader::new(f))
        }
    }
}

/// Reads a feature file, choosing the format from its magic bytes.
pub fn read_features_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match detect_kind(path)? {
        FileKind::FeatBin => read_features(path, FeatureFormat::FeatBin),
        FileKind::Csv => read_features(path, FeatureFormat::Csv),
        FileKind::Codes => Err(Error::InvalidArgument(format!(
            "{} holds packed codes, not features",
            path.display()
        ))),
    }
}

pub fn write_features(ds: &Dataset, path: impl AsRef<Path>, format: FeatureFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        FeatureFormat::FeatBin => encode_feat_bin(ds),
        FeatureFormat::Csv => encode_csv(ds),
    };
    write_atomic(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn encode_feat_bin(ds: &Dataset) -> Vec<u8> {
    let n = ds.len();
    let d = ds.dim();
    let mut out = Vec::with_capacity(FEAT_HEADER_LEN + 4 * n * d + 4 * n);
    out.extend_from_slice(&FEAT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in ds.features.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in &ds.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_feat_bin(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r, FEAT_MAGIC)?;
    let n = usize::try_from(header.n).map_err(|_| Error::Truncated("row count too large".into()))?;
    let d = header.width as usize;
    let needed = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|words| words.checked_mul(4))
        .ok_or_else(|| Error::Truncated("declared size overflows".into()))?;
    r.expect_exact(needed)?;

    let features: Vec<f32> = (0..n * d).map(|_| f32::from_le_bytes(r.take_array())).collect();
    let labels: Vec<u32> = (0..n).map(|_| u32::from_le_bytes(r.take_array())).collect();
    let features = Array2::from_shape_vec((n, d), features).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Dataset::new(features, labels)
}

fn encode_csv(ds: &Dataset) -> Vec<u8> {
    use std::fmt::Write as _;
    let mut s = String::new();
    for (row, &label) in ds.features.rows().into_iter().zip(&ds.labels) {
        write!(s, "{label}").unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s.into_bytes()
}

pub fn parse_csv(reader: impl BufRead) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let label_cell = cells.next().unwrap_or_default().trim();
        let label: u32 = label_cell.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid label {label_cell:?}"),
        })?;
        let start = values.len();
        for cell in cells {
            let cell = cell.trim();
            let v: f32 = cell.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            values.push(v);
        }
        let width = values.len() - start;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {d} features, found {width}"),
                })
            }
            Some(_) => {}
        }
        labels.push(label);
    }
    let d = dim.unwrap_or(0);
    let features =
        Array2::from_shape_vec((labels.len(), d), values).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Dataset::new(features, labels)
}

pub fn write_codes(codes: &PackedCodes, labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_codes(codes, labels)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<(PackedCodes, Vec<u32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_codes(&bytes)
}

pub fn encode_codes(codes: &PackedCodes, labels: &[u32]) -> Result<Vec<u8>> {
    if codes.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} codes but {} labels",
            codes.len(),
            labels.len()
        )));
    }
    let mut out = Vec::with_capacity(BCOD_HEADER_LEN + 8 * codes.words().len() + 4 * labels.len());
    out.extend_from_slice(&BCOD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(codes.len() as u64).to_le_bytes());
    out.extend_from_slice(&codes.nbits().to_le_bytes());
    for w in codes.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_codes(bytes: &[u8]) -> Result<(PackedCodes, Vec<u32>)> {
    let mut r = ByteReader::new(bytes);
    let header = read_header(&mut r, BCOD_MAGIC)?;
    let nbits = header.width;
    if nbits == 0 {
        return Err(Error::Corrupt("nbits is zero".into()));
    }
    let n = usize::try_from(header.n).map_err(|_| Error::Truncated("row count too large".into()))?;
    let wpr = PackedCodes::words_for(nbits);
    let needed = n
        .checked_mul(wpr)
        .and_then(|w| w.checked_mul(8))
        .and_then(|b| b.checked_add(n.checked_mul(4)?))
        .ok_or_else(|| Error::Truncated("declared size overflows".into()))?;
    r.expect_exact(needed)?;

    let words: Vec<u64> = (0..n * wpr).map(|_| u64::from_le_bytes(r.take_array())).collect();
    let labels: Vec<u32> = (0..n).map(|_| u32::from_le_bytes(r.take_array())).collect();
    let codes = PackedCodes::from_words(nbits, words)?;
    dense_class_count(&labels)?;
    Ok((codes, labels))
}

struct Header {
    n: u64,
    width: u32,
}

fn read_header(r: &mut ByteReader<'_>, magic: [u8; 4]) -> Result<Header> {
    if r.remaining() < 20 {
        // Short files still get a magic check so the error names the real problem.
        if r.remaining() >= 4 && r.bytes[..4] != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found: r.bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated(format!(
            "header needs 20 bytes, file has {}",
            r.remaining()
        )));
    }
    let found: [u8; 4] = r.take_array();
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    let version = u32::from_le_bytes(r.take_array());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(r.take_array());
    let width = u32::from_le_bytes(r.take_array());
    Ok(Header { n, width })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn expect_exact(&self, needed: usize) -> Result<()> {
        let have = self.remaining();
        if have < needed {
            return Err(Error::Truncated(format!("payload needs {needed} bytes, found {have}")));
        }
        if have > needed {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after payload",
                have - needed
            )));
        }
        Ok(())
    }

    /// Caller must have checked the length.
    fn take_array<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> BlobSpec {
        BlobSpec {
            classes: 10,
            dim: 64,
            samples_per_class: 200,
            center_scale: 1.0,
            noise_sigma: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = generate_blobs(&spec()).unwrap();
        let b = generate_blobs(&spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2000);
        assert_eq!(a.dim(), 64);
        for c in 0..10 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 200);
        }
    }

    #[test]
    fn blob_class_means_near_centers() {
        let s = spec();
        let blobs = generate_blobs_with_centers(&s).unwrap();
        let tol = 4.0 * s.noise_sigma / (s.samples_per_class as f64).sqrt();
        for c in 0..s.classes as usize {
            let rows = blobs
                .dataset
                .features()
                .slice(ndarray::s![c * s.samples_per_class..(c + 1) * s.samples_per_class, ..]);
            let mean = rows.mapv(f64::from).mean_axis(Axis(0)).unwrap();
            for j in 0..s.dim {
                assert!((mean[j] - blobs.centers[[c, j]]).abs() < tol, "class {c} dim {j}");
            }
        }
    }

    #[test]
    fn blob_spec_rejects_single_class() {
        let s = BlobSpec { classes: 1, ..spec() };
        assert!(matches!(generate_blobs(&s), Err(Error::InvalidArgument(_))));
        let s = BlobSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        assert!(generate_blobs(&s).is_err());
    }

    #[test]
    fn csv_line_parses() {
        let ds = parse_csv("3,0.5,-1.25\n".as_bytes()).unwrap_err();
        // label 3 alone is a gap (classes 0..2 missing)
        assert!(matches!(ds, Error::LabelOutOfRange { label: 3, .. }));

        let ds = parse_csv("0,1,2\n1,0,0\n2,0,0\n3,0.5,-1.25\n".as_bytes()).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels()[3], 3);
        assert_eq!(ds.features().row(3).to_vec(), vec![0.5, -1.25]);
    }

    #[test]
    fn csv_rejects_bad_cells() {
        let err = parse_csv("0,1.0,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_csv("0,1.0\n0,1.0,2.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_csv("-1,1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn feat_bin_header_is_20_bytes() {
        let ds = Dataset::new(Array2::zeros((0, 7)), vec![]).unwrap();
        let bytes = encode_feat_bin(&ds);
        assert_eq!(bytes.len(), FEAT_HEADER_LEN);
        assert_eq!(&bytes[..4], b"FEAT");
        let back = decode_feat_bin(&bytes).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 7);
    }

    #[test]
    fn feat_bin_errors() {
        let ds = generate_blobs(&BlobSpec {
            samples_per_class: 3,
            ..spec()
        })
        .unwrap();
        let mut bytes = encode_feat_bin(&ds);
        assert_eq!(bytes.len(), 20 + 30 * 64 * 4 + 30 * 4);

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_feat_bin(truncated), Err(Error::Truncated(_))));

        bytes[0] = b'X';
        assert!(matches!(decode_feat_bin(&bytes), Err(Error::BadMagic { .. })));
        bytes[0] = b'F';
        bytes[4] = 2;
        assert!(matches!(decode_feat_bin(&bytes), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn feat_bin_writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_blobs(&BlobSpec {
            samples_per_class: 5,
            ..spec()
        })
        .unwrap();
        let a = dir.path().join("a.feat");
        let b = dir.path().join("b.feat");
        write_features(&ds, &a, FeatureFormat::FeatBin).unwrap();
        write_features(&ds, &b, FeatureFormat::FeatBin).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_features(&a, FeatureFormat::FeatBin).unwrap(), ds);
        assert_eq!(detect_kind(&a).unwrap(), FileKind::FeatBin);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_blobs(&BlobSpec {
            samples_per_class: 4,
            dim: 5,
            ..spec()
        })
        .unwrap();
        let p = dir.path().join("x.csv");
        write_features(&ds, &p, FeatureFormat::Csv).unwrap();
        assert_eq!(read_features_auto(&p).unwrap(), ds);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = generate_blobs(&BlobSpec {
            samples_per_class: 100,
            dim: 4,
            ..spec()
        })
        .unwrap();
        let (tr, te) = split_indices(ds.labels(), 0.2, 11).unwrap();
        let (tr2, te2) = split_indices(ds.labels(), 0.2, 11).unwrap();
        assert_eq!((&tr, &te), (&tr2, &te2));
        for c in 0..10 {
            assert_eq!(te.iter().filter(|&&i| ds.labels()[i] == c).count(), 20);
        }
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());

        let (train, test) = split(&ds, 0.2, 11).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
    }

    #[test]
    fn split_rejects_tiny_classes_and_bad_fraction() {
        let ds = Dataset::new(Array2::zeros((3, 1)), vec![0, 0, 1]).unwrap();
        assert!(split(&ds, 0.5, 0).is_err());
        let ds = Dataset::new(Array2::zeros((4, 1)), vec![0, 0, 1, 1]).unwrap();
        assert!(split(&ds, 0.0, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn codes_48_bits_use_one_word() {
        let codes = PackedCodes::from_words(48, vec![0x0000_FFFF_0000_FFFF, 1]).unwrap();
        let bytes = encode_codes(&codes, &[0, 1]).unwrap();
        assert_eq!(bytes.len(), 20 + 2 * 8 + 2 * 4);
        let (back, labels) = decode_codes(&bytes).unwrap();
        assert_eq!(back, codes);
        assert_eq!(labels, vec![0, 1]);

        let err = decode_codes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Truncated(_)));

        // high bit beyond nbits=48
        let mut bad = bytes.clone();
        bad[20 + 7] = 0x80;
        assert!(matches!(decode_codes(&bad), Err(Error::Corrupt(_))));

        let mut bad = bytes;
        bad[..4].copy_from_slice(b"FEAT");
        assert!(matches!(decode_codes(&bad), Err(Error::BadMagic { .. })));
    }
}

//! KNN accuracy and mean average precision over full rankings.
//!
//! Both real-valued embeddings (squared Euclidean distance) and packed codes
//! (Hamming distance) are supported. Rankings order by `(distance, row)`, so
//! every metric here is a deterministic function of its inputs. Queries are
//! scored in parallel and reduced in query order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{scan, PackedCodes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Hamming,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Hamming => "hamming",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "hamming" => Ok(Metric::Hamming),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

/// A set of points in one of the two supported spaces.
#[derive(Debug, Clone, Copy)]
pub enum Points<'a> {
    Real(ArrayView2<'a, f64>),
    Codes(&'a PackedCodes),
}

impl Points<'_> {
    pub fn len(&self) -> usize {
        match self {
            Points::Real(m) => m.nrows(),
            Points::Codes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn metric(&self) -> Metric {
        match self {
            Points::Real(_) => Metric::Euclidean,
            Points::Codes(_) => Metric::Hamming,
        }
    }

    fn width(&self) -> usize {
        match self {
            Points::Real(m) => m.ncols(),
            Points::Codes(c) => c.nbits() as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub distance: f64,
}

fn check_compatible(db: &Points<'_>, queries: &Points<'_>) -> Result<()> {
    if db.metric() != queries.metric() {
        return Err(Error::InvalidArgument(format!(
            "database is {} but queries are {}",
            db.metric().name(),
            queries.metric().name()
        )));
    }
    if db.width() != queries.width() {
        return Err(Error::ShapeMismatch(format!(
            "database width {} vs query width {}",
            db.width(),
            queries.width()
        )));
    }
    Ok(())
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest database rows to query `qi` (all rows when `k` is `None`).
pub fn neighbors(db: &Points<'_>, queries: &Points<'_>, qi: usize, k: Option<usize>) -> Result<Vec<Neighbor>> {
    check_compatible(db, queries)?;
    if qi >= queries.len() {
        return Err(Error::InvalidArgument(format!("query {qi} out of range")));
    }
    Ok(rank(db, queries, qi, k.unwrap_or(db.len())))
}

/// Assumes compatibility has been checked.
fn rank(db: &Points<'_>, queries: &Points<'_>, qi: usize, k: usize) -> Vec<Neighbor> {
    match (db, queries) {
        (Points::Real(d), Points::Real(q)) => {
            let q = q.row(qi);
            let mut all: Vec<Neighbor> = d
                .rows()
                .into_iter()
                .enumerate()
                .map(|(row, r)| Neighbor {
                    row,
                    distance: sq_dist(r, q),
                })
                .collect();
            let by_key = |a: &Neighbor, b: &Neighbor| a.distance.total_cmp(&b.distance).then(a.row.cmp(&b.row));
            let k = k.min(all.len());
            if k < all.len() && k > 0 {
                all.select_nth_unstable_by(k - 1, by_key);
                all.truncate(k);
            }
            all.sort_unstable_by(by_key);
            all.truncate(k);
            all
        }
        (Points::Codes(d), Points::Codes(q)) => scan(d, q.row(qi), k)
            .into_iter()
            .map(|h| Neighbor {
                row: h.row,
                distance: h.distance as f64,
            })
            .collect(),
        _ => unreachable!("checked by check_compatible"),
    }
}

/// Majority vote among the given neighbors.
///
/// Ties go to the label whose members have the smaller summed distance, then
/// to the smaller label.
pub fn vote(neighbors: &[Neighbor], db_labels: &[u32]) -> Option<u32> {
    let mut tally: Vec<(u32, usize, f64)> = Vec::new();
    for nb in neighbors {
        let label = db_labels[nb.row];
        match tally.iter_mut().find(|(l, _, _)| *l == label) {
            Some(entry) => {
                entry.1 += 1;
                entry.2 += nb.distance;
            }
            None => tally.push((label, 1, nb.distance)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|(l, _, _)| l)
}

fn check_db(db: &Points<'_>, db_labels: &[u32], k: usize) -> Result<()> {
    if db.is_empty() {
        return Err(Error::InvalidArgument("database is empty".into()));
    }
    if db.len() != db_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} database rows but {} labels",
            db.len(),
            db_labels.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > db.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds database size {}",
            db.len()
        )));
    }
    Ok(())
}

pub fn knn_predict(db: &Points<'_>, db_labels: &[u32], queries: &Points<'_>, qi: usize, k: usize) -> Result<u32> {
    check_db(db, db_labels, k)?;
    let nbs = neighbors(db, queries, qi, Some(k))?;
    Ok(vote(&nbs, db_labels).expect("k >= 1 and database non-empty"))
}

fn check_queries(queries: &Points<'_>, query_labels: &[u32]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("query set is empty".into()));
    }
    if queries.len() != query_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} queries but {} labels",
            queries.len(),
            query_labels.len()
        )));
    }
    Ok(())
}

pub fn knn_accuracy(
    db: &Points<'_>,
    db_labels: &[u32],
    queries: &Points<'_>,
    query_labels: &[u32],
    k: usize,
) -> Result<f64> {
    Ok(evaluate(db, db_labels, queries, query_labels, k, Some(k))?.knn_accuracy)
}

/// Database labels in ranked order for a single query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRetrieval {
    pub query_label: u32,
    pub ranked_labels: Vec<u32>,
}

/// `(1/R) Σ precision@r` over ranks `r` holding a relevant item; 0 when `R = 0`.
pub fn average_precision(ranked: &RankedRetrieval) -> f64 {
    ap_from_relevance(ranked.ranked_labels.iter().map(|&l| l == ranked.query_label))
}

fn ap_from_relevance(relevance: impl Iterator<Item = bool>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, rel) in relevance.enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Mean AP over all queries, each ranked against the full database.
///
/// With `cutoff = Some(c)` only the top `c` ranks are scored and `R` counts
/// the relevant items among them.
pub fn mean_average_precision(
    db: &Points<'_>,
    db_labels: &[u32],
    queries: &Points<'_>,
    query_labels: &[u32],
    cutoff: Option<usize>,
) -> Result<f64> {
    Ok(evaluate(db, db_labels, queries, query_labels, 1, cutoff)?.map)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub knn_accuracy: f64,
    pub map: f64,
    pub num_queries: usize,
}

/// KNN accuracy and mAP from one ranking per query.
pub fn evaluate(
    db: &Points<'_>,
    db_labels: &[u32],
    queries: &Points<'_>,
    query_labels: &[u32],
    k: usize,
    cutoff: Option<usize>,
) -> Result<Scores> {
    check_db(db, db_labels, k)?;
    check_queries(queries, query_labels)?;
    check_compatible(db, queries)?;
    if cutoff == Some(0) {
        return Err(Error::InvalidArgument("mAP cutoff must be at least 1".into()));
    }
    let depth = cutoff.map_or(db.len(), |c| c.max(k).min(db.len()));
    let per_query: Vec<(bool, f64)> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let ranking = rank(db, queries, qi, depth);
            let predicted = vote(&ranking[..k], db_labels);
            let scored = cutoff.map_or(ranking.len(), |c| c.min(ranking.len()));
            let ap = ap_from_relevance(ranking[..scored].iter().map(|nb| db_labels[nb.row] == query_labels[qi]));
            (predicted == Some(query_labels[qi]), ap)
        })
        .collect();
    let correct = per_query.iter().filter(|(c, _)| *c).count();
    let ap_sum: f64 = per_query.iter().map(|(_, ap)| ap).sum();
    let n = per_query.len() as f64;
    Ok(Scores {
        knn_accuracy: correct as f64 / n,
        map: ap_sum / n,
        num_queries: per_query.len(),
    })
}

pub const REPORT_VERSION: u32 = 1;

/// The metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub version: u32,
    pub mode: Metric,
    pub k: usize,
    pub num_queries: usize,
    pub knn_accuracy: f64,
    pub map: f64,
    pub config: serde_json::Value,
    pub timestamp: String,
}

impl MetricsReport {
    pub fn new(mode: Metric, k: usize, scores: Scores, config: serde_json::Value) -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            version: REPORT_VERSION,
            mode,
            k,
            num_queries: scores.num_queries,
            knn_accuracy: scores.knn_accuracy,
            map: scores.map,
            config,
            timestamp: secs.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.knn_accuracy) || !in_unit(self.map) {
            return Err(Error::InvalidArgument(format!(
                "metrics out of [0, 1]: knn_accuracy={}, map={}",
                self.knn_accuracy, self.map
            )));
        }
        if self.version != REPORT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn table(&self) -> String {
        let rows = [
            ("mode", self.mode.name().to_string()),
            ("k", self.k.to_string()),
            ("queries", self.num_queries.to_string()),
            ("knn_accuracy", format!("{:.4}", self.knn_accuracy)),
            ("map", format!("{:.4}", self.map)),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            writeln!(out, "{name:<14}{value:>10}").unwrap();
        }
        out
    }
}

/// Writes the report as JSON after checking its bounds.
pub fn emit_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = report.to_json()?;
    fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn ranked(query_label: u32, ranked_labels: &[u32]) -> RankedRetrieval {
        RankedRetrieval {
            query_label,
            ranked_labels: ranked_labels.to_vec(),
        }
    }

    #[test]
    fn ap_hand_values() {
        let ap = average_precision(&ranked(1, &[1, 0, 1, 0]));
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&ranked(1, &[1, 1, 1])), 1.0);
        assert_eq!(average_precision(&ranked(1, &[0, 0])), 0.0);
    }

    #[test]
    fn ap_ignores_tail_order_after_last_hit() {
        let a = average_precision(&ranked(2, &[2, 0, 2, 1, 0, 3]));
        let b = average_precision(&ranked(2, &[2, 0, 2, 3, 1, 0]));
        assert_eq!(a, b);
    }

    #[test]
    fn knn_majority_and_exact_match() {
        let db = array![[0.0], [1.0], [1.1], [5.0]];
        let labels = [0, 1, 1, 0];
        let q = array![[1.05], [5.0]];
        let dbp = Points::Real(db.view());
        let qp = Points::Real(q.view());
        assert_eq!(knn_predict(&dbp, &labels, &qp, 0, 3).unwrap(), 1);
        assert_eq!(knn_predict(&dbp, &labels, &qp, 1, 1).unwrap(), 0);
    }

    #[test]
    fn knn_label_ties_use_summed_distance_then_label() {
        let nbs = [
            Neighbor { row: 0, distance: 1.0 },
            Neighbor { row: 1, distance: 2.0 },
            Neighbor { row: 2, distance: 1.0 },
            Neighbor { row: 3, distance: 1.0 },
        ];
        // label 5: 1+2=3, label 3: 1+1=2 → 3 wins
        assert_eq!(vote(&nbs, &[5, 5, 3, 3]), Some(3));
        let nbs = [Neighbor { row: 0, distance: 1.0 }, Neighbor { row: 1, distance: 1.0 }];
        assert_eq!(vote(&nbs, &[4, 2]), Some(2));
    }

    #[test]
    fn knn_errors() {
        let empty = Array2::<f64>::zeros((0, 2));
        let q = Array2::<f64>::zeros((1, 2));
        let err = knn_predict(&Points::Real(empty.view()), &[], &Points::Real(q.view()), 0, 1);
        assert!(err.is_err());
        let db = Array2::<f64>::zeros((2, 2));
        let r = knn_accuracy(&Points::Real(db.view()), &[0, 1], &Points::Real(q.view()), &[0], 3);
        assert!(r.is_err());
        let codes = PackedCodes::from_words(2, vec![0, 1]).unwrap();
        let r = knn_accuracy(&Points::Codes(&codes), &[0, 1], &Points::Real(q.view()), &[0], 1);
        assert!(r.is_err());
    }

    #[test]
    fn perfect_separation_gives_one() {
        let db = array![[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]];
        let q = array![[0.05, 0.0], [10.0, 10.05]];
        let s = evaluate(
            &Points::Real(db.view()),
            &[0, 0, 1, 1],
            &Points::Real(q.view()),
            &[0, 1],
            1,
            None,
        )
        .unwrap();
        assert_eq!(s.map, 1.0);
        assert_eq!(s.knn_accuracy, 1.0);
    }

    #[test]
    fn single_query_map_is_its_ap() {
        let db = array![[0.0], [1.0], [2.0], [3.0]];
        let labels = [1, 0, 1, 0];
        let q = array![[-0.5]];
        let m = mean_average_precision(&Points::Real(db.view()), &labels, &Points::Real(q.view()), &[1], None).unwrap();
        assert!((m - average_precision(&ranked(1, &[1, 0, 1, 0]))).abs() < 1e-15);
    }

    #[test]
    fn cutoff_restricts_ranking() {
        let db = array![[0.0], [1.0], [2.0], [3.0]];
        let labels = [1, 0, 0, 1];
        let q = array![[-0.5]];
        let m = mean_average_precision(
            &Points::Real(db.view()),
            &labels,
            &Points::Real(q.view()),
            &[1],
            Some(2),
        )
        .unwrap();
        assert_eq!(m, 1.0);
    }

    #[test]
    fn report_round_trip_and_bounds() {
        let scores = Scores {
            knn_accuracy: 0.5,
            map: 0.25,
            num_queries: 4,
        };
        let r = MetricsReport::new(Metric::Hamming, 5, scores, serde_json::json!({"a": 1}));
        let back = MetricsReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.table().contains("knn_accuracy"));

        let bad = MetricsReport { map: 1.5, ..r };
        assert!(bad.to_json().is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&bad, dir.path().join("r.json")).is_err());
    }
}

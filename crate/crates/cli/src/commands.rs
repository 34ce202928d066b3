use std::fs;
use std::path::Path;

use hashkit::data::{self, detect_kind, read_features_auto, write_features, FileKind};
use hashkit::eval::{emit_report, evaluate, Points};
use hashkit::model::Checkpoint;
use hashkit::pipeline::{train, EpochRecord};
use hashkit::{
    BlobSpec, Dataset, Error, FeatureFormat, HammingIndex, Metric, MetricsReport, PackedCodes, Result, TrainConfig,
};
use ndarray::Array2;
use serde_json::json;

use crate::{Command, OutFormat};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            classes,
            dim,
            per_class,
            center_scale,
            sigma,
            seed,
            format,
            out,
        } => {
            let spec = BlobSpec {
                classes,
                dim,
                samples_per_class: per_class,
                center_scale,
                noise_sigma: sigma,
                seed,
            };
            let ds = data::generate_blobs(&spec)?;
            let format = match format {
                OutFormat::Feat => FeatureFormat::FeatBin,
                OutFormat::Csv => FeatureFormat::Csv,
            };
            write_features(&ds, &out, format)?;
            eprintln!("wrote {} rows of dim {} to {}", ds.len(), ds.dim(), out.display());
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            history,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let ds = read_features_auto(&data)?;
            let mut log = |r: &EpochRecord| {
                eprintln!(
                    "epoch={} loss={:.6} alpha={} lambda={} qerr={:.6}",
                    r.epoch, r.mean_loss, r.alpha, r.lambda, r.quantization_error
                );
            };
            let (ckpt, hist) = train(&cfg, &ds, &mut log)?;
            ckpt.save(&out)?;
            if let Some(path) = history {
                write_text(&path, hist.to_json()?)?;
            }
            Ok(())
        }
        Command::Encode {
            ckpt,
            data,
            out,
            raw_out,
        } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let ds = read_features_auto(&data)?;
            let u = ckpt.forward(ds.features_f64().view())?;
            let codes = PackedCodes::from_real(u.view())?;
            data::write_codes(&codes, ds.labels(), &out)?;
            if let Some(path) = raw_out {
                write_features(&real_dataset(&u, ds.labels())?, &path, FeatureFormat::FeatBin)?;
            }
            Ok(())
        }
        Command::Eval {
            db,
            queries,
            k,
            metric,
            report,
            map_cutoff,
        } => {
            let db_set = load_points(&db, metric)?;
            let q_set = load_points(&queries, metric)?;
            let scores = evaluate(
                &db_set.points(),
                &db_set.labels,
                &q_set.points(),
                &q_set.labels,
                k,
                map_cutoff,
            )?;
            let config = json!({
                "db": db.display().to_string(),
                "queries": queries.display().to_string(),
                "k": k,
                "metric": metric.name(),
                "map_cutoff": map_cutoff,
            });
            let rep = MetricsReport::new(metric, k, scores, config);
            emit_report(&rep, &report)?;
            print!("{}", rep.table());
            Ok(())
        }
        Command::Query { db, query_row, k } => {
            let (codes, labels) = data::read_codes(&db)?;
            if query_row >= codes.len() {
                return Err(Error::InvalidArgument(format!(
                    "query row {query_row} out of range for {} rows",
                    codes.len()
                )));
            }
            let index = HammingIndex::build(codes, labels)?;
            let hits = index.search_words(index.codes().row(query_row), k)?;
            for h in hits {
                println!("{}\t{}\t{}", h.row, h.distance, index.labels()[h.row]);
            }
            Ok(())
        }
        Command::DumpEmbeddings { ckpt, data, out } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let ds = read_features_auto(&data)?;
            let u = ckpt.forward(ds.features_f64().view())?;
            write_features(&real_dataset(&u, ds.labels())?, &out, FeatureFormat::Csv)
        }
    }
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text + "\n").map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn real_dataset(u: &Array2<f64>, labels: &[u32]) -> Result<Dataset> {
    Dataset::new(u.mapv(|v| v as f32), labels.to_vec())
}

enum Stored {
    Real(Array2<f64>),
    Codes(PackedCodes),
}

struct LoadedSet {
    stored: Stored,
    labels: Vec<u32>,
}

impl LoadedSet {
    fn points(&self) -> Points<'_> {
        match &self.stored {
            Stored::Real(m) => Points::Real(m.view()),
            Stored::Codes(c) => Points::Codes(c),
        }
    }
}

/// Loads features or codes and brings them into the space `metric` works in.
fn load_points(path: &Path, metric: Metric) -> Result<LoadedSet> {
    if detect_kind(path)? == FileKind::Codes {
        if metric == Metric::Euclidean {
            return Err(Error::InvalidArgument(format!(
                "{} holds binary codes; use --metric hamming",
                path.display()
            )));
        }
        let (codes, labels) = data::read_codes(path)?;
        return Ok(LoadedSet {
            stored: Stored::Codes(codes),
            labels,
        });
    }
    let ds = read_features_auto(path)?;
    let x = ds.features_f64();
    let stored = match metric {
        Metric::Euclidean => Stored::Real(x),
        Metric::Hamming => Stored::Codes(PackedCodes::from_real(x.view())?),
    };
    let (_, labels) = ds.into_parts();
    Ok(LoadedSet { stored, labels })
}

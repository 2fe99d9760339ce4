//! Snapshot CSV files, JSON sidecars and learned-metric files.
//!
//! A snapshot file has the header
//! `tau_s,power,aaod_rad,zaod_rad,aaoa_rad,zaoa_rad,label` and one MPC per
//! row; `label = -1` marks an unlabeled MPC. Floats are written in their
//! shortest round-trip form. The sidecar `<stem>.json` echoes the generator
//! configuration and seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::learn::MetricFile;
use crate::metric::MetricMatrix;
use crate::mpc::Mpc;
use crate::synth::{Origin, Snapshot, SnapshotMeta};

pub const SNAPSHOT_HEADER: [&str; 7] = [
    "tau_s", "power", "aaod_rad", "zaod_rad", "aaoa_rad", "zaoa_rad", "label",
];

/// Clusters need more than this many MPCs to survive loading by default.
pub const DEFAULT_CLUSTER_SIZE_THRESHOLD: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n_clusters: usize,
    pub n_mpcs: usize,
    pub meta: SnapshotMeta,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_snapshot_csv<W: Write>(out: W, s: &Snapshot) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SNAPSHOT_HEADER)?;
    for m in &s.mpcs {
        let label = m.label.map(i64::from).unwrap_or(-1);
        w.write_record([
            m.tau.to_string(),
            m.power.to_string(),
            m.aaod.to_string(),
            m.zaod.to_string(),
            m.aaoa.to_string(),
            m.zaoa.to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` and its JSON sidecar.
pub fn save_snapshot(path: &Path, s: &Snapshot) -> Result<()> {
    let file = fs::File::create(path)?;
    write_snapshot_csv(std::io::BufWriter::new(file), s)?;
    let side = Sidecar {
        n_clusters: s.n_clusters,
        n_mpcs: s.mpcs.len(),
        meta: s.meta.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses one snapshot CSV without filtering.
pub fn read_snapshot_csv(path: &Path) -> Result<Vec<Mpc>> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(parse_error(path, 1, "empty file"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SNAPSHOT_HEADER {
        return Err(parse_error(
            path,
            1,
            format!("unknown header {:?}, expected {}", header, SNAPSHOT_HEADER.join(",")),
        ));
    }
    let mut mpcs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != SNAPSHOT_HEADER.len() {
            return Err(parse_error(path, line, format!("expected 7 fields, got {}", rec.len())));
        }
        let mut vals = [0.0f64; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k].parse().map_err(|_| {
                parse_error(path, line, format!("{}: cannot parse {:?}", SNAPSHOT_HEADER[k], &rec[k]))
            })?;
        }
        let label: i64 = rec[6]
            .parse()
            .map_err(|_| parse_error(path, line, format!("label: cannot parse {:?}", &rec[6])))?;
        let label = match label {
            -1 => None,
            l if (0..=u32::MAX as i64).contains(&l) => Some(l as u32),
            l => return Err(parse_error(path, line, format!("invalid label {l}"))),
        };
        let mpc = Mpc::new(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], label)
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        mpcs.push(mpc);
    }
    if mpcs.is_empty() {
        return Err(parse_error(path, 2, "no MPC rows"));
    }
    Ok(mpcs)
}

/// Keeps clusters with more than `threshold` MPCs and relabels them
/// contiguously in ascending order of their original label. Unlabeled MPCs
/// are kept.
pub fn filter_small_clusters(mpcs: Vec<Mpc>, threshold: usize) -> (Vec<Mpc>, usize) {
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for m in &mpcs {
        if let Some(l) = m.label {
            *sizes.entry(l).or_insert(0) += 1;
        }
    }
    let relabel: BTreeMap<u32, u32> = sizes
        .iter()
        .filter(|(_, &n)| n > threshold)
        .enumerate()
        .map(|(new, (&old, _))| (old, new as u32))
        .collect();
    let kept = mpcs
        .into_iter()
        .filter_map(|mut m| match m.label {
            None => Some(m),
            Some(l) => relabel.get(&l).map(|&new| {
                m.label = Some(new);
                m
            }),
        })
        .collect();
    (kept, relabel.len())
}

fn snapshot_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Insufficient(format!(
                "no .csv files in {}",
                path.display()
            )));
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Loads labeled MPC snapshots from a CSV file or a directory of CSV files
/// (one snapshot per file, sorted by name), dropping clusters with at most
/// `threshold` MPCs.
pub fn load_labeled_mpcs(path: &Path, threshold: usize) -> Result<Vec<Snapshot>> {
    snapshot_files(path)?
        .into_iter()
        .map(|file| {
            let mpcs = read_snapshot_csv(&file)?;
            let (mpcs, n_clusters) = filter_small_clusters(mpcs, threshold);
            let side = sidecar_path(&file);
            let meta = if side.exists() {
                let s: Sidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
                s.meta
            } else {
                SnapshotMeta {
                    origin: Origin::Loaded,
                    config: None,
                    seed: None,
                    angle_noise_rad: 0.0,
                }
            };
            Ok(Snapshot {
                mpcs,
                n_clusters,
                meta,
            })
        })
        .collect()
}

pub fn save_metric(path: &Path, m: &MetricMatrix) -> Result<()> {
    let f = MetricFile::from_metric(m)?;
    fs::write(path, serde_json::to_string_pretty(&f)? + "\n")?;
    Ok(())
}

pub fn load_metric(path: &Path) -> Result<MetricMatrix> {
    let f: MetricFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    f.to_metric()
}

/// Writes `index,cluster` rows.
pub fn write_assignment_csv<W: Write>(out: W, a: &ClusterAssignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "cluster"])?;
    for (i, c) in a.assignment.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignment_csv(path: &Path) -> Result<ClusterAssignment> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let c: i64 = rec
            .get(1)
            .ok_or_else(|| parse_error(path, line, "missing cluster column"))?
            .parse()
            .map_err(|_| parse_error(path, line, "cannot parse cluster id"))?;
        raw.push(c);
    }
    Ok(ClusterAssignment::from_raw(raw, Default::default()))
}

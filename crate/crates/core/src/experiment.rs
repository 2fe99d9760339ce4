//! Monte Carlo experiment runner.
//!
//! For every sweep value the runner builds the realizations, samples one
//! training set from them, trains each requested metric once and then scores
//! every realization × algorithm × metric combination with the F measure.
//! Realizations are seeded from `(seed, realization index)` only, so every
//! sweep value sees the same underlying draws.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{best_of_restarts, dbscan, kmeans, kpowermeans, ClusterAssignment, DbscanParams};
use crate::error::{Error, Result};
use crate::eval::{f_measure, summarize};
use crate::io::{load_labeled_mpcs, DEFAULT_CLUSTER_SIZE_THRESHOLD};
use crate::learn::{lmnn_learn, mmc_learn_diagonal_traced, LabeledSet, LmnnConfig, MmcConfig, PairSets};
use crate::metric::{default_gamma, mcd_matrix, MetricMatrix};
use crate::mpc::{embed_all, Scheme};
use crate::synth::{add_angle_noise, generate_legacy_snapshot, generate_snapshot, GenConfig, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Mcd,
    MmcDiag,
    LmnnFull,
    DelayOnly,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Mcd,
        MetricKind::MmcDiag,
        MetricKind::LmnnFull,
        MetricKind::DelayOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mcd => "mcd",
            MetricKind::MmcDiag => "mmc-diag",
            MetricKind::LmnnFull => "lmnn-full",
            MetricKind::DelayOnly => "delay-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    KPowerMeans,
    Dbscan,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::KMeans, Algorithm::KPowerMeans, Algorithm::Dbscan];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::KPowerMeans => "kpowermeans",
            Algorithm::Dbscan => "dbscan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Modified,
    Legacy,
}

/// Where the realizations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Generate {
        #[serde(default)]
        model: Model,
        #[serde(default)]
        config: GenConfig,
    },
    /// A snapshot CSV file or a directory of them; every file is one realization.
    Load {
        path: PathBuf,
        #[serde(default = "default_min_cluster_size")]
        min_cluster_size: usize,
    },
}

fn default_min_cluster_size() -> usize {
    DEFAULT_CLUSTER_SIZE_THRESHOLD
}

impl Default for Source {
    fn default() -> Self {
        Source::Generate {
            model: Model::Modified,
            config: GenConfig::default(),
        }
    }
}

/// Delay weighting of the MCD baseline: either `xi` directly or `zeta` with
/// the scaling factor derived from the training delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McdWeight {
    Xi(f64),
    Zeta(f64),
}

impl Default for McdWeight {
    fn default() -> Self {
        McdWeight::Xi(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NClusters,
    AngleNoiseDeg,
    STrain,
    MTrain,
    NTrain,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NClusters => "n_clusters",
            SweepParam::AngleNoiseDeg => "angle_noise_deg",
            SweepParam::STrain => "s_train",
            SweepParam::MTrain => "m_train",
            SweepParam::NTrain => "n_train",
        }
    }

    fn is_count(self) -> bool {
        !matches!(self, SweepParam::AngleNoiseDeg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            param: SweepParam::NClusters,
            values: vec![10.0, 15.0, 20.0, 25.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    pub realizations: usize,
    pub n_train: usize,
    pub m_train: usize,
    pub s_train: usize,
    pub with_aod: bool,
    pub metrics: Vec<MetricKind>,
    pub algorithms: Vec<Algorithm>,
    pub sweep: Sweep,
    /// Angle noise applied to every realization when not swept.
    pub angle_noise_deg: f64,
    pub seed: u64,
    pub mcd: McdWeight,
    pub lmnn: LmnnConfig,
    pub mmc: MmcConfig,
    pub dbscan: DbscanParams,
    pub kmeans_max_iters: usize,
    /// Seeded KMeans/KPowerMeans runs per snapshot; the lowest objective wins.
    pub kmeans_restarts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: Source::default(),
            realizations: 200,
            n_train: 5,
            m_train: 5,
            s_train: 1,
            with_aod: false,
            metrics: MetricKind::ALL.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            sweep: Sweep::default(),
            angle_noise_deg: 0.0,
            seed: 0,
            mcd: McdWeight::default(),
            lmnn: LmnnConfig::default(),
            mmc: MmcConfig::default(),
            dbscan: DbscanParams::default(),
            kmeans_max_iters: 100,
            kmeans_restarts: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::param("realizations must be at least 1"));
        }
        for (name, v) in [("n_train", self.n_train), ("m_train", self.m_train), ("s_train", self.s_train)] {
            if v < 1 {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        if self.metrics.is_empty() || self.algorithms.is_empty() {
            return Err(Error::param("metrics and algorithms must be non-empty"));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::param("sweep values must be non-empty"));
        }
        for &v in &self.sweep.values {
            let ok = if self.sweep.param.is_count() {
                v >= 1.0 && v.fract() == 0.0
            } else {
                v >= 0.0 && v.is_finite()
            };
            if !ok {
                return Err(Error::param(format!(
                    "invalid {} sweep value {v}",
                    self.sweep.param.name()
                )));
            }
        }
        if !(self.angle_noise_deg >= 0.0 && self.angle_noise_deg.is_finite()) {
            return Err(Error::param("angle_noise_deg must be non-negative"));
        }
        let (McdWeight::Xi(w) | McdWeight::Zeta(w)) = self.mcd;
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::param(format!("MCD weight must be positive, got {w}")));
        }
        if self.kmeans_max_iters < 1 || self.kmeans_restarts < 1 {
            return Err(Error::param("kmeans_max_iters and kmeans_restarts must be at least 1"));
        }
        self.lmnn.validate()?;
        self.dbscan.validate()?;
        match &self.source {
            Source::Generate { model, config } => {
                config.validate()?;
                if *model == Model::Legacy && config.n_clusters < 2 {
                    return Err(Error::param("legacy generator needs at least 2 clusters"));
                }
            }
            Source::Load { .. } => {
                if self.sweep.param == SweepParam::NClusters && self.sweep.values.len() > 1 {
                    return Err(Error::param("cannot sweep n_clusters over loaded data"));
                }
            }
        }
        Ok(())
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub metric: MetricKind,
    pub mean_f: f64,
    pub sd_f: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Realizations whose clustering failed and were left out of the statistics.
    pub excluded: usize,
}

pub const RESULT_HEADER: [&str; 8] = [
    "sweep_value",
    "algorithm",
    "metric",
    "mean_f",
    "sd_f",
    "realizations",
    "seed",
    "excluded",
];

pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.algorithm.name().to_string(),
            r.metric.name().to_string(),
            r.mean_f.to_string(),
            r.sd_f.to_string(),
            r.realizations.to_string(),
            r.seed.to_string(),
            r.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A sampled training set and where each sample came from.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub labeled: LabeledSet,
    pub pairs: PairSets,
    /// `(snapshot index, cluster label)` behind every training class.
    pub classes: Vec<(usize, u32)>,
}

/// Picks `s_train` snapshots, `n_train` clusters in each and `m_train` MPCs
/// per cluster, all uniformly without replacement. Only clusters with at
/// least `m_train` MPCs are eligible.
pub fn sample_training_set(
    snapshots: &[Snapshot],
    n_train: usize,
    m_train: usize,
    s_train: usize,
    seed: u64,
    with_aod: bool,
) -> Result<TrainingSet> {
    if n_train < 1 || m_train < 1 || s_train < 1 {
        return Err(Error::param("training budgets must be at least 1"));
    }
    if snapshots.len() < s_train {
        return Err(Error::Insufficient(format!(
            "need {s_train} snapshots for training, have {}",
            snapshots.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mpcs = Vec::with_capacity(n_train * m_train * s_train);
    let mut labels = Vec::with_capacity(mpcs.capacity());
    let mut classes = Vec::new();
    for s in sample(&mut rng, snapshots.len(), s_train).into_iter() {
        let snap = &snapshots[s];
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, m) in snap.mpcs.iter().enumerate() {
            if let Some(l) = m.label {
                members.entry(l).or_default().push(i);
            }
        }
        let eligible: Vec<(u32, Vec<usize>)> =
            members.into_iter().filter(|(_, v)| v.len() >= m_train).collect();
        if eligible.len() < n_train {
            return Err(Error::Insufficient(format!(
                "snapshot {s} has {} clusters with at least {m_train} MPCs, need {n_train}",
                eligible.len()
            )));
        }
        for c in sample(&mut rng, eligible.len(), n_train).into_iter() {
            let (label, idx) = &eligible[c];
            let class = classes.len();
            classes.push((s, *label));
            for k in sample(&mut rng, idx.len(), m_train).into_iter() {
                mpcs.push(snap.mpcs[idx[k]]);
                labels.push(class);
            }
        }
    }
    let features = embed_all(&mpcs, with_aod);
    let labeled = LabeledSet::new(features, labels)?;
    let pairs = labeled.to_pair_sets()?;
    Ok(TrainingSet {
        labeled,
        pairs,
        classes,
    })
}

/// Trains (or builds) one metric from a training set.
pub fn train_metric(
    kind: MetricKind,
    train: &TrainingSet,
    cfg: &ExperimentConfig,
) -> Result<MetricMatrix> {
    let scheme = train.labeled.scheme();
    match kind {
        MetricKind::Mcd => {
            let xi = match cfg.mcd {
                McdWeight::Xi(xi) => xi,
                McdWeight::Zeta(zeta) => {
                    let taus: Vec<f64> =
                        train.labeled.features().iter().map(|f| f.as_slice()[0]).collect();
                    zeta * default_gamma(&taus)?
                }
            };
            mcd_matrix(xi, scheme.with_aod())
        }
        MetricKind::DelayOnly => Ok(MetricMatrix::delay_only(scheme)),
        MetricKind::MmcDiag => Ok(mmc_learn_diagonal_traced(&train.pairs, &cfg.mmc)?.metric),
        MetricKind::LmnnFull => lmnn_learn(&train.labeled, &cfg.lmnn),
    }
}

/// Clusters one snapshot with K = its true cluster count where applicable.
pub fn cluster_snapshot(
    algorithm: Algorithm,
    snapshot: &Snapshot,
    metric: &MetricMatrix,
    with_aod: bool,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<ClusterAssignment> {
    let scheme = Scheme::from_flag(with_aod);
    if metric.dim() != scheme.dim() {
        return Err(Error::DimensionMismatch {
            expected: scheme.dim(),
            got: metric.dim(),
        });
    }
    let features = embed_all(&snapshot.mpcs, with_aod);
    let k = snapshot.n_clusters;
    match algorithm {
        Algorithm::KMeans => best_of_restarts(seed, cfg.kmeans_restarts, |s| {
            kmeans(&features, k, metric, s, cfg.kmeans_max_iters)
        }),
        Algorithm::KPowerMeans => {
            let powers = snapshot.powers();
            best_of_restarts(seed, cfg.kmeans_restarts, |s| {
                kpowermeans(&features, &powers, k, metric, s, cfg.kmeans_max_iters)
            })
        }
        Algorithm::Dbscan => dbscan(&features, metric, &cfg.dbscan),
    }
}

/// Stream tags for [`derive_seed`].
pub const TAG_SNAPSHOT: u64 = 0;
pub const TAG_NOISE: u64 = 1;
pub const TAG_CLUSTER: u64 = 2;
pub const TAG_TRAIN: u64 = 3;

/// The `index`-th seed of the stream `tag` under the master seed.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Everything produced for one sweep value.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub value: f64,
    /// Number of samples the learners were given.
    pub training_samples: usize,
    pub metrics: Vec<(MetricKind, MetricMatrix)>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub sweeps: Vec<SweepOutcome>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.sweeps.iter().flat_map(|s| s.rows.iter().cloned()).collect()
    }
}

struct Resolved {
    source: Source,
    n_train: usize,
    m_train: usize,
    s_train: usize,
    noise_deg: f64,
}

fn resolve(cfg: &ExperimentConfig, value: f64) -> Resolved {
    let mut r = Resolved {
        source: cfg.source.clone(),
        n_train: cfg.n_train,
        m_train: cfg.m_train,
        s_train: cfg.s_train,
        noise_deg: cfg.angle_noise_deg,
    };
    let count = value as usize;
    match cfg.sweep.param {
        SweepParam::NClusters => {
            if let Source::Generate { config, .. } = &mut r.source {
                config.n_clusters = count;
            }
        }
        SweepParam::AngleNoiseDeg => r.noise_deg = value,
        SweepParam::STrain => r.s_train = count,
        SweepParam::MTrain => r.m_train = count,
        SweepParam::NTrain => r.n_train = count,
    }
    r
}

fn build_realizations(cfg: &ExperimentConfig, r: &Resolved) -> Result<Vec<Snapshot>> {
    let base: Vec<Snapshot> = match &r.source {
        Source::Generate { model, config } => (0..cfg.realizations)
            .into_par_iter()
            .map(|i| {
                let mut c = config.clone();
                c.seed = derive_seed(cfg.seed, TAG_SNAPSHOT, i as u64);
                match model {
                    Model::Modified => generate_snapshot(&c),
                    Model::Legacy => generate_legacy_snapshot(&c),
                }
            })
            .collect::<Result<_>>()?,
        Source::Load {
            path,
            min_cluster_size,
        } => {
            let loaded = load_labeled_mpcs(path, *min_cluster_size)
                .map_err(|e| e.context(format!("loading {}", path.display())))?;
            if loaded.len() != cfg.realizations {
                log::info!(
                    "using all {} loaded snapshots as realizations",
                    loaded.len()
                );
            }
            loaded
        }
    };
    if r.noise_deg == 0.0 {
        return Ok(base);
    }
    let sigma = r.noise_deg.to_radians();
    base.into_par_iter()
        .enumerate()
        .map(|(i, s)| add_angle_noise(&s, sigma, derive_seed(cfg.seed, TAG_NOISE, i as u64)))
        .collect()
}

fn run_value(cfg: &ExperimentConfig, value: f64) -> Result<SweepOutcome> {
    let r = resolve(cfg, value);
    let snapshots = build_realizations(cfg, &r)?;
    let train = sample_training_set(
        &snapshots,
        r.n_train,
        r.m_train,
        r.s_train,
        derive_seed(cfg.seed, TAG_TRAIN, 0),
        cfg.with_aod,
    )
    .map_err(|e| e.context("sampling the training set"))?;
    let training_samples = train.labeled.len();
    assert_eq!(
        training_samples,
        r.n_train * r.m_train * r.s_train,
        "training budget accounting"
    );

    let mut metrics = Vec::with_capacity(cfg.metrics.len());
    for &kind in &cfg.metrics {
        let m = train_metric(kind, &train, cfg)
            .map_err(|e| e.context(format!("training {}", kind.name())))?;
        metrics.push((kind, m));
    }

    let combos: Vec<(Algorithm, usize)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| (0..metrics.len()).map(move |m| (a, m)))
        .collect();
    let scores: Vec<Vec<Result<f64>>> = snapshots
        .par_iter()
        .enumerate()
        .map(|(i, snap)| {
            let seed = derive_seed(cfg.seed, TAG_CLUSTER, i as u64);
            let truth = snap.labels();
            combos
                .iter()
                .map(|&(alg, m)| {
                    let truth = truth.as_ref().map_err(|e| Error::Insufficient(e.to_string()))?;
                    let pred = cluster_snapshot(alg, snap, &metrics[m].1, cfg.with_aod, seed, cfg)?;
                    Ok(f_measure(truth, &pred)?.overall_f)
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(combos.len());
    for (c, &(alg, m)) in combos.iter().enumerate() {
        let mut values = Vec::with_capacity(scores.len());
        let mut excluded = 0;
        for (i, per) in scores.iter().enumerate() {
            match &per[c] {
                Ok(f) => values.push(*f),
                Err(e) => {
                    excluded += 1;
                    log::warn!(
                        "realization {i}, {} + {}: {e}",
                        alg.name(),
                        metrics[m].0.name()
                    );
                }
            }
        }
        let summary = summarize(&values).map_err(|e| {
            e.context(format!(
                "every realization failed for {} + {}",
                alg.name(),
                metrics[m].0.name()
            ))
        })?;
        rows.push(ResultRow {
            sweep_value: value,
            algorithm: alg,
            metric: metrics[m].0,
            mean_f: summary.mean,
            sd_f: summary.sd,
            realizations: summary.count,
            seed: cfg.seed,
            excluded,
        });
    }
    Ok(SweepOutcome {
        value,
        training_samples,
        metrics,
        rows,
    })
}

/// Runs the full sweep and keeps the trained metrics and budget counts.
pub fn run_experiment_report(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sweeps = cfg
        .sweep
        .values
        .iter()
        .map(|&v| {
            run_value(cfg, v).map_err(|e| e.context(format!("{} = {v}", cfg.sweep.param.name())))
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport { sweeps })
}

/// One result row per (sweep value, algorithm, metric).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_experiment_report(cfg)?.rows())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let config = GenConfig {
            n_clusters: 6,
            mpcs_per_cluster: 8,
            ..GenConfig::default()
        };
        ExperimentConfig {
            source: Source::Generate {
                model: Model::Modified,
                config,
            },
            realizations: 3,
            metrics: vec![MetricKind::Mcd, MetricKind::DelayOnly],
            sweep: Sweep {
                param: SweepParam::NClusters,
                values: vec![6.0],
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.realizations = 0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.sweep.values.clear();
        assert!(c.validate().is_err());
        let mut c = small();
        c.sweep.param = SweepParam::MTrain;
        c.sweep.values = vec![2.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = small();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn one_row_per_combination() {
        let rows = run_experiment(&small()).unwrap();
        assert_eq!(rows.len(), 3 * 2);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.mean_f));
            assert_eq!(r.realizations + r.excluded, 3);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_eq!(derive_seed(9, 2, 5), derive_seed(9, 2, 5));
    }
}

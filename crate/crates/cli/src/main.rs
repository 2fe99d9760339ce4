//! `mpclust` command-line front end.
//!
//! Every pipeline stage is its own subcommand so partial reruns only redo
//! the stages that changed. Failures print one JSON line on stderr and exit
//! with status 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpclust::experiment::{
    cluster_snapshot, derive_seed, run_experiment_report, sample_training_set, train_metric,
    write_results_csv, Algorithm, MetricKind, TAG_CLUSTER, TAG_NOISE, TAG_SNAPSHOT, TAG_TRAIN,
};
use mpclust::io::{
    load_labeled_mpcs, load_metric, read_assignment_csv, save_metric, save_snapshot,
    write_assignment_csv, DEFAULT_CLUSTER_SIZE_THRESHOLD,
};
use mpclust::synth::add_angle_noise;
use mpclust::{
    f_measure, generate_legacy_snapshot, generate_snapshot, Error, ExperimentConfig, GenConfig,
    Result, Snapshot,
};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "mpclust", version, about = "Learned Mahalanobis metrics for MPC clustering")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "MPCLUST_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic snapshots (configuration: generator)
    Generate {
        /// Number of snapshots
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Use the legacy cluster model
        #[arg(long)]
        legacy: bool,
        /// Gaussian angle noise added to every MPC (degrees)
        #[arg(long, default_value_t = 0.0)]
        angle_noise_deg: f64,
    },
    /// Learn a metric from a training set sampled from snapshots (configuration: experiment)
    Train {
        /// Snapshot CSV or directory of snapshot CSVs
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long, default_value_t = DEFAULT_CLUSTER_SIZE_THRESHOLD)]
        min_cluster_size: usize,
    },
    /// Cluster one snapshot (configuration: experiment)
    Cluster {
        /// Snapshot CSV
        #[arg(long)]
        input: PathBuf,
        /// Learned metric JSON; MCD when absent
        #[arg(long)]
        metric: Option<PathBuf>,
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        #[arg(long, default_value_t = 0)]
        min_cluster_size: usize,
    },
    /// Score an assignment against the snapshot labels
    Evaluate {
        /// Snapshot CSV
        #[arg(long)]
        input: PathBuf,
        /// Assignment CSV written by `cluster`
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long, default_value_t = 0)]
        min_cluster_size: usize,
    },
    /// Run a full sweep and write its results CSV (configuration: experiment)
    Experiment,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mcd,
    MmcDiag,
    LmnnFull,
    DelayOnly,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mcd => MetricKind::Mcd,
            MetricArg::MmcDiag => MetricKind::MmcDiag,
            MetricArg::LmnnFull => MetricKind::LmnnFull,
            MetricArg::DelayOnly => MetricKind::DelayOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Kmeans,
    Kpowermeans,
    Dbscan,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Kmeans => Algorithm::KMeans,
            AlgorithmArg::Kpowermeans => Algorithm::KPowerMeans,
            AlgorithmArg::Dbscan => Algorithm::Dbscan,
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::from(e).context(format!("reading {}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::from(e).context(format!("parsing {}", p.display())))
        }
        None => Ok(T::default()),
    }
}

fn experiment_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_config(g.config.as_deref())?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path, min_cluster_size: usize) -> Result<Vec<Snapshot>> {
    load_labeled_mpcs(path, min_cluster_size).map_err(|e| e.context(format!("loading {}", path.display())))
}

fn single_snapshot(path: &Path, min_cluster_size: usize) -> Result<Snapshot> {
    let mut snaps = load(path, min_cluster_size)?;
    if snaps.len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "{} holds {} snapshots, expected one file",
            path.display(),
            snaps.len()
        )));
    }
    Ok(snaps.remove(0))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "snapshot".into())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out)?;
    match cli.command {
        Command::Generate {
            count,
            legacy,
            angle_noise_deg,
        } => {
            let cfg: GenConfig = read_config(g.config.as_deref())?;
            let master = g.seed.unwrap_or(cfg.seed);
            for i in 0..count as u64 {
                let c = GenConfig {
                    seed: derive_seed(master, TAG_SNAPSHOT, i),
                    ..cfg.clone()
                };
                let mut snap = if legacy {
                    generate_legacy_snapshot(&c)?
                } else {
                    generate_snapshot(&c)?
                };
                if angle_noise_deg > 0.0 {
                    snap = add_angle_noise(&snap, angle_noise_deg.to_radians(), derive_seed(master, TAG_NOISE, i))?;
                }
                let path = g.out.join(format!("snapshot_{i:04}.csv"));
                save_snapshot(&path, &snap)?;
                log::info!("wrote {}", path.display());
            }
        }
        Command::Train {
            input,
            metric,
            min_cluster_size,
        } => {
            let cfg = experiment_config(g)?;
            let snaps = load(&input, min_cluster_size)?;
            let seed = derive_seed(cfg.seed, TAG_TRAIN, 0);
            let train = sample_training_set(&snaps, cfg.n_train, cfg.m_train, cfg.s_train, seed, cfg.with_aod)?;
            let kind = MetricKind::from(metric);
            let learned = train_metric(kind, &train, &cfg).map_err(|e| e.context(format!("training {}", kind.name())))?;
            let path = g.out.join(format!("{}.json", kind.name()));
            save_metric(&path, &learned)?;
            log::info!("wrote {} from {} samples", path.display(), train.labeled.len());
        }
        Command::Cluster {
            input,
            metric,
            algorithm,
            min_cluster_size,
        } => {
            let cfg = experiment_config(g)?;
            let snap = single_snapshot(&input, min_cluster_size)?;
            let m = match &metric {
                Some(p) => load_metric(p)?,
                None => mpclust::mcd_matrix(1.0, cfg.with_aod)?,
            };
            let alg = Algorithm::from(algorithm);
            let pred = cluster_snapshot(alg, &snap, &m, cfg.with_aod, derive_seed(cfg.seed, TAG_CLUSTER, 0), &cfg)?;
            let path = g.out.join(format!("{}_{}.csv", stem(&input), alg.name()));
            write_assignment_csv(fs::File::create(&path)?, &pred)?;
            log::info!("wrote {}", path.display());
        }
        Command::Evaluate {
            input,
            assignment,
            min_cluster_size,
        } => {
            let snap = single_snapshot(&input, min_cluster_size)?;
            let pred = read_assignment_csv(&assignment)?;
            let report = f_measure(&snap.labels()?, &pred)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Experiment => {
            let cfg = experiment_config(g)?;
            let report = run_experiment_report(&cfg)?;
            let path = g.out.join(format!("sweep_{}.csv", cfg.sweep.param.name()));
            write_results_csv(fs::File::create(&path)?, &report.rows())?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build_global();
    let outcome = pool
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
        .and_then(|_| run(cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

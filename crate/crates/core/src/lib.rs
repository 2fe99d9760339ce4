//! Clustering of multipath components (MPCs) with learned Mahalanobis metrics.
//!
//! MPCs are embedded as `[delay, unit direction(s)]` feature vectors. A
//! positive-semidefinite matrix `A` then defines the distance
//! `sqrt((x - y)^T A (x - y))`; the classical multipath component distance is
//! the diagonal special case returned by [`mcd_matrix`]. Metrics can be
//! learned from labeled MPCs ([`learn`]) and plugged into KMeans,
//! KPowerMeans or DBSCAN ([`cluster`]), whose output is scored with the F
//! measure ([`eval`]). [`synth`] generates clustered channel snapshots and
//! [`experiment`] runs seeded Monte Carlo comparisons.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod learn;
pub mod metric;
pub mod mpc;
pub mod psd;
pub mod synth;

pub use cluster::{dbscan, kmeans, kpowermeans, ClusterAssignment, DbscanParams, NOISE};
pub use error::{Error, Result};
pub use eval::{aggregate, f_measure, FReport, Summary};
pub use experiment::{run_experiment, ExperimentConfig, ResultRow};
pub use learn::{lmnn_learn, mmc_learn_diagonal, LabeledSet, LmnnConfig, MmcConfig, PairSets};
pub use metric::{mahalanobis, mcd, mcd_matrix, McdParams, MetricMatrix};
pub use mpc::{embed, FeatureVector, Mpc, Scheme};
pub use psd::{psd_project, sqrt_transform};
pub use synth::{generate_legacy_snapshot, generate_snapshot, GenConfig, Snapshot};

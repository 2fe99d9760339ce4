//! Synthetic clustered channels with ground-truth labels.
//!
//! Inter-cluster parameters come from a small configurable model: cluster
//! delays are i.i.d. exponential truncated at a maximum excess delay, cluster
//! powers decay exponentially with delay under log-normal shadowing, and
//! cluster centre directions are uniform in azimuth and Gaussian in zenith
//! around the horizon. Intra-cluster MPCs follow the modified model:
//! resolvable TOAs on a `1/B_w` grid, power decaying with TOA and arrival
//! angle offsets, per-cluster power normalization and TOA rescaling to a
//! target cluster delay spread.
//!
//! # Random streams
//!
//! Every snapshot is a pure function of its [`GenConfig`]. Randomness comes
//! from `ChaCha8Rng::seed_from_u64(seed)`: stream 0 draws the inter-cluster
//! parameters and stream `n + 1` draws the intra-cluster angles of cluster
//! `n`, so the draws of one cluster never shift those of another. Gaussian
//! variates use `rand_distr::StandardNormal`; Laplacian offsets use the
//! inverse CDF.

use std::f64::consts::{FRAC_PI_2, LN_10, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{reflect_zenith, wrap_azimuth, Mpc};

/// Parameters of the simplified inter-cluster model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterClusterConfig {
    /// Mean of the exponential cluster-delay distribution (s).
    pub delay_mean_s: f64,
    /// Cluster delays are truncated to `[0, max_excess_delay_s]`.
    pub max_excess_delay_s: f64,
    /// Cluster power decays as `exp(-tau / power_decay_s)`.
    pub power_decay_s: f64,
    /// Standard deviation of per-cluster log-normal shadowing (dB).
    pub shadowing_db: f64,
    /// Standard deviation of cluster-centre zenith angles about pi/2 (rad).
    pub zenith_spread_rad: f64,
}

impl Default for InterClusterConfig {
    // Urban-micro LoS flavoured numbers at 60 GHz: DS ~ 27 ns, r_tau = 3.
    fn default() -> Self {
        InterClusterConfig {
            delay_mean_s: 81e-9,
            max_excess_delay_s: 400e-9,
            power_decay_s: 40.5e-9,
            shadowing_db: 3.0,
            zenith_spread_rad: 20f64.to_radians(),
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_clusters: usize,
    pub mpcs_per_cluster: usize,
    pub bandwidth_hz: f64,
    /// Target power-weighted RMS delay spread of every cluster (s).
    pub cluster_ds_s: f64,
    pub gamma_tau: f64,
    pub gamma_theta: f64,
    pub gamma_phi: f64,
    /// Standard deviation of the Laplacian intra-cluster angle offsets (rad).
    pub intra_angle_spread_rad: f64,
    pub inter: InterClusterConfig,
    /// Recorded in metadata only; the generator has no frequency dependence.
    pub carrier_hz: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_clusters: 20,
            mpcs_per_cluster: 20,
            bandwidth_hz: 2e9,
            cluster_ds_s: 5e-9,
            gamma_tau: LN_10 / 3.0,
            gamma_theta: LN_10 / 3.0,
            gamma_phi: LN_10 / 3.0,
            intra_angle_spread_rad: 5f64.to_radians(),
            inter: InterClusterConfig::default(),
            carrier_hz: 60e9,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 1 || self.n_clusters > 100 {
            return Err(Error::param(format!(
                "n_clusters must be in [1, 100], got {}",
                self.n_clusters
            )));
        }
        if self.mpcs_per_cluster < 1 {
            return Err(Error::param("mpcs_per_cluster must be at least 1"));
        }
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("cluster_ds_s", self.cluster_ds_s),
            ("gamma_tau", self.gamma_tau),
            ("gamma_theta", self.gamma_theta),
            ("gamma_phi", self.gamma_phi),
            ("intra_angle_spread_rad", self.intra_angle_spread_rad),
            ("inter.delay_mean_s", self.inter.delay_mean_s),
            ("inter.max_excess_delay_s", self.inter.max_excess_delay_s),
            ("inter.power_decay_s", self.inter.power_decay_s),
            ("inter.shadowing_db", self.inter.shadowing_db),
            ("inter.zenith_spread_rad", self.inter.zenith_spread_rad),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which generator produced a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Modified,
    Legacy,
    Loaded,
}

/// Generation metadata stored alongside a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub origin: Origin,
    pub config: Option<GenConfig>,
    pub seed: Option<u64>,
    /// Standard deviation of angle noise applied after generation (rad).
    #[serde(default)]
    pub angle_noise_rad: f64,
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mpcs: Vec<Mpc>,
    pub n_clusters: usize,
    pub meta: SnapshotMeta,
}

impl Snapshot {
    /// Ground-truth label of every MPC; fails if any MPC is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.mpcs
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.label
                    .map(|l| l as usize)
                    .ok_or_else(|| Error::Insufficient(format!("MPC {i} has no ground-truth label")))
            })
            .collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.mpcs.iter().map(|m| m.power).collect()
    }

    /// Indices of the MPCs of each cluster, indexed by label.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, m) in self.mpcs.iter().enumerate() {
            if let Some(l) = m.label {
                if (l as usize) < out.len() {
                    out[l as usize].push(i);
                }
            }
        }
        out
    }
}

/// Power-weighted RMS spread of `taus`.
pub fn delay_spread(taus: &[f64], powers: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean = taus.iter().zip(powers).map(|(t, p)| t * p).sum::<f64>() / total;
    let var = taus
        .iter()
        .zip(powers)
        .map(|(t, p)| p * (t - mean).powi(2))
        .sum::<f64>()
        / total;
    var.max(0.0).sqrt()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Zero-mean Laplacian with standard deviation `std`.
fn laplacian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let b = std / std::f64::consts::SQRT_2;
    // u in (-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    let mag = -(1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
    b * u.signum() * mag
}

#[derive(Debug, Clone, Copy)]
struct Direction {
    azimuth: f64,
    zenith: f64,
}

#[derive(Debug, Clone)]
struct ClusterParams {
    delay: f64,
    power: f64,
    arrival: Direction,
    departure: Direction,
}

fn inter_cluster(cfg: &GenConfig) -> Vec<ClusterParams> {
    let inter = &cfg.inter;
    let mut rng = stream(cfg.seed, 0);
    let n = cfg.n_clusters;
    // truncated exponential via inverse CDF
    let mass = 1.0 - (-inter.max_excess_delay_s / inter.delay_mean_s).exp();
    let mut delays: Vec<f64> = (0..n)
        .map(|_| -inter.delay_mean_s * (1.0 - rng.random::<f64>() * mass).ln())
        .collect();
    delays.sort_by(f64::total_cmp);
    let first = delays[0];
    for d in &mut delays {
        *d -= first;
    }
    let mut clusters: Vec<ClusterParams> = delays
        .into_iter()
        .map(|delay| {
            let shadow_db = inter.shadowing_db * gaussian(&mut rng);
            let power = (-delay / inter.power_decay_s).exp() * 10f64.powf(-shadow_db / 10.0);
            let mut centre = || Direction {
                azimuth: rng.random::<f64>() * TAU,
                zenith: reflect_zenith(FRAC_PI_2 + inter.zenith_spread_rad * gaussian(&mut rng)),
            };
            let arrival = centre();
            let departure = centre();
            ClusterParams {
                delay,
                power,
                arrival,
                departure,
            }
        })
        .collect();
    let total: f64 = clusters.iter().map(|c| c.power).sum();
    for c in &mut clusters {
        c.power /= total;
    }
    clusters
}

/// Unwrapped intra-cluster angle offsets of one MPC.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    aoa_az: f64,
    aoa_zen: f64,
    aod_az: f64,
    aod_zen: f64,
}

fn intra_offsets(cfg: &GenConfig, cluster: usize) -> Vec<Offsets> {
    let mut rng = stream(cfg.seed, cluster as u64 + 1);
    let s = cfg.intra_angle_spread_rad;
    (0..cfg.mpcs_per_cluster)
        .map(|_| Offsets {
            aoa_az: laplacian(&mut rng, s),
            aoa_zen: laplacian(&mut rng, s),
            aod_az: laplacian(&mut rng, s),
            aod_zen: laplacian(&mut rng, s),
        })
        .collect()
}

fn place(c: &ClusterParams, o: &Offsets, tau: f64, power: f64, label: usize) -> Mpc {
    Mpc {
        tau,
        power,
        aaod: wrap_azimuth(c.departure.azimuth + o.aod_az),
        zaod: reflect_zenith(c.departure.zenith + o.aod_zen),
        aaoa: wrap_azimuth(c.arrival.azimuth + o.aoa_az),
        zaoa: reflect_zenith(c.arrival.zenith + o.aoa_zen),
        label: Some(label as u32),
    }
}

/// `|v_m - v_0| / |v_last - v_0|`, or 0 when the denominator vanishes.
fn normalized_offset(v: f64, first: f64, last: f64) -> f64 {
    let den = (last - first).abs();
    if den > 0.0 {
        (v - first).abs() / den
    } else {
        0.0
    }
}

/// Relative intra-cluster powers (first MPC = 1) from the three-factor exponential decay.
pub fn intra_cluster_decay(
    taus: &[f64],
    zeniths: &[f64],
    azimuths: &[f64],
    gamma_tau: f64,
    gamma_theta: f64,
    gamma_phi: f64,
) -> Vec<f64> {
    let m = taus.len();
    if m == 0 {
        return Vec::new();
    }
    let last = m - 1;
    (0..m)
        .map(|i| {
            let ot = normalized_offset(taus[i], taus[0], taus[last]);
            let oz = normalized_offset(zeniths[i], zeniths[0], zeniths[last]);
            let oa = normalized_offset(azimuths[i], azimuths[0], azimuths[last]);
            (-gamma_tau * ot - gamma_theta * oz - gamma_phi * oa).exp()
        })
        .collect()
}

/// Rescales TOAs about the first path so their power-weighted spread equals `target`.
///
/// Equivalent to `tau' = (C/C') tau + (C' - C)/C' tau_1`, evaluated as
/// `tau_1 + (C/C')(tau - tau_1)` so the first path is preserved exactly.
pub fn rescale_to_delay_spread(taus: &mut [f64], powers: &[f64], target: f64) {
    let current = delay_spread(taus, powers);
    if current <= 0.0 || taus.is_empty() {
        return;
    }
    let ratio = target / current;
    let first = taus[0];
    for t in taus.iter_mut() {
        *t = first + ratio * (*t - first);
    }
}

/// Generates one snapshot of the modified clustered channel model.
pub fn generate_snapshot(cfg: &GenConfig) -> Result<Snapshot> {
    cfg.validate()?;
    let clusters = inter_cluster(cfg);
    let step = 1.0 / cfg.bandwidth_hz;
    let m = cfg.mpcs_per_cluster;
    let mut mpcs = Vec::with_capacity(cfg.n_clusters * m);
    for (n, c) in clusters.iter().enumerate() {
        let offsets = intra_offsets(cfg, n);
        let mut taus: Vec<f64> = (0..m).map(|i| c.delay + i as f64 * step).collect();
        let zen: Vec<f64> = offsets.iter().map(|o| o.aoa_zen).collect();
        let az: Vec<f64> = offsets.iter().map(|o| o.aoa_az).collect();
        let mut powers = intra_cluster_decay(
            &taus,
            &zen,
            &az,
            cfg.gamma_tau,
            cfg.gamma_theta,
            cfg.gamma_phi,
        );
        let sum: f64 = powers.iter().sum();
        for p in &mut powers {
            *p = *p / sum * c.power;
        }
        rescale_to_delay_spread(&mut taus, &powers, cfg.cluster_ds_s);
        for i in 0..m {
            mpcs.push(place(c, &offsets[i], taus[i], powers[i], n));
        }
    }
    Ok(Snapshot {
        mpcs,
        n_clusters: cfg.n_clusters,
        meta: SnapshotMeta {
            origin: Origin::Modified,
            config: Some(cfg.clone()),
            seed: Some(cfg.seed),
            angle_noise_rad: 0.0,
        },
    })
}

/// Sub-cluster delay offsets (in units of the cluster delay spread) and the
/// sub-cluster of each of the 20 reference rays used for the two strongest clusters.
const SUBCLUSTER_OFFSETS: [f64; 3] = [0.0, 1.28, 2.56];
const RAY_SUBCLUSTER: [usize; 20] = [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 1, 1, 0, 0];

/// Generates the legacy caricature: equal intra-cluster powers and identical
/// intra-cluster TOAs everywhere except the two strongest clusters, which are
/// split into three delayed sub-clusters.
pub fn generate_legacy_snapshot(cfg: &GenConfig) -> Result<Snapshot> {
    cfg.validate()?;
    if cfg.n_clusters < 2 {
        return Err(Error::param("legacy generator needs at least 2 clusters"));
    }
    let clusters = inter_cluster(cfg);
    let mut by_power: Vec<usize> = (0..clusters.len()).collect();
    by_power.sort_by(|&a, &b| clusters[b].power.total_cmp(&clusters[a].power).then(a.cmp(&b)));
    let strongest = [by_power[0], by_power[1]];
    let m = cfg.mpcs_per_cluster;
    let mut mpcs = Vec::with_capacity(cfg.n_clusters * m);
    for (n, c) in clusters.iter().enumerate() {
        let offsets = intra_offsets(cfg, n);
        let p = c.power / m as f64;
        for (i, o) in offsets.iter().enumerate() {
            let tau = if strongest.contains(&n) {
                let ray = i * RAY_SUBCLUSTER.len() / m;
                c.delay + SUBCLUSTER_OFFSETS[RAY_SUBCLUSTER[ray]] * cfg.cluster_ds_s
            } else {
                c.delay
            };
            mpcs.push(place(c, o, tau, p, n));
        }
    }
    Ok(Snapshot {
        mpcs,
        n_clusters: cfg.n_clusters,
        meta: SnapshotMeta {
            origin: Origin::Legacy,
            config: Some(cfg.clone()),
            seed: Some(cfg.seed),
            angle_noise_rad: 0.0,
        },
    })
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma_rad` to
/// every angle. Azimuths are re-wrapped and zeniths reflected into range.
pub fn add_angle_noise(s: &Snapshot, sigma_rad: f64, seed: u64) -> Result<Snapshot> {
    if !(sigma_rad >= 0.0 && sigma_rad.is_finite()) {
        return Err(Error::param(format!("sigma must be non-negative, got {sigma_rad}")));
    }
    let mut out = s.clone();
    out.meta.angle_noise_rad = (s.meta.angle_noise_rad.powi(2) + sigma_rad.powi(2)).sqrt();
    if sigma_rad == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in &mut out.mpcs {
        m.aaod = wrap_azimuth(m.aaod + sigma_rad * gaussian(&mut rng));
        m.zaod = reflect_zenith(m.zaod + sigma_rad * gaussian(&mut rng));
        m.aaoa = wrap_azimuth(m.aaoa + sigma_rad * gaussian(&mut rng));
        m.zaoa = reflect_zenith(m.zaoa + sigma_rad * gaussian(&mut rng));
    }
    Ok(out)
}

/// Wrapped azimuth difference in `(-pi, pi]`.
pub fn azimuth_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, seed: u64) -> GenConfig {
        GenConfig {
            n_clusters: n,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn toa_grid_step_matches_bandwidth() {
        let c = GenConfig::default();
        assert!((1.0 / c.bandwidth_hz - 0.5e-9).abs() < 1e-24);
    }

    #[test]
    fn decay_reaches_one_tenth_at_unit_offsets() {
        let g = LN_10 / 3.0;
        let p = intra_cluster_decay(&[0.0, 0.5, 1.0], &[0.0, 0.2, 1.0], &[0.0, 0.7, 1.0], g, g, g);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!((p[2] / p[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_mpc_decay_is_flat() {
        let g = LN_10 / 3.0;
        assert_eq!(intra_cluster_decay(&[1.0], &[0.3], &[0.2], g, g, g), vec![1.0]);
    }

    #[test]
    fn rescale_keeps_first_path() {
        let mut taus = vec![1e-7, 1.005e-7, 1.01e-7];
        let p = vec![1.0, 0.5, 0.25];
        rescale_to_delay_spread(&mut taus, &p, 5e-9);
        assert_eq!(taus[0], 1e-7);
        assert!((delay_spread(&taus, &p) / 5e-9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn modified_snapshot_contracts() {
        let s = generate_snapshot(&cfg(10, 7)).unwrap();
        let c = s.meta.config.clone().unwrap();
        assert_eq!(s.mpcs.len(), 200);
        let total: f64 = s.powers().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for members in s.cluster_members() {
            assert_eq!(members.len(), 20);
            let taus: Vec<f64> = members.iter().map(|&i| s.mpcs[i].tau).collect();
            let pw: Vec<f64> = members.iter().map(|&i| s.mpcs[i].power).collect();
            assert!((delay_spread(&taus, &pw) / c.cluster_ds_s - 1.0).abs() < 1e-6);
            assert!(taus.windows(2).all(|w| w[1] > w[0]));
        }
        for m in &s.mpcs {
            m.validate().unwrap();
        }
    }

    #[test]
    fn errors_on_empty_config() {
        assert!(generate_snapshot(&cfg(0, 1)).is_err());
        let bad = GenConfig {
            mpcs_per_cluster: 0,
            ..GenConfig::default()
        };
        assert!(generate_snapshot(&bad).is_err());
        assert!(generate_legacy_snapshot(&cfg(1, 1)).is_err());
    }

    #[test]
    fn legacy_spreads_only_two_clusters() {
        let s = generate_legacy_snapshot(&cfg(10, 3)).unwrap();
        let mut spread = 0;
        for members in s.cluster_members() {
            let t0 = s.mpcs[members[0]].tau;
            let p0 = s.mpcs[members[0]].power;
            if members.iter().any(|&i| s.mpcs[i].tau != t0) {
                spread += 1;
            }
            assert!(members.iter().all(|&i| s.mpcs[i].power == p0));
        }
        assert_eq!(spread, 2);
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = generate_snapshot(&cfg(5, 1)).unwrap();
        let n = add_angle_noise(&s, 0.0, 99).unwrap();
        assert_eq!(s.mpcs, n.mpcs);
        assert!(add_angle_noise(&s, -1.0, 0).is_err());
    }

    #[test]
    fn determinism() {
        let a = generate_snapshot(&cfg(12, 42)).unwrap();
        let b = generate_snapshot(&cfg(12, 42)).unwrap();
        assert_eq!(a, b);
        let c = generate_snapshot(&cfg(12, 43)).unwrap();
        assert_ne!(a.mpcs, c.mpcs);
    }

    #[test]
    fn cluster_streams_are_independent_of_cluster_size() {
        let a = generate_snapshot(&cfg(4, 5)).unwrap();
        let b = generate_snapshot(&GenConfig {
            mpcs_per_cluster: 25,
            ..cfg(4, 5)
        })
        .unwrap();
        // first MPC of each cluster draws the same offsets either way
        for n in 0..4 {
            let x = a.mpcs[n * 20];
            let y = b.mpcs[n * 25];
            assert_eq!((x.aaoa, x.zaoa, x.aaod, x.zaod), (y.aaoa, y.zaoa, y.aaod, y.zaod));
        }
    }
}

//! Multipath components and their spherical embedding.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multipath component.
///
/// Angles are in radians, delay in seconds, power linear (|alpha|^2).
/// Azimuths live in `[0, 2pi)` and zeniths in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    pub tau: f64,
    pub power: f64,
    pub aaod: f64,
    pub zaod: f64,
    pub aaoa: f64,
    pub zaoa: f64,
    pub label: Option<u32>,
}

/// Wraps an azimuth into `[0, 2pi)`.
pub fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Reflects a zenith angle into `[0, pi]`.
pub fn reflect_zenith(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    let r = if t > PI { TAU - t } else { t };
    r.clamp(0.0, PI)
}

impl Mpc {
    /// Validated constructor. Azimuths must already be normalized.
    pub fn new(
        tau: f64,
        power: f64,
        aaod: f64,
        zaod: f64,
        aaoa: f64,
        zaoa: f64,
        label: Option<u32>,
    ) -> Result<Self> {
        let mpc = Mpc {
            tau,
            power,
            aaod,
            zaod,
            aaoa,
            zaoa,
            label,
        };
        mpc.validate()?;
        Ok(mpc)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tau", self.tau),
            ("power", self.power),
            ("aaod", self.aaod),
            ("zaod", self.zaod),
            ("aaoa", self.aaoa),
            ("zaoa", self.zaoa),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidMpc(format!("{name} is not finite")));
            }
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidMpc(format!("negative delay {}", self.tau)));
        }
        if self.power < 0.0 {
            return Err(Error::InvalidMpc(format!("negative power {}", self.power)));
        }
        for (name, z) in [("zaod", self.zaod), ("zaoa", self.zaoa)] {
            if !(0.0..=PI).contains(&z) {
                return Err(Error::InvalidMpc(format!("{name} = {z} outside [0, pi]")));
            }
        }
        for (name, a) in [("aaod", self.aaod), ("aaoa", self.aaoa)] {
            if !(0.0..TAU).contains(&a) {
                return Err(Error::InvalidMpc(format!("{name} = {a} outside [0, 2pi)")));
            }
        }
        Ok(())
    }
}

/// Which angle components take part in the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Delay, departure direction, arrival direction (7 coordinates).
    WithAod,
    /// Delay and arrival direction only (4 coordinates).
    WithoutAod,
}

impl Scheme {
    pub fn from_flag(with_aod: bool) -> Self {
        if with_aod {
            Scheme::WithAod
        } else {
            Scheme::WithoutAod
        }
    }

    pub fn with_aod(self) -> bool {
        self == Scheme::WithAod
    }

    pub fn dim(self) -> usize {
        match self {
            Scheme::WithAod => 7,
            Scheme::WithoutAod => 4,
        }
    }

    pub fn from_dim(dim: usize) -> Option<Self> {
        match dim {
            7 => Some(Scheme::WithAod),
            4 => Some(Scheme::WithoutAod),
            _ => None,
        }
    }
}

/// Spherical embedding of an MPC: delay followed by unit direction vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    coords: DVector<f64>,
    scheme: Scheme,
}

impl FeatureVector {
    /// Builds a feature vector from raw coordinates; the length must match `scheme`.
    pub fn from_coords(coords: Vec<f64>, scheme: Scheme) -> Result<Self> {
        if coords.len() != scheme.dim() {
            return Err(Error::DimensionMismatch {
                expected: scheme.dim(),
                got: coords.len(),
            });
        }
        Ok(FeatureVector {
            coords: DVector::from_vec(coords),
            scheme,
        })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

fn direction(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Maps an MPC into the feature space.
///
/// With AOD: `[tau, dir(zaod, aaod), dir(zaoa, aaoa)]`; without AOD the
/// departure direction is dropped.
pub fn embed(mpc: &Mpc, with_aod: bool) -> FeatureVector {
    let rx = direction(mpc.zaoa, mpc.aaoa);
    let coords = if with_aod {
        let tx = direction(mpc.zaod, mpc.aaod);
        vec![mpc.tau, tx[0], tx[1], tx[2], rx[0], rx[1], rx[2]]
    } else {
        vec![mpc.tau, rx[0], rx[1], rx[2]]
    };
    FeatureVector {
        coords: DVector::from_vec(coords),
        scheme: Scheme::from_flag(with_aod),
    }
}

/// Embeds every MPC of a slice.
pub fn embed_all(mpcs: &[Mpc], with_aod: bool) -> Vec<FeatureVector> {
    mpcs.iter().map(|m| embed(m, with_aod)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mpc(tau: f64, aaod: f64, zaod: f64, aaoa: f64, zaoa: f64) -> Mpc {
        Mpc {
            tau,
            power: 1.0,
            aaod,
            zaod,
            aaoa,
            zaoa,
            label: None,
        }
    }

    #[test]
    fn zero_angles_embed_to_poles() {
        let f = embed(&mpc(0.0, 0.0, 0.0, 0.0, 0.0), true);
        assert_eq!(f.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn horizon_without_aod() {
        let f = embed(&mpc(1e-9, 0.0, 0.0, 0.0, PI / 2.0), false);
        let want = [1e-9, 1.0, 0.0, 0.0];
        for (a, b) in f.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(f.scheme(), Scheme::WithoutAod);
    }

    #[test]
    fn azimuth_wraparound_is_close() {
        let d = 1f64.to_radians();
        let a = embed(&mpc(0.0, 0.0, 0.0, d, PI / 2.0), true);
        let b = embed(&mpc(0.0, 0.0, 0.0, TAU - d, PI / 2.0), true);
        let dist = (a.coords() - b.coords()).norm();
        assert!((dist - 2.0 * d.sin()).abs() < 1e-12);
        assert!((dist - 0.034905).abs() < 1e-6);
    }

    #[test]
    fn unit_norm_at_poles() {
        for z in [0.0, PI] {
            let f = embed(&mpc(0.0, 1.0, z, 2.0, z), true);
            let c = f.as_slice();
            let n1 = (c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
            let n2 = (c[4] * c[4] + c[5] * c[5] + c[6] * c[6]).sqrt();
            assert!((n1 - 1.0).abs() < 1e-12 && (n2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_fields() {
        assert!(Mpc::new(-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, None).is_err());
        assert!(Mpc::new(0.0, -1.0, 0.0, 0.0, 0.0, 0.0, None).is_err());
        assert!(Mpc::new(0.0, 1.0, TAU, 0.0, 0.0, 0.0, None).is_err());
        assert!(Mpc::new(0.0, 1.0, 0.0, 0.0, 0.0, 3.2, None).is_err());
        assert!(Mpc::new(0.0, 1.0, 0.0, 0.0, 0.0, f64::NAN, None).is_err());
        assert!(Mpc::new(0.0, 1.0, 6.0, PI, 0.0, 0.0, Some(3)).is_ok());
    }

    #[test]
    fn wrapping_helpers() {
        assert_eq!(wrap_azimuth(-1e-300), 0.0);
        assert!((wrap_azimuth(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_azimuth(TAU + 0.25) - 0.25).abs() < 1e-15);
        assert!((reflect_zenith(-0.3) - 0.3).abs() < 1e-15);
        assert!((reflect_zenith(PI + 0.3) - (PI - 0.3)).abs() < 1e-14);
        assert_eq!(reflect_zenith(PI), PI);
    }
}

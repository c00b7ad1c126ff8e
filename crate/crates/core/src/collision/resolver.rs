//! Resolution of the energy delta function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{self, Result};
use crate::lattice::SampledBand;

/// Gaussian tails beyond this many widths are dropped.
pub const GAUSSIAN_CUTOFF: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Width {
    /// η = η₀ · max|∇ω| / N.
    Relative(f64),
    /// η in frequency units.
    Absolute(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exact1d {
    /// Roots with |∂Δ/∂k| below this are discarded as tangential.
    pub jacobian_floor: f64,
    /// Midpoint nodes for the outer integration variable.
    pub n_outer: usize,
    /// Sign-change scan points for the root search.
    pub n_scan: usize,
}

impl Default for Exact1d {
    fn default() -> Self {
        Self { jacobian_floor: 1e-8, n_outer: 4096, n_scan: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaResolver {
    Gaussian(Width),
    Exact1d(Exact1d),
}

impl Default for DeltaResolver {
    fn default() -> Self {
        DeltaResolver::Gaussian(Width::Relative(2.0))
    }
}

impl DeltaResolver {
    pub fn gaussian(eta0: f64) -> Self {
        DeltaResolver::Gaussian(Width::Relative(eta0))
    }

    pub fn gaussian_width(eta: f64) -> Self {
        DeltaResolver::Gaussian(Width::Absolute(eta))
    }

    pub fn exact_1d() -> Self {
        DeltaResolver::Exact1d(Exact1d::default())
    }

    /// Smearing width on a given grid.
    pub fn eta(&self, band: &SampledBand) -> Result<f64> {
        let eta = match *self {
            DeltaResolver::Gaussian(Width::Absolute(eta)) => eta,
            DeltaResolver::Gaussian(Width::Relative(eta0)) => {
                if !(eta0 > 0.0) {
                    return error::config(format!("eta0 must be positive, got {eta0}"));
                }
                let vmax = band.max_group_velocity();
                if vmax == 0.0 {
                    return error::config("flat band: the relative width is zero, give eta explicitly");
                }
                eta0 * vmax / band.grid().n() as f64
            }
            DeltaResolver::Exact1d(_) => return error::config("exact_1d resolver has no smearing width"),
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return error::config(format!("eta must be positive, got {eta}"));
        }
        Ok(eta)
    }
}

/// δ_η(x) = (2πη²)^{−1/2} e^{−x²/2η²}, zero beyond the cutoff.
#[inline]
pub fn gaussian(x: f64, eta: f64) -> f64 {
    if x.abs() > GAUSSIAN_CUTOFF * eta {
        return 0.0;
    }
    (-(x * x) / (2.0 * eta * eta)).exp() / ((2.0 * PI).sqrt() * eta)
}

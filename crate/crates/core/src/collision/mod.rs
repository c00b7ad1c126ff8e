//! Collision operators: nonlinear 𝒞, the linearized channels L₃, L₄p, L₄t on
//! the grid, the V + I split, the flat generator and exact 1D collision rates.

mod assemble;
pub mod exact;
mod resolver;
mod vertex;

pub use assemble::{Channel, CollisionMatrixL, CollisionModel, Diagnostics};
pub use resolver::{gaussian, DeltaResolver, Exact1d, Width, GAUSSIAN_CUTOFF};
pub use vertex::{DifferenceVertex, Vertex};

use nalgebra::DMatrix;

use crate::equilibrium::OccupationProfile;
use crate::error::{self, Result};

/// V(k) = L_kk / weight and I = L − diag(L), both in operator units.
pub fn v_and_i_split(l: &CollisionMatrixL) -> (Vec<f64>, DMatrix<f64>) {
    let op = l.operator();
    let v: Vec<f64> = (0..op.nrows()).map(|i| op[(i, i)].max(0.0)).collect();
    let mut i_part = op;
    for k in 0..v.len() {
        i_part[(k, k)] = 0.0;
    }
    (v, i_part)
}

/// A = −L M^{−1} with M = diag(W W̃).
pub fn flat_generator(l: &CollisionMatrixL, w: &OccupationProfile) -> Result<DMatrix<f64>> {
    if w.len() != l.len() {
        return Err(crate::Error::Dimension(format!("occupation has {} nodes, operator {}", w.len(), l.len())));
    }
    if w.statistics != l.statistics {
        return error::config("occupation statistics differ from the operator's");
    }
    let m = w.weight();
    if let Some(i) = m.iter().position(|&x| !(x > 0.0)) {
        return error::domain(format!("singular fluctuation weight at node {i}"));
    }
    let mut a = l.operator();
    for (c, mc) in m.iter().enumerate() {
        a.column_mut(c).scale_mut(-1.0 / mc);
    }
    Ok(a)
}

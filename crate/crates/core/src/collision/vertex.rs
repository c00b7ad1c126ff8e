//! Anharmonic vertices. An on-site vertex contributes only the Π(2ω_j)^{-1}
//! rate absorbed in the channel prefactor; a difference vertex multiplies it by
//! |Σ_x α_n(x) Π_j (e^{i2π s_j k_j·x} − 1)|².

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{self, Result};
use crate::lattice::{dot, symmetric_table, BZGrid, Parity};

#[derive(Clone, Debug, PartialEq)]
pub enum Vertex {
    Onsite { order: usize },
    Difference(DifferenceVertex),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceVertex {
    order: usize,
    dim: usize,
    alpha: Vec<(Vec<i64>, f64)>,
}

impl DifferenceVertex {
    /// Cubic table α₃, completed to an odd function.
    pub fn cubic(dim: usize, pairs: impl IntoIterator<Item = (Vec<i64>, f64)>) -> Result<Self> {
        let alpha = symmetric_table(dim, pairs, Parity::Odd, "alpha3")?;
        Ok(Self { order: 3, dim, alpha })
    }

    /// Quartic table α₄, completed to an even function.
    pub fn quartic(dim: usize, pairs: impl IntoIterator<Item = (Vec<i64>, f64)>) -> Result<Self> {
        let alpha = symmetric_table(dim, pairs, Parity::Even, "alpha4")?;
        Ok(Self { order: 4, dim, alpha })
    }

    /// FPU-β: V₄di = ¼ Σ_x (q_{x+1} − q_x)⁴, i.e. α₄(±1) = 1/2.
    pub fn fpu_beta() -> Self {
        Self::quartic(1, [(vec![1], 0.5)]).expect("valid table")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> &[(Vec<i64>, f64)] {
        &self.alpha
    }
}

impl Vertex {
    pub fn onsite_cubic() -> Self {
        Vertex::Onsite { order: 3 }
    }

    pub fn onsite_quartic() -> Self {
        Vertex::Onsite { order: 4 }
    }

    pub fn order(&self) -> usize {
        match self {
            Vertex::Onsite { order } => *order,
            Vertex::Difference(v) => v.order,
        }
    }

    pub fn is_difference(&self) -> bool {
        matches!(self, Vertex::Difference(_))
    }

    pub(crate) fn check(&self, order: usize, dim: usize) -> Result<()> {
        if self.order() != order {
            return error::config(format!("channel needs an order-{order} vertex, got order {}", self.order()));
        }
        if let Vertex::Difference(v) = self {
            if v.dim != dim {
                return error::config(format!("vertex table has dimension {}, band has {dim}", v.dim));
            }
        }
        Ok(())
    }

    /// Multiplicative factor relative to the on-site vertex for signed
    /// momenta (s_j, k_j).
    pub fn factor(&self, momenta: &[(f64, &[f64])]) -> f64 {
        match self {
            Vertex::Onsite { .. } => 1.0,
            Vertex::Difference(v) => {
                let mut sum = Complex64::new(0.0, 0.0);
                for (x, a) in &v.alpha {
                    let mut prod = Complex64::new(*a, 0.0);
                    for (s, k) in momenta {
                        let phase = 2.0 * PI * s * dot(k, x);
                        prod *= Complex64::new(phase.cos() - 1.0, phase.sin());
                    }
                    sum += prod;
                }
                sum.norm_sqr()
            }
        }
    }
}

/// Vertex factors tabulated on a grid: z[x][i] = e^{i2πk_i·x} − 1.
pub(crate) struct VertexTable {
    alpha: Vec<f64>,
    z: Vec<Vec<Complex64>>,
}

impl VertexTable {
    pub(crate) fn new(vertex: &Vertex, grid: &BZGrid) -> Option<Self> {
        let Vertex::Difference(v) = vertex else {
            return None;
        };
        let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node(i)).collect();
        let z = v
            .alpha
            .iter()
            .map(|(x, _)| {
                nodes
                    .iter()
                    .map(|k| {
                        let p = 2.0 * PI * dot(k, x);
                        Complex64::new(p.cos() - 1.0, p.sin())
                    })
                    .collect()
            })
            .collect();
        Some(Self { alpha: v.alpha.iter().map(|(_, a)| *a).collect(), z })
    }

    /// |Σ_x α(x) Π_j z_x(s_j k_j)|²; a negative sign conjugates the phase.
    #[inline]
    pub(crate) fn factor(&self, idx: &[usize], sign: &[i8]) -> f64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (a, zx) in self.alpha.iter().zip(&self.z) {
            let mut prod = Complex64::new(*a, 0.0);
            for (&i, &s) in idx.iter().zip(sign) {
                let z = zx[i];
                prod *= if s > 0 { z } else { z.conj() };
            }
            sum += prod;
        }
        sum.norm_sqr()
    }
}

//! Naive all-tuples oracles for the assembled operators, written straight
//! from the collision integrals with none of the assembly shortcuts.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use phkin::collision::{CollisionModel, DeltaResolver, Vertex};
use phkin::equilibrium::{occupation_at, occupation_tilde_at, Statistics};
use phkin::lattice::{BZGrid, Dispersion};

pub fn wrap(k: f64) -> f64 {
    k - (k + 0.5).floor()
}

pub fn node_of(grid: &BZGrid, k: &[f64]) -> usize {
    let n = grid.n() as f64;
    let m: Vec<usize> = k.iter().map(|&x| ((wrap(x) + 0.5) * n - 0.5).round() as usize % grid.n()).collect();
    grid.index_of(&m)
}

pub fn delta(x: f64, eta: f64) -> f64 {
    if x.abs() > 10.0 * eta {
        0.0
    } else {
        (-x * x / (2.0 * eta * eta)).exp() / (eta * (2.0 * PI).sqrt())
    }
}

/// Adds r·(Σ cᵢ e_{idxᵢ})(Σ cⱼ e_{idxⱼ})ᵀ entry by entry, without merging.
pub fn add_tuple(q: &mut DMatrix<f64>, idx: &[usize], coef: &[f64], r: f64) {
    for (a, ca) in idx.iter().zip(coef) {
        for (b, cb) in idx.iter().zip(coef) {
            q[(*a, *b)] += r * ca * cb;
        }
    }
}

#[derive(Clone)]
pub struct Setup {
    pub disp: Dispersion,
    pub grid: BZGrid,
    pub beta: f64,
    pub stats: Statistics,
    pub vertex: Vertex,
    pub eta: f64,
}

impl Setup {
    fn om(&self, i: usize) -> f64 {
        self.disp.omega(&self.grid.node(i))
    }
    fn w(&self, i: usize) -> f64 {
        occupation_at(self.om(i), self.beta, self.stats)
    }
    fn wt(&self, i: usize) -> f64 {
        occupation_tilde_at(self.om(i), self.beta, self.stats)
    }
    pub fn model(&self) -> CollisionModel {
        let band = self.disp.sample(&self.grid).unwrap();
        CollisionModel::new(band, self.beta, self.stats, self.vertex.clone(), DeltaResolver::gaussian_width(self.eta))
            .unwrap()
    }
}

/// ⟨g, L₃ f⟩ = (π/2) Σ w² 2^{−d} δ_η(ω₁+ω₂−ω₃) |V|² W₁W₂W̃₃/(ω₁ω₂ω₃)(f₁+f₂−f₃)(g₁+g₂−g₃),
/// with k₃ every node at k₁ + k₂ ± half a spacing per axis.
pub fn l3_oracle(s: &Setup) -> DMatrix<f64> {
    let m = s.grid.len();
    let d = s.grid.dim();
    let h = 0.5 / s.grid.n() as f64;
    let w = s.grid.weight();
    let mut q = DMatrix::zeros(m, m);
    for i1 in 0..m {
        for i2 in 0..m {
            for mask in 0..(1usize << d) {
                let (k1, k2) = (s.grid.node(i1), s.grid.node(i2));
                let k3: Vec<f64> = (0..d).map(|j| k1[j] + k2[j] + if mask >> j & 1 == 1 { h } else { -h }).collect();
                let i3 = node_of(&s.grid, &k3);
                let k3 = s.grid.node(i3);
                let vf = s.vertex.factor(&[(1.0, &k1), (1.0, &k2), (-1.0, &k3)]);
                let r = PI / 2.0 * w * w / (1 << d) as f64 * delta(s.om(i1) + s.om(i2) - s.om(i3), s.eta) * vf
                    / (s.om(i1) * s.om(i2) * s.om(i3))
                    * s.w(i1)
                    * s.w(i2)
                    * s.wt(i3);
                add_tuple(&mut q, &[i1, i2, i3], &[1.0, 1.0, -1.0], r);
            }
        }
    }
    q
}

/// L₄p with k₄ = k₁ + k₂ − k₃, which lands exactly on a node of the shifted grid.
pub fn l4p_oracle(s: &Setup) -> DMatrix<f64> {
    let m = s.grid.len();
    let d = s.grid.dim();
    let w = s.grid.weight();
    let mut q = DMatrix::zeros(m, m);
    for i1 in 0..m {
        for i2 in 0..m {
            for i3 in 0..m {
                let (k1, k2, k3) = (s.grid.node(i1), s.grid.node(i2), s.grid.node(i3));
                let k4: Vec<f64> = (0..d).map(|j| k1[j] + k2[j] - k3[j]).collect();
                let i4 = node_of(&s.grid, &k4);
                let k4 = s.grid.node(i4);
                let vf = s.vertex.factor(&[(1.0, &k1), (1.0, &k2), (-1.0, &k3), (-1.0, &k4)]);
                let r = 9.0 * PI / 16.0 * w.powi(3) * delta(s.om(i1) + s.om(i2) - s.om(i3) - s.om(i4), s.eta) * vf
                    / (s.om(i1) * s.om(i2) * s.om(i3) * s.om(i4))
                    * s.w(i1)
                    * s.w(i2)
                    * s.wt(i3)
                    * s.wt(i4);
                add_tuple(&mut q, &[i1, i2, i3, i4], &[1.0, 1.0, -1.0, -1.0], r);
            }
        }
    }
    q
}

pub fn max_relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax();
    assert!(scale > 0.0, "oracle matrix is empty");
    (a - b).amax() / scale
}

//! Harmonic crystal on ℤ^d: elastic constants, dispersion relation and the
//! discretized Brillouin zone 𝕋^d = [-1/2, 1/2]^d.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

/// Tolerance used when checking the acoustic sum rule and grid stability.
const SUM_RULE_TOL: f64 = 1e-12;

/// Finite-range elastic constants α(x) with α(-x) = α(x).
///
/// Entries are stored for both x and -x, sorted lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticConstants {
    dim: usize,
    entries: Vec<(Vec<i64>, f64)>,
}

impl ElasticConstants {
    /// Builds the table from (offset, value) pairs. Missing partners -x are
    /// filled in; a partner given with a different value is rejected.
    pub fn new(dim: usize, pairs: impl IntoIterator<Item = (Vec<i64>, f64)>) -> Result<Self> {
        let entries = symmetric_table(dim, pairs, Parity::Even, "elastic constants")?;
        Ok(Self { dim, entries })
    }

    /// Nearest-neighbour constants on ℤ^d: α(0) = d, α(±e_j) = -1/2, so that
    /// α̂(k) = Σ_j (1 - cos 2πk_j).
    pub fn nearest_neighbor(dim: usize) -> Self {
        let mut pairs = vec![(vec![0; dim], dim as f64)];
        for j in 0..dim {
            let mut x = vec![0; dim];
            x[j] = 1;
            pairs.push((x, -0.5));
        }
        Self::new(dim, pairs).expect("nearest-neighbour table is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(Vec<i64>, f64)] {
        &self.entries
    }

    /// Σ_x α(x). Zero for an acoustic (translation invariant) table.
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, a)| a).sum()
    }

    pub fn is_acoustic(&self) -> bool {
        let scale = self.entries.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
        self.sum().abs() <= SUM_RULE_TOL * scale.max(1.0)
    }

    /// α̂(k) = Σ_x α(x) cos(2π k·x).
    pub fn hat(&self, k: &[f64]) -> f64 {
        debug_assert_eq!(k.len(), self.dim);
        self.entries.iter().map(|(x, a)| a * (2.0 * PI * dot(k, x)).cos()).sum()
    }

    /// ∇α̂(k) = -2π Σ_x x α(x) sin(2π k·x).
    pub fn grad_hat(&self, k: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (x, a) in &self.entries {
            let s = a * (2.0 * PI * dot(k, x)).sin();
            for (gj, &xj) in g.iter_mut().zip(x) {
                *gj -= 2.0 * PI * xj as f64 * s;
            }
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Parity {
    Even,
    Odd,
}

/// Validates an offset table and completes it under x ↦ -x with the given parity.
pub(crate) fn symmetric_table(
    dim: usize,
    pairs: impl IntoIterator<Item = (Vec<i64>, f64)>,
    parity: Parity,
    what: &str,
) -> Result<Vec<(Vec<i64>, f64)>> {
    if dim == 0 {
        return error::config(format!("{what}: dimension must be positive"));
    }
    let mut entries: Vec<(Vec<i64>, f64)> = Vec::new();
    let mut insert = |x: Vec<i64>, v: f64| -> Result<()> {
        match entries.iter().find(|(y, _)| *y == x) {
            Some((_, w)) if *w != v => {
                error::config(format!("{what}: offset {x:?} given inconsistent values {w} and {v}"))
            }
            Some(_) => Ok(()),
            None => {
                entries.push((x, v));
                Ok(())
            }
        }
    };
    for (x, v) in pairs {
        if x.len() != dim {
            return error::config(format!("{what}: offset {x:?} has {} components, expected {dim}", x.len()));
        }
        if !v.is_finite() {
            return error::config(format!("{what}: value at {x:?} is not finite"));
        }
        let neg: Vec<i64> = x.iter().map(|c| -c).collect();
        if neg == x {
            if parity == Parity::Odd && v != 0.0 {
                return error::config(format!("{what}: odd table must vanish at the origin"));
            }
            insert(x, v)?;
        } else {
            let partner = match parity {
                Parity::Even => v,
                Parity::Odd => -v,
            };
            insert(x, v)?;
            insert(neg, partner)?;
        }
    }
    entries.retain(|(_, v)| *v != 0.0);
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(entries)
}

pub(crate) fn dot(k: &[f64], x: &[i64]) -> f64 {
    k.iter().zip(x).map(|(a, &b)| a * b as f64).sum()
}

/// Dispersion relation ω(k) = (ω₀² + α̂(k))^{1/2}.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispersion {
    elastic: ElasticConstants,
    omega0: f64,
}

impl Dispersion {
    pub fn new(elastic: ElasticConstants, omega0: f64) -> Result<Self> {
        if !(omega0 >= 0.0 && omega0.is_finite()) {
            return error::config(format!("omega0 must be finite and non-negative, got {omega0}"));
        }
        Ok(Self { elastic, omega0 })
    }

    /// Nearest-neighbour chain with α(0)=1, α(±1)=-1/2: ω(k) = (ω₀² + 1 - cos 2πk)^{1/2}.
    pub fn fpu(omega0: f64) -> Result<Self> {
        Self::new(ElasticConstants::nearest_neighbor(1), omega0)
    }

    pub fn dim(&self) -> usize {
        self.elastic.dim()
    }

    pub fn elastic(&self) -> &ElasticConstants {
        &self.elastic
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn omega(&self, k: &[f64]) -> f64 {
        (self.omega0 * self.omega0 + self.elastic.hat(k)).max(0.0).sqrt()
    }

    /// ∇ω = ∇α̂ / (2ω).
    pub fn grad_omega(&self, k: &[f64]) -> Result<Vec<f64>> {
        let w = self.omega(k);
        if w <= 0.0 {
            return error::domain(format!("acoustic band edge singularity at k = {k:?}"));
        }
        Ok(self.elastic.grad_hat(k).into_iter().map(|g| g / (2.0 * w)).collect())
    }

    /// Tabulates ω and ∇ω on a grid, checking α̂ ≥ 0 and ω > 0 at every node.
    pub fn sample(&self, grid: &BZGrid) -> Result<SampledBand> {
        if grid.dim() != self.dim() {
            return Err(Error::Dimension(format!("grid has dimension {}, dispersion {}", grid.dim(), self.dim())));
        }
        let d = grid.dim();
        let mut omega = Vec::with_capacity(grid.len());
        let mut grad = Vec::with_capacity(grid.len() * d);
        let scale = self.elastic.entries().iter().map(|(_, a)| a.abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..grid.len() {
            let k = grid.node(i);
            let ah = self.elastic.hat(&k);
            if ah < -SUM_RULE_TOL * scale {
                return error::domain(format!("mechanically unstable: alpha_hat({k:?}) = {ah:.3e} < 0"));
            }
            omega.push(self.omega(&k));
            grad.extend(self.grad_omega(&k)?);
        }
        Ok(SampledBand { grid: grid.clone(), dispersion: self.clone(), omega, grad })
    }
}

/// Uniform half-shifted grid on 𝕋^d: k_j = (m_j + 1/2)/N - 1/2, m_j ∈ {0..N-1}.
///
/// Nodes are ordered lexicographically in (m_0, ..., m_{d-1}) with the last
/// axis varying fastest. Internally nodes are also addressed by their
/// doubled coordinates K_j = 2m_j + 1 - N (odd integers), so that k_j = K_j/(2N).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BZGrid {
    dim: usize,
    n: usize,
}

impl BZGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 {
            return error::config("grid dimension must be positive");
        }
        if n < 2 || n % 2 != 0 {
            return error::config(format!("N must be even and at least 2, got {n}"));
        }
        if (n as u128).pow(dim as u32) > u32::MAX as u128 {
            return error::config(format!("grid {n}^{dim} is too large"));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes N^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight N^{-d}.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim];
        for j in (0..self.dim).rev() {
            m[j] = i % self.n;
            i /= self.n;
        }
        m
    }

    pub fn index_of(&self, m: &[usize]) -> usize {
        m.iter().fold(0, |acc, &mj| acc * self.n + mj)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).into_iter().map(|m| (m as f64 + 0.5) / self.n as f64 - 0.5).collect()
    }

    /// Index of the node -k (m ↦ N-1-m on every axis).
    pub fn negate(&self, i: usize) -> usize {
        let m: Vec<usize> = self.multi_index(i).into_iter().map(|m| self.n - 1 - m).collect();
        self.index_of(&m)
    }

    pub fn doubled(&self, i: usize) -> Vec<i64> {
        let n = self.n as i64;
        self.multi_index(i).into_iter().map(|m| 2 * m as i64 + 1 - n).collect()
    }

    /// Node index for doubled coordinates (taken mod 2N). Every component
    /// must be odd; even components lie halfway between nodes.
    pub fn from_doubled(&self, kk: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &c in kk {
            if c.rem_euclid(2) == 0 {
                return None;
            }
            let m = (c + n - 1).rem_euclid(2 * n) / 2;
            idx = idx * self.n + m as usize;
        }
        Some(idx)
    }
}

/// ω and ∇ω tabulated on a [`BZGrid`].
#[derive(Clone, Debug)]
pub struct SampledBand {
    grid: BZGrid,
    dispersion: Dispersion,
    omega: Vec<f64>,
    grad: Vec<f64>,
}

impl SampledBand {
    pub fn grid(&self) -> &BZGrid {
        &self.grid
    }

    pub fn dispersion(&self) -> &Dispersion {
        &self.dispersion
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn grad(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.grad[i * d..(i + 1) * d]
    }

    /// ℓ·∇ω at every node.
    pub fn directional_velocity(&self, ell: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.grad(i).iter().zip(ell).map(|(g, l)| g * l).sum()).collect()
    }

    /// max_k |∇ω(k)| over the nodes.
    pub fn max_group_velocity(&self) -> f64 {
        (0..self.len()).map(|i| self.grad(i).iter().map(|g| g * g).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    pub fn max_omega(&self) -> f64 {
        self.omega.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_omega(&self) -> f64 {
        self.omega.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Grid inner product ⟨f, g⟩ = N^{-d} Σ_k f(k) g(k).
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.grid.weight() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Named model presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// d=1 nearest-neighbour chain, α(0)=1, α(±1)=-1/2.
    Fpu,
    /// Nearest-neighbour band in d dimensions with an on-site gap ω₀ > 0.
    NnOptical,
    /// FPU chain with ω₀ = 0 and the quartic difference nonlinearity.
    FpuBeta,
    /// Per axis α(±e_j)=-1/2, α(±2e_j)=1/8, α(0)=3d/4, so α̂ = 2 Σ_j sin⁴ πk_j, with a gap.
    /// Convex enough at small k to admit three-phonon processes.
    ConvexOptical,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fpu => "fpu",
            Preset::NnOptical => "nn-optical",
            Preset::FpuBeta => "fpu-beta",
            Preset::ConvexOptical => "convex-optical",
        }
    }

    pub fn default_omega0(self) -> f64 {
        match self {
            Preset::Fpu | Preset::FpuBeta => 0.0,
            Preset::NnOptical => 1.0,
            Preset::ConvexOptical => 0.3,
        }
    }

    pub fn elastic(self, dim: usize) -> Result<ElasticConstants> {
        match self {
            Preset::NnOptical => Ok(ElasticConstants::nearest_neighbor(dim)),
            Preset::Fpu | Preset::FpuBeta if dim != 1 => {
                error::config(format!("preset {} is one-dimensional, got d = {dim}", self.name()))
            }
            Preset::Fpu | Preset::FpuBeta => Ok(ElasticConstants::nearest_neighbor(1)),
            Preset::ConvexOptical => {
                let mut pairs = vec![(vec![0; dim], 0.75 * dim as f64)];
                for j in 0..dim {
                    let mut e = vec![0; dim];
                    e[j] = 1;
                    pairs.push((e.clone(), -0.5));
                    e[j] = 2;
                    pairs.push((e, 0.125));
                }
                ElasticConstants::new(dim, pairs)
            }
        }
    }

    pub fn dispersion(self, dim: usize, omega0: Option<f64>) -> Result<Dispersion> {
        let omega0 = omega0.unwrap_or(self.default_omega0());
        if self == Preset::NnOptical && omega0 <= 0.0 {
            return error::config("preset nn-optical requires omega0 > 0");
        }
        Dispersion::new(self.elastic(dim)?, omega0)
    }
}

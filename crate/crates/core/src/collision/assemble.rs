use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resolver::{gaussian, DeltaResolver};
use super::vertex::{Vertex, VertexTable};
use crate::equilibrium::{equilibrium, OccupationProfile, Statistics};
use crate::error::{self, Error, Result};
use crate::lattice::{BZGrid, SampledBand};
use crate::linalg::SymEigen;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    L3,
    L4p,
    L4t,
    Sum,
}

impl Channel {
    pub fn tag(self) -> u8 {
        match self {
            Channel::L3 => 1,
            Channel::L4p => 2,
            Channel::L4t => 3,
            Channel::Sum => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Channel::L3),
            2 => Some(Channel::L4p),
            3 => Some(Channel::L4t),
            4 => Some(Channel::Sum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::L3 => "L3",
            Channel::L4p => "L4p",
            Channel::L4t => "L4t",
            Channel::Sum => "sum",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Tuples that passed the energy cutoff.
    pub tuples: u64,
    /// Acoustic band: continuum convergence near k = 0 is not guaranteed.
    pub acoustic_warning: bool,
}

/// Linearized collision operator on a grid.
///
/// `form` is the quadratic-form matrix, gᵀ·form·f = ⟨g, L f⟩ with the grid
/// quadrature built in. The operator acting on nodal values is form / weight.
#[derive(Clone, Debug)]
pub struct CollisionMatrixL {
    pub channel: Channel,
    pub form: DMatrix<f64>,
    pub grid: BZGrid,
    pub statistics: Statistics,
    pub beta: f64,
    pub eta: f64,
    pub diagnostics: Diagnostics,
}

impl CollisionMatrixL {
    pub fn len(&self) -> usize {
        self.form.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.form.nrows() == 0
    }

    pub fn operator(&self) -> DMatrix<f64> {
        &self.form / self.grid.weight()
    }

    /// (L f) at every node.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(f);
        (&self.form * v / self.grid.weight()).iter().cloned().collect()
    }

    /// ‖L‖₂ in operator units.
    pub fn norm(&self) -> Result<f64> {
        Ok(SymEigen::new(&self.form)?.spectral_radius() / self.grid.weight())
    }

    /// ‖L f‖ / (‖L‖ ‖f‖) with Euclidean nodal norms.
    pub fn invariant_residual(&self, f: &[f64]) -> Result<f64> {
        let norm = self.norm()?;
        if norm == 0.0 {
            return Ok(0.0);
        }
        let lf = self.apply(f);
        let a = lf.iter().map(|x| x * x).sum::<f64>().sqrt();
        let b = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(a / (norm * b))
    }

    pub fn sum(parts: &[&CollisionMatrixL]) -> Result<CollisionMatrixL> {
        let first = parts.first().ok_or_else(|| Error::Config("empty channel list".into()))?;
        let mut form = first.form.clone();
        let mut diagnostics = first.diagnostics.clone();
        for p in &parts[1..] {
            if p.grid != first.grid || p.statistics != first.statistics || p.beta != first.beta {
                return error::config("cannot add operators built on different grids or states");
            }
            form += &p.form;
            diagnostics.tuples += p.diagnostics.tuples;
            diagnostics.acoustic_warning |= p.diagnostics.acoustic_warning;
        }
        let channel = if parts.len() == 1 { first.channel } else { Channel::Sum };
        Ok(CollisionMatrixL { channel, form, diagnostics, ..(*first).clone() })
    }
}

/// Everything needed to assemble collision operators for one band and state.
#[derive(Clone, Debug)]
pub struct CollisionModel {
    band: SampledBand,
    occupation: OccupationProfile,
    vertex: Vertex,
    eta: f64,
    workers: usize,
}

impl CollisionModel {
    /// Gaussian resolver only: exact_1d applies to off-grid rates (see [`super::exact`]).
    pub fn new(
        band: SampledBand,
        beta: f64,
        statistics: Statistics,
        vertex: Vertex,
        resolver: DeltaResolver,
    ) -> Result<Self> {
        let occupation = equilibrium(&band, beta, statistics)?;
        let eta = match resolver {
            DeltaResolver::Gaussian(_) => resolver.eta(&band)?,
            DeltaResolver::Exact1d(_) => {
                return error::config("exact_1d resolves off-grid rates only; grid operators need a gaussian resolver")
            }
        };
        if let Vertex::Difference(v) = &vertex {
            if v.dim() != band.dim() {
                return error::config("vertex and band dimensions differ");
            }
        }
        Ok(Self { band, occupation, vertex, eta, workers: rayon::current_num_threads() })
    }

    /// Number of partial matrices; fixes the reduction order.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn band(&self) -> &SampledBand {
        &self.band
    }

    pub fn occupation(&self) -> &OccupationProfile {
        &self.occupation
    }

    pub fn vertex(&self) -> &Vertex {
        &self.vertex
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn acoustic(&self) -> bool {
        self.band.dispersion().omega0() == 0.0
    }

    fn finish(&self, channel: Channel, form: Vec<f64>, tuples: u64) -> CollisionMatrixL {
        let m = self.band.len();
        CollisionMatrixL {
            channel,
            form: DMatrix::from_row_slice(m, m, &form),
            grid: self.band.grid().clone(),
            statistics: self.occupation.statistics,
            beta: self.occupation.beta,
            eta: self.eta,
            diagnostics: Diagnostics { tuples, acoustic_warning: self.acoustic() },
        }
    }

    /// Three-phonon channel, pattern (1, 1, −1), weight W₁W₂W̃₃ on ω₁+ω₂ = ω₃.
    pub fn l3(&self) -> Result<CollisionMatrixL> {
        self.vertex.check(3, self.band.dim())?;
        let grid = self.band.grid();
        let d = grid.dim();
        let m = grid.len();
        let w = grid.weight();
        let om = self.band.omega();
        let occ = &self.occupation.values;
        let occ_t = self.occupation.tilde().values;
        let table = VertexTable::new(&self.vertex, grid);
        let doubled = doubled_table(grid);
        let shifts = neighbour_shifts(d);
        let pref = PI / 2.0 * w * w / shifts.len() as f64;
        let eta = self.eta;

        let (form, tuples) = accumulate(m, self.workers, |i1, emit| {
            let k1 = &doubled[i1 * d..(i1 + 1) * d];
            let mut k3 = vec![0i64; d];
            for i2 in 0..m {
                let k2 = &doubled[i2 * d..(i2 + 1) * d];
                for s in &shifts {
                    for j in 0..d {
                        k3[j] = k1[j] + k2[j] + s[j];
                    }
                    let i3 = grid.from_doubled(&k3).expect("odd doubled coordinate");
                    let g = gaussian(om[i1] + om[i2] - om[i3], eta);
                    if g == 0.0 {
                        continue;
                    }
                    let idx = [i1, i2, i3];
                    let vf = table.as_ref().map_or(1.0, |t| t.factor(&idx, &[1, 1, -1]));
                    let r = pref * g / (om[i1] * om[i2] * om[i3]) * occ[i1] * occ[i2] * occ_t[i3] * vf;
                    emit(&idx, &[1.0, 1.0, -1.0], r);
                }
            }
        });
        Ok(self.finish(Channel::L3, form, tuples))
    }

    /// Pair channel L₄p: pattern (1, 1, −1, −1), weight W₁W₂W̃₃W̃₄ on ω₁+ω₂ = ω₃+ω₄.
    pub fn l4p(&self) -> Result<CollisionMatrixL> {
        self.l4_channel(Channel::L4p)
    }

    /// Triplet channel L₄t: pattern (1, 1, 1, −1), weight W₁W₂W₃W̃₄ on ω₁+ω₂+ω₃ = ω₄.
    pub fn l4t(&self) -> Result<CollisionMatrixL> {
        self.l4_channel(Channel::L4t)
    }

    pub fn l4(&self) -> Result<(CollisionMatrixL, CollisionMatrixL)> {
        Ok((self.l4p()?, self.l4t()?))
    }

    fn l4_channel(&self, channel: Channel) -> Result<CollisionMatrixL> {
        self.vertex.check(4, self.band.dim())?;
        let grid = self.band.grid();
        let d = grid.dim();
        let n = grid.n();
        let m = grid.len();
        let w = grid.weight();
        let om = self.band.omega();
        let occ = &self.occupation.values;
        let occ_t = self.occupation.tilde().values;
        let table = VertexTable::new(&self.vertex, grid);
        let multi: Vec<usize> = (0..m).flat_map(|i| grid.multi_index(i)).collect();
        let eta = self.eta;
        let pair = channel == Channel::L4p;
        let (pref, sign, coef): (f64, [i8; 4], [f64; 4]) = if pair {
            (9.0 * PI / 16.0, [1, 1, -1, -1], [1.0, 1.0, -1.0, -1.0])
        } else {
            (3.0 * PI / 4.0, [1, 1, 1, -1], [1.0, 1.0, 1.0, -1.0])
        };
        let pref = pref * w * w * w;
        // third-slot weight: W̃ for pairs, W for triplets
        let occ3: &[f64] = if pair { &occ_t } else { occ };

        let (form, tuples) = accumulate(m, self.workers, |i1, emit| {
            let m1 = &multi[i1 * d..(i1 + 1) * d];
            for i2 in 0..m {
                let m2 = &multi[i2 * d..(i2 + 1) * d];
                let e12 = om[i1] + om[i2];
                for i3 in 0..m {
                    let m3 = &multi[i3 * d..(i3 + 1) * d];
                    let mut i4 = 0usize;
                    for j in 0..d {
                        let c = if pair { (m1[j] + m2[j] + n - m3[j]) % n } else { (m1[j] + m2[j] + m3[j] + 1) % n };
                        i4 = i4 * n + c;
                    }
                    let delta = if pair { e12 - om[i3] - om[i4] } else { e12 + om[i3] - om[i4] };
                    let g = gaussian(delta, eta);
                    if g == 0.0 {
                        continue;
                    }
                    let idx = [i1, i2, i3, i4];
                    let vf = table.as_ref().map_or(1.0, |t| t.factor(&idx, &sign));
                    let r =
                        pref * g / (om[i1] * om[i2] * om[i3] * om[i4]) * occ[i1] * occ[i2] * occ3[i3] * occ_t[i4] * vf;
                    emit(&idx, &coef, r);
                }
            }
        });
        Ok(self.finish(channel, form, tuples))
    }

    pub fn build(&self, channel: Channel) -> Result<CollisionMatrixL> {
        match channel {
            Channel::L3 => self.l3(),
            Channel::L4p => self.l4p(),
            Channel::L4t => self.l4t(),
            Channel::Sum => error::config("build the channels separately and add them"),
        }
    }

    /// 𝒞(W) at every node for the three-phonon vertex, both branches.
    pub fn nonlinear(&self, wp: &OccupationProfile) -> Result<Vec<f64>> {
        self.vertex.check(3, self.band.dim())?;
        let grid = self.band.grid();
        if wp.len() != grid.len() {
            return Err(Error::Dimension("occupation length differs from the grid".into()));
        }
        if let Some(i) = wp.values.iter().position(|&x| !(x > 0.0)) {
            return error::domain(format!("occupation must be positive, fails at node {i}"));
        }
        let d = grid.dim();
        let m = grid.len();
        let om = self.band.omega();
        let wv = &wp.values;
        let wt = wp.tilde().values;
        let classical = wp.statistics == Statistics::Classical;
        let table = VertexTable::new(&self.vertex, grid);
        let doubled = doubled_table(grid);
        let shifts = neighbour_shifts(d);
        let pref = PI / 2.0 * grid.weight() / shifts.len() as f64;
        let eta = self.eta;

        let out = (0..m)
            .into_par_iter()
            .map(|i1| {
                let k1 = &doubled[i1 * d..(i1 + 1) * d];
                let mut k3 = vec![0i64; d];
                let mut acc = 0.0;
                for i2 in 0..m {
                    let k2 = &doubled[i2 * d..(i2 + 1) * d];
                    for s in &shifts {
                        // branch 1: k₁ + k₂ → k₃
                        for j in 0..d {
                            k3[j] = k1[j] + k2[j] + s[j];
                        }
                        let i3 = grid.from_doubled(&k3).expect("odd");
                        let g = gaussian(om[i1] + om[i2] - om[i3], eta);
                        if g != 0.0 {
                            let (w1, w2, w3) = (wv[i1], wv[i2], wv[i3]);
                            let gain_loss = if classical {
                                w1 * w3 + w2 * w3 - w1 * w2
                            } else {
                                wt[i1] * wt[i2] * w3 - w1 * w2 * wt[i3]
                            };
                            let vf = table.as_ref().map_or(1.0, |t| t.factor(&[i1, i2, i3], &[1, 1, -1]));
                            acc += 2.0 * g * vf * gain_loss / (om[i1] * om[i2] * om[i3]);
                        }
                        // branch 2: k₁ → k₂ + k₃
                        for j in 0..d {
                            k3[j] = k1[j] - k2[j] + s[j];
                        }
                        let i3 = grid.from_doubled(&k3).expect("odd");
                        let g = gaussian(om[i1] - om[i2] - om[i3], eta);
                        if g != 0.0 {
                            let (w1, w2, w3) = (wv[i1], wv[i2], wv[i3]);
                            let gain_loss = if classical {
                                w2 * w3 - w1 * w2 - w1 * w3
                            } else {
                                wt[i1] * w2 * w3 - w1 * wt[i2] * wt[i3]
                            };
                            let vf = table.as_ref().map_or(1.0, |t| t.factor(&[i1, i2, i3], &[1, -1, -1]));
                            acc += g * vf * gain_loss / (om[i1] * om[i2] * om[i3]);
                        }
                    }
                }
                pref * acc
            })
            .collect();
        Ok(out)
    }
}

impl CollisionModel {
    /// Pair-channel 𝒞(W) at every node: k₁ + k₂ → k₃ + k₄ summed over (k₂, k₃),
    /// normalized so that its linearization at W_β is −L₄p.
    pub fn nonlinear_pair(&self, wp: &OccupationProfile) -> Result<Vec<f64>> {
        self.vertex.check(4, self.band.dim())?;
        let grid = self.band.grid();
        if wp.len() != grid.len() {
            return Err(Error::Dimension("occupation length differs from the grid".into()));
        }
        if let Some(i) = wp.values.iter().position(|&x| !(x > 0.0)) {
            return error::domain(format!("occupation must be positive, fails at node {i}"));
        }
        let d = grid.dim();
        let n = grid.n();
        let m = grid.len();
        let om = self.band.omega();
        let wv = &wp.values;
        let wt = wp.tilde().values;
        let classical = wp.statistics == Statistics::Classical;
        let table = VertexTable::new(&self.vertex, grid);
        let multi: Vec<usize> = (0..m).flat_map(|i| grid.multi_index(i)).collect();
        // every slot of the symmetric pattern contributes the same, hence the 4
        let pref = 4.0 * 9.0 * PI / 16.0 * grid.weight().powi(2);
        let eta = self.eta;

        let out = (0..m)
            .into_par_iter()
            .map(|i1| {
                let m1 = &multi[i1 * d..(i1 + 1) * d];
                let mut acc = 0.0;
                for i2 in 0..m {
                    let m2 = &multi[i2 * d..(i2 + 1) * d];
                    for i3 in 0..m {
                        let m3 = &multi[i3 * d..(i3 + 1) * d];
                        let mut i4 = 0usize;
                        for j in 0..d {
                            i4 = i4 * n + (m1[j] + m2[j] + n - m3[j]) % n;
                        }
                        let g = gaussian(om[i1] + om[i2] - om[i3] - om[i4], eta);
                        if g == 0.0 {
                            continue;
                        }
                        let (w1, w2, w3, w4) = (wv[i1], wv[i2], wv[i3], wv[i4]);
                        let gain_loss = if classical {
                            w3 * w4 * (w1 + w2) - w1 * w2 * (w3 + w4)
                        } else {
                            wt[i1] * wt[i2] * w3 * w4 - w1 * w2 * wt[i3] * wt[i4]
                        };
                        let vf = table.as_ref().map_or(1.0, |t| t.factor(&[i1, i2, i3, i4], &[1, 1, -1, -1]));
                        acc += g * vf * gain_loss / (om[i1] * om[i2] * om[i3] * om[i4]);
                    }
                }
                pref * acc
            })
            .collect();
        Ok(out)
    }
}

fn doubled_table(grid: &BZGrid) -> Vec<i64> {
    (0..grid.len()).flat_map(|i| grid.doubled(i)).collect()
}

/// The 2^d half-spacing offsets (±1 per axis in doubled coordinates).
fn neighbour_shifts(d: usize) -> Vec<Vec<i64>> {
    (0..1usize << d).map(|mask| (0..d).map(|j| if mask >> j & 1 == 1 { 1 } else { -1 }).collect()).collect()
}

/// Sums rank-one updates r·c cᵀ emitted per first index. The i₁ range is cut
/// into `workers` contiguous blocks with one partial matrix each; partials are
/// added in block order so the result is reproducible for a fixed worker count.
fn accumulate<F>(m: usize, workers: usize, generate: F) -> (Vec<f64>, u64)
where
    F: Fn(usize, &mut dyn FnMut(&[usize], &[f64], f64)) + Sync,
{
    let blocks = workers.clamp(1, m.max(1));
    let chunk = m.div_ceil(blocks);
    let partials: Vec<(Vec<f64>, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut part = vec![0.0; m * m];
            let mut count = 0u64;
            for i1 in (b * chunk)..((b + 1) * chunk).min(m) {
                generate(i1, &mut |idx, coef, r| {
                    count += 1;
                    rank_one(&mut part, m, idx, coef, r);
                });
            }
            (part, count)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut total, mut count) = iter.next().unwrap_or((vec![0.0; m * m], 0));
    for (p, c) in iter {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
        count += c;
    }
    (total, count)
}

/// Adds r·u uᵀ where u = Σ coef_j e_{idx_j}; repeated indices are merged first.
#[inline]
fn rank_one(part: &mut [f64], m: usize, idx: &[usize], coef: &[f64], r: f64) {
    let mut merged = [(0usize, 0.0f64); 4];
    let mut len = 0;
    for (&i, &c) in idx.iter().zip(coef) {
        match merged[..len].iter_mut().find(|(j, _)| *j == i) {
            Some(e) => e.1 += c,
            None => {
                merged[len] = (i, c);
                len += 1;
            }
        }
    }
    for &(a, ca) in &merged[..len] {
        if ca == 0.0 {
            continue;
        }
        for &(b, cb) in &merged[..len] {
            if cb != 0.0 {
                part[a * m + b] += r * (ca * cb);
            }
        }
    }
}

//! Classical molecular dynamics of H = H_ha + λ V on the periodic box
//! {0..l−1}^d, used to measure C_λ(t) directly.
//!
//! Discrete wave numbers are k = m/l. Normal modes use the unnormalized
//! transform q̂(k) = Σ_x e^{−i2πk·x} q_x and a(k) = (√ω q̂ + i p̂/√ω)/√2.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::collision::DifferenceVertex;
use crate::error::{self, Error, Result};
use crate::lattice::Dispersion;

/// Anharmonic part of the potential, scaled by the coupling λ.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    Harmonic,
    /// λ/3 Σ q³, plus λ²/4 Σ q⁴ when stabilized.
    OnsiteCubic {
        stabilizer: bool,
    },
    /// λ/4 Σ q⁴.
    OnsiteQuartic,
    /// λ/n Σ_{x,y} α_n(x−y)(q_x − q_y)^n, plus λ²/4 Σ q⁴ for n = 3 when stabilized.
    Difference {
        vertex: DifferenceVertex,
        stabilizer: bool,
    },
}

impl Nonlinearity {
    fn stabilized(&self) -> bool {
        match self {
            Nonlinearity::OnsiteCubic { stabilizer } => *stabilizer,
            Nonlinearity::Difference { vertex, stabilizer } => vertex.order() == 3 && *stabilizer,
            _ => false,
        }
    }

    fn is_cubic(&self) -> bool {
        match self {
            Nonlinearity::OnsiteCubic { .. } => true,
            Nonlinearity::Difference { vertex, .. } => vertex.order() == 3,
            _ => false,
        }
    }
}

/// Positions and momenta, one entry per site in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    VelocityVerlet,
    /// Fourth-order triple-jump composition of velocity-Verlet substeps.
    Yoshida4,
}

#[derive(Clone, Debug)]
struct Bond {
    offset: Vec<i64>,
    alpha: f64,
    /// site ↦ site + offset (periodic)
    shift: Vec<usize>,
}

/// Periodized crystal with a fixed potential and coupling.
#[derive(Clone, Debug)]
pub struct Crystal {
    dim: usize,
    l: usize,
    omega0: f64,
    lambda: f64,
    nonlinearity: Nonlinearity,
    harmonic: Vec<Bond>,
    anharmonic: Vec<Bond>,
    disp: Dispersion,
    mode_omega: Vec<f64>,
    mode_grad: Vec<Vec<f64>>,
}

impl Crystal {
    pub fn new(disp: &Dispersion, nonlinearity: Nonlinearity, lambda: f64, l: usize) -> Result<Self> {
        let dim = disp.dim();
        if l < 2 {
            return error::config(format!("box side must be at least 2, got {l}"));
        }
        if (l as f64).powi(dim as i32) > 1e7 {
            return error::config("box too large");
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return error::config(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        if nonlinearity.is_cubic() && !nonlinearity.stabilized() && lambda != 0.0 {
            return error::config("refused: H_ha + lambda V3 is unbounded below; enable the lambda^2 V4 stabilizer");
        }
        let sites = l.pow(dim as u32);
        let make = |offset: &Vec<i64>, alpha: f64| Bond {
            offset: offset.clone(),
            alpha,
            shift: (0..sites).map(|s| shift_site(s, offset, l, dim)).collect(),
        };
        let harmonic = disp.elastic().entries().iter().map(|(x, a)| make(x, *a)).collect();
        let anharmonic = match &nonlinearity {
            Nonlinearity::Difference { vertex, .. } => {
                if vertex.dim() != dim {
                    return error::config("vertex and band dimensions differ");
                }
                vertex.alpha().iter().map(|(x, a)| make(x, *a)).collect()
            }
            _ => Vec::new(),
        };
        let mut mode_omega = Vec::with_capacity(sites);
        let mut mode_grad = Vec::with_capacity(sites);
        for s in 0..sites {
            let k = mode_k(s, l, dim);
            let w = disp.omega(&k);
            mode_omega.push(w);
            mode_grad.push(if w > 0.0 { disp.grad_omega(&k)? } else { vec![0.0; dim] });
        }
        Ok(Self {
            dim,
            l,
            omega0: disp.omega0(),
            lambda,
            nonlinearity,
            harmonic,
            anharmonic,
            disp: disp.clone(),
            mode_omega,
            mode_grad,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn sites(&self) -> usize {
        self.mode_omega.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dispersion(&self) -> &Dispersion {
        &self.disp
    }

    /// ω at the discrete wave numbers k = m/l.
    pub fn mode_omega(&self) -> &[f64] {
        &self.mode_omega
    }

    pub fn max_omega(&self) -> f64 {
        self.mode_omega.iter().cloned().fold(0.0, f64::max)
    }

    pub fn site_coords(&self, s: usize) -> Vec<usize> {
        site_coords(s, self.l, self.dim)
    }

    pub fn force(&self, q: &[f64], f: &mut [f64]) {
        let lam = self.lambda;
        let w2 = self.omega0 * self.omega0;
        for (x, fx) in f.iter_mut().enumerate() {
            *fx = -w2 * q[x];
        }
        for b in &self.harmonic {
            for (x, fx) in f.iter_mut().enumerate() {
                *fx -= b.alpha * q[b.shift[x]];
            }
        }
        if lam == 0.0 {
            return;
        }
        match &self.nonlinearity {
            Nonlinearity::Harmonic => {}
            Nonlinearity::OnsiteCubic { .. } => {
                for (x, fx) in f.iter_mut().enumerate() {
                    *fx -= lam * q[x] * q[x];
                }
            }
            Nonlinearity::OnsiteQuartic => {
                for (x, fx) in f.iter_mut().enumerate() {
                    *fx -= lam * q[x].powi(3);
                }
            }
            Nonlinearity::Difference { vertex, .. } => {
                // ∂V/∂q_z = 2 Σ_y α_n(z−y)(q_z − q_y)^{n−1}; with y = z + u that is α_n(−u).
                let pw = vertex.order() as i32 - 1;
                for b in &self.anharmonic {
                    let a = partner_alpha(&self.anharmonic, &b.offset);
                    for (z, fz) in f.iter_mut().enumerate() {
                        *fz -= lam * 2.0 * a * (q[z] - q[b.shift[z]]).powi(pw);
                    }
                }
            }
        }
        if self.nonlinearity.stabilized() {
            let l2 = lam * lam;
            for (x, fx) in f.iter_mut().enumerate() {
                *fx -= l2 * q[x].powi(3);
            }
        }
    }

    /// H_x: kinetic, on-site and half of every pair term assigned to x.
    pub fn site_energy(&self, s: &LatticeState) -> Vec<f64> {
        let (q, p) = (&s.q, &s.p);
        let lam = self.lambda;
        let mut h: Vec<f64> =
            (0..q.len()).map(|x| 0.5 * p[x] * p[x] + 0.5 * self.omega0 * self.omega0 * q[x] * q[x]).collect();
        for b in &self.harmonic {
            for (x, hx) in h.iter_mut().enumerate() {
                *hx += 0.5 * b.alpha * q[x] * q[b.shift[x]];
            }
        }
        if lam != 0.0 {
            match &self.nonlinearity {
                Nonlinearity::Harmonic => {}
                Nonlinearity::OnsiteCubic { .. } => {
                    for (x, hx) in h.iter_mut().enumerate() {
                        *hx += lam / 3.0 * q[x].powi(3);
                    }
                }
                Nonlinearity::OnsiteQuartic => {
                    for (x, hx) in h.iter_mut().enumerate() {
                        *hx += lam / 4.0 * q[x].powi(4);
                    }
                }
                Nonlinearity::Difference { vertex, .. } => {
                    let n = vertex.order() as i32;
                    for b in &self.anharmonic {
                        // ordered pair (x, x+u) carries α_n(x − (x+u)) = α_n(−u)
                        let a = partner_alpha(&self.anharmonic, &b.offset);
                        for (x, hx) in h.iter_mut().enumerate() {
                            *hx += lam / n as f64 * a * (q[x] - q[b.shift[x]]).powi(n);
                        }
                    }
                }
            }
            if self.nonlinearity.stabilized() {
                for (x, hx) in h.iter_mut().enumerate() {
                    *hx += lam * lam / 4.0 * q[x].powi(4);
                }
            }
        }
        h
    }

    pub fn energy(&self, s: &LatticeState) -> f64 {
        self.site_energy(s).iter().sum()
    }

    /// Anharmonic part of the potential (λV and its stabilizer).
    pub fn anharmonic_energy(&self, q: &[f64]) -> f64 {
        let zero = LatticeState { q: q.to_vec(), p: vec![0.0; q.len()] };
        let mut harm = self.clone();
        harm.lambda = 0.0;
        self.energy(&zero) - harm.energy(&zero)
    }

    /// J_x = ¼ Σ_y y α(y)(−q_x p_{x+y} + q_{x+y} p_x), row-major sites × d.
    pub fn local_current(&self, s: &LatticeState) -> Vec<f64> {
        let d = self.dim;
        let mut j = vec![0.0; s.q.len() * d];
        for b in &self.harmonic {
            for x in 0..s.q.len() {
                let y = b.shift[x];
                let c = 0.25 * b.alpha * (-s.q[x] * s.p[y] + s.q[y] * s.p[x]);
                for a in 0..d {
                    j[x * d + a] += b.offset[a] as f64 * c;
                }
            }
        }
        j
    }

    pub fn total_current(&self, s: &LatticeState) -> Vec<f64> {
        let d = self.dim;
        let j = self.local_current(s);
        (0..d).map(|a| j.iter().skip(a).step_by(d).sum()).collect()
    }

    /// Σ_k (2π)^{−1}∇ω ω |a(k)|² / l^d, the normal-mode form of the total current.
    pub fn mode_current(&self, modes: &NormalModes) -> Vec<f64> {
        let d = self.dim;
        let vol = self.sites() as f64;
        let mut j = vec![0.0; d];
        for (s, a) in modes.a.iter().enumerate() {
            let c = self.mode_omega[s] * a.norm_sqr() / (2.0 * PI * vol);
            for (ja, g) in j.iter_mut().zip(&self.mode_grad[s]) {
                *ja += g * c;
            }
        }
        j
    }

    /// Rate of energy flow into the set of sites where `inside` holds, from
    /// the exact bond decomposition dH_x/dt = ½ Σ_y α(x−y)(q_x p_y − p_x q_y).
    /// Valid for the harmonic dynamics.
    pub fn boundary_flux(&self, s: &LatticeState, inside: impl Fn(usize) -> bool) -> f64 {
        let mut r = 0.0;
        for b in &self.harmonic {
            for x in 0..s.q.len() {
                let y = b.shift[x];
                if inside(x) && !inside(y) {
                    r += 0.5 * b.alpha * (s.q[x] * s.p[y] - s.p[x] * s.q[y]);
                }
            }
        }
        r
    }

    pub fn step(&self, s: &mut LatticeState, f: &mut [f64], dt: f64, integrator: Integrator) {
        match integrator {
            Integrator::VelocityVerlet => self.verlet(s, f, dt),
            Integrator::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                self.verlet(s, f, w1 * dt);
                self.verlet(s, f, w0 * dt);
                self.verlet(s, f, w1 * dt);
            }
        }
    }

    /// One velocity-Verlet step; `f` holds the force at the current positions.
    fn verlet(&self, s: &mut LatticeState, f: &mut [f64], dt: f64) {
        for (p, fx) in s.p.iter_mut().zip(f.iter()) {
            *p += 0.5 * dt * fx;
        }
        for (q, p) in s.q.iter_mut().zip(&s.p) {
            *q += dt * p;
        }
        self.force(&s.q, f);
        for (p, fx) in s.p.iter_mut().zip(f.iter()) {
            *p += 0.5 * dt * fx;
        }
    }

    /// Advances `n` steps and returns the state.
    pub fn integrate(&self, mut s: LatticeState, dt: f64, n: usize, integrator: Integrator) -> LatticeState {
        let mut f = vec![0.0; s.q.len()];
        self.force(&s.q, &mut f);
        for _ in 0..n {
            self.step(&mut s, &mut f, dt, integrator);
        }
        s
    }

    pub fn normal_modes(&self, s: &LatticeState) -> NormalModes {
        let qh = fft_nd(&s.q.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(), self.l, self.dim, false);
        let ph = fft_nd(&s.p.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(), self.l, self.dim, false);
        let a = (0..self.sites())
            .map(|k| {
                let w = self.mode_omega[k];
                if w == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                (qh[k] * w.sqrt() + Complex64::i() * ph[k] / w.sqrt()) / 2f64.sqrt()
            })
            .collect();
        NormalModes { a }
    }

    /// Inverse of [`Crystal::normal_modes`]; zero-frequency modes map to zero.
    pub fn from_modes(&self, modes: &NormalModes) -> LatticeState {
        let n = self.sites();
        let mut qh = vec![Complex64::new(0.0, 0.0); n];
        let mut ph = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            let w = self.mode_omega[k];
            if w == 0.0 {
                continue;
            }
            let mk = negate_mode(k, self.l, self.dim);
            let a = modes.a[k];
            let am = modes.a[mk].conj();
            qh[k] = (a + am) / (2f64.sqrt() * w.sqrt());
            ph[k] = Complex64::i() * w.sqrt() * (-a + am) / 2f64.sqrt();
        }
        let q = fft_nd(&qh, self.l, self.dim, true);
        let p = fft_nd(&ph, self.l, self.dim, true);
        let vol = n as f64;
        LatticeState { q: q.iter().map(|z| z.re / vol).collect(), p: p.iter().map(|z| z.re / vol).collect() }
    }

    /// Exact sample of the harmonic Gibbs state e^{−βH_ha}. With
    /// `pin_zero_mode` the k = 0 mode is set to rest, which is required
    /// when ω(0) = 0.
    pub fn sample_harmonic(&self, beta: f64, pin_zero_mode: bool, rng: &mut impl Rng) -> Result<LatticeState> {
        if !(beta > 0.0) {
            return error::config("beta must be positive");
        }
        let n = self.sites();
        if !pin_zero_mode && self.mode_omega.iter().any(|&w| w == 0.0) {
            return error::domain("zero mode: supply omega0 > 0 or pin the zero mode");
        }
        let z: Vec<Complex64> = (0..n).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
        let mut zh = fft_nd(&z, self.l, self.dim, false);
        for (k, zk) in zh.iter_mut().enumerate() {
            let w = self.mode_omega[k];
            if w == 0.0 || (pin_zero_mode && k == 0) {
                *zk = Complex64::new(0.0, 0.0);
            } else {
                *zk /= beta.sqrt() * w;
            }
        }
        let q: Vec<f64> = fft_nd(&zh, self.l, self.dim, true).iter().map(|c| c.re / n as f64).collect();
        let mut p: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).map(|x: f64| x / beta.sqrt()).collect();
        if pin_zero_mode {
            let mean = p.iter().sum::<f64>() / n as f64;
            p.iter_mut().for_each(|x| *x -= mean);
        }
        Ok(LatticeState { q, p })
    }

    /// Harmonic sample, optionally corrected towards e^{−βH} by an
    /// independence Metropolis chain with harmonic proposals.
    pub fn sample_gibbs(
        &self,
        beta: f64,
        sampler: Sampler,
        pin_zero_mode: bool,
        rng: &mut impl Rng,
    ) -> Result<(LatticeState, usize)> {
        let mut s = self.sample_harmonic(beta, pin_zero_mode, rng)?;
        let Sampler::Metropolis { proposals } = sampler else {
            return Ok((s, 0));
        };
        let mut u = self.anharmonic_energy(&s.q);
        let mut accepted = 0;
        for _ in 0..proposals {
            let t = self.sample_harmonic(beta, pin_zero_mode, rng)?;
            let ut = self.anharmonic_energy(&t.q);
            if rng.random::<f64>() < (-beta * (ut - u)).exp() {
                s = t;
                u = ut;
                accepted += 1;
            }
        }
        Ok((s, accepted))
    }
}

fn partner_alpha(bonds: &[Bond], offset: &[i64]) -> f64 {
    let neg: Vec<i64> = offset.iter().map(|c| -c).collect();
    bonds.iter().find(|b| b.offset == neg).map_or(0.0, |b| b.alpha)
}

fn site_coords(mut s: usize, l: usize, d: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for j in (0..d).rev() {
        c[j] = s % l;
        s /= l;
    }
    c
}

fn shift_site(s: usize, offset: &[i64], l: usize, d: usize) -> usize {
    let c = site_coords(s, l, d);
    c.iter().zip(offset).fold(0, |acc, (&cj, &o)| acc * l + (cj as i64 + o).rem_euclid(l as i64) as usize)
}

fn negate_mode(k: usize, l: usize, d: usize) -> usize {
    site_coords(k, l, d).iter().fold(0, |acc, &m| acc * l + (l - m) % l)
}

/// Wave number m/l folded into [−1/2, 1/2).
fn mode_k(s: usize, l: usize, d: usize) -> Vec<f64> {
    site_coords(s, l, d)
        .iter()
        .map(|&m| {
            let k = m as f64 / l as f64;
            if k >= 0.5 {
                k - 1.0
            } else {
                k
            }
        })
        .collect()
}

/// Unnormalized d-dimensional DFT along every axis (forward sign e^{−i}).
fn fft_nd(data: &[Complex64], l: usize, d: usize, inverse: bool) -> Vec<Complex64> {
    let mut out = data.to_vec();
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(l) } else { planner.plan_fft_forward(l) };
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    for axis in 0..d {
        let stride = l.pow((d - 1 - axis) as u32);
        let block = stride * l;
        for start in 0..out.len() / l {
            let base = (start / stride) * block + start % stride;
            for (i, v) in line.iter_mut().enumerate() {
                *v = out[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                out[base + i * stride] = *v;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalModes {
    pub a: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Harmonic,
    Metropolis { proposals: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdParams {
    pub beta: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub integrator: Integrator,
    pub sampler: Sampler,
    pub pin_zero_mode: bool,
    pub direction: Vec<f64>,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdCorrelation {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Largest relative energy drift seen over all samples.
    pub max_energy_drift: f64,
    pub accepted: usize,
}

impl MdCorrelation {
    /// Values at t/λ² for kinetic times t, by linear interpolation.
    pub fn at_kinetic_times(&self, lambda: f64, kinetic: &[f64]) -> Vec<f64> {
        kinetic.iter().map(|&t| interpolate(&self.times, &self.mean, t / (lambda * lambda))).collect()
    }
}

pub fn interpolate(x: &[f64], y: &[f64], t: f64) -> f64 {
    match x.iter().position(|&v| v >= t) {
        Some(0) => y[0],
        Some(i) => {
            let f = (t - x[i - 1]) / (x[i] - x[i - 1]);
            y[i - 1] + f * (y[i] - y[i - 1])
        }
        None => *y.last().unwrap_or(&f64::NAN),
    }
}

/// Estimates ℓ·C_λ(t)ℓ = l^{−d} ⟨(ℓ·J(t))(ℓ·J(0))⟩ over independent
/// Gibbs starts; errors from a bootstrap over samples.
pub fn current_correlation(crystal: &Crystal, params: &MdParams) -> Result<MdCorrelation> {
    if !(params.dt > 0.0) || params.stride == 0 || params.n_samples < 2 {
        return error::config("md needs dt > 0, stride >= 1 and at least two samples");
    }
    if params.dt * crystal.max_omega() > 0.1 {
        return Err(Error::UnstableStep { dt: params.dt, max: 0.1 / crystal.max_omega() });
    }
    let ell = crate::equilibrium::unit_direction(&params.direction, crystal.dim())?;
    let steps = (params.t_max / params.dt).round() as usize;
    let records = steps / params.stride + 1;
    let vol = crystal.sites() as f64;
    let rows: Vec<Result<(Vec<f64>, f64, usize)>> = (0..params.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let (mut s, acc) = crystal.sample_gibbs(params.beta, params.sampler, params.pin_zero_mode, &mut rng)?;
            let along = |s: &LatticeState| crystal.total_current(s).iter().zip(&ell).map(|(a, b)| a * b).sum::<f64>();
            let j0 = along(&s);
            let h0 = crystal.energy(&s);
            let mut f = vec![0.0; s.q.len()];
            crystal.force(&s.q, &mut f);
            let mut row = Vec::with_capacity(records);
            let mut drift = 0.0f64;
            for step in 0..=steps {
                if step % params.stride == 0 {
                    row.push(along(&s) * j0 / vol);
                    drift = drift.max(((crystal.energy(&s) - h0) / h0).abs());
                }
                if step < steps {
                    crystal.step(&mut s, &mut f, params.dt, params.integrator);
                }
            }
            Ok((row, drift, acc))
        })
        .collect();
    let mut samples = Vec::with_capacity(rows.len());
    let mut max_drift = 0.0f64;
    let mut accepted = 0;
    for r in rows {
        let (row, drift, acc) = r?;
        samples.push(row);
        max_drift = max_drift.max(drift);
        accepted += acc;
    }
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..records).map(|t| samples.iter().map(|r| r[t]).sum::<f64>() / n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let b = params.bootstrap.max(2);
    let mut boot = vec![vec![0.0; records]; b];
    for rep in boot.iter_mut() {
        for _ in 0..samples.len() {
            let r = &samples[rng.random_range(0..samples.len())];
            for (x, v) in rep.iter_mut().zip(r) {
                *x += v / n;
            }
        }
    }
    let stderr = (0..records)
        .map(|t| {
            let m = boot.iter().map(|r| r[t]).sum::<f64>() / b as f64;
            (boot.iter().map(|r| (r[t] - m).powi(2)).sum::<f64>() / (b - 1) as f64).sqrt()
        })
        .collect();
    let times = (0..records).map(|i| (i * params.stride) as f64 * params.dt).collect();
    Ok(MdCorrelation { times, mean, stderr, max_energy_drift: max_drift, accepted })
}

/// l^{−d} Σ_k j(k)² (βω)^{−2}: the harmonic-ensemble value of ⟨(ℓ·J)²⟩/l^d.
pub fn harmonic_current_variance(crystal: &Crystal, beta: f64, ell: &[f64]) -> f64 {
    let vol = crystal.sites() as f64;
    crystal
        .mode_omega
        .iter()
        .zip(&crystal.mode_grad)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, g)| {
            let j = g.iter().zip(ell).map(|(a, b)| a * b).sum::<f64>() * w / (2.0 * PI);
            (j / (beta * w)).powi(2)
        })
        .sum::<f64>()
        / vol
}

/// Plane wave with a(k₀) = amplitude and every other mode empty.
pub fn single_mode(crystal: &Crystal, mode: usize, amplitude: Complex64) -> LatticeState {
    let mut a = vec![Complex64::new(0.0, 0.0); crystal.sites()];
    a[mode] = amplitude;
    crystal.from_modes(&NormalModes { a })
}

pub fn mode_wavenumber(crystal: &Crystal, mode: usize) -> Vec<f64> {
    mode_k(mode, crystal.l, crystal.dim)
}

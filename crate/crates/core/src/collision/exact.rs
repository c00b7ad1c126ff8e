//! Multiplication part V(k) of the linearized operator in d = 1 with the
//! energy delta integrated out exactly: roots of the energy mismatch along
//! the free variable, each weighted by the inverse Jacobian.
//!
//! V(k) collects every slot of the pattern occupied by k. For L₃ that is
//! slots 1 and 2 (k₁ + k₂ → k₃) and slot 3 (k₁ + k₂ → k), for L₄p slots 1, 2
//! (k in the incoming pair) and 3, 4 (k in the outgoing pair). Trivial pair
//! collisions {k₃, k₄} = {k₁, k₂} leave every f₁+f₂−f₃−f₄ at zero, so they
//! cancel between V and I and are excluded from V here.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resolver::Exact1d;
use super::vertex::Vertex;
use crate::equilibrium::{occupation_at, occupation_tilde_at, Statistics};
use crate::error::{self, Result};
use crate::lattice::Dispersion;

/// Fractional offset of the scan grid, irrational so that no scan point
/// lands on a grid node or a trivial root.
const SCAN_OFFSET: f64 = 0.381_966_011_250_105_1;
const ZERO_MODE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RootDiagnostics {
    pub accepted: u64,
    pub rejected_tangent: u64,
    pub rejected_zero_mode: u64,
    pub rejected_residual: u64,
}

impl RootDiagnostics {
    fn merge(&mut self, o: &RootDiagnostics) {
        self.accepted += o.accepted;
        self.rejected_tangent += o.rejected_tangent;
        self.rejected_zero_mode += o.rejected_zero_mode;
        self.rejected_residual += o.rejected_residual;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRates {
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub diagnostics: RootDiagnostics,
}

struct Band<'a> {
    disp: &'a Dispersion,
    beta: f64,
    stats: Statistics,
    vertex: &'a Vertex,
}

impl Band<'_> {
    fn om(&self, k: f64) -> f64 {
        self.disp.omega(&[k])
    }

    fn dom(&self, k: f64) -> f64 {
        let w = self.om(k);
        self.disp.elastic().grad_hat(&[k])[0] / (2.0 * w)
    }

    fn w(&self, k: f64) -> f64 {
        occupation_at(self.om(k), self.beta, self.stats)
    }

    fn wt(&self, k: f64) -> f64 {
        occupation_tilde_at(self.om(k), self.beta, self.stats)
    }

    fn vertex(&self, momenta: &[(f64, f64)]) -> f64 {
        let ks: Vec<[f64; 1]> = momenta.iter().map(|(_, k)| [*k]).collect();
        let m: Vec<(f64, &[f64])> = momenta.iter().zip(&ks).map(|((s, _), k)| (*s, &k[..])).collect();
        self.vertex.factor(&m)
    }
}

fn validate(disp: &Dispersion, vertex: &Vertex, order: usize, settings: &Exact1d) -> Result<()> {
    if disp.dim() != 1 {
        return error::config(format!("exact_1d resolver needs d = 1, got d = {}", disp.dim()));
    }
    vertex.check(order, 1)?;
    if settings.n_scan < 8 || settings.n_outer < 8 {
        return error::config("exact_1d scan and outer grids need at least 8 points");
    }
    Ok(())
}

fn wrap(k: f64) -> f64 {
    k - (k + 0.5).floor()
}

/// Zeros of a 1-periodic function on [−1/2, 1/2) by sign-change scan and bisection.
fn periodic_roots(f: impl Fn(f64) -> f64, n_scan: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n_scan).map(|j| -0.5 + (j as f64 + SCAN_OFFSET) / n_scan as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for j in 0..n_scan {
        let (mut a, mut b) = (xs[j], xs[j + 1]);
        let (mut fa, fb) = (fs[j], fs[j + 1]);
        if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() || fa == 0.0 && fb == 0.0 {
            continue;
        }
        if fb == 0.0 {
            continue; // picked up as fa == 0 of the next interval
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        roots.push(wrap(0.5 * (a + b)));
    }
    roots
}

/// V(k) for the three-phonon channel.
pub fn v_l3(
    disp: &Dispersion,
    beta: f64,
    stats: Statistics,
    vertex: &Vertex,
    settings: &Exact1d,
    ks: &[f64],
) -> Result<ExactRates> {
    validate(disp, vertex, 3, settings)?;
    let b = Band { disp, beta, stats, vertex };
    let scale = frequency_scale(disp);
    let per_k: Vec<(f64, RootDiagnostics)> = ks
        .par_iter()
        .map(|&k| {
            let mut diag = RootDiagnostics::default();
            let wk = b.om(k);
            // k in slot 1: roots q of ω(k) + ω(q) − ω(k+q)
            let mut s1 = 0.0;
            for q in periodic_roots(|q| wk + b.om(q) - b.om(k + q), settings.n_scan) {
                let p = wrap(k + q);
                let Some(jac) =
                    accept(&mut diag, settings, scale, [b.om(q), b.om(p)], wk + b.om(q) - b.om(p), b.dom(q) - b.dom(p))
                else {
                    continue;
                };
                let rate = b.vertex(&[(1.0, k), (1.0, q), (-1.0, p)]) / (wk * b.om(q) * b.om(p));
                s1 += rate * b.w(k) * b.w(q) * b.wt(p) / jac;
            }
            // k in slot 3: roots q of ω(q) + ω(k−q) − ω(k)
            let mut s3 = 0.0;
            for q in periodic_roots(|q| b.om(q) + b.om(k - q) - wk, settings.n_scan) {
                let p = wrap(k - q);
                let Some(jac) =
                    accept(&mut diag, settings, scale, [b.om(q), b.om(p)], b.om(q) + b.om(p) - wk, b.dom(q) - b.dom(p))
                else {
                    continue;
                };
                let rate = b.vertex(&[(1.0, q), (1.0, p), (-1.0, k)]) / (wk * b.om(q) * b.om(p));
                s3 += rate * b.w(q) * b.w(p) * b.wt(k) / jac;
            }
            (PI / 2.0 * (2.0 * s1 + s3), diag)
        })
        .collect();
    Ok(collect(ks, per_k))
}

/// Accepted three-phonon solutions (k₁, k₂, k₃) with ω₁ + ω₂ = ω₃ and
/// k₃ = k₁ + k₂ that contain k, in either slot 1 or slot 3.
pub fn l3_manifold(disp: &Dispersion, settings: &Exact1d, k: f64) -> Result<Vec<[f64; 3]>> {
    validate(disp, &Vertex::onsite_cubic(), 3, settings)?;
    let om = |k: f64| disp.omega(&[k]);
    let dom = |k: f64| disp.elastic().grad_hat(&[k])[0] / (2.0 * om(k));
    let scale = frequency_scale(disp);
    let mut diag = RootDiagnostics::default();
    let wk = om(k);
    let mut out = Vec::new();
    for q in periodic_roots(|q| wk + om(q) - om(k + q), settings.n_scan) {
        let p = wrap(k + q);
        if accept(&mut diag, settings, scale, [om(q), om(p)], wk + om(q) - om(p), dom(q) - dom(p)).is_some() {
            out.push([k, q, p]);
        }
    }
    for q in periodic_roots(|q| om(q) + om(k - q) - wk, settings.n_scan) {
        let p = wrap(k - q);
        if accept(&mut diag, settings, scale, [om(q), om(p)], om(q) + om(p) - wk, dom(q) - dom(p)).is_some() {
            out.push([q, p, k]);
        }
    }
    Ok(out)
}

/// V(k) for the pair channel L₄p.
pub fn v_l4p(
    disp: &Dispersion,
    beta: f64,
    stats: Statistics,
    vertex: &Vertex,
    settings: &Exact1d,
    ks: &[f64],
) -> Result<ExactRates> {
    validate(disp, vertex, 4, settings)?;
    let b = Band { disp, beta, stats, vertex };
    let scale = frequency_scale(disp);
    let n_outer = settings.n_outer;
    let per_k: Vec<(f64, RootDiagnostics)> = ks
        .par_iter()
        .map(|&k| {
            let mut diag = RootDiagnostics::default();
            let (mut incoming, mut outgoing) = (0.0, 0.0);
            for i in 0..n_outer {
                let q = -0.5 + (i as f64 + 0.5) / n_outer as f64;
                for (c, d, jac) in pair_roots(&b, k, q, settings, scale, &mut diag) {
                    let om = b.om(k) * b.om(q) * b.om(c) * b.om(d);
                    let mom = [(1.0, k), (1.0, q), (-1.0, c), (-1.0, d)];
                    let vf = b.vertex(&mom);
                    // (k, q) incoming, (c, d) outgoing
                    incoming += vf / om * b.w(k) * b.w(q) * b.wt(c) * b.wt(d) / jac;
                    // (c, d) incoming, (k, q) outgoing
                    outgoing += vf / om * b.w(c) * b.w(d) * b.wt(k) * b.wt(q) / jac;
                }
            }
            let v = 9.0 * PI / 16.0 * 2.0 * (incoming + outgoing) / n_outer as f64;
            (v, diag)
        })
        .collect();
    Ok(collect(ks, per_k))
}

/// Non-trivial solutions (c, a+b−c) of ω(a) + ω(b) = ω(c) + ω(a+b−c) with
/// |ω'(c) − ω'(d)|. The trivial zeros c = a, c = b are divided out first.
fn pair_roots(
    b: &Band,
    a: f64,
    q: f64,
    settings: &Exact1d,
    scale: f64,
    diag: &mut RootDiagnostics,
) -> Vec<(f64, f64, f64)> {
    let e = b.om(a) + b.om(q);
    let mismatch = |c: f64| e - b.om(c) - b.om(a + q - c);
    let deflated = |c: f64| mismatch(c) / ((PI * (c - a)).sin() * (PI * (c - q)).sin());
    let mut out = Vec::new();
    for c in periodic_roots(deflated, settings.n_scan) {
        let d = wrap(a + q - c);
        if let Some(jac) = accept(diag, settings, scale, [b.om(c), b.om(d)], mismatch(c), b.dom(c) - b.dom(d)) {
            out.push((c, d, jac));
        }
    }
    out
}

fn accept(
    diag: &mut RootDiagnostics,
    settings: &Exact1d,
    scale: f64,
    omegas: [f64; 2],
    residual: f64,
    jacobian: f64,
) -> Option<f64> {
    if omegas.iter().any(|&w| w < ZERO_MODE) {
        diag.rejected_zero_mode += 1;
        return None;
    }
    if residual.abs() > 1e-9 * scale {
        diag.rejected_residual += 1;
        return None;
    }
    let jac = jacobian.abs();
    if jac < settings.jacobian_floor {
        diag.rejected_tangent += 1;
        return None;
    }
    diag.accepted += 1;
    Some(jac)
}

fn frequency_scale(disp: &Dispersion) -> f64 {
    let a: f64 = disp.elastic().entries().iter().map(|(_, a)| a.abs()).sum();
    (disp.omega0().powi(2) + 2.0 * a).sqrt().max(1.0)
}

fn collect(ks: &[f64], per_k: Vec<(f64, RootDiagnostics)>) -> ExactRates {
    let mut diagnostics = RootDiagnostics::default();
    let mut v = Vec::with_capacity(per_k.len());
    for (x, d) in per_k {
        v.push(x);
        diagnostics.merge(&d);
    }
    ExactRates { k: ks.to_vec(), v, diagnostics }
}

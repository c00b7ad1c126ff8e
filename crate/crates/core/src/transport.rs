//! Kinetic current correlation, Green-Kubo conductivity and the
//! relaxation-time approximation.
//!
//! Everything is expressed through the symmetrized generator
//! S = M^{−1/2} L M^{−1/2}, M = W W̃, so that
//! ℓ·C_kin(t)ℓ = ⟨v, e^{−S|t|} v⟩ with v = M^{1/2} j.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::collision::{v_and_i_split, Channel, CollisionMatrixL};
use crate::equilibrium::{axis_directions, current_weight, unit_direction, OccupationProfile};
use crate::error::{self, Error, Result};
use crate::lattice::SampledBand;
use crate::linalg::SymEigen;

/// Relative size of a current component along conserved modes that is still
/// treated as round-off.
pub const NULL_OVERLAP_TOL: f64 = 1e-8;

/// Sampled d×d correlation matrices, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub dim: usize,
    pub meta: SeriesMeta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub label: String,
    pub channel: Option<Channel>,
    pub beta: f64,
    pub eta: Option<f64>,
    pub n: usize,
    /// Weight of current carried by modes that never relax.
    pub non_decaying: f64,
}

impl CorrelationSeries {
    pub fn component(&self, a: usize, b: usize) -> Vec<f64> {
        self.values.iter().map(|m| m[a * self.dim + b]).collect()
    }

    /// ℓ·C(t)ℓ at every stored time.
    pub fn along(&self, ell: &[f64]) -> Vec<f64> {
        let d = self.dim;
        self.values
            .iter()
            .map(|m| {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += ell[a] * m[a * d + b] * ell[b];
                    }
                }
                s
            })
            .collect()
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let d = self.dim;
        let mut header = vec!["t".to_string()];
        for a in 0..d {
            for b in 0..d {
                header.push(format!("C{a}{b}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (t, m) in self.times.iter().zip(&self.values) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(m.iter().map(|x| format!("{x:.17e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Eigendecomposition of S with the conserved-mode threshold.
#[derive(Clone, Debug)]
pub struct KineticSpectrum {
    pub eig: SymEigen,
    pub sqrt_m: Vec<f64>,
    pub weight: f64,
    pub threshold: f64,
    pub channel: Channel,
    pub beta: f64,
    pub eta: f64,
    pub n: usize,
}

impl KineticSpectrum {
    pub fn new(l: &CollisionMatrixL, w: &OccupationProfile, band: &SampledBand) -> Result<Self> {
        if w.len() != l.len() || band.len() != l.len() {
            return Err(Error::Dimension(format!(
                "operator has {} nodes, occupation {}, band {}",
                l.len(),
                w.len(),
                band.len()
            )));
        }
        if w.statistics != l.statistics {
            return error::config("occupation statistics differ from the operator's");
        }
        let sqrt_m: Vec<f64> = w.weight().iter().map(|m| m.sqrt()).collect();
        let mut s = l.operator();
        let n = s.nrows();
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] /= sqrt_m[i] * sqrt_m[j];
            }
        }
        let eig = SymEigen::new(&s)?;
        let lmax = eig.max().max(0.0);
        if eig.min() < -1e-10 * lmax {
            return Err(Error::Inconsistent(format!(
                "assembly inconsistency: S has eigenvalue {:.3e} below -1e-10 * {lmax:.3e}",
                eig.min()
            )));
        }
        // The energy mode in S-space is M^{1/2} ω; its residual measures the smearing error.
        let u = DVector::from_iterator(n, sqrt_m.iter().zip(band.omega()).map(|(a, b)| a * b));
        let su = &s * &u;
        let threshold = (1e-10 * lmax).max(10.0 * su.norm() / u.norm());
        Ok(Self {
            eig,
            sqrt_m,
            weight: band.grid().weight(),
            threshold,
            channel: l.channel,
            beta: l.beta,
            eta: l.eta,
            n: l.grid.n(),
        })
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.max().max(0.0)
    }

    pub fn null_dim(&self) -> usize {
        self.eig.values.iter().filter(|&&l| l < self.threshold).count()
    }

    /// Smallest eigenvalue above the conserved-mode threshold.
    pub fn gap(&self) -> Option<f64> {
        self.eig.values.iter().cloned().find(|&l| l >= self.threshold)
    }

    /// v = M^{1/2} j for a unit direction.
    pub fn current_vector(&self, band: &SampledBand, ell: &[f64]) -> Result<DVector<f64>> {
        let j = current_weight(band, ell)?;
        Ok(DVector::from_iterator(self.sqrt_m.len(), j.values.iter().zip(&self.sqrt_m).map(|(a, b)| a * b)))
    }

    fn coefficients(&self, band: &SampledBand) -> Result<Vec<DVector<f64>>> {
        axis_directions(band.dim()).iter().map(|e| Ok(self.eig.project(&self.current_vector(band, e)?))).collect()
    }

    fn bilinear(&self, ca: &DVector<f64>, cb: &DVector<f64>, t: f64) -> f64 {
        let mut s = 0.0;
        for ((x, y), &l) in ca.iter().zip(cb.iter()).zip(self.eig.values.iter()) {
            s += x * y * (-l.max(0.0) * t.abs()).exp();
        }
        self.weight * s
    }

    /// C_kin(t) on the axis basis.
    pub fn correlation(&self, band: &SampledBand, times: &[f64]) -> Result<CorrelationSeries> {
        if times.iter().any(|t| !(*t >= 0.0)) {
            return error::config("correlation times must be non-negative");
        }
        let d = band.dim();
        let c = self.coefficients(band)?;
        let values = times
            .iter()
            .map(|&t| {
                let mut m = vec![0.0; d * d];
                for a in 0..d {
                    for b in a..d {
                        let x = self.bilinear(&c[a], &c[b], t);
                        m[a * d + b] = x;
                        m[b * d + a] = x;
                    }
                }
                m
            })
            .collect();
        Ok(CorrelationSeries {
            times: times.to_vec(),
            values,
            dim: d,
            meta: SeriesMeta {
                label: "kinetic".into(),
                channel: Some(self.channel),
                beta: self.beta,
                eta: Some(self.eta),
                n: self.n,
                non_decaying: 0.0,
            },
        })
    }

    /// ⟨v, e^{−S t} v⟩ along one direction.
    pub fn directional(&self, band: &SampledBand, ell: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let c = self.eig.project(&self.current_vector(band, ell)?);
        Ok(times.iter().map(|&t| self.bilinear(&c, &c, t)).collect())
    }

    /// κ = β² ⟨v, S⁺ v⟩ with S⁺ the pseudo-inverse above the threshold.
    pub fn kappa_direct(&self, band: &SampledBand) -> Result<ConductivityResult> {
        let d = band.dim();
        let c = self.coefficients(band)?;
        let mut overlap = 0.0f64;
        for ca in &c {
            let total = ca.norm();
            let null: f64 = ca
                .iter()
                .zip(self.eig.values.iter())
                .filter(|(_, &l)| l < self.threshold)
                .map(|(x, _)| x * x)
                .sum::<f64>()
                .sqrt();
            if total > 0.0 {
                overlap = overlap.max(null / total);
            }
        }
        if overlap > NULL_OVERLAP_TOL {
            return Err(Error::Divergent { overlap });
        }
        let inv = |ca: &DVector<f64>, cb: &DVector<f64>| -> f64 {
            ca.iter()
                .zip(cb.iter())
                .zip(self.eig.values.iter())
                .filter(|(_, &l)| l >= self.threshold)
                .map(|((x, y), l)| x * y / l)
                .sum::<f64>()
        };
        let mut kappa = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                kappa[a * d + b] = self.beta * self.beta * self.weight * inv(&c[a], &c[b]);
            }
        }
        // S · S⁺ v should equal v minus its null-space part.
        let mut residual = 0.0f64;
        for ca in &c {
            let mut r = 0.0;
            let mut norm = 0.0;
            for (x, &l) in ca.iter().zip(self.eig.values.iter()) {
                let back = if l >= self.threshold { l * (x / l) } else { 0.0 };
                let target = if l >= self.threshold { *x } else { 0.0 };
                r += (back - target).powi(2);
                norm += x * x;
            }
            if norm > 0.0 {
                residual = residual.max((r / norm).sqrt());
            }
        }
        Ok(ConductivityResult {
            kappa,
            dim: d,
            route: Route::DirectSolve,
            diagnostics: KappaDiagnostics {
                null_dim: self.null_dim(),
                threshold: self.threshold,
                null_overlap: overlap,
                solver_residual: residual,
                truncation: 0.0,
            },
        })
    }

    /// κ = β² ∫₀^T C(t) dt by the trapezoid rule on a geometric grid from
    /// 10⁻³/λ_max to T = 10/λ_gap.
    pub fn kappa_time_integral(&self, band: &SampledBand, points: usize) -> Result<ConductivityResult> {
        let direct = self.kappa_direct(band)?; // same divergence test
        let gap = self.gap().ok_or_else(|| Error::Divergent { overlap: 1.0 })?;
        let t0 = 1e-3 / self.lambda_max();
        let t_end = 10.0 / gap;
        let points = points.max(16);
        let ratio = (t_end / t0).powf(1.0 / (points - 1) as f64);
        let mut times = vec![0.0];
        times.extend((0..points).map(|i| t0 * ratio.powi(i as i32)));
        let series = self.correlation(band, &times)?;
        let d = band.dim();
        let mut kappa = vec![0.0; d * d];
        for (i, k) in kappa.iter_mut().enumerate() {
            let (a, b) = (i / d, i % d);
            let y = series.component(a, b);
            *k = self.beta * self.beta * trapezoid(&times, &y);
        }
        let c = self.coefficients(band)?;
        let tail: f64 = (0..d)
            .map(|a| {
                self.weight
                    * c[a]
                        .iter()
                        .zip(self.eig.values.iter())
                        .filter(|(_, &l)| l >= self.threshold)
                        .map(|(x, l)| x * x * (-l * t_end).exp() / l)
                        .sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(ConductivityResult {
            kappa,
            dim: d,
            route: Route::TimeIntegral,
            diagnostics: KappaDiagnostics { truncation: self.beta * self.beta * tail, ..direct.diagnostics },
        })
    }
}

pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    DirectSolve,
    TimeIntegral,
    Rta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KappaDiagnostics {
    pub null_dim: usize,
    pub threshold: f64,
    pub null_overlap: f64,
    pub solver_residual: f64,
    /// Estimated tail beyond the integration window (time-integral route).
    pub truncation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductivityResult {
    /// κ_kin, d×d row-major, kinetic units.
    pub kappa: Vec<f64>,
    pub dim: usize,
    pub route: Route,
    pub diagnostics: KappaDiagnostics,
}

impl ConductivityResult {
    pub fn along(&self, ell: &[f64]) -> f64 {
        let d = self.dim;
        (0..d * d).map(|i| ell[i / d] * self.kappa[i] * ell[i % d]).sum()
    }

    /// κ(λ) = λ^{−2} κ_kin.
    pub fn at_coupling(&self, lambda: f64) -> Vec<f64> {
        self.kappa.iter().map(|k| k / (lambda * lambda)).collect()
    }
}

/// τ(k) = W W̃ / V(k); nodes with V = 0 get τ = ∞.
pub fn relaxation_time(l: &CollisionMatrixL, w: &OccupationProfile) -> Result<Vec<f64>> {
    let (v, _) = v_and_i_split(l);
    relaxation_time_from_rates(&v, w)
}

pub fn relaxation_time_from_rates(v: &[f64], w: &OccupationProfile) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(Error::Dimension("rate and occupation lengths differ".into()));
    }
    Ok(w.weight().iter().zip(v).map(|(m, &r)| if r > 0.0 { m / r } else { f64::INFINITY }).collect())
}

/// Which weight multiplies e^{−t/τ} in the RTA sum.
#[derive(Clone, Debug, PartialEq)]
pub enum RtaWeighting {
    /// (2π)^{−2}⟨(ℓ·∇ω)ω, e^{−t/τ}(ℓ·∇ω)ω⟩; at t = 0 equals the upper bound.
    Literal,
    /// ⟨j, M e^{−t/τ} j⟩; at t = 0 equals C_kin(0) and integrates to κ with L → V.
    Equilibrium(Vec<f64>),
}

pub fn rta_correlation(
    tau: &[f64],
    band: &SampledBand,
    times: &[f64],
    weighting: &RtaWeighting,
) -> Result<CorrelationSeries> {
    let d = band.dim();
    if tau.len() != band.len() {
        return Err(Error::Dimension("tau length differs from the grid".into()));
    }
    let w = band.grid().weight();
    let js: Vec<Vec<f64>> =
        axis_directions(d).iter().map(|e| current_weight(band, e).map(|j| j.values)).collect::<Result<_>>()?;
    let mweight: Vec<f64> = match weighting {
        RtaWeighting::Literal => vec![1.0; band.len()],
        RtaWeighting::Equilibrium(m) => {
            if m.len() != band.len() {
                return Err(Error::Dimension("weight length differs from the grid".into()));
            }
            m.clone()
        }
    };
    let mut non_decaying = 0.0;
    for i in 0..band.len() {
        if tau[i].is_infinite() {
            non_decaying += w * mweight[i] * js.iter().map(|j| j[i] * j[i]).sum::<f64>();
        }
    }
    let values = times
        .iter()
        .map(|&t| {
            let mut m = vec![0.0; d * d];
            for i in 0..band.len() {
                let decay = if tau[i].is_infinite() { 1.0 } else { (-t.abs() / tau[i]).exp() };
                let base = w * mweight[i] * decay;
                for a in 0..d {
                    for b in 0..d {
                        m[a * d + b] += base * js[a][i] * js[b][i];
                    }
                }
            }
            m
        })
        .collect();
    let label = match weighting {
        RtaWeighting::Literal => "rta-literal",
        RtaWeighting::Equilibrium(_) => "rta-equilibrium",
    };
    Ok(CorrelationSeries {
        times: times.to_vec(),
        values,
        dim: d,
        meta: SeriesMeta { label: label.into(), non_decaying, n: band.grid().n(), ..SeriesMeta::default() },
    })
}

/// Upper bound (2π)^{−2}⟨(ℓ·∇ω)ω, (ℓ·∇ω)ω⟩ = ⟨j, j⟩.
pub fn correlation_bound(band: &SampledBand, ell: &[f64]) -> Result<f64> {
    let j = current_weight(band, ell)?;
    Ok(band.inner(&j.values, &j.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Exponential,
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Rate for the exponential, exponent p of t^{−p} for the power law.
    pub parameter: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Sum of squared log residuals: [exponential, power law].
    pub rss: [f64; 2],
}

/// Least-squares fit of log C against t and against log t over [lo, hi].
pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(t, _)| **t >= lo && **t <= hi).map(|(t, c)| (*t, *c)).collect();
    if pts.len() < 5 {
        return error::config(format!("fit window holds {} samples, need at least 5", pts.len()));
    }
    if pts.iter().any(|(t, c)| !(*c > 0.0) || !(*t > 0.0)) {
        return error::domain("fit window must hold positive times and values");
    }
    let y: Vec<f64> = pts.iter().map(|(_, c)| c.ln()).collect();
    let xe: Vec<f64> = pts.iter().map(|(t, _)| *t).collect();
    let xp: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let (se, ee, re) = linear_fit(&xe, &y);
    let (sp, ep, rp) = linear_fit(&xp, &y);
    let (model, parameter, stderr) =
        if rp <= re { (DecayModel::PowerLaw, -sp, ep) } else { (DecayModel::Exponential, -se, ee) };
    Ok(DecayFit { model, parameter, stderr, samples: pts.len(), rss: [re, rp] })
}

/// Slope, its standard error and the residual sum of squares.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (slope, se, rss)
}

/// Geometric time grid with `n` points on [t0, t1].
pub fn geometric_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let r = (t1 / t0).powf(1.0 / (n.max(2) - 1) as f64);
    (0..n).map(|i| t0 * r.powi(i as i32)).collect()
}

pub fn validate_direction(ell: &[f64], dim: usize) -> Result<Vec<f64>> {
    unit_direction(ell, dim)
}

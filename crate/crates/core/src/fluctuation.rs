//! Gaussian fluctuation theory: the Langevin equation dξ = Aξ dt + B dW for
//! phonon-number fluctuations around equilibrium.
//!
//! Paths are stored in the nodal coordinates x = √w ξ (w the quadrature
//! weight), for which the stationary covariance is diag(M), M = W W̃, and
//! ξ(f) = ∫ f ξ dk becomes √w fᵀx.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{flat_generator, CollisionMatrixL};
use crate::equilibrium::OccupationProfile;
use crate::error::{self, Error, Result};
use crate::linalg::SymEigen;

/// Largest admissible dt in units of 1/ρ(S).
pub const STABILITY_MARGIN: f64 = 0.1;

/// B = U (2Λ)^{1/2} from L = U Λ Uᵀ, negative eigenvalues clipped to zero.
pub fn noise_factor(l: &CollisionMatrixL) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(&l.operator())?;
    let mut b = eig.vectors.clone();
    for (c, &lam) in eig.values.iter().enumerate() {
        b.column_mut(c).scale_mut((2.0 * lam.max(0.0)).sqrt());
    }
    Ok(b)
}

/// Diagonal of C: W W̃ (W² classically).
pub fn equal_time_covariance(w: &OccupationProfile) -> Vec<f64> {
    w.weight()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EulerMaruyama,
    /// Exact transition of the Ornstein-Uhlenbeck process over one step.
    ExactOu,
}

#[derive(Clone, Debug)]
pub struct LangevinModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: Vec<f64>,
    pub weight: f64,
    l_norm: f64,
    s_eig: SymEigen,
}

impl LangevinModel {
    /// Builds A, B, C and asserts the fluctuation-dissipation relation.
    pub fn new(l: &CollisionMatrixL, w: &OccupationProfile) -> Result<Self> {
        let a = flat_generator(l, w)?;
        let b = noise_factor(l)?;
        let c = equal_time_covariance(w);
        let op = l.operator();
        let l_norm = SymEigen::new(&op)?.spectral_radius();
        let n = c.len();
        let mut s = op;
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] /= (c[i] * c[j]).sqrt();
            }
        }
        let s_eig = SymEigen::new(&s)?;
        let model = Self { a, b, c, weight: l.grid.weight(), l_norm, s_eig };
        let r = model.fdt_residual();
        if r > 1e-10 * l_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Inconsistent(format!("FDT residual {r:.3e} exceeds 1e-10 ||L||")));
        }
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn l_norm(&self) -> f64 {
        self.l_norm
    }

    /// ‖AC + CAᵀ + BBᵀ‖_max.
    pub fn fdt_residual(&self) -> f64 {
        let cm = DMatrix::from_diagonal(&DVector::from_column_slice(&self.c));
        let ac = &self.a * &cm;
        let r = &ac + ac.transpose() + &self.b * self.b.transpose();
        r.amax()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.s_eig.spectral_radius()
    }

    pub fn max_dt(&self) -> f64 {
        let rho = self.spectral_radius();
        if rho == 0.0 {
            f64::INFINITY
        } else {
            STABILITY_MARGIN / rho
        }
    }

    /// ⟨g, e^{At} C f⟩ = w gᵀ M^{1/2} e^{−St} M^{1/2} f.
    pub fn theory(&self, f: &[f64], g: &[f64], times: &[f64]) -> Vec<f64> {
        let sq: Vec<f64> = self.c.iter().map(|m| m.sqrt()).collect();
        let vf = DVector::from_iterator(self.len(), f.iter().zip(&sq).map(|(a, b)| a * b));
        let vg = DVector::from_iterator(self.len(), g.iter().zip(&sq).map(|(a, b)| a * b));
        let cf = self.s_eig.project(&vf);
        let cg = self.s_eig.project(&vg);
        times
            .iter()
            .map(|&t| {
                self.weight
                    * cf.iter()
                        .zip(cg.iter())
                        .zip(self.s_eig.values.iter())
                        .map(|((x, y), l)| x * y * (-l.max(0.0) * t.abs()).exp())
                        .sum::<f64>()
            })
            .collect()
    }

    /// The same covariance through the matrix exponential of the
    /// non-symmetric generator A.
    pub fn theory_expm(&self, f: &[f64], g: &[f64], t: f64) -> f64 {
        let e = (&self.a * t.abs()).exp();
        let mf = DVector::from_iterator(self.len(), f.iter().zip(&self.c).map(|(a, b)| a * b));
        let y = e * mf;
        self.weight * g.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Monte-Carlo estimate of ⟨ξ_t(g) ξ_0(f)⟩ at t = lag·dt from stationary starts.
    pub fn simulate(&self, req: &SimulationRequest) -> Result<LagCovariance> {
        let max = self.max_dt();
        if !(req.dt > 0.0) || req.dt > max {
            return Err(Error::UnstableStep { dt: req.dt, max });
        }
        let n = self.len();
        if req.f.len() != n || req.g.len() != n {
            return Err(Error::Dimension("test functions must have one value per node".into()));
        }
        if req.n_paths < 2 {
            return error::config("need at least two paths");
        }
        let steps = req.lags.iter().cloned().max().unwrap_or(0);
        let stepper = Stepper::new(self, req.dt, req.scheme);
        let sw = self.weight.sqrt();
        let fv = DVector::from_iterator(n, req.f.iter().map(|x| sw * x));
        let gv = DVector::from_iterator(n, req.g.iter().map(|x| sw * x));
        let sqrt_c: Vec<f64> = self.c.iter().map(|m| m.sqrt()).collect();

        // One row per path: products at each lag, then ξ_T(g) ξ_T(f) at the end.
        let rows: Vec<Vec<f64>> = (0..req.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = ChaCha20Rng::seed_from_u64(req.seed);
                rng.set_stream(p as u64);
                let mut x = DVector::from_iterator(
                    n,
                    sqrt_c.iter().map(|s| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s * z
                    }),
                );
                let xi0_f = fv.dot(&x);
                let mut out = vec![0.0; req.lags.len() + 1];
                let mut scratch = Scratch::new(n);
                for step in 0..=steps {
                    for (o, &lag) in out.iter_mut().zip(&req.lags) {
                        if lag == step {
                            *o = gv.dot(&x) * xi0_f;
                        }
                    }
                    if step < steps {
                        stepper.advance(&mut x, &mut scratch, &mut rng);
                    }
                }
                out[req.lags.len()] = gv.dot(&x) * fv.dot(&x);
                out
            })
            .collect();

        let np = req.n_paths as f64;
        let cols = req.lags.len() + 1;
        let mut mean = vec![0.0; cols];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= np);
        let mut var = vec![0.0; cols];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let stderr: Vec<f64> = var.iter().map(|v| (v / (np - 1.0) / np).sqrt()).collect();
        let times: Vec<f64> = req.lags.iter().map(|&l| l as f64 * req.dt).collect();
        let theory = self.theory(&req.f, &req.g, &times);
        let equal_time_theory = self.theory(&req.f, &req.g, &[0.0])[0];
        Ok(LagCovariance {
            times,
            mean: mean[..cols - 1].to_vec(),
            stderr: stderr[..cols - 1].to_vec(),
            theory,
            end_time: steps as f64 * req.dt,
            end_equal_time: mean[cols - 1],
            end_equal_time_stderr: stderr[cols - 1],
            equal_time_theory,
            seed: req.seed,
            n_paths: req.n_paths,
            dt: req.dt,
            scheme: req.scheme,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SimulationRequest {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub dt: f64,
    /// Lags in steps of dt.
    pub lags: Vec<usize>,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCovariance {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub theory: Vec<f64>,
    pub end_time: f64,
    pub end_equal_time: f64,
    pub end_equal_time_stderr: f64,
    pub equal_time_theory: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub scheme: Scheme,
}

impl LagCovariance {
    /// Largest |mean − theory| / stderr over the lags.
    pub fn max_z(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.theory)
            .zip(&self.stderr)
            .map(|((m, t), s)| {
                if *s > 0.0 {
                    (m - t).abs() / s
                } else if m == t {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

struct Scratch {
    z: DVector<f64>,
    y: DVector<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { z: DVector::zeros(n), y: DVector::zeros(n) }
    }
}

/// x ← P x + Q z with z standard normal.
struct Stepper {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl Stepper {
    fn new(model: &LangevinModel, dt: f64, scheme: Scheme) -> Self {
        let n = model.len();
        match scheme {
            Scheme::EulerMaruyama => Self { p: DMatrix::identity(n, n) + &model.a * dt, q: &model.b * dt.sqrt() },
            Scheme::ExactOu => {
                // In y = M^{-1/2} x the process is dy = −S y dt + noise with unit
                // stationary covariance, so y ← e^{−S dt} y + (I − e^{−2S dt})^{1/2} z.
                let eig = &model.s_eig;
                let e = eig.apply_fn(|l| (-l.max(0.0) * dt).exp());
                let mut noise = eig.vectors.clone();
                for (c, &l) in eig.values.iter().enumerate() {
                    noise.column_mut(c).scale_mut((-(-2.0 * l.max(0.0) * dt).exp_m1()).sqrt());
                }
                let sq = DVector::from_iterator(n, model.c.iter().map(|m| m.sqrt()));
                let sq_inv = sq.map(|s| 1.0 / s);
                let p = DMatrix::from_diagonal(&sq) * e * DMatrix::from_diagonal(&sq_inv);
                let q = DMatrix::from_diagonal(&sq) * noise;
                Self { p, q }
            }
        }
    }

    fn advance(&self, x: &mut DVector<f64>, s: &mut Scratch, rng: &mut ChaCha20Rng) {
        for z in s.z.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        s.y.gemv(1.0, &self.p, x, 0.0);
        s.y.gemv(1.0, &self.q, &s.z, 1.0);
        std::mem::swap(x, &mut s.y);
    }
}

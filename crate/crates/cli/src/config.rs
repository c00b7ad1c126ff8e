//! Run configuration: one flat TOML table. Every key is optional; unknown keys
//! are rejected. Validation happens in full before any numerics run.

use std::path::PathBuf;

use phkin::collision::{Channel, DeltaResolver, DifferenceVertex, Vertex};
use phkin::equilibrium::{unit_direction, Statistics};
use phkin::fluctuation::Scheme;
use phkin::lattice::{BZGrid, Dispersion, ElasticConstants, Preset};
use phkin::microdyn::{Integrator, Nonlinearity, Sampler};
use phkin::transport::geometric_times;
use phkin::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub offset: Vec<i64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// fpu, nn-optical, fpu-beta or convex-optical; ignored when `alpha` is set.
    pub preset: String,
    /// Explicit elastic constants; partners at −x are filled in.
    pub alpha: Vec<AlphaEntry>,
    pub omega0: Option<f64>,
    pub dim: usize,
    pub n: usize,
    pub beta: f64,
    /// quantum or classical.
    pub statistics: String,
    /// Any of L3, L4p, L4t; L4 stands for both four-phonon channels.
    pub channels: Vec<String>,
    /// onsite or difference.
    pub cubic_vertex: String,
    pub cubic_alpha: Vec<AlphaEntry>,
    /// onsite, difference or fpu-beta.
    pub quartic_vertex: String,
    pub quartic_alpha: Vec<AlphaEntry>,
    /// gaussian, or exact-1d (rta only).
    pub resolver: String,
    pub eta0: f64,
    /// Coupling. Converts kinetic to microscopic time in reports; sets the MD potential.
    pub lambda: Option<f64>,
    /// Empty means the first lattice axis.
    pub direction: Vec<f64>,

    /// linear or geometric; the default depends on the subcommand.
    pub time_grid: Option<String>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub n_times: usize,

    /// equilibrium or literal.
    pub rta_weighting: String,
    pub fit_window: Option<[f64; 2]>,
    pub fit_input: Option<PathBuf>,
    pub fit_column: String,

    pub kappa_points: usize,
    /// Largest accepted relative gap between the two conductivity routes.
    pub kappa_tolerance: f64,

    pub seed: u64,
    pub n_paths: usize,
    /// euler-maruyama or exact-ou.
    pub scheme: String,
    /// Langevin step as a fraction of the stability limit.
    pub dt_fraction: f64,
    /// Kinetic lag times; empty means {0, ¼, ½, 1, 2} / gap.
    pub lag_times: Vec<f64>,

    /// Lattice side length for molecular dynamics.
    pub md_side: usize,
    /// harmonic, cubic or quartic.
    pub md_nonlinearity: String,
    pub stabilizer: bool,
    pub md_dt: Option<f64>,
    pub md_t_max: f64,
    pub md_samples: usize,
    pub md_stride: Option<usize>,
    /// velocity-verlet or yoshida4.
    pub integrator: String,
    /// harmonic or metropolis.
    pub sampler: String,
    pub proposals: usize,
    /// Defaults to true for acoustic bands.
    pub pin_zero_mode: Option<bool>,
    pub bootstrap: usize,

    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "nn-optical".into(),
            alpha: Vec::new(),
            omega0: None,
            dim: 1,
            n: 64,
            beta: 1.0,
            statistics: "quantum".into(),
            channels: vec!["L4p".into()],
            cubic_vertex: "onsite".into(),
            cubic_alpha: Vec::new(),
            quartic_vertex: "onsite".into(),
            quartic_alpha: Vec::new(),
            resolver: "gaussian".into(),
            eta0: 2.0,
            lambda: None,
            direction: Vec::new(),
            time_grid: None,
            t_min: None,
            t_max: None,
            n_times: 200,
            rta_weighting: "equilibrium".into(),
            fit_window: None,
            fit_input: None,
            fit_column: "C00".into(),
            kappa_points: 2000,
            kappa_tolerance: 0.02,
            seed: 1,
            n_paths: 10_000,
            scheme: "euler-maruyama".into(),
            dt_fraction: 0.2,
            lag_times: Vec::new(),
            md_side: 64,
            md_nonlinearity: "quartic".into(),
            stabilizer: true,
            md_dt: None,
            md_t_max: 100.0,
            md_samples: 200,
            md_stride: None,
            integrator: "velocity-verlet".into(),
            sampler: "harmonic".into(),
            proposals: 20,
            pin_zero_mode: None,
            bootstrap: 200,
            workers: None,
            output: None,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    /// Classical FPU-β chain, exact roots, N = 512.
    pub fn fpu_recipe() -> Self {
        Self {
            preset: "fpu-beta".into(),
            n: 512,
            statistics: "classical".into(),
            quartic_vertex: "fpu-beta".into(),
            resolver: "exact-1d".into(),
            n_times: 400,
            ..Self::default()
        }
    }

    /// Everything that fixes an assembled operator, for cache keys.
    pub fn operator_key(&self, channel: Channel) -> serde_json::Value {
        serde_json::json!({
            "preset": self.preset, "alpha": self.alpha, "omega0": self.omega0, "dim": self.dim,
            "n": self.n, "beta": self.beta, "statistics": self.statistics,
            "cubic_vertex": self.cubic_vertex, "cubic_alpha": self.cubic_alpha,
            "quartic_vertex": self.quartic_vertex, "quartic_alpha": self.quartic_alpha,
            "eta0": self.eta0, "channel": channel.name(), "workers": self.workers,
        })
    }
}

/// Which inputs a subcommand consumes, so irrelevant fields are not validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Needs {
    Band,
    Operator,
    Kappa,
    Fluctuate,
    Rta,
    Fit,
    Md,
}

/// A validated configuration in library types.
#[derive(Clone, Debug)]
pub struct Model {
    pub disp: Dispersion,
    pub grid: BZGrid,
    pub stats: Statistics,
    pub channels: Vec<Channel>,
    pub cubic: Vertex,
    pub quartic: Vertex,
    pub resolver: DeltaResolver,
    pub direction: Vec<f64>,
    pub workers: usize,
}

impl Model {
    pub fn vertex_for(&self, channel: Channel) -> &Vertex {
        if channel == Channel::L3 {
            &self.cubic
        } else {
            &self.quartic
        }
    }
}

fn bad<T>(field: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Config(format!("{field}: {msg}")))
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) | Error::Domain(m) => Error::Config(format!("{name}: {m}")),
        other => other,
    })
}

fn pairs(t: &[AlphaEntry]) -> Vec<(Vec<i64>, f64)> {
    t.iter().map(|a| (a.offset.clone(), a.value)).collect()
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        bad(name, format!("must be positive and finite, got {x}"))
    }
}

pub fn parse_preset(s: &str) -> Result<Preset> {
    Ok(match s {
        "fpu" => Preset::Fpu,
        "nn-optical" => Preset::NnOptical,
        "fpu-beta" => Preset::FpuBeta,
        "convex-optical" => Preset::ConvexOptical,
        _ => return bad("preset", format!("unknown preset {s:?} (fpu, nn-optical, fpu-beta, convex-optical)")),
    })
}

pub fn parse_channels(list: &[String]) -> Result<Vec<Channel>> {
    let mut out = Vec::new();
    for item in list {
        for s in item.split('+').map(str::trim) {
            let add: &[Channel] = match s {
                "L3" => &[Channel::L3],
                "L4p" => &[Channel::L4p],
                "L4t" => &[Channel::L4t],
                "L4" => &[Channel::L4p, Channel::L4t],
                _ => return bad("channels", format!("unknown channel {s:?} (L3, L4p, L4t, L4)")),
            };
            for c in add {
                if out.contains(c) {
                    return bad("channels", format!("{} listed twice", c.name()));
                }
                out.push(*c);
            }
        }
    }
    if out.is_empty() {
        return bad("channels", "at least one channel is required");
    }
    Ok(out)
}

impl RunConfig {
    pub fn validate(&self, needs: Needs) -> Result<Model> {
        if self.dim == 0 || self.dim > 3 {
            return bad("dim", format!("must be 1, 2 or 3, got {}", self.dim));
        }
        if self.n < 2 || self.n % 2 != 0 {
            return bad("n", format!("must be even and at least 2, got {}", self.n));
        }
        positive("beta", self.beta)?;
        if let Some(w0) = self.omega0 {
            if !(w0 >= 0.0 && w0.is_finite()) {
                return bad("omega0", format!("must be finite and non-negative, got {w0}"));
            }
        }
        let disp = if self.alpha.is_empty() {
            let preset = parse_preset(&self.preset)?;
            field("preset", preset.dispersion(self.dim, self.omega0))?
        } else {
            let e = field("alpha", ElasticConstants::new(self.dim, pairs(&self.alpha)))?;
            field("omega0", Dispersion::new(e, self.omega0.unwrap_or(0.0)))?
        };
        let grid = field("n", BZGrid::new(self.dim, self.n))?;
        let stats = match self.statistics.as_str() {
            "quantum" => Statistics::Quantum,
            "classical" => Statistics::Classical,
            s => return bad("statistics", format!("unknown statistics {s:?} (quantum, classical)")),
        };
        let channels = parse_channels(&self.channels)?;
        let cubic = match self.cubic_vertex.as_str() {
            "onsite" => Vertex::onsite_cubic(),
            "difference" => {
                if self.cubic_alpha.is_empty() {
                    return bad("cubic_alpha", "required by a difference cubic vertex");
                }
                Vertex::Difference(field("cubic_alpha", DifferenceVertex::cubic(self.dim, pairs(&self.cubic_alpha)))?)
            }
            s => return bad("cubic_vertex", format!("unknown vertex {s:?} (onsite, difference)")),
        };
        let quartic = match self.quartic_vertex.as_str() {
            "onsite" => Vertex::onsite_quartic(),
            "fpu-beta" if self.dim == 1 => Vertex::Difference(DifferenceVertex::fpu_beta()),
            "fpu-beta" => return bad("quartic_vertex", "fpu-beta is one-dimensional"),
            "difference" => {
                if self.quartic_alpha.is_empty() {
                    return bad("quartic_alpha", "required by a difference quartic vertex");
                }
                Vertex::Difference(field(
                    "quartic_alpha",
                    DifferenceVertex::quartic(self.dim, pairs(&self.quartic_alpha)),
                )?)
            }
            s => return bad("quartic_vertex", format!("unknown vertex {s:?} (onsite, difference, fpu-beta)")),
        };
        let resolver = match self.resolver.as_str() {
            "gaussian" => {
                positive("eta0", self.eta0)?;
                DeltaResolver::gaussian(self.eta0)
            }
            "exact-1d" => {
                if needs != Needs::Rta {
                    return bad("resolver", "exact-1d yields relaxation rates only; use it with rta or reproduce-fpu");
                }
                if self.dim != 1 {
                    return bad("resolver", "exact-1d needs dim = 1");
                }
                if channels.contains(&Channel::L4t) {
                    return bad("channels", "exact-1d resolves L3 and L4p only");
                }
                DeltaResolver::exact_1d()
            }
            s => return bad("resolver", format!("unknown resolver {s:?} (gaussian, exact-1d)")),
        };
        let direction = if self.direction.is_empty() {
            let mut e = vec![0.0; self.dim];
            e[0] = 1.0;
            e
        } else {
            field("direction", unit_direction(&self.direction, self.dim))?
        };
        if let Some(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return bad("lambda", format!("must be finite and non-negative, got {l}"));
            }
        }
        let workers = self.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return bad("workers", "must be at least 1");
        }
        self.validate_times()?;
        match needs {
            Needs::Rta => {
                self.rta_weighting()?;
            }
            Needs::Fit => {
                if self.fit_input.is_none() {
                    return bad("fit_input", "fit needs a series CSV (--input or fit_input)");
                }
            }
            Needs::Kappa => {
                if self.kappa_points < 10 {
                    return bad("kappa_points", format!("need at least 10, got {}", self.kappa_points));
                }
                positive("kappa_tolerance", self.kappa_tolerance)?;
            }
            Needs::Fluctuate => {
                if self.n_paths < 2 {
                    return bad("n_paths", format!("need at least 2, got {}", self.n_paths));
                }
                self.scheme()?;
                if !(self.dt_fraction > 0.0 && self.dt_fraction <= 1.0) {
                    return bad("dt_fraction", format!("must lie in (0, 1], got {}", self.dt_fraction));
                }
                if self.lag_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return bad("lag_times", "lags must be finite and non-negative");
                }
            }
            Needs::Md => {
                if self.lambda.is_none() {
                    return bad("lambda", "md needs the coupling");
                }
                if self.md_side < 2 {
                    return bad("md_side", format!("must be at least 2, got {}", self.md_side));
                }
                positive("md_t_max", self.md_t_max)?;
                if let Some(dt) = self.md_dt {
                    positive("md_dt", dt)?;
                }
                if self.md_samples < 2 {
                    return bad("md_samples", format!("need at least 2, got {}", self.md_samples));
                }
                if self.md_stride == Some(0) {
                    return bad("md_stride", "must be at least 1");
                }
                self.integrator()?;
                self.sampler()?;
                self.md_nonlinearity_kind()?;
            }
            Needs::Band | Needs::Operator => {}
        }
        if let Some([a, b]) = self.fit_window {
            if !(a > 0.0 && b > a && b.is_finite()) {
                return bad("fit_window", format!("need 0 < lo < hi, got [{a}, {b}]"));
            }
        }
        Ok(Model { disp, grid, stats, channels, cubic, quartic, resolver, direction, workers })
    }

    fn validate_times(&self) -> Result<()> {
        if self.n_times < 2 {
            return bad("n_times", format!("need at least 2, got {}", self.n_times));
        }
        if let Some(g) = &self.time_grid {
            if g != "linear" && g != "geometric" {
                return bad("time_grid", format!("unknown grid {g:?} (linear, geometric)"));
            }
        }
        if let Some(t) = self.t_min {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("t_min", format!("must be finite and non-negative, got {t}"));
            }
        }
        if let Some(t) = self.t_max {
            positive("t_max", t)?;
            if self.t_min.is_some_and(|lo| lo >= t) {
                return bad("t_max", "must exceed t_min");
            }
        }
        if self.time_grid.as_deref() == Some("geometric") && self.t_min == Some(0.0) {
            return bad("t_min", "a geometric grid needs t_min > 0");
        }
        Ok(())
    }

    /// Time grid with subcommand defaults filling unset fields.
    pub fn times(&self, grid: &str, lo: f64, hi: f64) -> Vec<f64> {
        let grid = self.time_grid.as_deref().unwrap_or(grid);
        let hi = self.t_max.unwrap_or(hi);
        if grid == "geometric" {
            let lo = self.t_min.unwrap_or(lo.min(hi / 10.0));
            geometric_times(lo, hi, self.n_times)
        } else {
            let lo = self.t_min.unwrap_or(0.0);
            (0..self.n_times).map(|i| lo + (hi - lo) * i as f64 / (self.n_times - 1) as f64).collect()
        }
    }

    pub fn rta_weighting(&self) -> Result<bool> {
        match self.rta_weighting.as_str() {
            "equilibrium" => Ok(true),
            "literal" => Ok(false),
            s => bad("rta_weighting", format!("unknown weighting {s:?} (equilibrium, literal)")),
        }
    }

    pub fn scheme(&self) -> Result<Scheme> {
        match self.scheme.as_str() {
            "euler-maruyama" => Ok(Scheme::EulerMaruyama),
            "exact-ou" => Ok(Scheme::ExactOu),
            s => bad("scheme", format!("unknown scheme {s:?} (euler-maruyama, exact-ou)")),
        }
    }

    pub fn integrator(&self) -> Result<Integrator> {
        match self.integrator.as_str() {
            "velocity-verlet" => Ok(Integrator::VelocityVerlet),
            "yoshida4" => Ok(Integrator::Yoshida4),
            s => bad("integrator", format!("unknown integrator {s:?} (velocity-verlet, yoshida4)")),
        }
    }

    pub fn sampler(&self) -> Result<Sampler> {
        match self.sampler.as_str() {
            "harmonic" => Ok(Sampler::Harmonic),
            "metropolis" if self.proposals > 0 => Ok(Sampler::Metropolis { proposals: self.proposals }),
            "metropolis" => bad("proposals", "must be at least 1"),
            s => bad("sampler", format!("unknown sampler {s:?} (harmonic, metropolis)")),
        }
    }

    fn md_nonlinearity_kind(&self) -> Result<&str> {
        match self.md_nonlinearity.as_str() {
            s @ ("harmonic" | "cubic" | "quartic") => Ok(s),
            s => bad("md_nonlinearity", format!("unknown kind {s:?} (harmonic, cubic, quartic)")),
        }
    }

    pub fn nonlinearity(&self, model: &Model) -> Result<Nonlinearity> {
        Ok(match (self.md_nonlinearity_kind()?, &model.cubic, &model.quartic) {
            ("harmonic", _, _) => Nonlinearity::Harmonic,
            ("cubic", Vertex::Difference(v), _) => {
                Nonlinearity::Difference { vertex: v.clone(), stabilizer: self.stabilizer }
            }
            ("cubic", _, _) => Nonlinearity::OnsiteCubic { stabilizer: self.stabilizer },
            (_, _, Vertex::Difference(v)) => Nonlinearity::Difference { vertex: v.clone(), stabilizer: false },
            _ => Nonlinearity::OnsiteQuartic,
        })
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Layers `over` onto `base`, key by key.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        base.insert(k, v);
    }
}

pub fn to_table(cfg: &RunConfig) -> Result<toml::Table> {
    let s = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    toml::from_str(&s).map_err(|e| Error::Config(e.to_string()))
}

pub fn from_table(t: &toml::Table) -> Result<RunConfig> {
    let s = toml::to_string(t).map_err(|e| Error::Config(e.to_string()))?;
    toml::from_str(&s).map_err(|e| Error::Config(e.message().to_string()))
}

/// `key=value`, with the value read as TOML and falling back to a bare string.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
    let (k, v) = (k.trim(), v.trim());
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_lists_expand_and_reject_repeats() {
        let c = parse_channels(&["L3+L4".into()]).unwrap();
        assert_eq!(c, vec![Channel::L3, Channel::L4p, Channel::L4t]);
        assert!(parse_channels(&["L4".into(), "L4p".into()]).is_err());
        assert!(parse_channels(&[]).is_err());
    }

    #[test]
    fn assignments_parse_as_toml_with_a_string_fallback() {
        assert_eq!(parse_assignment("n=16").unwrap().1, toml::Value::Integer(16));
        assert_eq!(parse_assignment("fit_window = [1.0, 2.0]").unwrap().1.as_array().unwrap().len(), 2);
        assert_eq!(parse_assignment("quartic_vertex=fpu-beta").unwrap().1, toml::Value::String("fpu-beta".into()));
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml_and_validate() {
        let cfg = RunConfig::default();
        assert_eq!(from_table(&to_table(&cfg).unwrap()).unwrap(), cfg);
        for needs in [Needs::Band, Needs::Operator, Needs::Kappa, Needs::Fluctuate, Needs::Rta] {
            cfg.validate(needs).unwrap();
        }
        RunConfig::fpu_recipe().validate(Needs::Rta).unwrap();
        assert!(cfg.validate(Needs::Md).is_err());
    }
}

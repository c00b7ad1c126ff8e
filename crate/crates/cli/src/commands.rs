use std::fmt::Write as _;
use std::fs;

use phkin::cache::{self, MatrixCache};
use phkin::collision::exact::{v_l3, v_l4p};
use phkin::collision::{Channel, CollisionMatrixL, CollisionModel, DeltaResolver};
use phkin::equilibrium::{current_weight, equilibrium, write_profile_csv, OccupationProfile};
use phkin::fluctuation::{LangevinModel, SimulationRequest};
use phkin::lattice::SampledBand;
use phkin::linalg::{max_asymmetry, SymEigen};
use phkin::microdyn::{current_correlation, harmonic_current_variance, Crystal, Integrator, MdParams};
use phkin::transport::{
    correlation_bound, fit_decay, relaxation_time, relaxation_time_from_rates, rta_correlation, DecayFit,
    KineticSpectrum, RtaWeighting,
};
use phkin::{Error, Result};
use serde_json::json;

use crate::config::{Model, Needs, RunConfig};
use crate::output::{sha256_hex, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Dispersion,
    CollisionMatrix,
    Correlation,
    Kappa,
    Rta,
    Fit,
    Fluctuate,
    Md,
    ReproduceFpu,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Dispersion,
        Command::CollisionMatrix,
        Command::Correlation,
        Command::Kappa,
        Command::Rta,
        Command::Fit,
        Command::Fluctuate,
        Command::Md,
        Command::ReproduceFpu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Dispersion => "dispersion",
            Command::CollisionMatrix => "collision-matrix",
            Command::Correlation => "correlation",
            Command::Kappa => "kappa",
            Command::Rta => "rta",
            Command::Fit => "fit",
            Command::Fluctuate => "fluctuate",
            Command::Md => "md",
            Command::ReproduceFpu => "reproduce-fpu",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }

    pub fn needs(self) -> Needs {
        match self {
            Command::Dispersion => Needs::Band,
            Command::CollisionMatrix | Command::Correlation => Needs::Operator,
            Command::Kappa => Needs::Kappa,
            Command::Fluctuate => Needs::Fluctuate,
            Command::Rta | Command::ReproduceFpu => Needs::Rta,
            Command::Fit => Needs::Fit,
            Command::Md => Needs::Md,
        }
    }

    pub fn base_config(self) -> RunConfig {
        match self {
            Command::ReproduceFpu => RunConfig::fpu_recipe(),
            _ => RunConfig::default(),
        }
    }
}

/// Runs a validated command, writing artifacts into `out`. Returns a one-line summary.
/// A numerical failure after the artifacts are written is passed back as the error.
pub fn run(cmd: Command, cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    match cmd {
        Command::Dispersion => dispersion(cfg, model, out),
        Command::CollisionMatrix => collision_matrix(cfg, model, out),
        Command::Correlation => correlation(cfg, model, out),
        Command::Kappa => kappa(cfg, model, out),
        Command::Rta => rta(cfg, model, out).map(|r| r.0),
        Command::Fit => fit(cfg, out),
        Command::Fluctuate => fluctuate(cfg, model, out),
        Command::Md => md(cfg, model, out),
        Command::ReproduceFpu => reproduce_fpu(cfg, model, out),
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Inconsistent(e.to_string())
}

fn band_and_state(cfg: &RunConfig, model: &Model) -> Result<(SampledBand, OccupationProfile)> {
    let band = model.disp.sample(&model.grid)?;
    let w = equilibrium(&band, cfg.beta, model.stats)?;
    Ok((band, w))
}

fn operators(cfg: &RunConfig, model: &Model, band: &SampledBand) -> Result<Vec<CollisionMatrixL>> {
    let cache = cfg.cache_dir.as_ref().map(MatrixCache::new).transpose()?;
    model
        .channels
        .iter()
        .map(|&ch| {
            let build = || {
                CollisionModel::new(band.clone(), cfg.beta, model.stats, model.vertex_for(ch).clone(), model.resolver)?
                    .with_workers(model.workers)
                    .build(ch)
            };
            match &cache {
                Some(c) => {
                    let key = sha256_hex(&serde_json::to_vec(&cfg.operator_key(ch)).map_err(json_err)?);
                    c.get_or_build(&key[..16], ch, build)
                }
                None => build(),
            }
        })
        .collect()
}

fn summed(parts: &[CollisionMatrixL]) -> Result<CollisionMatrixL> {
    CollisionMatrixL::sum(&parts.iter().collect::<Vec<_>>())
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let row: Vec<String> = values.into_iter().map(|x| format!("{x:.17e}")).collect();
    writeln!(out, "{}", row.join(",")).expect("string write");
}

fn dispersion(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (band, w) = band_and_state(cfg, model)?;
    let mut csv = Vec::new();
    write_profile_csv(&band, &w, &mut csv)?;
    out.write("dispersion.csv", &csv)?;
    let summary = json!({
        "nodes": band.len(),
        "min_omega": band.min_omega(),
        "max_omega": band.max_omega(),
        "max_group_velocity": band.max_group_velocity(),
        "acoustic": model.disp.elastic().is_acoustic() && model.disp.omega0() == 0.0,
    });
    out.write_json("dispersion.json", &summary)?;
    Ok(format!("{} nodes, omega in [{:.6}, {:.6}]", band.len(), band.min_omega(), band.max_omega()))
}

fn collision_matrix(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (band, _) = band_and_state(cfg, model)?;
    let ls = operators(cfg, model, &band)?;
    let ones = vec![1.0; band.len()];
    let mut report = Vec::new();
    for l in &ls {
        let mut bytes = Vec::new();
        cache::write(l, &mut bytes)?;
        out.write(&format!("L_{}.phkl", l.channel.name()), &bytes)?;
        let op = l.operator();
        let eig = SymEigen::new(&op)?;
        report.push(json!({
            "channel": l.channel.name(),
            "eta": l.eta,
            "norm": l.norm()?,
            "max_asymmetry": max_asymmetry(&op),
            "min_eigenvalue": eig.min(),
            "max_eigenvalue": eig.max(),
            "energy_residual": l.invariant_residual(band.omega())?,
            "number_residual": l.invariant_residual(&ones)?,
            "tuples": l.diagnostics.tuples,
            "acoustic_warning": l.diagnostics.acoustic_warning,
        }));
    }
    out.write_json("collision.json", &report)?;
    let names: Vec<&str> = ls.iter().map(|l| l.channel.name()).collect();
    Ok(format!("assembled {} on {} nodes", names.join("+"), band.len()))
}

fn spectrum(
    cfg: &RunConfig,
    model: &Model,
) -> Result<(SampledBand, OccupationProfile, CollisionMatrixL, KineticSpectrum)> {
    let (band, w) = band_and_state(cfg, model)?;
    let l = summed(&operators(cfg, model, &band)?)?;
    let spec = KineticSpectrum::new(&l, &w, &band)?;
    Ok((band, w, l, spec))
}

/// Kinetic time scale: the inverse gap, or the inverse largest rate without one.
fn time_scale(spec: &KineticSpectrum) -> f64 {
    1.0 / spec.gap().unwrap_or(spec.lambda_max()).max(f64::MIN_POSITIVE)
}

fn correlation(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (band, _, _, spec) = spectrum(cfg, model)?;
    let scale = time_scale(&spec);
    let times = cfg.times("linear", scale / 100.0, 10.0 * scale);
    let series = spec.correlation(&band, &times)?;
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    out.write("correlation.csv", &csv)?;
    let along = series.along(&model.direction);
    let bound = correlation_bound(&band, &model.direction)?;
    let meta = json!({
        "meta": series.meta,
        "direction": model.direction,
        "gap": spec.gap(),
        "lambda_max": spec.lambda_max(),
        "null_dim": spec.null_dim(),
        "c0": along[0],
        "bound": bound,
        "max_over_bound": along.iter().cloned().fold(f64::MIN, f64::max) / bound,
        "microscopic_time_per_kinetic": cfg.lambda.map(|l| 1.0 / (l * l)),
    });
    out.write_json("correlation.json", &meta)?;
    Ok(format!("C(0) = {:.6e}, bound {:.6e}, {} times", along[0], bound, times.len()))
}

fn kappa(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (band, _, _, spec) = spectrum(cfg, model)?;
    let direct = match spec.kappa_direct(&band) {
        Ok(k) => k,
        Err(e @ Error::Divergent { .. }) => {
            out.write_json("kappa.json", &json!({ "divergent": true, "message": e.to_string() }))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let integral = spec.kappa_time_integral(&band, cfg.kappa_points)?;
    let (a, b) = (direct.along(&model.direction), integral.along(&model.direction));
    let rel = (b - a).abs() / a.abs();
    let report = json!({
        "direction": model.direction,
        "direct": direct,
        "time_integral": integral,
        "route_agreement": rel,
        "tolerance": cfg.kappa_tolerance,
        "kappa_at_coupling": cfg.lambda.map(|l| direct.at_coupling(l)),
    });
    out.write_json("kappa.json", &report)?;
    let summary = format!("kappa direct {a:.6e}, time integral {b:.6e}, route agreement {rel:.2e}");
    if rel > cfg.kappa_tolerance {
        return Err(Error::Inconsistent(format!("{summary} exceeds tolerance {}", cfg.kappa_tolerance)));
    }
    Ok(summary)
}

/// τ(k) from the assembled diagonal, or from exact 1D roots summed over channels.
fn lifetimes(cfg: &RunConfig, model: &Model, band: &SampledBand, w: &OccupationProfile) -> Result<Vec<f64>> {
    match model.resolver {
        DeltaResolver::Gaussian(_) => relaxation_time(&summed(&operators(cfg, model, band)?)?, w),
        DeltaResolver::Exact1d(settings) => {
            let n = band.len();
            let ks: Vec<f64> = (n / 2..n).map(|i| band.grid().node(i)[0]).collect();
            let mut v = vec![0.0; n];
            for &ch in &model.channels {
                let rates = match ch {
                    Channel::L3 => v_l3(&model.disp, cfg.beta, model.stats, &model.cubic, &settings, &ks)?,
                    _ => v_l4p(&model.disp, cfg.beta, model.stats, &model.quartic, &settings, &ks)?,
                };
                for (j, i) in (n / 2..n).enumerate() {
                    v[i] += rates.v[j];
                    v[band.grid().negate(i)] += rates.v[j];
                }
            }
            relaxation_time_from_rates(&v, w)
        }
    }
}

/// From the lifetime of the mode nearest |k| = 0.1 to a quarter of the longest one.
fn default_window(band: &SampledBand, tau: &[f64]) -> (f64, f64) {
    let tmax = tau.iter().cloned().filter(|t| t.is_finite()).fold(0.0, f64::max);
    let dist = |i: usize| (band.grid().node(i).iter().map(|k| k * k).sum::<f64>().sqrt() - 0.1).abs();
    let i01 = (0..band.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap_or(0);
    (tau[i01], tmax / 4.0)
}

fn rta(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<(String, Option<DecayFit>)> {
    let (band, w) = band_and_state(cfg, model)?;
    let tau = lifetimes(cfg, model, &band, &w)?;
    let finite: Vec<f64> = tau.iter().cloned().filter(|t| t.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Divergent { overlap: 1.0 });
    }
    let tmin = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmax = finite.iter().cloned().fold(0.0, f64::max);
    let times = cfg.times("geometric", tmin / 10.0, 10.0 * tmax);
    let weighting = if cfg.rta_weighting()? { RtaWeighting::Equilibrium(w.weight()) } else { RtaWeighting::Literal };
    let series = rta_correlation(&tau, &band, &times, &weighting)?;
    let mut csv = Vec::new();
    series.write_csv(&mut csv)?;
    out.write("rta.csv", &csv)?;
    let mut tcsv = String::new();
    let d = band.dim();
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((0..d).map(|j| format!("k{j}")));
    header.push("tau".into());
    writeln!(tcsv, "{}", header.join(",")).expect("string write");
    for (i, t) in tau.iter().enumerate() {
        write!(tcsv, "{i},").expect("string write");
        csv_row(&mut tcsv, band.grid().node(i).into_iter().chain([*t]));
    }
    out.write("tau.csv", tcsv.as_bytes())?;

    let window = cfg.fit_window.map(|[a, b]| (a, b)).unwrap_or_else(|| default_window(&band, &tau));
    let along = series.along(&model.direction);
    let fit = fit_decay(&times, &along, window).ok();
    let report = json!({
        "meta": series.meta,
        "weighting": cfg.rta_weighting,
        "direction": model.direction,
        "tau_range": [tmin, tmax],
        "bound": correlation_bound(&band, &model.direction)?,
        "fit_window": [window.0, window.1],
        "fit": fit,
    });
    out.write_json("rta.json", &report)?;
    let summary = match &fit {
        Some(f) => format!(
            "RTA series over {} times; {:?} fit parameter {:.4} ± {:.4}",
            times.len(),
            f.model,
            f.parameter,
            f.stderr
        ),
        None => format!("RTA series over {} times; no fit in window [{:.3e}, {:.3e}]", times.len(), window.0, window.1),
    };
    Ok((summary, fit))
}

fn fit(cfg: &RunConfig, out: &mut RunDir) -> Result<String> {
    let path = cfg.fit_input.as_ref().expect("validated");
    let bytes = fs::read(path)?;
    out.record_input(path, &bytes);
    let text = String::from_utf8(bytes).map_err(|_| Error::Config("fit_input: not UTF-8".into()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == cfg.fit_column)
        .ok_or_else(|| Error::Config(format!("fit_column: {:?} not in {header:?}", cfg.fit_column)))?;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (no, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let num = |j: usize| -> Result<f64> {
            cells
                .get(j)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("fit_input: row {} has no number in column {j}", no + 2)))
        };
        t.push(num(0)?);
        y.push(num(col)?);
    }
    let window = cfg.fit_window.map(|[a, b]| (a, b)).unwrap_or_else(|| {
        let pos: Vec<f64> = t.iter().cloned().filter(|x| *x > 0.0).collect();
        (pos.first().cloned().unwrap_or(0.0), pos.last().cloned().unwrap_or(0.0))
    });
    let f = fit_decay(&t, &y, window)?;
    out.write_json("fit.json", &json!({ "column": cfg.fit_column, "window": [window.0, window.1], "fit": f }))?;
    Ok(format!(
        "{:?} fit of {}: parameter {:.4} ± {:.4} over {} samples",
        f.model, cfg.fit_column, f.parameter, f.stderr, f.samples
    ))
}

fn fluctuate(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (band, w, l, spec) = spectrum(cfg, model)?;
    let langevin = LangevinModel::new(&l, &w)?;
    let dt = cfg.dt_fraction * langevin.max_dt();
    let scale = time_scale(&spec);
    let lag_times: Vec<f64> = if cfg.lag_times.is_empty() {
        [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|x| x * scale).collect()
    } else {
        cfg.lag_times.clone()
    };
    let lags: Vec<usize> = lag_times.iter().map(|t| (t / dt).round() as usize).collect();
    let j = current_weight(&band, &model.direction)?.values;
    let req =
        SimulationRequest { f: j.clone(), g: j, dt, lags, n_paths: cfg.n_paths, seed: cfg.seed, scheme: cfg.scheme()? };
    let res = langevin.simulate(&req)?;
    let mut csv = String::from("t,mean,stderr,theory\n");
    for i in 0..res.times.len() {
        csv_row(&mut csv, [res.times[i], res.mean[i], res.stderr[i], res.theory[i]]);
    }
    out.write("fluctuate.csv", csv.as_bytes())?;
    let z = res.max_z();
    out.write_json("fluctuate.json", &json!({ "result": res, "max_z": z, "direction": model.direction }))?;
    Ok(format!("{} paths, dt = {dt:.4e}: max |mean − theory|/stderr = {z:.2}", cfg.n_paths))
}

fn md(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let lambda = cfg.lambda.expect("validated");
    let crystal = Crystal::new(&model.disp, cfg.nonlinearity(model)?, lambda, cfg.md_side)?;
    let integrator = cfg.integrator()?;
    let dt = cfg.md_dt.unwrap_or(
        match integrator {
            Integrator::VelocityVerlet => 0.1,
            Integrator::Yoshida4 => 0.02,
        } / crystal.max_omega(),
    );
    let stride = cfg.md_stride.unwrap_or(((cfg.md_t_max / dt) as usize / 200).max(1));
    let pin = cfg.pin_zero_mode.unwrap_or(model.disp.omega0() == 0.0);
    let params = MdParams {
        beta: cfg.beta,
        dt,
        t_max: cfg.md_t_max,
        stride,
        n_samples: cfg.md_samples,
        seed: cfg.seed,
        integrator,
        sampler: cfg.sampler()?,
        pin_zero_mode: pin,
        direction: model.direction.clone(),
        bootstrap: cfg.bootstrap,
    };
    let res = current_correlation(&crystal, &params)?;
    let mut csv = String::from("t,mean,stderr\n");
    for i in 0..res.times.len() {
        csv_row(&mut csv, [res.times[i], res.mean[i], res.stderr[i]]);
    }
    out.write("md.csv", csv.as_bytes())?;
    let report = json!({
        "result": res,
        "params": params,
        "side": cfg.md_side,
        "lambda": lambda,
        "beta": cfg.beta,
        "seed": cfg.seed,
        "harmonic_wick": harmonic_current_variance(&crystal, cfg.beta, &model.direction),
        "kinetic_time_per_microscopic": lambda * lambda,
    });
    out.write_json("md.json", &report)?;
    Ok(format!(
        "{} samples, {} records, max energy drift {:.2e}",
        cfg.md_samples,
        res.times.len(),
        res.max_energy_drift
    ))
}

fn reproduce_fpu(cfg: &RunConfig, model: &Model, out: &mut RunDir) -> Result<String> {
    let (summary, fit) = rta(cfg, model, out)?;
    let fit = fit.ok_or_else(|| Error::Inconsistent(format!("{summary}: the fit failed")))?;
    let within = (0.55..=0.65).contains(&fit.parameter);
    out.write_json(
        "reproduce.json",
        &json!({ "exponent": fit.parameter, "stderr": fit.stderr, "model": fit.model, "target": 0.6, "band": [0.55, 0.65], "within": within }),
    )?;
    let line = format!("fitted exponent {:.4} ± {:.4} against 3/5", fit.parameter, fit.stderr);
    if !within {
        return Err(Error::Inconsistent(format!("{line}: outside [0.55, 0.65]")));
    }
    Ok(format!("{line}: within [0.55, 0.65]"))
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run alone with `cargo test -p phkin --test acceptance`. Expect several
//! minutes on one core; criteria 1, 8 and 10 dominate.

mod common;

use std::time::Instant;

use nalgebra::DMatrix;
use phkin::collision::exact::v_l4p;
use phkin::collision::{CollisionMatrixL, CollisionModel, DeltaResolver, DifferenceVertex, Exact1d, Vertex};
use phkin::equilibrium::{current_weight, equilibrium, OccupationProfile, Statistics};
use phkin::fluctuation::{LangevinModel, Scheme, SimulationRequest};
use phkin::lattice::{BZGrid, Preset, SampledBand};
use phkin::linalg::{frobenius, max_asymmetry, SymEigen};
use phkin::microdyn::{
    current_correlation, harmonic_current_variance, Crystal, Integrator, MdParams, Nonlinearity, Sampler,
};
use phkin::transport::{
    correlation_bound, fit_decay, geometric_times, relaxation_time, relaxation_time_from_rates, rta_correlation,
    KineticSpectrum, RtaWeighting,
};
use phkin::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

struct Case {
    name: &'static str,
    band: SampledBand,
    w: OccupationProfile,
    l: CollisionMatrixL,
}

fn case(
    name: &'static str,
    preset: Preset,
    dim: usize,
    n: usize,
    beta: f64,
    stats: Statistics,
    vertex: Vertex,
    resolver: DeltaResolver,
    channel: &str,
) -> Result<Case> {
    let band = preset.dispersion(dim, None)?.sample(&BZGrid::new(dim, n)?)?;
    let w = equilibrium(&band, beta, stats)?;
    let model = CollisionModel::new(band.clone(), beta, stats, vertex, resolver)?;
    let l = match channel {
        "L3" => model.l3()?,
        "L4p" => model.l4p()?,
        "L4t" => model.l4t()?,
        _ => unreachable!(),
    };
    Ok(Case { name, band, w, l })
}

fn gapped(n: usize, channel: &str) -> Result<Case> {
    case(
        "nn-optical",
        Preset::NnOptical,
        1,
        n,
        1.0,
        Statistics::Quantum,
        Vertex::onsite_quartic(),
        DeltaResolver::default(),
        channel,
    )
}

fn model_zoo() -> Result<Vec<Case>> {
    let q = Statistics::Quantum;
    let c = Statistics::Classical;
    let cubic = DifferenceVertex::cubic(1, [(vec![1], 0.5)])?;
    let g = DeltaResolver::default;
    Ok(vec![
        case("L3 convex-optical quantum", Preset::ConvexOptical, 1, 128, 1.0, q, Vertex::onsite_cubic(), g(), "L3")?,
        case(
            "L3 convex-optical classical difference",
            Preset::ConvexOptical,
            1,
            128,
            1.0,
            c,
            Vertex::Difference(cubic),
            g(),
            "L3",
        )?,
        case("L4p nn-optical quantum", Preset::NnOptical, 1, 128, 1.0, q, Vertex::onsite_quartic(), g(), "L4p")?,
        case("L4t nn-optical quantum", Preset::NnOptical, 1, 128, 1.0, q, Vertex::onsite_quartic(), g(), "L4t")?,
        case(
            "L4p fpu-beta classical",
            Preset::FpuBeta,
            1,
            128,
            1.0,
            c,
            Vertex::Difference(DifferenceVertex::fpu_beta()),
            g(),
            "L4p",
        )?,
        case(
            "L4t fpu-beta classical",
            Preset::FpuBeta,
            1,
            128,
            1.0,
            c,
            Vertex::Difference(DifferenceVertex::fpu_beta()),
            g(),
            "L4t",
        )?,
        case("L3 convex-optical d=2", Preset::ConvexOptical, 2, 8, 1.0, q, Vertex::onsite_cubic(), g(), "L3")?,
        case("L4p nn-optical d=2", Preset::NnOptical, 2, 8, 1.0, q, Vertex::onsite_quartic(), g(), "L4p")?,
    ])
}

/// Exact-root V(k) for the FPU-β chain on the grid, using V(−k) = V(k).
fn fpu_beta_rta(n: usize) -> Result<(SampledBand, OccupationProfile, Vec<f64>)> {
    let band = Preset::FpuBeta.dispersion(1, None)?.sample(&BZGrid::new(1, n)?)?;
    let w = equilibrium(&band, 1.0, Statistics::Classical)?;
    let ks: Vec<f64> = (n / 2..n).map(|i| band.grid().node(i)[0]).collect();
    let vertex = Vertex::Difference(DifferenceVertex::fpu_beta());
    let rates = v_l4p(band.dispersion(), 1.0, Statistics::Classical, &vertex, &Exact1d::default(), &ks)?;
    let mut v = vec![0.0; n];
    for (j, i) in (n / 2..n).enumerate() {
        v[i] = rates.v[j];
        v[band.grid().negate(i)] = rates.v[j];
    }
    let tau = relaxation_time_from_rates(&v, &w)?;
    Ok((band, w, tau))
}

fn criterion_1() -> Result<Outcome> {
    let (band, w, tau) = fpu_beta_rta(512)?;
    let finite: Vec<f64> = tau.iter().cloned().filter(|t| t.is_finite()).collect();
    let tmax = finite.iter().cloned().fold(0.0, f64::max);
    let tmin = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    // window from the lifetime of the k ≈ 0.1 phonon to a quarter of the longest lifetime
    let i01 = (0..band.len())
        .min_by(|&a, &b| {
            let da = (band.grid().node(a)[0] - 0.1).abs();
            let db = (band.grid().node(b)[0] - 0.1).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let window = (tau[i01], tmax / 4.0);
    let times = geometric_times(tmin / 10.0, tmax * 10.0, 400);
    let series = rta_correlation(&tau, &band, &times, &RtaWeighting::Equilibrium(w.weight()))?;
    let fit = fit_decay(&times, &series.component(0, 0), window)?;
    let literal = rta_correlation(&tau, &band, &times, &RtaWeighting::Literal)?;
    let lit = fit_decay(&times, &literal.component(0, 0), window)?;
    outcome(
        (fit.parameter - 0.6).abs() <= 0.05,
        format!(
            "exponent {:.4} ± {:.4} ({:?}), window [{:.3e}, {:.3e}]; literal weighting gives {:.3}",
            fit.parameter, fit.stderr, fit.model, window.0, window.1, lit.parameter
        ),
    )
}

fn criterion_2(zoo: &[Case]) -> Result<Outcome> {
    let mut worst_asym = 0.0f64;
    let mut worst_neg = 0.0f64;
    for c in zoo {
        let op = c.l.operator();
        let norm = c.l.norm()?;
        let asym = frobenius(&(&op - op.transpose())) / norm;
        let eig = SymEigen::new(&op)?;
        worst_asym = worst_asym.max(asym);
        worst_neg = worst_neg.max(-eig.min() / eig.max());
        assert_eq!(max_asymmetry(&op), 0.0, "{}", c.name);
    }
    outcome(
        worst_asym <= 1e-12 && worst_neg <= 1e-10,
        format!("{} operators: max ‖L − Lᵀ‖/‖L‖ = {worst_asym:.1e}, max −λmin/λmax = {worst_neg:.1e}", zoo.len()),
    )
}

fn criterion_3() -> Result<Outcome> {
    let eta0s = [4.0, 2.0, 1.0];
    let in_band = |r: f64| (0.35..=0.65).contains(&r);
    let ratios = |xs: &[f64]| xs.windows(2).map(|p| p[1] / p[0]).collect::<Vec<_>>();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    // energy invariance of L3 on the convex band
    let band3 = Preset::ConvexOptical.dispersion(1, None)?.sample(&BZGrid::new(1, 512)?)?;
    let w3 = equilibrium(&band3, 1.0, Statistics::Quantum)?;
    let (mut r3, mut stat3) = (Vec::new(), Vec::new());
    for &e in &eta0s {
        let m = CollisionModel::new(
            band3.clone(),
            1.0,
            Statistics::Quantum,
            Vertex::onsite_cubic(),
            DeltaResolver::gaussian(e),
        )?;
        r3.push(m.l3()?.invariant_residual(band3.omega())?);
        stat3.push(sup(&m.nonlinear(&w3)?));
    }
    // energy invariance of L4p; number conservation is exact by construction
    let band4 = Preset::NnOptical.dispersion(1, None)?.sample(&BZGrid::new(1, 128)?)?;
    let (mut r4, mut r4n) = (Vec::new(), 0.0f64);
    for &e in &eta0s {
        let m = CollisionModel::new(
            band4.clone(),
            1.0,
            Statistics::Quantum,
            Vertex::onsite_quartic(),
            DeltaResolver::gaussian(e),
        )?;
        let l = m.l4p()?;
        r4.push(l.invariant_residual(band4.omega())?);
        r4n = r4n.max(l.invariant_residual(&vec![1.0; band4.len()])?);
    }
    // stationarity of the pair-channel collision operator at W_β
    let band_s = Preset::NnOptical.dispersion(1, None)?.sample(&BZGrid::new(1, 256)?)?;
    let ws = equilibrium(&band_s, 1.0, Statistics::Quantum)?;
    let mut stat4 = Vec::new();
    for &e in &eta0s {
        let m = CollisionModel::new(
            band_s.clone(),
            1.0,
            Statistics::Quantum,
            Vertex::onsite_quartic(),
            DeltaResolver::gaussian(e),
        )?;
        stat4.push(sup(&m.nonlinear_pair(&ws)?));
    }
    let (a, b, c, c3) = (ratios(&r3), ratios(&r4), ratios(&stat4), ratios(&stat3));
    let pass = a.iter().chain(&b).chain(&c).all(|&r| in_band(r)) && r4n <= 1e-12;
    outcome(
        pass,
        format!(
            "halving eta0 over {eta0s:?}: L3·ω ratios {a:.3?}, L4p·ω ratios {b:.3?}, pair ‖C(W_β)‖∞ ratios {c:.3?}; \
             L4p·1 residual {r4n:.1e}; three-phonon ‖C(W_β)‖∞ ratios {c3:.3?} (diagnostic: 1D root spikes give order ≈ 1/2)"
        ),
    )
}

fn criterion_4() -> Result<Outcome> {
    use common::{l3_oracle, l4p_oracle, max_relative, Setup};
    let l3 = Setup {
        disp: Preset::ConvexOptical.dispersion(1, None)?,
        grid: BZGrid::new(1, 8)?,
        beta: 1.0,
        stats: Statistics::Quantum,
        vertex: Vertex::onsite_cubic(),
        eta: 0.3,
    };
    let l4 = Setup {
        disp: Preset::NnOptical.dispersion(1, None)?,
        vertex: Vertex::onsite_quartic(),
        eta: 0.2,
        ..l3.clone()
    };
    let e3 = max_relative(&l3.model().l3()?.form, &l3_oracle(&l3));
    let e4 = max_relative(&l4.model().l4p()?.form, &l4p_oracle(&l4));
    outcome(e3 <= 1e-12 && e4 <= 1e-12, format!("N=8 max entry error relative to max entry: L3 {e3:.1e}, L4p {e4:.1e}"))
}

fn criterion_5() -> Result<Outcome> {
    let c = gapped(128, "L4p")?;
    let spec = KineticSpectrum::new(&c.l, &c.w, &c.band)?;
    let direct = spec.kappa_direct(&c.band)?.kappa[0];
    let integral = spec.kappa_time_integral(&c.band, 2000)?;
    let rel = (integral.kappa[0] - direct).abs() / direct;
    outcome(
        rel <= 0.02,
        format!(
            "kappa direct {direct:.6e}, time integral {:.6e}, relative difference {rel:.2e} (tail {:.1e})",
            integral.kappa[0], integral.diagnostics.truncation
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    // M = W W̃ ≤ 1 needs βω ≥ ln 2 at every node: quantum β = 1 on the ω₀ = 1 band,
    // β = 3 on the convex band with ω₀ = 0.3.
    let cases = vec![
        gapped(64, "L4p")?,
        gapped(64, "L4t")?,
        case(
            "L3 convex-optical",
            Preset::ConvexOptical,
            1,
            128,
            3.0,
            Statistics::Quantum,
            Vertex::onsite_cubic(),
            DeltaResolver::default(),
            "L3",
        )?,
    ];
    let mut worst_ratio = 0.0f64;
    let mut worst_t0 = 0.0f64;
    let mut checked = 0;
    for c in &cases {
        let bound = correlation_bound(&c.band, &[1.0])?;
        let spec = KineticSpectrum::new(&c.l, &c.w, &c.band)?;
        let mut times = vec![0.0];
        times.extend(geometric_times(1e-3 / spec.lambda_max(), 1e3 / spec.lambda_max(), 200));
        let kin = spec.directional(&c.band, &[1.0], &times)?;
        let tau = relaxation_time(&c.l, &c.w)?;
        let lit = rta_correlation(&tau, &c.band, &times, &RtaWeighting::Literal)?.component(0, 0);
        let eq = rta_correlation(&tau, &c.band, &times, &RtaWeighting::Equilibrium(c.w.weight()))?.component(0, 0);
        for x in kin.iter().chain(&lit).chain(&eq) {
            worst_ratio = worst_ratio.max(x / bound);
            checked += 1;
        }
        worst_t0 = worst_t0.max((lit[0] - bound).abs() / bound);
    }
    outcome(
        worst_ratio <= 1.0 + 1e-12 && worst_t0 <= 1e-12,
        format!("{checked} values: max C/bound = {worst_ratio:.6}; literal RTA t=0 relative gap {worst_t0:.1e}"),
    )
}

fn criterion_7(zoo: &[Case]) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for c in zoo {
        let m = LangevinModel::new(&c.l, &c.w)?;
        // fdt_residual is max-abs; compare in the spectral norm of L as well through the Frobenius bound
        let a = &m.a;
        let cm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.c.clone()));
        let r = a * &cm + &cm * a.transpose() + &m.b * m.b.transpose();
        worst = worst.max(frobenius(&r) / m.l_norm());
    }
    outcome(worst <= 1e-10, format!("{} models: max ‖AC + CAᵀ + BBᵀ‖/‖L‖ = {worst:.1e}", zoo.len()))
}

fn criterion_8() -> Result<Outcome> {
    let c = gapped(32, "L4p")?;
    let model = LangevinModel::new(&c.l, &c.w)?;
    let spec = KineticSpectrum::new(&c.l, &c.w, &c.band)?;
    let gap = spec.gap().expect("gapped model");
    let dt = 0.2 * model.max_dt();
    let lags: Vec<usize> = [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|x| (x / gap / dt).round() as usize).collect();
    let j = current_weight(&c.band, &[1.0])?.values;
    let req = SimulationRequest {
        f: j.clone(),
        g: j,
        dt,
        lags,
        n_paths: 10_000,
        seed: 20_240_601,
        scheme: Scheme::EulerMaruyama,
    };
    let res = model.simulate(&req)?;
    let z = res.max_z();
    let stationary = (res.end_equal_time - res.equal_time_theory).abs() / res.end_equal_time_stderr;
    outcome(
        z <= 3.0,
        format!(
            "10^4 paths, dt = {dt:.3e}, lags {:.3?}: max |mean − theory|/stderr = {z:.2}; equal-time at T: {stationary:.2} stderr",
            res.times
        ),
    )
}

fn criterion_9() -> Result<Outcome> {
    let band = Preset::FpuBeta.dispersion(1, None)?.sample(&BZGrid::new(1, 64)?)?;
    let mut ratios = Vec::new();
    for eta0 in [2.0, 1.0, 0.5, 0.25] {
        let m = CollisionModel::new(
            band.clone(),
            1.0,
            Statistics::Classical,
            Vertex::Difference(DifferenceVertex::fpu_beta()),
            DeltaResolver::gaussian(eta0),
        )?;
        let (p, t) = m.l4()?;
        ratios.push(t.norm()? / p.norm()?);
    }
    let monotone = ratios.windows(2).all(|w| w[1] < w[0]);
    outcome(monotone, format!("‖L4t‖/‖L4p‖ at eta0 = 2, 1, 1/2, 1/4: {ratios:.3?}"))
}

fn fpu_beta_crystal(lambda: f64) -> Result<Crystal> {
    let disp = Preset::FpuBeta.dispersion(1, None)?;
    let nl = Nonlinearity::Difference { vertex: DifferenceVertex::fpu_beta(), stabilizer: false };
    Crystal::new(&disp, nl, lambda, 64)
}

fn md_params(crystal: &Crystal, t_max: f64, n_samples: usize, integrator: Integrator, seed: u64) -> MdParams {
    let dt = match integrator {
        Integrator::Yoshida4 => 0.02 / crystal.max_omega(),
        Integrator::VelocityVerlet => 0.1 / crystal.max_omega(),
    };
    MdParams {
        beta: 1.0,
        dt,
        t_max,
        stride: ((t_max / dt) as usize / 200).max(1),
        n_samples,
        seed,
        integrator,
        sampler: Sampler::Harmonic,
        pin_zero_mode: true,
        direction: vec![1.0],
        bootstrap: 200,
    }
}

fn criterion_10() -> Result<Outcome> {
    // energy conservation
    let c = fpu_beta_crystal(0.1)?;
    let drift = current_correlation(&c, &md_params(&c, 1000.0, 4, Integrator::Yoshida4, 1))?.max_energy_drift;

    // harmonic chain: no decay, and the Wick value at t = 0
    let h = fpu_beta_crystal(0.0)?;
    let free = current_correlation(&h, &md_params(&h, 200.0, 2000, Integrator::VelocityVerlet, 2))?;
    let decay = free.mean.iter().map(|x| x / free.mean[0]).fold(f64::INFINITY, f64::min);
    let wick = harmonic_current_variance(&h, 1.0, &[1.0]);
    let wick_z = (free.mean[0] - wick).abs() / free.stderr[0];

    // kinetic collapse of C_λ(t/λ²) at two couplings
    let lambdas = [0.1, 0.05];
    let t_kin_max = 2.0;
    let kinetic: Vec<f64> = (1..=8).map(|i| t_kin_max * i as f64 / 8.0).collect();
    let mut curves = Vec::new();
    for (i, &lam) in lambdas.iter().enumerate() {
        let c = fpu_beta_crystal(lam)?;
        let res = current_correlation(
            &c,
            &md_params(&c, t_kin_max / (lam * lam), 600, Integrator::VelocityVerlet, 10 + i as u64),
        )?;
        let c0 = res.mean[0];
        curves.push(res.at_kinetic_times(lam, &kinetic).iter().map(|x| x / c0).collect::<Vec<_>>());
    }
    let collapse = curves[0].iter().zip(&curves[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(
        drift <= 1e-6 && decay >= 0.99 && wick_z <= 3.0 && collapse <= 0.2,
        format!(
            "energy drift {drift:.1e}; λ=0 min C(t)/C(0) = {decay:.4}, t=0 vs Wick {wick_z:.2} stderr; \
             collapse λ = 0.1 vs 0.05 max |ΔC/C(0)| = {collapse:.3} over kinetic t ≤ {t_kin_max} \
             (C/C(0): {:.3?} vs {:.3?}; qualitative only, the λ → 0 limit is out of reach)",
            curves[0], curves[1]
        ),
    )
}

fn main() {
    let start = Instant::now();
    let zoo = model_zoo();
    let mut criteria: Vec<(u32, &str, Box<dyn FnOnce() -> Result<Outcome>>)> = vec![
        (1, "FPU-beta RTA exponent", Box::new(criterion_1)),
        (3, "collisional invariants", Box::new(criterion_3)),
        (4, "brute-force oracle", Box::new(criterion_4)),
        (5, "Green-Kubo two routes", Box::new(criterion_5)),
        (6, "correlation bound", Box::new(criterion_6)),
        (8, "Langevin covariance", Box::new(criterion_8)),
        (9, "L4t vanishing on FPU bands", Box::new(criterion_9)),
        (10, "MD sanity", Box::new(criterion_10)),
    ];
    match &zoo {
        Ok(z) => {
            criteria.insert(1, (2, "operator structure", Box::new(|| criterion_2(z))));
            criteria.insert(6, (7, "FDT algebra", Box::new(|| criterion_7(z))));
        }
        Err(e) => println!("model zoo failed to build: {e}"),
    }
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = zoo.is_err();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed |= !pass;
        println!(
            "criterion {id:>2} [{name}]: {} {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if failed {
        std::process::exit(1);
    }
}

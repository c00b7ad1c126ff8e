//! Assembled operators against naive all-tuples sums, the exact 1D rates and
//! the detailed-balance identity on the collision manifold.

mod common;

use std::f64::consts::PI;

use common::{l3_oracle, l4p_oracle, max_relative, wrap, Setup};
use phkin::collision::exact::{l3_manifold, v_l3};
use phkin::collision::{v_and_i_split, CollisionModel, DeltaResolver, DifferenceVertex, Exact1d, Vertex};
use phkin::equilibrium::{occupation_at, occupation_tilde_at, Statistics};
use phkin::lattice::{BZGrid, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn three_phonon_matches_naive_sum() {
    let cubic = DifferenceVertex::cubic(1, [(vec![1], 0.5), (vec![2], -0.2)]).unwrap();
    for (stats, vertex) in [
        (Statistics::Quantum, Vertex::onsite_cubic()),
        (Statistics::Classical, Vertex::onsite_cubic()),
        (Statistics::Quantum, Vertex::Difference(cubic)),
    ] {
        let s = Setup {
            disp: Preset::ConvexOptical.dispersion(1, None).unwrap(),
            grid: BZGrid::new(1, 8).unwrap(),
            beta: 1.3,
            stats,
            vertex,
            eta: 0.3,
        };
        let l = s.model().l3().unwrap();
        let err = max_relative(&l.form, &l3_oracle(&s));
        assert!(err <= 1e-12, "{stats:?}: {err:e}");
    }
}

#[test]
fn three_phonon_matches_naive_sum_in_two_dimensions() {
    let s = Setup {
        disp: Preset::ConvexOptical.dispersion(2, None).unwrap(),
        grid: BZGrid::new(2, 4).unwrap(),
        beta: 0.8,
        stats: Statistics::Quantum,
        vertex: Vertex::onsite_cubic(),
        eta: 0.4,
    };
    let l = s.model().l3().unwrap();
    assert!(max_relative(&l.form, &l3_oracle(&s)) <= 1e-12);
}

#[test]
fn pair_channel_matches_naive_sum() {
    for (stats, vertex) in [
        (Statistics::Quantum, Vertex::onsite_quartic()),
        (Statistics::Classical, Vertex::Difference(DifferenceVertex::fpu_beta())),
    ] {
        let s = Setup {
            disp: Preset::NnOptical.dispersion(1, Some(1.0)).unwrap(),
            grid: BZGrid::new(1, 8).unwrap(),
            beta: 1.0,
            stats,
            vertex,
            eta: 0.2,
        };
        let l = s.model().l4p().unwrap();
        let err = max_relative(&l.form, &l4p_oracle(&s));
        assert!(err <= 1e-12, "{stats:?}: {err:e}");
    }
}

#[test]
fn pair_channel_matches_naive_sum_in_two_dimensions() {
    let s = Setup {
        disp: Preset::NnOptical.dispersion(2, Some(1.0)).unwrap(),
        grid: BZGrid::new(2, 4).unwrap(),
        beta: 1.0,
        stats: Statistics::Quantum,
        vertex: Vertex::onsite_quartic(),
        eta: 0.3,
    };
    let l = s.model().l4p().unwrap();
    assert!(max_relative(&l.form, &l4p_oracle(&s)) <= 1e-12);
}

#[test]
fn difference_vertex_is_the_onsite_rate_times_the_form_factor() {
    // Direct expansion of |Σ_x α(x) Π_j (e^{i2π s_j k_j x} − 1)|² on random triples.
    let table = [(1i64, 0.5), (-1, -0.5), (2, -0.2), (-2, 0.2)];
    let vertex = Vertex::Difference(DifferenceVertex::cubic(1, [(vec![1], 0.5), (vec![2], -0.2)]).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for _ in 0..200 {
        let k1: f64 = rng.random_range(-0.5..0.5);
        let k2: f64 = rng.random_range(-0.5..0.5);
        let k3 = wrap(k1 + k2);
        let (mut re, mut im) = (0.0, 0.0);
        for (x, a) in table {
            let xf = x as f64;
            // product of (cos θ − 1 + i sin θ) over the three signed momenta
            let (mut pr, mut pi) = (a, 0.0);
            for th in [2.0 * PI * k1 * xf, 2.0 * PI * k2 * xf, -2.0 * PI * k3 * xf] {
                let (cr, ci) = (th.cos() - 1.0, th.sin());
                (pr, pi) = (pr * cr - pi * ci, pr * ci + pi * cr);
            }
            re += pr;
            im += pi;
        }
        let expect = re * re + im * im;
        let got = vertex.factor(&[(1.0, &[k1]), (1.0, &[k2]), (-1.0, &[k3])]);
        assert!((got - expect).abs() <= 1e-12 * (1.0 + expect));
    }
}

#[test]
fn detailed_balance_on_the_collision_manifold() {
    let disp = Preset::ConvexOptical.dispersion(1, None).unwrap();
    let settings = Exact1d::default();
    let beta = 1.7;
    let mut found = 0;
    for i in 0..40 {
        let k = -0.5 + (i as f64 + 0.37) / 40.0;
        for [k1, k2, k3] in l3_manifold(&disp, &settings, k).unwrap() {
            let om = |k: f64| disp.omega(&[k]);
            let w = |k| occupation_at(om(k), beta, Statistics::Quantum);
            let wt = |k| occupation_tilde_at(om(k), beta, Statistics::Quantum);
            assert!((om(k1) + om(k2) - om(k3)).abs() < 1e-9);
            let (lhs, rhs) = (wt(k1) * wt(k2) * w(k3), w(k1) * w(k2) * wt(k3));
            assert!((lhs - rhs).abs() <= 1e-8 * rhs, "{lhs} vs {rhs}");
            found += 1;
        }
    }
    assert!(found > 20, "only {found} manifold points");
}

#[test]
fn gaussian_diagonal_approaches_exact_rates() {
    // V(k) from the smeared matrix against the exact 1D root sum at the same nodes.
    let disp = Preset::ConvexOptical.dispersion(1, None).unwrap();
    let (beta, stats) = (1.0, Statistics::Quantum);
    let grid = BZGrid::new(1, 256).unwrap();
    let sel: Vec<usize> = (0..grid.len()).step_by(8).collect();
    let ks: Vec<f64> = sel.iter().map(|&i| grid.node(i)[0]).collect();
    let exact = v_l3(&disp, beta, stats, &Vertex::onsite_cubic(), &Exact1d::default(), &ks).unwrap();
    let total: f64 = exact.v.iter().sum();
    let mut errs = Vec::new();
    for eta0 in [2.0, 1.0, 0.5] {
        let band = disp.sample(&grid).unwrap();
        let model =
            CollisionModel::new(band, beta, stats, Vertex::onsite_cubic(), DeltaResolver::gaussian(eta0)).unwrap();
        let (v, _) = v_and_i_split(&model.l3().unwrap());
        // V has integrable 1/√ spikes where roots are born at tangencies; compare in L¹
        let err = sel.iter().zip(&exact.v).map(|(&i, e)| (v[i] - e).abs()).sum::<f64>() / total;
        errs.push(err);
    }
    println!("relative L1 error of V at eta0 = 2, 1, 1/2: {errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 0.05, "{errs:?}");
}

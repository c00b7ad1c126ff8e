//! Equilibrium occupations and the energy-current weight.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{self, Result};
use crate::lattice::SampledBand;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Quantum,
    Classical,
}

impl Statistics {
    pub fn tag(self) -> u8 {
        match self {
            Statistics::Quantum => 0,
            Statistics::Classical => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Statistics::Quantum),
            1 => Some(Statistics::Classical),
            _ => None,
        }
    }
}

/// Occupation W(k) at every grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationProfile {
    pub values: Vec<f64>,
    pub statistics: Statistics,
    pub beta: f64,
}

impl OccupationProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// W̃ = 1 + W for bosons; classically W̃ = W.
    pub fn tilde(&self) -> OccupationProfile {
        let values = match self.statistics {
            Statistics::Quantum => self.values.iter().map(|w| 1.0 + w).collect(),
            Statistics::Classical => self.values.clone(),
        };
        OccupationProfile { values, ..self.clone() }
    }

    /// W W̃ per node, the equal-time fluctuation weight.
    pub fn weight(&self) -> Vec<f64> {
        match self.statistics {
            Statistics::Quantum => self.values.iter().map(|w| w * (1.0 + w)).collect(),
            Statistics::Classical => self.values.iter().map(|w| w * w).collect(),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return error::config(format!("beta must be positive and finite, got {beta}"));
    }
    Ok(())
}

fn check_gap(band: &SampledBand) -> Result<()> {
    if let Some(i) = band.omega().iter().position(|&w| w <= 0.0) {
        return error::domain(format!("omega vanishes at node {i} (k = {:?})", band.grid().node(i)));
    }
    Ok(())
}

/// W_β(k) = (e^{βω} − 1)^{−1}.
pub fn bose_einstein(band: &SampledBand, beta: f64) -> Result<OccupationProfile> {
    check_beta(beta)?;
    check_gap(band)?;
    let values = band.omega().iter().map(|&w| 1.0 / (beta * w).exp_m1()).collect();
    Ok(OccupationProfile { values, statistics: Statistics::Quantum, beta })
}

/// W^cl_β(k) = 1/(βω).
pub fn classical(band: &SampledBand, beta: f64) -> Result<OccupationProfile> {
    check_beta(beta)?;
    check_gap(band)?;
    let values = band.omega().iter().map(|&w| 1.0 / (beta * w)).collect();
    Ok(OccupationProfile { values, statistics: Statistics::Classical, beta })
}

pub fn equilibrium(band: &SampledBand, beta: f64, stats: Statistics) -> Result<OccupationProfile> {
    match stats {
        Statistics::Quantum => bose_einstein(band, beta),
        Statistics::Classical => classical(band, beta),
    }
}

/// Equilibrium occupation at a single frequency.
pub fn occupation_at(omega: f64, beta: f64, stats: Statistics) -> f64 {
    match stats {
        Statistics::Quantum => 1.0 / (beta * omega).exp_m1(),
        Statistics::Classical => 1.0 / (beta * omega),
    }
}

/// W̃ at a single frequency.
pub fn occupation_tilde_at(omega: f64, beta: f64, stats: Statistics) -> f64 {
    let w = occupation_at(omega, beta, stats);
    match stats {
        Statistics::Quantum => 1.0 + w,
        Statistics::Classical => w,
    }
}

pub fn tilde(w: &OccupationProfile) -> OccupationProfile {
    w.tilde()
}

/// j(k) = (2π)^{−1}(ℓ·∇ω)ω along a unit direction ℓ.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentWeight {
    pub direction: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn current_weight(band: &SampledBand, ell: &[f64]) -> Result<CurrentWeight> {
    let ell = unit_direction(ell, band.dim())?;
    let values =
        band.directional_velocity(&ell).into_iter().zip(band.omega()).map(|(v, w)| v * w / (2.0 * PI)).collect();
    Ok(CurrentWeight { direction: ell, values })
}

/// Validates a direction vector; accepts anything within 1e-9 of unit norm.
pub fn unit_direction(ell: &[f64], dim: usize) -> Result<Vec<f64>> {
    if ell.len() != dim {
        return Err(crate::Error::Dimension(format!("direction has {} components, expected {dim}", ell.len())));
    }
    let norm = ell.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return error::config(format!("direction must be a unit vector, |l| = {norm}"));
    }
    Ok(ell.to_vec())
}

/// Unit vectors e_0 .. e_{d-1}.
pub fn axis_directions(dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|a| (0..dim).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect()
}

/// W_{β,τ}(k) = (exp[βω − τ(ℓ·∇ω)ω] − 1)^{−1}.
pub fn tilted_wigner(band: &SampledBand, beta: f64, tau: f64, ell: &[f64]) -> Result<OccupationProfile> {
    check_beta(beta)?;
    let ell = unit_direction(ell, band.dim())?;
    let vel = band.directional_velocity(&ell);
    let mut values = Vec::with_capacity(band.len());
    for (i, (&w, v)) in band.omega().iter().zip(vel).enumerate() {
        let x = beta * w - tau * v * w;
        if x <= 0.0 {
            return error::domain(format!("tilt too large: exponent {x:.3e} at node {i}"));
        }
        values.push(1.0 / x.exp_m1());
    }
    Ok(OccupationProfile { values, statistics: Statistics::Quantum, beta })
}

/// CSV rows: node index, k components, ω, W.
pub fn write_profile_csv(band: &SampledBand, profile: &OccupationProfile, mut out: impl Write) -> Result<()> {
    let d = band.dim();
    let mut header = vec!["index".to_string()];
    header.extend((0..d).map(|j| format!("k{j}")));
    header.push("omega".into());
    header.push("W".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..band.len() {
        let mut row = vec![i.to_string()];
        row.extend(band.grid().node(i).iter().map(|k| format!("{k:.17e}")));
        row.push(format!("{:.17e}", band.omega()[i]));
        row.push(format!("{:.17e}", profile.values[i]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BZGrid, Dispersion, Preset};
    use approx::assert_abs_diff_eq;

    fn fpu(omega0: f64, n: usize) -> SampledBand {
        Dispersion::fpu(omega0).unwrap().sample(&BZGrid::new(1, n).unwrap()).unwrap()
    }

    #[test]
    fn occupations_at_reference_points() {
        let flat = crate::lattice::ElasticConstants::new(1, [(vec![0], 0.0)]).unwrap();
        let band = Dispersion::new(flat, 2f64.ln()).unwrap().sample(&BZGrid::new(1, 2).unwrap()).unwrap();
        let be = bose_einstein(&band, 1.0).unwrap();
        assert_abs_diff_eq!(be.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(be.tilde().values[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(be.weight()[0], 2.0, epsilon = 1e-13);

        let band = fpu(0.0, 2); // ω = 1 at k = ±1/4
        let cl = classical(&band, 1.0).unwrap();
        assert_abs_diff_eq!(cl.values[0], 1.0, epsilon = 1e-14);
        assert_eq!(cl.tilde().values, cl.values);
        assert_abs_diff_eq!(cl.weight()[0], 1.0, epsilon = 1e-14);
        let cl2 = classical(&band, 2.0).unwrap();
        assert_abs_diff_eq!(cl2.values[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quantum_ratio_and_classical_limit() {
        let band = fpu(1.0, 16);
        let be = bose_einstein(&band, 0.7).unwrap();
        for (i, (w, wt)) in be.values.iter().zip(be.tilde().values).enumerate() {
            assert_abs_diff_eq!(wt / w, (0.7 * band.omega()[i]).exp(), epsilon = 1e-12);
        }
        // βω ≤ 0.1 keeps the Bose function within 5% of 1/(βω).
        let beta = 0.1 / band.max_omega();
        let q = bose_einstein(&band, beta).unwrap();
        let c = classical(&band, beta).unwrap();
        for (a, b) in q.values.iter().zip(&c.values) {
            assert!((a / b - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn quantum_to_classical_crossover_is_monotone() {
        let band = fpu(1.0, 16);
        let mut prev = f64::INFINITY;
        for beta in [2.0, 1.0, 0.5, 0.25, 0.125] {
            let q = bose_einstein(&band, beta).unwrap();
            let c = classical(&band, beta).unwrap();
            // Compare through βW to remove the trivial 1/β growth.
            let dist = q.values.iter().zip(&c.values).map(|(a, b)| beta * (a - b).abs()).fold(0.0, f64::max);
            assert!(dist < prev);
            prev = dist;
        }
    }

    #[test]
    fn acoustic_node_free_grid_but_zero_frequency_rejected() {
        let band = fpu(0.0, 8);
        assert!(bose_einstein(&band, 1.0).is_ok());
        assert!(matches!(classical(&band, 0.0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn current_weight_values_and_orthogonality() {
        let band = fpu(0.0, 2);
        let j = current_weight(&band, &[1.0]).unwrap();
        // nodes k = -1/4, 1/4
        assert_abs_diff_eq!(j.values[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(j.values[0], -0.5, epsilon = 1e-14);

        let band = Preset::NnOptical.dispersion(2, Some(0.8)).unwrap();
        let band = band.sample(&BZGrid::new(2, 8).unwrap()).unwrap();
        let ell = [0.6, 0.8];
        let j = current_weight(&band, &ell).unwrap();
        let ones = vec![1.0; band.len()];
        assert!(band.inner(&ones, &j.values).abs() < 1e-15);
        assert!(band.inner(band.omega(), &j.values).abs() < 1e-15);
        assert!(current_weight(&band, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn tilted_wigner_derivative() {
        let band = fpu(0.5, 16);
        let ell = [1.0];
        let w0 = tilted_wigner(&band, 1.0, 0.0, &ell).unwrap();
        assert_eq!(w0, bose_einstein(&band, 1.0).unwrap());

        let be = bose_einstein(&band, 1.0).unwrap();
        let target: Vec<f64> = be
            .weight()
            .iter()
            .zip(band.directional_velocity(&ell))
            .zip(band.omega())
            .map(|((m, v), w)| m * v * w)
            .collect();
        let err = |tau: f64| -> Vec<f64> {
            let p = tilted_wigner(&band, 1.0, tau, &ell).unwrap();
            let m = tilted_wigner(&band, 1.0, -tau, &ell).unwrap();
            (0..band.len()).map(|i| ((p.values[i] - m.values[i]) / (2.0 * tau) - target[i]).abs()).collect()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        for i in 0..band.len() {
            if e1[i] > 1e-12 {
                let order = (e1[i] / e2[i]).log2();
                assert!(order >= 1.9, "node {i}: order {order}");
            }
        }

        let p = tilted_wigner(&band, 1.0, 0.1, &ell).unwrap();
        let i = 3;
        let ineg = band.grid().negate(i);
        assert!((p.values[i] / p.values[ineg] - 1.0).abs() > 1e-6);
        assert!(tilted_wigner(&band, 1.0, 50.0, &ell).is_err());
    }

    #[test]
    fn csv_export_has_one_row_per_node() {
        let band = fpu(1.0, 4);
        let be = bose_einstein(&band, 1.0).unwrap();
        let mut buf = Vec::new();
        write_profile_csv(&band, &be, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("index,k0,omega,W"));
    }
}

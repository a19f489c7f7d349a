//! Physical parameters of the lattice model and the device-parameter mapping.
//!
//! Units: hbar = 1, energies in rad/ns (angular GHz), times in ns. Paper-style
//! frequencies quoted as `f/2pi` in GHz convert by a single factor of `2 pi`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::jn_series;

/// Cutoff below which `1 + cos(phi_dc)` is treated as degenerate (the hopping
/// integral vanishes and the effective coupling diverges).
pub const PHI_DC_DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("device parameter out of range: {0}")]
    InvalidDeviceParams(String),
    #[error("phi_dc too close to pi: |1 + cos(phi_dc)| = {0:.3e} < 1e-9, hopping degenerates")]
    DegenerateHopping(f64),
}

/// Raw device-level constants of the simulator circuit.
///
/// `ej_scaled` is the product of the phase-slip factor and the Josephson
/// energy, expressed as a plain frequency in GHz (i.e. divided by `2 pi
/// hbar`); the paper's reference value is 100 GHz.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DeviceParams {
    pub ej_scaled: f64,
    pub delta_theta: f64,
    pub delta_omega_over_2pi: f64,
    pub phi_dc: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.ej_scaled > 0.0) {
            return Err(ModelError::InvalidDeviceParams(format!(
                "ej_scaled must be > 0, got {}",
                self.ej_scaled
            )));
        }
        if !(self.delta_theta > 0.0) {
            return Err(ModelError::InvalidDeviceParams(format!(
                "delta_theta must be > 0, got {}",
                self.delta_theta
            )));
        }
        if !(self.delta_omega_over_2pi > 0.0) {
            return Err(ModelError::InvalidDeviceParams(format!(
                "delta_omega_over_2pi must be > 0, got {}",
                self.delta_omega_over_2pi
            )));
        }
        if !(0.0..std::f64::consts::TAU).contains(&self.phi_dc) {
            return Err(ModelError::InvalidDeviceParams(format!(
                "phi_dc must lie in [0, 2pi), got {}",
                self.phi_dc
            )));
        }
        Ok(())
    }
}

/// Derived model parameters of the effective excitation-phonon Hamiltonian.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelParams {
    pub n_sites: usize,
    pub max_phonons: usize,
    /// bare-excitation hopping integral, rad/ns
    pub t0: f64,
    /// dimensionless coupling strength
    pub g: f64,
    /// phonon frequency in the rotating frame, rad/ns
    pub delta_omega: f64,
    /// effective coupling `2 g^2 delta_omega / t0`
    pub lambda_eff: f64,
    /// hopping timescale `1 / t0`, ns
    pub tau_ec: f64,
}

/// Bessel constants entering the mapping, evaluated once by power series.
fn bessel_constants() -> (f64, f64) {
    let x = std::f64::consts::FRAC_PI_2;
    (jn_series(0, x), jn_series(1, x))
}

/// Maps device constants to the model parameters of the effective Hamiltonian.
///
/// `t0 = 2 ej 2pi J0(pi/2) (1 + cos phi_dc)` and
/// `g delta_omega = ej 2pi J1(pi/2) delta_theta`, with `ej` the scaled
/// Josephson product in GHz.
pub fn derive_model(
    dev: &DeviceParams,
    n_sites: usize,
    max_phonons: usize,
) -> Result<ModelParams, ModelError> {
    dev.validate()?;
    let (j0, j1) = bessel_constants();
    let flux_factor = 1.0 + dev.phi_dc.cos();
    if flux_factor.abs() < PHI_DC_DEGENERACY_TOL {
        return Err(ModelError::DegenerateHopping(flux_factor.abs()));
    }
    let ej = dev.ej_scaled * std::f64::consts::TAU; // rad/ns
    let delta_omega = dev.delta_omega_over_2pi * std::f64::consts::TAU;
    let t0 = 2.0 * ej * j0 * flux_factor;
    let g = ej * j1 * dev.delta_theta / delta_omega;
    let lambda_eff = 2.0 * g * g * delta_omega / t0;
    Ok(ModelParams {
        n_sites,
        max_phonons,
        t0,
        g,
        delta_omega,
        lambda_eff,
        tau_ec: 1.0 / t0,
    })
}

/// Momentum-space vertex `2i g dw [sin k + sin q - sin(k+q)]`.
pub fn vertex(k: f64, q: f64, params: &ModelParams) -> Complex64 {
    Complex64::new(0.0, 2.0 * params.g * params.delta_omega)
        * (k.sin() + q.sin() - (k + q).sin())
}

/// Rabi preparation time `pi / (2 beta_p)` scaled by the inverse residue for
/// dressed targets.
pub fn preparation_time(beta_p: f64, residue: f64) -> f64 {
    assert!(beta_p > 0.0, "beta_p must be positive");
    assert!(
        residue > 0.0 && residue <= 1.0,
        "residue must lie in (0, 1]"
    );
    std::f64::consts::FRAC_PI_2 / beta_p / residue
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Paper operating point: 300 MHz detuning at the critical flux.
    pub fn paper_device_300mhz() -> DeviceParams {
        DeviceParams {
            ej_scaled: 100.0,
            delta_theta: 3.5e-3,
            delta_omega_over_2pi: 0.3,
            phi_dc: 0.972 * std::f64::consts::PI,
        }
    }

    // Independent oracle: J_n by explicit factorial-sum over the first 25
    // terms, written without reusing the bessel module.
    fn bessel_oracle(n: u32, x: f64) -> f64 {
        let mut sum = 0.0f64;
        for k in 0..25u64 {
            let mut fact_k = 1.0f64;
            for j in 1..=k {
                fact_k *= j as f64;
            }
            let mut fact_nk = 1.0f64;
            for j in 1..=(k + n as u64) {
                fact_nk *= j as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (x / 2.0).powi((n as i32) + 2 * k as i32) / (fact_k * fact_nk);
        }
        sum
    }

    #[test]
    fn bessel_constants_match_oracle() {
        let (j0, j1) = bessel_constants();
        let x = std::f64::consts::FRAC_PI_2;
        assert_abs_diff_eq!(j0, bessel_oracle(0, x), epsilon = 1e-14);
        assert_abs_diff_eq!(j1, bessel_oracle(1, x), epsilon = 1e-14);
    }

    #[test]
    fn paper_operating_point() {
        let p = derive_model(&paper_device_300mhz(), 9, 10).unwrap();
        // tau_ec ~ 0.44 ns at the 300 MHz critical flux
        assert_abs_diff_eq!(p.tau_ec, 0.44, epsilon = 0.005);
        // lambda_eff ~ 0.72 (the 300 MHz critical value)
        assert_abs_diff_eq!(p.lambda_eff, 0.72, epsilon = 0.005);
        // g from the frozen independent evaluation
        let x = std::f64::consts::FRAC_PI_2;
        let g_expected = 100.0 * bessel_oracle(1, x) * 3.5e-3 / 0.3;
        assert_abs_diff_eq!(p.g, g_expected, epsilon = 1e-12);
        assert_abs_diff_eq!(p.g, 0.661, epsilon = 5e-4);
    }

    #[test]
    fn lambda_consistent_with_flux_form() {
        // lambda_eff = g J1 dtheta / (J0 (1 + cos phi_dc)), the externally
        // tunable form, must agree with 2 g^2 dw / t0 to 1e-12 relative.
        for &phi in &[0.5, 0.9 * std::f64::consts::PI, 0.972 * std::f64::consts::PI] {
            let dev = DeviceParams {
                phi_dc: phi,
                ..paper_device_300mhz()
            };
            let p = derive_model(&dev, 9, 10).unwrap();
            let (j0, j1) = bessel_constants();
            let alt = p.g * j1 * dev.delta_theta / (j0 * (1.0 + phi.cos()));
            assert!((p.lambda_eff - alt).abs() <= 1e-12 * alt.abs());
        }
    }

    #[test]
    fn lambda_monotone_in_flux() {
        let mut prev = None;
        for i in 1..40 {
            let phi = std::f64::consts::PI * (0.5 + 0.4 * i as f64 / 40.0);
            let dev = DeviceParams {
                phi_dc: phi,
                ..paper_device_300mhz()
            };
            let p = derive_model(&dev, 9, 10).unwrap();
            if let Some(prev) = prev {
                assert!(p.lambda_eff > prev, "lambda_eff must grow towards phi_dc = pi");
            }
            prev = Some(p.lambda_eff);
        }
    }

    #[test]
    fn degenerate_flux_rejected() {
        let dev = DeviceParams {
            phi_dc: std::f64::consts::PI,
            ..paper_device_300mhz()
        };
        assert!(matches!(
            derive_model(&dev, 9, 10),
            Err(ModelError::DegenerateHopping(_))
        ));
    }

    #[test]
    fn vertex_zeros_and_value() {
        let p = derive_model(&paper_device_300mhz(), 9, 10).unwrap();
        for &q in &[0.3, -1.2, std::f64::consts::FRAC_PI_2] {
            assert_abs_diff_eq!(vertex(0.0, q, &p).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(vertex(q, 0.0, &p).norm(), 0.0, epsilon = 1e-12);
        }
        let v = vertex(
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            &p,
        );
        let expected = Complex64::new(0.0, 4.0 * p.g * p.delta_omega);
        assert_abs_diff_eq!((v - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vertex_antisymmetry() {
        let p = derive_model(&paper_device_300mhz(), 9, 10).unwrap();
        let n = 9;
        for ik in 0..n {
            for iq in 0..n {
                let k = std::f64::consts::TAU * ik as f64 / n as f64;
                let q = std::f64::consts::TAU * iq as f64 / n as f64;
                let a = vertex(k, q, &p);
                // parity: gamma(-k, -q) = -gamma(k, q); purely imaginary
                let b = -vertex(-k, -q, &p);
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(a.re, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn preparation_time_examples() {
        // beta_p / 2 pi hbar = 10 MHz -> 25 ns
        let beta = 0.01 * std::f64::consts::TAU;
        assert_abs_diff_eq!(preparation_time(beta, 1.0), 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(preparation_time(beta, 0.5), 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            preparation_time(2.0, 1.0),
            std::f64::consts::FRAC_PI_2 / 2.0,
            epsilon = 1e-15
        );
    }
}

//! Chebyshev-series approximation of the short-time evolution operator
//! `U(dt) = exp(-i H dt)` acting on sector state vectors.
//!
//! `U(dt) = exp(-i b dt) [c_0 v_0 + 2 sum_{p>=1} c_p v_p]` with
//! `c_p = (-i)^p J_p(a dt)` and the three-term recurrence
//! `v_{p+1} = 2 Htilde v_p - v_{p-1}`.

use num_complex::Complex64;
use thiserror::Error;

use crate::bessel::jn_array;
use crate::hamiltonian::{HermitianOp, RescaledOperator};

/// Hard unitarity failure line on the post-step norm.
pub const UNITARITY_BUDGET: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ChebyshevError {
    #[error("unitarity violated at step {step}: |norm - 1| = {deviation:.3e} > 1e-4")]
    UnitarityViolation { step: usize, deviation: f64 },
}

/// Precomputed expansion for one time step `dt` (in ns, hbar = 1 units).
pub struct PropagatorPlan {
    pub dt: f64,
    pub n_cheb: usize,
    /// `c_p = (-i)^p J_p(a dt)`, p = 0..=n_cheb
    pub coeffs: Vec<Complex64>,
    pub phase: Complex64,
    pub a_scale: f64,
    pub b_shift: f64,
}

/// Chooses the smallest order with `|J_{N_C}(a dt)| < tail_tol` (at least 4)
/// and freezes the coefficients; they depend on `dt` only, so one plan serves
/// the whole run.
pub fn plan(op: &RescaledOperator<'_>, dt: f64, tail_tol: f64) -> PropagatorPlan {
    assert!(dt > 0.0 && tail_tol > 0.0);
    let x = op.a_scale * dt;
    // Bessel tail decays superexponentially past p ~ x
    let pmax = (x.ceil() as usize + 60).max(16);
    let j = jn_array(pmax, x);
    let mut n_cheb = 4usize;
    while n_cheb < pmax && j[n_cheb].abs() >= tail_tol {
        n_cheb += 1;
    }
    let minus_i = Complex64::new(0.0, -1.0);
    let mut factor = Complex64::new(1.0, 0.0);
    let coeffs = (0..=n_cheb)
        .map(|p| {
            let c = factor * j[p];
            factor *= minus_i;
            c
        })
        .collect();
    PropagatorPlan {
        dt,
        n_cheb,
        coeffs,
        phase: Complex64::from_polar(1.0, -op.b_shift * dt),
        a_scale: op.a_scale,
        b_shift: op.b_shift,
    }
}

/// Scratch buffers for the three-term recurrence; exactly three live vectors
/// besides the output accumulator.
pub struct StepWorkspace {
    v_prev: Vec<Complex64>,
    v_cur: Vec<Complex64>,
    v_next: Vec<Complex64>,
}

impl StepWorkspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Self {
            v_prev: z.clone(),
            v_cur: z.clone(),
            v_next: z,
        }
    }
}

/// Applies one Chebyshev step in place; returns the post-step norm.
pub fn step_into(
    plan: &PropagatorPlan,
    op: &RescaledOperator<'_>,
    psi: &mut [Complex64],
    ws: &mut StepWorkspace,
    step_index: usize,
) -> Result<f64, ChebyshevError> {
    let dim = psi.len();
    debug_assert_eq!(op.dim(), dim);
    // v0 = psi, v1 = Htilde psi
    ws.v_prev.copy_from_slice(psi);
    op.apply(&ws.v_prev, &mut ws.v_cur);

    // out accumulates c0 v0 + 2 sum c_p v_p, reusing psi as the accumulator
    let c0 = plan.coeffs[0];
    let c1 = plan.coeffs[1] * 2.0;
    for i in 0..dim {
        psi[i] = c0 * ws.v_prev[i] + c1 * ws.v_cur[i];
    }
    for p in 2..=plan.n_cheb {
        op.apply(&ws.v_cur, &mut ws.v_next);
        let cp = plan.coeffs[p] * 2.0;
        for i in 0..dim {
            let v = 2.0 * ws.v_next[i] - ws.v_prev[i];
            ws.v_next[i] = v;
            psi[i] += cp * v;
        }
        std::mem::swap(&mut ws.v_prev, &mut ws.v_cur);
        std::mem::swap(&mut ws.v_cur, &mut ws.v_next);
    }
    for x in psi.iter_mut() {
        *x *= plan.phase;
    }
    let norm = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let deviation = (norm - 1.0).abs();
    if deviation > UNITARITY_BUDGET {
        return Err(ChebyshevError::UnitarityViolation {
            step: step_index,
            deviation,
        });
    }
    Ok(norm)
}

/// Evolves `psi0` over `n_steps` steps, invoking the observer after each step
/// with `(step index, elapsed time in ns, state, norm)`. Returns the final
/// state and the maximum norm drift seen.
pub fn evolve<F>(
    plan: &PropagatorPlan,
    op: &RescaledOperator<'_>,
    psi0: &[Complex64],
    n_steps: usize,
    mut observer: F,
) -> Result<(Vec<Complex64>, f64), ChebyshevError>
where
    F: FnMut(usize, f64, &[Complex64], f64),
{
    let mut psi = psi0.to_vec();
    let mut ws = StepWorkspace::new(psi.len());
    let mut max_drift = 0.0f64;
    for s in 1..=n_steps {
        let norm = step_into(plan, op, &mut psi, &mut ws, s)?;
        max_drift = max_drift.max((norm - 1.0).abs());
        observer(s, s as f64 * plan.dt, &psi, norm);
    }
    Ok((psi, max_drift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::jn_series;
    use crate::fock::{KSector, PhononBasis};
    use crate::hamiltonian::{build_sector, rescale};
    use crate::model::ModelParams;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn toy(n: usize, m: usize, g: f64, k_index: usize) -> crate::hamiltonian::KSectorHamiltonian {
        let p = ModelParams {
            n_sites: n,
            max_phonons: m,
            t0: 1.0,
            g,
            delta_omega: 1.0,
            lambda_eff: 2.0 * g * g,
            tau_ec: 1.0,
        };
        let basis = Arc::new(PhononBasis::new(n, m).unwrap());
        build_sector(&p, KSector::new(basis, k_index)).unwrap()
    }

    #[test]
    fn coefficients_match_series_oracle() {
        let h = toy(4, 2, 0.5, 1);
        let op = rescale(&h, -3.0, 4.0, 1e-3).unwrap();
        let pl = plan(&op, 0.3, 1e-12);
        for p in 0..=pl.n_cheb {
            let expect = Complex64::new(0.0, -1.0).powu(p as u32)
                * jn_series(p as u32, op.a_scale * 0.3);
            assert_abs_diff_eq!((pl.coeffs[p] - expect).norm(), 0.0, epsilon = 1e-13);
        }
        // tail below tolerance and superexponential decay past a*dt
        assert!(pl.coeffs[pl.n_cheb].norm() < 1e-12);
        let kink = (op.a_scale * 0.3).ceil() as usize;
        for p in kink + 1..pl.n_cheb {
            assert!(pl.coeffs[p + 1].norm() < pl.coeffs[p].norm());
        }
    }

    #[test]
    fn tiny_step_is_identity_phase() {
        let h = toy(4, 2, 0.5, 1);
        let op = rescale(&h, -3.0, 4.0, 1e-3).unwrap();
        let pl = plan(&op, 1e-9, 1e-12);
        assert_eq!(pl.n_cheb, 4); // clamped lower bound
        assert_abs_diff_eq!(pl.coeffs[0].norm(), 1.0, epsilon = 1e-9);
        for p in 1..=pl.n_cheb {
            assert!(pl.coeffs[p].norm() < 1e-8);
        }
    }

    #[test]
    fn eigenstate_picks_up_scalar_phase() {
        // K = 0 zero-phonon state is an eigenstate with E = -2 t0
        let h = toy(5, 2, 0.7, 0);
        let op = rescale(&h, -4.0, 6.0, 1e-3).unwrap();
        let dt = 0.17;
        let pl = plan(&op, dt, 1e-14);
        let z = h.sector.basis.zero_phonon_index();
        let mut psi = vec![Complex64::new(0.0, 0.0); h.dim()];
        psi[z] = Complex64::new(1.0, 0.0);
        let mut ws = StepWorkspace::new(h.dim());
        step_into(&pl, &op, &mut psi, &mut ws, 1).unwrap();
        let expect = Complex64::from_polar(1.0, 2.0 * dt); // exp(-i E dt), E = -2
        assert_abs_diff_eq!((psi[z] - expect).norm(), 0.0, epsilon = 1e-12);
        for (i, v) in psi.iter().enumerate() {
            if i != z {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn semigroup_two_half_steps() {
        let h = toy(4, 2, 0.6, 1);
        let op = rescale(&h, -4.0, 6.0, 1e-3).unwrap();
        let full = plan(&op, 0.4, 1e-14);
        let half = plan(&op, 0.2, 1e-14);
        let dim = h.dim();
        let mut psi_a: Vec<Complex64> = (0..dim)
            .map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let n = psi_a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        psi_a.iter_mut().for_each(|c| *c /= n);
        let mut psi_b = psi_a.clone();
        let mut ws = StepWorkspace::new(dim);
        step_into(&full, &op, &mut psi_a, &mut ws, 1).unwrap();
        step_into(&half, &op, &mut psi_b, &mut ws, 1).unwrap();
        step_into(&half, &op, &mut psi_b, &mut ws, 2).unwrap();
        let err: f64 = psi_a
            .iter()
            .zip(&psi_b)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9, "semigroup deviation {err:e}");
    }

    #[test]
    fn zero_steps_is_identity() {
        let h = toy(4, 2, 0.5, 1);
        let op = rescale(&h, -3.0, 4.0, 1e-3).unwrap();
        let pl = plan(&op, 0.1, 1e-12);
        let mut psi = vec![Complex64::new(0.0, 0.0); h.dim()];
        psi[0] = Complex64::new(1.0, 0.0);
        let (out, drift) = evolve(&pl, &op, &psi, 0, |_, _, _, _| {}).unwrap();
        assert_eq!(out, psi);
        assert_eq!(drift, 0.0);
    }

    #[test]
    fn norm_and_energy_conserved() {
        let h = toy(5, 3, 0.8, 2);
        let op = rescale(&h, -5.0, 8.0, 1e-3).unwrap();
        let pl = plan(&op, 0.2, 1e-13);
        let z = h.sector.basis.zero_phonon_index();
        let mut psi0 = vec![Complex64::new(0.0, 0.0); h.dim()];
        psi0[z] = Complex64::new(1.0, 0.0);
        let mut hv = vec![Complex64::new(0.0, 0.0); h.dim()];
        h.apply(&psi0, &mut hv);
        let e0: Complex64 = psi0.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        let (psi, drift) = evolve(&pl, &op, &psi0, 100, |_, _, _, _| {}).unwrap();
        assert!(drift < 1e-10, "norm drift {drift:e}");
        h.apply(&psi, &mut hv);
        let e1: Complex64 = psi.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        assert!((e1.re - e0.re).abs() < 1e-8 * e0.re.abs().max(1.0));
    }
}

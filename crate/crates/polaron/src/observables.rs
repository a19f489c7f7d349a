//! Observables of a sector state vector: phonon number, survival probability,
//! quadrature variances, reduced excitation density matrix, entanglement
//! entropy, and the formation-time detector.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::fock::PhononBasis;

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error("reduced density matrix trace deviates from one by {0:.3e}")]
    TraceViolation(f64),
    #[error("reduced density matrix eigenvalue {0:.3e} below -1e-9")]
    NonPhysicalSpectrum(f64),
}

/// One recorded time step of a quench run.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableRecord {
    pub time_ns: f64,
    pub time_tau: f64,
    pub n_ph: f64,
    pub survival: f64,
    /// lattice-summed position-quadrature variance, `N x` the per-site value
    pub s_x: f64,
    /// lattice-summed momentum-quadrature variance, `N x` the per-site value
    pub s_p: f64,
    pub entropy: f64,
    pub norm: f64,
}

/// Expected total phonon number `sum_m |C_m|^2 sum_n m_n`.
pub fn phonon_number(psi: &[Complex64], basis: &PhononBasis) -> f64 {
    let n = basis.n_sites();
    let mut acc = 0.0f64;
    for (i, c) in psi.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let total: usize = basis.config(i)[..n].iter().map(|&m| m as usize).sum();
        acc += total as f64 * c.norm_sqr();
    }
    acc
}

/// Probability to remain in the bare Bloch state: the modulus-squared
/// amplitude on the zero-phonon configuration.
pub fn survival(psi: &[Complex64], zero_index: usize) -> f64 {
    psi[zero_index].norm_sqr()
}

/// Ground-state quasiparticle residue; same projection as [`survival`].
pub fn residue(psi_gs: &[Complex64], zero_index: usize) -> f64 {
    psi_gs[zero_index].norm_sqr()
}

/// Raw second moments and means of the site quadratures, plus the per-site
/// phonon expectation from the same ladder sweep. Satisfies
/// `x2 + p2 = 2 n_site + 1` for any normalized state.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureMoments {
    pub x2: f64,
    pub p2: f64,
    pub x_mean: f64,
    pub p_mean: f64,
    pub n_site: f64,
}

/// Quadrature moments at lattice site `r`.
///
/// Matrix elements of site operators in the symmetry-adapted basis average
/// over all translates; the per-site phonon expectation entering `<x^2>` and
/// `<p^2>` is accumulated in the same ladder sweep.
pub fn quadrature_moments(psi: &[Complex64], basis: &PhononBasis, r: usize) -> QuadratureMoments {
    let n = basis.n_sites();
    let mut shifted = vec![0u8; n];
    let mut a_exp = Complex64::new(0.0, 0.0); // <a_r>
    let mut a2_exp = Complex64::new(0.0, 0.0); // <a_r^2>
    let mut n_site = 0.0f64; // <a_r^dag a_r>
    for trans in 0..n {
        // site of the untranslated configuration that lands on r
        let s = (r + n - trans) % n;
        for (i, c) in psi.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let cfg = basis.config(i);
            let m = cfg[s] as usize;
            n_site += m as f64 * c.norm_sqr();
            if m >= 1 {
                shifted.copy_from_slice(cfg);
                shifted[s] -= 1;
                let j = basis.rank(&shifted);
                a_exp += psi[j].conj() * c * (m as f64).sqrt();
            }
            if m >= 2 {
                shifted.copy_from_slice(cfg);
                shifted[s] -= 2;
                let j = basis.rank(&shifted);
                a2_exp += psi[j].conj() * c * ((m * (m - 1)) as f64).sqrt();
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    a_exp *= inv_n;
    a2_exp *= inv_n;
    n_site *= inv_n;
    QuadratureMoments {
        x2: n_site + 0.5 + a2_exp.re,
        p2: n_site + 0.5 - a2_exp.re,
        x_mean: std::f64::consts::SQRT_2 * a_exp.re,
        p_mean: std::f64::consts::SQRT_2 * a_exp.im,
        n_site,
    }
}

/// Dynamical variances `(S_x, S_p)` of the position and momentum quadratures
/// at lattice site `r`.
pub fn quadrature_variances(psi: &[Complex64], basis: &PhononBasis, r: usize) -> (f64, f64) {
    let m = quadrature_moments(psi, basis, r);
    (m.x2 - m.x_mean * m.x_mean, m.p2 - m.p_mean * m.p_mean)
}

/// Reduced excitation density matrix
/// `rho(n, n') = N^{-1} exp(i k0 (n - n')) <psi| T^ph_{n-n'} |psi>`.
pub fn reduced_density(
    psi: &[Complex64],
    basis: &PhononBasis,
    k0: f64,
) -> Result<DMatrix<Complex64>, ObservableError> {
    let n = basis.n_sites();
    let mut shifted = vec![0u8; n];
    // translation overlaps t_d = sum_m conj(C_{T^d m}) C_m
    let mut t = vec![Complex64::new(0.0, 0.0); n];
    for d in 0..n {
        if d == 0 {
            t[0] = psi.iter().map(|c| c.conj() * c).sum();
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, c) in psi.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            basis.translate_into(basis.config(i), d, &mut shifted);
            let j = basis.rank(&shifted);
            acc += psi[j].conj() * c;
        }
        t[d] = acc;
    }
    let inv_n = 1.0 / n as f64;
    let mut rho = DMatrix::<Complex64>::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let d = (row + n - col) % n;
            let phase = Complex64::from_polar(1.0, k0 * (row as f64 - col as f64));
            rho[(row, col)] = inv_n * phase * t[d];
        }
    }
    let trace: Complex64 = (0..n).map(|i| rho[(i, i)]).sum();
    let dev = (trace - Complex64::new(1.0, 0.0)).norm();
    if dev > 1e-10 {
        return Err(ObservableError::TraceViolation(dev));
    }
    Ok(rho)
}

/// Von Neumann entropy `-sum xi ln xi` of a reduced density matrix.
/// Eigenvalues in `[-1e-12, 0)` are clamped to zero.
pub fn entanglement_entropy(rho: &DMatrix<Complex64>) -> Result<f64, ObservableError> {
    let eig = rho.clone().symmetric_eigen();
    let mut s = 0.0f64;
    for &xi in eig.eigenvalues.iter() {
        if xi < -1e-9 {
            return Err(ObservableError::NonPhysicalSpectrum(xi));
        }
        let xi = xi.clamp(0.0, 1.0);
        if xi > 0.0 {
            s -= xi * xi.ln();
        }
    }
    Ok(s)
}

/// First time the piecewise-linear interpolant of `n_ph(t)` crosses the
/// ground-state phonon number from below; `None` when never reached.
pub fn formation_time(times: &[f64], n_ph: &[f64], n_bar_gs: f64) -> Option<f64> {
    assert_eq!(times.len(), n_ph.len());
    for w in 1..times.len() {
        let (t0, t1) = (times[w - 1], times[w]);
        let (y0, y1) = (n_ph[w - 1], n_ph[w]);
        if y0 < n_bar_gs && y1 >= n_bar_gs {
            let frac = (n_bar_gs - y0) / (y1 - y0);
            return Some(t0 + frac * (t1 - t0));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_on(basis: &PhononBasis, idx: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
        v[idx] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn phonon_number_basics() {
        let basis = PhononBasis::new(4, 3).unwrap();
        let psi = unit_on(&basis, basis.zero_phonon_index());
        assert_eq!(phonon_number(&psi, &basis), 0.0);

        // equal superposition of a 0-phonon and a 2-phonon configuration
        let two = basis.rank(&[0, 2, 0, 0]);
        let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
        psi[basis.zero_phonon_index()] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[two] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert_abs_diff_eq!(phonon_number(&psi, &basis), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn vacuum_quadratures() {
        let basis = PhononBasis::new(5, 2).unwrap();
        let psi = unit_on(&basis, basis.zero_phonon_index());
        let (sx, sp) = quadrature_variances(&psi, &basis, 0);
        assert_abs_diff_eq!(sx, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(sp, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn quadratures_site_independent() {
        let basis = PhononBasis::new(4, 3).unwrap();
        // arbitrary normalized state with structure
        let mut psi: Vec<Complex64> = (0..basis.dim())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let n = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|c| *c /= n);
        let (sx0, sp0) = quadrature_variances(&psi, &basis, 0);
        for r in 1..4 {
            let (sx, sp) = quadrature_variances(&psi, &basis, r);
            assert_abs_diff_eq!(sx, sx0, epsilon = 1e-12);
            assert_abs_diff_eq!(sp, sp0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_identity() {
        // <x^2> + <p^2> = 2 <a^dag a> + 1 per site
        let basis = PhononBasis::new(4, 3).unwrap();
        let mut psi: Vec<Complex64> = (0..basis.dim())
            .map(|i| Complex64::new((i as f64 * 0.73).cos(), (i as f64 * 0.29).sin()))
            .collect();
        let n = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|c| *c /= n);
        let (sx, sp) = quadrature_variances(&psi, &basis, 0);
        // add back the subtracted means to recover <x^2> + <p^2>
        let n_site = phonon_number(&psi, &basis) / 4.0;
        let mut shifted = [0u8; 4];
        let mut a_exp = Complex64::new(0.0, 0.0);
        for trans in 0..4usize {
            let s = (4 - trans) % 4;
            for (i, c) in psi.iter().enumerate() {
                let cfg = basis.config(i);
                if cfg[s] >= 1 {
                    shifted.copy_from_slice(cfg);
                    shifted[s] -= 1;
                    a_exp += psi[basis.rank(&shifted)].conj() * c * (cfg[s] as f64).sqrt();
                }
            }
        }
        a_exp /= 4.0;
        let x_mean = std::f64::consts::SQRT_2 * a_exp.re;
        let p_mean = std::f64::consts::SQRT_2 * a_exp.im;
        let lhs = sx + x_mean * x_mean + sp + p_mean * p_mean;
        assert_abs_diff_eq!(lhs, 2.0 * n_site + 1.0, epsilon = 1e-10);
    }

    #[test]
    fn vacuum_reduced_density_is_pure() {
        let basis = PhononBasis::new(5, 2).unwrap();
        let psi = unit_on(&basis, basis.zero_phonon_index());
        let k0 = std::f64::consts::TAU / 5.0;
        let rho = reduced_density(&psi, &basis, k0).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(rho[(i, i)].re, 0.2, epsilon = 1e-14);
        }
        let s = entanglement_entropy(&rho).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn uniform_spectrum_entropy() {
        let n = 9;
        let rho = DMatrix::<Complex64>::from_diagonal_element(
            n,
            n,
            Complex64::new(1.0 / n as f64, 0.0),
        );
        let s = entanglement_entropy(&rho).unwrap();
        assert_abs_diff_eq!(s, (n as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 2.197, epsilon = 5e-4);
    }

    #[test]
    fn formation_time_linear_crossing() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let n_ph: Vec<f64> = times.clone();
        assert_abs_diff_eq!(
            formation_time(&times, &n_ph, 2.0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(formation_time(&times, &n_ph, 100.0).is_none());
        // flat series never crosses
        let flat = vec![0.0; times.len()];
        assert!(formation_time(&times, &flat, 0.5).is_none());
    }

    #[test]
    fn global_phase_invariance() {
        let basis = PhononBasis::new(4, 2).unwrap();
        let mut psi: Vec<Complex64> = (0..basis.dim())
            .map(|i| Complex64::new((i as f64 * 0.5).sin(), 0.3))
            .collect();
        let n = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|c| *c /= n);
        let phase = Complex64::from_polar(1.0, 1.234);
        let rotated: Vec<Complex64> = psi.iter().map(|c| c * phase).collect();
        let k0 = std::f64::consts::TAU / 4.0;

        assert_abs_diff_eq!(
            phonon_number(&psi, &basis),
            phonon_number(&rotated, &basis),
            epsilon = 1e-13
        );
        let (sx1, sp1) = quadrature_variances(&psi, &basis, 0);
        let (sx2, sp2) = quadrature_variances(&rotated, &basis, 0);
        assert_abs_diff_eq!(sx1, sx2, epsilon = 1e-13);
        assert_abs_diff_eq!(sp1, sp2, epsilon = 1e-13);
        let s1 = entanglement_entropy(&reduced_density(&psi, &basis, k0).unwrap()).unwrap();
        let s2 = entanglement_entropy(&reduced_density(&rotated, &basis, k0).unwrap()).unwrap();
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-12);
    }
}

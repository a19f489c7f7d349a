//! Lanczos-type iteration for extremal eigenpairs of a sector Hamiltonian,
//! the per-sector ground-state scan, and the (N, M) truncation convergence
//! sweep.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{KSector, PhononBasis};
use crate::hamiltonian::{build_sector, HamiltonianError, HermitianOp};
use crate::model::{derive_model, DeviceParams, ModelError, ModelParams};
use crate::observables;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("no convergence after {iterations} iterations, best residual {best_residual:.3e}")]
    NoConvergence {
        iterations: usize,
        best_residual: f64,
    },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("convergence sweep exhausted its (N, M) schedule without meeting {0:.1e}")]
    SweepExhausted(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    /// residual tolerance on both extremal Ritz pairs
    pub tol: f64,
    pub max_iter: usize,
    /// stored-basis cap; a thick restart keeps the best Ritz vectors
    pub basis_cap: usize,
    /// seed for the random start vector, recorded in run metadata
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2000,
            basis_cap: 200,
            seed: 0x706f6c61,
        }
    }
}

pub struct LanczosResult {
    pub e_min: f64,
    pub e_max: f64,
    pub ground_vector: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Sorted eigen-decomposition of the Hermitian projected matrix `b` (ascending
/// eigenvalues, eigenvectors as columns).
fn projected_eigs(b: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let se = b.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let n = b.nrows();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Extremal eigenpairs by Rayleigh-Ritz over a fully reorthogonalized Krylov
/// basis; restarts thick when the basis cap is reached.
pub fn extremal_eigs<O: HermitianOp>(
    op: &O,
    cfg: &LanczosConfig,
) -> Result<LanczosResult, EigenError> {
    let dim = op.dim();
    let cap = cfg.basis_cap.min(dim).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis: Vec<Vec<Complex64>> = vec![random_unit(dim, &mut rng)];
    // projected matrix V^H H V, grown column by column
    let mut b = DMatrix::<Complex64>::zeros(cap, cap);
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut iterations = 0usize;
    let mut best_residual = f64::INFINITY;

    loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        iterations += 1;
        // two-pass Gram-Schmidt; first-pass coefficients are the projections
        for pass in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let h = dot(vi, &w);
                if pass == 0 {
                    b[(i, j)] = h;
                } else {
                    b[(i, j)] += h;
                }
                if i != j {
                    b[(j, i)] = b[(i, j)].conj();
                }
                w.iter_mut().zip(vi).for_each(|(x, v)| *x -= h * v);
            }
        }
        b[(j, j)] = Complex64::new(b[(j, j)].re, 0.0);
        // coupling out of the subspace, valid for the last processed column
        let beta_last = norm(&w);

        let jdim = basis.len();
        let exhausted = jdim == dim;
        let check_now = iterations % 4 == 0 || jdim == cap || exhausted || beta_last < 1e-13;
        if check_now {
            let bsub = b.view((0, 0), (jdim, jdim)).into_owned();
            let (vals, vecs) = projected_eigs(&bsub);
            let res_min = (beta_last * vecs[(jdim - 1, 0)].norm()).abs();
            let res_max = (beta_last * vecs[(jdim - 1, jdim - 1)].norm()).abs();
            let res = res_min.max(res_max);
            best_residual = best_residual.min(res);
            let invariant = beta_last < 1e-13 || exhausted;
            if (res < cfg.tol && iterations >= 2) || invariant {
                // assemble the ground Ritz vector and its true residual
                let mut ground = vec![Complex64::new(0.0, 0.0); dim];
                for (i, vi) in basis.iter().enumerate() {
                    let c = vecs[(i, 0)];
                    ground.iter_mut().zip(vi).for_each(|(g, v)| *g += c * v);
                }
                let gn = norm(&ground);
                ground.iter_mut().for_each(|x| *x /= gn);
                let mut hg = vec![Complex64::new(0.0, 0.0); dim];
                op.apply(&ground, &mut hg);
                let e_min = vals[0];
                let true_res = {
                    let mut r2 = 0.0f64;
                    for (h, g) in hg.iter().zip(&ground) {
                        r2 += (h - e_min * g).norm_sqr();
                    }
                    r2.sqrt()
                };
                if true_res < cfg.tol * 10.0 || invariant {
                    return Ok(LanczosResult {
                        e_min,
                        e_max: vals[jdim - 1],
                        ground_vector: ground,
                        iterations,
                        residual: true_res,
                    });
                }
            }
            if iterations >= cfg.max_iter {
                return Err(EigenError::NoConvergence {
                    iterations,
                    best_residual,
                });
            }
            if jdim == cap {
                // thick restart: keep extremal Ritz vectors from both ends
                let keep_side = (cap / 8).clamp(4, 12);
                let keep: Vec<usize> = (0..keep_side)
                    .chain(jdim - keep_side..jdim)
                    .collect();
                let mut new_basis: Vec<Vec<Complex64>> = Vec::with_capacity(cap);
                for &t in &keep {
                    let mut u = vec![Complex64::new(0.0, 0.0); dim];
                    for (i, vi) in basis.iter().enumerate() {
                        let c = vecs[(i, t)];
                        u.iter_mut().zip(vi).for_each(|(x, v)| *x += c * v);
                    }
                    let un = norm(&u);
                    u.iter_mut().for_each(|x| *x /= un);
                    new_basis.push(u);
                }
                b.fill(Complex64::new(0.0, 0.0));
                for (t, &src) in keep.iter().enumerate() {
                    b[(t, t)] = Complex64::new(vals[src], 0.0);
                }
                basis = new_basis;
                // couplings of the kept vectors to the remainder direction are
                // recovered when the next column is processed explicitly
                if beta_last > 1e-13 {
                    let mut v = w.clone();
                    for u in &basis {
                        let h = dot(u, &v);
                        v.iter_mut().zip(u).for_each(|(x, y)| *x -= h * y);
                    }
                    let vn = norm(&v);
                    if vn > 1e-13 {
                        v.iter_mut().for_each(|x| *x /= vn);
                        basis.push(v);
                    } else {
                        basis.push(orthogonal_random(dim, &basis, &mut rng));
                    }
                } else {
                    basis.push(orthogonal_random(dim, &basis, &mut rng));
                }
                continue;
            }
        }
        if beta_last < 1e-13 {
            // invariant subspace hit before convergence check path
            basis.push(orthogonal_random(dim, &basis, &mut rng));
        } else {
            let mut v = std::mem::replace(&mut w, vec![Complex64::new(0.0, 0.0); dim]);
            v.iter_mut().for_each(|x| *x /= beta_last);
            basis.push(v);
        }
    }
}

fn orthogonal_random(
    dim: usize,
    basis: &[Vec<Complex64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Complex64> {
    loop {
        let mut v = random_unit(dim, rng);
        for u in basis {
            let h = dot(u, &v);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= h * y);
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Memory-light extremal-eigenvalue estimate: plain three-vector Lanczos
/// without reorthogonalization. Used only to bracket the spectrum of sectors
/// too large for the stored-basis solver; the bracket is padded by the caller.
pub fn extremal_bounds<O: HermitianOp>(op: &O, iters: usize, seed: u64) -> (f64, f64) {
    let dim = op.dim();
    let steps = iters.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v_prev = vec![Complex64::new(0.0, 0.0); dim];
    let mut v = random_unit(dim, &mut rng);
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta = Vec::with_capacity(steps);
    let mut beta_prev = 0.0f64;
    for _ in 0..steps {
        op.apply(&v, &mut w);
        let a = dot(&v, &w).re;
        alpha.push(a);
        for i in 0..dim {
            w[i] -= a * v[i] + beta_prev * v_prev[i];
        }
        let bnorm = norm(&w);
        if bnorm < 1e-13 {
            break;
        }
        beta.push(bnorm);
        beta_prev = bnorm;
        std::mem::swap(&mut v_prev, &mut v);
        for i in 0..dim {
            v[i] = w[i] / bnorm;
        }
    }
    let n = alpha.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n && i < beta.len() {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let vals = t.symmetric_eigen().eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Per-sector ground-state record of a scan.
#[derive(Debug, Clone, Serialize)]
pub struct SectorGround {
    pub k_index: usize,
    pub k_value: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub phonon_number: f64,
    pub residue: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateSummary {
    pub k_gs_index: usize,
    pub k_gs_value: f64,
    pub energy: f64,
    pub phonon_number: f64,
    pub residue: f64,
    pub degenerate: bool,
    pub sectors: Vec<SectorGround>,
}

/// Relative tolerance declaring the `±K_gs` pair degenerate.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

/// Scans every K sector for its lowest eigenpair and summarizes the global
/// ground state per the symmetry-resolved level-crossing picture.
pub fn ground_scan(
    params: &ModelParams,
    basis: &Arc<PhononBasis>,
    cfg: &LanczosConfig,
) -> Result<GroundStateSummary, EigenError> {
    let n = basis.n_sites();
    let mut sectors = Vec::with_capacity(n);
    for k_index in 0..n {
        let h = build_sector(params, KSector::new(basis.clone(), k_index))?;
        let r = extremal_eigs(&h, cfg)?;
        sectors.push(SectorGround {
            k_index,
            k_value: h.sector.k_value,
            e_min: r.e_min,
            e_max: r.e_max,
            phonon_number: observables::phonon_number(&r.ground_vector, basis),
            residue: observables::residue(&r.ground_vector, basis.zero_phonon_index()),
            iterations: r.iterations,
            residual: r.residual,
        });
    }
    Ok(summarize(sectors))
}

pub fn summarize(sectors: Vec<SectorGround>) -> GroundStateSummary {
    let best = sectors
        .iter()
        .min_by(|a, b| a.e_min.partial_cmp(&b.e_min).unwrap())
        .expect("at least one sector");
    let scale = best.e_min.abs().max(1e-300);
    let degenerate = best.k_index != 0
        && sectors.iter().any(|s| {
            s.k_index != best.k_index && (s.e_min - best.e_min).abs() < DEGENERACY_REL_TOL * scale
        });
    GroundStateSummary {
        k_gs_index: best.k_index,
        k_gs_value: best.k_value,
        energy: best.e_min,
        phonon_number: best.phonon_number,
        residue: best.residue,
        degenerate,
        sectors,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n_sites: usize,
    pub max_phonons: usize,
    pub energy: f64,
    pub site_phonon: f64,
}

/// Walks the (N, M) truncation schedule until growing either parameter by one
/// step changes the ground-state energy and the per-site phonon expectation by
/// no more than `target_rel_err`.
pub fn convergence_sweep(
    dev: &DeviceParams,
    target_rel_err: f64,
    cfg: &LanczosConfig,
) -> Result<(usize, usize, GroundStateSummary, Vec<SweepPoint>), EigenError> {
    assert!(target_rel_err > 0.0);
    let n_schedule = [5usize, 7, 9, 11];
    let m_schedule: Vec<usize> = (0..=10).map(|i| 2 * i).collect();
    let mut trace = Vec::new();

    let eval = |n: usize, m: usize, trace: &mut Vec<SweepPoint>| -> Result<GroundStateSummary, EigenError> {
        let params = derive_model(dev, n, m)?;
        let basis = Arc::new(PhononBasis::new(n, m).expect("schedule sizes fit"));
        let summary = ground_scan(&params, &basis, cfg)?;
        trace.push(SweepPoint {
            n_sites: n,
            max_phonons: m,
            energy: summary.energy,
            site_phonon: summary.phonon_number / n as f64,
        });
        Ok(summary)
    };

    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);

    for (ni, &n) in n_schedule.iter().enumerate() {
        if ni + 1 == n_schedule.len() {
            break; // need an N step above to certify
        }
        for wi in 0..m_schedule.len() - 1 {
            let m = m_schedule[wi];
            let here = eval(n, m, &mut trace)?;
            let m_up = eval(n, m_schedule[wi + 1], &mut trace)?;
            let n_up = eval(n_schedule[ni + 1], m, &mut trace)?;
            let ok_m = rel(here.energy, m_up.energy) <= target_rel_err
                && rel(
                    here.phonon_number / n as f64,
                    m_up.phonon_number / n as f64,
                ) <= target_rel_err.max(1e-12);
            let ok_n = rel(here.energy, n_up.energy) <= target_rel_err
                && rel(
                    here.phonon_number / n as f64,
                    n_up.phonon_number / n_schedule[ni + 1] as f64,
                ) <= target_rel_err.max(1e-12);
            if ok_m && ok_n {
                return Ok((n, m, here, trace));
            }
        }
    }
    Err(EigenError::SweepExhausted(target_rel_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::KSector;
    use approx::assert_abs_diff_eq;

    fn toy_params(n: usize, m: usize, g: f64, t0: f64, dw: f64) -> ModelParams {
        ModelParams {
            n_sites: n,
            max_phonons: m,
            t0,
            g,
            delta_omega: dw,
            lambda_eff: 2.0 * g * g * dw / t0,
            tau_ec: 1.0 / t0,
        }
    }

    #[test]
    fn free_band_bottom() {
        // g = 0, K = 0: ground energy is -2 t0
        let basis = Arc::new(PhononBasis::new(5, 2).unwrap());
        let p = toy_params(5, 2, 0.0, 1.3, 0.9);
        let h = build_sector(&p, KSector::new(basis, 0)).unwrap();
        let r = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
        assert_abs_diff_eq!(r.e_min, -2.0 * p.t0, epsilon = 1e-9);
        assert!(norm(&r.ground_vector) - 1.0 < 1e-12);
    }

    #[test]
    fn free_spectrum_all_sectors() {
        // g = 0: per-sector minimum is min over j of (-2 t0 cos(k_j) + dw m)
        // reachable within the sector's phonon budget; the zero-phonon state
        // has momentum K entirely on the excitation.
        let n = 5;
        let basis = Arc::new(PhononBasis::new(n, 2).unwrap());
        let p = toy_params(n, 2, 0.0, 1.0, 10.0);
        for k_index in 0..n {
            let h = build_sector(&p, KSector::new(basis.clone(), k_index)).unwrap();
            let r = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
            // with dw >> 4 t0 the sector minimum is the bare band energy
            let k = h.sector.k_value;
            assert_abs_diff_eq!(r.e_min, -2.0 * p.t0 * k.cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn spectral_symmetry_k_pairs() {
        let n = 5;
        let basis = Arc::new(PhononBasis::new(n, 2).unwrap());
        let p = toy_params(n, 2, 0.6, 1.0, 1.0);
        let cfg = LanczosConfig::default();
        for k_index in 1..=n / 2 {
            let h1 = build_sector(&p, KSector::new(basis.clone(), k_index)).unwrap();
            let h2 = build_sector(&p, KSector::new(basis.clone(), n - k_index)).unwrap();
            let r1 = extremal_eigs(&h1, &cfg).unwrap();
            let r2 = extremal_eigs(&h2, &cfg).unwrap();
            assert_abs_diff_eq!(r1.e_min, r2.e_min, epsilon = 1e-8);
        }
    }

    #[test]
    fn rerun_from_converged_vector_is_stationary() {
        let basis = Arc::new(PhononBasis::new(4, 2).unwrap());
        let p = toy_params(4, 2, 0.5, 1.0, 1.0);
        let h = build_sector(&p, KSector::new(basis, 1)).unwrap();
        let r = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
        // Rayleigh quotient of the returned vector equals e_min
        let mut hv = vec![Complex64::new(0.0, 0.0); h.dim()];
        h.apply(&r.ground_vector, &mut hv);
        let rq = dot(&r.ground_vector, &hv).re;
        assert_abs_diff_eq!(rq, r.e_min, epsilon = 1e-8);
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn bounds_bracket_spectrum() {
        let basis = Arc::new(PhononBasis::new(4, 2).unwrap());
        let p = toy_params(4, 2, 0.7, 1.0, 1.0);
        let h = build_sector(&p, KSector::new(basis, 1)).unwrap();
        let exact = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
        let (lo, hi) = extremal_bounds(&h, 60, 1);
        assert!(lo >= exact.e_min - 1e-6 && lo <= exact.e_min + 1e-4);
        assert!(hi <= exact.e_max + 1e-6 && hi >= exact.e_max - 1e-4);
    }

    #[test]
    fn restart_still_converges() {
        let basis = Arc::new(PhononBasis::new(5, 3).unwrap());
        let p = toy_params(5, 3, 0.9, 1.0, 1.0);
        let h = build_sector(&p, KSector::new(basis, 2)).unwrap();
        let tight = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
        let cramped = extremal_eigs(
            &h,
            &LanczosConfig {
                basis_cap: 20,
                max_iter: 4000,
                ..LanczosConfig::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(tight.e_min, cramped.e_min, epsilon = 1e-7);
        assert_abs_diff_eq!(tight.e_max, cramped.e_max, epsilon = 1e-6);
    }

    #[test]
    fn variational_monotonicity_in_m() {
        let mut prev = f64::INFINITY;
        for m in [0usize, 1, 2, 3, 4] {
            let basis = Arc::new(PhononBasis::new(4, m).unwrap());
            let p = toy_params(4, m, 0.8, 1.0, 1.0);
            let h = build_sector(&p, KSector::new(basis, 1)).unwrap();
            let r = extremal_eigs(&h, &LanczosConfig::default()).unwrap();
            assert!(r.e_min <= prev + 1e-12, "E_gs must not increase with M");
            prev = r.e_min;
        }
    }
}

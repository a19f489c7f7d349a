//! Brute-force reference over the full real-space product basis
//! `|site>_e (x) |m>_ph`: dense Hamiltonian, dense eigendecomposition, exact
//! evolution, and direct partial traces. Small sizes only; this is the
//! arbiter for the sector construction, the propagator, and the reduced
//! density matrix.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{k_value, PhononBasis};
use crate::model::ModelParams;

/// Maximum dense dimension `N * D_ph` accepted.
pub const SIZE_GUARD: usize = 20_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dense dimension {0} exceeds the size guard {SIZE_GUARD}")]
    SizeGuard(usize),
}

pub struct DenseSystem {
    pub params: ModelParams,
    pub basis: Arc<PhononBasis>,
    /// `N * D_ph`
    pub dim: usize,
    pub hamiltonian: DMatrix<Complex64>,
}

pub struct DenseEig {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl DenseSystem {
    #[inline]
    pub fn flat(&self, e_site: usize, ph: usize) -> usize {
        e_site * self.basis.dim() + ph
    }
}

/// Assembles the real-space Hamiltonian with periodic boundaries.
pub fn build_dense(params: &ModelParams) -> Result<DenseSystem, OracleError> {
    let n = params.n_sites;
    let basis = Arc::new(PhononBasis::new(n, params.max_phonons).expect("oracle sizes are tiny"));
    let d_ph = basis.dim();
    let dim = n * d_ph;
    if dim > SIZE_GUARD {
        return Err(OracleError::SizeGuard(dim));
    }
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let flat = |e: usize, p: usize| e * d_ph + p;
    let g_dw = params.g * params.delta_omega;
    let mut work = vec![0u8; n];

    // adds amp * (a_site + a^dag_site) entries from column (e_col, cfg)
    let ladder = |h: &mut DMatrix<Complex64>,
                      basis: &PhononBasis,
                      work: &mut Vec<u8>,
                      cfg: &[u8],
                      total: usize,
                      site: usize,
                      e_row: usize,
                      col: usize,
                      amp: f64| {
        let m = cfg[site] as usize;
        if total < basis.max_phonons() {
            work.copy_from_slice(cfg);
            work[site] += 1;
            let row = flat(e_row, basis.rank(work));
            h[(row, col)] += Complex64::new(amp * ((m + 1) as f64).sqrt(), 0.0);
        }
        if m > 0 {
            work.copy_from_slice(cfg);
            work[site] -= 1;
            let row = flat(e_row, basis.rank(work));
            h[(row, col)] += Complex64::new(amp * (m as f64).sqrt(), 0.0);
        }
    };

    for e in 0..n {
        let left = (e + n - 1) % n;
        let right = (e + 1) % n;
        for p in 0..d_ph {
            let col = flat(e, p);
            let cfg = basis.config(p).to_vec();
            let total: usize = cfg.iter().map(|&m| m as usize).sum();
            // free phonons
            h[(col, col)] += Complex64::new(params.delta_omega * total as f64, 0.0);
            // bare hopping
            h[(flat(left, p), col)] += Complex64::new(-params.t0, 0.0);
            h[(flat(right, p), col)] += Complex64::new(-params.t0, 0.0);
            // Peierls: hop left picks (X_e - X_{e-1}), hop right (X_{e+1} - X_e)
            ladder(&mut h, &basis, &mut work, &cfg, total, e, left, col, g_dw);
            ladder(&mut h, &basis, &mut work, &cfg, total, left, left, col, -g_dw);
            ladder(&mut h, &basis, &mut work, &cfg, total, right, right, col, g_dw);
            ladder(&mut h, &basis, &mut work, &cfg, total, e, right, col, -g_dw);
            // breathing mode: -(X_{e+1} - X_{e-1}) on the excitation site
            ladder(&mut h, &basis, &mut work, &cfg, total, right, e, col, -g_dw);
            ladder(&mut h, &basis, &mut work, &cfg, total, left, e, col, g_dw);
        }
    }
    Ok(DenseSystem {
        params: *params,
        basis,
        dim,
        hamiltonian: h,
    })
}

/// Permutation matrix of the one-site lattice translation
/// `(e, m) -> (e + 1, T m)`.
pub fn translation_matrix(sys: &DenseSystem) -> DMatrix<Complex64> {
    let n = sys.params.n_sites;
    let d_ph = sys.basis.dim();
    let mut u = DMatrix::<Complex64>::zeros(sys.dim, sys.dim);
    let mut shifted = vec![0u8; n];
    for e in 0..n {
        for p in 0..d_ph {
            sys.basis.translate_into(sys.basis.config(p), 1, &mut shifted);
            let row = sys.flat((e + 1) % n, sys.basis.rank(&shifted));
            u[(row, sys.flat(e, p))] = Complex64::new(1.0, 0.0);
        }
    }
    u
}

/// Projector onto the total-quasimomentum sector `K = 2 pi k_index / N`.
pub fn momentum_projector(sys: &DenseSystem, k_index: usize) -> DMatrix<Complex64> {
    let n = sys.params.n_sites;
    let k = k_value(n, k_index);
    let u = translation_matrix(sys);
    let mut power = DMatrix::<Complex64>::identity(sys.dim, sys.dim);
    let mut p = DMatrix::<Complex64>::zeros(sys.dim, sys.dim);
    for d in 0..n {
        let phase = Complex64::from_polar(1.0 / n as f64, k * d as f64);
        p += &power * phase;
        power = &u * power;
    }
    p
}

/// Embeds a sector-basis coefficient vector into the dense product basis:
/// `|K, m> = N^{-1/2} sum_n e^{iKn} |n>_e (x) |T^n m>`.
pub fn embed_sector_state(
    sys: &DenseSystem,
    k_index: usize,
    coeffs: &[Complex64],
) -> DVector<Complex64> {
    let n = sys.params.n_sites;
    let k = k_value(n, k_index);
    let norm = 1.0 / (n as f64).sqrt();
    let mut out = DVector::<Complex64>::zeros(sys.dim);
    let mut shifted = vec![0u8; n];
    for (p, &c) in coeffs.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        for t in 0..n {
            sys.basis.translate_into(sys.basis.config(p), t, &mut shifted);
            let idx = sys.flat(t, sys.basis.rank(&shifted));
            out[idx] += c * Complex64::from_polar(norm, k * t as f64);
        }
    }
    out
}

/// Adjoint of [`embed_sector_state`]: sector coefficients of a dense state.
pub fn project_to_sector(
    sys: &DenseSystem,
    k_index: usize,
    state: &DVector<Complex64>,
) -> Vec<Complex64> {
    let n = sys.params.n_sites;
    let k = k_value(n, k_index);
    let norm = 1.0 / (n as f64).sqrt();
    let mut shifted = vec![0u8; n];
    (0..sys.basis.dim())
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..n {
                sys.basis.translate_into(sys.basis.config(p), t, &mut shifted);
                let idx = sys.flat(t, sys.basis.rank(&shifted));
                acc += Complex64::from_polar(norm, -(k * t as f64)) * state[idx];
            }
            acc
        })
        .collect()
}

/// Spectrum of the K block, computed by projecting the dense Hamiltonian onto
/// the embedded sector basis.
pub fn sector_spectrum(sys: &DenseSystem, k_index: usize) -> Vec<f64> {
    let d_ph = sys.basis.dim();
    let mut w = DMatrix::<Complex64>::zeros(sys.dim, d_ph);
    for p in 0..d_ph {
        let mut unit = vec![Complex64::new(0.0, 0.0); d_ph];
        unit[p] = Complex64::new(1.0, 0.0);
        w.set_column(p, &embed_sector_state(sys, k_index, &unit));
    }
    let block = w.adjoint() * &sys.hamiltonian * &w;
    let (vals, _) = hermitian_jacobi(block);
    vals
}

pub fn diagonalize(sys: &DenseSystem) -> DenseEig {
    let (values, vectors) = hermitian_jacobi(sys.hamiltonian.clone());
    DenseEig { values, vectors }
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix. Slower than a
/// tridiagonalization-based solver but accurate to machine precision, which
/// is what a reference implementation is for. Returns ascending eigenvalues
/// and the matching eigenvector columns.
pub fn hermitian_jacobi(mut h: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let d = h.nrows();
    assert_eq!(d, h.ncols());
    let mut v = DMatrix::<Complex64>::identity(d, d);
    let scale = h.norm().max(1e-300);
    for _sweep in 0..60 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| h[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let hpq = h[(p, q)];
                let r = hpq.norm();
                if r < 1e-300 {
                    continue;
                }
                // phase-rotate the (p, q) plane so the pivot is real, then a
                // real Jacobi rotation annihilates it
                let phase = hpq / r; // e^{i phi}
                let app = h[(p, p)].re;
                let aqq = h[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // W acts on columns p, q:
                //   W_pp = c, W_pq = s, W_qp = -s conj(phase), W_qq = c conj(phase)
                let wqp = -s * phase.conj();
                let wqq = c * phase.conj();
                // columns: col_p' = c col_p + wqp col_q; col_q' = s col_p + wqq col_q
                for i in 0..d {
                    let hip = h[(i, p)];
                    let hiq = h[(i, q)];
                    h[(i, p)] = c * hip + wqp * hiq;
                    h[(i, q)] = s * hip + wqq * hiq;
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip + wqp * viq;
                    v[(i, q)] = s * vip + wqq * viq;
                }
                // rows: row_p' = c row_p + conj(wqp) row_q; row_q' = s row_p + conj(wqq) row_q
                for j in 0..d {
                    let hpj = h[(p, j)];
                    let hqj = h[(q, j)];
                    h[(p, j)] = c * hpj + wqp.conj() * hqj;
                    h[(q, j)] = s * hpj + wqq.conj() * hqj;
                }
                h[(p, q)] = Complex64::new(0.0, 0.0);
                h[(q, p)] = Complex64::new(0.0, 0.0);
                h[(p, p)] = Complex64::new(h[(p, p)].re, 0.0);
                h[(q, q)] = Complex64::new(h[(q, q)].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| h[(i, i)].re.partial_cmp(&h[(j, j)].re).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| h[(i, i)].re).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &v.column(i));
    }
    (values, vectors)
}

/// `U(t) psi0 = V exp(-i Lambda t) V^H psi0`.
pub fn exact_evolve(eig: &DenseEig, psi0: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    let mut coeffs = eig.vectors.adjoint() * psi0;
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -eig.values[i] * t);
    }
    &eig.vectors * coeffs
}

/// `(<x_r^2>, <p_r^2>)` of a dense product-basis state at lattice site `r`,
/// by direct ladder sums over the explicit occupation numbers.
pub fn dense_quadratures(
    sys: &DenseSystem,
    state: &DVector<Complex64>,
    r: usize,
) -> (f64, f64) {
    let basis = &sys.basis;
    let n = sys.params.n_sites;
    let d_ph = basis.dim();
    let mut n_exp = 0.0f64;
    let mut a2 = Complex64::new(0.0, 0.0);
    let mut lowered = vec![0u8; n];
    for e in 0..n {
        for i in 0..d_ph {
            let c = state[sys.flat(e, i)];
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let cfg = basis.config(i);
            let m = cfg[r] as usize;
            n_exp += m as f64 * c.norm_sqr();
            if m >= 2 {
                lowered.copy_from_slice(cfg);
                lowered[r] -= 2;
                let j = basis.rank(&lowered);
                a2 += state[sys.flat(e, j)].conj() * c * ((m * (m - 1)) as f64).sqrt();
            }
        }
    }
    (n_exp + 0.5 + a2.re, n_exp + 0.5 - a2.re)
}

/// Direct partial trace over the phonon factor:
/// `rho(n, n') = sum_m psi(n, m) conj(psi(n', m))`.
pub fn exact_partial_trace(sys: &DenseSystem, state: &DVector<Complex64>) -> DMatrix<Complex64> {
    let n = sys.params.n_sites;
    let d_ph = sys.basis.dim();
    let mut rho = DMatrix::<Complex64>::zeros(n, n);
    for row in 0..n {
        for col in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..d_ph {
                acc += state[sys.flat(row, m)] * state[sys.flat(col, m)].conj();
            }
            rho[(row, col)] = acc;
        }
    }
    rho
}

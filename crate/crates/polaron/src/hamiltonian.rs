//! Sparse Hamiltonian of one total-quasimomentum sector.
//!
//! Matrix elements in the symmetry-adapted basis are obtained by re-centering:
//! each real-space term moving the excitation off the reference site is
//! followed by the lattice translation that brings it back, which permutes the
//! phonon configuration and multiplies by `exp(±iK)`.

use std::io::{self, Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{KSector, PhononBasis};
use crate::model::ModelParams;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("assembled matrix not Hermitian at ({i},{j}): |H_ij - conj(H_ji)| = {dev:.3e}")]
    TruncationInconsistency { i: usize, j: usize, dev: f64 },
    #[error("spectral width {0:.3e} below 1e-12, cannot rescale")]
    DegenerateSpectrum(f64),
    #[error("vector length {got} does not match sector dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("cache file mismatch: {0}")]
    CacheMismatch(String),
}

/// Row-compressed complex sparse matrix; column indices fit in u32.
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Looks up entry (i, j); zero when absent. Rows are sorted by column.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col[lo..hi].binary_search(&(j as u32)) {
            Ok(p) => self.val[lo + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }
}

/// Linear operator on sector state vectors.
pub trait HermitianOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

/// `H_eff` restricted to one K sector.
pub struct KSectorHamiltonian {
    pub sector: KSector,
    pub matrix: CsrMatrix,
    pub params: ModelParams,
}

/// Scratch used when generating one column of the sector Hamiltonian.
struct ColumnGen<'a> {
    basis: &'a PhononBasis,
    entries: Vec<(u32, Complex64)>,
    shifted: Vec<u8>,
    target: Vec<u8>,
}

impl<'a> ColumnGen<'a> {
    fn new(basis: &'a PhononBasis) -> Self {
        let n = basis.n_sites();
        Self {
            basis,
            entries: Vec::with_capacity(16),
            shifted: vec![0u8; n],
            target: vec![0u8; n],
        }
    }

    /// Adds ladder entries of `amp * (a_site + a^dag_site)` applied to the
    /// configuration in `self.shifted`; raises beyond the cap are dropped.
    fn ladder(&mut self, site: usize, amp: Complex64, total: usize) {
        let m = self.shifted[site] as usize;
        if total < self.basis.max_phonons() {
            self.target.copy_from_slice(&self.shifted);
            self.target[site] += 1;
            let idx = self.basis.rank(&self.target) as u32;
            self.entries.push((idx, amp * ((m + 1) as f64).sqrt()));
        }
        if m > 0 {
            self.target.copy_from_slice(&self.shifted);
            self.target[site] -= 1;
            let idx = self.basis.rank(&self.target) as u32;
            self.entries.push((idx, amp * (m as f64).sqrt()));
        }
    }

    /// Generates the nonzero entries of column `i`, i.e. the amplitudes of
    /// `H |K, m_i>` on the sector basis, sorted and merged by row index.
    fn column(&mut self, i: usize, params: &ModelParams, k: f64) -> &[(u32, Complex64)] {
        let n = self.basis.n_sites();
        let cfg = self.basis.config(i).to_vec();
        let total: usize = cfg.iter().map(|&m| m as usize).sum();
        let phase_fwd = Complex64::from_polar(1.0, k);
        let phase_bwd = phase_fwd.conj();
        let g_dw = Complex64::new(params.g * params.delta_omega, 0.0);

        self.entries.clear();
        // free phonons: diagonal
        self.entries
            .push((i as u32, Complex64::new(params.delta_omega * total as f64, 0.0)));

        // excitation hop towards +1: re-centered via T^1, phase e^{iK}
        self.basis.translate_into(&cfg, 1, &mut self.shifted);
        let fwd_idx = self.basis.rank(&self.shifted) as u32;
        self.entries
            .push((fwd_idx, -params.t0 * phase_fwd));
        // Peierls factor (X_1 - X_0) on the translated configuration
        self.ladder(1, g_dw * phase_fwd, total);
        self.ladder(0, -g_dw * phase_fwd, total);

        // excitation hop towards -1: re-centered via T^{N-1}, phase e^{-iK}
        self.basis.translate_into(&cfg, n - 1, &mut self.shifted);
        let bwd_idx = self.basis.rank(&self.shifted) as u32;
        self.entries
            .push((bwd_idx, -params.t0 * phase_bwd));
        // Peierls factor (X_0 - X_{N-1}) on the translated configuration
        self.ladder(0, g_dw * phase_bwd, total);
        self.ladder(n - 1, -g_dw * phase_bwd, total);

        // breathing mode, diagonal in the excitation: -(X_1 - X_{N-1})
        self.shifted.copy_from_slice(&cfg);
        self.ladder(1, -g_dw, total);
        self.ladder(n - 1, g_dw, total);

        // sort and merge duplicates (N = 2 folds several terms together)
        self.entries.sort_unstable_by_key(|e| e.0);
        let mut w = 0usize;
        for r in 1..self.entries.len() {
            if self.entries[r].0 == self.entries[w].0 {
                let v = self.entries[r].1;
                self.entries[w].1 += v;
            } else {
                w += 1;
                self.entries[w] = self.entries[r];
            }
        }
        self.entries.truncate(w + 1);
        &self.entries
    }
}

/// Assembles `H_eff` in the K sector. The matrix is verified to be exactly
/// Hermitian up to `1e-12 * scale` after assembly.
pub fn build_sector(
    params: &ModelParams,
    sector: KSector,
) -> Result<KSectorHamiltonian, HamiltonianError> {
    let basis = sector.basis.clone();
    let dim = basis.dim();
    let k = sector.k_value;
    let mut gen = ColumnGen::new(&basis);

    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0usize);
    for i in 0..dim {
        // row i of a Hermitian matrix is the conjugate of column i
        for &(j, v) in gen.column(i, params, k) {
            col.push(j);
            val.push(v.conj());
        }
        row_ptr.push(col.len());
    }
    let matrix = CsrMatrix {
        dim,
        row_ptr,
        col,
        val,
    };
    let h = KSectorHamiltonian {
        sector,
        matrix,
        params: *params,
    };
    h.check_hermitian()?;
    Ok(h)
}

impl KSectorHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// Verifies `H_ij = conj(H_ji)` for every stored entry.
    pub fn check_hermitian(&self) -> Result<(), HamiltonianError> {
        let scale = self
            .val_scale()
            .max(f64::MIN_POSITIVE);
        for i in 0..self.matrix.dim {
            for p in self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1] {
                let j = self.matrix.col[p] as usize;
                let dev = (self.matrix.val[p] - self.matrix.entry(j, i).conj()).norm();
                if dev > 1e-12 * scale {
                    return Err(HamiltonianError::TruncationInconsistency { i, j, dev });
                }
            }
        }
        Ok(())
    }

    fn val_scale(&self) -> f64 {
        self.matrix
            .val
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
    }

    /// Writes the sparse matrix in the documented little-endian cache layout:
    /// header `{N: u32, M: u32, k_index: u32, nnz: u64}`, then `dim + 1` u64
    /// row pointers, `nnz` u32 column indices, and `nnz` interleaved re/im
    /// f64 values.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<(), HamiltonianError> {
        let b = &self.sector.basis;
        w.write_all(&(b.n_sites() as u32).to_le_bytes())?;
        w.write_all(&(b.max_phonons() as u32).to_le_bytes())?;
        w.write_all(&(self.sector.k_index as u32).to_le_bytes())?;
        w.write_all(&(self.matrix.nnz() as u64).to_le_bytes())?;
        for &p in &self.matrix.row_ptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.matrix.col {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in &self.matrix.val {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a matrix written by [`write_cache`](Self::write_cache),
    /// validating the header against the expected sector.
    pub fn read_cache<R: Read>(
        mut r: R,
        params: &ModelParams,
        sector: KSector,
    ) -> Result<Self, HamiltonianError> {
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let m = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let k_index = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u64buf)?;
        let nnz = u64::from_le_bytes(u64buf) as usize;
        let b = &sector.basis;
        if n != b.n_sites() || m != b.max_phonons() || k_index != sector.k_index {
            return Err(HamiltonianError::CacheMismatch(format!(
                "header (N={n}, M={m}, k={k_index}) vs expected (N={}, M={}, k={})",
                b.n_sites(),
                b.max_phonons(),
                sector.k_index
            )));
        }
        let dim = b.dim();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        for _ in 0..=dim {
            r.read_exact(&mut u64buf)?;
            row_ptr.push(u64::from_le_bytes(u64buf) as usize);
        }
        if row_ptr[dim] != nnz {
            return Err(HamiltonianError::CacheMismatch(
                "row pointer tail does not equal nnz".into(),
            ));
        }
        let mut col = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            r.read_exact(&mut u32buf)?;
            col.push(u32::from_le_bytes(u32buf));
        }
        let mut val = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            r.read_exact(&mut u64buf)?;
            let re = f64::from_le_bytes(u64buf);
            r.read_exact(&mut u64buf)?;
            let im = f64::from_le_bytes(u64buf);
            val.push(Complex64::new(re, im));
        }
        Ok(Self {
            sector,
            matrix: CsrMatrix {
                dim,
                row_ptr,
                col,
                val,
            },
            params: *params,
        })
    }
}

impl HermitianOp for KSectorHamiltonian {
    fn dim(&self) -> usize {
        self.matrix.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.matrix.dim);
        assert_eq!(y.len(), self.matrix.dim);
        for i in 0..self.matrix.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1] {
                acc += self.matrix.val[p] * x[self.matrix.col[p] as usize];
            }
            y[i] = acc;
        }
    }
}

/// Spectrally rescaled operator `(H - b) / a` with spectrum inside (-1, 1).
pub struct RescaledOperator<'a> {
    pub base: &'a KSectorHamiltonian,
    pub a_scale: f64,
    pub b_shift: f64,
    pub epsilon_pad: f64,
}

/// Builds the rescaling from extremal eigenvalues: `a = (Emax - Emin + eps)/2`,
/// `b = (Emax + Emin)/2`, `eps = alpha_c (Emax - Emin)`.
pub fn rescale(
    h: &KSectorHamiltonian,
    e_min: f64,
    e_max: f64,
    alpha_c: f64,
) -> Result<RescaledOperator<'_>, HamiltonianError> {
    let width = e_max - e_min;
    if width < 1e-12 {
        return Err(HamiltonianError::DegenerateSpectrum(width));
    }
    let eps = alpha_c * width;
    Ok(RescaledOperator {
        base: h,
        a_scale: (width + eps) / 2.0,
        b_shift: (e_max + e_min) / 2.0,
        epsilon_pad: alpha_c,
    })
}

impl HermitianOp for RescaledOperator<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.base.apply(x, y);
        let inv_a = 1.0 / self.a_scale;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (*yi - self.b_shift * xi) * inv_a;
        }
    }
}

/// Checked out-of-place matvec returning a fresh vector.
pub fn matvec<O: HermitianOp>(op: &O, x: &[Complex64]) -> Result<Vec<Complex64>, HamiltonianError> {
    if x.len() != op.dim() {
        return Err(HamiltonianError::DimensionMismatch {
            got: x.len(),
            want: op.dim(),
        });
    }
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut y);
    Ok(y)
}

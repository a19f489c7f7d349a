//! Truncated phonon occupation basis and lattice-translation machinery.
//!
//! Configurations `(m_1, .., m_N)` with total phonon number at most `M` are
//! held in lexicographic order; ranking and unranking use the combinatorial
//! number system so the index map needs no hashing.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("basis of size {0} exceeds the u32 index capacity")]
    CapacityExceeded(u128),
    #[error("need at least 2 sites, got {0}")]
    TooFewSites(usize),
}

/// All phonon configurations with `sum(m) <= max_phonons`, lexicographically
/// ordered, with O(N) rank/unrank.
pub struct PhononBasis {
    n_sites: usize,
    max_phonons: usize,
    dim: usize,
    /// flattened configs, row i at `occ[i*n_sites .. (i+1)*n_sites]`
    occ: Vec<u8>,
    /// binom[n][k] for n <= max_phonons + n_sites
    binom: Vec<Vec<u64>>,
}

fn binomial_table(nmax: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; nmax + 1]; nmax + 1];
    for n in 0..=nmax {
        t[n][0] = 1;
        for k in 1..=n {
            t[n][k] = t[n - 1][k - 1].saturating_add(if k <= n - 1 { t[n - 1][k] } else { 0 });
        }
    }
    t
}

impl PhononBasis {
    pub fn new(n_sites: usize, max_phonons: usize) -> Result<Self, FockError> {
        if n_sites < 2 {
            return Err(FockError::TooFewSites(n_sites));
        }
        assert!(max_phonons <= u8::MAX as usize, "occupations stored as u8");
        let dim_exact = {
            // binomial(M + N, N) in u128 to catch overflow before truncation
            let mut v: u128 = 1;
            for i in 1..=n_sites as u128 {
                v = v * (max_phonons as u128 + i) / i;
            }
            v
        };
        if dim_exact > u32::MAX as u128 {
            return Err(FockError::CapacityExceeded(dim_exact));
        }
        let dim = dim_exact as usize;
        let binom = binomial_table(max_phonons + n_sites);

        // lexicographic enumeration via the successor rule: below budget,
        // bump the last coordinate; at budget, clear the rightmost nonzero
        // coordinate and carry one unit into its left neighbor.
        let mut occ = Vec::with_capacity(dim * n_sites);
        let mut cfg = vec![0u8; n_sites];
        let mut total = 0usize;
        'outer: loop {
            occ.extend_from_slice(&cfg);
            if total < max_phonons {
                cfg[n_sites - 1] += 1;
                total += 1;
            } else {
                let p = match cfg.iter().rposition(|&v| v > 0) {
                    Some(p) => p,
                    None => break 'outer, // max_phonons == 0
                };
                total -= cfg[p] as usize;
                cfg[p] = 0;
                if p == 0 {
                    break 'outer;
                }
                cfg[p - 1] += 1;
                total += 1;
            }
        }
        assert_eq!(occ.len(), dim * n_sites);
        Ok(Self {
            n_sites,
            max_phonons,
            dim,
            occ,
            binom,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn max_phonons(&self) -> usize {
        self.max_phonons
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.occ[i * self.n_sites..(i + 1) * self.n_sites]
    }

    pub fn total(&self, i: usize) -> usize {
        self.config(i).iter().map(|&m| m as usize).sum()
    }

    /// Number of configs of `sites` sites with total at most `budget`.
    #[inline]
    fn count(&self, sites: usize, budget: usize) -> u64 {
        self.binom[budget + sites][sites]
    }

    /// Lexicographic rank of a configuration, O(N + sum m).
    pub fn rank(&self, cfg: &[u8]) -> usize {
        debug_assert_eq!(cfg.len(), self.n_sites);
        let mut r = 0u64;
        let mut budget = self.max_phonons;
        for (i, &m) in cfg.iter().enumerate() {
            let tail = self.n_sites - 1 - i;
            for v in 0..m as usize {
                r += self.count(tail, budget - v);
            }
            budget -= m as usize;
        }
        r as usize
    }

    /// Inverse of [`rank`](Self::rank).
    pub fn unrank(&self, mut idx: usize, out: &mut [u8]) {
        debug_assert_eq!(out.len(), self.n_sites);
        let mut budget = self.max_phonons;
        for i in 0..self.n_sites {
            let tail = self.n_sites - 1 - i;
            let mut v = 0usize;
            loop {
                let block = self.count(tail, budget - v) as usize;
                if idx < block {
                    break;
                }
                idx -= block;
                v += 1;
            }
            out[i] = v as u8;
            budget -= v;
        }
    }

    /// Index of the zero-phonon configuration.
    pub fn zero_phonon_index(&self) -> usize {
        self.rank(&vec![0u8; self.n_sites])
    }

    /// Cyclic lattice translation by `n` sites: output position `r` carries
    /// the occupation from input position `(r - n) mod N`.
    pub fn translate_into(&self, src: &[u8], n: usize, dst: &mut [u8]) {
        let nn = self.n_sites;
        debug_assert!(n < nn);
        for r in 0..nn {
            dst[r] = src[(r + nn - n) % nn];
        }
    }

    pub fn translate(&self, src: &[u8], n: usize) -> Vec<u8> {
        let mut dst = vec![0u8; self.n_sites];
        self.translate_into(src, n, &mut dst);
        dst
    }
}

/// One total-quasimomentum sector of the symmetry-adapted basis; its
/// dimension equals the phonon-basis dimension.
#[derive(Clone)]
pub struct KSector {
    pub k_index: usize,
    /// `2 pi k_index / N` mapped to `(-pi, pi]`
    pub k_value: f64,
    pub basis: Arc<PhononBasis>,
}

impl KSector {
    pub fn new(basis: Arc<PhononBasis>, k_index: usize) -> Self {
        let n = basis.n_sites();
        assert!(k_index < n);
        Self {
            k_index,
            k_value: k_value(n, k_index),
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// Momentum value of grid index `j`, mapped to `(-pi, pi]`.
pub fn k_value(n_sites: usize, j: usize) -> f64 {
    let mut k = std::f64::consts::TAU * j as f64 / n_sites as f64;
    if k > std::f64::consts::PI {
        k -= std::f64::consts::TAU;
    }
    k
}

/// Grid momentum index whose `(-pi, pi]` value is closest to `target`.
pub fn nearest_k_index(n_sites: usize, target: f64) -> usize {
    (0..n_sites)
        .min_by(|&a, &b| {
            (k_value(n_sites, a) - target)
                .abs()
                .partial_cmp(&(k_value(n_sites, b) - target).abs())
                .unwrap()
        })
        .unwrap()
}

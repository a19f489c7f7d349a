//! Run orchestration: flat `key = value` configuration with overrides, the
//! quench / ground-scan / formation-sweep drivers, CSV and JSON output with a
//! self-describing metadata header, and the verification battery shared by
//! the CLI and the integration gate.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::chebyshev::{self, StepWorkspace};
use crate::eigen::{self, extremal_eigs, ground_scan, GroundStateSummary, LanczosConfig};
use crate::fock::{nearest_k_index, KSector, PhononBasis};
use crate::hamiltonian::{build_sector, rescale, KSectorHamiltonian};
use crate::model::{derive_model, DeviceParams};
use crate::observables::{self, ObservableRecord};
use crate::oracle;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Fock(#[from] crate::fock::FockError),
    #[error(transparent)]
    Hamiltonian(#[from] crate::hamiltonian::HamiltonianError),
    #[error(transparent)]
    Eigen(#[from] crate::eigen::EigenError),
    #[error(transparent)]
    Chebyshev(#[from] crate::chebyshev::ChebyshevError),
    #[error(transparent)]
    Observable(#[from] crate::observables::ObservableError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// Formation-time reference convention: the reference phonon number is that
/// of the ground state within the quench sector `K = k0` (the state the
/// conserved-momentum quench relaxes toward; the default), or of the overall
/// ground state scanned over all momentum sectors. The latter is degenerate
/// below the coupling threshold, where the overall ground state is the
/// decoupled zero-phonon `K = 0` state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSector {
    GlobalGround,
    QuenchSector,
}

/// Fully resolved run parameters. Times are in units of the characteristic
/// hopping time `tau_ec = 1 / t0`; `phi_dc_over_pi` is the dc flux in units
/// of pi.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub ej_scaled: f64,
    pub delta_theta: f64,
    /// phonon (resonator) frequency in GHz
    pub delta_omega_over_2pi: f64,
    pub phi_dc_over_pi: f64,
    pub n_sites: usize,
    pub max_phonons: usize,
    pub k0_index: usize,
    pub t_final_tau: f64,
    pub dt_tau: f64,
    pub tail_tol: f64,
    pub lanczos_tol: f64,
    pub observable_stride: usize,
    pub rng_seed: u64,
    /// phonon cap for the reference ground solve behind `tau_sp`
    pub reference_max_phonons: usize,
    /// which ground state supplies the formation-time reference phonon number
    pub reference_sector: ReferenceSector,
    pub output_dir: String,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ej_scaled: 100.0,
            delta_theta: 3.5e-3,
            delta_omega_over_2pi: 0.3,
            phi_dc_over_pi: 0.972,
            n_sites: 9,
            max_phonons: 20,
            k0_index: 2, // grid momentum nearest pi/2 for N = 9
            t_final_tau: 100.0,
            dt_tau: 0.05,
            tail_tol: 1e-14,
            lanczos_tol: 1e-9,
            observable_stride: 1,
            rng_seed: 0x706f6c61,
            reference_max_phonons: 10,
            reference_sector: ReferenceSector::QuenchSector,
            output_dir: "out".to_string(),
            workers: 1,
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        let bad = |e: &dyn std::fmt::Display| RunError::Config(format!("{key} = {value}: {e}"));
        macro_rules! parse {
            ($field:ident) => {
                self.$field = value.trim().parse().map_err(|e| bad(&e))?
            };
        }
        match key.trim() {
            "ej_scaled" => parse!(ej_scaled),
            "delta_theta" => parse!(delta_theta),
            "delta_omega_over_2pi" => parse!(delta_omega_over_2pi),
            "phi_dc_over_pi" => parse!(phi_dc_over_pi),
            "n_sites" => parse!(n_sites),
            "max_phonons" => parse!(max_phonons),
            "k0_index" => parse!(k0_index),
            "t_final_tau" => parse!(t_final_tau),
            "dt_tau" => parse!(dt_tau),
            "tail_tol" => parse!(tail_tol),
            "lanczos_tol" => parse!(lanczos_tol),
            "observable_stride" => parse!(observable_stride),
            "rng_seed" => parse!(rng_seed),
            "reference_max_phonons" => parse!(reference_max_phonons),
            "reference_sector" => {
                self.reference_sector = match value.trim() {
                    "global_ground" => ReferenceSector::GlobalGround,
                    "quench_sector" => ReferenceSector::QuenchSector,
                    other => {
                        return Err(RunError::Config(format!(
                            "reference_sector must be 'global_ground' or 'quench_sector', got '{other}'"
                        )))
                    }
                }
            }
            "output_dir" => self.output_dir = value.trim().to_string(),
            "workers" => parse!(workers),
            other => return Err(RunError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat key-value file; `#` starts a comment, blank lines are
    /// ignored.
    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let mut cfg = Self::default();
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                RunError::Config(format!("{}:{}: expected key = value", path.display(), lineno + 1))
            })?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |msg: String| Err(RunError::Config(msg));
        if self.k0_index >= self.n_sites {
            return fail(format!("k0_index {} out of [0, {})", self.k0_index, self.n_sites));
        }
        if !(self.t_final_tau > 0.0 && self.dt_tau > 0.0) {
            return fail("t_final_tau and dt_tau must be positive".into());
        }
        if self.observable_stride == 0 || self.workers == 0 {
            return fail("observable_stride and workers must be at least 1".into());
        }
        if !(self.tail_tol > 0.0 && self.lanczos_tol > 0.0) {
            return fail("tail_tol and lanczos_tol must be positive".into());
        }
        self.device().validate()?;
        Ok(())
    }

    pub fn device(&self) -> DeviceParams {
        DeviceParams {
            ej_scaled: self.ej_scaled,
            delta_theta: self.delta_theta,
            delta_omega_over_2pi: self.delta_omega_over_2pi,
            phi_dc: self.phi_dc_over_pi * PI,
        }
    }

    /// Worker count, with the `POLARON_WORKERS` environment variable taking
    /// precedence over the config value.
    pub fn resolved_workers(&self) -> usize {
        std::env::var("POLARON_WORKERS")
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&w| w >= 1)
            .unwrap_or(self.workers)
    }

    fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            tol: self.lanczos_tol,
            seed: self.rng_seed,
            ..LanczosConfig::default()
        }
    }
}

/// Lower/upper spectral estimates padded enough for the propagator rescaling;
/// uses the memory-light bound solver so it works at the dynamics sizes.
pub fn spectral_bracket(h: &KSectorHamiltonian, seed: u64) -> (f64, f64) {
    let iters = 180.min(h.dim());
    let (lo, hi) = eigen::extremal_bounds(h, iters, seed ^ 0x5eed);
    let w = (hi - lo).max(1e-9);
    (lo - 0.01 * w, hi + 0.01 * w)
}

fn state_norm(psi: &[Complex64]) -> f64 {
    psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn record_state(
    psi: &[Complex64],
    basis: &PhononBasis,
    zero_index: usize,
    k0: f64,
    t_ns: f64,
    tau_ec: f64,
) -> Result<ObservableRecord, RunError> {
    // recorded as lattice-summed variances; all sites are equivalent in a
    // momentum sector, so this is n_sites times the per-site value
    let (sx_site, sp_site) = observables::quadrature_variances(psi, basis, 0);
    let s_x = sx_site * basis.n_sites() as f64;
    let s_p = sp_site * basis.n_sites() as f64;
    let rho = observables::reduced_density(psi, basis, k0)?;
    Ok(ObservableRecord {
        time_ns: t_ns,
        time_tau: t_ns / tau_ec,
        n_ph: observables::phonon_number(psi, basis),
        survival: observables::survival(psi, zero_index),
        s_x,
        s_p,
        entropy: observables::entanglement_entropy(&rho)?,
        norm: state_norm(psi),
    })
}

#[derive(Debug, Serialize)]
pub struct QuenchOutcome {
    pub records: Vec<ObservableRecord>,
    /// formation time in units of tau_ec, `None` when never reached
    pub tau_sp_tau: Option<f64>,
    /// reference ground-state phonon number behind `tau_sp_tau`, per the
    /// configured `reference_sector` convention
    pub n_bar_reference: f64,
    /// weight of the sector ground state in the initial bare state
    pub ground_weight: f64,
    pub max_norm_drift: f64,
    pub n_cheb: usize,
    pub wall_ms: u128,
}

/// Evolves the bare Bloch state of sector `k0_index` and records observables.
pub fn run_quench(cfg: &RunConfig) -> Result<QuenchOutcome, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let params = derive_model(&cfg.device(), cfg.n_sites, cfg.max_phonons)?;
    let basis = Arc::new(PhononBasis::new(cfg.n_sites, cfg.max_phonons)?);
    let h = build_sector(&params, KSector::new(basis.clone(), cfg.k0_index))?;
    let (lo, hi) = spectral_bracket(&h, cfg.rng_seed);
    let op = rescale(&h, lo, hi, 1e-3)?;
    let dt_ns = cfg.dt_tau * params.tau_ec;
    let plan = chebyshev::plan(&op, dt_ns, cfg.tail_tol);
    let n_steps = (cfg.t_final_tau / cfg.dt_tau).round() as usize;

    let z = basis.zero_phonon_index();
    let k0 = h.sector.k_value;
    let mut psi0 = vec![Complex64::new(0.0, 0.0); h.dim()];
    psi0[z] = Complex64::new(1.0, 0.0);

    let mut records = vec![record_state(&psi0, &basis, z, k0, 0.0, params.tau_ec)?];
    let stride = cfg.observable_stride;
    let mut obs_err: Option<RunError> = None;
    let (_, max_drift) = chebyshev::evolve(&plan, &op, &psi0, n_steps, |s, t, state, _| {
        if obs_err.is_none() && (s % stride == 0 || s == n_steps) {
            match record_state(state, &basis, z, k0, t, params.tau_ec) {
                Ok(r) => records.push(r),
                Err(e) => obs_err = Some(e),
            }
        }
    })?;
    if let Some(e) = obs_err {
        return Err(e);
    }

    // reference ground solves at a phonon cap where the stored-basis solver
    // fits: the quench sector supplies the initial-state ground weight and
    // (by default) the formation-time reference phonon number
    let ref_m = cfg.reference_max_phonons.min(cfg.max_phonons);
    let ref_params = derive_model(&cfg.device(), cfg.n_sites, ref_m)?;
    let ref_basis = Arc::new(PhononBasis::new(cfg.n_sites, ref_m)?);
    let ref_h = build_sector(&ref_params, KSector::new(ref_basis.clone(), cfg.k0_index))?;
    let gs = extremal_eigs(&ref_h, &cfg.lanczos())?;
    let ground_weight = observables::residue(&gs.ground_vector, ref_basis.zero_phonon_index());
    let n_bar = match cfg.reference_sector {
        ReferenceSector::QuenchSector => {
            observables::phonon_number(&gs.ground_vector, &ref_basis)
        }
        ReferenceSector::GlobalGround => {
            // the spectrum is symmetric under K -> -K, so the irreducible
            // half of the Brillouin zone decides the overall ground state
            let mut best = (
                gs.e_min,
                observables::phonon_number(&gs.ground_vector, &ref_basis),
            );
            for k_index in 0..=cfg.n_sites / 2 {
                if k_index == cfg.k0_index.min(cfg.n_sites - cfg.k0_index) {
                    continue;
                }
                let h = build_sector(&ref_params, KSector::new(ref_basis.clone(), k_index))?;
                let r = extremal_eigs(&h, &cfg.lanczos())?;
                if r.e_min < best.0 {
                    best = (
                        r.e_min,
                        observables::phonon_number(&r.ground_vector, &ref_basis),
                    );
                }
            }
            best.1
        }
    };

    let times: Vec<f64> = records.iter().map(|r| r.time_tau).collect();
    let n_ph: Vec<f64> = records.iter().map(|r| r.n_ph).collect();
    let tau_sp_tau = observables::formation_time(&times, &n_ph, n_bar);

    Ok(QuenchOutcome {
        records,
        tau_sp_tau,
        n_bar_reference: n_bar,
        ground_weight,
        max_norm_drift: max_drift,
        n_cheb: plan.n_cheb,
        wall_ms: start.elapsed().as_millis(),
    })
}

/// Ground-state scan over every K sector at the configured lattice sizes.
pub fn run_ground(cfg: &RunConfig) -> Result<GroundStateSummary, RunError> {
    cfg.validate()?;
    let params = derive_model(&cfg.device(), cfg.n_sites, cfg.max_phonons)?;
    let basis = Arc::new(PhononBasis::new(cfg.n_sites, cfg.max_phonons)?);
    Ok(ground_scan(&params, &basis, &cfg.lanczos())?)
}

/// Sector minimum over the irreducible half of the Brillouin zone; the
/// spectrum is symmetric under K -> -K, so this is enough to decide whether
/// the ground state sits at K = 0.
fn half_scan(cfg: &RunConfig, phi_over_pi: f64) -> Result<(usize, f64), RunError> {
    let mut dev = cfg.device();
    dev.phi_dc = phi_over_pi * PI;
    let params = derive_model(&dev, cfg.n_sites, cfg.max_phonons)?;
    let basis = Arc::new(PhononBasis::new(cfg.n_sites, cfg.max_phonons)?);
    let lcfg = cfg.lanczos();
    let mut best = (0usize, f64::INFINITY);
    for k_index in 0..=cfg.n_sites / 2 {
        let h = build_sector(&params, KSector::new(basis.clone(), k_index))?;
        let r = extremal_eigs(&h, &lcfg)?;
        if r.e_min < best.1 {
            best = (k_index, r.e_min);
        }
    }
    Ok(best)
}

#[derive(Debug, Serialize)]
pub struct TransitionPoint {
    pub phi_lo_over_pi: f64,
    pub phi_hi_over_pi: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// midpoint of the bracketing effective couplings
    pub lambda_c: f64,
    /// ground-state momentum index just above the transition
    pub k_gs_above: usize,
}

/// Bisects the dc flux for the level-crossing where the ground state leaves
/// K = 0. Requires `phi_lo` below and `phi_hi` above the crossing.
pub fn locate_transition(
    cfg: &RunConfig,
    mut phi_lo: f64,
    mut phi_hi: f64,
    bisections: usize,
) -> Result<TransitionPoint, RunError> {
    cfg.validate()?;
    let lambda_at = |phi: f64| -> Result<f64, RunError> {
        let mut dev = cfg.device();
        dev.phi_dc = phi * PI;
        Ok(derive_model(&dev, cfg.n_sites, cfg.max_phonons)?.lambda_eff)
    };
    let (k_lo, _) = half_scan(cfg, phi_lo)?;
    let (mut k_hi, _) = half_scan(cfg, phi_hi)?;
    if k_lo != 0 || k_hi == 0 {
        return Err(RunError::Config(format!(
            "transition not bracketed: K_gs = {k_lo} at phi = {phi_lo} pi, {k_hi} at {phi_hi} pi"
        )));
    }
    for _ in 0..bisections {
        let mid = 0.5 * (phi_lo + phi_hi);
        let (k_mid, _) = half_scan(cfg, mid)?;
        if k_mid == 0 {
            phi_lo = mid;
        } else {
            phi_hi = mid;
            k_hi = k_mid;
        }
    }
    let lambda_lo = lambda_at(phi_lo)?;
    let lambda_hi = lambda_at(phi_hi)?;
    Ok(TransitionPoint {
        phi_lo_over_pi: phi_lo,
        phi_hi_over_pi: phi_hi,
        lambda_lo,
        lambda_hi,
        lambda_c: 0.5 * (lambda_lo + lambda_hi),
        k_gs_above: k_hi,
    })
}

#[derive(Debug, Serialize)]
pub struct FormationRow {
    pub k0_index: usize,
    pub k0_value: f64,
    pub phi_dc_over_pi: f64,
    pub lambda_eff: f64,
    pub tau_sp_tau: Option<f64>,
    pub n_bar_reference: f64,
    pub error: Option<String>,
}

/// Formation-time sweep over `(k0_index, phi_dc/pi)` points. Per-point
/// failures are recorded in the row; the sweep continues.
pub fn sweep_formation(cfg: &RunConfig, points: &[(usize, f64)]) -> Vec<FormationRow> {
    points
        .iter()
        .map(|&(k0_index, phi)| {
            let mut point_cfg = cfg.clone();
            point_cfg.k0_index = k0_index;
            point_cfg.phi_dc_over_pi = phi;
            let k0_value = crate::fock::k_value(cfg.n_sites, k0_index);
            let lambda_eff = derive_model(&point_cfg.device(), cfg.n_sites, cfg.max_phonons)
                .map(|p| p.lambda_eff)
                .unwrap_or(f64::NAN);
            match run_quench(&point_cfg) {
                Ok(out) => FormationRow {
                    k0_index,
                    k0_value,
                    phi_dc_over_pi: phi,
                    lambda_eff,
                    tau_sp_tau: out.tau_sp_tau,
                    n_bar_reference: out.n_bar_reference,
                    error: None,
                },
                Err(e) => FormationRow {
                    k0_index,
                    k0_value,
                    phi_dc_over_pi: phi,
                    lambda_eff,
                    tau_sp_tau: None,
                    n_bar_reference: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SeriesMeta<'a> {
    config: &'a RunConfig,
    code_version: &'static str,
    workers: usize,
    wall_ms: u128,
    n_cheb: usize,
    max_norm_drift: f64,
    tau_sp_tau: Option<f64>,
    n_bar_reference: f64,
    ground_weight: f64,
}

/// CSV with a `#`-prefixed JSON metadata header line.
pub fn render_time_series(cfg: &RunConfig, out: &QuenchOutcome) -> String {
    let meta = serde_json::to_string(&SeriesMeta {
        config: cfg,
        code_version: env!("CARGO_PKG_VERSION"),
        workers: cfg.resolved_workers(),
        wall_ms: out.wall_ms,
        n_cheb: out.n_cheb,
        max_norm_drift: out.max_norm_drift,
        tau_sp_tau: out.tau_sp_tau,
        n_bar_reference: out.n_bar_reference,
        ground_weight: out.ground_weight,
    })
    .expect("metadata serializes");
    let mut s = String::new();
    let _ = writeln!(s, "# {meta}");
    let _ = writeln!(s, "t_ns,t_over_tau_ec,n_ph,survival,s_x,s_p,entropy,norm");
    for r in &out.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.time_ns, r.time_tau, r.n_ph, r.survival, r.s_x, r.s_p, r.entropy, r.norm
        );
    }
    s
}

pub fn render_ground_summary(cfg: &RunConfig, summary: &GroundStateSummary) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        code_version: &'static str,
        summary: &'a GroundStateSummary,
    }
    let mut s = serde_json::to_string_pretty(&Doc {
        config: cfg,
        code_version: env!("CARGO_PKG_VERSION"),
        summary,
    })
    .expect("summary serializes");
    s.push('\n');
    s
}

pub fn render_formation_table(cfg: &RunConfig, rows: &[FormationRow]) -> String {
    #[derive(Serialize)]
    struct Meta<'a> {
        config: &'a RunConfig,
        code_version: &'static str,
        workers: usize,
    }
    let meta = serde_json::to_string(&Meta {
        config: cfg,
        code_version: env!("CARGO_PKG_VERSION"),
        workers: cfg.resolved_workers(),
    })
    .expect("metadata serializes");
    let mut s = String::new();
    let _ = writeln!(s, "# {meta}");
    let _ = writeln!(
        s,
        "k0_index,k0_value,phi_dc_over_pi,lambda_eff,tau_sp_over_tau_ec,n_bar_reference,error"
    );
    for r in rows {
        let tau = r
            .tau_sp_tau
            .map(|t| t.to_string())
            .unwrap_or_else(|| "nan".to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.k0_index,
            r.k0_value,
            r.phi_dc_over_pi,
            r.lambda_eff,
            tau,
            r.n_bar_reference,
            r.error.as_deref().unwrap_or("")
        );
    }
    s
}

// ---------------------------------------------------------------------------
// verification battery
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

#[derive(Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, details: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            details: details.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{tag}  {} — {}", c.name, c.details);
        }
        let _ = writeln!(
            s,
            "{}/{} checks passed",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        );
        s
    }
}

fn small_device() -> DeviceParams {
    DeviceParams {
        ej_scaled: 100.0,
        delta_theta: 3.5e-3,
        delta_omega_over_2pi: 0.3,
        phi_dc: 0.972 * PI,
    }
}

fn csr_to_dense(h: &KSectorHamiltonian) -> DMatrix<Complex64> {
    let d = h.dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = h.matrix.entry(i, j);
        }
    }
    m
}

/// Dense-reference comparisons at small sizes: block spectra, propagated
/// trajectories, and reduced density matrices.
pub fn oracle_report() -> VerifyReport {
    let mut rep = VerifyReport::default();
    for &(n, m) in &[(4usize, 2usize), (5, 2)] {
        if let Err(e) = oracle_case(&mut rep, n, m) {
            rep.push(format!("dense reference (N={n}, M={m})"), false, e.to_string());
        }
    }
    rep
}

fn oracle_case(rep: &mut VerifyReport, n: usize, m: usize) -> Result<(), RunError> {
    let params = derive_model(&small_device(), n, m)?;
    let sys = oracle::build_dense(&params)?;
    let basis = sys.basis.clone();

    // block spectra against the dense reference, and their union against the
    // full dense spectrum
    let mut worst = 0.0f64;
    let mut all_block: Vec<f64> = Vec::new();
    for k_index in 0..n {
        let h = build_sector(&params, KSector::new(basis.clone(), k_index))?;
        let mut vals: Vec<f64> = csr_to_dense(&h)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let reference = oracle::sector_spectrum(&sys, k_index);
        for (a, b) in vals.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
        all_block.extend(vals);
    }
    let mut dense_vals = oracle::diagonalize(&sys).values;
    dense_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all_block.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in all_block.iter().zip(&dense_vals) {
        worst = worst.max((a - b).abs());
    }
    rep.push(
        format!("sector spectra vs dense reference (N={n}, M={m})"),
        worst < 1e-10,
        format!("max |dE| = {worst:.2e} (tolerance 1e-10)"),
    );

    // Chebyshev trajectory against the exact exponential, 50 steps
    let k_index = nearest_k_index(n, PI / 2.0);
    let h = build_sector(&params, KSector::new(basis.clone(), k_index))?;
    let (lo, hi) = spectral_bracket(&h, 7);
    let op = rescale(&h, lo, hi, 1e-3)?;
    let dt = 0.05 * params.tau_ec;
    let plan = chebyshev::plan(&op, dt, 1e-14);
    let z = basis.zero_phonon_index();
    let mut psi = vec![Complex64::new(0.0, 0.0); h.dim()];
    psi[z] = Complex64::new(1.0, 0.0);
    let eig = oracle::diagonalize(&sys);
    let psi_dense0 = oracle::embed_sector_state(&sys, k_index, &psi);
    let mut ws = StepWorkspace::new(h.dim());
    let mut worst_traj = 0.0f64;
    let mut worst_rho = 0.0f64;
    let mut worst_quad = 0.0f64;
    let k0 = h.sector.k_value;
    for step in 1..=50usize {
        chebyshev::step_into(&plan, &op, &mut psi, &mut ws, step)?;
        let exact = oracle::exact_evolve(&eig, &psi_dense0, step as f64 * dt);
        let embedded = oracle::embed_sector_state(&sys, k_index, &psi);
        worst_traj = worst_traj.max((&embedded - &exact).norm());
        if step % 10 == 0 {
            let rho_sector = observables::reduced_density(&psi, &basis, k0)?;
            let rho_exact = oracle::exact_partial_trace(&sys, &exact);
            worst_rho = worst_rho.max((&rho_sector - &rho_exact).norm());
            // site quadrature moments against direct ladder sums on the
            // exactly evolved dense state
            for r in 0..n {
                let q = observables::quadrature_moments(&psi, &basis, r);
                let (x2, p2) = oracle::dense_quadratures(&sys, &exact, r);
                worst_quad = worst_quad.max((q.x2 - x2).abs()).max((q.p2 - p2).abs());
            }
        }
    }
    rep.push(
        format!("propagator vs exact evolution (N={n}, M={m})"),
        worst_traj < 1e-9,
        format!("max trajectory deviation = {worst_traj:.2e} (tolerance 1e-9)"),
    );
    rep.push(
        format!("reduced density vs partial trace (N={n}, M={m})"),
        worst_rho < 1e-10,
        format!("max matrix deviation = {worst_rho:.2e} (tolerance 1e-10)"),
    );
    rep.push(
        format!("quadrature moments vs dense ladder sums (N={n}, M={m})"),
        worst_quad < 1e-10,
        format!("max moment deviation = {worst_quad:.2e} (tolerance 1e-10)"),
    );
    Ok(())
}

/// Full verification battery: dense-reference suite plus the quadrature
/// identity, unitarity, entropy bounds, the zero-momentum sentinel, and the
/// structural property checks.
pub fn verify_report() -> VerifyReport {
    let mut rep = oracle_report();
    if let Err(e) = verify_dynamics_battery(&mut rep) {
        rep.push("dynamics battery", false, e.to_string());
    }
    verify_structure_battery(&mut rep);
    rep
}

fn verify_dynamics_battery(rep: &mut VerifyReport) -> Result<(), RunError> {
    let (n, m) = (5usize, 4usize);
    let params = derive_model(&small_device(), n, m)?;
    let basis = Arc::new(PhononBasis::new(n, m)?);
    let k_index = nearest_k_index(n, PI / 2.0);
    let h = build_sector(&params, KSector::new(basis.clone(), k_index))?;
    let (lo, hi) = spectral_bracket(&h, 11);
    let op = rescale(&h, lo, hi, 1e-3)?;
    let dt = 0.05 * params.tau_ec;
    let plan = chebyshev::plan(&op, dt, 1e-14);
    let z = basis.zero_phonon_index();
    let k0 = h.sector.k_value;

    let mut psi = vec![Complex64::new(0.0, 0.0); h.dim()];
    psi[z] = Complex64::new(1.0, 0.0);
    let mut ws = StepWorkspace::new(h.dim());
    let mut worst_identity = 0.0f64;
    let mut worst_drift = 0.0f64;
    let mut entropy_zero = observables::entanglement_entropy(
        &observables::reduced_density(&psi, &basis, k0)?,
    )?;
    let mut worst_entropy_excess: f64 = entropy_zero - (n as f64).ln();
    for step in 1..=200usize {
        let norm = chebyshev::step_into(&plan, &op, &mut psi, &mut ws, step)?;
        worst_drift = worst_drift.max((norm - 1.0).abs());
        if step % 5 == 0 {
            let q = observables::quadrature_moments(&psi, &basis, 0);
            worst_identity = worst_identity.max((q.x2 + q.p2 - 2.0 * q.n_site - 1.0).abs());
            let s = observables::entanglement_entropy(&observables::reduced_density(
                &psi, &basis, k0,
            )?)?;
            worst_entropy_excess = worst_entropy_excess.max(s - (n as f64).ln());
        }
    }
    entropy_zero = entropy_zero.abs();
    rep.push(
        "quadrature identity x2 + p2 = 2 n_site + 1",
        worst_identity < 1e-7,
        format!("max deviation = {worst_identity:.2e} (tolerance 1e-7)"),
    );
    rep.push(
        "step-wise unitarity",
        worst_drift < 1e-6,
        format!("max |norm - 1| = {worst_drift:.2e} (target 1e-6)"),
    );
    rep.push(
        "entropy bounds",
        entropy_zero < 1e-10 && worst_entropy_excess < 1e-9,
        format!(
            "S(0) = {entropy_zero:.2e}, max S - ln N = {worst_entropy_excess:.2e}"
        ),
    );

    // zero-momentum sentinel: the bare K = 0 state is an eigenstate
    let h0 = build_sector(&params, KSector::new(basis.clone(), 0))?;
    let (lo0, hi0) = spectral_bracket(&h0, 13);
    let op0 = rescale(&h0, lo0, hi0, 1e-3)?;
    let plan0 = chebyshev::plan(&op0, dt, 1e-14);
    let mut psi0 = vec![Complex64::new(0.0, 0.0); h0.dim()];
    psi0[z] = Complex64::new(1.0, 0.0);
    let mut worst_sentinel = 0.0f64;
    let mut ws0 = StepWorkspace::new(h0.dim());
    for step in 1..=100usize {
        chebyshev::step_into(&plan0, &op0, &mut psi0, &mut ws0, step)?;
        let surv = observables::survival(&psi0, z);
        let nph = observables::phonon_number(&psi0, &basis);
        worst_sentinel = worst_sentinel.max((surv - 1.0).abs()).max(nph);
    }
    rep.push(
        "zero-momentum eigenstate sentinel",
        worst_sentinel < 1e-10,
        format!("max deviation = {worst_sentinel:.2e} (tolerance 1e-10)"),
    );
    Ok(())
}

fn verify_structure_battery(rep: &mut VerifyReport) {
    // translation group law
    let basis = PhononBasis::new(5, 3).expect("small basis");
    let mut ok = true;
    for i in (0..basis.dim()).step_by(7) {
        for a in 0..5usize {
            for b in 0..5usize {
                let two = basis.translate(&basis.translate(basis.config(i), a), b);
                let one = basis.translate(basis.config(i), (a + b) % 5);
                ok &= two == one;
            }
        }
    }
    rep.push("translation group law", ok, "T^a T^b = T^{(a+b) mod N}");

    // basis counting against explicit recursion
    fn count(sites: usize, budget: usize) -> usize {
        if sites == 0 {
            return 1;
        }
        (0..=budget).map(|m| count(sites - 1, budget - m)).sum()
    }
    let mut ok = true;
    for n in 2..=6usize {
        for m in 0..=4usize {
            let b = PhononBasis::new(n, m).expect("small basis");
            ok &= b.dim() == count(n, m);
        }
    }
    rep.push(
        "basis counting vs recursion",
        ok,
        "all (2 <= N <= 6, M <= 4) dimensions match",
    );

    // variational monotonicity in M
    let mut prev = f64::INFINITY;
    let mut ok = true;
    for m in 0..=4usize {
        let params = derive_model(&small_device(), 4, m).expect("valid device");
        let basis = Arc::new(PhononBasis::new(4, m).expect("small basis"));
        let h = build_sector(&params, KSector::new(basis, 1)).expect("small sector");
        let r = extremal_eigs(&h, &LanczosConfig::default()).expect("converges");
        ok &= r.e_min <= prev + 1e-12;
        prev = r.e_min;
    }
    rep.push(
        "variational monotonicity of E_gs in M",
        ok,
        "ground energy non-increasing for M = 0..4",
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> RunConfig {
        RunConfig {
            n_sites: 5,
            max_phonons: 3,
            k0_index: 1,
            t_final_tau: 2.0,
            dt_tau: 0.1,
            reference_max_phonons: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_roundtrip_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.set("n_sites", "7").unwrap();
        cfg.set("phi_dc_over_pi", " 0.95 ").unwrap();
        cfg.set("output_dir", "results").unwrap();
        assert_eq!(cfg.n_sites, 7);
        assert_abs_diff_eq!(cfg.phi_dc_over_pi, 0.95);
        assert_eq!(cfg.output_dir, "results");
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("n_sites", "banana").is_err());
    }

    #[test]
    fn config_file_parsing() {
        let dir = std::env::temp_dir().join("polaron-cfg-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nn_sites = 5\nmax_phonons=3   # trailing comment\n\nk0_index = 1\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!((cfg.n_sites, cfg.max_phonons, cfg.k0_index), (5, 3, 1));
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut cfg = RunConfig::default();
        cfg.k0_index = 9;
        assert!(matches!(cfg.validate(), Err(RunError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.dt_tau = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn quench_runs_and_is_deterministic() {
        let cfg = small_cfg();
        let a = run_quench(&cfg).unwrap();
        let b = run_quench(&cfg).unwrap();
        assert_eq!(a.records.len(), 21); // t=0 plus 20 steps
        assert_abs_diff_eq!(a.records[0].survival, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a.records[0].entropy, 0.0, epsilon = 1e-10);
        let sa = render_time_series(&cfg, &a);
        let sb = render_time_series(&cfg, &b);
        // identical modulo the wall-clock field
        let strip = |s: &str| {
            s.lines()
                .skip(1)
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&sa), strip(&sb));
        // strictly increasing time column
        for w in a.records.windows(2) {
            assert!(w[1].time_ns > w[0].time_ns);
        }
    }

    #[test]
    fn time_series_header_is_self_describing() {
        let cfg = small_cfg();
        let out = run_quench(&cfg).unwrap();
        let text = render_time_series(&cfg, &out);
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("# {"));
        let meta: serde_json::Value = serde_json::from_str(&header[2..]).unwrap();
        assert_eq!(meta["config"]["n_sites"], 5);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "t_ns,t_over_tau_ec,n_ph,survival,s_x,s_p,entropy,norm"
        );
    }

    #[test]
    fn ground_run_small() {
        let mut cfg = small_cfg();
        cfg.max_phonons = 2;
        let summary = run_ground(&cfg).unwrap();
        assert_eq!(summary.sectors.len(), 5);
        let text = render_ground_summary(&cfg, &summary);
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(doc["summary"]["energy"].is_number());
    }

    #[test]
    fn sweep_records_per_point_errors() {
        let mut cfg = small_cfg();
        cfg.t_final_tau = 1.0;
        // second point has a degenerate hopping flux and must fail in place
        let rows = sweep_formation(&cfg, &[(1, 0.972), (1, 1.0)]);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.is_some());
        let table = render_formation_table(&cfg, &rows);
        assert_eq!(table.lines().count(), 2 + 2);
    }

    #[test]
    fn workers_env_override() {
        let cfg = RunConfig::default();
        std::env::remove_var("POLARON_WORKERS");
        assert_eq!(cfg.resolved_workers(), 1);
        std::env::set_var("POLARON_WORKERS", "3");
        assert_eq!(cfg.resolved_workers(), 3);
        std::env::set_var("POLARON_WORKERS", "junk");
        assert_eq!(cfg.resolved_workers(), 1);
        std::env::remove_var("POLARON_WORKERS");
    }
}

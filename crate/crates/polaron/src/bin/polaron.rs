//! Experiment runner: ground-state scans, quench evolution, formation-time
//! sweeps, and the verification suite. Outputs are data files only (CSV with
//! a JSON metadata header, or JSON documents).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polaron::run::{
    self, locate_transition, oracle_report, run_ground, run_quench, sweep_formation,
    verify_report, RunConfig, RunError,
};

#[derive(Parser)]
#[command(name = "polaron", version, about = "small-polaron quench simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// flat key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// config override, repeatable: --set key=value
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan every momentum sector for its ground state
    Ground {
        /// locate the level crossing by bisecting the dc flux (units of pi)
        #[arg(long, num_args = 2, value_names = ["PHI_LO", "PHI_HI"])]
        locate: Option<Vec<f64>>,
        /// bisection steps for --locate
        #[arg(long, default_value_t = 8)]
        bisections: usize,
    },
    /// Evolve the bare Bloch state after the interaction quench
    Quench,
    /// Formation-time sweep over initial momenta and dc flux values
    Sweep {
        /// comma-separated momentum indices; default 1..=N/2
        #[arg(long, value_delimiter = ',')]
        k0_list: Vec<usize>,
        /// comma-separated dc flux values in units of pi; default the config value
        #[arg(long, value_delimiter = ',')]
        phi_list: Vec<f64>,
    },
    /// Run the full verification battery
    Verify,
    /// Run only the dense-reference comparisons
    OracleCheck,
}

// exit codes: 0 ok, 1 scientific failure, 2 usage / config / IO error
const EXIT_SCIENCE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn load_config(common: &Common) -> Result<RunConfig, RunError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("override '{item}' is not key=value")))?;
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(cfg: &RunConfig, name: &str, text: &str) -> Result<PathBuf, RunError> {
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn exit_code_for(err: &RunError) -> u8 {
    match err {
        RunError::Config(_) | RunError::Io(_) | RunError::Model(_) | RunError::Fock(_) => {
            EXIT_USAGE
        }
        _ => EXIT_SCIENCE,
    }
}

fn dispatch(cli: Cli) -> Result<u8, RunError> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Ground { locate, bisections } => {
            if let Some(bracket) = locate {
                let point = locate_transition(&cfg, bracket[0], bracket[1], bisections)?;
                let text = serde_json::to_string_pretty(&point).expect("serializes");
                let path = write_output(&cfg, "transition.json", &text)?;
                println!(
                    "lambda_c = {:.4} (phi_dc in [{:.5}, {:.5}] pi), K_gs above = {}",
                    point.lambda_c, point.phi_lo_over_pi, point.phi_hi_over_pi, point.k_gs_above
                );
                println!("wrote {}", path.display());
            } else {
                let summary = run_ground(&cfg)?;
                let path = write_output(&cfg, "ground.json", &run::render_ground_summary(&cfg, &summary))?;
                println!(
                    "K_gs = {} (k = {:.4}), E = {:.6}, N_ph = {:.4}, Z = {:.4}, degenerate = {}",
                    summary.k_gs_index,
                    summary.k_gs_value,
                    summary.energy,
                    summary.phonon_number,
                    summary.residue,
                    summary.degenerate
                );
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Quench => {
            let out = run_quench(&cfg)?;
            let path = write_output(&cfg, "quench.csv", &run::render_time_series(&cfg, &out))?;
            match out.tau_sp_tau {
                Some(tau) => println!("tau_sp = {tau:.3} tau_ec"),
                None => println!("tau_sp: not reached within t_final"),
            }
            println!(
                "n_bar_ref = {:.4}, ground weight = {:.4}, max |norm-1| = {:.2e}, N_C = {}",
                out.n_bar_reference, out.ground_weight, out.max_norm_drift, out.n_cheb
            );
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Sweep { k0_list, phi_list } => {
            let k0s: Vec<usize> = if k0_list.is_empty() {
                (1..=cfg.n_sites / 2).collect()
            } else {
                k0_list
            };
            let phis: Vec<f64> = if phi_list.is_empty() {
                vec![cfg.phi_dc_over_pi]
            } else {
                phi_list
            };
            let points: Vec<(usize, f64)> = phis
                .iter()
                .flat_map(|&p| k0s.iter().map(move |&k| (k, p)))
                .collect();
            let rows = sweep_formation(&cfg, &points);
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            let path = write_output(&cfg, "formation.csv", &run::render_formation_table(&cfg, &rows))?;
            println!("{} points, {} failed", rows.len(), failed);
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Verify => {
            let rep = verify_report();
            print!("{}", rep.render());
            Ok(if rep.all_passed() { 0 } else { EXIT_SCIENCE })
        }
        Command::OracleCheck => {
            let rep = oracle_report();
            print!("{}", rep.render());
            Ok(if rep.all_passed() { 0 } else { EXIT_SCIENCE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

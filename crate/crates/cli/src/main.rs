//! Command-line front end: sweeps, single-trial detection and estimation,
//! oracle checks and codebook diagnostics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sns_xlmimo::channel::{build_codebook, effective_bandwidth, UserLocation};
use sns_xlmimo::experiments::{emit_results, run_sweep, sample_instance, sparsity_for, SweepConfig};
use sns_xlmimo::metrics::{nmse, vrer};
use sns_xlmimo::oracle::run_checks;
use sns_xlmimo::pipeline::{ts_vdce, BeliefMode, TsVdceConfig};
use sns_xlmimo::vrdomp::run_vrdomp;
use sns_xlmimo::Error;

#[derive(Parser)]
#[command(name = "sns-xlmimo", version, about = "VR detection and channel estimation for SnS XL-MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Base seed, replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Single {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid point to draw from.
    #[arg(long, default_value_t = 0)]
    grid: usize,
    /// Trial index within the grid point.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write CSV/JSON (and optional SVG) files.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Detect the VR of one seeded trial and print per-antenna beliefs.
    Detect(Single),
    /// Run both stages on one seeded trial and print VRER and NMSE.
    Estimate {
        #[command(flatten)]
        single: Single,
        /// Weight stage two with the thresholded region instead of the beliefs.
        #[arg(long)]
        hard: bool,
    },
    /// Compare the fast paths against brute-force references.
    OracleCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print codebook and effective-bandwidth diagnostics.
    Codebook {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<SweepConfig, Error> {
    match path {
        Some(p) => SweepConfig::from_path(p),
        None => Ok(SweepConfig::default()),
    }
}

fn sweep(path: &Path, o: &Overrides, plots: bool) -> Result<(), Error> {
    let mut config = SweepConfig::from_path(path)?;
    if let Some(s) = o.seed {
        config.seed = s;
    }
    if let Some(t) = o.trials {
        config.trials = t;
    }
    if let Some(dir) = &o.out {
        config.output.dir = dir.clone();
    }
    config.output.plots |= plots;
    config.validate()?;
    let result = run_sweep(&config)?;
    for path in emit_results(&result, &config.output.dir)? {
        println!("wrote {}", path.display());
    }
    let failures: usize = result
        .points
        .iter()
        .flat_map(|p| p.algorithms.iter())
        .map(|a| a.failures)
        .sum();
    println!(
        "{} grid points x {} trials in {:.1} s, {failures} failed runs",
        result.points.len(),
        config.trials,
        result.wall_clock_s
    );
    Ok(())
}

fn single_config(s: &Single) -> Result<SweepConfig, Error> {
    let mut config = load(s.config.as_deref())?;
    if let Some(seed) = s.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn detect(s: &Single) -> Result<(), Error> {
    let config = single_config(s)?;
    let inst = sample_instance(&config, s.grid, s.trial)?;
    let out = run_vrdomp(&inst.y, &inst.combiner, &config.detector)?;
    println!("antenna,visible,belief,detected");
    for (i, p) in out.belief.posterior.iter().enumerate() {
        println!(
            "{},{},{p:.6},{}",
            i + 1,
            u8::from(inst.truth.is_visible(i)),
            u8::from(out.belief.detected.is_visible(i))
        );
    }
    println!(
        "# seed {} iterations {} converged {} vrer {:.6}",
        inst.seed,
        out.iterations,
        out.converged,
        vrer(&inst.truth, &out.belief.detected)?
    );
    Ok(())
}

fn estimate(s: &Single, hard: bool) -> Result<(), Error> {
    let config = single_config(s)?;
    let inst = sample_instance(&config, s.grid, s.trial)?;
    let geom = config.geometry.build()?;
    let codebook = build_codebook(&geom, config.codebook.oversampling)?;
    let ts = TsVdceConfig {
        vrdomp: config.detector.clone(),
        mode: if hard { BeliefMode::Hard } else { BeliefMode::Soft },
        max_support: Some(sparsity_for(&config, inst.combiner.num_measurements())?),
        relative_residual_tol: config.estimator.relative_residual_tol,
    };
    let out = ts_vdce(&inst.y, &inst.combiner, &codebook, &ts)?;
    println!("seed {}", inst.seed);
    println!(
        "user {:.2} m at {:.2} deg, psi {:.4}, Q {}, SNR {} dB",
        inst.user.distance(),
        inst.user.azimuth().to_degrees(),
        inst.truth.fill_ratio(),
        inst.grid.pilot_slots,
        inst.grid.snr_db
    );
    println!("atoms {}", out.sparse.support.len());
    println!("VRER {:.6}", vrer(&inst.truth, &out.stage_one.belief.detected)?);
    println!("NMSE {:.6e}", nmse(&inst.x, &out.x_hat)?);
    Ok(())
}

fn oracle_check(seed: u64) -> Result<bool, Error> {
    let mut all = true;
    for c in run_checks(seed) {
        all &= c.passed;
        println!(
            "{} {} (max error {:.3e}, tolerance {:.0e}, {} cases)",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance,
            c.cases
        );
    }
    Ok(all)
}

fn codebook(path: Option<&Path>) -> Result<(), Error> {
    let config = load(path)?;
    let geom = config.geometry.build()?;
    let s = config.codebook.oversampling;
    let cb = build_codebook(&geom, s)?;
    println!("antennas {}", geom.num_antennas());
    println!("wavelength {:.6e} m, spacing {:.6e} m", geom.wavelength(), geom.spacing());
    println!("aperture {:.6} m, Rayleigh distance {:.3} m", geom.aperture(), geom.rayleigh_distance());
    println!(
        "oversampling {s}, grid spacing {:.6} rad/m, atoms {}, index range {}..={}",
        cb.grid_spacing(),
        cb.num_atoms(),
        cb.indices().first().copied().unwrap_or(0),
        cb.indices().last().copied().unwrap_or(0)
    );
    println!("distance_m,azimuth_deg,bandwidth_rad_per_m,components");
    for &r in &[5.0, 10.0, 20.0, 50.0, 100.0] {
        for &deg in &[0.0, 30.0, 60.0] {
            let user = UserLocation::from_polar(r, f64::to_radians(deg))?;
            let (b, le) = effective_bandwidth(&geom, &user, s)?;
            println!("{r},{deg},{b:.6},{le}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sweep {
            config,
            overrides,
            plots,
        } => sweep(config, overrides, *plots).map(|_| true),
        Command::Detect(s) => detect(s).map(|_| true),
        Command::Estimate { single, hard } => estimate(single, *hard).map(|_| true),
        Command::OracleCheck { seed } => oracle_check(*seed),
        Command::Codebook { config } => codebook(config.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

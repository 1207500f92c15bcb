//! Command-line front end for the limited-feedback downlink simulator.
//!
//! Subcommands cover the full workflow: `sweep` runs Monte Carlo grids and
//! writes CSV summaries plus optional plot-ready series, `train-delta`
//! fits quantizer step sizes, `validate-stats` checks empirical statistics
//! against closed forms, `bounds-check` verifies every analytical bound
//! sample by sample, and `single` traces one channel realization end to
//! end. Exit codes: 0 success, 2 configuration or usage error, 3 when a
//! verification subcommand finds violations.

mod config;
mod plot;

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{
    parse_codebook_mode, parse_delta_source, parse_feasibility_mode, parse_grid, Invocation,
    Overlay,
};
use noma_limfb::bounds::BOUND_TOLERANCE;
use noma_limfb::error::{Error, Result};
use noma_limfb::harness::{
    run_sample, run_sweep, validate_statistics, ExperimentConfig, SampleOutcome, ValidationReport,
};
use noma_limfb::noma::StrongUser;
use noma_limfb::quantizer::{train_delta, training_samples, DeltaCache};
use noma_limfb::rng::{substream, StreamDomain};
use noma_limfb::textfmt::g6;

/// Seed fallback consulted when neither flag nor config file sets one.
const SEED_ENV: &str = "NOMA_LIMFB_SEED";

#[derive(Parser)]
#[command(name = "noma-limfb", version, about = "Limited-feedback downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep over feedback budgets and summarize as CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write plot-ready series files into this directory.
        #[arg(long, value_name = "DIR")]
        plot_dir: Option<PathBuf>,
    },
    /// Train quantizer step sizes over a budget grid.
    TrainDelta {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare empirical channel statistics against closed forms.
    ValidateStats {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate every analytical bound sample-wise and count violations.
    BoundsCheck {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Trace one channel realization end to end.
    Single {
        #[command(flatten)]
        common: CommonArgs,
        /// Sample index within the seed's channel stream.
        #[arg(long, value_name = "N", default_value_t = 0)]
        index: u64,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value config file, applied before flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    /// Gain feedback bits B: a single count or an inclusive range a..b.
    #[arg(long, value_name = "BITS")]
    b: Option<String>,
    /// Codebook bits B': a single count or an inclusive range a..b.
    #[arg(long, value_name = "BITS")]
    bprime: Option<String>,
    /// Transmit antennas.
    #[arg(long, value_name = "N")]
    nt: Option<usize>,
    /// Transmit SNR in dB (noise power is 1).
    #[arg(long, value_name = "DB")]
    snr_db: Option<f64>,
    /// Per-user rate floor in bit/s/Hz.
    #[arg(long, value_name = "RATE")]
    rth: Option<f64>,
    /// Monte Carlo samples per cell; training samples for train-delta.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Root seed; falls back to NOMA_LIMFB_SEED, then 1.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Quantizer step policy: reference, trained, or explicit:VALUE.
    #[arg(long, value_name = "SOURCE")]
    delta_source: Option<String>,
    /// Codebook refresh policy: per-sample or fixed.
    #[arg(long, value_name = "MODE")]
    codebook_mode: Option<String>,
    /// Limited-feedback feasibility test: operational or conservative.
    #[arg(long, value_name = "MODE")]
    feasibility_mode: Option<String>,
    /// Draw separate codebooks for the two users.
    #[arg(long, value_name = "BOOL")]
    independent_codebooks: Option<bool>,
    /// Average only over samples with unsaturated gain reports.
    #[arg(long, value_name = "BOOL")]
    condition_unsaturated: Option<bool>,
    /// Gain samples drawn when the trained step source retrains.
    #[arg(long, value_name = "N")]
    train_samples: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, value_name = "N", default_value_t = 0)]
    workers: usize,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    /// Merge defaults, the seed environment variable, the config file, and
    /// flags, in that order.
    fn invocation(&self) -> Result<Invocation> {
        let mut inv = Invocation::default();
        if let Ok(text) = std::env::var(SEED_ENV) {
            let seed = text
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} {text:?} is not a seed")))?;
            inv.apply(&Overlay { seed: Some(seed), ..Overlay::default() });
        }
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            inv.apply(&config::parse_config_file(&text)?);
        }
        let flags = Overlay {
            n_t: self.nt,
            cqi_bits: self.b.as_deref().map(parse_grid).transpose()?,
            codebook_bits: self.bprime.as_deref().map(parse_grid).transpose()?,
            snr_db: self.snr_db,
            r_th: self.rth,
            n_samples: self.samples,
            seed: self.seed,
            delta_source: self.delta_source.as_deref().map(parse_delta_source).transpose()?,
            codebook_mode: self.codebook_mode.as_deref().map(parse_codebook_mode).transpose()?,
            feasibility_mode: self
                .feasibility_mode
                .as_deref()
                .map(parse_feasibility_mode)
                .transpose()?,
            independent_user_codebooks: self.independent_codebooks,
            condition_on_unsaturated: self.condition_unsaturated,
            delta_train_samples: self.train_samples,
        };
        inv.apply(&flags);
        Ok(inv)
    }

    /// Write `text` to `--out` or standard output.
    fn deliver(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => {
                fs::write(path, text)?;
                eprintln!("wrote {}", path.display());
            }
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let common = match &cli.command {
        Command::Sweep { common, .. }
        | Command::TrainDelta { common }
        | Command::ValidateStats { common }
        | Command::BoundsCheck { common }
        | Command::Single { common, .. } => common,
    };
    let inv = common.invocation()?;
    if common.dump_config {
        common.deliver(&inv.dump())?;
        return Ok(0);
    }
    match &cli.command {
        Command::Sweep { common, plot_dir } => cmd_sweep(common, &inv, plot_dir.as_deref()),
        Command::TrainDelta { common } => cmd_train_delta(common, &inv),
        Command::ValidateStats { common } => cmd_validate_stats(common, &inv),
        Command::BoundsCheck { common } => cmd_bounds_check(common, &inv),
        Command::Single { common, index } => cmd_single(common, &inv, *index),
    }
}

fn cmd_sweep(common: &CommonArgs, inv: &Invocation, plot_dir: Option<&std::path::Path>) -> Result<u8> {
    let mut cache = DeltaCache::new();
    let sweep = run_sweep(&inv.base, &inv.b_grid, &inv.bp_grid, common.workers, &mut cache)?;
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    common.deliver(std::str::from_utf8(&csv).expect("CSV is ASCII"))?;
    if let Some(dir) = plot_dir {
        let written = plot::emit_plot_data(&sweep.rows, dir)?;
        eprintln!("wrote {} series files to {}", written.len(), dir.display());
    }
    Ok(0)
}

fn cmd_train_delta(common: &CommonArgs, inv: &Invocation) -> Result<u8> {
    let cfg = &inv.base;
    let mut cache = DeltaCache::new();
    // Stream layout matches the harness trained-step source, so a sweep
    // with delta_source = trained and matching train count reproduces
    // these values exactly.
    for &bp in &inv.bp_grid {
        let mut rng = substream(
            cfg.seed,
            StreamDomain::QuantizerTraining,
            ((cfg.n_t as u64) << 24) | u64::from(bp),
        );
        let samples = training_samples(cfg.n_t, bp, cfg.n_samples, &mut rng)?;
        for &b in &inv.b_grid {
            cache.insert(b, bp, cfg.n_t, cfg.seed, train_delta(&samples, b)?);
        }
    }
    let mut text = Vec::new();
    cache.write_text(&mut text)?;
    common.deliver(std::str::from_utf8(&text).expect("table is ASCII"))?;
    Ok(0)
}

fn cmd_validate_stats(common: &CommonArgs, inv: &Invocation) -> Result<u8> {
    let bp = inv.single_bp()?;
    let cfg = &inv.base;
    let report = validate_statistics(cfg.n_t, bp, cfg.n_samples, cfg.seed, common.workers)?;
    common.deliver(&render_validation(&report))?;
    Ok(if report.all_pass() { 0 } else { 3 })
}

fn cmd_bounds_check(common: &CommonArgs, inv: &Invocation) -> Result<u8> {
    let mut cache = DeltaCache::new();
    let sweep = run_sweep(&inv.base, &inv.b_grid, &inv.bp_grid, common.workers, &mut cache)?;
    let mut text = String::new();
    let mut violations = 0u64;
    let mut both = 0usize;
    for row in &sweep.rows {
        violations += row.bound_violations;
        both += row.n_both_feasible;
        text.push_str(&format!(
            "B={} B'={} both_feasible={} violations={}\n",
            row.cqi_bits, row.codebook_bits, row.n_both_feasible, row.bound_violations
        ));
    }
    text.push_str(&format!(
        "{violations} violations over {both} both-feasible samples in {} cells\n",
        sweep.rows.len()
    ));
    common.deliver(&text)?;
    Ok(if violations > 0 { 3 } else { 0 })
}

fn cmd_single(common: &CommonArgs, inv: &Invocation, index: u64) -> Result<u8> {
    let mut cfg = inv.base.clone();
    cfg.cqi_bits = inv.single_b()?;
    cfg.codebook_bits = inv.single_bp()?;
    let outcome = run_sample(&cfg, index)?;
    common.deliver(&render_single(&cfg, index, &outcome))?;
    Ok(0)
}

fn render_validation(report: &ValidationReport) -> String {
    let mut out = format!(
        "statistics check: n_t={} B'={} samples={} seed={}\n",
        report.n_t, report.codebook_bits, report.n_samples, report.seed
    );
    for row in &report.rows {
        let verdict = match row.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "skip",
        };
        let target = if row.target.is_nan() { "-".into() } else { g6(row.target) };
        out.push_str(&format!(
            "{:<24} target {:>12} estimate {:>12} tolerance {:>8} {}\n",
            row.name,
            target,
            g6(row.estimate),
            g6(row.tolerance),
            verdict
        ));
    }
    out.push_str(if report.all_pass() { "all checks passed\n" } else { "checks FAILED\n" });
    out
}

fn yes_no(flag: bool) -> &'static str {
    if flag {
        "yes"
    } else {
        "no"
    }
}

fn render_single(cfg: &ExperimentConfig, index: u64, s: &SampleOutcome) -> String {
    let mut out = format!(
        "sample {index} (Nt={} B={} B'={} SNR {} dB Rth {} seed {})\n",
        cfg.n_t, cfg.cqi_bits, cfg.codebook_bits, cfg.snr_db, cfg.r_th, cfg.seed
    );
    out.push_str(&format!(
        "channel    |h1|^2 {}  |h2|^2 {}  rho {}  cos_theta {}\n",
        g6(s.h1_norm2),
        g6(s.h2_norm2),
        g6(s.rho),
        g6(s.cos_theta)
    ));
    out.push_str(&format!("alignment  eta11 {}  eta22 {}\n", g6(s.eta11), g6(s.eta22)));
    for (name, fb) in [("user1", &s.feedback.user1), ("user2", &s.feedback.user2)] {
        out.push_str(&format!(
            "feedback   {name}: pmi {}  gain {}  quantized {} (level {}, saturated {})\n",
            fb.pmi,
            g6(fb.effective_gain),
            g6(fb.quantized.value),
            fb.quantized.level,
            yes_no(fb.quantized.saturated)
        ));
    }
    let g = &s.feedback.reconstructed;
    out.push_str(&format!(
        "order      strong user {}  reconstructed g11 {} g21 {} g22 {} g12 {}\n",
        match s.feedback.order {
            StrongUser::First => 1,
            StrongUser::Second => 2,
        },
        g6(g.g11),
        g6(g.g21),
        g6(g.g22),
        g6(g.g12)
    ));
    let regime = |label: &str,
                  feasible: bool,
                  beta: Option<f64>,
                  rates: &Option<noma_limfb::noma::RateReport>| {
        match (feasible, beta, rates) {
            (true, Some(beta), Some(r)) => format!(
                "{label}  feasible  beta {}  r1 {}  r2 {}  sum {}\n",
                g6(beta),
                g6(r.r1),
                g6(r.r2),
                g6(r.sum)
            ),
            _ => format!("{label}  infeasible\n"),
        }
    };
    out.push_str(&regime("full CSI ", s.full_feasible, s.full_solution.beta_star, &s.full_rates));
    out.push_str(&regime("limited  ", s.lf_feasible, s.lf_solution.beta_star, &s.lf_rates));
    out.push_str(&format!(
        "fallback   used {}  full_sum {}  lf_sum {}\n",
        yes_no(s.fallback_used),
        g6(s.full_sum_with_fallback),
        g6(s.lf_sum_with_fallback)
    ));
    match (s.delta_r, s.delta_beta) {
        (Some(dr), Some(db)) => {
            out.push_str(&format!("loss       delta_r {}  delta_beta {}\n", g6(dr), g6(db)));
        }
        _ => out.push_str("loss       skipped (needs both regimes feasible)\n"),
    }
    match &s.bounds {
        Some(b) => {
            for c in b.checks() {
                let ok = if c.holds(BOUND_TOLERANCE) { "ok" } else { "VIOLATED" };
                out.push_str(&format!(
                    "bound      {:<22} {:>12} <= {:>12}  {}\n",
                    c.name,
                    g6(c.actual),
                    g6(c.bound),
                    ok
                ));
            }
        }
        None => out.push_str("bounds     skipped (needs both regimes feasible)\n"),
    }
    out
}

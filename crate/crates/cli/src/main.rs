use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use otfs_core::dd_channel::{assemble_g, pilot_response, AssembleOptions};
use otfs_core::dd_core::{ChannelState, DdVector, FrameParams};
use otfs_core::estimators::{impulse_baseline, make_pilot_frame, mmle_estimate, tse_estimate, PathEstimates};
use otfs_core::harness::sweep::{self, trial_channel};
use otfs_core::harness::{measure_scaling, run_oracle_validation, PointSettings, SweepConfig};
use otfs_core::scenarios::{single_path_demo, two_path_demo, Resolution};
use otfs_core::waveform_oracle::{apply_channel, heisenberg_rect, isfft, write_iq_f64, DEFAULT_OVERSAMPLING};

#[derive(Parser)]
#[command(name = "otfs", version, about = "OTFS delay-Doppler channel estimation with fractional delay and Doppler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo NMSE sweep and write its CSV.
    Sweep {
        #[arg(long, required_unless_present = "replay")]
        config: Option<PathBuf>,
        /// Overrides `output_path`; stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-run the sweep embedded in a result CSV and compare bodies.
        #[arg(long, conflicts_with = "config")]
        replay: Option<PathBuf>,
    },
    /// Compare the sampled-waveform chain with the closed form as Q grows.
    ValidateOracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32])]
        q: Vec<usize>,
        /// Channel draw index under the config's seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Write the noiseless received pilot map of an illustrative channel.
    Demo {
        #[arg(long, value_enum)]
        scenario: DemoScenario,
        #[arg(long)]
        out: PathBuf,
        /// Also write G as a binary file.
        #[arg(long)]
        dump_g: Option<PathBuf>,
        /// Also write the received time-domain pilot waveform as f64 I/Q.
        #[arg(long)]
        dump_waveform: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OVERSAMPLING)]
        q: usize,
    },
    /// Per-iteration operation counts and their growth when settings double.
    Complexity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate paths from a received delay-Doppler frame (`l,k,re,im` rows;
    /// extra columns are ignored, so `demo` output is accepted).
    Estimate {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long, value_enum)]
        estimator: CliEstimator,
        /// Frame, PSNR and estimator settings; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoScenario {
    TwoPathCoarse,
    TwoPathFine,
    SinglePath,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliEstimator {
    Mmle,
    Tse,
    Impulse,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(path: &Path) -> Result<SweepConfig> {
    SweepConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))
}

/// Settings at the first axis value of a config.
fn first_point(cfg: &SweepConfig) -> Result<PointSettings> {
    Ok(cfg.point(cfg.axis_values[0])?)
}

fn replay(path: &Path) -> Result<()> {
    let (cfg, body, _) = sweep::read_sweep_csv(path)?;
    let cfg = SweepConfig { output_path: None, ..cfg };
    let records = otfs_core::harness::run_sweep(&cfg)?;
    if sweep::csv_body(&records)? != body {
        bail!("replayed sweep differs from {}", path.display());
    }
    eprintln!("replay of {} is byte-identical ({} rows)", path.display(), records.len());
    Ok(())
}

fn run_sweep_cmd(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(p) = out {
        cfg.output_path = Some(p.to_string_lossy().into_owned());
    }
    let records = otfs_core::harness::run_sweep(&cfg)?;
    if cfg.output_path.is_none() {
        let mut w = output(None)?;
        w.write_all(sweep::csv_header(&cfg)?.as_bytes())?;
        w.write_all(sweep::csv_body(&records)?.as_bytes())?;
        w.flush()?;
    }
    let failed = records.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        eprintln!("warning: {failed} rows recorded trial failures");
    }
    Ok(())
}

fn validate_oracle(config: &Path, q: &[usize], trial: usize) -> Result<()> {
    let cfg = load_config(config)?;
    let point = first_point(&cfg)?;
    let channel = trial_channel(&cfg, &point, trial)?;
    let report = run_oracle_validation(&make_pilot_frame(&point.params), &channel, &point.params, q)?;
    println!("{report}");
    if !report.monotone {
        bail!("mismatch does not decrease with Q");
    }
    Ok(())
}

fn demo_setup(scenario: DemoScenario) -> Result<(FrameParams, ChannelState)> {
    Ok(match scenario {
        DemoScenario::TwoPathCoarse => two_path_demo(Resolution::Coarse)?,
        DemoScenario::TwoPathFine => two_path_demo(Resolution::Fine)?,
        DemoScenario::SinglePath => {
            let df = 30e3;
            let p = FrameParams::new(16, 16, df, 3.0 / (16.0 * df), 3.0 * df / 16.0)?;
            let ch = single_path_demo(&p)?;
            (p, ch)
        }
    })
}

fn demo(scenario: DemoScenario, out: &Path, dump_g: Option<&Path>, dump_waveform: Option<&Path>, q: usize) -> Result<()> {
    let (params, channel) = demo_setup(scenario)?;
    let map = pilot_response(&channel, &params);
    let mut w = output(Some(out))?;
    writeln!(w, "l,k,re,im,abs")?;
    for k in 0..params.n() {
        for l in 0..params.m() {
            let v = map[(l, k)];
            writeln!(w, "{l},{k},{},{},{}", v.re, v.im, v.norm())?;
        }
    }
    w.flush()?;
    if let Some(path) = dump_g {
        assemble_g(&channel, &params, AssembleOptions::default())?.write_binary(path)?;
    }
    if let Some(path) = dump_waveform {
        let tx = heisenberg_rect(&isfft(&make_pilot_frame(&params)), q, &params)?;
        write_iq_f64(path, &apply_channel(&tx, &channel, None)?.samples)?;
    }
    Ok(())
}

fn complexity(config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let point = first_point(&cfg)?;
    let channel = trial_channel(&cfg, &point, 0)?;
    let report = measure_scaling(&channel, &point.params, &point.estimator)?;
    print!("{report}");
    Ok(())
}

fn read_frame(path: &Path, params: &FrameParams) -> Result<DdVector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading frame {}", path.display()))?;
    let mut x = DdVector::zeros(params.m(), params.n());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('l')) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            bail!("line {}: expected l,k,re,im", i + 1);
        }
        let l: usize = fields[0].parse().with_context(|| format!("line {}", i + 1))?;
        let k: usize = fields[1].parse().with_context(|| format!("line {}", i + 1))?;
        if l >= params.m() || k >= params.n() {
            bail!("line {}: index ({l}, {k}) outside a {}x{} frame", i + 1, params.m(), params.n());
        }
        let re: f64 = fields[2].parse().with_context(|| format!("line {}", i + 1))?;
        let im: f64 = fields[3].parse().with_context(|| format!("line {}", i + 1))?;
        x[(l, k)] = otfs_core::Complex64::new(re, im);
    }
    Ok(x)
}

fn estimate(frame: &Path, estimator: CliEstimator, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => SweepConfig::default(),
    };
    let point = first_point(&cfg)?;
    let x = read_frame(frame, &point.params)?;
    let est: PathEstimates = match estimator {
        CliEstimator::Mmle => mmle_estimate(&x, &point.estimator, &point.params)?,
        CliEstimator::Tse => tse_estimate(&x, &point.estimator, &point.params)?,
        CliEstimator::Impulse => impulse_baseline(&x, &point.params, &point.impulse)?,
    };
    let mut w = output(out)?;
    writeln!(w, "h_re,h_im,tau_s,nu_hz")?;
    for p in est.paths() {
        writeln!(w, "{},{},{},{}", p.h.re, p.h.im, p.tau, p.nu)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep { replay: Some(path), .. } => replay(&path),
        Command::Sweep { config, out, .. } => run_sweep_cmd(&config.expect("required by clap"), out),
        Command::ValidateOracle { config, q, trial } => validate_oracle(&config, &q, trial),
        Command::Demo { scenario, out, dump_g, dump_waveform, q } => {
            demo(scenario, &out, dump_g.as_deref(), dump_waveform.as_deref(), q)
        }
        Command::Complexity { config } => complexity(&config),
        Command::Estimate { frame, estimator, config, out } => estimate(&frame, estimator, config.as_deref(), out.as_deref()),
    }
}

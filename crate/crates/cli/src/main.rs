//! Command line front end: `simulate` runs Monte Carlo sweeps, `analyze`
//! exposes the closed-form capacity, pulse-shaping and SNR-variance tools.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mimo_ofdm::capacity::{
    capacity_bits, design_lpf, equivalent_span, min_snr_per_bit, shaped_psd, snr_variance_report,
};
use mimo_ofdm::channel::{draw_channel, draw_flat_iid};
use mimo_ofdm::harness::{csv_text, sweep, RunSpec};
use mimo_ofdm::rng::{frame_stream, StreamRole};
use mimo_ofdm::{Error, Mode, Receiver, SystemConfig};

#[derive(Parser)]
#[command(
    name = "mimo-ofdm",
    about = "Turbo-coded MIMO-OFDM baseband simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo BER/erasure/frequency-offset sweep.
    Simulate(SimulateArgs),
    /// Closed-form analyses: capacity limits, pulse shaping, SNR variance.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file (key=value lines, `#` comments).
    #[arg(long)]
    config: PathBuf,
    /// Antenna arrangement; overrides the config file.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Receiver front end; overrides the config file.
    #[arg(long, value_parser = parse_receiver)]
    receiver: Option<Receiver>,
    /// Comma-separated SNR-per-bit points in dB.
    #[arg(long, value_delimiter = ',', required = true)]
    snr: Vec<f64>,
    /// Frames per SNR point.
    #[arg(long)]
    frames: u64,
    /// Master seed; every frame derives its own streams from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker thread count.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Minimum SNR per bit over a range of capacities.
    #[arg(long)]
    capacity: bool,
    /// Pulse-shaping lowpass design and transmit PSD (two-column
    /// frequency/dB text on stdout).
    #[arg(long)]
    lpf: bool,
    /// Per-frame SNR variance: flat i.i.d. vs multipath closed forms.
    #[arg(long)]
    snr_variance: bool,
    /// LPF cutoff in radians.
    #[arg(long, default_value_t = std::f64::consts::PI / 10.0)]
    cutoff: f64,
    /// LPF transition bandwidth in radians.
    #[arg(long, default_value_t = std::f64::consts::PI / 20.0)]
    transition: f64,
    /// Sample period in seconds for PSD frequency scaling.
    #[arg(long, default_value_t = 1e-7)]
    ts: f64,
    /// Channel span for the variance report.
    #[arg(long, default_value_t = 10)]
    lh: usize,
    /// FFT length for the variance report.
    #[arg(long, default_value_t = 4096)]
    ld: usize,
    /// Per-dimension tap variance for the variance report.
    #[arg(long, default_value_t = 0.5)]
    sigma_f_sq: f64,
    /// Also verify the variance report with this many sampled frames.
    #[arg(long, default_value_t = 0)]
    mc_frames: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "joint" | "joint-mimo" => Ok(Mode::Joint),
        "nearcap" | "near-capacity" => Ok(Mode::NearCapacity),
        other => Err(format!("unknown mode `{other}` (joint|nearcap)")),
    }
}

fn parse_receiver(s: &str) -> Result<Receiver, String> {
    match s {
        "ideal" => Ok(Receiver::Ideal),
        "practical" => Ok(Receiver::Practical),
        other => Err(format!("unknown receiver `{other}` (ideal|practical)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // bad command lines and bad config files are usage errors
        Err(err @ (Error::Usage(_) | Error::ConfigParse { .. } | Error::InvalidConfig(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut cfg = SystemConfig::from_file(&args.config)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(receiver) = args.receiver {
        cfg.receiver = receiver;
    }
    let spec = RunSpec {
        cfg,
        snr_db: args.snr,
        frames: args.frames,
        master_seed: args.seed,
        workers: args.workers,
    };
    let rows = sweep(&spec)?;
    std::fs::write(&args.out, csv_text(&rows))?;

    println!(
        "# {} mode, {} receiver, {} frames/point, seed {}",
        spec.cfg.mode, spec.cfg.receiver, spec.frames, spec.master_seed
    );
    for row in &rows {
        println!(
            "snr {:+6.2} dB | ber {:.3e} (ci {:.1e}) | fer {:.3e} | erasures {}/{} | failures {} | {:.1} s",
            row.snr_db,
            row.ber,
            row.ber_ci,
            row.fer,
            row.erasures,
            row.frames,
            row.decode_failures,
            row.seconds
        );
    }
    println!("# wrote {}", args.out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Error> {
    if !(args.capacity || args.lpf || args.snr_variance) {
        return Err(Error::Usage(
            "pick at least one of --capacity, --lpf, --snr-variance".into(),
        ));
    }
    if args.capacity {
        println!("# capacity C (bits/transmission) vs minimum average SNR per bit");
        println!(
            "# C -> 0 limit: ln 2 = {:.4} = {:.4} dB",
            std::f64::consts::LN_2,
            10.0 * std::f64::consts::LN_2.log10()
        );
        println!("C,snr_b,snr_b_db");
        for c in [1e-6, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0] {
            let p = min_snr_per_bit(c)?;
            println!("{:.6},{:.6},{:.4}", c, p.snr_b, p.snr_b_db);
        }
        // consistency spot check of the defining fixed point
        let p = min_snr_per_bit(1.0)?;
        debug_assert!((capacity_bits(p.snr_b) - 1.0).abs() < 1e-12);
    }
    if args.lpf {
        let design = design_lpf(args.cutoff, args.transition)?;
        let curve = shaped_psd(&design, 2.0 / 4096.0, args.ts, 4096);
        println!(
            "# lowpass: {} taps, cutoff {:.4} rad, transition {:.4} rad",
            design.taps.len(),
            design.cutoff,
            design.transition
        );
        println!("# dc gain {:.6}", design.response(0.0));
        println!(
            "# equivalent span with a 10-tap channel: {}",
            equivalent_span(design.taps.len(), 10)
        );
        println!(
            "# one-sided -40 dB bandwidth: {:.4e} Hz (1/(20 Ts) = {:.4e} Hz)",
            curve.occupied_bw_hz,
            1.0 / (20.0 * args.ts)
        );
        let peak = curve.psd.iter().cloned().fold(f64::MIN, f64::max);
        // bulk output is meant for piping; stop quietly if the reader closes
        let stdout = std::io::stdout();
        let mut out = std::io::BufWriter::new(stdout.lock());
        for (f, p) in curve.freq_hz.iter().zip(curve.psd.iter()) {
            let db = 10.0 * (p / peak).max(1e-30).log10();
            if let Err(e) = writeln!(out, "{f:.6e} {db:.3}") {
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    return Ok(());
                }
                return Err(e.into());
            }
        }
    }
    if args.snr_variance {
        let report = snr_variance_report(args.lh, args.ld, args.sigma_f_sq);
        println!(
            "# per-frame SNR proxy variance, Lh={} Ld={} sigma_f_sq={}",
            args.lh, args.ld, args.sigma_f_sq
        );
        println!("flat_iid_variance,{:.6e}", report.flat_var);
        println!("multipath_variance,{:.6e}", report.multipath_var);
        println!("ratio,{:.4}", report.ratio);
        if args.mc_frames > 0 {
            let (flat, multi) = sampled_variances(&args)?;
            println!("sampled_flat_iid_variance,{flat:.6e}");
            println!("sampled_multipath_variance,{multi:.6e}");
        }
    }
    Ok(())
}

/// Sample variances of the frame-averaged channel power under both models.
fn sampled_variances(args: &AnalyzeArgs) -> Result<(f64, f64), Error> {
    let flat_cfg = SystemConfig {
        nt: 1,
        nr: 1,
        ld: args.ld,
        ld2: args.ld,
        lo: 0,
        buffer_len: 0,
        lp: 0,
        lh: 1,
        // per-dimension gain variance Lh sigma_f_sq of the report
        sigma_f_sq: args.lh as f64 * args.sigma_f_sq,
        mode: Mode::NearCapacity,
        receiver: Receiver::Ideal,
        ..SystemConfig::default()
    };
    let multi_cfg = SystemConfig {
        nt: 1,
        nr: 1,
        lh: args.lh,
        sigma_f_sq: args.sigma_f_sq,
        ld: args.ld,
        receiver: Receiver::Ideal,
        mode: Mode::NearCapacity,
        ..SystemConfig::default()
    };
    let mut flat = Welford::default();
    let mut multi = Welford::default();
    for frame in 0..args.mc_frames {
        let mut rng = frame_stream(0xa5a5, frame, StreamRole::ChannelTaps);
        let ch = draw_flat_iid(&flat_cfg, &mut rng);
        let proxy = ch.gains[0][0].iter().map(|v| v.norm_sqr()).sum::<f64>() / args.ld as f64;
        flat.push(proxy);

        let ch = draw_channel(&multi_cfg, &mut rng);
        // Parseval: the frame-averaged |H|^2 equals the tap energy
        let proxy = ch.taps[0][0].iter().map(|v| v.norm_sqr()).sum::<f64>();
        multi.push(proxy);
    }
    Ok((flat.variance(), multi.variance()))
}

#[derive(Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }
}

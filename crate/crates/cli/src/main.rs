use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ndc_core::analysis::{fit_gaussian, WasakResult};
use ndc_core::config::{parse_config, write_config};
use ndc_core::correlator::{
    g2_normalize, read_histogram_csv, Histogram, DEFAULT_BIN_PS, DEFAULT_WINDOW_PS,
};
use ndc_core::model::{self, WasakInputs};
use ndc_core::pipeline::{self, CorrelateOptions, Correlation, Target};
use ndc_core::sim::simulate;
use ndc_core::tagio::{read_tag_file, site_run, write_tag_file, Terminal, DEFAULT_BATCH};
use ndc_core::{Error, Result, TagStream};

const DEFAULT_SEED: u64 = 1;

/// Nonlocal dispersion cancellation: simulate, correlate and test the
/// Wasak inequality on two-site photon timestamp streams.
#[derive(Parser)]
#[command(name = "ndc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed for simulations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path or prefix.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Initial fine histogram bin width, ps.
    #[arg(long, global = true, default_value_t = DEFAULT_BIN_PS)]
    bin_ps: f64,
    /// Initial fine histogram half-window, ps.
    #[arg(long, global = true, default_value_t = DEFAULT_WINDOW_PS)]
    window_ps: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate both sites and write `<out>_a.tags`, `<out>_b.tags` and `<out>.manifest`.
    Simulate {
        /// Built-in configuration instead of --config.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Duration multiplier for presets.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Cross-correlate two tag files and write the histogram CSV.
    Correlate {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        align: Align,
    },
    /// Fit a histogram CSV.
    Analyze { csv: PathBuf },
    /// Evaluate the Wasak witness from histograms, tag files or fitted widths.
    Wasak {
        /// Histogram CSV, or the two tag files, before dispersion.
        #[arg(long, num_args = 1..=2, requires = "after", conflicts_with = "sigma_before")]
        before: Vec<PathBuf>,
        /// Histogram CSV, or the two tag files, after dispersion.
        #[arg(long, num_args = 1..=2)]
        after: Vec<PathBuf>,
        /// Width before dispersion, ps (with --sigma-after).
        #[arg(long, requires = "sigma_after")]
        sigma_before: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        sigma_before_err: f64,
        #[arg(long)]
        sigma_after: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        sigma_after_err: f64,
        /// Dispersion magnitude 2βl, ps² (default: the 62 km / 7.47 km configuration).
        #[arg(long)]
        two_beta_l: Option<f64>,
        #[command(flatten)]
        align: Align,
    },
    /// Run a preset end to end and check it against the published results.
    Reproduce {
        target: Target,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Send tag files to a terminal.
    Site {
        #[arg(long)]
        connect: String,
        /// Tag files, sent in order.
        #[arg(long = "tags", required = true, num_args = 1..)]
        tags: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BATCH)]
        batch: usize,
    },
    /// Collect streams from two sites and correlate them (two runs per site: Wasak test).
    Terminal {
        #[arg(long, default_value = "127.0.0.1:7700")]
        listen: String,
        /// Streams expected from each site.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        two_beta_l: Option<f64>,
        /// Give up after this many seconds.
        #[arg(long)]
        timeout_s: Option<f64>,
        #[command(flatten)]
        align: Align,
    },
}

#[derive(Args, Clone)]
struct Align {
    /// Coarse alignment bin, ns.
    #[arg(long, default_value_t = 1.0)]
    coarse_bin_ns: f64,
    /// Coarse search span, ms.
    #[arg(long, default_value_t = 1.0)]
    span_ms: f64,
    /// Keep the initial binning instead of refining around the peak.
    #[arg(long)]
    no_refine: bool,
}

impl Align {
    fn options(&self, g: &Global) -> Result<CorrelateOptions> {
        let coarse_bin_fs = (self.coarse_bin_ns * 1e6).round();
        let search_span_fs = (self.span_ms * 1e12).round();
        if !(coarse_bin_fs >= 1.0 && (0.0..1e18).contains(&search_span_fs)) {
            return Err(Error::InvalidParameter(
                "coarse bin and span must be positive".into(),
            ));
        }
        Ok(CorrelateOptions {
            coarse_bin_fs: coarse_bin_fs as i64,
            search_span_fs: search_span_fs as i64,
            bin_ps: g.bin_ps,
            window_ps: g.window_ps,
            refine: !self.no_refine,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::NoPeak { .. } => 3,
        Error::FitFailed(_) => 4,
        Error::Transport(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { preset, scale } => cmd_simulate(g, preset.as_deref(), *scale),
        Command::Correlate { a, b, align } => cmd_correlate(g, a, b, align),
        Command::Analyze { csv } => cmd_analyze(g, csv),
        Command::Wasak {
            before,
            after,
            sigma_before,
            sigma_before_err,
            sigma_after,
            sigma_after_err,
            two_beta_l,
            align,
        } => {
            let two_beta_l = two_beta_l.map_or_else(default_two_beta_l, Ok)?;
            let result = match (sigma_before, sigma_after) {
                (Some(sb), Some(sa)) => WasakResult::from_inputs(WasakInputs {
                    var_before: sb * sb,
                    var_before_err: 2.0 * sb * sigma_before_err,
                    var_after: sa * sa,
                    var_after_err: 2.0 * sa * sigma_after_err,
                    two_beta_l,
                })?,
                _ => wasak_from_paths(before, after, two_beta_l, &align.options(g)?)?,
            };
            emit(g, &result.report())?;
            Ok(0)
        }
        Command::Reproduce { target, scale } => {
            let seed = g.seed.unwrap_or(DEFAULT_SEED);
            let report = pipeline::reproduce(*target, seed, *scale)?;
            emit(g, &report.render())?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Site {
            connect,
            tags,
            batch,
        } => {
            let streams = tags
                .iter()
                .map(|p| read_tag_file(p))
                .collect::<Result<Vec<_>>>()?;
            site_run(connect.as_str(), &streams, *batch)?;
            println!("sent {} stream(s) to {connect}", streams.len());
            Ok(0)
        }
        Command::Terminal {
            listen,
            runs,
            two_beta_l,
            timeout_s,
            align,
        } => cmd_terminal(g, listen, *runs, *two_beta_l, *timeout_s, align),
    }
}

fn default_two_beta_l() -> Result<f64> {
    let (ds, di) = pipeline::preset("fig2d", 1.0)?.dispersions();
    Ok(model::two_beta_l(ds, di))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes to --out when given, else stdout.
fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_simulate(g: &Global, preset: Option<&str>, scale: f64) -> Result<u8> {
    let (exp, config_seed) = match (preset, &g.config) {
        (Some(name), _) => (pipeline::preset(name, scale)?, None),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            let cfg = parse_config(&text)
                .map_err(|e| Error::from(e).in_stage(path.display().to_string()))?;
            (cfg.experiment, cfg.seed)
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "simulate needs --config or --preset".into(),
            ))
        }
    };
    let seed = g.seed.or(config_seed).unwrap_or(DEFAULT_SEED);
    let prefix = g.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let sim = simulate(&exp, seed)?;
    let pa = with_suffix(&prefix, "_a.tags");
    let pb = with_suffix(&prefix, "_b.tags");
    write_tag_file(&sim.a, &pa)?;
    write_tag_file(&sim.b, &pb)?;
    write_file(
        &with_suffix(&prefix, ".manifest"),
        &write_config(&exp, Some(seed)),
    )?;
    println!("pairs = {}", sim.pairs);
    println!("tags_a = {} ({})", sim.a.len(), pa.display());
    println!("tags_b = {} ({})", sim.b.len(), pb.display());
    println!("seed = {seed}");
    Ok(0)
}

fn histogram_csv(h: &Histogram, a: &TagStream, b: &TagStream) -> Result<Vec<u8>> {
    let duration_s = a.acquisition_span_fs().max(b.acquisition_span_fs()) as f64 / 1e15;
    let g2 = g2_normalize(h, a.rate_hz(), b.rate_hz(), duration_s).ok();
    let mut out = Vec::new();
    h.write_csv(&mut out, g2.as_deref())
        .map_err(|e| Error::io("formatting histogram", e))?;
    Ok(out)
}

fn correlation_summary(c: &Correlation) -> String {
    let mut s = format!(
        "coarse_offset_ps = {}\ncoarse_peak = {}\ncoarse_mean = {:.3}\ncoarse_std = {:.3}\ncoarse_threshold = {}\n",
        c.coarse.offset_fs as f64 / 1e3,
        c.coarse.peak,
        c.coarse.mean,
        c.coarse.std,
        c.coarse.threshold
    );
    s.push_str(&format!(
        "bin_width_ps = {}\ntotal_pairs = {}\n",
        c.histogram.bin_width_ps(),
        c.histogram.total_pairs
    ));
    match &c.fit {
        Ok(f) => {
            if let Some(p) = c.peak_offset_ps() {
                s.push_str(&format!("peak_offset_ps = {p}\n"));
            }
            s.push_str(&f.report());
        }
        Err(e) => s.push_str(&format!("fit = failed ({e})\n")),
    }
    s
}

fn cmd_correlate(g: &Global, a: &Path, b: &Path, align: &Align) -> Result<u8> {
    let sa = read_tag_file(a)?;
    let sb = read_tag_file(b)?;
    let c = pipeline::correlate(&sa, &sb, &align.options(g)?)?;
    let csv = histogram_csv(&c.histogram, &sa, &sb)?;
    match &g.out {
        Some(p) => {
            fs::write(p, &csv).map_err(|e| Error::io(format!("writing {}", p.display()), e))?
        }
        None => io::stdout()
            .write_all(&csv)
            .map_err(|e| Error::io("writing histogram", e))?,
    }
    eprint!("{}", correlation_summary(&c));
    match c.fit {
        Ok(_) => Ok(0),
        Err(e) => Err(e),
    }
}

fn load_histogram(path: &Path) -> Result<Histogram> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    read_histogram_csv(&text).map_err(|e| e.in_stage(path.display().to_string()))
}

fn cmd_analyze(g: &Global, csv: &Path) -> Result<u8> {
    let h = load_histogram(csv)?;
    let f = fit_gaussian(&h)?;
    emit(g, &f.report())?;
    Ok(0)
}

fn wasak_from_paths(
    before: &[PathBuf],
    after: &[PathBuf],
    two_beta_l: f64,
    opts: &CorrelateOptions,
) -> Result<WasakResult> {
    match (before, after) {
        ([hb], [ha]) => {
            let fb = fit_gaussian(&load_histogram(hb)?).map_err(|e| e.in_stage("fit before"))?;
            let fa = fit_gaussian(&load_histogram(ha)?).map_err(|e| e.in_stage("fit after"))?;
            ndc_core::analysis::evaluate_wasak(&fb, &fa, two_beta_l)
        }
        ([ba, bb], [aa, ab]) => {
            let (ba, bb, aa, ab) = (read_tag_file(ba)?, read_tag_file(bb)?, read_tag_file(aa)?, read_tag_file(ab)?);
            Ok(pipeline::wasak_from_streams((&ba, &bb), (&aa, &ab), two_beta_l, opts)?.result)
        }
        _ => Err(Error::InvalidParameter(
            "give --before/--after as one histogram CSV each or two tag files each, or --sigma-before/--sigma-after".into(),
        )),
    }
}

fn cmd_terminal(
    g: &Global,
    listen: &str,
    runs: usize,
    two_beta_l: Option<f64>,
    timeout_s: Option<f64>,
    align: &Align,
) -> Result<u8> {
    if !(1..=2).contains(&runs) {
        return Err(Error::InvalidParameter(
            "--runs must be 1 (correlate) or 2 (wasak)".into(),
        ));
    }
    let opts = align.options(g)?;
    let terminal = Terminal::bind(listen)?;
    eprintln!("listening on {}", terminal.local_addr()?);
    let deadline = timeout_s.map(Duration::from_secs_f64);
    let got = terminal.collect(runs, deadline)?;
    if runs == 1 {
        let (a, b) = (&got.a[0], &got.b[0]);
        let c = pipeline::correlate(a, b, &opts)?;
        if let Some(p) = &g.out {
            let csv = histogram_csv(&c.histogram, a, b)?;
            fs::write(p, csv).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
        }
        print!("{}", correlation_summary(&c));
        return c.fit.map(|_| 0);
    }
    let two_beta_l = two_beta_l.map_or_else(default_two_beta_l, Ok)?;
    let w = pipeline::wasak_from_streams(
        (&got.a[0], &got.b[0]),
        (&got.a[1], &got.b[1]),
        two_beta_l,
        &opts,
    )?;
    if let Some(p) = &g.out {
        for (suffix, c, (a, b)) in [
            ("_before.csv", &w.before, (&got.a[0], &got.b[0])),
            ("_after.csv", &w.after, (&got.a[1], &got.b[1])),
        ] {
            let path = with_suffix(p, suffix);
            let csv = histogram_csv(&c.histogram, a, b)?;
            fs::write(&path, csv)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
    }
    print!("{}", w.result.report());
    Ok(0)
}

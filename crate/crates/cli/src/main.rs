//! `spdiff`: spectrum fitting, filter construction, corruption, training,
//! sampling and verification from the command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::json;

use spdiff::corruption::{load_schedule, psi_csv, psi_rows, EPS_MIN};
use spdiff::diffusion::{sample_frequency, DEFAULT_LEARNING_RATE};
use spdiff::io::{load_images, read_image, write_image, write_tensor};
use spdiff::rng::seeded;
use spdiff::verify::{
    check_geodesic, compare_path_lengths, frequency_trend, FrequencyTrend, ScheduleCurve, DEFAULT_SE_THRESHOLD,
};
use spdiff::{
    build_schedule, calibrate_c1_for_m, check_forward_covariance, compute_power_spectrum, corrupt, fit_spectrum,
    train_step, Denoiser, Error, FilterFile, FilterSchedule, GaussianOracle, ImageTensor, LinearDenoiser, McReport,
    Result, SigmaVariant, SpectrumFit, TrainState,
};

#[derive(Parser)]
#[command(name = "spdiff", version, about = "Shortest-path diffusion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the power-law spectrum model to a directory of images.
    FitSpectrum(FitArgs),
    /// Build the corruption filter for a fitted spectrum.
    MakeFilter(FilterArgs),
    /// Corrupt one image to step t.
    Corrupt(CorruptArgs),
    /// Train the per-frequency linear denoiser.
    Train(TrainArgs),
    /// Generate images with the reverse process.
    Sample(SampleArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Image directory (PGM or PNG), or a single image.
    #[arg(long)]
    data: PathBuf,
    /// Fit JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Fit the exponent too instead of holding it at --m.
    #[arg(long)]
    free_m: bool,
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// Spectrum table; defaults to spectrum.csv next to --out.
    #[arg(long)]
    spectrum_csv: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long = "H")]
    height: usize,
    #[arg(long = "W")]
    width: usize,
    #[arg(long = "T")]
    steps: usize,
    /// Replace the fitted exponent.
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    /// Re-solve c1 so the half-time noise matches the fitted filter.
    #[arg(long, requires = "m")]
    calibrate: bool,
    /// Filter JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// `t,f,psi` table; defaults to psi.csv next to --out.
    #[arg(long)]
    psi_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    filter: PathBuf,
    #[arg(long = "t")]
    t: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory for x_t and eps.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    filter: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    seed: u64,
    /// Parameters file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Per-step `step,loss,running_loss` table.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    filter: PathBuf,
    /// `gaussian` or `linear:PARAMS`.
    #[arg(long)]
    denoiser: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// `beta` or `beta-tilde`; by default beta for T > 300.
    #[arg(long)]
    sigma: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Channels for the gaussian denoiser; a linear model brings its own.
    #[arg(long, default_value_t = 1)]
    channels: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Geodesic,
    Covariance,
    Ordering,
    Lengths,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Required by the geodesic and covariance suites.
    #[arg(long)]
    seed: Option<u64>,
    /// Spectrum fit; defaults to c1 = 7.7, c2 = -0.3, m = 2.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long = "H", default_value_t = 8)]
    height: usize,
    #[arg(long = "W", default_value_t = 8)]
    width: usize,
    #[arg(long = "T", default_value_t = 100)]
    steps: usize,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Random SPD pairs for the geodesic suite.
    #[arg(long, default_value_t = 20)]
    pairs: u64,
    /// Pass threshold in standard errors.
    #[arg(long, default_value_t = DEFAULT_SE_THRESHOLD)]
    threshold: f64,
    /// Finite-difference step of the geodesic residual.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Quadrature steps for path lengths.
    #[arg(long, default_value_t = 1000)]
    n_steps: usize,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::SingularBin { .. }
        | Error::NonConvergence(_)
        | Error::NoRoot(_)
        | Error::NonHermitian(_)
        | Error::NonFiniteLoss(_)
        | Error::NotPositiveDefinite
        | Error::NotSymmetric { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::FitSpectrum(a) => fit_cmd(&a).map(|_| true),
        Command::MakeFilter(a) => filter_cmd(&a).map(|_| true),
        Command::Corrupt(a) => corrupt_cmd(&a).map(|_| true),
        Command::Train(a) => train_cmd(&a).map(|_| true),
        Command::Sample(a) => sample_cmd(&a).map(|_| true),
        Command::Verify(a) => verify_cmd(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn missing(path: &Path, what: &str) -> Error {
    Error::InvalidArgument(format!("{what} {} does not exist", path.display()))
}

fn need_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(path, "file"))
    }
}

fn need_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(path, "input"))
    }
}

/// The directory an output file goes into must already exist.
fn need_output_file(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(missing(parent, "output directory"));
    }
    if path.is_dir() {
        return Err(Error::InvalidArgument(format!("{} is a directory", path.display())));
    }
    Ok(())
}

fn need_output_dir(path: &Path) -> Result<()> {
    if path.exists() && !path.is_dir() {
        return Err(Error::InvalidArgument(format!("{} is not a directory", path.display())));
    }
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    need_input(&a.data)?;
    need_output_file(&a.out)?;
    let csv_path = a.spectrum_csv.clone().unwrap_or_else(|| sibling(&a.out, "spectrum.csv"));
    need_output_file(&csv_path)?;

    let images: Vec<ImageTensor<f64>> = load_images(&a.data)?;
    let ps = compute_power_spectrum(&images)?;
    let fit = fit_spectrum(&ps, if a.free_m { None } else { Some(a.m) })?;
    fs::write(&a.out, fit.to_json()?)?;
    fs::write(&csv_path, ps.to_csv())?;
    fs::write(csv_path.with_extension("json"), ps.to_json()?)?;
    println!("images   {}", images.len());
    println!("c1       {}", fit.c1);
    println!("c2       {}", fit.c2);
    println!("m        {}", fit.m);
    println!("residual {}", fit.residual);
    Ok(())
}

fn filter_cmd(a: &FilterArgs) -> Result<()> {
    need_file(&a.fit)?;
    need_output_file(&a.out)?;
    let csv_path = a.psi_csv.clone().unwrap_or_else(|| sibling(&a.out, "psi.csv"));
    need_output_file(&csv_path)?;

    let reference = SpectrumFit::<f64>::read(&a.fit)?;
    let fit = match (a.m, a.calibrate) {
        (Some(m), true) => calibrate_c1_for_m(&reference, m, a.height, a.width, a.steps)?,
        (Some(m), false) => SpectrumFit::new(reference.c1, reference.c2, m),
        (None, _) => SpectrumFit::new(reference.c1, reference.c2, reference.m),
    };
    let file = FilterFile {
        height: a.height,
        width: a.width,
        steps: a.steps,
        c1: fit.c1,
        c2: fit.c2,
        m: fit.m,
        eps_min: EPS_MIN,
    };
    let schedule = file.build()?;
    file.write(&a.out)?;
    fs::write(&csv_path, psi_csv(&psi_rows(&schedule)))?;
    println!("c1 {}  c2 {}  m {}", fit.c1, fit.c2, fit.m);
    println!("half-time noise {}", spdiff::corruption::half_time_noise(&fit, a.height, a.width)?);
    Ok(())
}

fn corrupt_cmd(a: &CorruptArgs) -> Result<()> {
    need_file(&a.image)?;
    need_file(&a.filter)?;
    need_output_dir(&a.out)?;

    let schedule: FilterSchedule<f64> = load_schedule(&a.filter)?;
    let x0: ImageTensor<f64> = read_image(&a.image)?;
    let (x_t, eps) = corrupt(&x0, a.t, &schedule, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let ext = if x_t.channels() == 1 { "pgm" } else { "png" };
    write_image(&a.out.join(format!("x_t.{ext}")), &x_t)?;
    write_tensor(&a.out.join("x_t.spdt"), &x_t)?;
    write_tensor(&a.out.join("eps.spdt"), &eps)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    need_file(&a.filter)?;
    need_input(&a.data)?;
    need_output_file(&a.out)?;
    if let Some(p) = &a.loss_csv {
        need_output_file(p)?;
    }
    if a.batch == 0 {
        return Err(Error::InvalidArgument("--batch must be positive".into()));
    }

    let schedule: FilterSchedule<f64> = load_schedule(&a.filter)?;
    let images: Vec<ImageTensor<f64>> = load_images(&a.data)?;
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let model = LinearDenoiser::zeros(schedule.steps(), schedule.height(), schedule.width(), first.channels());
    let mut state = TrainState::new(model).with_learning_rate(a.lr);
    let mut rng = seeded(a.seed);
    let mut log = String::from("step,loss,running_loss\n");
    for _ in 0..a.steps {
        let batch: Vec<ImageTensor<f64>> = (0..a.batch)
            .map(|_| images[rng.random_range(0..images.len())].clone())
            .collect();
        train_step(&mut state, &batch, &schedule, &mut rng)?;
        let _ = writeln!(log, "{},{},{}", state.step, state.last_loss, state.running_loss.unwrap_or(state.last_loss));
    }
    state.model.write(&a.out)?;
    if let Some(p) = &a.loss_csv {
        fs::write(p, log)?;
    }
    match state.running_loss {
        Some(loss) => println!("steps {}  running loss {loss}", state.step),
        None => println!("steps 0"),
    }
    Ok(())
}

fn sample_cmd(a: &SampleArgs) -> Result<()> {
    need_file(&a.filter)?;
    need_output_dir(&a.out)?;
    let linear_path = match a.denoiser.as_str() {
        "gaussian" => None,
        other => match other.strip_prefix("linear:") {
            Some(p) => {
                let p = PathBuf::from(p);
                need_file(&p)?;
                Some(p)
            }
            None => {
                return Err(Error::InvalidArgument(format!(
                    "unknown denoiser {other:?}; expected gaussian or linear:PATH"
                )))
            }
        },
    };
    let schedule: FilterSchedule<f64> = load_schedule(&a.filter)?;
    let variant = match &a.sigma {
        Some(s) => s.parse()?,
        None => SigmaVariant::for_steps(schedule.steps()),
    };
    let (denoiser, channels): (Box<dyn Denoiser<f64>>, usize) = match linear_path {
        None => (Box::new(GaussianOracle::new(&schedule)), a.channels),
        Some(p) => {
            let model = LinearDenoiser::<f64>::read(&p)?;
            model.check_compatible(&schedule)?;
            let c = model.channels();
            (Box::new(model), c)
        }
    };
    if a.n == 0 {
        return Ok(());
    }

    let freq = sample_frequency(&schedule, denoiser.as_ref(), variant, a.seed, a.n, channels)?;
    fs::create_dir_all(&a.out)?;
    let fft = schedule.fft();
    let ext = if channels == 1 { "pgm" } else { "png" };
    let bins = schedule.bins();
    let mut power = vec![0.0; bins];
    for (i, u) in freq.iter().enumerate() {
        let img = fft.inverse(u)?;
        write_tensor(&a.out.join(format!("sample_{i:05}.spdt")), &img)?;
        write_image(&a.out.join(format!("sample_{i:05}.{ext}")), &img)?;
        for (idx, v) in u.as_slice().iter().enumerate() {
            power[idx % bins] += v.norm_sqr();
        }
    }
    let count = (a.n * channels) as f64;
    let mut csv = String::from("bin,f,variance,target\n");
    for k in 0..bins {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            k,
            schedule.frequencies()[k],
            power[k] / count,
            schedule.d_values()[k]
        );
    }
    fs::write(a.out.join("variance.csv"), csv)?;
    println!("wrote {} samples to {}", a.n, a.out.display());
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> Result<bool> {
    if let Some(p) = &a.fit {
        need_file(p)?;
    }
    if let Some(p) = &a.json {
        need_output_file(p)?;
    }
    let needs_seed = matches!(a.suite, Suite::Geodesic | Suite::Covariance);
    let seed = match (a.seed, needs_seed) {
        (Some(s), _) => s,
        (None, true) => return Err(Error::InvalidArgument("this suite needs --seed".into())),
        (None, false) => 0,
    };
    let base = match &a.fit {
        Some(p) => SpectrumFit::<f64>::read(p)?,
        None => SpectrumFit::new(7.7, -0.3, 2.0),
    };
    let fit = SpectrumFit::new(base.c1, base.c2, a.m.unwrap_or(base.m));

    let (pass, value) = match a.suite {
        Suite::Geodesic => geodesic_suite(a, seed)?,
        Suite::Covariance => covariance_suite(a, &fit, seed)?,
        Suite::Ordering => ordering_suite(a, &fit)?,
        Suite::Lengths => lengths_suite(a, &fit)?,
    };
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if let Some(p) = &a.json {
        let doc = json!({ "pass": pass, "results": value });
        fs::write(p, serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
    }
    Ok(pass)
}

fn geodesic_suite(a: &VerifyArgs, seed: u64) -> Result<(bool, serde_json::Value)> {
    println!(
        "{:>8} {:>4} {:>12} {:>12} {:>12} {:>10} {:>10}  result",
        "seed", "dim", "residual", "residual/2", "boundary", "length", "line"
    );
    let mut all = true;
    let mut rows = Vec::new();
    for i in 0..a.pairs {
        let dim = 2 + (i % 5) as usize;
        let c = check_geodesic(seed + i, dim, a.h, a.n_steps)?;
        println!(
            "{:>8} {:>4} {:>12.3e} {:>12.3e} {:>12.3e} {:>10.6} {:>10.6}  {}",
            c.seed,
            c.dim,
            c.residual,
            c.residual_half_step,
            c.boundary_error,
            c.length,
            c.straight_line_length,
            if c.pass { "PASS" } else { "FAIL" }
        );
        all &= c.pass;
        rows.push(c);
    }
    Ok((all, json!(rows)))
}

fn covariance_suite(a: &VerifyArgs, fit: &SpectrumFit<f64>, seed: u64) -> Result<(bool, serde_json::Value)> {
    let schedule = build_schedule(fit, a.height, a.width, a.steps)?;
    let steps = a.steps;
    let mut times = vec![0, steps / 4, steps / 2, 3 * steps / 4, steps];
    times.dedup();
    println!("{:>6} {:>6} {:>14} {:>10} {:>12}  result", "t", "bins", "max dev (SE)", "limit", "max rel err");
    let mut all = true;
    let mut reports = Vec::new();
    for t in times {
        let r = check_forward_covariance(&schedule, t, a.n, seed)?;
        let r = McReport::with_threshold(r.quantity, r.estimate, r.standard_error, r.target, a.threshold);
        println!(
            "{:>6} {:>6} {:>14.3} {:>10.1} {:>12.3e}  {}",
            t,
            r.estimate.len(),
            r.max_deviation_se,
            r.threshold_se,
            r.max_relative_error(),
            if r.pass { "PASS" } else { "FAIL" }
        );
        all &= r.pass;
        reports.push(r);
    }
    Ok((all, json!(reports)))
}

fn trend_name(t: FrequencyTrend) -> &'static str {
    match t {
        FrequencyTrend::Increasing => "increasing",
        FrequencyTrend::Decreasing => "decreasing",
        FrequencyTrend::Flat => "flat",
        FrequencyTrend::Mixed => "mixed",
    }
}

fn ordering_suite(a: &VerifyArgs, fit: &SpectrumFit<f64>) -> Result<(bool, serde_json::Value)> {
    let schedule = build_schedule(fit, a.height, a.width, a.steps)?;
    let expected = if fit.m > 0.0 {
        FrequencyTrend::Increasing
    } else if fit.m < 0.0 {
        FrequencyTrend::Decreasing
    } else {
        FrequencyTrend::Flat
    };
    println!("expected psi trend along frequency: {}", trend_name(expected));
    println!("{:>6} {:>12}  result", "t", "trend");
    let mut all = true;
    let mut rows = Vec::new();
    for t in 1..a.steps {
        let trend = frequency_trend(&schedule, t)?;
        let ok = trend == expected;
        println!("{:>6} {:>12}  {}", t, trend_name(trend), if ok { "PASS" } else { "FAIL" });
        all &= ok;
        rows.push(json!({ "t": t, "trend": trend }));
    }
    Ok((all, json!({ "expected": expected, "steps": rows })))
}

fn lengths_suite(a: &VerifyArgs, fit: &SpectrumFit<f64>) -> Result<(bool, serde_json::Value)> {
    let rows = compare_path_lengths(
        fit,
        a.height,
        a.width,
        &[ScheduleCurve::Linear, ScheduleCurve::Cosine],
        a.n_steps,
    )?;
    println!("{:<12} {:>14}", "curve", "fisher length");
    for r in &rows {
        println!("{:<12} {:>14.6}", r.curve, r.length);
    }
    let pass = rows[1..].iter().all(|r| rows[0].length < r.length);
    Ok((pass, json!(rows)))
}

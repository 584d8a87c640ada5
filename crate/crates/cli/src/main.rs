use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use znsim::harness::{run_preset, write_trace_csv, PresetError, RunReport, PRESETS};
use znsim::perf::{fit_occupancy_model, read_samples, FitError, ProfileError};
use znsim::{run, DeviceProfile, JobSpec, SimError};

#[derive(Parser)]
#[command(name = "znsim", version, about = "Discrete-event simulator for zoned-namespace SSDs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a job spec against a device profile.
    Run {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write every completion to trace.csv.
        #[arg(long)]
        trace_csv: bool,
    },
    /// Fit a piecewise-linear occupancy model to (occupancy, latency_ms) samples.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        segments: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a canned experiment and check its assertions.
    Preset {
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Profile to run against; the built-in zn540 profile by default.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    ListPresets,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn other(message: impl ToString) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::validation(e)
    }
}

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::Io { .. } => Failure::other(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        Failure::validation(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::other(format!("{}: {e}", dir.display())))
}

fn load_profile(path: &Path) -> Result<DeviceProfile, Failure> {
    let profile = DeviceProfile::load(path)?;
    for w in profile.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(profile)
}

fn cmd_run(job: &Path, profile: &Path, seed: u64, out: &Path, trace: bool) -> Result<(), Failure> {
    let profile = load_profile(profile)?;
    let spec = JobSpec::parse(&read(job)?).map_err(|e| Failure::validation(format!("{}: {e}", job.display())))?;
    let output = run(&profile, &spec, seed)?;
    let report = RunReport::new(&profile, &spec, seed, &output);
    create_dir(out)?;
    write(&out.join("report.json"), &report.to_json())?;
    if trace {
        let path = out.join("trace.csv");
        let file = File::create(&path).map_err(|e| Failure::other(format!("{}: {e}", path.display())))?;
        write_trace_csv(&output.trace, BufWriter::new(file)).map_err(Failure::other)?;
    }
    let errors: u64 = report.ops.values().map(|s| s.count - s.ok).sum();
    eprintln!(
        "{} completions ({errors} errors) in {:.6} virtual s; report in {}",
        report.completions,
        report.duration_virtual_s,
        out.display()
    );
    Ok(())
}

fn cmd_fit(samples: &Path, segments: usize, out: &Path) -> Result<(), Failure> {
    let file = File::open(samples).map_err(|e| Failure::other(format!("{}: {e}", samples.display())))?;
    let samples = read_samples(file)?;
    let fit = fit_occupancy_model(&samples, segments)?;
    let json = serde_json::to_string_pretty(&fit).map_err(Failure::other)?;
    write(out, &(json + "\n"))?;
    eprintln!("rms residual {} ms over {} samples", fit.rms_residual_ms, samples.len());
    Ok(())
}

fn cmd_preset(name: &str, out: &Path, profile: Option<&Path>) -> Result<(), Failure> {
    let profile = match profile {
        Some(p) => load_profile(p)?,
        None => DeviceProfile::zn540(),
    };
    let outcome = run_preset(name, &profile).map_err(|e| match e {
        PresetError::UnknownPreset(_) => Failure::validation(e),
        PresetError::Sim(e) => Failure::from(e),
    })?;
    create_dir(out)?;
    for r in &outcome.runs {
        let dir = out.join(&r.label);
        create_dir(&dir)?;
        write(&dir.join("report.json"), &r.report.to_json())?;
        write(&dir.join("job.json"), &r.spec.to_json())?;
    }
    let summary = serde_json::json!({
        "name": outcome.name,
        "description": outcome.description,
        "passed": outcome.passed(),
        "table": outcome.table,
        "assertions": outcome.assertions,
    });
    write(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).map_err(Failure::other)? + "\n"))?;
    write(&out.join("table.txt"), &(outcome.table.render() + "\n"))?;

    println!("{}: {}\n", outcome.name, outcome.description);
    println!("{}\n", outcome.table.render());
    for a in &outcome.assertions {
        println!("{}", a.line());
    }
    let failed = outcome.assertions.iter().filter(|a| !a.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: 3,
            message: format!("{failed} of {} assertions failed", outcome.assertions.len()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { job, profile, seed, out, trace_csv } => cmd_run(job, profile, *seed, out, *trace_csv),
        Command::Fit { samples, segments, out } => cmd_fit(samples, *segments, out),
        Command::Preset { name, out, profile } => cmd_preset(name, out, profile.as_deref()),
        Command::ListPresets => {
            for (name, description) in PRESETS {
                println!("{name:<22} {description}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ris_d2d::experiment::{
    builtin, builtin_names, parse_override, run_experiment_until, write_csv, ExperimentSpec, RunMetadata,
};

#[derive(Parser)]
#[command(name = "ris-d2d", version, about = "Sum-rate sweeps for RIS-aided D2D links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a spec file or a builtin experiment and write CSV.
    Run {
        /// Path to a TOML spec, or the name of a builtin.
        target: String,
        #[command(flatten)]
        overrides: Overrides,
        /// CSV output path (metadata goes next to it as .meta.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the builtin experiment names.
    ListBuiltins,
    /// Parse and check a spec without running it.
    Validate {
        spec: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per cell; 0 disables Monte-Carlo.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Override any spec key, e.g. --set scenario.k=4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(target: &str) -> anyhow::Result<ExperimentSpec> {
    let path = Path::new(target);
    if path.exists() {
        return ExperimentSpec::from_file(path).with_context(|| format!("reading {}", path.display()));
    }
    if builtin_names().contains(&target) {
        return Ok(builtin(target)?);
    }
    bail!(
        "`{target}` is neither a file nor a builtin (builtins: {})",
        builtin_names().join(", ")
    )
}

fn apply_overrides(spec: &mut ExperimentSpec, o: &Overrides) -> anyhow::Result<()> {
    for s in &o.set {
        let (key, value) = parse_override(s)?;
        spec.apply(&key, &value)?;
    }
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    if let Some(t) = o.trials {
        spec.mc.enabled = t > 0;
        if t > 0 {
            spec.mc.trials = t;
        }
    }
    if let Some(w) = o.workers {
        spec.workers = w;
    }
    spec.validate()?;
    Ok(())
}

fn metadata_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn run(target: &str, overrides: &Overrides, out: Option<PathBuf>) -> anyhow::Result<bool> {
    let mut spec = load(target)?;
    apply_overrides(&mut spec, overrides)?;
    let csv_path = out
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", spec.name)));

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || {
        eprintln!("interrupt: finishing running cells, skipping the rest");
        flag.store(true, Ordering::SeqCst);
    })
    .context("installing the interrupt handler")?;

    eprintln!(
        "running `{}`: {} sweep values x {} curves",
        spec.name,
        spec.sweep.values.len(),
        spec.curves.len()
    );
    let outcome = run_experiment_until(&spec, &stop)?;

    let file = File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_csv(BufWriter::new(file), spec.sweep.variable, &outcome.rows)?;
    let meta = metadata_path(&csv_path);
    RunMetadata::new(&spec, &outcome).write(BufWriter::new(File::create(&meta)?))?;
    eprintln!(
        "wrote {} rows to {} ({} ms)",
        outcome.rows.len(),
        csv_path.display(),
        outcome.elapsed_ms
    );
    Ok(!outcome.interrupted)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { target, overrides, out } => run(&target, &overrides, out),
        Command::ListBuiltins => {
            for name in builtin_names() {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Validate { spec, overrides } => ExperimentSpec::from_file(&spec)
            .map_err(anyhow::Error::from)
            .and_then(|mut s| {
                apply_overrides(&mut s, &overrides)?;
                println!(
                    "ok: `{}` sweeps {} over {} values with {} curves",
                    s.name,
                    s.sweep.variable,
                    s.sweep.values.len(),
                    s.curves.len()
                );
                Ok(true)
            }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(130),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

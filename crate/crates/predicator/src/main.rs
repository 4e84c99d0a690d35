//! Command-line front end for the if-conversion autotuner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use predicator::features::features_csv;
use predicator::ifconv::{apply_bitmask, module_candidates, Bitmask};
use predicator::ir::{parse_inputs, parse_module, validate_module, Module};
use predicator::neat::{parse_neat_config, NeatConfig};
use predicator::sim::{parse_machine_model, simulate, MachineModel};
use predicator::tuner::{
    exhaustive_search, oracle_summary, oracle_table, tune, write_bundle, Program, ReportFormat,
    TuneError, Workload, EXHAUSTIVE_LIMIT,
};

#[derive(Parser)]
#[command(
    name = "predicator",
    version,
    about = "If-conversion autotuning: candidate discovery, feature extraction, \
             cycle-level simulation, and evolved convert/keep policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Tsv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> ReportFormat {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Tsv => ReportFormat::Tsv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a module; prints diagnostics, exits 0 iff clean
    Check { ir: PathBuf },
    /// List if-conversion candidates as CSV
    Candidates { ir: PathBuf },
    /// Emit the per-candidate feature matrix as CSV
    Features {
        ir: PathBuf,
        /// Machine model file (defaults apply when omitted)
        #[arg(long)]
        machine: Option<PathBuf>,
    },
    /// Apply an explicit bitmask; prints the converted module
    Convert {
        ir: PathBuf,
        /// Convert/keep bits, e.g. 1011, one per candidate
        #[arg(long)]
        bitmask: String,
        /// Write the converted module here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-candidate apply report CSV here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interpret + cost a workload; prints cycle metrics as CSV
    Simulate {
        ir: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Entry function (defaults to a module's only function)
        #[arg(long)]
        entry: Option<String>,
    },
    /// Evolve a convert/keep policy network; writes a result bundle
    Tune {
        ir: PathBuf,
        /// One or more workload input files
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Search configuration file (defaults apply when omitted)
        #[arg(long)]
        neat: Option<PathBuf>,
        /// RNG seed; falls back to $PREDICATOR_SEED, then 0
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the result bundle
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Enumerate every bitmask and report the optimum
    Exhaustive {
        ir: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long)]
        entry: Option<String>,
        /// Refuse when the candidate count exceeds this
        #[arg(long, default_value_t = EXHAUSTIVE_LIMIT)]
        limit: usize,
        /// Also write table + summary files into this directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Re-emit a tune bundle's tables in csv or tsv
    Report {
        /// A directory produced by `tune`
        bundle: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Destination directory (defaults to the bundle itself)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    /// Bad input: wrong flags, missing files, invalid modules or workloads.
    User(String),
    /// A broken internal invariant; not the user's fault.
    Internal(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Ifconv(predicator::ifconv::IfconvError::LegalityViolated { .. }) => {
                CliError::Internal(e.to_string())
            }
            other => CliError::User(other.to_string()),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

fn load_module(path: &Path) -> Result<Module, CliError> {
    let text = read_to_string(path)?;
    let module =
        parse_module(&text).map_err(|e| CliError::User(format!("{}:{e}", path.display())))?;
    let diags = validate_module(&module);
    if !diags.is_empty() {
        let listing: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(CliError::User(format!(
            "{} failed validation:\n{}",
            path.display(),
            listing.join("\n")
        )));
    }
    Ok(module)
}

fn load_machine(path: &Option<PathBuf>) -> Result<MachineModel, CliError> {
    match path {
        None => Ok(MachineModel::default()),
        Some(p) => {
            let text = read_to_string(p)?;
            parse_machine_model(&text).map_err(|e| CliError::User(format!("{}: {e}", p.display())))
        }
    }
}

fn load_neat(path: &Option<PathBuf>) -> Result<NeatConfig, CliError> {
    match path {
        None => Ok(NeatConfig::default()),
        Some(p) => {
            let text = read_to_string(p)?;
            parse_neat_config(&text).map_err(|e| CliError::User(format!("{}: {e}", p.display())))
        }
    }
}

fn pick_entry(module: &Module, entry: &Option<String>) -> Result<String, CliError> {
    match entry {
        Some(name) => {
            if module.function(name).is_none() {
                return Err(CliError::User(format!("unknown entry function '@{name}'")));
            }
            Ok(name.clone())
        }
        None => {
            if module.functions.len() == 1 {
                Ok(module.functions[0].name.clone())
            } else {
                Err(CliError::User(
                    "module has multiple functions; pick one with --entry".to_string(),
                ))
            }
        }
    }
}

fn load_workloads(paths: &[PathBuf]) -> Result<Vec<Workload>, CliError> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = read_to_string(p)?;
        let inputs =
            parse_inputs(&text).map_err(|e| CliError::User(format!("{}: {e}", p.display())))?;
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "workload".to_string());
        out.push(Workload::new(&name, inputs));
    }
    Ok(out)
}

fn seed_from(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("PREDICATOR_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::User(format!("PREDICATOR_SEED is not an integer: '{v}'"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check { ir } => {
            let text = read_to_string(&ir)?;
            let module =
                parse_module(&text).map_err(|e| CliError::User(format!("{}:{e}", ir.display())))?;
            let diags = validate_module(&module);
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                Ok(())
            } else {
                Err(CliError::User(format!("{} diagnostic(s)", diags.len())))
            }
        }
        Command::Candidates { ir } => {
            let module = load_module(&ir)?;
            let candidates =
                module_candidates(&module).map_err(|e| CliError::User(e.to_string()))?;
            println!("index,branch_site,shape,head,true_side,false_side,join");
            for c in &candidates {
                println!(
                    "{},b{},{},{},{},{},{}",
                    c.index,
                    c.branch_site,
                    c.shape,
                    c.head,
                    c.true_side.as_deref().unwrap_or(""),
                    c.false_side.as_deref().unwrap_or(""),
                    c.join
                );
            }
            Ok(())
        }
        Command::Features { ir, machine } => {
            let module = load_module(&ir)?;
            let mm = load_machine(&machine)?;
            let entry = module
                .functions
                .first()
                .map(|f| f.name.clone())
                .ok_or_else(|| CliError::User("module has no functions".to_string()))?;
            let program = Program::analyze(module, &entry, &mm)?;
            print!("{}", features_csv(&program.features));
            Ok(())
        }
        Command::Convert {
            ir,
            bitmask,
            out,
            report,
        } => {
            let module = load_module(&ir)?;
            let mask: Bitmask = bitmask.parse().map_err(|e: String| CliError::User(e))?;
            let (converted, apply_report) =
                apply_bitmask(&module, &mask).map_err(|e| CliError::User(e.to_string()))?;
            match out {
                Some(path) => fs::write(path, converted.to_string())?,
                None => print!("{converted}"),
            }
            if let Some(path) = report {
                fs::write(path, apply_report.to_csv())?;
            }
            Ok(())
        }
        Command::Simulate {
            ir,
            inputs,
            machine,
            entry,
        } => {
            let module = load_module(&ir)?;
            let mm = load_machine(&machine)?;
            let entry = pick_entry(&module, &entry)?;
            let workloads = load_workloads(&[inputs])?;
            let result = simulate(&module, &entry, &workloads[0].inputs, &mm)
                .map_err(|e| CliError::User(e.to_string()))?;
            print!("{}", result.to_csv());
            Ok(())
        }
        Command::Tune {
            ir,
            inputs,
            machine,
            neat,
            seed,
            out,
            entry,
            format,
        } => {
            let module = load_module(&ir)?;
            let mm = load_machine(&machine)?;
            let ncfg = load_neat(&neat)?;
            let entry = pick_entry(&module, &entry)?;
            let workloads = load_workloads(&inputs)?;
            let seed = seed_from(seed)?;
            let program = Program::analyze(module, &entry, &mm)?;
            let result = tune(&program, &workloads, &ncfg, &mm, seed)?;
            write_bundle(&result, &ncfg, &out, format.into())?;
            eprintln!(
                "best speedup {:.6} with bitmask {} -> {}",
                result.best_fitness,
                result.best_bitmask,
                out.display()
            );
            Ok(())
        }
        Command::Exhaustive {
            ir,
            inputs,
            machine,
            entry,
            limit,
            out,
            format,
        } => {
            let module = load_module(&ir)?;
            let mm = load_machine(&machine)?;
            let entry = pick_entry(&module, &entry)?;
            let workloads = load_workloads(&inputs)?;
            let program = Program::analyze(module, &entry, &mm)?;
            let oracle = exhaustive_search(&program, &workloads, &mm, limit)?;
            let fmt: ReportFormat = format.into();
            if oracle.table.is_empty() {
                print!("{}", oracle_summary(&oracle, fmt));
            } else {
                print!("{}", oracle_table(&oracle, fmt));
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let ext = fmt.extension();
                fs::write(dir.join(format!("table.{ext}")), oracle_table(&oracle, fmt))?;
                fs::write(
                    dir.join(format!("summary.{ext}")),
                    oracle_summary(&oracle, fmt),
                )?;
            }
            Ok(())
        }
        Command::Report {
            bundle,
            format,
            out,
        } => reemit_bundle(&bundle, format.into(), out),
    }
}

/// Convert a bundle's tabular files between separators and copy the rest.
fn reemit_bundle(
    bundle: &Path,
    format: ReportFormat,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let dest = out.unwrap_or_else(|| bundle.to_path_buf());
    fs::create_dir_all(&dest)?;
    let mut found_any = false;
    for table in ["summary", "history", "table"] {
        for (src_fmt, src_ext) in [(ReportFormat::Csv, "csv"), (ReportFormat::Tsv, "tsv")] {
            let src = bundle.join(format!("{table}.{src_ext}"));
            if !src.exists() {
                continue;
            }
            found_any = true;
            let text = read_to_string(&src)?;
            let converted: String = text
                .lines()
                .map(|line| {
                    let fields: Vec<&str> = line.split(src_fmt.sep()).collect();
                    fields.join(&format.sep().to_string())
                })
                .collect::<Vec<_>>()
                .join("\n")
                + "\n";
            fs::write(
                dest.join(format!("{table}.{}", format.extension())),
                converted,
            )?;
            break; // prefer the csv source when both exist
        }
    }
    if !found_any {
        return Err(CliError::User(format!(
            "{} does not look like a result bundle (no summary/history tables)",
            bundle.display()
        )));
    }
    for aux in ["genome.txt", "bitmask.txt", "converted.ir"] {
        let src = bundle.join(aux);
        if src.exists() && dest != *bundle {
            fs::copy(&src, dest.join(aux))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage problems are user errors (exit 1); --help/--version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::User(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

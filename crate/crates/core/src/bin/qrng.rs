use clap::{Parser, Subcommand};
use qrng_core::pipeline::{self, PipelineConfig, Preset, EXTRACTED_BITS_FILE, RAW_BITS_FILE};
use qrng_core::Error;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "qrng", version, about = "Entangled-photon QRNG simulation and certification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config (JSON). Defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in operating point: dataset_A, dataset_B or classical_source.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Overrides global_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the statistical suite threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Overrides n_bits for generate and run-all.
    #[arg(long, global = true)]
    n_bits: Option<usize>,

    /// Input bit file (its `.json` sidecar must sit next to it).
    #[arg(long, global = true)]
    bits: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan and fit the HOM dip.
    SimulateHom,
    /// Generate raw heralded bits.
    Generate,
    /// Direct CHSH, tomography and min-entropy.
    Certify,
    /// Toeplitz-extract a raw bit file.
    Extract,
    /// Run the statistical test suite on a bit file.
    Test,
    /// Run every stage and write a consolidated report.
    RunAll,
    /// Print the resolved config.
    PrintConfig,
}

fn resolve_config(cli: &Cli) -> qrng_core::Result<PipelineConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => return Err(Error::validation("--config and --preset are mutually exclusive")),
        (Some(path), None) => PipelineConfig::load(path)?,
        (None, Some(name)) => name.parse::<Preset>()?.config(),
        (None, None) => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.global_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = cli.threshold {
        cfg.suite.threshold = t;
    }
    if let Some(n) = cli.n_bits {
        cfg.n_bits = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<(), (i32, String)> {
    let fail = |e: Error| (pipeline::exit_code(&e), e.to_string());
    let cfg = resolve_config(cli).map_err(fail)?;
    let out = cfg.output_dir.clone();
    let bits_or = |default: &str| cli.bits.clone().unwrap_or_else(|| out.join(default));
    match cli.command {
        Command::PrintConfig => println!("{}", cfg.to_json()),
        Command::SimulateHom => {
            let r = pipeline::cmd_simulate_hom(&cfg, &out).map_err(fail)?;
            print_json(&json!({"visibility": r.visibility, "stderr": r.stderr}));
        }
        Command::Generate => {
            let side = pipeline::cmd_generate(&cfg, cfg.n_bits, &out).map_err(fail)?;
            print_json(&side);
        }
        Command::Certify => {
            let r = pipeline::cmd_certify(&cfg, cli.bits.as_deref(), &out).map_err(fail)?;
            print_json(&json!({
                "verdict": r.verdict,
                "chsh_direct": r.chsh_direct,
                "chsh_rho": r.chsh_rho,
                "min_entropy": r.min_entropy,
                "stages": r.stages,
            }));
        }
        Command::Extract => {
            let side = pipeline::cmd_extract(&cfg, &bits_or(RAW_BITS_FILE), &out).map_err(fail)?;
            print_json(&side);
        }
        Command::Test => {
            let r = pipeline::cmd_test(&bits_or(EXTRACTED_BITS_FILE), cfg.suite.threshold, &out).map_err(fail)?;
            print!("{}", r.to_csv());
            if !r.all_passed {
                eprintln!("failed tests: {}", r.failed().join(", "));
            }
        }
        Command::RunAll => {
            let r = pipeline::cmd_run_all(&cfg).map_err(|f| (pipeline::exit_code(&f.error).max(2), f.to_string()))?;
            print_json(&json!({
                "hom_visibility": r.hom.visibility,
                "chsh_direct": r.chsh_direct.as_ref().map(|c| c.s),
                "chsh_mle": r.chsh_rho.mle.as_ref().map(|c| c.s),
                "chsh_bayes": r.chsh_rho.bayes.as_ref().map(|c| json!({"mean": c.mean, "std": c.std})),
                "verdict": r.verdict,
                "min_entropy_raw": r.min_entropy_raw.as_ref().map(|m| m.h_inf),
                "suite_all_passed": r.suite.all_passed,
                "report": out.join(pipeline::RUN_REPORT_FILE),
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}

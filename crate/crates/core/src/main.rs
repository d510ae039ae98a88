use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gcl::commands::{cmd_eval, cmd_synth, cmd_train, cmd_verify};
use gcl::config::RunConfig;
use gcl::io::read_text;
use gcl::train::Mode;
use gcl::Result;

#[derive(Parser)]
#[command(name = "gcl", version, about = "Generalized contrastive loss: synthetic speaker verification runs")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `train.mode`.
    #[arg(long, global = true, value_parser = ["supervised", "semi", "unsupervised"])]
    mode: Option<String>,
    /// Overrides `out`, the run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration (defaults plus overrides) and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and trial list.
    Synth,
    /// Train an encoder; writes the checkpoint and metrics log.
    Train,
    /// Score the trial list with the checkpoint.
    Eval,
    /// Run the oracle, reduction, gradient and EER suites.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode.as_deref().and_then(Mode::from_name) {
        cfg.train.mode = mode;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load(&cli)?;
    if cli.print_defaults {
        print!("{}", cfg.to_text());
        return Ok(true);
    }
    match cli.command {
        None => {
            eprintln!("no command given; see --help");
            Ok(false)
        }
        Some(Command::Synth) => {
            let s = cmd_synth(&cfg)?;
            println!("wrote {} utterances and {} trials to {}", s.utterances, s.trials, cfg.out.display());
            Ok(true)
        }
        Some(Command::Train) => {
            let s = cmd_train(&cfg)?;
            print!("trained {} steps ({})", s.steps, cfg.run_id());
            if let Some(l) = s.final_loss {
                print!(", final loss {l:.6}");
            }
            if let Some(e) = s.final_eer {
                print!(", last EER {:.2}%", 100.0 * e);
            }
            println!();
            Ok(true)
        }
        Some(Command::Eval) => {
            let r = cmd_eval(&cfg)?;
            println!(
                "EER {:.4}% at threshold {:.6} ({} target, {} non-target trials)",
                100.0 * r.eer,
                r.threshold,
                r.n_target,
                r.n_nontarget
            );
            Ok(true)
        }
        Some(Command::Verify) => {
            let (results, ok) = cmd_verify(cfg.seed);
            for r in &results {
                println!("{r}");
            }
            println!("{}", if ok { "all suites passed" } else { "verification FAILED" });
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

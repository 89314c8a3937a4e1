//! `coevo`: command-line front end.
//!
//! Settings resolve in three layers: built-in defaults, then `--config`
//! (TOML with dotted keys), then flags. `--set key=value` is applied before
//! the named flags, so `--seed 3 --set seed=4` ends with seed 3.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coevo_core::commands;
use coevo_core::config::RunConfig;
use coevo_core::synthdata::Split;

#[derive(Parser, Debug)]
#[command(name = "coevo", version, about = "Co-evolving image/report pseudo-label distillation on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic paired dataset.
    GenData(RunArgs),
    /// Train teachers and co-evolve students; writes checkpoints and metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Disable SA-NMS, RPDLR and co-evolution (plain distillation).
        #[arg(long)]
        baseline_tsd: bool,
    },
    /// Run the four-arm ablation over paired seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Number of paired seeds.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "holdout")]
        split: String,
    },
    /// Print generation curves of a finished run.
    Report {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config file with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set pipeline.student_iters=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long, overrides_with = "no_sa_nms")]
    sa_nms: bool,
    #[arg(long)]
    no_sa_nms: bool,
    #[arg(long, overrides_with = "no_rpdlr")]
    rpdlr: bool,
    #[arg(long)]
    no_rpdlr: bool,
    #[arg(long, overrides_with = "no_coevolve")]
    coevolve: bool,
    #[arg(long)]
    no_coevolve: bool,
    /// Dataset file to read instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn toggle(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        for s in &self.sets {
            cfg = cfg.set(s).with_context(|| format!("--set {s}"))?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(g) = self.generations {
            cfg.pipeline.generations = g;
            cfg.pipeline.report_generations = g;
        }
        if let Some(on) = toggle(self.sa_nms, self.no_sa_nms) {
            cfg.pipeline.sa_nms = on;
        }
        if let Some(on) = toggle(self.rpdlr, self.no_rpdlr) {
            cfg.pipeline.rpdlr = on;
        }
        if let Some(on) = toggle(self.coevolve, self.no_coevolve) {
            let g = cfg.pipeline.generations;
            cfg.pipeline = cfg.pipeline.with_coevolve(on, g);
        }
        if let Some(d) = &self.data {
            cfg.dataset_path = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let cfg = args.resolve()?;
            let m = commands::gen_data(&cfg)?;
            println!(
                "wrote {} samples to {} (sha256 {})",
                m.records,
                cfg.out.join(commands::DATASET_FILE).display(),
                m.digest
            );
        }
        Command::Train { run, baseline_tsd } => {
            let mut cfg = run.resolve()?;
            if baseline_tsd {
                cfg.pipeline = cfg.pipeline.baseline();
            }
            let m = commands::train(&cfg)?;
            println!("mode: {}", m.mode);
            print!("{}", commands::report(&cfg.out)?);
        }
        Command::Ablate { run, repeats } => {
            let mut cfg = run.resolve()?;
            if let Some(r) = repeats {
                cfg.ablation_repeats = r;
            }
            let table = commands::ablate(&cfg)?;
            print!("{}", table.render());
        }
        Command::Eval { run, checkpoint, split } => {
            let cfg = run.resolve()?;
            let split: Split = split.parse()?;
            let out = commands::eval(&cfg, &checkpoint, split)?;
            let path = cfg.out.join("eval.json");
            coevo_core::persistence::write_json(&path, &out)?;
            print!("{}", commands::render_eval(&out));
        }
        Command::Report { run } => {
            let cfg = run.resolve()?;
            print!("{}", commands::report(&cfg.out)?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        let mut full = vec!["coevo", "train"];
        full.extend_from_slice(args);
        match Cli::parse_from(full).command {
            Command::Train { run, .. } => run.resolve().unwrap(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_sets() {
        let c = parse(&["--set", "seed=4", "--seed", "3"]);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn toggles() {
        let c = parse(&["--no-sa-nms", "--no-rpdlr"]);
        assert!(!c.pipeline.sa_nms && !c.pipeline.rpdlr);
        let c = parse(&["--no-coevolve"]);
        assert_eq!(c.pipeline.generations, 1);
        assert!(!c.pipeline.apclr);
        let c = parse(&["--generations", "3"]);
        assert_eq!(c.pipeline.generations, 3);
    }

    #[test]
    fn rejects_bad_set() {
        let cli = Cli::parse_from(["coevo", "train", "--set", "nope=1"]);
        let Command::Train { run, .. } = cli.command else { unreachable!() };
        assert!(run.resolve().is_err());
    }
}

use clap::{Args, Parser, Subcommand};
use lcs_cli::pipeline::{self, Resolved};
use lcs_cli::{load, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lcs", version, about = "Variational LCS extraction from 2-D velocity fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set seeding.radius=0.5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Built-in analytic field (duffing, saddle, uniform, zero).
    #[arg(long, global = true)]
    field: Option<String>,
    /// Gridded velocity file.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    t1: Option<f64>,
    #[arg(long, global = true)]
    t2: Option<f64>,
    /// LCS output time.
    #[arg(long, global = true)]
    t: Option<f64>,
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Random seed for the turbulence generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Flow map, deformation gradients, singular values and FTLE on the seed grid.
    Ftle,
    /// Seed points from filtered FTLE extrema.
    Seeds,
    /// Attracting and repelling LCS at the output time.
    Extract,
    /// Advected stretch lines against shrink lines through the same seeds.
    Compare,
    /// Generate a 2-D turbulence velocity file.
    Turbulence,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("{key}={v}"));
            }
        };
        push("run.output_dir", self.output_dir.as_ref().map(|p| quoted(&p.display().to_string())));
        push("field.builtin", self.field.as_deref().map(quoted));
        push("field.path", self.data.as_ref().map(|p| quoted(&p.display().to_string())));
        push("time.t1", self.t1.map(float));
        push("time.t2", self.t2.map(float));
        push("time.t", self.t.map(float));
        push("seeding.radius", self.radius.map(float));
        push("turbulence.seed", self.seed.map(|s| s.to_string()));
        o
    }
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn float(x: f64) -> String {
    toml::Value::Float(x).to_string()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let lc = load(cli.common.config.as_deref(), &cli.common.overrides())?;
    if let Command::Turbulence = cli.command {
        let path = pipeline::cmd_turbulence(&lc)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let res: Resolved = pipeline::resolve(&lc)?;
    match cli.command {
        Command::Ftle => {
            let out = pipeline::cmd_ftle(&res)?;
            let masked = out.svd.mask.iter().filter(|m| **m).count();
            println!("ftle: {} nodes ({masked} masked) -> {}", res.grid.len(), res.output_dir.display());
        }
        Command::Seeds => {
            let out = pipeline::cmd_seeds(&res)?;
            println!(
                "seeds: {} attracting, {} repelling -> {}",
                out.seeds.attracting.len(),
                out.seeds.repelling.len(),
                res.output_dir.display()
            );
        }
        Command::Extract => {
            let out = pipeline::cmd_extract(&res)?;
            println!(
                "extract: {} attracting, {} repelling curves at t = {} -> {}",
                out.attracting.len(),
                out.repelling.len(),
                res.t,
                res.output_dir.display()
            );
        }
        Command::Compare => {
            let report = pipeline::cmd_compare(&res)?;
            println!(
                "compare: {} seeds at t = {}, {} beyond 10 delta_max -> {}",
                report.seeds.len(),
                report.time,
                report.seeds_above_10_delta,
                res.output_dir.display()
            );
        }
        Command::Turbulence => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lcs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

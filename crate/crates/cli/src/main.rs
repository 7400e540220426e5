mod commands;
mod config;
mod error;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use distmarch::samplers::SamplerKind;

use commands::sample::SampleFlags;
use commands::Ctx;
use config::Overrides;
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "distmarch", version, about = "Train distance fields and sample by marching along them")]
struct Cli {
    /// JSON config file for the subcommand; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp comment from SVG files.
    #[arg(long, global = true)]
    deterministic_svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a field to a target point cloud.
    Train,
    /// Move source points with a trained field.
    Sample {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Follow the marcher with HMC refinement.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        then_hmc: Option<bool>,
    },
    /// Closed-form minimizers of the training objectives.
    Oracle,
    /// Distances between generated and reference clouds.
    Metrics,
    /// Target coverage of interpolated hub samples across time.
    Coverage,
    /// Relative error of the learned distance on held-out pairs.
    Mape,
    /// Model-free invariant and oracle checks.
    Verify,
    /// Step-size sweep for oracle minimizers or a trained sampler.
    Sweep,
    /// Level sets, trajectories and curves as SVG.
    Plot,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    #[value(alias = "sphere_tracing")]
    SphereTracing,
    #[value(alias = "gradient_descent")]
    GradientDescent,
    #[value(alias = "adaptive_gd")]
    AdaptiveGd,
    Ula,
    Hmc,
}

impl From<Kind> for SamplerKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::SphereTracing => SamplerKind::SphereTracing,
            Kind::GradientDescent => SamplerKind::GradientDescent,
            Kind::AdaptiveGd => SamplerKind::AdaptiveGd,
            Kind::Ula => SamplerKind::Ula,
            Kind::Hmc => SamplerKind::Hmc,
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let ctx = Ctx {
        config: cli.config,
        overrides: Overrides { seed: cli.seed, out: cli.out },
        deterministic_svg: cli.deterministic_svg,
    };
    match cli.command {
        Command::Train => commands::train::run(&ctx),
        Command::Sample { kind, then_hmc } => commands::sample::run(&ctx, SampleFlags { kind: kind.map(Into::into), then_hmc }),
        Command::Oracle => commands::oracle::run(&ctx),
        Command::Metrics => commands::metrics::run(&ctx),
        Command::Coverage => commands::coverage::run(&ctx),
        Command::Mape => commands::mape::run(&ctx),
        Command::Verify => commands::verify::run(&ctx),
        Command::Sweep => commands::sweep::run(&ctx),
        Command::Plot => commands::plot::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;

use distmarch::data::{CouplingStrategy, PairBatch, PairSampler, TimeDistribution};
use distmarch::metrics::distance_mape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{load_model, num, Csv, Ctx, Outputs};
use crate::config::{CloudSpec, SourceSpec};
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapeFile {
    /// Defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Held-out targets the validation pairs are drawn from.
    pub target: CloudSpec,
    pub source: SourceSpec,
    pub coupling: CouplingStrategy,
    pub t_dist: TimeDistribution,
    pub batches: usize,
    pub batch_size: usize,
    pub c0: f64,
    pub n_bins: usize,
}

impl Default for MapeFile {
    fn default() -> Self {
        Self {
            checkpoint: None,
            target: CloudSpec::TwoMoons { n: 10_000, noise: distmarch::data::TOY_MOONS_NOISE, seed: 77 },
            source: SourceSpec::default(),
            coupling: CouplingStrategy::MinibatchClosestWithoutReplacement,
            t_dist: TimeDistribution::default(),
            batches: 8,
            batch_size: 512,
            c0: 0.01,
            n_bins: 10,
        }
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let loaded = ctx.load::<MapeFile>("runs/train")?;
    let file = &loaded.body;
    if !(file.c0 > 0.0) {
        return Err(CliError::config("c0", "must be positive"));
    }
    if file.batches == 0 || file.batch_size == 0 {
        return Err(CliError::config("batches", "batches and batch_size must be at least 1"));
    }
    let ckpt = file.checkpoint.clone().unwrap_or_else(|| loaded.out.join("checkpoint.json"));
    let model = load_model(&ckpt, "checkpoint")?;
    let target = file.target.build("target")?;
    let source = file.source.build("source")?;
    let sampler = PairSampler::new(&target, file.t_dist, file.coupling).with_source(source);
    sampler.validate().context("target")?;
    let mut rng = ChaCha8Rng::seed_from_u64(loaded.seed);
    let mut pairs = Vec::new();
    for _ in 0..file.batches {
        pairs.extend(sampler.sample(file.batch_size, &mut rng).context("pairs")?.pairs());
    }
    let batch = PairBatch::from_pairs(&pairs).context("pairs")?;
    let report = distance_mape(&model, &batch, file.c0, file.n_bins).context("mape")?;

    let mut csv = Csv::new(&["bin_lo", "bin_hi", "count", "u_mape_mean", "u_mape_std", "step_mape_mean", "step_mape_std"]);
    for b in &report.bins {
        csv.row(&[num(b.lo), num(b.hi), b.count.to_string(), num(b.u_mean), num(b.u_std), num(b.step_mean), num(b.step_std)]);
    }
    let mut summary = Csv::new(&["pairs", "median_u_mape", "median_step_mape", "empty_bins"]);
    let empty: Vec<String> = report.empty_bins.iter().map(|b| b.to_string()).collect();
    summary.row(&[batch.len().to_string(), num(report.median_u), num(report.median_step), empty.join(";")]);
    eprintln!("median distance MAPE {:.2}%, step MAPE {:.2}%", report.median_u, report.median_step);
    let mut outputs = Outputs::new(&loaded.out);
    outputs.write("mape.csv", &csv.into_bytes())?;
    outputs.write("mape_summary.csv", &summary.into_bytes())?;
    outputs.finish("mape", &loaded)
}

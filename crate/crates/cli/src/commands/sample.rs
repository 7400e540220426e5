use std::path::PathBuf;

use distmarch::samplers::{final_cloud, run_chains, SamplerKind, SamplingPlan, Trajectory};
use serde::{Deserialize, Serialize};

use super::{coords, load_model, num, Csv, Ctx, Outputs};
use crate::config::CloudSpec;
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleFile {
    /// Defaults to `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub starts: CloudSpec,
    pub plan: SamplingPlan,
    /// Write full trajectories for this many leading chains.
    pub save_trajectories: usize,
}

impl Default for SampleFile {
    fn default() -> Self {
        Self {
            checkpoint: None,
            starts: CloudSpec::EightGaussians {
                n: 10_000,
                radius: distmarch::data::TOY_SOURCE_RADIUS,
                std: distmarch::data::TOY_SOURCE_STD,
                seed: 2,
            },
            plan: SamplingPlan::jump_then_hmc(),
            save_trajectories: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SampleFlags {
    pub kind: Option<SamplerKind>,
    pub then_hmc: Option<bool>,
}

pub fn run(ctx: &Ctx, flags: SampleFlags) -> CliResult<()> {
    let mut loaded = ctx.load::<SampleFile>("runs/train")?;
    if let Some(kind) = flags.kind {
        loaded.body.plan.sampler.kind = kind;
    }
    if let Some(then_hmc) = flags.then_hmc {
        loaded.body.plan.then_hmc = then_hmc;
    }
    loaded.body.plan.hmc.seed = loaded.seed;
    loaded.resolved["plan"] = serde_json::to_value(loaded.body.plan).expect("plan serializes");
    let file = &loaded.body;
    file.plan.sampler.validate().context("plan.sampler")?;
    file.plan.hmc.validate().context("plan.hmc")?;

    let ckpt = file.checkpoint.clone().unwrap_or_else(|| loaded.out.join("checkpoint.json"));
    let model = load_model(&ckpt, "checkpoint")?;
    let starts = file.starts.build("starts")?;
    if starts.dim() != model.input_dim() {
        return Err(CliError::config("starts", format!("dimension {} does not match the model ({})", starts.dim(), model.input_dim())));
    }
    let trajectories = run_chains(&model, &starts, &file.plan).context("sampler")?;
    let cloud = final_cloud(&trajectories, loaded.seed).context("sampler")?;

    let mut outputs = Outputs::new(&loaded.out);
    let mut samples = Vec::new();
    cloud.write_csv(&mut samples).context("samples")?;
    outputs.write("samples.csv", &samples)?;
    outputs.write("sample_summary.csv", &summary(&trajectories).into_bytes())?;
    if file.save_trajectories > 0 {
        outputs.write("trajectories.csv", &trajectory_csv(&trajectories[..file.save_trajectories.min(trajectories.len())]).into_bytes())?;
    }
    outputs.finish("sample", &loaded)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn summary(trajectories: &[Trajectory]) -> Csv {
    let mut csv = Csv::new(&["chains", "mean_steps", "mean_nfe", "accept_count", "stopped_early", "final_u_mean", "non_conservative_potential"]);
    csv.row(&[
        trajectories.len().to_string(),
        num(mean(trajectories.iter().map(|t| t.steps() as f64))),
        num(mean(trajectories.iter().map(|t| t.nfe as f64))),
        trajectories.iter().map(|t| t.accept_count).sum::<usize>().to_string(),
        trajectories.iter().filter(|t| t.stopped_early).count().to_string(),
        num(mean(trajectories.iter().filter_map(|t| t.u_values.last().copied()))),
        trajectories.iter().any(|t| t.non_conservative_potential).to_string(),
    ]);
    csv
}

pub fn trajectory_csv(trajectories: &[Trajectory]) -> Csv {
    let dim = trajectories.first().map_or(0, |t| t.final_state().len());
    let mut header = vec!["chain".to_string(), "step".to_string()];
    header.extend(coords("x", dim));
    header.push("u".into());
    let mut csv = Csv::with_header(header);
    for (c, t) in trajectories.iter().enumerate() {
        for (k, state) in t.states.iter().enumerate() {
            let mut row = vec![c.to_string(), k.to_string()];
            row.extend(state.iter().map(|v| num(*v)));
            row.push(t.u_values.get(k).map_or_else(String::new, |u| num(*u)));
            csv.row(&row);
        }
    }
    csv
}

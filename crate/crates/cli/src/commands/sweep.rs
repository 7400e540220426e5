use std::path::PathBuf;

use distmarch::metrics::{cloud_metrics, W2_EXACT_CAP};
use distmarch::oracles::{oracle_trajectory, MinimizerKind, OracleConfig, OracleTrajectory};
use distmarch::samplers::{final_cloud, run_chains, step_size_grid, SamplingPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{build_oracle, TargetSpec};
use super::{load_model, num, Csv, Ctx, Outputs};
use crate::config::{CloudSpec, MixtureRole, SourceSpec};
use crate::error::{CliError, CliResult, Context};
use crate::svg::line_chart;

/// Runs every step size in `{eta/2, eta, 2 eta, 4 eta}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepFile {
    /// Minimizer trajectories on an oracle, scored by final outlierness.
    Oracle {
        source: SourceSpec,
        target: TargetSpec,
        #[serde(default)]
        oracle: OracleConfig,
        starts: CloudSpec,
        eta: f64,
        steps: usize,
        kinds: Vec<MinimizerKind>,
        /// Final outlierness counted as in-distribution.
        threshold: f64,
    },
    /// A trained model's sampler, scored by cloud metrics.
    Model {
        checkpoint: Option<PathBuf>,
        starts: CloudSpec,
        reference: CloudSpec,
        plan: SamplingPlan,
        eta: f64,
    },
}

impl Default for SweepFile {
    fn default() -> Self {
        SweepFile::Oracle {
            source: SourceSpec::Mixture8d { role: MixtureRole::Source },
            target: TargetSpec::Mixture { mixture: SourceSpec::Mixture8d { role: MixtureRole::Target } },
            oracle: OracleConfig::default(),
            starts: CloudSpec::Mixture8d { role: MixtureRole::Source, n: 32, seed: 5 },
            eta: 0.25,
            steps: 10,
            kinds: vec![MinimizerKind::Osl, MinimizerKind::Rfm],
            threshold: 3.0,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.is_empty() {
        f64::NAN
    } else if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let mut loaded = ctx.load::<SweepFile>("runs/sweep")?;
    if let SweepFile::Oracle { oracle, .. } = &mut loaded.body {
        oracle.seed = loaded.seed;
    }
    loaded.resolved = {
        let mut v = serde_json::to_value(&loaded.body).expect("sweep config serializes");
        for key in ["schema_version", "seed", "out"] {
            v[key] = loaded.resolved[key].clone();
        }
        v
    };
    let mut outputs = Outputs::new(&loaded.out);
    match &loaded.body {
        SweepFile::Oracle { source, target, oracle, starts, eta, steps, kinds, threshold } => {
            let oracle = build_oracle(source, target, *oracle)?;
            let starts = starts.build("starts")?;
            if starts.dim() != oracle.dim() {
                return Err(CliError::config("starts", "dimension differs from the oracle"));
            }
            if oracle.target().as_gmm().is_none() {
                return Err(CliError::config("target", "outlierness needs a mixture target"));
            }
            let mut csv = Csv::new(&[
                "kind",
                "eta",
                "starts",
                "median_final_outlierness",
                "max_final_outlierness",
                "mean_turning_angle_deg",
                "mean_final_log_density",
                "within_threshold",
                "ess_warnings",
            ]);
            let mut series = Vec::new();
            for &kind in kinds {
                let mut curve = Vec::new();
                for step in step_size_grid(*eta) {
                    let paths: Vec<OracleTrajectory> = (0..starts.len())
                        .into_par_iter()
                        .map(|i| oracle_trajectory(&oracle, starts.point(i), kind, step, *steps))
                        .collect::<distmarch::Result<_>>()
                        .context("sweep")?;
                    let finals: Vec<f64> = paths.iter().filter_map(|p| p.outlierness.last().copied()).collect();
                    let med = median(finals.clone());
                    let max = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let turning = paths.iter().map(|p| p.mean_turning_angle()).sum::<f64>() / paths.len() as f64;
                    let logd = paths.iter().filter_map(|p| p.log_density.last()).sum::<f64>() / paths.len() as f64;
                    csv.row(&[
                        kind.name().into(),
                        num(step),
                        paths.len().to_string(),
                        num(med),
                        num(max),
                        num(turning.to_degrees()),
                        num(logd),
                        (med < *threshold).to_string(),
                        paths.iter().filter(|p| p.ess_warning).count().to_string(),
                    ]);
                    curve.push((step, med));
                }
                series.push((kind.name().to_string(), curve));
            }
            outputs.write("sweep.csv", &csv.into_bytes())?;
            let svg = line_chart("final outlierness across step sizes", "eta", "median -log p", &series, true);
            outputs.write("sweep.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
        }
        SweepFile::Model { checkpoint, starts, reference, plan, eta } => {
            let ckpt = checkpoint.clone().unwrap_or_else(|| loaded.out.join("checkpoint.json"));
            let model = load_model(&ckpt, "checkpoint")?;
            let starts = starts.build("starts")?;
            let reference = reference.build("reference")?;
            let mut csv = Csv::new(&["eta", "mean_steps", "mean_nfe", "w2", "w2_method", "hausdorff", "chamfer"]);
            let mut hd = Vec::new();
            for step in step_size_grid(*eta) {
                let mut p = *plan;
                p.sampler.eta = step;
                p.hmc.seed = loaded.seed;
                p.sampler.validate().context("plan.sampler")?;
                let trajectories = run_chains(&model, &starts, &p).context("sampler")?;
                let cloud = final_cloud(&trajectories, loaded.seed).context("sampler")?;
                let m = cloud_metrics(&cloud, &reference, W2_EXACT_CAP, loaded.seed).context("metrics")?;
                let n = trajectories.len() as f64;
                csv.row(&[
                    num(step),
                    num(trajectories.iter().map(|t| t.steps() as f64).sum::<f64>() / n),
                    num(trajectories.iter().map(|t| t.nfe as f64).sum::<f64>() / n),
                    num(m.w2),
                    m.w2_method.name().into(),
                    num(m.hausdorff),
                    num(m.chamfer),
                ]);
                hd.push((step, m.hausdorff));
            }
            outputs.write("sweep.csv", &csv.into_bytes())?;
            let svg = line_chart("Hausdorff distance across step sizes", "eta", "hausdorff", &[("model".into(), hd)], false);
            outputs.write("sweep.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
        }
    }
    outputs.finish("sweep", &loaded)
}

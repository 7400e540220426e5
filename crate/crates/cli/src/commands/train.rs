use distmarch::field::{init_field, save_checkpoint, FieldConfig};
use distmarch::losses::write_log_csv;
use distmarch::trainer::{train_with_checkpoints, TrainConfig};
use serde::{Deserialize, Serialize};

use super::{Ctx, Outputs};
use crate::config::{CloudSpec, SourceSpec};
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub target: CloudSpec,
    pub source: SourceSpec,
    /// Defaults to the 3×128 swish MLP in gradient mode, seeded by `seed`.
    pub field: Option<FieldConfig>,
    pub train: TrainConfig,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            target: CloudSpec::TwoMoons { n: 10_000, noise: distmarch::data::TOY_MOONS_NOISE, seed: 1 },
            source: SourceSpec::default(),
            field: None,
            train: TrainConfig::default(),
        }
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let mut loaded = ctx.load::<TrainFile>("runs/train")?;
    let file = loaded.body.clone();
    if file.train.source.is_some() {
        return Err(CliError::config("train.source", "set the top-level `source` instead"));
    }
    let target = file.target.build("target")?;
    let source = file.source.build("source")?;
    if source.dim() != target.dim() {
        return Err(CliError::config("source", format!("dimension {} does not match target dimension {}", source.dim(), target.dim())));
    }
    let field_cfg = file.field.clone().unwrap_or_else(|| FieldConfig::mlp(target.dim(), loaded.seed));
    if field_cfg.input_dim != target.dim() {
        return Err(CliError::config("field.input_dim", format!("expected {}", target.dim())));
    }
    let cfg = TrainConfig { seed: loaded.seed, source: Some(source), ..file.train.clone() };
    cfg.validate().context("train")?;
    // The manifest records what actually ran.
    loaded.resolved["field"] = serde_json::to_value(&field_cfg).expect("field config serializes");
    loaded.resolved["train"] = serde_json::to_value(&cfg).expect("train config serializes");
    let model = init_field(field_cfg).context("field")?;

    let out = &loaded.out;
    let mut outputs = Outputs::new(out);
    let ckpt_dir = out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;
    }
    let mut saved = Vec::new();
    let started = std::time::Instant::now();
    let result = train_with_checkpoints(model, &target, &cfg, |step, m| {
        if cfg.checkpoint_every > 0 {
            let name = format!("step_{step:07}.json");
            save_checkpoint(m, &ckpt_dir.join(&name))?;
            saved.push(format!("checkpoints/{name}"));
        }
        Ok(())
    });
    let outcome = match result {
        Ok(o) => o,
        Err(distmarch::Error::NonFiniteLoss { step, last_good }) => {
            let path = out.join("checkpoint_last_good.json");
            save_checkpoint(&last_good, &path).context("trainer")?;
            eprintln!("saved last finite parameters to {}", path.display());
            return Err(CliError::Numeric {
                context: format!("trainer step {step}"),
                message: "loss or parameters became non-finite".into(),
            });
        }
        Err(e) => return Err(e).context("trainer"),
    };
    for name in saved {
        outputs.record(name);
    }
    save_checkpoint(&outcome.model, &out.join("checkpoint.json")).context("checkpoint")?;
    outputs.record("checkpoint.json".into());
    let mut log = Vec::new();
    write_log_csv(&outcome.log, &mut log).context("train log")?;
    outputs.write("train_log.csv", &log)?;
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        eprintln!(
            "trained {} steps in {:.1}s: loss {:.5} -> {:.5}",
            last.step,
            started.elapsed().as_secs_f64(),
            first.total,
            last.total
        );
    }
    outputs.finish("train", &loaded)
}

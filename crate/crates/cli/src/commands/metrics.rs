use distmarch::metrics::{cloud_metrics, W2_EXACT_CAP};
use serde::{Deserialize, Serialize};

use super::{num, Csv, Ctx, Outputs};
use crate::config::CloudSpec;
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsFile {
    /// Defaults to `<out>/samples.csv`.
    pub generated: Option<CloudSpec>,
    pub reference: CloudSpec,
    pub w2_cap: usize,
}

impl Default for MetricsFile {
    fn default() -> Self {
        Self {
            generated: None,
            reference: CloudSpec::TwoMoons { n: 10_000, noise: distmarch::data::TOY_MOONS_NOISE, seed: 3 },
            w2_cap: W2_EXACT_CAP,
        }
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let loaded = ctx.load::<MetricsFile>("runs/train")?;
    let file = &loaded.body;
    let generated = match &file.generated {
        Some(spec) => spec.build("generated")?,
        None => CloudSpec::Csv { path: loaded.out.join("samples.csv") }.build("generated")?,
    };
    let reference = file.reference.build("reference")?;
    if generated.dim() != reference.dim() {
        return Err(CliError::config("reference", "dimension differs from the generated cloud"));
    }
    if generated.len() != reference.len() {
        return Err(CliError::config(
            "reference",
            format!("W2 matches points one to one: {} generated vs {} reference", generated.len(), reference.len()),
        ));
    }
    if file.w2_cap == 0 {
        return Err(CliError::config("w2_cap", "must be at least 1"));
    }
    let r = cloud_metrics(&generated, &reference, file.w2_cap, loaded.seed).context("metrics")?;
    let mut csv = Csv::new(&["metric", "value", "method", "n_a", "n_b"]);
    let (na, nb) = (r.n_a.to_string(), r.n_b.to_string());
    csv.row(&["w2".into(), num(r.w2), r.w2_method.name().into(), na.clone(), nb.clone()]);
    csv.row(&["hausdorff".into(), num(r.hausdorff), "exact".into(), na.clone(), nb.clone()]);
    csv.row(&["chamfer".into(), num(r.chamfer), "exact".into(), na, nb]);
    eprintln!("w2 {:.4} ({}), hausdorff {:.4}, chamfer {:.5}", r.w2, r.w2_method.name(), r.hausdorff, r.chamfer);
    let mut outputs = Outputs::new(&loaded.out);
    outputs.write("metrics.csv", &csv.into_bytes())?;
    outputs.finish("metrics", &loaded)
}

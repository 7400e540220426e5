use distmarch::metrics::coverage_curve;
use serde::{Deserialize, Serialize};

use super::{num, Csv, Ctx, Outputs};
use crate::config::CloudSpec;
use crate::error::{CliError, CliResult, Context};
use crate::svg::line_chart;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageFile {
    pub target: CloudSpec,
    pub n_per_bin: usize,
    pub t_edges: Vec<f64>,
    pub k: usize,
}

impl Default for CoverageFile {
    fn default() -> Self {
        Self {
            target: CloudSpec::Hub { n: 1024, dim: 256, offset: 4.0, seed: 0 },
            n_per_bin: 4096,
            t_edges: (0..=10).map(|k| k as f64 / 10.0).collect(),
            k: 8,
        }
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let loaded = ctx.load::<CoverageFile>("runs/coverage")?;
    let file = &loaded.body;
    if file.t_edges.len() < 2 {
        return Err(CliError::config("t_edges", "need at least two edges"));
    }
    let target = file.target.build("target")?;
    let curve = coverage_curve(&target, file.n_per_bin, &file.t_edges, file.k, loaded.seed).context("coverage")?;
    let mut csv = Csv::new(&["t_lo", "t_hi", "t_mid", "coverage", "topk_mass"]);
    for (b, w) in file.t_edges.windows(2).enumerate() {
        csv.row(&[num(w[0]), num(w[1]), num(curve.t_bins[b]), num(curve.coverage[b]), num(curve.topk_mass[b])]);
    }
    let pts = |ys: &[f64]| curve.t_bins.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let svg = line_chart(
        "nearest-target coverage by time bin",
        "t",
        "fraction",
        &[("coverage".into(), pts(&curve.coverage)), (format!("top-{} mass", file.k), pts(&curve.topk_mass))],
        false,
    );
    let mut outputs = Outputs::new(&loaded.out);
    outputs.write("coverage.csv", &csv.into_bytes())?;
    outputs.write("coverage.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
    outputs.finish("coverage", &loaded)
}

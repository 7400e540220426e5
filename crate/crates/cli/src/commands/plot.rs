use std::collections::BTreeMap;
use std::path::PathBuf;

use distmarch::field::Field;
use distmarch::samplers::{run_chains, SamplingPlan};
use serde::{Deserialize, Serialize};

use super::{load_model, Ctx, Outputs};
use crate::config::CloudSpec;
use crate::error::{CliError, CliResult, Context};
use crate::svg::{contour, line_chart, Bbox, Grid, Svg, BLUE, GREY, PALETTE, RED};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryPlot {
    pub starts: CloudSpec,
    pub plan: SamplingPlan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePlot {
    pub csv: PathBuf,
    pub x: String,
    pub y: Vec<String>,
    /// Split rows into one series per value of this column.
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default)]
    pub log_y: bool,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotFile {
    /// Defaults to `<out>/checkpoint.json`; plots that need a model are
    /// skipped when it is absent.
    pub checkpoint: Option<PathBuf>,
    /// `[x_min, x_max, y_min, y_max]`
    pub bbox: [f64; 4],
    pub grid: usize,
    pub levels: usize,
    pub arrows: usize,
    pub overlay: Option<CloudSpec>,
    pub trajectories: Option<TrajectoryPlot>,
    pub curves: Vec<CurvePlot>,
}

impl Default for PlotFile {
    fn default() -> Self {
        Self {
            checkpoint: None,
            bbox: [-6.5, 6.5, -6.5, 6.5],
            grid: 256,
            levels: 10,
            arrows: 24,
            overlay: Some(CloudSpec::TwoMoons { n: 1000, noise: distmarch::data::TOY_MOONS_NOISE, seed: 3 }),
            trajectories: Some(TrajectoryPlot {
                starts: CloudSpec::EightGaussians {
                    n: 64,
                    radius: distmarch::data::TOY_SOURCE_RADIUS,
                    std: distmarch::data::TOY_SOURCE_STD,
                    seed: 2,
                },
                plan: SamplingPlan::jump_then_hmc(),
            }),
            curves: Vec::new(),
        }
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let loaded = ctx.load::<PlotFile>("runs/train")?;
    let file = &loaded.body;
    let [x_min, x_max, y_min, y_max] = file.bbox;
    if !(x_min < x_max && y_min < y_max) {
        return Err(CliError::config("bbox", "expected [x_min, x_max, y_min, y_max] with min < max"));
    }
    if file.grid < 2 {
        return Err(CliError::config("grid", "need at least 2 points per side"));
    }
    let bbox = Bbox::new(x_min, x_max, y_min, y_max);
    let overlay = file.overlay.as_ref().map(|c| c.build("overlay")).transpose()?;
    let overlay_pts: Vec<(f64, f64)> = overlay.iter().flat_map(|c| c.iter().map(|p| (p[0], p.get(1).copied().unwrap_or(0.0)))).collect();
    let mut outputs = Outputs::new(&loaded.out);

    let ckpt = file.checkpoint.clone().unwrap_or_else(|| loaded.out.join("checkpoint.json"));
    let model = if ckpt.exists() { Some(load_model(&ckpt, "checkpoint")?) } else { None };
    match &model {
        Some(m) if m.input_dim() == 2 => {
            let svg = level_sets(m, bbox, file.grid, file.levels, file.arrows, &overlay_pts)?;
            outputs.write("level_sets.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
            if let Some(tp) = &file.trajectories {
                let starts = tp.starts.build("trajectories.starts")?;
                let mut plan = tp.plan;
                plan.hmc.seed = loaded.seed;
                let paths = run_chains(m, &starts, &plan).context("sampler")?;
                let mut svg = Svg::new(640.0, 640.0, bbox, "sampler trajectories");
                svg.axes("x0", "x1");
                svg.points(overlay_pts.iter().copied(), 1.5, GREY, 0.4);
                for (k, p) in paths.iter().enumerate() {
                    let pts: Vec<(f64, f64)> = p.states.iter().map(|s| (s[0], s[1])).collect();
                    svg.polyline(&pts, PALETTE[k % PALETTE.len()], 0.8);
                }
                svg.points(paths.iter().map(|p| (p.final_state()[0], p.final_state()[1])), 2.0, RED, 1.0);
                outputs.write("trajectories.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
            }
        }
        Some(_) => eprintln!("skipping level sets: model is not two-dimensional"),
        None => eprintln!("skipping level sets: no checkpoint at {}", ckpt.display()),
    }

    for (k, curve) in file.curves.iter().enumerate() {
        let key = format!("curves[{k}]");
        let series = read_series(curve, &key)?;
        let title = if curve.title.is_empty() { curve.csv.display().to_string() } else { curve.title.clone() };
        let svg = line_chart(&title, &curve.x, &curve.y.join(", "), &series, curve.log_y);
        outputs.write(&format!("curve_{k}.svg"), svg.finish(ctx.deterministic_svg).as_bytes())?;
    }
    outputs.finish("plot", &loaded)
}

fn level_sets(model: &dyn Field, bbox: Bbox, n: usize, levels: usize, arrows: usize, overlay: &[(f64, f64)]) -> CliResult<Svg> {
    let lin = |lo: f64, hi: f64, k: usize, n: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lin(bbox.x_min, bbox.x_max, i, n)).collect();
    let ys: Vec<f64> = (0..n).map(|j| lin(bbox.y_min, bbox.y_max, j, n)).collect();
    let mut flat = Vec::with_capacity(2 * n * n);
    for &y in &ys {
        for &x in &xs {
            flat.push(x);
            flat.push(y);
        }
    }
    let (values, _) = model.eval_flat(&flat).context("plot grid")?;
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let grid = Grid { xs, ys, values };

    let mut svg = Svg::new(640.0, 640.0, bbox, "level sets of u and -v");
    svg.axes("x0", "x1");
    svg.points(overlay.iter().copied(), 1.5, GREY, 0.5);
    if !sorted.is_empty() {
        for k in 0..levels {
            let q = (k as f64 + 0.5) / levels as f64;
            let level = sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)];
            let color = PALETTE[k % PALETTE.len()];
            svg.segments(&contour(&grid, level), color, 1.0);
        }
    }
    if arrows >= 2 {
        let mut pts = Vec::with_capacity(2 * arrows * arrows);
        for j in 0..arrows {
            for i in 0..arrows {
                pts.push(lin(bbox.x_min, bbox.x_max, i, arrows));
                pts.push(lin(bbox.y_min, bbox.y_max, j, arrows));
            }
        }
        let (_, v) = model.eval_flat(&pts).context("plot arrows")?;
        let cell = 0.8 * (bbox.x_max - bbox.x_min).min(bbox.y_max - bbox.y_min) / arrows as f64;
        for (p, d) in pts.chunks_exact(2).zip(v.chunks_exact(2)) {
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len > 0.0 && len.is_finite() {
                svg.arrow((p[0], p[1]), (p[0] - cell * d[0] / len, p[1] - cell * d[1] / len), BLUE, 0.7);
            }
        }
    }
    Ok(svg)
}

fn read_series(curve: &CurvePlot, key: &str) -> CliResult<Vec<(String, Vec<(f64, f64)>)>> {
    let text = std::fs::read_to_string(&curve.csv).map_err(|e| CliError::io(&curve.csv, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::config(format!("{key}"), format!("column {name:?} not in {}", curve.csv.display())))
    };
    let xi = col(&curve.x)?;
    let yi: Vec<usize> = curve.y.iter().map(|y| col(y)).collect::<CliResult<_>>()?;
    let gi = curve.group_by.as_deref().map(col).transpose()?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let Some(x) = cells.get(xi).and_then(|c| c.parse::<f64>().ok()) else { continue };
        let group = gi.and_then(|g| cells.get(g)).map(|g| format!("{g} ")).unwrap_or_default();
        for (name, &i) in curve.y.iter().zip(&yi) {
            if let Some(y) = cells.get(i).and_then(|c| c.parse::<f64>().ok()) {
                series.entry(format!("{group}{name}")).or_default().push((x, y));
            }
        }
    }
    Ok(series.into_iter().collect())
}

use distmarch::oracles::{angle_analysis, oracle_trajectory, MinimizerKind, MinimizerReport, Oracle, OracleConfig, OracleTarget, OracleTrajectory};
use distmarch::vecops::{angle, norm};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{coords, num, Csv, Ctx, Outputs};
use crate::config::{CloudSpec, SourceSpec};
use crate::error::{CliError, CliResult, Context};
use crate::svg::{Bbox, Svg, BLUE, GREEN, GREY, ORANGE, RED};

/// The oracle's target: a finite point set or a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Points { cloud: CloudSpec },
    Mixture { mixture: SourceSpec },
}

impl TargetSpec {
    pub fn build(&self, key: &str) -> CliResult<OracleTarget> {
        match self {
            TargetSpec::Points { cloud } => Ok(OracleTarget::from_points(&cloud.build(key)?)),
            TargetSpec::Mixture { mixture } => OracleTarget::from_gmm(&mixture.build(key)?).context(key),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub starts: CloudSpec,
    pub eta: f64,
    pub steps: usize,
    pub kinds: Vec<MinimizerKind>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleFile {
    pub source: SourceSpec,
    pub target: TargetSpec,
    pub oracle: OracleConfig,
    pub queries: CloudSpec,
    /// Drawn length of every arrow in the 2D plot.
    pub arrow_length: f64,
    pub trajectories: Option<TrajectorySpec>,
}

impl Default for OracleFile {
    fn default() -> Self {
        Self {
            source: SourceSpec::default(),
            target: TargetSpec::Points { cloud: CloudSpec::TwoMoons { n: 256, noise: distmarch::data::TOY_MOONS_NOISE, seed: 1 } },
            oracle: OracleConfig::default(),
            queries: CloudSpec::EightGaussians {
                n: 16,
                radius: distmarch::data::TOY_SOURCE_RADIUS,
                std: distmarch::data::TOY_SOURCE_STD,
                seed: 4,
            },
            arrow_length: 0.6,
            trajectories: None,
        }
    }
}

pub fn build_oracle(source: &SourceSpec, target: &TargetSpec, cfg: OracleConfig) -> CliResult<Oracle> {
    let source = source.build("source")?;
    let target = target.build("target")?;
    if source.dim() != target.dim() {
        return Err(CliError::config("source", "dimension differs from the target"));
    }
    Oracle::new(source, target, cfg).context("oracle")
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let mut loaded = ctx.load::<OracleFile>("runs/oracle")?;
    loaded.body.oracle.seed = loaded.seed;
    loaded.resolved["oracle"] = serde_json::to_value(loaded.body.oracle).expect("oracle config serializes");
    let file = &loaded.body;
    let oracle = build_oracle(&file.source, &file.target, file.oracle)?;
    let queries = file.queries.build("queries")?;
    if queries.dim() != oracle.dim() {
        return Err(CliError::config("queries", "dimension differs from the oracle"));
    }
    let reports: Vec<MinimizerReport> = (0..queries.len())
        .into_par_iter()
        .map(|i| oracle.report(queries.point(i)))
        .collect::<distmarch::Result<_>>()
        .context("oracle")?;

    let mut outputs = Outputs::new(&loaded.out);
    outputs.write("oracle.csv", &minimizer_csv(&reports, oracle.target().components().len()).into_bytes())?;
    outputs.write("oracle_angles.csv", &angle_csv(&reports)?.into_bytes())?;
    if oracle.dim() == 2 {
        let svg = arrow_plot(&oracle, &reports, file.arrow_length);
        outputs.write("oracle_arrows.svg", svg.finish(ctx.deterministic_svg).as_bytes())?;
    }
    if let Some(spec) = &file.trajectories {
        let starts = spec.starts.build("trajectories.starts")?;
        if starts.dim() != oracle.dim() {
            return Err(CliError::config("trajectories.starts", "dimension differs from the oracle"));
        }
        let mut runs = Vec::new();
        for &kind in &spec.kinds {
            let paths: Vec<OracleTrajectory> = (0..starts.len())
                .into_par_iter()
                .map(|i| oracle_trajectory(&oracle, starts.point(i), kind, spec.eta, spec.steps))
                .collect::<distmarch::Result<_>>()
                .context("oracle trajectories")?;
            runs.push((kind, paths));
        }
        outputs.write("oracle_trajectories.csv", &trajectory_csv(&runs, oracle.dim()).into_bytes())?;
    }
    outputs.finish("oracle", &loaded)
}

fn minimizer_csv(reports: &[MinimizerReport], n_labels: usize) -> Csv {
    let dim = reports.first().map_or(0, |r| r.x.len());
    let mut header = coords("x", dim);
    header.extend(coords("pi", n_labels));
    for name in ["g_fm", "g_rfm", "f_os", "h_de", "s_hat"] {
        header.extend(coords(&format!("{name}_"), dim));
    }
    header.push("ess".into());
    let mut csv = Csv::with_header(header);
    for r in reports {
        let mut row: Vec<String> = Vec::new();
        for part in [&r.x, &r.pi, &r.g_fm, &r.g_rfm, &r.f_os, &r.h_de, &r.s_hat] {
            row.extend(part.iter().map(|v| num(*v)));
        }
        row.push(r.ess.map_or_else(String::new, num));
        csv.row(&row);
    }
    csv
}

fn angle_csv(reports: &[MinimizerReport]) -> CliResult<Csv> {
    let mut csv = Csv::new(&["query", "angle_fm_rfm", "angle_os_fm", "angle_os_de", "angle_fm_de", "additivity_ratio", "degenerate"]);
    for (i, r) in reports.iter().enumerate() {
        let a = angle_analysis(r).context("angles")?;
        let fm_rfm = angle(&r.g_fm, &r.g_rfm).map_or_else(String::new, num);
        csv.row(&[
            i.to_string(),
            fm_rfm,
            num(a.angle_os_fm),
            num(a.angle_os_de),
            num(a.angle_fm_de),
            num(a.additivity_ratio),
            a.degenerate.to_string(),
        ]);
    }
    Ok(csv)
}

fn arrow_plot(oracle: &Oracle, reports: &[MinimizerReport], length: f64) -> Svg {
    let targets: Vec<(f64, f64)> = oracle.target().components().iter().map(|c| (c.mean[0], c.mean[1])).collect();
    let bbox = Bbox::around(targets.iter().copied().chain(reports.iter().map(|r| (r.x[0], r.x[1]))), 0.1);
    let mut svg = Svg::new(640.0, 640.0, bbox, "minimizer directions");
    svg.axes("x0", "x1");
    svg.points(targets, 2.0, GREY, 0.6);
    svg.points(reports.iter().map(|r| (r.x[0], r.x[1])), 2.5, "#000", 1.0);
    for r in reports {
        let toward: Vec<f64> = r.h_de.iter().map(|v| -v).collect();
        for (dir, color) in [(&r.g_fm, RED), (&r.g_rfm, GREEN), (&r.f_os, ORANGE), (&toward, BLUE)] {
            let n = norm(dir);
            if n > 0.0 {
                let to = (r.x[0] + length * dir[0] / n, r.x[1] + length * dir[1] / n);
                svg.arrow((r.x[0], r.x[1]), to, color, 1.2);
            }
        }
    }
    svg.legend(&[("flow matching", RED), ("rectified flow matching", GREEN), ("one-step", ORANGE), ("eikonal (negated)", BLUE)]);
    svg
}

fn trajectory_csv(runs: &[(MinimizerKind, Vec<OracleTrajectory>)], dim: usize) -> Csv {
    let mut header = vec!["kind".to_string(), "start".to_string(), "step".to_string()];
    header.extend(coords("x", dim));
    header.extend(["direction_norm", "turning_angle", "log_density", "outlierness"].map(String::from));
    let mut csv = Csv::with_header(header);
    let cell = |v: Option<&f64>| v.map_or_else(String::new, |x| num(*x));
    for (kind, paths) in runs {
        for (s, p) in paths.iter().enumerate() {
            for (k, state) in p.trajectory.states.iter().enumerate() {
                let mut row = vec![kind.name().to_string(), s.to_string(), k.to_string()];
                row.extend(state.iter().map(|v| num(*v)));
                row.push(cell(p.trajectory.u_values.get(k)));
                // Turning angle at state k joins steps k-1 and k.
                row.push(cell(k.checked_sub(1).and_then(|j| p.turning_angles.get(j))));
                row.push(cell(p.log_density.get(k)));
                row.push(cell(p.outlierness.get(k)));
                csv.row(&row);
            }
        }
    }
    csv
}

//! Minimal SVG output: scatter points, arrows, polylines, contour segments
//! and line charts. Coordinates are written with fixed precision so repeated
//! runs produce identical files.

use std::fmt::Write as _;

pub const RED: &str = "#d62728";
pub const GREEN: &str = "#2ca02c";
pub const ORANGE: &str = "#ff7f0e";
pub const BLUE: &str = "#1f77b4";
pub const GREY: &str = "#7f7f7f";
pub const PURPLE: &str = "#9467bd";
pub const PALETTE: [&str; 6] = [BLUE, ORANGE, GREEN, RED, PURPLE, GREY];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bbox {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    /// Smallest box holding every point, grown by `pad` of its extent.
    pub fn around(points: impl IntoIterator<Item = (f64, f64)>, pad: f64) -> Self {
        let mut b = Bbox::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                b.x_min = b.x_min.min(x);
                b.x_max = b.x_max.max(x);
                b.y_min = b.y_min.min(y);
                b.y_max = b.y_max.max(y);
            }
        }
        if !b.x_min.is_finite() {
            return Bbox::new(0.0, 1.0, 0.0, 1.0);
        }
        let widen = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - pad * span, hi + pad * span)
        };
        let (x_min, x_max) = widen(b.x_min, b.x_max);
        let (y_min, y_max) = widen(b.y_min, b.y_max);
        Bbox::new(x_min, x_max, y_min, y_max)
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    margin: f64,
    bbox: Bbox,
    title: String,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64, bbox: Bbox, title: &str) -> Self {
        Self { width, height, margin: 40.0, bbox, title: title.to_string(), body: String::new() }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let b = &self.bbox;
        let w = self.width - 2.0 * self.margin;
        let h = self.height - 2.0 * self.margin;
        (
            self.margin + (x - b.x_min) / (b.x_max - b.x_min) * w,
            self.height - self.margin - (y - b.y_min) / (b.y_max - b.y_min) * h,
        )
    }

    pub fn points(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, radius: f64, color: &str, opacity: f64) {
        let _ = writeln!(self.body, "<g fill=\"{color}\" fill-opacity=\"{opacity}\">");
        for (x, y) in pts {
            let (px, py) = self.px(x, y);
            let _ = writeln!(self.body, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{radius}\"/>");
        }
        self.body.push_str("</g>\n");
    }

    pub fn arrow(&mut self, from: (f64, f64), to: (f64, f64), color: &str, width: f64) {
        let (x0, y0) = self.px(from.0, from.1);
        let (x1, y1) = self.px(to.0, to.1);
        let _ = writeln!(
            self.body,
            "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" stroke=\"{color}\" stroke-width=\"{width}\"/>"
        );
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        if len > 1e-9 {
            let (ux, uy) = ((x1 - x0) / len, (y1 - y0) / len);
            let head = (4.0 * width).min(0.5 * len);
            let (bx, by) = (x1 - head * ux, y1 - head * uy);
            let (nx, ny) = (-uy * head * 0.5, ux * head * 0.5);
            let _ = writeln!(
                self.body,
                "<polygon points=\"{x1:.2},{y1:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"{color}\"/>",
                bx + nx,
                by + ny,
                bx - nx,
                by - ny
            );
        }
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>",
            coords.join(" ")
        );
    }

    pub fn segments(&mut self, segs: &[Segment], color: &str, width: f64) {
        if segs.is_empty() {
            return;
        }
        let mut d = String::new();
        for s in segs {
            let (x0, y0) = self.px(s.0 .0, s.0 .1);
            let (x1, y1) = self.px(s.1 .0, s.1 .1);
            let _ = write!(d, "M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}");
        }
        let _ = writeln!(self.body, "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>");
    }

    pub fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (label, color)) in entries.iter().enumerate() {
            let y = self.margin + 14.0 * k as f64;
            let x = self.width - self.margin - 150.0;
            let _ = writeln!(
                self.body,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
                y - 9.0,
                x + 14.0,
                y,
                escape(label)
            );
        }
    }

    /// Frame with the box limits written at the corners.
    pub fn axes(&mut self, x_label: &str, y_label: &str) {
        let m = self.margin;
        let (w, h) = (self.width - 2.0 * m, self.height - 2.0 * m);
        let b = self.bbox;
        let _ = writeln!(
            self.body,
            "<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#000\" stroke-width=\"0.5\"/>"
        );
        let fy = self.height - m;
        let _ = writeln!(self.body, "<text x=\"{m}\" y=\"{:.2}\" font-size=\"10\">{}</text>", fy + 14.0, fmt_tick(b.x_min));
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            m + w,
            fy + 14.0,
            fmt_tick(b.x_max)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{fy:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            m - 4.0,
            fmt_tick(b.y_min)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            m - 4.0,
            m + 10.0,
            fmt_tick(b.y_max)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            m + w / 2.0,
            fy + 28.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.body,
            "<text x=\"12\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 12 {:.2})\">{}</text>",
            m + h / 2.0,
            m + h / 2.0,
            escape(y_label)
        );
    }

    pub fn finish(self, deterministic: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
            self.width, self.height, self.width, self.height
        );
        if !deterministic {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(s, "<!-- generated at unix time {secs} -->");
        }
        let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
            self.width / 2.0,
            escape(&self.title)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub type Segment = ((f64, f64), (f64, f64));

/// Values of a scalar function on a regular grid: `values[j * nx + i]` at
/// `(xs[i], ys[j])`.
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }
}

/// Marching squares for one level; saddles are split by the cell-centre mean.
pub fn contour(grid: &Grid, level: f64) -> Vec<Segment> {
    let (nx, ny) = (grid.xs.len(), grid.ys.len());
    let mut segs = Vec::new();
    if nx < 2 || ny < 2 {
        return segs;
    }
    let lerp = |p: (f64, f64), q: (f64, f64), a: f64, b: f64| {
        let t = if (b - a).abs() > 0.0 { (level - a) / (b - a) } else { 0.5 };
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // Corners counter-clockwise from bottom-left.
            let p = [
                (grid.xs[i], grid.ys[j]),
                (grid.xs[i + 1], grid.ys[j]),
                (grid.xs[i + 1], grid.ys[j + 1]),
                (grid.xs[i], grid.ys[j + 1]),
            ];
            let v = [grid.at(i, j), grid.at(i + 1, j), grid.at(i + 1, j + 1), grid.at(i, j + 1)];
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let case = v.iter().enumerate().fold(0u8, |c, (k, &x)| c | (u8::from(x > level) << k));
            let edge = |e: usize| lerp(p[e], p[(e + 1) % 4], v[e], v[(e + 1) % 4]);
            // Edge e joins corner e to corner e+1.
            let pairs: &[(usize, usize)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 | 10 => {
                    let centre_above = v.iter().sum::<f64>() / 4.0 > level;
                    if (case == 5) == centre_above {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!("four corner bits"),
            };
            for &(a, b) in pairs {
                segs.push((edge(a), edge(b)));
            }
        }
    }
    segs
}

/// Line chart of several named series sharing an x axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> Svg {
    let tf = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let all = series.iter().flat_map(|(_, pts)| pts.iter().map(|&(x, y)| (x, tf(y))));
    let bbox = Bbox::around(all, 0.05);
    let mut svg = Svg::new(640.0, 420.0, bbox, title);
    let y_label = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    svg.axes(x_label, &y_label);
    let mut legend = Vec::new();
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, tf(y))).collect();
        svg.polyline(&pts, color, 1.5);
        svg.points(pts.iter().copied(), 2.0, color, 1.0);
        legend.push((name.as_str(), color));
    }
    svg.legend(&legend);
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_lies_on_the_circle() {
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.clone();
        let mut values = Vec::new();
        for &y in &ys {
            for &x in &xs {
                values.push((x * x + y * y).sqrt());
            }
        }
        let grid = Grid { xs, ys, values };
        let segs = contour(&grid, 1.0);
        assert!(segs.len() > 50);
        let step = 4.0 / (n - 1) as f64;
        for (a, b) in &segs {
            for p in [a, b] {
                let r = (p.0 * p.0 + p.1 * p.1).sqrt();
                assert!((r - 1.0).abs() < step * step, "endpoint at radius {r}");
            }
        }
    }

    #[test]
    fn flat_grid_has_no_contour() {
        let grid = Grid { xs: vec![0.0, 1.0], ys: vec![0.0, 1.0], values: vec![2.0; 4] };
        assert!(contour(&grid, 1.0).is_empty());
    }

    #[test]
    fn deterministic_output_has_no_timestamp() {
        let svg = Svg::new(100.0, 100.0, Bbox::new(0.0, 1.0, 0.0, 1.0), "t");
        assert!(!svg.finish(true).contains("unix time"));
        let svg = Svg::new(100.0, 100.0, Bbox::new(0.0, 1.0, 0.0, 1.0), "t");
        assert!(svg.finish(false).contains("unix time"));
    }
}

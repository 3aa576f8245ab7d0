use super::{Manifest, RunRecord};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Decay, smoothing and kernel-constant figures from a manifest, as SVG with
/// the plotted data alongside in CSV.
pub fn emit_plots(manifest: &Manifest, out_dir: &Path) -> Result<PlotOutput> {
    let mut out = PlotOutput::default();
    if manifest.runs.is_empty() {
        out.warnings.push("manifest has no runs; nothing to plot".into());
        return Ok(out);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    decay(manifest, out_dir, &mut out)?;
    smoothing(manifest, out_dir, &mut out)?;
    kernels(manifest, out_dir, &mut out)?;
    Ok(out)
}

fn write(path: PathBuf, text: &str, out: &mut PlotOutput) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    out.files.push(path);
    Ok(())
}

fn positive_series(r: &RunRecord) -> Vec<(f64, f64)> {
    r.series
        .t
        .iter()
        .zip(&r.series.sup)
        .filter(|(t, u)| **t > 0.0 && **u > 0.0)
        .map(|(t, u)| (*t, *u))
        .collect()
}

fn decay(m: &Manifest, dir: &Path, out: &mut PlotOutput) -> Result<()> {
    let mut fig = Figure::new("sup norm decay", "t", "||u(t)||_inf", true, true);
    let mut csv = String::from("run,t,sup\n");
    for (k, r) in m.runs.iter().enumerate() {
        let pts = positive_series(r);
        if pts.is_empty() {
            out.warnings.push(format!("{}: no positive samples for the decay plot", r.key));
            continue;
        }
        for (t, u) in &pts {
            let _ = writeln!(csv, "{},{t:e},{u:e}", csv_field(&r.key));
        }
        fig.line(&r.key, &pts, k, None);
        let m1 = Nonlinearity::new(r.config.nonlinearity.clone()).map(|n| n.m1()).unwrap_or(1.0);
        if let (Some(c), true) = (&r.constants, m1 > 1.0) {
            // Rounded so that m = 1.5 labels as -2, not -2.000000000000001.
            let slope = (-1e9 / (m1 - 1.0)).round() / 1e9;
            let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
            let guide: Vec<(f64, f64)> = [t0, t1].iter().map(|&t| (t, c.k2 * t.powf(slope))).collect();
            fig.line(&format!("K2 t^{slope}"), &guide, k, Some(slope));
        }
    }
    write(dir.join("decay.svg"), &fig.render(), out)?;
    write(dir.join("decay.csv"), &csv, out)
}

fn smoothing(m: &Manifest, dir: &Path, out: &mut PlotOutput) -> Result<()> {
    let mut fig = Figure::new(
        "sup norm over the smoothing profile",
        "t",
        "||u(t)||_inf / profile",
        true,
        true,
    );
    let mut csv = String::from("run,t,ratio,K7\n");
    for (k, r) in m.runs.iter().enumerate() {
        let Some(c) = &r.constants else {
            out.warnings.push(format!("{}: no constants, smoothing plot skipped", r.key));
            continue;
        };
        let Some(&norm0) = r.series.l1_phi.first() else { continue };
        let nd = c.inputs.n_dim as f64;
        let (s, gamma) = (c.inputs.s, c.inputs.gamma);
        let pts: Vec<(f64, f64)> = positive_series(r)
            .into_iter()
            .filter_map(|(t, u)| {
                let th = c.theta[c.regime(t, norm0)];
                let profile = norm0.powf(2.0 * s * th) / t.powf((nd + gamma) * th);
                (profile > 0.0).then(|| (t, u / profile))
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        for (t, q) in &pts {
            let _ = writeln!(csv, "{},{t:e},{q:e},{:e}", csv_field(&r.key), c.k7);
        }
        fig.line(&r.key, &pts, k, None);
        let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
        fig.line("K7", &[(t0, c.k7), (t1, c.k7)], k, Some(0.0));
    }
    write(dir.join("smoothing.svg"), &fig.render(), out)?;
    write(dir.join("smoothing.csv"), &csv, out)
}

fn kernels(m: &Manifest, dir: &Path, out: &mut PlotOutput) -> Result<()> {
    let mut fig = Figure::new("fitted kernel constants", "run", "constant", false, true);
    let mut csv = String::from("run,hypothesis,c1,c0\n");
    let mut c1s = Vec::new();
    let mut c0s = Vec::new();
    for (k, r) in m.runs.iter().enumerate() {
        for kr in &r.kernels {
            let _ = writeln!(
                csv,
                "{},{:?},{:e},{}",
                csv_field(&r.key),
                kr.hypothesis,
                kr.c1,
                kr.c0.map(|c| format!("{c:e}")).unwrap_or_default()
            );
            if kr.c1 > 0.0 {
                c1s.push((k as f64, kr.c1));
            }
            if let Some(c0) = kr.c0.filter(|c| *c > 0.0) {
                c0s.push((k as f64, c0));
            }
        }
    }
    if c1s.is_empty() && c0s.is_empty() {
        out.warnings.push("no kernel bound reports in the manifest".into());
    }
    fig.points("c1", &c1s, 0);
    fig.points("c0", &c0s, 1);
    write(dir.join("kernels.svg"), &fig.render(), out)?;
    write(dir.join("kernels.csv"), &csv, out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

enum Mark {
    Line { slope: Option<f64> },
    Points,
}

struct Series2 {
    label: String,
    pts: Vec<(f64, f64)>,
    color: usize,
    mark: Mark,
}

struct Figure {
    title: String,
    xlabel: String,
    ylabel: String,
    logx: bool,
    logy: bool,
    series: Vec<Series2>,
}

impl Figure {
    fn new(title: &str, xlabel: &str, ylabel: &str, logx: bool, logy: bool) -> Self {
        Figure {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            logx,
            logy,
            series: Vec::new(),
        }
    }

    fn line(&mut self, label: &str, pts: &[(f64, f64)], color: usize, guide_slope: Option<f64>) {
        self.series.push(Series2 {
            label: label.into(),
            pts: pts.to_vec(),
            color,
            mark: Mark::Line { slope: guide_slope },
        });
    }

    fn points(&mut self, label: &str, pts: &[(f64, f64)], color: usize) {
        self.series.push(Series2 {
            label: label.into(),
            pts: pts.to_vec(),
            color,
            mark: Mark::Points,
        });
    }

    fn tx(&self, x: f64) -> f64 {
        if self.logx {
            x.log10()
        } else {
            x
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.logy {
            y.log10()
        } else {
            y
        }
    }

    fn render(&self) -> String {
        let all: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.pts.iter().map(|&(x, y)| (self.tx(x), self.ty(y))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(&mut all.iter().map(|p| p.0));
        let (y0, y1) = range(&mut all.iter().map(|p| p.1));
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        let tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3}") };
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(xv),
                HEIGHT - MARGIN + 16.0,
                tick(xv, self.logx)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 4.0,
                py(yv) + 4.0,
                tick(yv, self.logy)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            xml_escape(&self.xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            xml_escape(&self.ylabel)
        );
        for s in &self.series {
            let color = COLORS[s.color % COLORS.len()];
            let pts: Vec<(f64, f64)> = s
                .pts
                .iter()
                .map(|&(x, y)| (self.tx(x), self.ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (px(x), py(y)))
                .collect();
            let label = xml_escape(&s.label);
            match s.mark {
                Mark::Line { slope } => {
                    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    match slope {
                        Some(slope) => {
                            let _ = writeln!(
                                svg,
                                r#"<polyline class="guide" data-slope="{slope}" points="{}" fill="none" stroke="{color}" stroke-dasharray="5,4"><title>{label}</title></polyline>"#,
                                coords.join(" ")
                            );
                        }
                        None => {
                            let _ = writeln!(
                                svg,
                                r#"<polyline class="data" points="{}" fill="none" stroke="{color}" stroke-width="1.5"><title>{label}</title></polyline>"#,
                                coords.join(" ")
                            );
                        }
                    }
                }
                Mark::Points => {
                    for (x, y) in pts {
                        let _ = writeln!(
                            svg,
                            r#"<circle class="data" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"><title>{label}</title></circle>"#
                        );
                    }
                }
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

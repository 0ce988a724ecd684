//! Deterministic SVG scatter plots: action-plane projections of orbits and
//! reduced pendulum phase portraits.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::config::RenderOptions;
use crate::error::{Error, Result};
use crate::map_engine::Orbit;
use crate::pendulum::PendulumModel;
use crate::resonance::{detect_resonances, Convention};
use crate::spectral::{first_order_projection, solve_cohomological};

const MARGIN: f64 = 56.0;
const CURVE_SAMPLES: usize = 720;
const OVERLAY_SEARCH: i64 = 3;
const OVERLAY_FLOOR: f64 = 1e-9;

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: Option<String>,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub width: u32,
    pub height: u32,
    pub radius: f64,
    /// Filled polygons drawn first.
    pub shading: Vec<Vec<Point>>,
    /// Polylines; closed curves repeat their first vertex.
    pub curves: Vec<Vec<Point>>,
    /// Predicted cloud, drawn under the observed points.
    pub overlay: Vec<Point>,
    pub points: Vec<Point>,
}

fn all_finite(pts: &[Point]) -> bool {
    pts.iter().all(|(x, y)| x.is_finite() && y.is_finite())
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let half = (0.05 * lo.abs()).max(0.5);
        (lo - half, hi + half)
    }
}

/// Data range of a set of points, padded by 5% (or widened when degenerate).
pub fn auto_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        padded(lo, hi)
    } else {
        (-1.0, 1.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl PlotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("nothing to plot: no points".into()));
        }
        let groups = [&self.points, &self.overlay].into_iter().chain(self.curves.iter()).chain(self.shading.iter());
        for g in groups {
            if !all_finite(g) {
                return Err(Error::Config("plot coordinates must be finite".into()));
            }
        }
        let (x, y) = (self.x_range, self.y_range);
        if !(x.0 < x.1 && y.0 < y.1 && x.0.is_finite() && x.1.is_finite() && y.0.is_finite() && y.1.is_finite()) {
            return Err(Error::Config("plot ranges must be finite with lo < hi".into()));
        }
        if self.width < 16 || self.height < 16 || !(self.radius > 0.0) {
            return Err(Error::Config("canvas must be ≥ 16 px and radius > 0".into()));
        }
        Ok(())
    }

    /// Pixel coordinates of a data point.
    pub fn to_pixel(&self, (x, y): Point) -> Point {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        let px = MARGIN + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * (w - 2.0 * MARGIN);
        let py = h - MARGIN - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0) * (h - 2.0 * MARGIN);
        (px, py)
    }

    fn path(&self, pts: &[Point]) -> String {
        let mut s = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (px, py) = self.to_pixel(p);
            let _ = write!(s, "{}{px:.6},{py:.6}", if i == 0 { "" } else { " " });
        }
        s
    }

    pub fn to_svg(&self) -> Result<String> {
        self.validate()?;
        let (w, h) = (self.width, self.height);
        let (fw, fh) = (f64::from(w), f64::from(h));
        let mut s = String::with_capacity(128 * (self.points.len() + self.overlay.len()) + 4096);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        s.push_str(
            "<style>.frame{fill:none;stroke:#000;stroke-width:1}.shade{fill:#c8c8c8;stroke:none}\
             .curve{fill:none;stroke:#444;stroke-width:0.8}.overlay{fill:#d62728;fill-opacity:0.5}\
             .orbit{fill:#1f4e9c}text{font-family:sans-serif;font-size:12px}</style>\n",
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<clipPath id="plot"><rect x="{MARGIN:.6}" y="{MARGIN:.6}" width="{:.6}" height="{:.6}"/></clipPath>"#,
            fw - 2.0 * MARGIN,
            fh - 2.0 * MARGIN
        );
        s.push_str("<g clip-path=\"url(#plot)\">\n");
        for poly in &self.shading {
            let _ = writeln!(s, r#"<polygon class="shade" points="{}"/>"#, self.path(poly));
        }
        for curve in &self.curves {
            let _ = writeln!(s, r#"<polyline class="curve" points="{}"/>"#, self.path(curve));
        }
        for (class, pts) in [("overlay", &self.overlay), ("orbit", &self.points)] {
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(s, r#"<g class="{class}">"#);
            for &p in pts.iter() {
                let (px, py) = self.to_pixel(p);
                let _ = writeln!(s, r#"<circle cx="{px:.6}" cy="{py:.6}" r="{:.6}"/>"#, self.radius);
            }
            s.push_str("</g>\n");
        }
        s.push_str("</g>\n");
        let _ = writeln!(
            s,
            r#"<rect class="frame" x="{MARGIN:.6}" y="{MARGIN:.6}" width="{:.6}" height="{:.6}"/>"#,
            fw - 2.0 * MARGIN,
            fh - 2.0 * MARGIN
        );
        for i in 0..=4 {
            let t = f64::from(i) / 4.0;
            let xv = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + t * (self.y_range.1 - self.y_range.0);
            let (px, _) = self.to_pixel((xv, self.y_range.0));
            let (_, py) = self.to_pixel((self.x_range.0, yv));
            let _ = writeln!(
                s,
                r#"<text x="{px:.6}" y="{:.6}" text-anchor="middle">{xv:.3}</text>"#,
                fh - MARGIN + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.6}" y="{:.6}" text-anchor="end">{yv:.3}</text>"#,
                MARGIN - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.6}" y="{:.6}" text-anchor="middle">{}</text>"#,
            fw / 2.0,
            fh - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14.000000" y="{:.6}" text-anchor="middle" transform="rotate(-90 14.000000 {:.6})">{}</text>"#,
            fh / 2.0,
            fh / 2.0,
            escape(&self.y_label)
        );
        if let Some(title) = &self.title {
            let _ = writeln!(s, r#"<text x="{:.6}" y="24.000000" text-anchor="middle">{}</text>"#, fw / 2.0, escape(title));
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// `{y₀ + ε∂S/∂x}` for the orbit's initial state, with `S` solving the map
/// homological equation at `ν = y₀` away from its detected resonances.
fn predicted_cloud(orbit: &Orbit, samples: usize) -> Result<Vec<Vec<f64>>> {
    let init = orbit.initial();
    let eps = orbit.eps;
    let tol = eps.sqrt().max(1e-6);
    let g = detect_resonances(&init.y, OVERLAY_SEARCH, tol, Convention::Map)?.module;
    let sol = solve_cohomological(&orbit.potential, &init.y, &g, OVERLAY_FLOOR, Convention::Map)?;
    let s = sol.s.scaled(eps.sqrt());
    let grad = s.gradient(&init.x);
    let base: Vec<f64> = init.y.iter().zip(&grad).map(|(y, g)| y - eps.sqrt() * g).collect();
    first_order_projection(&base, &s, eps, &g, samples, None)
}

pub fn action_projection_spec(orbits: &[Orbit], options: &RenderOptions) -> Result<PlotSpec> {
    let (i, j) = options.indices;
    let mut points = Vec::new();
    let mut overlay = Vec::new();
    for orbit in orbits {
        if orbit.is_empty() {
            return Err(Error::Config("cannot render an empty orbit".into()));
        }
        if orbit.dim() < 2 || i >= orbit.dim() || j >= orbit.dim() {
            return Err(Error::DimensionMismatch { expected: i.max(j) + 1, got: orbit.dim() });
        }
        points.extend(orbit.states.iter().map(|s| (s.y[i], s.y[j])));
        if options.overlay {
            overlay.extend(predicted_cloud(orbit, options.overlay_samples)?.into_iter().map(|y| (y[i], y[j])));
        }
    }
    if points.is_empty() {
        return Err(Error::Config("cannot render an empty orbit".into()));
    }
    let all = || points.iter().chain(&overlay);
    let x_range = options.x_range.unwrap_or_else(|| auto_range(all().map(|p| &p.0)));
    let y_range = options.y_range.unwrap_or_else(|| auto_range(all().map(|p| &p.1)));
    Ok(PlotSpec {
        title: options.title.clone(),
        x_label: format!("y{}", i + 1),
        y_label: format!("y{}", j + 1),
        x_range,
        y_range,
        width: options.width,
        height: options.height,
        radius: options.radius,
        shading: Vec::new(),
        curves: Vec::new(),
        overlay,
        points,
    })
}

/// Scatter of recorded actions `(y_i, y_j)`, optionally over the predicted
/// first-order cloud.
pub fn render_action_projection(orbits: &[Orbit], options: &RenderOptions) -> Result<String> {
    action_projection_spec(orbits, options)?.to_svg()
}

/// Reduced points mapped into the window `[q_max, q_max + 2π)`.
pub fn wrap_into_window(model: &PendulumModel, q: f64) -> f64 {
    model.q_max + (q - model.q_max).rem_euclid(TAU)
}

fn momentum(model: &PendulumModel, e: f64, q: f64) -> f64 {
    (2.0 * (e - model.potential(q)).max(0.0) / model.a).sqrt()
}

/// Root of `u(q) = e` in `[lo, hi]` where the sign of `u − e` changes.
fn level_root(model: &PendulumModel, e: f64, mut lo: f64, mut hi: f64) -> f64 {
    let below_lo = model.potential(lo) < e;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (model.potential(mid) < e) == below_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Curves of `½Ap² + u(q) = e` over the plotting window. Every run of `q`
/// with `u < e` gives a closed oval when both ends are turning points and
/// two open branches otherwise.
pub fn level_curves(model: &PendulumModel, e: f64) -> Vec<Vec<Point>> {
    let q0 = model.q_max;
    let grid: Vec<f64> = (0..=CURVE_SAMPLES).map(|i| q0 + TAU * i as f64 / CURVE_SAMPLES as f64).collect();
    let below: Vec<bool> = grid.iter().map(|&q| model.potential(q) < e).collect();
    let mut curves = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if !below[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < grid.len() && below[i + 1] {
            i += 1;
        }
        let end = i;
        let left = (start > 0).then(|| level_root(model, e, grid[start - 1], grid[start]));
        let right = (end + 1 < grid.len()).then(|| level_root(model, e, grid[end], grid[end + 1]));
        let mut qs: Vec<f64> = left.into_iter().collect();
        qs.extend_from_slice(&grid[start..=end]);
        qs.extend(right);
        let upper: Vec<Point> = qs.iter().map(|&q| (q, momentum(model, e, q))).collect();
        if left.is_some() && right.is_some() {
            let mut oval = upper.clone();
            oval.extend(upper.iter().rev().skip(1).map(|&(q, p)| (q, -p)));
            curves.push(oval);
        } else {
            curves.push(upper.iter().map(|&(q, p)| (q, -p)).collect());
            curves.push(upper);
        }
        i += 1;
    }
    curves
}

/// The oscillatory domain `{½Ap² + u(q) < E_sep}` over the window as one
/// polygon whose boundary lies on the separatrix.
pub fn separatrix_polygon(model: &PendulumModel) -> Vec<Point> {
    let q0 = model.q_max;
    let upper: Vec<Point> = (0..=CURVE_SAMPLES)
        .map(|i| {
            let q = q0 + TAU * i as f64 / CURVE_SAMPLES as f64;
            (q, momentum(model, model.e_sep, q))
        })
        .collect();
    let mut poly = upper.clone();
    poly.extend(upper.iter().rev().map(|&(q, p)| (q, -p)));
    poly
}

/// Default energies: five librating levels, the separatrix and two
/// rotating levels.
pub fn default_levels(model: &PendulumModel) -> Vec<f64> {
    let de = model.e_sep - model.e_min;
    let mut v: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|t| model.e_min + t * de).collect();
    v.extend([model.e_sep, model.e_sep + 0.25 * de, model.e_sep + 0.5 * de]);
    v
}

pub fn phase_portrait_spec(
    model: &PendulumModel,
    reduced: &[Point],
    levels: &[f64],
    options: &RenderOptions,
) -> Result<PlotSpec> {
    if !all_finite(reduced) {
        return Err(Error::Config("reduced points must be finite".into()));
    }
    let levels = if levels.is_empty() { default_levels(model) } else { levels.to_vec() };
    if levels.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("levels must be finite".into()));
    }
    let points: Vec<Point> = reduced.iter().map(|&(p, q)| (wrap_into_window(model, q), p)).collect();
    let curves: Vec<Vec<Point>> = levels.iter().flat_map(|&e| level_curves(model, e)).collect();
    let shading = vec![separatrix_polygon(model)];
    let p_max = curves
        .iter()
        .flatten()
        .chain(&points)
        .chain(&shading[0])
        .fold(0.0f64, |m, &(_, p)| m.max(p.abs()));
    let y_range = options.y_range.unwrap_or_else(|| padded(-p_max.max(1e-9), p_max.max(1e-9)));
    Ok(PlotSpec {
        title: options.title.clone(),
        x_label: "q".into(),
        y_label: "p".into(),
        x_range: options.x_range.unwrap_or((model.q_max, model.q_max + TAU)),
        y_range,
        width: options.width,
        height: options.height,
        radius: options.radius,
        shading,
        curves,
        overlay: Vec::new(),
        points,
    })
    .and_then(|s| if s.points.is_empty() { Err(Error::Config("no reduced points to plot".into())) } else { Ok(s) })
}

/// Level curves of the reduced pendulum with the oscillatory domain shaded
/// and reduced orbit points `(p, q)` on top.
pub fn render_phase_portrait(
    model: &PendulumModel,
    reduced: &[Point],
    levels: &[f64],
    options: &RenderOptions,
) -> Result<String> {
    phase_portrait_spec(model, reduced, levels, options)?.to_svg()
}

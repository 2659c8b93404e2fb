//! Minimal SVG plot of a run: object footprints, reference markers, the true
//! track and the estimated track.

use std::fmt::Write;

use usv_core::mission::TrajectoryLog;
use usv_core::sim::World;
use usv_core::Vec2;

const SIZE: f64 = 600.0;
const PAD: f64 = 20.0;

struct View {
    min: Vec2,
    scale: f64,
}

impl View {
    fn fit(points: &[Vec2]) -> View {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.is_finite() {
            return View { min: Vec2::new(-10.0, -10.0), scale: (SIZE - 2.0 * PAD) / 20.0 };
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        View { min: lo - Vec2::new(1.0, 1.0), scale: (SIZE - 2.0 * PAD) / (span + 2.0) }
    }

    /// SVG y grows downward.
    fn map(&self, p: Vec2) -> (f64, f64) {
        let x = PAD + (p.x - self.min.x) * self.scale;
        let y = SIZE - PAD - (p.y - self.min.y) * self.scale;
        (round2(x), round2(y))
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn polyline(out: &mut String, view: &View, pts: &[Vec2], style: &str) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|&p| {
        let (x, y) = view.map(p);
        format!("{x},{y}")
    }).collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

/// `markers` are drawn as small crosses (waypoints, hold point, goal).
pub fn trajectory_svg(world: &World, log: &TrajectoryLog, markers: &[Vec2], paths: &[Vec<Vec2>]) -> String {
    let truth: Vec<Vec2> = log.rows.iter().map(|r| Vec2::new(r.x, r.y)).collect();
    let est: Vec<Vec2> = log.rows.iter().map(|r| Vec2::new(r.est_x, r.est_y)).collect();
    let footprints: Vec<Vec<Vec2>> = world.objects.iter().map(|o| o.shape.polygon(24)).collect();

    let mut all = truth.clone();
    all.extend(markers);
    all.extend(footprints.iter().flatten());
    all.extend(paths.iter().flatten());
    let view = View::fit(&all);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#eef4fa"/>"##);
    for (obj, poly) in world.objects.iter().zip(&footprints) {
        let coords: Vec<String> = poly.iter().map(|&p| {
            let (x, y) = view.map(p);
            format!("{x},{y}")
        }).collect();
        let _ = writeln!(
            out,
            r##"<polygon class="{}" fill="#c0504d" fill-opacity="0.6" stroke="#7f2b29" points="{}"/>"##,
            obj.kind.name(),
            coords.join(" ")
        );
    }
    for p in paths {
        polyline(&mut out, &view, p, r##"stroke="#9b59b6" stroke-width="1" stroke-dasharray="4 3""##);
    }
    polyline(&mut out, &view, &est, r##"stroke="#f39c12" stroke-width="1""##);
    polyline(&mut out, &view, &truth, r##"stroke="#1f4e79" stroke-width="2""##);
    for &m in markers {
        let (x, y) = view.map(m);
        let _ = writeln!(
            out,
            r##"<path stroke="#27ae60" stroke-width="2" d="M{} {}L{} {}M{} {}L{} {}"/>"##,
            round2(x - 5.0),
            round2(y - 5.0),
            round2(x + 5.0),
            round2(y + 5.0),
            round2(x - 5.0),
            round2(y + 5.0),
            round2(x + 5.0),
            round2(y - 5.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

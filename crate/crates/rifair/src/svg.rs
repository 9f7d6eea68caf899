//! Standalone SVG line charts for attack trajectories.
//!
//! No display server, no plotting dependency: the chart is assembled as
//! a short SVG document with fixed-precision coordinates so identical
//! runs emit byte-identical files.

use crate::diagnostics::TrajectoryStep;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    max_step: usize,
}

impl Frame {
    fn x(&self, step: usize) -> f64 {
        let span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + span * step as f64 / self.max_step.max(1) as f64
    }

    fn y(&self, p: f64) -> f64 {
        let span = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + span * (1.0 - p)
    }
}

/// Prediction series over steps 0..=n for one trajectory: the initial
/// probability followed by each step's post-perturbation probability.
fn series(initial: f64, trajectory: &[TrajectoryStep]) -> Vec<f64> {
    let mut points = Vec::with_capacity(trajectory.len() + 1);
    points.push(initial);
    points.extend(trajectory.iter().map(|s| s.f_after));
    points
}

fn polyline(frame: &Frame, points: &[f64], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| format!("{},{}", fmt(frame.x(i)), fmt(frame.y(p))))
        .collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
        color,
        coords.join(" ")
    )
}

fn markers(frame: &Frame, points: &[f64], color: &str) -> String {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                fmt(frame.x(i)),
                fmt(frame.y(p)),
                color
            )
        })
        .collect()
}

/// Render the positive-class trajectories of a pair as an SVG line
/// chart: one line per instance, step index on the x-axis, probability
/// on the y-axis, and a dashed rule at the decision threshold.
pub fn trajectory_chart(
    title: &str,
    f_initial_v: f64,
    trajectory_v: &[TrajectoryStep],
    f_initial_vp: f64,
    trajectory_vp: &[TrajectoryStep],
    tau_dec: f64,
) -> String {
    let pts_v = series(f_initial_v, trajectory_v);
    let pts_vp = series(f_initial_vp, trajectory_vp);
    let frame = Frame {
        max_step: pts_v.len().max(pts_vp.len()).saturating_sub(1),
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0),
        title
    ));

    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n  \
         <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = fmt(MARGIN_LEFT),
        t = fmt(MARGIN_TOP),
        b = fmt(HEIGHT - MARGIN_BOTTOM),
        r = fmt(WIDTH - MARGIN_RIGHT),
    ));
    for tick in 0..=4 {
        let p = tick as f64 / 4.0;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(frame.y(p) + 4.0),
            fmt(p)
        ));
    }
    for step in 0..=frame.max_step {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(frame.x(step)),
            fmt(HEIGHT - MARGIN_BOTTOM + 16.0),
            step
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">step</text>\n",
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 12.0)
    ));

    // Decision threshold.
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"gray\" \
         stroke-dasharray=\"6,4\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(WIDTH - MARGIN_RIGHT),
        y = fmt(frame.y(tau_dec)),
    ));

    svg.push_str(&polyline(&frame, &pts_v, "#1f77b4"));
    svg.push_str(&markers(&frame, &pts_v, "#1f77b4"));
    svg.push_str(&polyline(&frame, &pts_vp, "#d62728"));
    svg.push_str(&markers(&frame, &pts_vp, "#d62728"));

    // Legend.
    svg.push_str(&format!(
        "  <text x=\"{x}\" y=\"{y1}\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"#1f77b4\">f(v)</text>\n  \
         <text x=\"{x}\" y=\"{y2}\" font-family=\"sans-serif\" font-size=\"12\" \
         fill=\"#d62728\">f(v')</text>\n",
        x = fmt(WIDTH - MARGIN_RIGHT - 60.0),
        y1 = fmt(MARGIN_TOP + 14.0),
        y2 = fmt(MARGIN_TOP + 30.0),
    ));
    svg.push_str("</svg>\n");
    svg
}

//! Minimal SVG emitter for CDF step plots. Presentation only; the CSV
//! outputs are the contract.

use std::fmt::Write as _;

use multiret::ecdf::StepCdf;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 46.0;
const COLORS: [&str; 4] = ["#1f6fb2", "#e07b28", "#2e8b57", "#8b2e8b"];

/// Render labeled step curves into a standalone SVG document.
pub fn cdf_svg(curves: &[(&str, &StepCdf)]) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for (_, cdf) in curves {
        if let (Some(&first), Some(&last)) = (cdf.jump_xs().first(), cdf.jump_xs().last()) {
            x_min = x_min.min(first);
            x_max = x_max.max(last);
        }
    }
    if !x_min.is_finite() || x_min == x_max {
        x_min -= 0.5;
        x_max = x_min + 1.0;
    }
    let pad = 0.05 * (x_max - x_min);
    let (x_lo, x_hi) = (x_min - pad, x_max + pad);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |f: f64| HEIGHT - MARGIN - f * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    // axes
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>",
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>",
        MARGIN,
        MARGIN,
        MARGIN,
        HEIGHT - MARGIN
    );
    for tick in 0..=4 {
        let f = tick as f64 / 4.0;
        let y = sy(f);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#bbb\" stroke-dasharray=\"3 3\"/>",
            MARGIN,
            WIDTH - MARGIN
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{f}</text>",
            MARGIN - 6.0,
            y + 4.0
        );
        let x_val = x_lo + f * (x_hi - x_lo);
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>",
            sx(x_val),
            HEIGHT - MARGIN + 16.0,
            x_val
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">range (m)</text>",
        WIDTH / 2.0,
        HEIGHT - 8.0
    );

    for (idx, (label, cdf)) in curves.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut path = String::new();
        let mut prev = 0.0f64;
        let _ = write!(path, "M {} {}", sx(x_lo), sy(0.0));
        for &x in cdf.jump_xs() {
            let _ = write!(path, " L {} {}", sx(x), sy(prev));
            prev = cdf.eval(x);
            let _ = write!(path, " L {} {}", sx(x), sy(prev));
        }
        let _ = write!(path, " L {} {}", sx(x_hi), sy(prev));
        let _ = writeln!(
            out,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{label}</text>",
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * (idx as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

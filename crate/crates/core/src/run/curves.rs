use crate::train::TrainHistory;

pub const CURVES_FILE: &str = "curves.svg";

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 40.0;

fn series_points(values: &[f64], lo: f64, hi: f64, x0: f64) -> String {
    let n = values.len();
    let span = if hi > lo { hi - lo } else { 1.0 };
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = x0 + MARGIN + (PANEL_W - 2.0 * MARGIN) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let y = PANEL_H - MARGIN - (PANEL_H - 2.0 * MARGIN) * (v - lo) / span;
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn panel(out: &mut String, title: &str, x0: f64, series: [(&str, &str, Vec<f64>); 2], fixed: Option<(f64, f64)>) {
    let all = series.iter().flat_map(|s| s.2.iter().copied());
    let (lo, hi) = fixed.unwrap_or_else(|| {
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    });
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    out.push_str(&format!(
        "<g><text x=\"{:.1}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        x0 + PANEL_W / 2.0
    ));
    out.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/>\n",
        x0 + MARGIN,
        PANEL_W - 2.0 * MARGIN,
        PANEL_H - 2.0 * MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{hi:.3}</text><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{lo:.3}</text>\n",
        x0 + 2.0,
        MARGIN + 4.0,
        x0 + 2.0,
        PANEL_H - MARGIN
    ));
    for (i, (name, colour, values)) in series.iter().enumerate() {
        out.push_str(&format!(
            "<polyline data-series=\"{name}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            series_points(values, lo, hi, x0)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{colour}\">{name}</text>\n",
            x0 + MARGIN + 5.0 + 90.0 * i as f64,
            PANEL_H - 10.0
        ));
    }
    out.push_str("</g>\n");
}

/// Accuracy and loss against epoch, train and validation, as standalone SVG.
pub fn render_curves(history: &TrainHistory) -> String {
    let col = |f: fn(&crate::train::EpochRecord) -> f64| history.records.iter().map(f).collect::<Vec<_>>();
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{PANEL_H}\" font-family=\"sans-serif\">\n",
        2.0 * PANEL_W
    );
    panel(
        &mut out,
        "accuracy",
        0.0,
        [
            ("train_acc", "#1f77b4", col(|r| r.train_acc)),
            ("val_acc", "#d62728", col(|r| r.val_acc)),
        ],
        Some((0.0, 1.0)),
    );
    panel(
        &mut out,
        "loss",
        PANEL_W,
        [
            ("train_loss", "#1f77b4", col(|r| r.train_loss)),
            ("val_loss", "#d62728", col(|r| r.val_loss)),
        ],
        None,
    );
    out.push_str("</svg>\n");
    out
}

//! Deterministic ROC-curve SVG rendering.

/// One curve to draw: display label, area, and (fpr, tpr) points.
pub struct RocSeries {
    pub label: String,
    pub auc: f64,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 780.0;
const HEIGHT: f64 = 520.0;
const PLOT_LEFT: f64 = 60.0;
const PLOT_RIGHT: f64 = 500.0;
const PLOT_TOP: f64 = 20.0;
const PLOT_BOTTOM: f64 = 460.0;

/// Line colors, one per curve, cycled if more curves than entries.
const PALETTE: [&str; 11] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#101010",
];

fn x_of(fpr: f64) -> f64 {
    PLOT_LEFT + fpr * (PLOT_RIGHT - PLOT_LEFT)
}

fn y_of(tpr: f64) -> f64 {
    PLOT_BOTTOM - tpr * (PLOT_BOTTOM - PLOT_TOP)
}

/// Renders all curves into one SVG document.
///
/// Pure function of its input: identical curves yield byte-identical output.
pub fn render_roc_svg(series: &[RocSeries]) -> Result<String, String> {
    if series.is_empty() {
        return Err("no ROC curves to draw".to_string());
    }
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" \
         viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str(&format!(
        "  <rect width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"{PLOT_LEFT:.0}\" y=\"{PLOT_TOP:.0}\" width=\"{:.0}\" height=\"{:.0}\" \
         fill=\"none\" stroke=\"#333333\"/>\n",
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    ));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let x = x_of(v);
        let y = y_of(v);
        out.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{PLOT_BOTTOM:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#333333\"/>\n",
            PLOT_BOTTOM + 5.0
        ));
        out.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#101010\" \
             text-anchor=\"middle\">{v:.1}</text>\n",
            PLOT_BOTTOM + 20.0
        ));
        out.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{PLOT_LEFT:.2}\" y2=\"{y:.2}\" \
             stroke=\"#333333\"/>\n",
            PLOT_LEFT - 5.0
        ));
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#101010\" \
             text-anchor=\"end\">{v:.1}</text>\n",
            PLOT_LEFT - 10.0,
            y + 4.0
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" fill=\"#101010\" \
         text-anchor=\"middle\">FPR</text>\n",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 45.0
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" fill=\"#101010\" \
         text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">TPR</text>\n",
        PLOT_LEFT - 40.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        PLOT_LEFT - 40.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    ));
    out.push_str(&format!(
        "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999999\" \
         stroke-dasharray=\"6 4\"/>\n",
        x_of(0.0),
        y_of(0.0),
        x_of(1.0),
        y_of(1.0)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(fpr, tpr)| format!("{:.2},{:.2}", x_of(fpr), y_of(tpr)))
            .collect();
        out.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = 40.0 + 24.0 * i as f64;
        out.push_str(&format!(
            "  <line x1=\"520.00\" y1=\"{y:.2}\" x2=\"550.00\" y2=\"{y:.2}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n"
        ));
        out.push_str(&format!(
            "  <text x=\"556.00\" y=\"{:.2}\" font-size=\"12\" fill=\"#101010\">{} \
             (AUC {:.3})</text>\n",
            y + 4.0,
            escape(&s.label),
            s.auc
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perfect() -> RocSeries {
        RocSeries {
            label: "Model A".to_string(),
            auc: 1.0,
            points: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
        }
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(render_roc_svg(&[]).is_err());
    }

    #[test]
    fn perfect_curve_hits_the_three_corners() {
        let svg = render_roc_svg(&[perfect()]).expect("svg");
        assert!(
            svg.contains("points=\"60.00,460.00 60.00,20.00 500.00,20.00\""),
            "{svg}"
        );
        assert!(svg.contains("Model A (AUC 1.000)"));
    }

    #[test]
    fn one_polyline_per_curve_plus_dashed_diagonal() {
        let series: Vec<RocSeries> = (0..11)
            .map(|i| RocSeries {
                label: format!("M{i}"),
                auc: 0.5,
                points: vec![(0.0, 0.0), (1.0, 1.0)],
            })
            .collect();
        let svg = render_roc_svg(&series).expect("svg");
        assert_eq!(svg.matches("<polyline").count(), 11);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
    }

    #[test]
    fn identical_input_renders_identical_bytes() {
        let a = render_roc_svg(&[perfect()]).expect("svg");
        let b = render_roc_svg(&[perfect()]).expect("svg");
        assert_eq!(a, b);
    }
}

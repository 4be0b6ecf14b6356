//! Subject-level specification curves: sorted scores over completed paths
//! paired with the choices that produced them.

use super::config::CurveSort;
use super::ReportError;
use crate::hash::hex_id;
use crate::inconsistency::BinningScheme;
use crate::universe::DimensionName;
use std::fmt::Write as _;

pub const SVG_WIDTH: f64 = 900.0;
pub const SVG_HEIGHT: f64 = 600.0;
pub const GENERATOR_PREFIX: &str = "<!-- generator: ";

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePath {
    pub path_id: u64,
    pub choices: Vec<(DimensionName, String)>,
    pub score: f64,
    pub admissible: bool,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveData {
    pub subject: String,
    /// Declared options per dimension, in declaration order.
    pub dimensions: Vec<(DimensionName, Vec<String>)>,
    /// Completed paths in canonical order.
    pub paths: Vec<CurvePath>,
    pub baseline_score: Option<f64>,
    pub scheme: BinningScheme,
}

impl CurveData {
    pub fn ordered(&self, sort: CurveSort) -> Vec<&CurvePath> {
        let mut v: Vec<&CurvePath> = self.paths.iter().collect();
        if sort == CurveSort::ScoreAsc {
            // stable: ties keep canonical order
            v.sort_by(|a, b| a.score.total_cmp(&b.score));
        }
        v
    }
}

/// Columns: path_id, one per dimension, score, admissible, auc.
pub fn curve_csv(d: &CurveData, sort: CurveSort) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path_id".to_string()];
    header.extend(d.dimensions.iter().map(|(n, _)| n.as_str().to_string()));
    header.extend(["score", "admissible", "auc"].map(String::from));
    w.write_record(&header)?;
    for p in d.ordered(sort) {
        let mut row = vec![hex_id(p.path_id)];
        row.extend(p.choices.iter().map(|(_, o)| o.clone()));
        row.push(p.score.to_string());
        row.push(p.admissible.to_string());
        row.push(p.auc.to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| ReportError::Artifact(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const BAND_COLORS: [&str; 6] = ["#2c7bb6", "#abd9e9", "#ffffbf", "#fdae61", "#d7191c", "#7b3294"];

/// Two aligned panels: the subject's scores over risk-bin bands with the
/// baseline score as a dashed line, and a dot matrix of the choices.
pub fn curve_svg(d: &CurveData, sort: CurveSort) -> String {
    let (left, right) = (230.0, 880.0);
    let (top_y0, top_y1) = (50.0, 290.0);
    let (bot_y0, bot_y1) = (320.0, 585.0);
    let ys = |s: f64| top_y1 - s * (top_y1 - top_y0);
    let paths = d.ordered(sort);
    let n = paths.len().max(1);
    let step = (right - left) / n as f64;
    let xs = |k: usize| left + step * (k as f64 + 0.5);
    let radius = (step * 0.4).clamp(1.0, 4.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, "{GENERATOR_PREFIX}multiverse {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "<title>Specification curve for subject {}</title>", escape(&d.subject));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="30" font-size="14">Subject {} - {} completed paths, bins: {}</text>"#,
        escape(&d.subject),
        paths.len(),
        escape(&d.scheme.name)
    );

    // risk-bin bands
    let mut edges = vec![0.0];
    edges.extend(d.scheme.cuts.iter().cloned());
    edges.push(1.0);
    for k in 0..d.scheme.n_bins() {
        let (lo, hi) = (edges[k], edges[k + 1]);
        let _ = writeln!(
            s,
            r#"<rect x="{left:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.25"/>"#,
            ys(hi),
            right - left,
            ys(lo) - ys(hi),
            BAND_COLORS[k % BAND_COLORS.len()]
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#555555">{}</text>"##,
            right - 4.0,
            ys(hi) + 12.0,
            escape(&d.scheme.labels[k])
        );
    }
    // axis
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top_y0}" x2="{left}" y2="{top_y1}" stroke="black"/>"#);
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.2}</text>"#,
            left - 6.0,
            ys(t) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">predicted score</text>"#,
        left - 40.0,
        (top_y0 + top_y1) / 2.0,
        left - 40.0,
        (top_y0 + top_y1) / 2.0
    );
    if let Some(b) = d.baseline_score {
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{:.2}" x2="{right}" y2="{:.2}" stroke="#b2182b" stroke-dasharray="6 3"/>"##,
            ys(b),
            ys(b)
        );
    }
    for (k, p) in paths.iter().enumerate() {
        let (fill, stroke) = if p.admissible { ("black", "black") } else { ("none", "#888888") };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius:.2}" fill="{fill}" stroke="{stroke}"/>"#,
            xs(k),
            ys(p.score)
        );
    }

    // dot matrix
    let rows: Vec<(DimensionName, &str)> =
        d.dimensions.iter().flat_map(|(dim, opts)| opts.iter().map(move |o| (*dim, o.as_str()))).collect();
    let row_h = ((bot_y1 - bot_y0) / rows.len().max(1) as f64).min(16.0);
    for (r, (dim, opt)) in rows.iter().enumerate() {
        let y = bot_y0 + row_h * (r as f64 + 0.5);
        if r % 2 == 0 {
            let _ = writeln!(
                s,
                r##"<rect x="{left:.2}" y="{:.2}" width="{:.2}" height="{row_h:.2}" fill="#f0f0f0"/>"##,
                y - row_h / 2.0,
                right - left
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}: {}</text>"#,
            left - 6.0,
            y + 3.0,
            dim.as_str(),
            escape(opt)
        );
        for (k, p) in paths.iter().enumerate() {
            if p.choices.iter().any(|(d2, o)| d2 == dim && o == opt) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{y:.2}" r="{:.2}" fill="black"/>"#,
                    xs(k),
                    radius.min(row_h * 0.35)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Removes the generator comment so documents compare across versions.
pub fn strip_generator(svg: &str) -> String {
    svg.lines().filter(|l| !l.starts_with(GENERATOR_PREFIX)).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> CurveData {
        let dims = vec![
            (DimensionName::ModelFamily, vec!["lr".to_string(), "rf".to_string()]),
            (DimensionName::ModelSeed, vec!["s1".to_string()]),
        ];
        let paths = (0..n)
            .map(|i| CurvePath {
                path_id: i as u64,
                choices: vec![(DimensionName::ModelFamily, if i % 2 == 0 { "lr" } else { "rf" }.into()), (DimensionName::ModelSeed, "s1".into())],
                score: 0.9 - i as f64 * 0.1,
                admissible: i != 1,
                auc: 0.7,
            })
            .collect();
        CurveData {
            subject: "P<1>".into(),
            dimensions: dims,
            paths,
            baseline_score: Some(0.5),
            scheme: BinningScheme::equal_width("three", 3, None).unwrap(),
        }
    }

    #[test]
    fn csv_shape_and_sorting() {
        let d = data(3);
        let text = String::from_utf8(curve_csv(&d, CurveSort::ScoreAsc).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,model_family,model_seed,score,admissible,auc");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0000000000000002,"));
        let canonical = String::from_utf8(curve_csv(&d, CurveSort::PathCanonical).unwrap()).unwrap();
        assert!(canonical.lines().nth(1).unwrap().starts_with("0000000000000000,"));
    }

    #[test]
    fn svg_is_escaped_and_sized() {
        let svg = curve_svg(&data(2), CurveSort::ScoreAsc);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"width="900" height="600""#));
        assert!(svg.contains("P&lt;1&gt;"));
        assert!(!strip_generator(&svg).contains("generator"));
        // one top-panel point per path plus one dot per (path, dimension)
        assert_eq!(svg.matches("<circle").count(), 2 + 2 * 2);
    }
}

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{segment_runs, LabelMap, Run};

const WIDTH: f64 = 1000.0;
const BAR_HEIGHT: f64 = 30.0;
const LEFT: f64 = 90.0;
const TOP: f64 = 30.0;
const GAP: f64 = 15.0;
const LEGEND_ROW: f64 = 18.0;

/// One drawn rectangle: `x` and `width` in pixels, proportional to frame counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRect {
    pub label: usize,
    pub x: f64,
    pub width: f64,
}

/// Rectangles for the runs of `labels` spread over `width` pixels.
pub fn segment_rects(labels: &[usize], width: f64) -> Result<Vec<SegmentRect>> {
    let frames = labels.len() as f64;
    Ok(segment_runs(labels)?
        .into_iter()
        .map(|Run { label, start, end }| SegmentRect {
            label,
            x: width * start as f64 / frames,
            width: width * (end + 1 - start) as f64 / frames,
        })
        .collect())
}

/// Distinct hue per class id via golden-angle spacing.
pub fn class_color(id: usize) -> String {
    let hue = (id as f64 * 137.507_764) % 360.0;
    let light = if id.is_multiple_of(2) { 55 } else { 42 };
    format!("hsl({hue:.1},65%,{light}%)")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Ground-truth bar above the prediction bar, with a legend of the classes present.
pub fn render_svg(title: &str, gt: &[usize], pred: &[usize], map: &LabelMap) -> Result<String> {
    if gt.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    let mut present: Vec<usize> = gt.iter().chain(pred).copied().collect();
    present.sort_unstable();
    present.dedup();
    let tokens = present
        .iter()
        .map(|&c| map.token(c).map(escape))
        .collect::<Result<Vec<_>>>()?;

    let bars_end = TOP + 2.0 * BAR_HEIGHT + GAP;
    let height = bars_end + 20.0 + LEGEND_ROW * present.len() as f64;
    let total = LEFT + WIDTH + 10.0;
    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{height}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<text x="{LEFT}" y="18" font-size="14">{}</text>"#, escape(title)).unwrap();
    for (row, (name, labels)) in [("ground truth", gt), ("prediction", pred)].into_iter().enumerate() {
        let y = TOP + row as f64 * (BAR_HEIGHT + GAP);
        writeln!(w, r#"<text x="4" y="{}">{name}</text>"#, y + BAR_HEIGHT / 2.0 + 4.0).unwrap();
        for r in segment_rects(labels, WIDTH)? {
            writeln!(
                w,
                r#"<rect x="{:.3}" y="{y}" width="{:.3}" height="{BAR_HEIGHT}" fill="{}"/>"#,
                LEFT + r.x,
                r.width,
                class_color(r.label)
            )
            .unwrap();
        }
    }
    for (i, (&c, token)) in present.iter().zip(&tokens).enumerate() {
        let y = bars_end + 15.0 + i as f64 * LEGEND_ROW;
        writeln!(
            w,
            r#"<rect x="{LEFT}" y="{y}" width="12" height="12" fill="{}"/>"#,
            class_color(c)
        )
        .unwrap();
        writeln!(w, r#"<text x="{}" y="{}">{token}</text>"#, LEFT + 18.0, y + 10.0).unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> LabelMap {
        LabelMap::from_tokens(&["a<b", "pour", "stir"]).unwrap()
    }

    #[test]
    fn widths_follow_durations() {
        let rects = segment_rects(&[0, 0, 0, 1, 2, 2, 2, 2], 800.0).unwrap();
        let widths: Vec<f64> = rects.iter().map(|r| r.width).collect();
        assert_eq!(widths, vec![300.0, 100.0, 400.0]);
        assert_eq!(rects[2].x, 400.0);
        let sum: f64 = widths.iter().sum();
        assert!((sum - 800.0).abs() < 1e-9);
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let gt = [0, 0, 1, 1, 2];
        let pred = [0, 1, 1, 1, 2];
        let a = render_svg("v & w", &gt, &pred, &map()).unwrap();
        assert_eq!(a, render_svg("v & w", &gt, &pred, &map()).unwrap());
        assert!(a.contains("a&lt;b") && a.contains("v &amp; w"));
        assert!(!a.contains("a<b"));
        assert_eq!(a.matches("<rect").count(), 3 + 3 + 3);
    }

    #[test]
    fn mismatched_lengths_fail() {
        assert!(render_svg("x", &[0, 1], &[0], &map()).is_err());
    }

    #[test]
    fn colors_are_distinct() {
        let c: std::collections::BTreeSet<String> = (0..50).map(class_color).collect();
        assert_eq!(c.len(), 50);
    }
}

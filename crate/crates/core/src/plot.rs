//! Static SVG summary of per-channel value distributions.

use std::fmt::Write as _;

use crate::dataset::{ChannelStats, Histogram};
use crate::error::{Error, Result};

const COLS: usize = 6;
const CELL_W: f64 = 180.0;
const CELL_H: f64 = 120.0;
const PAD: f64 = 14.0;
const TITLE_H: f64 = 30.0;

/// One small histogram panel per channel with the mean (solid) and
/// neutral value (dashed) marked.
pub fn distribution_svg(title: &str, stats: &[ChannelStats], hists: &[Histogram]) -> Result<String> {
    if stats.len() != hists.len() {
        return Err(Error::Dimension {
            expected: stats.len(),
            actual: hists.len(),
        });
    }
    let rows = stats.len().div_ceil(COLS);
    let width = COLS as f64 * CELL_W;
    let height = TITLE_H + rows as f64 * CELL_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, (st, h)) in stats.iter().zip(hists).enumerate() {
        let x0 = (i % COLS) as f64 * CELL_W + PAD;
        let y0 = TITLE_H + (i / COLS) as f64 * CELL_H + PAD;
        let w = CELL_W - 2.0 * PAD;
        let plot_h = CELL_H - 2.0 * PAD - 16.0;
        let base = y0 + 14.0 + plot_h;
        let _ = writeln!(
            s,
            r#"<text x="{x0}" y="{}" font-size="11">{} μ={:.3} σ={:.3}</text>"#,
            y0 + 9.0,
            escape(&st.abbrev),
            st.mean,
            st.std
        );
        let peak = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bw = w / h.counts.len() as f64;
        for (b, &c) in h.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = plot_h * c as f64 / peak;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#5b7fa6"/>"##,
                x0 + b as f64 * bw,
                base - bh,
                bw.max(0.5),
                bh
            );
        }
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{base}" x2="{}" y2="{base}" stroke="#444" stroke-width="0.8"/>"##,
            x0 + w
        );
        let span = h.max - h.min;
        let xpos = |v: f64| x0 + w * (v - h.min) / span;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{base}" stroke="#c0392b" stroke-width="1.2"/>"##,
            xpos(st.mean),
            base - plot_h
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{base}" stroke="#27ae60" stroke-width="1.2" stroke-dasharray="3,2"/>"##,
            xpos(st.neutral),
            base - plot_h
        );
        let _ = writeln!(
            s,
            r##"<text x="{x0}" y="{}" font-size="9" fill="#666">{}</text><text x="{}" y="{}" font-size="9" fill="#666" text-anchor="end">{}</text>"##,
            base + 10.0,
            h.min,
            x0 + w,
            base + 10.0,
            h.max
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Structural similarity between frames and near-duplicate removal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Frame;

pub const DEFAULT_THRESHOLD: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Window {
    /// Whole-image statistics.
    Global,
    /// Mean over `size` x `size` windows placed every `stride` pixels.
    Sliding { size: u32, stride: u32 },
}

impl Default for Window {
    fn default() -> Self {
        Window::Sliding { size: 8, stride: 8 }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// `global`, or `sliding:SIZE[:STRIDE]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Parameter(format!(
                "bad window spec `{s}` (expected global or sliding:SIZE[:STRIDE])"
            ))
        };
        let mut parts = s.split(':');
        match parts.next() {
            Some("global") if parts.next().is_none() => Ok(Window::Global),
            Some("sliding") => {
                let size: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let stride: u32 = match parts.next() {
                    Some(p) => p.parse().map_err(|_| bad())?,
                    None => size,
                };
                if parts.next().is_some() || size == 0 || stride == 0 {
                    return Err(bad());
                }
                Ok(Window::Sliding { size, stride })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::Global => write!(f, "global"),
            Window::Sliding { size, stride } => write!(f, "sliding:{size}:{stride}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values.
    pub l: f64,
    pub window: Window,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.03,
            l: 255.0,
            window: Window::default(),
        }
    }
}

impl SsimParams {
    pub fn global() -> Self {
        SsimParams {
            window: Window::Global,
            ..Default::default()
        }
    }

    pub fn with_window(window: Window) -> Self {
        SsimParams {
            window,
            ..Default::default()
        }
    }

    pub fn c1(&self) -> f64 {
        let v = self.k1 * self.l;
        v * v
    }

    pub fn c2(&self) -> f64 {
        let v = self.k2 * self.l;
        v * v
    }
}

/// Population moments of one patch pair.
#[allow(clippy::too_many_arguments)]
fn patch_ssim(x: &Frame, y: &Frame, x0: usize, y0: usize, w: usize, h: usize, c1: f64, c2: f64) -> f64 {
    let stride = x.width as usize;
    let n = (w * h) as f64;
    let (mut sx, mut sy) = (0u64, 0u64);
    for r in y0..y0 + h {
        let base = r * stride + x0;
        for i in base..base + w {
            sx += x.pixels[i] as u64;
            sy += y.pixels[i] as u64;
        }
    }
    let mx = sx as f64 / n;
    let my = sy as f64 / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for r in y0..y0 + h {
        let base = r * stride + x0;
        for i in base..base + w {
            let dx = x.pixels[i] as f64 - mx;
            let dy = y.pixels[i] as f64 - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    ((2.0 * (mx * my) + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn ssim(x: &Frame, y: &Frame, p: &SsimParams) -> Result<f64> {
    if x.width != y.width || x.height != y.height {
        return Err(Error::Dimension {
            expected: x.pixels.len(),
            actual: y.pixels.len(),
        });
    }
    let (w, h) = (x.width as usize, x.height as usize);
    if w == 0 || h == 0 {
        return Err(Error::Empty("ssim of an empty frame".into()));
    }
    let (c1, c2) = (p.c1(), p.c2());
    match p.window {
        Window::Global => Ok(patch_ssim(x, y, 0, 0, w, h, c1, c2)),
        Window::Sliding { size, stride } => {
            let (size, stride) = (size as usize, stride as usize);
            if size == 0 || stride == 0 || size > w || size > h {
                return Err(Error::Parameter(format!(
                    "window {size} (stride {stride}) does not fit a {w}x{h} frame"
                )));
            }
            let (mut total, mut count) = (0.0, 0usize);
            for y0 in (0..=h - size).step_by(stride) {
                for x0 in (0..=w - size).step_by(stride) {
                    total += patch_ssim(x, y, x0, y0, size, size, c1, c2);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub kept_indices: Vec<usize>,
    pub removed_indices: Vec<usize>,
    /// `(kept anchor, candidate, ssim)` for every comparison made.
    pub pairwise_scores: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

/// Streaming near-duplicate filter: each frame is compared with the most
/// recently kept frame and dropped iff their SSIM exceeds the threshold.
#[derive(Clone, Debug)]
pub struct Deduper {
    threshold: f64,
    params: SsimParams,
    anchor: Option<(usize, Frame)>,
    next_index: usize,
    report: DedupReport,
}

impl Deduper {
    pub fn new(threshold: f64, params: SsimParams) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Parameter(format!("threshold {threshold} outside (0, 1]")));
        }
        Ok(Deduper {
            threshold,
            params,
            anchor: None,
            next_index: 0,
            report: DedupReport {
                threshold,
                ..Default::default()
            },
        })
    }

    /// Offers the next frame; returns whether it is kept.
    pub fn push(&mut self, frame: &Frame) -> Result<bool> {
        let i = self.next_index;
        self.next_index += 1;
        let keep = match &self.anchor {
            None => true,
            Some((j, anchor)) => {
                let score = ssim(anchor, frame, &self.params)?;
                self.report.pairwise_scores.push((*j, i, score));
                score <= self.threshold
            }
        };
        if keep {
            self.report.kept_indices.push(i);
            self.anchor = Some((i, frame.clone()));
        } else {
            self.report.removed_indices.push(i);
        }
        Ok(keep)
    }

    pub fn finish(self) -> DedupReport {
        self.report
    }
}

pub fn dedup(frames: &[Frame], threshold: f64, params: &SsimParams) -> Result<DedupReport> {
    let mut d = Deduper::new(threshold, *params)?;
    for f in frames {
        d.push(f)?;
    }
    Ok(d.finish())
}

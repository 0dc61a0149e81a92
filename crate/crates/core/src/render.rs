//! Deterministic schematic face rasterizer.
//!
//! A control vector becomes a grayscale image made of a few parametric
//! shapes: face ellipse, nose with wrinkle hatching, two brows, two eyes
//! with lids and pupils, and a mouth bounded by cubic lip curves. Each
//! control moves one shape parameter through an affine map
//! `base + gain * (value - neutral)`, so at the rest pose every offset is
//! exactly zero and the image is an exact left/right mirror.
//!
//! Face space is `[-1, 1]^2` with y pointing up; head and neck controls
//! apply one affine transform from face space to the canvas.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::animation::SampledSequence;
use crate::control_space::{idx, ControlRegistry, ControlVector, NUM_CONTROLS};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DEFAULT_RESOLUTION: u32 = 512;
pub const GEOMETRY_VERSION: &str = "schematic-face/1";

const BACKGROUND: u8 = 30;
const SKIN: u8 = 180;
const NOSE: u8 = 150;
const WRINKLE: u8 = 95;
const BROW: u8 = 45;
const LID: u8 = 155;
const SCLERA: u8 = 240;
const PUPIL: u8 = 20;
const LIP: u8 = 110;
const MOUTH_INTERIOR: u8 = 12;

/// Grayscale image, row-major, one byte per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub source_timestamp: f64,
}

impl Frame {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Frame {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
            source_timestamp: 0.0,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            source_timestamp: 0.0,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    /// Left/right mirror image.
    pub fn mirrored(&self) -> Frame {
        let mut out = self.clone();
        for row in out.pixels.chunks_mut(self.width as usize) {
            row.reverse();
        }
        out
    }

    pub fn differing_pixels(&self, other: &Frame) -> usize {
        self.pixels.iter().zip(&other.pixels).filter(|(a, b)| a != b).count()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Frame> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        Frame::from_pixels(w, h, gray.into_raw())
    }
}

// ---- geometry -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceLayout {
    pub face_center_y: f64,
    pub face_radius_x: f64,
    pub face_radius_y: f64,
    /// Chin drop per unit of jaw opening.
    pub chin_follow: f64,
    pub nose_top_y: f64,
    pub nose_bottom_y: f64,
    pub nose_half_width: f64,
    pub wrinkle_bottom_y: f64,
    pub wrinkle_top_y: f64,
    pub wrinkle_half_width: f64,
    pub wrinkle_period: f64,
    pub brow_inner_x: f64,
    pub brow_outer_x: f64,
    pub brow_y: f64,
    pub brow_arch: f64,
    pub brow_half_thickness: f64,
    pub eye_x: f64,
    pub eye_y: f64,
    pub eye_radius_x: f64,
    pub eye_radius_y: f64,
    /// Upper lid edge = eye_y + eye_radius_y * upper_lid_base at rest.
    pub upper_lid_base: f64,
    /// Lower lid edge = eye_y - eye_radius_y * lower_lid_base at rest.
    pub lower_lid_base: f64,
    pub pupil_radius: f64,
    pub mouth_y: f64,
    pub mouth_half_width: f64,
    pub upper_lip_height: f64,
    pub upper_lip_thickness: f64,
    pub lower_lip_thickness: f64,
    pub pitch_lift: f64,
    pub yaw_shift: f64,
    pub neck_pivot_y: f64,
}

/// Face layout plus one affine gain per control channel, keyed by the
/// channel abbreviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceGeometry {
    pub version: String,
    pub layout: FaceLayout,
    pub gains: BTreeMap<String, f64>,
}

impl Default for FaceGeometry {
    fn default() -> Self {
        let layout = FaceLayout {
            face_center_y: 0.05,
            face_radius_x: 0.64,
            face_radius_y: 0.8,
            chin_follow: 0.8,
            nose_top_y: 0.06,
            nose_bottom_y: -0.16,
            nose_half_width: 0.085,
            wrinkle_bottom_y: 0.02,
            wrinkle_top_y: 0.17,
            wrinkle_half_width: 0.075,
            wrinkle_period: 0.03,
            brow_inner_x: 0.1,
            brow_outer_x: 0.42,
            brow_y: 0.37,
            brow_arch: 0.035,
            brow_half_thickness: 0.026,
            eye_x: 0.26,
            eye_y: 0.19,
            eye_radius_x: 0.12,
            eye_radius_y: 0.075,
            upper_lid_base: 0.5,
            lower_lid_base: 0.5,
            pupil_radius: 0.036,
            mouth_y: -0.38,
            mouth_half_width: 0.21,
            upper_lip_height: 0.045,
            upper_lip_thickness: 0.03,
            lower_lip_thickness: 0.036,
            pitch_lift: 0.3,
            yaw_shift: 0.35,
            neck_pivot_y: -1.3,
        };
        let gains = [
            ("JP", -0.16),
            ("JY", 0.09),
            ("LBC", 0.03),
            ("LBDL", 0.045),
            ("LBDM", 0.045),
            ("LBDR", 0.045),
            ("LCRL", 0.07),
            ("LCRR", 0.07),
            ("LCSL", 0.08),
            ("LCSR", 0.08),
            ("LTC", 0.03),
            ("LTRL", 0.045),
            ("LTRM", 0.05),
            ("LTRR", 0.045),
            ("NW", 0.7),
            ("BIL", 0.16),
            ("BIR", 0.16),
            ("BOL", 0.16),
            ("BOR", 0.16),
            ("ELL", 0.3),
            ("ELR", 0.3),
            ("EUL", 0.45),
            ("EUR", 0.45),
            ("GTP", 0.03),
            ("GTT", 0.035),
            ("HP", 0.5),
            ("HR", 0.8),
            ("HY", 0.6),
            ("NP", 0.3),
            ("NR", 0.5),
        ]
        .into_iter()
        .map(|(k, g)| (k.to_string(), g))
        .collect();
        FaceGeometry {
            version: GEOMETRY_VERSION.to_string(),
            layout,
            gains,
        }
    }
}

impl FaceGeometry {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("geometry", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("geometry serializes")
    }

    /// Gains in registry order. Every channel needs a finite, nonzero gain
    /// so each control-to-parameter map is injective.
    pub fn gain_vector(&self, registry: &ControlRegistry) -> Result<[f64; NUM_CONTROLS]> {
        let mut out = [0.0; NUM_CONTROLS];
        for (i, ch) in registry.channels().iter().enumerate() {
            let g = *self
                .gains
                .get(&ch.abbrev)
                .ok_or_else(|| Error::parse("geometry.gains", format!("missing gain for `{}`", ch.abbrev)))?;
            if !g.is_finite() || g == 0.0 {
                return Err(Error::parse(
                    "geometry.gains",
                    format!("gain for `{}` must be finite and nonzero", ch.abbrev),
                ));
            }
            out[i] = g;
        }
        if let Some(extra) = self
            .gains
            .keys()
            .find(|k| !registry.channels().iter().any(|c| &c.abbrev == *k))
        {
            return Err(Error::parse("geometry.gains", format!("unknown channel `{extra}`")));
        }
        Ok(out)
    }
}

// ---- pose -----------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    m: [[f64; 2]; 2],
    t: [f64; 2],
}

impl Affine {
    const IDENTITY: Affine = Affine {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.t[0],
            self.m[1][0] * x + self.m[1][1] * y + self.t[1],
        )
    }

    /// self after other
    fn then(&self, outer: &Affine) -> Affine {
        let a = &outer.m;
        let b = &self.m;
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let (tx, ty) = outer.apply(self.t[0], self.t[1]);
        Affine { m, t: [tx, ty] }
    }

    fn linear(m: [[f64; 2]; 2]) -> Affine {
        Affine { m, t: [0.0, 0.0] }
    }

    fn translate(x: f64, y: f64) -> Affine {
        Affine {
            m: Affine::IDENTITY.m,
            t: [x, y],
        }
    }

    fn rotate_about(angle: f64, cx: f64, cy: f64) -> Affine {
        let (s, c) = angle.sin_cos();
        Affine::translate(-cx, -cy)
            .then(&Affine::linear([[c, -s], [s, c]]))
            .then(&Affine::translate(cx, cy))
    }

    fn inverse(&self) -> Affine {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        let m = [[d / det, -b / det], [-c / det, a / det]];
        let inv = Affine::linear(m);
        let (tx, ty) = inv.apply(self.t[0], self.t[1]);
        Affine { m, t: [-tx, -ty] }
    }
}

/// Shape parameters derived from one control vector.
#[derive(Clone, Debug)]
struct Pose {
    to_canvas: Affine,
    to_face: Affine,
    jaw_open: f64,
    jaw_shift: f64,
    wrinkle_duty: f64,
    // per side: [right, left]
    brow_inner_y: [f64; 2],
    brow_outer_y: [f64; 2],
    upper_lid: [f64; 2],
    lower_lid: [f64; 2],
    gaze: (f64, f64),
    mouth_half_width: [f64; 2],
    corner_y: [f64; 2],
    upper_side_raise: [f64; 2],
    lower_side_depress: [f64; 2],
    upper_mid_y: f64,
    upper_thickness: f64,
    lower_inner_mid_y: f64,
    lower_thickness: f64,
}

const RIGHT: usize = 0;
const LEFT: usize = 1;

impl Pose {
    fn new(v: &ControlVector, geo: &FaceGeometry, gains: &[f64; NUM_CONTROLS], registry: &ControlRegistry) -> Pose {
        let l = &geo.layout;
        // affine offset of channel i from its rest value
        let d = |i: usize| gains[i] * (v[i] - registry.channel(i).neutral);

        let head_center = l.face_center_y;
        let pitch = Affine::translate(0.0, -head_center)
            .then(&Affine::linear([[1.0, 0.0], [0.0, 1.0 + d(idx::HP)]]))
            .then(&Affine::translate(0.0, head_center + l.pitch_lift * d(idx::HP)));
        let yaw = Affine {
            m: [[1.0, d(idx::HY)], [0.0, 1.0]],
            t: [l.yaw_shift * d(idx::HY), 0.0],
        };
        let roll = Affine::rotate_about(d(idx::HR), 0.0, head_center);
        let neck = Affine::translate(0.0, d(idx::NP)).then(&Affine::rotate_about(d(idx::NR), 0.0, l.neck_pivot_y));
        let to_canvas = pitch.then(&yaw).then(&roll).then(&neck);
        let to_face = to_canvas.inverse();

        // JP rests at 1 (closed); lowering it opens the jaw
        let jaw_open = d(idx::JP);
        Pose {
            to_canvas,
            to_face,
            jaw_open,
            jaw_shift: d(idx::JY),
            wrinkle_duty: d(idx::NW),
            brow_inner_y: [l.brow_y + d(idx::BIR), l.brow_y + d(idx::BIL)],
            brow_outer_y: [l.brow_y + d(idx::BOR), l.brow_y + d(idx::BOL)],
            upper_lid: [
                l.eye_y + l.eye_radius_y * (l.upper_lid_base + d(idx::EUR)),
                l.eye_y + l.eye_radius_y * (l.upper_lid_base + d(idx::EUL)),
            ],
            lower_lid: [
                l.eye_y - l.eye_radius_y * (l.lower_lid_base + d(idx::ELR)),
                l.eye_y - l.eye_radius_y * (l.lower_lid_base + d(idx::ELL)),
            ],
            gaze: (d(idx::GTP), d(idx::GTT)),
            mouth_half_width: [l.mouth_half_width + d(idx::LCSR), l.mouth_half_width + d(idx::LCSL)],
            corner_y: [l.mouth_y + d(idx::LCRR), l.mouth_y + d(idx::LCRL)],
            upper_side_raise: [d(idx::LTRR), d(idx::LTRL)],
            lower_side_depress: [d(idx::LBDR), d(idx::LBDL)],
            // curl thickens outward, the inner edge stays on the lower lip
            upper_mid_y: l.mouth_y + l.upper_lip_height + d(idx::LTRM) + d(idx::LTC),
            upper_thickness: l.upper_lip_thickness + d(idx::LTC),
            lower_inner_mid_y: l.mouth_y + l.upper_lip_height - l.upper_lip_thickness - jaw_open - d(idx::LBDM),
            lower_thickness: l.lower_lip_thickness + d(idx::LBC),
        }
    }
}

/// Hermite blend: 1 at the mouth center, 0 at the corner, flat at both.
#[inline]
fn center_weight(s: f64) -> f64 {
    1.0 - s * s * (3.0 - 2.0 * s)
}

/// Cubic bump peaking at 1 for s = 1/3, zero at both ends.
#[inline]
fn side_weight(s: f64) -> f64 {
    let r = 1.0 - s;
    6.75 * s * r * r
}

// ---- rasterizer -----------------------------------------------------------

/// Renders control vectors with a fixed geometry and resolution.
#[derive(Clone, Debug)]
pub struct Renderer {
    geometry: FaceGeometry,
    registry: ControlRegistry,
    gains: [f64; NUM_CONTROLS],
    resolution: u32,
    exec: Exec,
}

struct Canvas<'a> {
    pixels: &'a mut [u8],
    res: usize,
    inv_res: f64,
    row0: usize,
    to_face: Affine,
}

impl Canvas<'_> {
    /// Paints `color` on pixels whose face-space point satisfies `inside`,
    /// scanning only the canvas box covering the face-space box `bbox`.
    fn fill<F>(&mut self, to_canvas: &Affine, bbox: [f64; 4], color: u8, inside: F)
    where
        F: Fn(f64, f64) -> bool,
    {
        let [x0, y0, x1, y1] = bbox;
        let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| to_canvas.apply(x, y));
        let cx0 = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let cx1 = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let cy0 = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let cy1 = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let res = self.res as f64;
        // x = (2c + 1 - res) / res  =>  c = (x * res + res - 1) / 2
        let col = |x: f64| ((x * res + res - 1.0) / 2.0).clamp(-1.0, res);
        // y = (res - 1 - 2r) / res  =>  r = (res - 1 - y * res) / 2
        let row = |y: f64| ((res - 1.0 - y * res) / 2.0).clamp(-1.0, res);
        let c_lo = (col(cx0).floor() - 1.0).max(0.0) as usize;
        let c_hi = ((col(cx1).ceil() + 1.0).min(res - 1.0)).max(-1.0);
        let r_lo = (row(cy1).floor() - 1.0).max(0.0) as usize;
        let r_hi = ((row(cy0).ceil() + 1.0).min(res - 1.0)).max(-1.0);
        if c_hi < 0.0 || r_hi < 0.0 {
            return;
        }
        let (c_hi, r_hi) = (c_hi as usize, r_hi as usize);
        let rows_here = self.pixels.len() / self.res;
        let r_lo = r_lo.max(self.row0);
        let r_hi = r_hi.min(self.row0 + rows_here - 1);
        let f = &self.to_face;
        for r in r_lo..=r_hi {
            let y = (self.res as f64 - 1.0 - 2.0 * r as f64) * self.inv_res;
            let line = &mut self.pixels[(r - self.row0) * self.res..(r - self.row0 + 1) * self.res];
            for (c, px) in line.iter_mut().enumerate().take(c_hi + 1).skip(c_lo) {
                let x = (2.0 * c as f64 + 1.0 - self.res as f64) * self.inv_res;
                let (fx, fy) = f.apply(x, y);
                if inside(fx, fy) {
                    *px = color;
                }
            }
        }
    }
}

impl Renderer {
    pub fn new(geometry: FaceGeometry, registry: ControlRegistry, resolution: u32) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::Parameter(format!("resolution {resolution} is too small")));
        }
        let gains = geometry.gain_vector(&registry)?;
        Ok(Renderer {
            geometry,
            registry,
            gains,
            resolution,
            exec: Exec::default(),
        })
    }

    pub fn standard(resolution: u32) -> Result<Self> {
        Self::new(FaceGeometry::default(), ControlRegistry::standard(), resolution)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn geometry(&self) -> &FaceGeometry {
        &self.geometry
    }

    pub fn registry(&self) -> &ControlRegistry {
        &self.registry
    }

    /// Rasterizes a registry-legal control vector.
    pub fn render(&self, v: &ControlVector) -> Result<Frame> {
        self.registry.validate(v)?;
        let pose = Pose::new(v, &self.geometry, &self.gains, &self.registry);
        let res = self.resolution as usize;
        let mut pixels = vec![BACKGROUND; res * res];
        let rows_per_band = 32;
        self.exec
            .for_each_chunk_mut(&mut pixels, res * rows_per_band, |band, chunk| {
                let mut canvas = Canvas {
                    pixels: chunk,
                    res,
                    inv_res: 1.0 / res as f64,
                    row0: band * rows_per_band,
                    to_face: pose.to_face,
                };
                self.paint(&pose, &mut canvas);
            });
        Ok(Frame {
            width: self.resolution,
            height: self.resolution,
            pixels,
            source_timestamp: 0.0,
        })
    }

    pub fn render_at(&self, v: &ControlVector, t: f64) -> Result<Frame> {
        let mut f = self.render(v)?;
        f.source_timestamp = t;
        Ok(f)
    }

    /// One frame per sample, in sample order, stamped with the sample time.
    pub fn render_batch(&self, seq: &SampledSequence) -> Result<Vec<Frame>> {
        let inner = self.clone().with_exec(Exec::Sequential);
        self.exec
            .map(&seq.samples, |s| inner.render_at(&s.vector, s.t))
            .into_iter()
            .collect()
    }

    /// Canvas-space pupil centers, `[right, left]`.
    pub fn pupil_centers(&self, v: &ControlVector) -> [(f64, f64); 2] {
        let pose = Pose::new(v, &self.geometry, &self.gains, &self.registry);
        let l = &self.geometry.layout;
        let (gx, gy) = pose.gaze;
        [
            pose.to_canvas.apply(l.eye_x + gx, l.eye_y + gy),
            pose.to_canvas.apply(-l.eye_x + gx, l.eye_y + gy),
        ]
    }

    fn paint(&self, pose: &Pose, canvas: &mut Canvas<'_>) {
        let l = &self.geometry.layout;
        let tc = pose.to_canvas;

        // face
        let fc = l.face_center_y;
        let (rx, ry_top) = (l.face_radius_x, l.face_radius_y);
        let ry_bot = l.face_radius_y + l.chin_follow * pose.jaw_open.max(0.0);
        let jaw_shift = pose.jaw_shift;
        canvas.fill(
            &tc,
            [-rx - jaw_shift.abs(), fc - ry_bot, rx + jaw_shift.abs(), fc + ry_top],
            SKIN,
            |x, y| {
                let dy = y - fc;
                if dy >= 0.0 {
                    let (u, w) = (x / rx, dy / ry_top);
                    u * u + w * w <= 1.0
                } else {
                    let w = dy / ry_bot;
                    let u = (x + jaw_shift * w) / rx;
                    u * u + w * w <= 1.0
                }
            },
        );

        // nose
        let (nt, nb, nw) = (l.nose_top_y, l.nose_bottom_y, l.nose_half_width);
        canvas.fill(&tc, [-nw, nb, nw, nt], NOSE, |x, y| {
            y >= nb && y <= nt && x.abs() <= nw * (nt - y) / (nt - nb)
        });
        if pose.wrinkle_duty > 0.0 {
            let (wb, wt, ww, period, duty) = (
                l.wrinkle_bottom_y,
                l.wrinkle_top_y,
                l.wrinkle_half_width,
                l.wrinkle_period,
                pose.wrinkle_duty.min(1.0),
            );
            canvas.fill(&tc, [-ww, wb, ww, wt], WRINKLE, |x, y| {
                y >= wb && y <= wt && x.abs() <= ww && ((y - wb) / period).fract() < duty
            });
        }

        // brows, eyes: right side in place, left side mirrored
        for side in [RIGHT, LEFT] {
            let sign = if side == RIGHT { 1.0 } else { -1.0 };
            let (xi, xo) = (l.brow_inner_x, l.brow_outer_x);
            let (yi, yo) = (pose.brow_inner_y[side], pose.brow_outer_y[side]);
            let (arch, half) = (l.brow_arch, l.brow_half_thickness);
            let lo = yi.min(yo) - half;
            let hi = yi.max(yo) + arch + half;
            let bbox = if side == RIGHT {
                [xi, lo, xo, hi]
            } else {
                [-xo, lo, -xi, hi]
            };
            canvas.fill(&tc, bbox, BROW, |x, y| {
                let x = sign * x;
                if x < xi || x > xo {
                    return false;
                }
                let s = (x - xi) / (xo - xi);
                let center = yi + (yo - yi) * s + 4.0 * arch * s * (1.0 - s);
                (y - center).abs() <= half
            });

            let (ex, ey, erx, ery) = (l.eye_x, l.eye_y, l.eye_radius_x, l.eye_radius_y);
            let (up, low) = (pose.upper_lid[side], pose.lower_lid[side]);
            let bbox = if side == RIGHT {
                [ex - erx, ey - ery, ex + erx, ey + ery]
            } else {
                [-ex - erx, ey - ery, -ex + erx, ey + ery]
            };
            let in_eye = move |x: f64, y: f64| {
                let u = (sign * x - ex) / erx;
                let w = (y - ey) / ery;
                u * u + w * w <= 1.0
            };
            canvas.fill(&tc, bbox, LID, in_eye);
            canvas.fill(&tc, bbox, SCLERA, |x, y| in_eye(x, y) && y > low && y < up);
            // gaze moves both pupils by the same canvas offset
            let (gx, gy) = pose.gaze;
            let (px, py, pr) = (sign * ex + gx, ey + gy, l.pupil_radius);
            canvas.fill(&tc, [px - pr, py - pr, px + pr, py + pr], PUPIL, |x, y| {
                let (dx, dy) = (x - px, y - py);
                dx * dx + dy * dy <= pr * pr && in_eye(x, y) && y > low && y < up
            });
        }

        // mouth
        let widths = pose.mouth_half_width;
        let corner = pose.corner_y;
        let top = pose.upper_mid_y;
        let tu = pose.upper_thickness;
        let tl = pose.lower_thickness;
        let lim = pose.lower_inner_mid_y;
        let raise = pose.upper_side_raise;
        let depress = pose.lower_side_depress;
        let side_of = |x: f64| if x >= 0.0 { RIGHT } else { LEFT };
        // upper lip outer and inner edges at horizontal offset x
        let upper = move |x: f64| -> Option<(f64, f64)> {
            let side = side_of(x);
            let s = x.abs() / widths[side];
            if s > 1.0 {
                return None;
            }
            let (c, b) = (center_weight(s), side_weight(s));
            let outer = corner[side] + (top - corner[side]) * c + raise[side] * b;
            Some((outer, outer - tu * c))
        };
        // lower lip inner and outer edges, following the jaw
        let lower = move |x: f64| -> Option<(f64, f64)> {
            let x = x - jaw_shift;
            let side = side_of(x);
            let s = x.abs() / widths[side];
            if s > 1.0 {
                return None;
            }
            let (c, b) = (center_weight(s), side_weight(s));
            let inner = corner[side] + (lim - corner[side]) * c - depress[side] * b;
            Some((inner, inner - tl * c))
        };
        let half = widths[RIGHT].max(widths[LEFT]) + jaw_shift.abs();
        let ys = [top, lim, corner[0], corner[1]];
        let y_hi = ys.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) + 0.1;
        let y_lo = ys.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - tl - 0.1;
        let bbox = [-half, y_lo, half, y_hi];
        canvas.fill(&tc, bbox, LIP, |x, y| {
            upper(x).is_some_and(|(outer, inner)| y <= outer && y >= inner)
                || lower(x).is_some_and(|(inner, outer)| y <= inner && y >= outer)
        });
        canvas.fill(&tc, bbox, MOUTH_INTERIOR, |x, y| match (upper(x), lower(x)) {
            (Some((_, u_inner)), Some((l_inner, _))) => y < u_inner && y > l_inner,
            _ => false,
        });
    }
}

//! Procedural stereo scenes with exact ground truth, domain degradations and
//! synthetic-pair augmentation.
//!
//! A scene is a fronto-parallel background plane plus a stack of textured
//! rectangles and ellipses, each at its own integer disparity. Later shapes
//! occlude earlier ones in both views. Every surface carries its own smooth
//! sinusoidal texture, defined in left-view coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eval::ValidityMask;
use crate::imgio::resize_field_to;
use crate::rng::Rng;
use crate::types::{DisparityMap, Field, Image, StereoPair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub num_shapes: usize,
    /// `[d_lo, d_hi]` in pixels; the background sits at `d_lo`.
    pub disp_range: [f64; 2],
    /// Base wavelength of the texture, in pixels.
    pub texture_scale: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 160,
            width: 160,
            num_shapes: 8,
            disp_range: [1.0, 9.0],
            texture_scale: 4.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.disp_range;
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("scene must be at least 1x1".into()));
        }
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad disparity range [{lo}, {hi}]")));
        }
        if hi >= self.width as f64 {
            return Err(Error::InvalidArgument(format!(
                "disparity {hi} does not fit in width {}",
                self.width
            )));
        }
        if lo.ceil() > hi.floor() {
            return Err(Error::InvalidArgument(format!(
                "disparity range [{lo}, {hi}] contains no integer"
            )));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return Err(Error::InvalidArgument("texture_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Footprint {
    Everywhere,
    Rect { y0: f64, y1: f64, x0: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Footprint {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Footprint::Everywhere => true,
            Footprint::Rect { y0, y1, x0, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Footprint::Ellipse { cy, cx, ry, rx } => {
                let (u, v) = ((y - cy) / ry, (x - cx) / rx);
                u * u + v * v <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Wave {
    fy: f64,
    fx: f64,
    amp: f64,
    phase: [f64; 3],
}

#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    waves: Vec<Wave>,
}

impl Texture {
    fn random(rng: &mut Rng, scale: f64) -> Self {
        let base = {
            let b = rng.uniform(100.0, 155.0);
            [0, 1, 2].map(|_| b + rng.uniform(-20.0, 20.0))
        };
        let waves = (0..6)
            .map(|k| {
                let wavelength = scale * (1.0 + k as f64 * 0.6) * rng.uniform(0.8, 1.25);
                let theta = rng.uniform(0.0, PI);
                let f = 2.0 * PI / wavelength;
                Wave {
                    fy: f * theta.sin(),
                    fx: f * theta.cos(),
                    amp: rng.uniform(10.0, 25.0),
                    phase: [0, 1, 2].map(|_| rng.uniform(0.0, 2.0 * PI)),
                }
            })
            .collect();
        Self { base, waves }
    }

    fn sample(&self, y: f64, x: f64, c: usize) -> f64 {
        let mut v = self.base[c];
        for w in &self.waves {
            v += w.amp * (w.fy * y + w.fx * x + w.phase[c]).sin();
        }
        v.round().clamp(0.0, 255.0)
    }
}

struct Surface {
    disparity: f64,
    footprint: Footprint,
    texture: Texture,
}

/// A generated pair plus its occlusion mask (`true` = no right correspondence).
#[derive(Debug, Clone)]
pub struct Scene {
    pub pair: StereoPair,
    pub occlusion: ValidityMask,
}

impl Scene {
    /// Pixels that do have a right correspondence.
    pub fn visible(&self) -> ValidityMask {
        let (h, w) = (self.occlusion.height(), self.occlusion.width());
        ValidityMask::from_fn(h, w, |y, x| !self.occlusion.get(y, x))
    }
}

fn build_surfaces(spec: &SceneSpec, rng: &mut Rng) -> Vec<Surface> {
    let [lo, hi] = spec.disp_range;
    let (lo_i, hi_i) = (lo.ceil() as i64, hi.floor() as i64);
    let (h, w) = (spec.height as f64, spec.width as f64);
    let mut surfaces = vec![Surface {
        disparity: lo_i as f64,
        footprint: Footprint::Everywhere,
        texture: Texture::random(rng, spec.texture_scale),
    }];
    for _ in 0..spec.num_shapes {
        let disparity = rng.int_inclusive(lo_i, hi_i) as f64;
        let cy = rng.uniform(0.0, h);
        let cx = rng.uniform(0.0, w);
        let ry = rng.uniform(h / 12.0, h / 5.0).max(1.0);
        let rx = rng.uniform(w / 12.0, w / 5.0).max(1.0);
        let footprint = if rng.uniform(0.0, 1.0) < 0.5 {
            Footprint::Rect {
                y0: cy - ry,
                y1: cy + ry,
                x0: cx - rx,
                x1: cx + rx,
            }
        } else {
            Footprint::Ellipse { cy, cx, ry, rx }
        };
        surfaces.push(Surface {
            disparity,
            footprint,
            texture: Texture::random(rng, spec.texture_scale),
        });
    }
    surfaces
}

/// Index of the frontmost surface seen at left-view position `(y, x)`.
fn top_left(surfaces: &[Surface], y: f64, x: f64) -> usize {
    (0..surfaces.len())
        .rev()
        .find(|&s| surfaces[s].footprint.contains(y, x))
        .unwrap_or(0)
}

/// Index of the frontmost surface seen at right-view position `(y, xr)`.
fn top_right(surfaces: &[Surface], y: f64, xr: f64) -> usize {
    (0..surfaces.len())
        .rev()
        .find(|&s| surfaces[s].footprint.contains(y, xr + surfaces[s].disparity))
        .unwrap_or(0)
}

/// Renders a synthetic stereo pair with exact ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let surfaces = build_surfaces(spec, &mut rng);
    let (h, w) = (spec.height, spec.width);
    let mut left = Vec::with_capacity(h * w * 3);
    let mut right = Vec::with_capacity(h * w * 3);
    let mut gt = Vec::with_capacity(h * w);
    let mut occluded = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64;
        for x in 0..w {
            let fx = x as f64;
            let s = top_left(&surfaces, fy, fx);
            let d = surfaces[s].disparity;
            gt.push(d);
            left.extend((0..3).map(|c| surfaces[s].texture.sample(fy, fx, c)));
            let xr = fx - d;
            occluded.push(xr < 0.0 || top_right(&surfaces, fy, xr) != s);

            let r = top_right(&surfaces, fy, fx);
            let dr = surfaces[r].disparity;
            right.extend((0..3).map(|c| surfaces[r].texture.sample(fy, fx + dr, c)));
        }
    }
    let pair = StereoPair::synthetic(
        Image::new(h, w, 3, left)?,
        Image::new(h, w, 3, right)?,
        DisparityMap::new(h, w, gt)?,
    )?;
    Ok(Scene {
        pair,
        occlusion: ValidityMask::new(h, w, occluded)?,
    })
}

/// Target-domain imperfections applied to clean pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainDegradation {
    /// Gaussian noise σ choices, per view.
    pub noise_sigmas: Vec<f64>,
    /// Per-channel brightness factor choices.
    pub brightness_factors: Vec<f64>,
    /// Per-view gamma is `1 + δ`, `δ` uniform in `±gamma_delta`.
    pub gamma_delta: f64,
    /// Right view is shifted down by `v` uniform in `[0, v_shift]` pixels.
    pub v_shift: f64,
}

impl Default for DomainDegradation {
    fn default() -> Self {
        Self {
            noise_sigmas: vec![6.0, 10.0],
            brightness_factors: vec![0.8, 1.0, 1.2],
            gamma_delta: 0.25,
            v_shift: 1.0,
        }
    }
}

impl DomainDegradation {
    /// No-op degradation.
    pub fn identity() -> Self {
        Self {
            noise_sigmas: vec![0.0],
            brightness_factors: vec![1.0],
            gamma_delta: 0.0,
            v_shift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigmas.is_empty() || self.brightness_factors.is_empty() {
            return Err(Error::Config("degradation choice sets must be nonempty".into()));
        }
        if self.noise_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("noise sigmas must be >= 0".into()));
        }
        if self.brightness_factors.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config("brightness factors must be > 0".into()));
        }
        if !(self.gamma_delta >= 0.0 && self.gamma_delta < 1.0) {
            return Err(Error::Config("gamma_delta must be in [0, 1)".into()));
        }
        if !(self.v_shift >= 0.0 && self.v_shift.is_finite()) {
            return Err(Error::Config("v_shift must be >= 0".into()));
        }
        Ok(())
    }
}

fn add_noise(data: &mut [f64], sigma: f64, rng: &mut Rng) {
    if sigma > 0.0 {
        for v in data {
            *v += rng.normal(0.0, sigma);
        }
    }
}

fn scale_channels(data: &mut [f64], channels: usize, factors: &[f64]) {
    for px in data.chunks_exact_mut(channels) {
        for (v, f) in px.iter_mut().zip(factors) {
            *v *= f;
        }
    }
}

/// Noise with the given σ, then per-channel brightness factors; clamped to `[0, 255]`.
pub fn augment_view(img: &Image, sigma: f64, factors: &[f64], rng: &mut Rng) -> Result<Image> {
    if factors.len() != img.channels() {
        return Err(Error::Dimension(format!(
            "{} brightness factors for {} channels",
            factors.len(),
            img.channels()
        )));
    }
    let mut data = img.data().to_vec();
    add_noise(&mut data, sigma, rng);
    scale_channels(&mut data, img.channels(), factors);
    Image::clamped(img.height(), img.width(), img.channels(), data)
}

/// Shifts an image down by `v` pixels (sub-pixel, bilinear, border-clamped).
pub fn shift_vertical(img: &Image, v: f64) -> Result<Image> {
    if v == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let planes = (0..img.channels())
        .map(|c| {
            let plane = img.channel(c);
            Field::from_fn(h, w, |y, x| {
                let sy = (y as f64 - v).clamp(0.0, (h - 1) as f64);
                let y0 = sy.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let t = sy - y0 as f64;
                let a = plane.at(y0, x);
                a + t * (plane.at(y1, x) - a)
            })
        })
        .collect::<Vec<_>>();
    Image::from_channels(&planes)
}

fn degrade_view(img: &Image, deg: &DomainDegradation, vertical: Option<f64>, rng: &mut Rng) -> Result<Image> {
    let sigma = *rng.choose(&deg.noise_sigmas);
    let factors: Vec<f64> = (0..img.channels())
        .map(|_| *rng.choose(&deg.brightness_factors))
        .collect();
    let delta = if deg.gamma_delta > 0.0 {
        rng.uniform(-deg.gamma_delta, deg.gamma_delta)
    } else {
        0.0
    };
    let mut out = augment_view(img, sigma, &factors, rng)?;
    if delta != 0.0 {
        let gamma = 1.0 + delta;
        let data = out.data().iter().map(|v| 255.0 * (v / 255.0).powf(gamma)).collect();
        out = Image::clamped(out.height(), out.width(), out.channels(), data)?;
    }
    if let Some(v) = vertical {
        out = shift_vertical(&out, v)?;
    }
    Ok(out)
}

/// Applies target-domain imperfections independently to each view and
/// returns an unlabeled domain pair.
pub fn apply_degradation(pair: &StereoPair, deg: &DomainDegradation, rng: &mut Rng) -> Result<StereoPair> {
    deg.validate()?;
    let left = degrade_view(pair.left(), deg, None, rng)?;
    let v = if deg.v_shift > 0.0 {
        rng.uniform(0.0, deg.v_shift)
    } else {
        0.0
    };
    let right = degrade_view(pair.right(), deg, Some(v), rng)?;
    StereoPair::domain(left, right)
}

/// Random noise and brightness augmentation for synthetic training pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Augmentation {
    pub noise_sigmas: Vec<f64>,
    pub brightness_factors: Vec<f64>,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            noise_sigmas: vec![0.0, 10.0, 15.0],
            brightness_factors: vec![0.8, 1.0, 1.2],
        }
    }
}

impl Augmentation {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigmas.is_empty() || self.brightness_factors.is_empty() {
            return Err(Error::Config("augmentation choice sets must be nonempty".into()));
        }
        if self.noise_sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite()))
            || self.brightness_factors.iter().any(|r| !(*r > 0.0 && r.is_finite()))
        {
            return Err(Error::Config("augmentation values out of range".into()));
        }
        Ok(())
    }
}

/// Independently augments both views of a synthetic pair; ground truth is untouched.
pub fn augment_synthetic(pair: &StereoPair, aug: &Augmentation, rng: &mut Rng) -> Result<StereoPair> {
    if pair.ground_truth().is_none() {
        return Err(Error::InvalidArgument("only synthetic pairs are augmented".into()));
    }
    let mut view = |img: &Image| {
        let sigma = *rng.choose(&aug.noise_sigmas);
        let factors: Vec<f64> = (0..img.channels())
            .map(|_| *rng.choose(&aug.brightness_factors))
            .collect();
        augment_view(img, sigma, &factors, rng)
    };
    let left = view(pair.left())?;
    let right = view(pair.right())?;
    pair.with_views(left, right)
}

/// Resizes a ground-truth map and rescales its values by the width ratio.
pub fn rescale_ground_truth(gt: &DisparityMap, height: usize, width: usize) -> Result<DisparityMap> {
    let k = if gt.width() > 1 && width > 1 {
        (width - 1) as f64 / (gt.width() - 1) as f64
    } else {
        width as f64 / gt.width() as f64
    };
    DisparityMap::from_field(resize_field_to(gt.as_field(), height, width)?.scaled(k))
}

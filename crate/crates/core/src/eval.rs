//! View synthesis from disparity, and quality metrics (PSNR, SSIM, EPE, 3ER).

use crate::types::{DisparityMap, Field, Image};
use crate::{Error, Result};

/// PSNR reported for exact reconstructions.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Per-pixel validity, `true` where a metric should look.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask length {} != {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn all(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        self.check(other.height, other.width)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    fn nonempty(&self) -> Result<usize> {
        match self.count() {
            0 => Err(Error::InvalidArgument("metric over an empty mask".into())),
            n => Ok(n),
        }
    }
}

/// Synthesizes the left view by sampling `right` at `(x - d(x, y), y)`.
///
/// Samples outside `[0, W-1]` are clamped to the border and marked invalid.
pub fn warp_right_to_left(right: &Image, disp: &DisparityMap) -> Result<(Image, ValidityMask)> {
    let (h, w, c) = (right.height(), right.width(), right.channels());
    if disp.height() != h || disp.width() != w {
        return Err(Error::Dimension(format!(
            "disparity {}x{} vs image {h}x{w}",
            disp.height(),
            disp.width()
        )));
    }
    let src = right.data();
    let mut out = Vec::with_capacity(h * w * c);
    let mut valid = Vec::with_capacity(h * w);
    let max_x = (w - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let sx = x as f64 - disp.at(y, x);
            valid.push((0.0..=max_x).contains(&sx));
            let sx = sx.clamp(0.0, max_x);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let t = sx - x0 as f64;
            let (p0, p1) = ((y * w + x0) * c, (y * w + x1) * c);
            for ch in 0..c {
                let a = src[p0 + ch];
                out.push(a + t * (src[p1 + ch] - a));
            }
        }
    }
    Ok((Image::clamped(h, w, c, out)?, ValidityMask::new(h, w, valid)?))
}

/// `10·log10(255² / MSE)` over masked pixels and all channels, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image, mask: &ValidityMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("PSNR inputs differ in shape".into()));
    }
    mask.check(a.height(), a.width())?;
    let n = mask.nonempty()?;
    let c = a.channels();
    let mut sse = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m {
            for ch in 0..c {
                let d = a.data()[i * c + ch] - b.data()[i * c + ch];
                sse += d * d;
            }
        }
    }
    let mse = sse / (n * c) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is `(h-10)×(w-10)`.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        for xo in 0..ow {
            horiz[y * ow + xo] = (0..n).map(|t| k[t] * x[y * w + xo + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for yo in 0..oh {
        for xo in 0..ow {
            out[yo * ow + xo] = (0..n).map(|t| k[t] * horiz[(yo + t) * ow + xo]).sum();
        }
    }
    out
}

fn ssim_plane(a: &Field, b: &Field, kernel: &[f64]) -> f64 {
    let (h, w) = (a.height(), a.width());
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect() };
    let mu_a = filter_valid(a.data(), h, w, kernel);
    let mu_b = filter_valid(b.data(), h, w, kernel);
    let aa = filter_valid(&prod(&|x, _| x * x), h, w, kernel);
    let bb = filter_valid(&prod(&|_, y| y * y), h, w, kernel);
    let ab = filter_valid(&prod(&|x, y| x * y), h, w, kernel);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 255; channels are averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("SSIM inputs differ in shape".into()));
    }
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let kernel = gaussian_kernel();
    let c = a.channels();
    let sum: f64 = (0..c)
        .map(|ch| ssim_plane(&a.channel(ch), &b.channel(ch), &kernel))
        .sum();
    Ok(sum / c as f64)
}

fn check_disparities(pred: &DisparityMap, gt: &DisparityMap, mask: &ValidityMask) -> Result<usize> {
    if !pred.same_shape(gt) {
        return Err(Error::Dimension("prediction and ground truth differ in shape".into()));
    }
    mask.check(pred.height(), pred.width())?;
    mask.nonempty()
}

/// End-point error: mean `|pred - gt|` over masked pixels.
pub fn epe(pred: &DisparityMap, gt: &DisparityMap, mask: &ValidityMask) -> Result<f64> {
    let n = check_disparities(pred, gt, mask)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.data())
        .filter(|(_, m)| **m)
        .map(|((p, g), _)| (p - g).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Percentage of masked pixels whose error is strictly greater than 3 px.
pub fn three_pixel_error(pred: &DisparityMap, gt: &DisparityMap, mask: &ValidityMask) -> Result<f64> {
    let n = check_disparities(pred, gt, mask)?;
    let bad = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.data())
        .filter(|((p, g), m)| **m && (*p - *g).abs() > 3.0)
        .count();
    Ok(100.0 * bad as f64 / n as f64)
}

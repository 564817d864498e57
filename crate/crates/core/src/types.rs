//! Images, scalar fields, disparity maps and stereo pairs.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// H×W×C intensities in `[0, 255]`, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "image data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("image intensity {v} outside [0, 255]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every value into `[0, 255]`.
    ///
    /// Non-finite inputs are rejected rather than clamped.
    pub fn clamped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 255.0);
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::clamped(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Single-channel view: the mean over channels.
    pub fn to_gray(&self) -> Field {
        if self.channels == 1 {
            return Field::from_raw(self.height, self.width, self.data.clone());
        }
        let c = self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / c)
            .collect();
        Field::from_raw(self.height, self.width, data)
    }

    /// Channel `c` as a scalar field.
    pub fn channel(&self, c: usize) -> Field {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Field::from_raw(self.height, self.width, data)
    }

    /// Reassembles an image from per-channel planes, clamping to `[0, 255]`.
    pub fn from_channels(planes: &[Field]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("no channel planes".into()))?;
        let (h, w) = (first.height(), first.width());
        if planes.iter().any(|p| p.height() != h || p.width() != w) {
            return Err(Error::Dimension("channel planes differ in size".into()));
        }
        let n = planes.len();
        let mut data = vec![0.0; h * w * n];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.data().iter().enumerate() {
                data[i * n + c] = *v;
            }
        }
        Self::clamped(h, w, n, data)
    }

    /// Crops a `height`×`width` window with top-left corner `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "crop {height}x{width}@({y0},{x0}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Self {
            height,
            width,
            channels: self.channels,
            data,
        })
    }
}

/// A finite H×W scalar field of arbitrary sign (cotangents, gray images, residuals).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "field data length {} != {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Self::from_raw(height, width, data))
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![0.0; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_raw(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::from_raw(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn scaled(&self, k: f64) -> Field {
        Field::from_raw(self.height, self.width, self.data.iter().map(|v| v * k).collect())
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &Field) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Field> {
        if y0 + height > self.height || x0 + width > self.width || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "crop {height}x{width}@({y0},{x0}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Ok(Field::from_raw(height, width, data))
    }
}

/// Left-view horizontal disparities in pixels; every value finite and `>= 0`.
///
/// A left pixel at column `x` corresponds to column `x - d` in the right view.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap(Field);

impl DisparityMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_field(Field::new(height, width, data)?)
    }

    pub fn from_field(field: Field) -> Result<Self> {
        if let Some(v) = field.data().iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidArgument(format!("negative disparity {v}")));
        }
        Ok(Self(field))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_field(Field::new(height, width, vec![value; height * width])?)
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        Ok(Self(self.0.crop(y0, x0, height, width)?))
    }
}

impl Deref for DisparityMap {
    type Target = Field;

    fn deref(&self) -> &Field {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Unlabeled target-domain pair.
    Domain,
    /// Labeled synthetic pair.
    Synthetic,
}

/// A rectified stereo pair. Synthetic pairs carry ground truth, domain pairs never do.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    left: Image,
    right: Image,
    origin: Origin,
    ground_truth: Option<DisparityMap>,
}

impl StereoPair {
    pub fn domain(left: Image, right: Image) -> Result<Self> {
        check_views(&left, &right)?;
        Ok(Self {
            left,
            right,
            origin: Origin::Domain,
            ground_truth: None,
        })
    }

    pub fn synthetic(left: Image, right: Image, ground_truth: DisparityMap) -> Result<Self> {
        check_views(&left, &right)?;
        if ground_truth.height() != left.height() || ground_truth.width() != left.width() {
            return Err(Error::Dimension(format!(
                "ground truth {}x{} vs views {}x{}",
                ground_truth.height(),
                ground_truth.width(),
                left.height(),
                left.width()
            )));
        }
        Ok(Self {
            left,
            right,
            origin: Origin::Synthetic,
            ground_truth: Some(ground_truth),
        })
    }

    pub fn left(&self) -> &Image {
        &self.left
    }

    pub fn right(&self) -> &Image {
        &self.right
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn ground_truth(&self) -> Option<&DisparityMap> {
        self.ground_truth.as_ref()
    }

    pub fn height(&self) -> usize {
        self.left.height()
    }

    pub fn width(&self) -> usize {
        self.left.width()
    }

    /// Same views, relabeled as a domain pair (ground truth dropped).
    pub fn into_domain(self) -> StereoPair {
        StereoPair {
            left: self.left,
            right: self.right,
            origin: Origin::Domain,
            ground_truth: None,
        }
    }

    /// Replaces the views, keeping origin and ground truth.
    pub fn with_views(&self, left: Image, right: Image) -> Result<Self> {
        check_views(&left, &right)?;
        if !left.same_shape(&self.left) {
            return Err(Error::Dimension("replacement views change the pair size".into()));
        }
        Ok(Self {
            left,
            right,
            origin: self.origin,
            ground_truth: self.ground_truth.clone(),
        })
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            left: self.left.crop(y0, x0, height, width)?,
            right: self.right.crop(y0, x0, height, width)?,
            origin: self.origin,
            ground_truth: self
                .ground_truth
                .as_ref()
                .map(|gt| gt.crop(y0, x0, height, width))
                .transpose()?,
        })
    }
}

fn check_views(left: &Image, right: &Image) -> Result<()> {
    if !left.same_shape(right) {
        return Err(Error::Dimension(format!(
            "left {}x{}x{} vs right {}x{}x{}",
            left.height(),
            left.width(),
            left.channels(),
            right.height(),
            right.width(),
            right.channels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range_and_bad_length() {
        assert!(Image::new(1, 1, 1, vec![256.0]).is_err());
        assert!(Image::new(1, 2, 1, vec![1.0]).is_err());
        assert!(Image::new(1, 1, 2, vec![1.0, 1.0]).is_err());
        assert!(Image::clamped(1, 1, 1, vec![f64::NAN]).is_err());
        let img = Image::clamped(1, 2, 1, vec![-3.0, 300.0]).unwrap();
        assert_eq!(img.data(), &[0.0, 255.0]);
    }

    #[test]
    fn gray_is_channel_mean() {
        let img = Image::new(1, 1, 3, vec![10.0, 20.0, 60.0]).unwrap();
        assert_eq!(img.to_gray().data(), &[30.0]);
    }

    #[test]
    fn disparity_rejects_negative() {
        assert!(DisparityMap::new(1, 1, vec![-0.1]).is_err());
        assert!(DisparityMap::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn pair_checks_views() {
        let a = Image::filled(2, 2, 1, 0.0).unwrap();
        let b = Image::filled(2, 3, 1, 0.0).unwrap();
        assert!(StereoPair::domain(a.clone(), b).is_err());
        let gt = DisparityMap::filled(3, 3, 1.0).unwrap();
        assert!(StereoPair::synthetic(a.clone(), a, gt).is_err());
    }

    #[test]
    fn channel_roundtrip() {
        let img = Image::from_fn(2, 3, 3, |y, x, c| (y * 30 + x * 7 + c) as f64).unwrap();
        let planes: Vec<Field> = (0..3).map(|c| img.channel(c)).collect();
        assert_eq!(Image::from_channels(&planes).unwrap(), img);
    }
}

//! PFM / PGM / PPM file I/O and bilinear resampling.
//!
//! PFM stores rows bottom-to-top; everything in memory is top-to-bottom.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::types::{DisparityMap, Field, Image};
use crate::{Error, Result};

/// Parsed PFM header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    /// Negative means little-endian payload.
    pub scale: f64,
}

impl PfmHeader {
    pub fn little_endian(&self) -> bool {
        self.scale < 0.0
    }
}

/// Raw PFM contents: 1 or 3 channels of f32 samples, top-to-bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub header: PfmHeader,
    pub data: Vec<f32>,
}

/// Reads whitespace-separated header tokens, honoring `#` comments.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn token(&mut self) -> Option<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()
    }

    /// Consumes the single whitespace byte that ends the header.
    fn end_header(&mut self) -> Option<usize> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            Some(self.pos + 1)
        } else {
            None
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_pfm(bytes: &[u8], path: &Path) -> Result<Pfm> {
    let bad = |reason: &str| Error::format("PFM", path, reason);
    let mut hr = HeaderReader { bytes, pos: 0 };
    let channels = match hr.token() {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(bad("expected 'Pf' or 'PF' magic")),
    };
    let width: usize = hr
        .token()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let height: usize = hr
        .token()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    let scale: f64 = hr
        .token()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be finite and nonzero"));
    }
    let start = hr.end_header().ok_or_else(|| bad("missing header terminator"))?;
    let n = width * height * channels;
    let payload = &bytes[start..];
    if payload.len() < n * 4 {
        return Err(bad(&format!(
            "truncated payload: {} bytes, expected {}",
            payload.len(),
            n * 4
        )));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (i, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if v.is_nan() {
            let (file_row, col) = (i / row, (i % row) / channels);
            return Err(bad(&format!(
                "NaN sample at row {} column {col}",
                height - 1 - file_row
            )));
        }
        // file row r holds image row height-1-r
        let file_row = i / row;
        let y = height - 1 - file_row;
        data[y * row + i % row] = v;
    }
    Ok(Pfm {
        header: PfmHeader {
            channels,
            width,
            height,
            scale,
        },
        data,
    })
}

pub fn encode_pfm(pfm: &Pfm) -> Vec<u8> {
    let h = &pfm.header;
    let magic = if h.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n{:?}\n", h.width, h.height, h.scale).into_bytes();
    let row = h.width * h.channels;
    let little = h.scale < 0.0;
    for y in (0..h.height).rev() {
        for v in &pfm.data[y * row..(y + 1) * row] {
            if little {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}

pub fn read_pfm_raw(path: impl AsRef<Path>) -> Result<Pfm> {
    let path = path.as_ref();
    parse_pfm(&read_bytes(path)?, path)
}

pub fn write_pfm_raw(path: impl AsRef<Path>, pfm: &Pfm) -> Result<()> {
    let h = &pfm.header;
    if h.channels != 1 && h.channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "PFM cannot hold {} channels",
            h.channels
        )));
    }
    if h.scale == 0.0 || !h.scale.is_finite() {
        return Err(Error::InvalidArgument("PFM scale must be finite and nonzero".into()));
    }
    if pfm.data.len() != h.width * h.height * h.channels {
        return Err(Error::Dimension("PFM payload length".into()));
    }
    write_bytes(path.as_ref(), &encode_pfm(pfm))
}

/// Reads a single-channel PFM as a disparity map.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let pfm = read_pfm_raw(path)?;
    if pfm.header.channels != 1 {
        return Err(Error::format(
            "PFM",
            path,
            "expected a single-channel 'Pf' disparity map",
        ));
    }
    let data: Vec<f64> = pfm.data.iter().map(|&v| v as f64).collect();
    DisparityMap::new(pfm.header.height, pfm.header.width, data).map_err(|e| Error::format("PFM", path, e.to_string()))
}

/// Writes a disparity map as a little-endian `Pf` file.
///
/// Samples are stored as f32; maps holding f32-representable values round-trip exactly.
pub fn write_pfm(path: impl AsRef<Path>, map: &DisparityMap) -> Result<()> {
    write_pfm_raw(
        path,
        &Pfm {
            header: PfmHeader {
                channels: 1,
                width: map.width(),
                height: map.height(),
                scale: -1.0,
            },
            data: map.data().iter().map(|&v| v as f32).collect(),
        },
    )
}

fn parse_pnm(bytes: &[u8], path: &Path, magic: &str, channels: usize) -> Result<Image> {
    let format = if channels == 1 { "PGM" } else { "PPM" };
    let bad = |reason: &str| Error::format(format, path, reason);
    let mut hr = HeaderReader { bytes, pos: 0 };
    if hr.token() != Some(magic) {
        return Err(bad(&format!("expected '{magic}' magic")));
    }
    let mut dims = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        dims[i] = hr
            .token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad {name}")))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(bad(&format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    let start = hr.end_header().ok_or_else(|| bad("missing header terminator"))?;
    let n = width * height * channels;
    let payload = &bytes[start..];
    if payload.len() < n {
        return Err(bad(&format!(
            "truncated payload: {} bytes, expected {n}",
            payload.len()
        )));
    }
    Image::new(
        height,
        width,
        channels,
        payload[..n].iter().map(|&b| b as f64).collect(),
    )
}

fn encode_pnm(img: &Image, magic: &str) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    out
}

/// Reads a binary (P5) PGM, maxval 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    parse_pnm(&read_bytes(path)?, path, "P5", 1)
}

/// Writes a binary PGM; intensities are rounded to the nearest integer.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument("PGM requires a single-channel image".into()));
    }
    write_bytes(path.as_ref(), &encode_pnm(img, "P5"))
}

/// Reads a binary (P6) PPM, maxval 255.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    parse_pnm(&read_bytes(path)?, path, "P6", 3)
}

/// Writes a binary PPM; intensities are rounded to the nearest integer.
pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument("PPM requires a 3-channel image".into()));
    }
    write_bytes(path.as_ref(), &encode_pnm(img, "P6"))
}

/// Reads a PGM or PPM, dispatching on the magic bytes.
pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    match bytes.get(..2) {
        Some(b"P5") => parse_pnm(&bytes, path, "P5", 1),
        Some(b"P6") => parse_pnm(&bytes, path, "P6", 3),
        _ => Err(Error::format("PNM", path, "expected P5 or P6 magic")),
    }
}

/// Output size for a scale factor `r`: `round(r·n)`, at least 1.
pub fn scaled_len(n: usize, r: f64) -> usize {
    ((n as f64 * r).round() as usize).max(1)
}

/// Corner-aligned source coordinate for output index `i` when resampling `n_in` → `n_out`.
#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Per-axis interpolation taps: `(i0, i1, t)` with sample = (1-t)·v[i0] + t·v[i1].
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let s = source_coord(i, n_in, n_out);
            let i0 = (s.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let t = (s - i0 as f64).clamp(0.0, 1.0);
            (i0, i1, t)
        })
        .collect()
}

/// Bilinear resampling of a scalar field to an explicit size, corner-aligned.
pub fn resize_field_to(x: &Field, height: usize, width: usize) -> Result<Field> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("resize target {height}x{width}")));
    }
    if height == x.height() && width == x.width() {
        return Ok(x.clone());
    }
    let ty = taps(x.height(), height);
    let tx = taps(x.width(), width);
    let w_in = x.width();
    let src = x.data();
    let mut out = Vec::with_capacity(height * width);
    for &(y0, y1, fy) in &ty {
        let r0 = &src[y0 * w_in..(y0 + 1) * w_in];
        let r1 = &src[y1 * w_in..(y1 + 1) * w_in];
        for &(x0, x1, fx) in &tx {
            let top = r0[x0] + fx * (r0[x1] - r0[x0]);
            let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
            let v = top + fy * (bot - top);
            // lerp can step a rounding error outside the convex hull
            let (lo, hi) = (
                r0[x0].min(r0[x1]).min(r1[x0]).min(r1[x1]),
                r0[x0].max(r0[x1]).max(r1[x0]).max(r1[x1]),
            );
            out.push(v.clamp(lo, hi));
        }
    }
    Ok(Field::from_raw(height, width, out))
}

fn check_ratio(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resize factor must be positive, got {r}"
        )));
    }
    Ok(())
}

/// Bilinear resize by factor `r` (`r < 1` down-samples). Values are not rescaled.
pub fn resize_field(x: &Field, r: f64) -> Result<Field> {
    check_ratio(r)?;
    resize_field_to(x, scaled_len(x.height(), r), scaled_len(x.width(), r))
}

pub fn resize_image_to(x: &Image, height: usize, width: usize) -> Result<Image> {
    let planes = (0..x.channels())
        .map(|c| resize_field_to(&x.channel(c), height, width))
        .collect::<Result<Vec<_>>>()?;
    Image::from_channels(&planes)
}

pub fn resize_image(x: &Image, r: f64) -> Result<Image> {
    check_ratio(r)?;
    resize_image_to(x, scaled_len(x.height(), r), scaled_len(x.width(), r))
}

/// Disparity values are resampled, not rescaled.
pub fn resize_disparity_to(x: &DisparityMap, height: usize, width: usize) -> Result<DisparityMap> {
    DisparityMap::from_field(resize_field_to(x.as_field(), height, width)?)
}

pub fn resize_disparity(x: &DisparityMap, r: f64) -> Result<DisparityMap> {
    DisparityMap::from_field(resize_field(x.as_field(), r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use std::path::PathBuf;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pfm_roundtrip() {
        let dir = tmp();
        let p = dir.path().join("a.pfm");
        let mut rng = Rng::new(5);
        let map = DisparityMap::new(6, 8, (0..48).map(|_| rng.uniform(0.0, 30.0) as f32 as f64).collect()).unwrap();
        write_pfm(&p, &map).unwrap();
        assert_eq!(read_pfm(&p).unwrap(), map);
    }

    fn fixture(scale: &str, little: bool) -> Vec<u8> {
        let mut bytes = format!("Pf\n4 2\n{scale}\n").into_bytes();
        // file rows are bottom-to-top: the first stored row is image row 1
        for v in [5.0f32, 6.0, 7.0, 8.0, 1.0, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&if little { v.to_le_bytes() } else { v.to_be_bytes() });
        }
        bytes
    }

    #[test]
    fn pfm_little_endian_fixture() {
        let pfm = parse_pfm(&fixture("-1.0", true), &PathBuf::from("x")).unwrap();
        assert_eq!((pfm.header.width, pfm.header.height), (4, 2));
        assert!(pfm.header.little_endian());
        assert_eq!(pfm.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn pfm_big_endian_fixture() {
        let pfm = parse_pfm(&fixture("+1.0", false), &PathBuf::from("x")).unwrap();
        assert!(!pfm.header.little_endian());
        assert_eq!(pfm.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn pfm_errors() {
        let p = PathBuf::from("x");
        let mut truncated = fixture("-1.0", true);
        truncated.truncate(truncated.len() - 1);
        assert!(parse_pfm(&truncated, &p).is_err());
        assert!(parse_pfm(b"P7\n4 2\n-1.0\n", &p).is_err());
        assert!(parse_pfm(&fixture("0.0", true), &p).is_err());
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        let err = parse_pfm(&nan, &p).unwrap_err().to_string();
        assert!(err.contains("NaN"), "{err}");
    }

    #[test]
    fn pgm_single_pixel() {
        let dir = tmp();
        let p = dir.path().join("a.pgm");
        let img = Image::new(1, 1, 1, vec![128.0]).unwrap();
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap().data(), &[128.0]);
    }

    #[test]
    fn ppm_fixture() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 10, 11, 12, 100, 101, 102, 250, 251, 252]);
        fs::write(&p, bytes).unwrap();
        let img = read_ppm(&p).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 3));
        assert_eq!(img.at(0, 1, 2), 12.0);
        assert_eq!(img.at(1, 0, 0), 100.0);
        assert_eq!(img.at(1, 1, 1), 251.0);
    }

    #[test]
    fn pnm_rejects_16_bit_and_garbage() {
        let dir = tmp();
        let p = dir.path().join("a.pgm");
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0, 0]);
        fs::write(&p, bytes).unwrap();
        assert!(read_pgm(&p).unwrap_err().to_string().contains("maxval"));
        fs::write(&p, b"P5\n1 x\n255\n\0").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = Field::filled(5, 7, 3.25);
        for r in [0.3, 0.5, 1.5, 2.0, 3.7] {
            let out = resize_field(&c, r).unwrap();
            assert!(out.data().iter().all(|&v| v == 3.25));
        }
        let mut rng = Rng::new(1);
        let x = Field::from_fn(4, 6, |_, _| rng.uniform(0.0, 9.0));
        assert_eq!(resize_field(&x, 1.0).unwrap(), x);
        assert!(resize_field(&x, 0.0).is_err());
        assert!(resize_field(&x, -1.0).is_err());
    }

    #[test]
    fn resize_matches_closed_form_bilinear() {
        let x = Field::new(2, 2, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let out = resize_field(&x, 1.5).unwrap();
        assert_eq!((out.height(), out.width()), (3, 3));
        // corner-aligned: target index i samples source coordinate i·(2-1)/(3-1)
        let f = |u: f64, v: f64| (1.0 - u) * (1.0 - v) * 0.0 + (1.0 - u) * v * 2.0 + u * (1.0 - v) * 4.0 + u * v * 6.0;
        for y in 0..3 {
            for xx in 0..3 {
                let expect = f(y as f64 * 0.5, xx as f64 * 0.5);
                assert!((out.at(y, xx) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_roundtrip_on_ramp() {
        let ramp = Field::from_fn(20, 30, |y, x| 0.7 * y as f64 + 1.3 * x as f64);
        let up = resize_field(&ramp, 1.5).unwrap();
        let back = resize_field_to(&up, 20, 30).unwrap();
        for (a, b) in back.data().iter().zip(ramp.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn resize_stays_in_range() {
        let mut rng = Rng::new(9);
        let x = Field::from_fn(9, 11, |_, _| rng.uniform(-4.0, 4.0));
        let (lo, hi) = x
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        for r in [0.4, 1.3, 2.6] {
            let out = resize_field(&x, r).unwrap();
            assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}

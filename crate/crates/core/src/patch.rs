//! Non-overlapping square patch tiling of H×W maps.
//!
//! Patches are numbered row-major over the grid and each patch is vectorized
//! row-major, so patch `j` covers grid cell `(j / cols, j % cols)`.

use crate::types::Field;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch_side: usize,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    pub fn new(patch_side: usize, rows: usize, cols: usize) -> Result<Self> {
        if patch_side == 0 || rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate patch grid: side {patch_side}, {rows}x{cols} patches"
            )));
        }
        Ok(Self { patch_side, rows, cols })
    }

    /// Grid tiling a `height`×`width` map exactly; errors unless both are multiples of `patch_side`.
    pub fn for_map(height: usize, width: usize, patch_side: usize) -> Result<Self> {
        if patch_side == 0 || !height.is_multiple_of(patch_side) || !width.is_multiple_of(patch_side) {
            return Err(Error::Dimension(format!(
                "{height}x{width} map is not tiled by {patch_side}x{patch_side} patches"
            )));
        }
        Self::new(patch_side, height / patch_side, width / patch_side)
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels per patch, `p²`.
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    /// Number of patches.
    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch_side
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch_side
    }

    fn check(&self, map: &Field, j: usize) -> Result<(usize, usize)> {
        if map.height() != self.height() || map.width() != self.width() {
            return Err(Error::Dimension(format!(
                "map {}x{} vs patch grid {}x{}",
                map.height(),
                map.width(),
                self.height(),
                self.width()
            )));
        }
        if j >= self.patch_count() {
            return Err(Error::IndexOutOfRange {
                index: j,
                count: self.patch_count(),
            });
        }
        Ok(((j / self.cols) * self.patch_side, (j % self.cols) * self.patch_side))
    }
}

/// The `j`-th patch of `map`, vectorized row-major.
pub fn extract_patch(map: &Field, grid: &PatchGrid, j: usize) -> Result<Vec<f64>> {
    let (y0, x0) = grid.check(map, j)?;
    let p = grid.patch_side;
    let w = map.width();
    let mut out = Vec::with_capacity(p * p);
    for y in y0..y0 + p {
        out.extend_from_slice(&map.data()[y * w + x0..y * w + x0 + p]);
    }
    Ok(out)
}

/// Adds `patch` into tile `j` of `acc`; the adjoint of [`extract_patch`].
pub fn scatter_patch_add(acc: &mut Field, grid: &PatchGrid, j: usize, patch: &[f64]) -> Result<()> {
    let (y0, x0) = grid.check(acc, j)?;
    let p = grid.patch_side;
    if patch.len() != p * p {
        return Err(Error::Dimension(format!("patch length {} != {}", patch.len(), p * p)));
    }
    let w = acc.width();
    let data = acc.data_mut();
    for (r, row) in patch.chunks_exact(p).enumerate() {
        let start = (y0 + r) * w + x0;
        for (dst, v) in data[start..start + p].iter_mut().zip(row) {
            *dst += v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    fn map2x2() -> Field {
        Field::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn pixel_patches() {
        let g = PatchGrid::for_map(2, 2, 1).unwrap();
        assert_eq!(extract_patch(&map2x2(), &g, 2).unwrap(), vec![3.0]);
    }

    #[test]
    fn single_patch_is_whole_map() {
        let g = PatchGrid::for_map(2, 2, 2).unwrap();
        assert_eq!(extract_patch(&map2x2(), &g, 0).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ramp_patch_matches_slicing_oracle() {
        let ramp = Field::from_fn(4, 4, |y, x| (y * 4 + x) as f64);
        let g = PatchGrid::for_map(4, 4, 2).unwrap();
        // rows 0-1, columns 2-3
        let mut oracle = Vec::new();
        for y in 0..2 {
            for x in 2..4 {
                oracle.push(ramp.at(y, x));
            }
        }
        assert_eq!(extract_patch(&ramp, &g, 1).unwrap(), oracle);
    }

    #[test]
    fn errors() {
        let g = PatchGrid::for_map(2, 2, 1).unwrap();
        assert!(matches!(
            extract_patch(&map2x2(), &g, 4),
            Err(Error::IndexOutOfRange { index: 4, count: 4 })
        ));
        let g3 = PatchGrid::for_map(3, 3, 1).unwrap();
        assert!(extract_patch(&map2x2(), &g3, 0).is_err());
        assert!(PatchGrid::for_map(5, 4, 2).is_err());
        let mut acc = Field::zeros(2, 2);
        assert!(scatter_patch_add(&mut acc, &g, 0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scatter_of_all_patches_reconstructs() {
        let mut rng = Rng::new(3);
        let x = Field::from_fn(6, 9, |_, _| rng.uniform(-5.0, 5.0));
        let g = PatchGrid::for_map(6, 9, 3).unwrap();
        let mut acc = Field::zeros(6, 9);
        for j in 0..g.patch_count() {
            let p = extract_patch(&x, &g, j).unwrap();
            scatter_patch_add(&mut acc, &g, j, &p).unwrap();
        }
        assert_eq!(acc, x);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = Rng::new(11);
        let g = PatchGrid::for_map(4, 4, 2).unwrap();
        for _ in 0..20 {
            let x = Field::from_fn(4, 4, |_, _| rng.uniform(-1.0, 1.0));
            let patch: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
            for j in 0..4 {
                let lhs: f64 = patch
                    .iter()
                    .zip(extract_patch(&x, &g, j).unwrap())
                    .map(|(a, b)| a * b)
                    .sum();
                let mut s = Field::zeros(4, 4);
                scatter_patch_add(&mut s, &g, j, &patch).unwrap();
                let rhs: f64 = s.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scatter_zero_patch_is_identity() {
        let g = PatchGrid::for_map(2, 2, 2).unwrap();
        let mut acc = map2x2();
        scatter_patch_add(&mut acc, &g, 0, &[0.0; 4]).unwrap();
        assert_eq!(acc, map2x2());
    }
}

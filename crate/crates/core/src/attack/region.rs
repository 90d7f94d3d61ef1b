use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a region selection mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionProvenance {
    AnnotationBox,
    FullImage,
}

/// Binary region selection mask `S` over the output image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    mask: Vec<bool>,
    provenance: RegionProvenance,
}

impl RegionMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            mask: vec![true; height * width],
            provenance: RegionProvenance::FullImage,
        }
    }

    /// Rectangle of `rows × cols` pixels with top-left corner `(row, col)`.
    pub fn from_box(
        height: usize,
        width: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || row + rows > height || col + cols > width {
            return Err(Error::invalid(format!(
                "box {rows}x{cols} at ({row},{col}) does not fit a {height}x{width} image"
            )));
        }
        let mut mask = vec![false; height * width];
        for r in row..row + rows {
            mask[r * width + col..r * width + col + cols]
                .iter_mut()
                .for_each(|m| *m = true);
        }
        Ok(Self {
            height,
            width,
            mask,
            provenance: RegionProvenance::AnnotationBox,
        })
    }

    pub fn from_mask(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::shape(
                "region_mask",
                format!("{} entries for a {height}x{width} grid", mask.len()),
            ));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("region mask selects no voxels"));
        }
        Ok(Self {
            height,
            width,
            mask,
            provenance: RegionProvenance::AnnotationBox,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn provenance(&self) -> RegionProvenance {
        self.provenance
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Tight bounding box `(row, col, rows, cols)` of the selected voxels.
    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let (r, c) = (i / self.width, i % self.width);
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r);
            c1 = c1.max(c);
        }
        (r0, c0, r1 + 1 - r0, c1 + 1 - c0)
    }
}

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Real, nonnegative magnitude image `H×W` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ReconImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(
                "image",
                format!(
                    "{height}x{width} image needs {} pixels, got {}",
                    height * width,
                    pixels.len()
                ),
            ));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "image pixel {i} is {} (must be finite and nonnegative)",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    /// Wraps a real `[H,W]` (or `[1,H,W]`) tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [h, w] | [1, h, w] => (*h, *w),
            _ => return Err(Error::shape("image", format!("expected [H,W], got {s:?}"))),
        };
        let data = t
            .as_real()
            .ok_or_else(|| Error::invalid("image tensor must be real"))?;
        Self::new(h, w, data.to_vec())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::real(&[self.height, self.width], self.pixels.clone()).expect("valid image")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    /// Rectangular sub-image `rows × cols` starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self> {
        if row + rows > self.height || col + cols > self.width {
            return Err(Error::shape(
                "crop",
                format!(
                    "{rows}x{cols} at ({row},{col}) exceeds {}x{}",
                    self.height, self.width
                ),
            ));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            out.extend_from_slice(&self.pixels[r * self.width + col..r * self.width + col + cols]);
        }
        Ok(Self {
            height: rows,
            width: cols,
            pixels: out,
        })
    }

    /// Centered crop to `rows × cols`.
    pub fn center_crop(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows > self.height || cols > self.width {
            return Err(Error::shape(
                "center_crop",
                format!("{rows}x{cols} larger than {}x{}", self.height, self.width),
            ));
        }
        self.crop(
            (self.height - rows) / 2,
            (self.width - cols) / 2,
            rows,
            cols,
        )
    }
}

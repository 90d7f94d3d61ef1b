//! Fixed-grid bilinear resampling with zero padding outside the source grid.

use super::C64;

/// Precomputed bilinear taps mapping an `in_h×in_w` plane onto an `out_h×out_w` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleGrid {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Up to four `(source index, weight)` taps per output pixel.
    taps: Vec<[(u32, f64); 4]>,
}

const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// `cos`/`sin` of an angle in degrees, exact at multiples of 90°.
fn cos_sin_deg(theta_deg: f64) -> (f64, f64) {
    let q = theta_deg / 90.0;
    if q.fract() == 0.0 {
        match (q as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let t = theta_deg.to_radians();
        (t.cos(), t.sin())
    }
}

impl ResampleGrid {
    /// Builds a grid from a map of output pixel `(row, col)` to fractional source `(row, col)`.
    pub fn from_fn(
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
        mut source: impl FnMut(f64, f64) -> (f64, f64),
    ) -> Self {
        let mut taps = Vec::with_capacity(out_h * out_w);
        for r in 0..out_h {
            for c in 0..out_w {
                let (sr, sc) = source(r as f64, c as f64);
                let (sr, sc) = (snap(sr), snap(sc));
                let r0 = sr.floor();
                let c0 = sc.floor();
                let fr = sr - r0;
                let fc = sc - c0;
                let mut t = [(0u32, 0.0f64); 4];
                let corners = [
                    (r0, c0, (1.0 - fr) * (1.0 - fc)),
                    (r0, c0 + 1.0, (1.0 - fr) * fc),
                    (r0 + 1.0, c0, fr * (1.0 - fc)),
                    (r0 + 1.0, c0 + 1.0, fr * fc),
                ];
                for (slot, &(rr, cc, wgt)) in t.iter_mut().zip(&corners) {
                    let inside = rr >= 0.0 && cc >= 0.0 && rr < in_h as f64 && cc < in_w as f64;
                    if inside && wgt != 0.0 {
                        *slot = ((rr as usize * in_w + cc as usize) as u32, wgt);
                    }
                }
                taps.push(t);
            }
        }
        Self {
            in_h,
            in_w,
            out_h,
            out_w,
            taps,
        }
    }

    /// In-plane rotation by `theta_deg` degrees about the grid center.
    ///
    /// Positive angles turn the image counter-clockwise as displayed with row 0
    /// at the top. The output pixel `p` samples the input at `R(-θ)(p - c) + c`.
    pub fn rotation(h: usize, w: usize, theta_deg: f64) -> Self {
        let (cos, sin) = cos_sin_deg(theta_deg);
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        Self::from_fn(h, w, h, w, |r, c| {
            // Cartesian frame: x to the right, y up.
            let x = c - cx;
            let y = cy - r;
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            (cy - sy, sx + cx)
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn apply_real(&self, src: &[f64]) -> Vec<f64> {
        self.taps
            .iter()
            .map(|t| t.iter().map(|&(i, w)| w * src[i as usize]).sum())
            .collect()
    }

    pub fn apply_complex(&self, src: &[C64]) -> Vec<C64> {
        self.taps
            .iter()
            .map(|t| {
                t.iter()
                    .fold(C64::new(0.0, 0.0), |acc, &(i, w)| acc + src[i as usize] * w)
            })
            .collect()
    }

    pub fn adjoint_real(&self, g: &[f64], dst: &mut [f64]) {
        for (t, &gv) in self.taps.iter().zip(g) {
            for &(i, w) in t {
                dst[i as usize] += w * gv;
            }
        }
    }

    pub fn adjoint_complex(&self, g: &[C64], dst: &mut [C64]) {
        for (t, &gv) in self.taps.iter().zip(g) {
            for &(i, w) in t {
                dst[i as usize] += gv * w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rotation_is_identity() {
        let g = ResampleGrid::rotation(5, 6, 0.0);
        let x: Vec<f64> = (0..30).map(|v| v as f64).collect();
        assert_eq!(g.apply_real(&x), x);
    }

    #[test]
    fn quarter_turn_is_a_permutation() {
        let n = 4;
        let g = ResampleGrid::rotation(n, n, 90.0);
        let x: Vec<f64> = (0..n * n).map(|v| v as f64 + 1.0).collect();
        let y = g.apply_real(&x);
        let mut sorted = y.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, x);
        // counter-clockwise: the top-right corner moves to the top-left
        assert_eq!(y[0], x[n - 1]);
    }

    #[test]
    fn adjoint_matches_inner_product() {
        let g = ResampleGrid::rotation(7, 9, 12.5);
        let x: Vec<f64> = (0..63).map(|v| ((v * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..63).map(|v| ((v * 13) % 7) as f64 - 3.0).collect();
        let ax = g.apply_real(&x);
        let mut aty = vec![0.0; 63];
        g.adjoint_real(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

//! Direct stride-1 2-D convolution kernels (cross-correlation, zero padding).

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }

    /// Output column range `[lo, hi)` whose input column `ox + kx - pad` is in bounds.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.out_w());
        (lo, hi.max(lo))
    }

    #[inline]
    fn src_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy + ky).checked_sub(self.pad)?;
        (iy < self.h).then_some(iy)
    }
}

pub(crate) fn forward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; g.cout * oh * ow];
    for co in 0..g.cout {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..g.cin {
            let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = weight[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = g.col_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    let shift = lo + kx - g.pad;
                    for oy in 0..oh {
                        let Some(iy) = g.src_row(oy, ky) else {
                            continue;
                        };
                        let dst = &mut plane[oy * ow + lo..oy * ow + hi];
                        let s = &src[iy * g.w + shift..iy * g.w + shift + (hi - lo)];
                        for (d, x) in dst.iter_mut().zip(s) {
                            *d += wv * x;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn backward_input(g: &ConvGeom, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut gin = vec![0.0; g.cin * g.h * g.w];
    for co in 0..g.cout {
        let gp = &grad_out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..g.cin {
            let dst_plane = &mut gin[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = weight[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = g.col_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    let shift = lo + kx - g.pad;
                    for oy in 0..oh {
                        let Some(iy) = g.src_row(oy, ky) else {
                            continue;
                        };
                        let d = &mut dst_plane[iy * g.w + shift..iy * g.w + shift + (hi - lo)];
                        let s = &gp[oy * ow + lo..oy * ow + hi];
                        for (dv, gv) in d.iter_mut().zip(s) {
                            *dv += wv * gv;
                        }
                    }
                }
            }
        }
    }
    gin
}

pub(crate) fn backward_weight(g: &ConvGeom, grad_out: &[f64], input: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut gw = vec![0.0; g.cout * g.cin * g.kh * g.kw];
    for co in 0..g.cout {
        let gp = &grad_out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..g.cin {
            let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let (lo, hi) = g.col_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    let shift = lo + kx - g.pad;
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let Some(iy) = g.src_row(oy, ky) else {
                            continue;
                        };
                        let s = &src[iy * g.w + shift..iy * g.w + shift + (hi - lo)];
                        let gr = &gp[oy * ow + lo..oy * ow + hi];
                        acc += s.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[((co * g.cin + ci) * g.kh + ky) * g.kw + kx] = acc;
                }
            }
        }
    }
    gw
}

pub(crate) fn backward_bias(g: &ConvGeom, grad_out: &[f64]) -> Vec<f64> {
    let n = g.out_h() * g.out_w();
    (0..g.cout)
        .map(|co| grad_out[co * n..(co + 1) * n].iter().sum())
        .collect()
}

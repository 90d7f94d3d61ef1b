//! Centered, orthonormal 2-D discrete Fourier transforms.
//!
//! `fft2c(x) = fftshift(F(ifftshift(x))) / sqrt(H·W)` over the two trailing
//! axes, so the zero frequency sits at index `(H/2, W/2)` and the transform is
//! unitary. Arbitrary lengths are supported; the 1-D kernels come from
//! `rustfft` (radix-2/mixed-radix with a Bluestein fallback for awkward primes).

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use super::C64;

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, forward))
            .or_insert_with(|| {
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                planner.plan_fft(len, dir)
            })
            .clone()
    })
}

/// Index map of `ifftshift`: `ifftshift(x)[j] = x[(j + n/2) % n]`.
#[inline]
fn ishift(j: usize, n: usize) -> usize {
    (j + n / 2) % n
}

/// Index map of `fftshift`: `fftshift(x)[j] = x[(j + n - n/2) % n]`.
#[inline]
fn shift(j: usize, n: usize) -> usize {
    (j + n - n / 2) % n
}

fn transform_plane(plane: &mut [C64], h: usize, w: usize, forward: bool, scratch: &mut Vec<C64>) {
    debug_assert_eq!(plane.len(), h * w);
    let mut buf: Vec<C64> = Vec::with_capacity(h * w);
    for r in 0..h {
        let src_r = ishift(r, h);
        for c in 0..w {
            buf.push(plane[src_r * w + ishift(c, w)]);
        }
    }

    let row_fft = plan(w, forward);
    let need = row_fft.get_inplace_scratch_len();
    scratch.resize(need.max(scratch.len()), C64::new(0.0, 0.0));
    row_fft.process_with_scratch(&mut buf, &mut scratch[..need]);

    let mut cols: Vec<C64> = vec![C64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            cols[c * h + r] = buf[r * w + c];
        }
    }
    let col_fft = plan(h, forward);
    let need = col_fft.get_inplace_scratch_len();
    scratch.resize(need.max(scratch.len()), C64::new(0.0, 0.0));
    col_fft.process_with_scratch(&mut cols, &mut scratch[..need]);

    let scale = 1.0 / ((h * w) as f64).sqrt();
    for r in 0..h {
        let src_r = shift(r, h);
        for c in 0..w {
            let src_c = shift(c, w);
            plane[r * w + c] = cols[src_c * h + src_r] * scale;
        }
    }
}

fn transform(data: &mut [C64], h: usize, w: usize, forward: bool) {
    if h == 0 || w == 0 {
        return;
    }
    let mut scratch = Vec::new();
    for plane in data.chunks_exact_mut(h * w) {
        transform_plane(plane, h, w, forward, &mut scratch);
    }
}

/// In-place centered orthonormal forward FFT over every trailing `h×w` plane.
pub fn fft2c_inplace(data: &mut [C64], h: usize, w: usize) {
    transform(data, h, w, true);
}

/// In-place centered orthonormal inverse FFT over every trailing `h×w` plane.
pub fn ifft2c_inplace(data: &mut [C64], h: usize, w: usize) {
    transform(data, h, w, false);
}

pub fn fft2c(data: &[C64], h: usize, w: usize) -> Vec<C64> {
    let mut out = data.to_vec();
    fft2c_inplace(&mut out, h, w);
    out
}

pub fn ifft2c(data: &[C64], h: usize, w: usize) -> Vec<C64> {
    let mut out = data.to_vec();
    ifft2c_inplace(&mut out, h, w);
    out
}

//! Finite-difference checks of every primitive's adjoint.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_real(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::real(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rand_complex(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::complex(
        shape,
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

/// Reduces an arbitrary output to a real scalar with fixed random weights.
fn project(t: &mut Tape, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = t.value(out).shape().to_vec();
    if t.value(out).is_complex() {
        let w = t.constant(rand_complex(&mut rng, &shape));
        let p = t.mul(out, w).unwrap();
        let s = t.sum(p).unwrap();
        t.real_part(s).unwrap()
    } else {
        let n = shape.iter().product();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        t.masked_sum(out, Arc::new(w)).unwrap()
    }
}

fn perturbed(x: &Tensor, i: usize, imag: bool, h: f64) -> Tensor {
    match x.data() {
        Data::Real(v) => {
            let mut v = v.clone();
            v[i] += h;
            Tensor::real(x.shape(), v).unwrap()
        }
        Data::Complex(v) => {
            let mut v = v.clone();
            if imag {
                v[i].im += h;
            } else {
                v[i].re += h;
            }
            Tensor::complex(x.shape(), v).unwrap()
        }
    }
}

/// Compares the tape gradient of `f` against central differences for every input coordinate.
fn check(inputs: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let eval = |xs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let out = f(&mut t, &vars);
        let l = project(&mut t, out, 99);
        t.value(l).item().unwrap()
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
    let out = f(&mut t, &vars);
    let l = project(&mut t, out, 99);
    let grads = t.backward(l).unwrap();

    let h = 1e-6;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, x) in inputs.iter().enumerate() {
        let g = grads.get(vars[k]).expect("leaf gradient");
        let parts = if x.is_complex() { 2 } else { 1 };
        for i in 0..x.numel() {
            for part in 0..parts {
                let mut xp = inputs.clone();
                xp[k] = perturbed(x, i, part == 1, h);
                let mut xm = inputs.clone();
                xm[k] = perturbed(x, i, part == 1, -h);
                let fd = (eval(&xp) - eval(&xm)) / (2.0 * h);
                let ad = match g.data() {
                    Data::Real(v) => v[i],
                    Data::Complex(v) => {
                        if part == 1 {
                            v[i].im
                        } else {
                            v[i].re
                        }
                    }
                };
                num += (fd - ad).powi(2);
                den += fd.powi(2);
            }
        }
    }
    let rel = (num / den.max(1e-300)).sqrt();
    assert!(rel < 1e-4, "relative gradient error {rel}");
}

#[test]
fn elementwise_binary_with_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for op in [Primitive::Add, Primitive::Sub, Primitive::Mul] {
        let a = rand_complex(&mut rng, &[3, 2, 4]);
        let b = rand_complex(&mut rng, &[2, 4]);
        check(vec![a, b], |t, v| {
            t.record_op(op.clone(), &[v[0], v[1]]).unwrap()
        });
        let a = rand_real(&mut rng, &[3, 2, 4]);
        let b = rand_real(&mut rng, &[1]);
        check(vec![b, a], |t, v| {
            t.record_op(op.clone(), &[v[0], v[1]]).unwrap()
        });
    }
    let a = rand_real(&mut rng, &[2, 3]);
    let b = Tensor::real(&[3], vec![1.5, -2.0, 0.7]).unwrap();
    check(vec![a, b], |t, v| t.div(v[0], v[1]).unwrap());
}

#[test]
fn unary_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = rand_complex(&mut rng, &[2, 3]);
    let x = rand_real(&mut rng, &[2, 3]);
    check(vec![z.clone()], |t, v| t.scale(v[0], -1.7).unwrap());
    check(vec![z.clone()], |t, v| {
        t.scale_complex(v[0], C64::new(0.3, -2.0)).unwrap()
    });
    check(vec![z.clone()], |t, v| t.conj(v[0]).unwrap());
    check(vec![z.clone()], |t, v| t.abs(v[0]).unwrap());
    check(vec![z.clone()], |t, v| t.abs2(v[0]).unwrap());
    check(vec![x.clone()], |t, v| t.abs(v[0]).unwrap());
    check(vec![x.clone()], |t, v| t.abs2(v[0]).unwrap());
    check(vec![x.clone()], |t, v| t.shift(v[0], 0.25).unwrap());
    check(vec![x.clone()], |t, v| t.leaky_relu(v[0], 0.2).unwrap());
    check(vec![x.clone()], |t, v| t.relu(v[0]).unwrap());
    let pos = Tensor::real(&[4], vec![0.3, 1.0, 2.5, 0.9]).unwrap();
    check(vec![pos], |t, v| t.sqrt(v[0]).unwrap());
    check(vec![z.clone()], |t, v| t.sum(v[0]).unwrap());
    check(vec![x.clone()], |t, v| t.sum(v[0]).unwrap());
    check(vec![x.clone()], |t, v| {
        t.masked_sum(v[0], Arc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, 2.0]))
            .unwrap()
    });
    check(vec![z.clone()], |t, v| t.sum_leading(v[0]).unwrap());
    check(vec![z.clone()], |t, v| t.real_part(v[0]).unwrap());
    check(vec![z.clone()], |t, v| t.imag_part(v[0]).unwrap());
    check(vec![x.clone()], |t, v| t.to_complex(v[0]).unwrap());
    check(vec![x.clone(), rand_real(&mut rng, &[2, 3])], |t, v| {
        t.complexify(v[0], v[1]).unwrap()
    });
    check(vec![x.clone()], |t, v| t.reshape(v[0], &[3, 2]).unwrap());
    check(vec![x], |t, v| t.mean(v[0]).unwrap());
}

#[test]
fn structural_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_real(&mut rng, &[2, 4, 6]);
    let b = rand_real(&mut rng, &[1, 4, 6]);
    check(vec![a.clone(), b], |t, v| t.concat(&[v[0], v[1]]).unwrap());
    check(vec![a.clone()], |t, v| t.slice_leading(v[0], 1, 1).unwrap());
    check(vec![a.clone()], |t, v| t.window(v[0], 2, 8).unwrap());
    check(vec![a.clone()], |t, v| t.avg_pool2(v[0]).unwrap());
    check(vec![a.clone()], |t, v| t.upsample2(v[0]).unwrap());
    let grid = Arc::new(ResampleGrid::rotation(4, 6, 17.0));
    check(vec![a.clone()], |t, v| {
        t.resample(v[0], grid.clone()).unwrap()
    });
    let z = rand_complex(&mut rng, &[2, 4, 6]);
    check(vec![z.clone()], |t, v| {
        t.resample(v[0], grid.clone()).unwrap()
    });
    check(vec![z.clone()], |t, v| t.window(v[0], 5, 3).unwrap());
}

#[test]
fn convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_real(&mut rng, &[2, 5, 6]);
    let w = rand_real(&mut rng, &[3, 2, 3, 3]);
    let b = rand_real(&mut rng, &[3]);
    check(vec![x.clone(), w.clone(), b], |t, v| {
        t.conv2d(v[0], v[1], Some(v[2]), 1).unwrap()
    });
    check(vec![x, w], |t, v| t.conv2d(v[0], v[1], None, 0).unwrap());
}

#[test]
fn centered_ffts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = rand_complex(&mut rng, &[2, 3, 5]);
    check(vec![z.clone()], |t, v| t.fft2c(v[0]).unwrap());
    check(vec![z], |t, v| t.ifft2c(v[0]).unwrap());
}

#[test]
fn composite_rss_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k = rand_complex(&mut rng, &[2, 4, 4]);
    check(vec![k], |t, v| {
        let x = t.ifft2c(v[0]).unwrap();
        t.rss(x).unwrap()
    });
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = Tape::new();
        let x = t.leaf(rand_complex(&mut rng, &[2, 8, 8]));
        let y = t.fft2c(x).unwrap();
        let m = t.abs(y).unwrap();
        let l = t.sum(m).unwrap();
        let g = t.backward(l).unwrap();
        (t.value(l).clone(), g.get(x).unwrap().clone())
    };
    assert_eq!(run(), run());
}

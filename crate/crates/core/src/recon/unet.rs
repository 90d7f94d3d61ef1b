//! Small encoder/decoder convolutional network shared by both learned operators.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub(crate) struct UNetShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub top: usize,
    pub depth: usize,
}

impl UNetShape {
    fn ch(&self, level: usize) -> usize {
        self.top << level
    }

    /// Spatial sizes must be divisible by this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    /// `(name, weight shape)` of every convolution, in a fixed order.
    fn convs(&self, prefix: &str) -> Vec<(String, [usize; 4])> {
        let k3 = |cin: usize, cout: usize| [cout, cin, 3, 3];
        let mut out = Vec::new();
        let mut cin = self.in_ch;
        for i in 0..self.depth {
            out.push((format!("{prefix}enc{i}.c1"), k3(cin, self.ch(i))));
            out.push((format!("{prefix}enc{i}.c2"), k3(self.ch(i), self.ch(i))));
            cin = self.ch(i);
        }
        let mid = self.ch(self.depth);
        out.push((format!("{prefix}mid.c1"), k3(cin, mid)));
        out.push((format!("{prefix}mid.c2"), k3(mid, mid)));
        for i in (0..self.depth).rev() {
            out.push((format!("{prefix}up{i}"), k3(self.ch(i + 1), self.ch(i))));
            out.push((format!("{prefix}dec{i}.c1"), k3(2 * self.ch(i), self.ch(i))));
            out.push((format!("{prefix}dec{i}.c2"), k3(self.ch(i), self.ch(i))));
        }
        out.push((format!("{prefix}out"), [self.out_ch, self.top, 1, 1]));
        out
    }

    /// He-normal weights, zero biases, and an all-zero output layer.
    pub fn init(&self, prefix: &str, rng: &mut ChaCha8Rng, params: &mut BTreeMap<String, Tensor>) {
        let last = format!("{prefix}out");
        for (name, shape) in self.convs(prefix) {
            let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
            let n: usize = shape.iter().product();
            let w = if name == last {
                vec![0.0; n]
            } else {
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
                (0..n).map(|_| normal.sample(rng)).collect()
            };
            params.insert(format!("{name}.w"), Tensor::real(&shape, w).expect("sized"));
            params.insert(format!("{name}.b"), Tensor::zeros_real(&[shape[0]]));
        }
    }

    /// `[in_ch, h, w] -> [out_ch, h, w]`; `h` and `w` must be multiples of [`Self::multiple`].
    pub fn apply(
        &self,
        tape: &mut Tape,
        prefix: &str,
        p: &BTreeMap<String, Var>,
        x: Var,
    ) -> Result<Var> {
        let conv = |tape: &mut Tape, name: &str, x: Var, pad: usize| -> Result<Var> {
            let w = p[&format!("{prefix}{name}.w")];
            let b = p[&format!("{prefix}{name}.b")];
            tape.conv2d(x, w, Some(b), pad)
        };
        let block = |tape: &mut Tape, name: &str, x: Var| -> Result<Var> {
            let y = conv(tape, &format!("{name}.c1"), x, 1)?;
            let y = tape.leaky_relu(y, LEAKY_SLOPE)?;
            let y = conv(tape, &format!("{name}.c2"), y, 1)?;
            tape.leaky_relu(y, LEAKY_SLOPE)
        };
        let mut skips = Vec::with_capacity(self.depth);
        let mut x = x;
        for i in 0..self.depth {
            let y = block(tape, &format!("enc{i}"), x)?;
            skips.push(y);
            x = tape.avg_pool2(y)?;
        }
        x = block(tape, "mid", x)?;
        for i in (0..self.depth).rev() {
            let up = tape.upsample2(x)?;
            let up = conv(tape, &format!("up{i}"), up, 1)?;
            let up = tape.leaky_relu(up, LEAKY_SLOPE)?;
            let cat = tape.concat(&[up, skips[i]])?;
            x = block(tape, &format!("dec{i}"), cat)?;
        }
        conv(tape, "out", x, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_output_layer_gives_exact_zeros() {
        let s = UNetShape {
            in_ch: 2,
            out_ch: 2,
            top: 4,
            depth: 2,
        };
        let mut params = BTreeMap::new();
        s.init("n.", &mut ChaCha8Rng::seed_from_u64(0), &mut params);
        let mut tape = Tape::new();
        let vars: BTreeMap<String, Var> = params
            .iter()
            .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
            .collect();
        let x = tape.constant(
            Tensor::real(&[2, 8, 12], (0..192).map(|v| (v as f64).sin()).collect()).unwrap(),
        );
        let y = s.apply(&mut tape, "n.", &vars, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 8, 12]);
        assert!(tape.value(y).as_real().unwrap().iter().all(|&v| v == 0.0));
    }
}

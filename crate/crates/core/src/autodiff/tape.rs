use std::sync::Arc;

use super::conv::{self, ConvGeom};
use super::fft;
use super::{Data, Precision, ResampleGrid, Tensor, C64};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive operations understood by the tape.
///
/// Binary elementwise primitives broadcast by tiling: the operand with fewer
/// elements must have a shape (ignoring leading 1s) equal to the trailing
/// dimensions of the other, or be a single element.
#[derive(Debug, Clone)]
pub enum Primitive {
    Add,
    Sub,
    /// Elementwise product (real·real or complex·complex).
    Mul,
    /// Elementwise real division.
    Div,
    /// Multiply by a real constant.
    Scale(f64),
    /// Multiply a complex tensor by a complex constant.
    ScaleComplex(C64),
    /// Add a real constant to every element of a real tensor.
    Shift(f64),
    Conj,
    /// `|x|` for real tensors, magnitude for complex tensors (result is real).
    Abs,
    /// `|z|²` of a complex tensor, or `x²` of a real one.
    Abs2,
    Sqrt,
    /// Sum of all elements; result has shape `[1]`.
    Sum,
    /// `Σ wᵢ xᵢ` of a real tensor with fixed weights; result has shape `[1]`.
    MaskedSum(Arc<Vec<f64>>),
    /// Sum over the leading axis: `[N, ...] -> [...]`.
    SumLeading,
    /// `[Cin,H,W] ⊛ [Cout,Cin,kh,kw] (+ [Cout])`, stride 1, symmetric zero padding.
    Conv2d {
        padding: usize,
    },
    /// `max(x, slope·x)`; slope 0 is the plain rectifier.
    LeakyRelu(f64),
    /// Bilinear resampling of every trailing plane on a fixed grid.
    Resample(Arc<ResampleGrid>),
    /// Concatenation along the leading axis.
    Concat,
    /// `x[start..start+len]` along the leading axis.
    SliceLeading {
        start: usize,
        len: usize,
    },
    /// Center crop and/or zero pad of the two trailing axes to `h×w`.
    Window {
        h: usize,
        w: usize,
    },
    /// 2×2 average pooling over the trailing axes.
    AvgPool2,
    /// 2× nearest-neighbour upsampling over the trailing axes.
    Upsample2,
    Reshape(Vec<usize>),
    Fft2c,
    Ifft2c,
    /// Real tensor to complex with zero imaginary part.
    ToComplex,
    RealPart,
    ImagPart,
    /// `re + i·im` from two real tensors of equal shape.
    Complexify,
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Scale(_) => "scale",
            Primitive::ScaleComplex(_) => "scale_complex",
            Primitive::Shift(_) => "shift",
            Primitive::Conj => "conj",
            Primitive::Abs => "abs",
            Primitive::Abs2 => "abs2",
            Primitive::Sqrt => "sqrt",
            Primitive::Sum => "sum",
            Primitive::MaskedSum(_) => "masked_sum",
            Primitive::SumLeading => "sum_leading",
            Primitive::Conv2d { .. } => "conv2d",
            Primitive::LeakyRelu(_) => "leaky_relu",
            Primitive::Resample(_) => "resample",
            Primitive::Concat => "concat",
            Primitive::SliceLeading { .. } => "slice_leading",
            Primitive::Window { .. } => "window",
            Primitive::AvgPool2 => "avg_pool2",
            Primitive::Upsample2 => "upsample2",
            Primitive::Reshape(_) => "reshape",
            Primitive::Fft2c => "fft2c",
            Primitive::Ifft2c => "ifft2c",
            Primitive::ToComplex => "to_complex",
            Primitive::RealPart => "real_part",
            Primitive::ImagPart => "imag_part",
            Primitive::Complexify => "complexify",
        }
    }

    fn arity(&self) -> std::ops::RangeInclusive<usize> {
        match self {
            Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::Div
            | Primitive::Complexify => 2..=2,
            Primitive::Conv2d { .. } => 2..=3,
            Primitive::Concat => 1..=usize::MAX,
            _ => 1..=1,
        }
    }
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Constant,
    Op(Primitive, Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    origin: Origin,
    requires_grad: bool,
}

/// Records operations and their eagerly computed values for reverse-mode differentiation.
///
/// Nodes are append-only, so insertion order is a topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn strip_leading_ones(s: &[usize]) -> &[usize] {
    let k = s.iter().take_while(|&&d| d == 1).count();
    &s[k.min(s.len().saturating_sub(1))..]
}

/// Output shape of a tiled binary op.
fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    let a_big = na > nb || (na == nb && a.len() >= b.len());
    let (big, small, nsmall) = if a_big { (a, b, nb) } else { (b, a, na) };
    if a == b || nsmall == 1 {
        return Ok(big.to_vec());
    }
    let s = strip_leading_ones(small);
    if s.len() <= big.len() && big[big.len() - s.len()..] == *s {
        return Ok(big.to_vec());
    }
    Err(Error::shape(
        op,
        format!("cannot broadcast {a:?} with {b:?}"),
    ))
}

fn trailing_hw(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape(
            op,
            format!("need at least 2 dims, got {shape:?}"),
        ));
    }
    let h = shape[shape.len() - 2];
    let w = shape[shape.len() - 1];
    let planes = shape[..shape.len() - 2].iter().product();
    Ok((planes, h, w))
}

/// Per-axis offsets of a centered crop/pad: (offset into input, offset into output, count).
fn window_axis(n_in: usize, n_out: usize) -> (usize, usize, usize) {
    if n_in >= n_out {
        ((n_in - n_out) / 2, 0, n_out)
    } else {
        (0, (n_out - n_in) / 2, n_in)
    }
}

fn zero_like(t: &Tensor) -> Data {
    match t.data() {
        Data::Real(v) => Data::Real(vec![0.0; v.len()]),
        Data::Complex(v) => Data::Complex(vec![C64::new(0.0, 0.0); v.len()]),
    }
}

fn add_into(dst: &mut Data, src: &Data) {
    match (dst, src) {
        (Data::Real(d), Data::Real(s)) => d.iter_mut().zip(s).for_each(|(a, b)| *a += b),
        (Data::Complex(d), Data::Complex(s)) => d.iter_mut().zip(s).for_each(|(a, b)| *a += b),
        _ => unreachable!("gradient dtype matches value dtype"),
    }
}

/// Collapse a gradient of the broadcast output onto an operand with `n` elements.
fn reduce_tiled_real(g: &[f64], n: usize) -> Vec<f64> {
    if g.len() == n {
        return g.to_vec();
    }
    let mut out = vec![0.0; n];
    for (i, v) in g.iter().enumerate() {
        out[i % n] += v;
    }
    out
}

fn reduce_tiled_complex(g: &[C64], n: usize) -> Vec<C64> {
    if g.len() == n {
        return g.to_vec();
    }
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, v) in g.iter().enumerate() {
        out[i % n] += v;
    }
    out
}

fn map_plane_shape(shape: &[usize], h: usize, w: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    let n = s.len();
    s[n - 2] = h;
    s[n - 1] = w;
    s
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, origin: Origin, requires_grad: bool) -> Var {
        let mut value = value;
        match &mut value.data {
            Data::Real(v) => self.precision.round_real(v),
            Data::Complex(v) => self.precision.round_complex(v),
        }
        self.nodes.push(Node {
            value,
            origin,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Origin::Leaf, true)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Origin::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].origin, Origin::Leaf)
    }

    /// Records `op` applied to `inputs`, computing the forward value eagerly.
    pub fn record_op(&mut self, op: Primitive, inputs: &[Var]) -> Result<Var> {
        let name = op.name();
        if !op.arity().contains(&inputs.len()) {
            return Err(Error::shape(
                name,
                format!("expected {:?} inputs, got {}", op.arity(), inputs.len()),
            ));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::invalid(format!("{name}: unknown node {}", bad.0)));
        }
        let value = self.forward(&op, inputs)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Origin::Op(op, inputs.to_vec()), requires_grad))
    }

    fn forward(&self, op: &Primitive, inputs: &[Var]) -> Result<Tensor> {
        let name = op.name();
        let x = &self.nodes[inputs[0].0].value;
        let t = match op {
            Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => {
                let y = &self.nodes[inputs[1].0].value;
                let shape = broadcast(name, x.shape(), y.shape())?;
                let n: usize = shape.iter().product();
                let data = match (x.data(), y.data()) {
                    (Data::Real(a), Data::Real(b)) => {
                        let f: fn(f64, f64) -> f64 = match op {
                            Primitive::Add => |a, b| a + b,
                            Primitive::Sub => |a, b| a - b,
                            Primitive::Mul => |a, b| a * b,
                            _ => |a, b| a / b,
                        };
                        Data::Real((0..n).map(|i| f(a[i % a.len()], b[i % b.len()])).collect())
                    }
                    (Data::Complex(a), Data::Complex(b)) => {
                        let f: fn(C64, C64) -> C64 = match op {
                            Primitive::Add => |a, b| a + b,
                            Primitive::Sub => |a, b| a - b,
                            Primitive::Mul => |a, b| a * b,
                            _ => {
                                return Err(Error::DType {
                                    op: name,
                                    expected: "real",
                                })
                            }
                        };
                        Data::Complex((0..n).map(|i| f(a[i % a.len()], b[i % b.len()])).collect())
                    }
                    _ => {
                        return Err(Error::shape(
                            name,
                            "operands must both be real or both be complex",
                        ))
                    }
                };
                Tensor::from_data(shape, data)
            }
            Primitive::Scale(c) => Tensor::from_data(
                x.shape().to_vec(),
                match x.data() {
                    Data::Real(a) => Data::Real(a.iter().map(|v| v * c).collect()),
                    Data::Complex(a) => Data::Complex(a.iter().map(|v| v * c).collect()),
                },
            ),
            Primitive::ScaleComplex(c) => {
                let a = x.complex_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Complex(a.iter().map(|v| v * c).collect()),
                )
            }
            Primitive::Shift(c) => {
                let a = x.real_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Real(a.iter().map(|v| v + c).collect()),
                )
            }
            Primitive::Conj => {
                let a = x.complex_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Complex(a.iter().map(|v| v.conj()).collect()),
                )
            }
            Primitive::Abs => Tensor::from_data(
                x.shape().to_vec(),
                Data::Real(match x.data() {
                    Data::Real(a) => a.iter().map(|v| v.abs()).collect(),
                    Data::Complex(a) => a.iter().map(|v| v.norm()).collect(),
                }),
            ),
            Primitive::Abs2 => Tensor::from_data(
                x.shape().to_vec(),
                Data::Real(match x.data() {
                    Data::Real(a) => a.iter().map(|v| v * v).collect(),
                    Data::Complex(a) => a.iter().map(|v| v.norm_sqr()).collect(),
                }),
            ),
            Primitive::Sqrt => {
                let a = x.real_slice(name)?;
                if let Some(i) = a.iter().position(|&v| v < 0.0) {
                    return Err(Error::NonFinite(format!(
                        "sqrt of negative entry {i} ({})",
                        a[i]
                    )));
                }
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Real(a.iter().map(|v| v.sqrt()).collect()),
                )
            }
            Primitive::Sum => match x.data() {
                Data::Real(a) => Tensor::from_data(vec![1], Data::Real(vec![a.iter().sum()])),
                Data::Complex(a) => Tensor::from_data(vec![1], Data::Complex(vec![a.iter().sum()])),
            },
            Primitive::MaskedSum(w) => {
                let a = x.real_slice(name)?;
                if w.len() != a.len() {
                    return Err(Error::shape(
                        name,
                        format!("weights have {} entries, tensor has {}", w.len(), a.len()),
                    ));
                }
                let s = a.iter().zip(w.iter()).map(|(v, w)| v * w).sum();
                Tensor::from_data(vec![1], Data::Real(vec![s]))
            }
            Primitive::SumLeading => {
                let shape = x.shape();
                if shape.len() < 2 {
                    return Err(Error::shape(
                        name,
                        format!("need at least 2 dims, got {shape:?}"),
                    ));
                }
                let inner: usize = shape[1..].iter().product();
                let out_shape = shape[1..].to_vec();
                match x.data() {
                    Data::Real(a) => {
                        let mut o = vec![0.0; inner];
                        for chunk in a.chunks_exact(inner) {
                            o.iter_mut().zip(chunk).for_each(|(d, s)| *d += s);
                        }
                        Tensor::from_data(out_shape, Data::Real(o))
                    }
                    Data::Complex(a) => {
                        let mut o = vec![C64::new(0.0, 0.0); inner];
                        for chunk in a.chunks_exact(inner) {
                            o.iter_mut().zip(chunk).for_each(|(d, s)| *d += s);
                        }
                        Tensor::from_data(out_shape, Data::Complex(o))
                    }
                }
            }
            Primitive::Conv2d { padding } => {
                let geom = self.conv_geom(inputs, *padding)?;
                let input = x.real_slice(name)?;
                let weight = self.nodes[inputs[1].0].value.real_slice(name)?;
                let bias = match inputs.get(2) {
                    Some(b) => Some(self.nodes[b.0].value.real_slice(name)?),
                    None => None,
                };
                let out = conv::forward(&geom, input, weight, bias);
                Tensor::from_data(vec![geom.cout, geom.out_h(), geom.out_w()], Data::Real(out))
            }
            Primitive::LeakyRelu(slope) => {
                let a = x.real_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Real(
                        a.iter()
                            .map(|&v| if v > 0.0 { v } else { slope * v })
                            .collect(),
                    ),
                )
            }
            Primitive::Resample(grid) => {
                let (planes, h, w) = trailing_hw(name, x.shape())?;
                if h != grid.in_h || w != grid.in_w {
                    return Err(Error::shape(
                        name,
                        format!(
                            "grid expects {}x{} planes, got {h}x{w}",
                            grid.in_h, grid.in_w
                        ),
                    ));
                }
                let shape = map_plane_shape(x.shape(), grid.out_h, grid.out_w);
                let data = match x.data() {
                    Data::Real(a) => Data::Real(
                        a.chunks_exact(h * w)
                            .take(planes)
                            .flat_map(|p| grid.apply_real(p))
                            .collect(),
                    ),
                    Data::Complex(a) => Data::Complex(
                        a.chunks_exact(h * w)
                            .take(planes)
                            .flat_map(|p| grid.apply_complex(p))
                            .collect(),
                    ),
                };
                Tensor::from_data(shape, data)
            }
            Primitive::Concat => {
                let first = x.shape();
                if first.is_empty() {
                    return Err(Error::shape(name, "cannot concatenate scalars"));
                }
                let mut lead = 0;
                for v in inputs {
                    let t = &self.nodes[v.0].value;
                    if t.shape().len() != first.len() || t.shape()[1..] != first[1..] {
                        return Err(Error::shape(
                            name,
                            format!("trailing dims differ: {first:?} vs {:?}", t.shape()),
                        ));
                    }
                    if t.is_complex() != x.is_complex() {
                        return Err(Error::shape(name, "mixed real and complex inputs"));
                    }
                    lead += t.shape()[0];
                }
                let mut shape = first.to_vec();
                shape[0] = lead;
                let data = if x.is_complex() {
                    let mut o = Vec::new();
                    for v in inputs {
                        o.extend_from_slice(self.nodes[v.0].value.as_complex().unwrap());
                    }
                    Data::Complex(o)
                } else {
                    let mut o = Vec::new();
                    for v in inputs {
                        o.extend_from_slice(self.nodes[v.0].value.as_real().unwrap());
                    }
                    Data::Real(o)
                };
                Tensor::from_data(shape, data)
            }
            Primitive::SliceLeading { start, len } => {
                let shape = x.shape();
                if shape.is_empty() || start + len > shape[0] || *len == 0 {
                    return Err(Error::shape(
                        name,
                        format!("range {start}..{} out of bounds for {shape:?}", start + len),
                    ));
                }
                let inner: usize = shape[1..].iter().product();
                let mut out_shape = shape.to_vec();
                out_shape[0] = *len;
                let range = start * inner..(start + len) * inner;
                let data = match x.data() {
                    Data::Real(a) => Data::Real(a[range].to_vec()),
                    Data::Complex(a) => Data::Complex(a[range].to_vec()),
                };
                Tensor::from_data(out_shape, data)
            }
            Primitive::Window { h: oh, w: ow } => {
                let (planes, h, w) = trailing_hw(name, x.shape())?;
                if *oh == 0 || *ow == 0 {
                    return Err(Error::shape(name, "window must be non-empty"));
                }
                let shape = map_plane_shape(x.shape(), *oh, *ow);
                let (ri, ro, rn) = window_axis(h, *oh);
                let (ci, co, cn) = window_axis(w, *ow);
                let data = match x.data() {
                    Data::Real(a) => {
                        let mut o = vec![0.0; planes * oh * ow];
                        for p in 0..planes {
                            for r in 0..rn {
                                let s = p * h * w + (ri + r) * w + ci;
                                let d = p * oh * ow + (ro + r) * ow + co;
                                o[d..d + cn].copy_from_slice(&a[s..s + cn]);
                            }
                        }
                        Data::Real(o)
                    }
                    Data::Complex(a) => {
                        let mut o = vec![C64::new(0.0, 0.0); planes * oh * ow];
                        for p in 0..planes {
                            for r in 0..rn {
                                let s = p * h * w + (ri + r) * w + ci;
                                let d = p * oh * ow + (ro + r) * ow + co;
                                o[d..d + cn].copy_from_slice(&a[s..s + cn]);
                            }
                        }
                        Data::Complex(o)
                    }
                };
                Tensor::from_data(shape, data)
            }
            Primitive::AvgPool2 => {
                let (planes, h, w) = trailing_hw(name, x.shape())?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(name, format!("plane {h}x{w} is not even")));
                }
                let a = x.real_slice(name)?;
                let (oh, ow) = (h / 2, w / 2);
                let mut o = vec![0.0; planes * oh * ow];
                for p in 0..planes {
                    for r in 0..oh {
                        for c in 0..ow {
                            let b = p * h * w + 2 * r * w + 2 * c;
                            o[p * oh * ow + r * ow + c] =
                                0.25 * (a[b] + a[b + 1] + a[b + w] + a[b + w + 1]);
                        }
                    }
                }
                Tensor::from_data(map_plane_shape(x.shape(), oh, ow), Data::Real(o))
            }
            Primitive::Upsample2 => {
                let (planes, h, w) = trailing_hw(name, x.shape())?;
                let a = x.real_slice(name)?;
                let (oh, ow) = (2 * h, 2 * w);
                let mut o = vec![0.0; planes * oh * ow];
                for p in 0..planes {
                    for r in 0..oh {
                        for c in 0..ow {
                            o[p * oh * ow + r * ow + c] = a[p * h * w + (r / 2) * w + c / 2];
                        }
                    }
                }
                Tensor::from_data(map_plane_shape(x.shape(), oh, ow), Data::Real(o))
            }
            Primitive::Reshape(shape) => x.clone().reshape(shape).map_err(|_| {
                Error::shape(name, format!("cannot view {:?} as {shape:?}", x.shape()))
            })?,
            Primitive::Fft2c | Primitive::Ifft2c => {
                let (_, h, w) = trailing_hw(name, x.shape())?;
                let a = x.complex_slice(name)?;
                let out = if matches!(op, Primitive::Fft2c) {
                    fft::fft2c(a, h, w)
                } else {
                    fft::ifft2c(a, h, w)
                };
                Tensor::from_data(x.shape().to_vec(), Data::Complex(out))
            }
            Primitive::ToComplex => {
                let a = x.real_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Complex(a.iter().map(|&v| C64::new(v, 0.0)).collect()),
                )
            }
            Primitive::RealPart | Primitive::ImagPart => {
                let a = x.complex_slice(name)?;
                let re = matches!(op, Primitive::RealPart);
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Real(a.iter().map(|v| if re { v.re } else { v.im }).collect()),
                )
            }
            Primitive::Complexify => {
                let y = &self.nodes[inputs[1].0].value;
                if x.shape() != y.shape() {
                    return Err(Error::shape(
                        name,
                        format!(
                            "real part {:?} vs imaginary part {:?}",
                            x.shape(),
                            y.shape()
                        ),
                    ));
                }
                let re = x.real_slice(name)?;
                let im = y.real_slice(name)?;
                Tensor::from_data(
                    x.shape().to_vec(),
                    Data::Complex(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect()),
                )
            }
        };
        Ok(t)
    }

    fn conv_geom(&self, inputs: &[Var], pad: usize) -> Result<ConvGeom> {
        let name = "conv2d";
        let xs = self.nodes[inputs[0].0].value.shape();
        let ws = self.nodes[inputs[1].0].value.shape();
        if xs.len() != 3 || ws.len() != 4 {
            return Err(Error::shape(
                name,
                format!("input must be [C,H,W] and weight [O,C,kh,kw]; got {xs:?} and {ws:?}"),
            ));
        }
        if xs[0] != ws[1] {
            return Err(Error::shape(
                name,
                format!("input has {} channels but weight expects {}", xs[0], ws[1]),
            ));
        }
        if xs[1] + 2 * pad < ws[2] || xs[2] + 2 * pad < ws[3] {
            return Err(Error::shape(
                name,
                format!(
                    "kernel {}x{} larger than padded input {:?}",
                    ws[2], ws[3], xs
                ),
            ));
        }
        if let Some(b) = inputs.get(2) {
            let bs = self.nodes[b.0].value.shape();
            if bs.iter().product::<usize>() != ws[0] {
                return Err(Error::shape(
                    name,
                    format!("bias {bs:?} does not match {} output channels", ws[0]),
                ));
            }
        }
        Ok(ConvGeom {
            cin: xs[0],
            cout: ws[0],
            h: xs[1],
            w: xs[2],
            kh: ws[2],
            kw: ws[3],
            pad,
        })
    }

    /// Reverse pass from a real scalar `loss`, returning adjoints of every
    /// node that depends on a leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.is_complex() {
            return Err(Error::invalid("backward: loss must be real-valued"));
        }
        if lv.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward: loss must be a scalar, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Data>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Data::Real(vec![1.0]));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Origin::Op(op, inputs) = &node.origin else {
                continue;
            };
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.adjoint(op, inputs, &node.value, &g);
            grads[id] = Some(g);
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(mut c) = contrib else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut c {
                    Data::Real(v) => self.precision.round_real(v),
                    Data::Complex(v) => self.precision.round_complex(v),
                }
                match &mut grads[input.0] {
                    Some(existing) => add_into(existing, &c),
                    slot @ None => *slot = Some(c),
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| n.requires_grad)
                    .map(|d| Tensor::from_data(n.value.shape().to_vec(), d))
            })
            .collect();
        Ok(Gradients { grads })
    }

    /// Adjoint contributions for each input of one node, given the node's gradient `g`.
    fn adjoint(&self, op: &Primitive, inputs: &[Var], out: &Tensor, g: &Data) -> Vec<Option<Data>> {
        let val = |i: usize| &self.nodes[inputs[i].0].value;
        let needs = |i: usize| self.nodes[inputs[i].0].requires_grad;
        match op {
            Primitive::Add | Primitive::Sub => {
                let sign = if matches!(op, Primitive::Sub) {
                    -1.0
                } else {
                    1.0
                };
                (0..2)
                    .map(|i| {
                        if !needs(i) {
                            return None;
                        }
                        let n = val(i).numel();
                        let s = if i == 1 { sign } else { 1.0 };
                        Some(match g {
                            Data::Real(g) => {
                                let mut r = reduce_tiled_real(g, n);
                                if s != 1.0 {
                                    r.iter_mut().for_each(|v| *v = -*v);
                                }
                                Data::Real(r)
                            }
                            Data::Complex(g) => {
                                let mut r = reduce_tiled_complex(g, n);
                                if s != 1.0 {
                                    r.iter_mut().for_each(|v| *v = -*v);
                                }
                                Data::Complex(r)
                            }
                        })
                    })
                    .collect()
            }
            Primitive::Mul => {
                let (a, b) = (val(0), val(1));
                let mut res = vec![None, None];
                match (a.data(), b.data(), g) {
                    (Data::Real(a), Data::Real(b), Data::Real(g)) => {
                        if needs(0) {
                            let full: Vec<f64> = g
                                .iter()
                                .enumerate()
                                .map(|(i, gv)| gv * b[i % b.len()])
                                .collect();
                            res[0] = Some(Data::Real(reduce_tiled_real(&full, a.len())));
                        }
                        if needs(1) {
                            let full: Vec<f64> = g
                                .iter()
                                .enumerate()
                                .map(|(i, gv)| gv * a[i % a.len()])
                                .collect();
                            res[1] = Some(Data::Real(reduce_tiled_real(&full, b.len())));
                        }
                    }
                    (Data::Complex(a), Data::Complex(b), Data::Complex(g)) => {
                        if needs(0) {
                            let full: Vec<C64> = g
                                .iter()
                                .enumerate()
                                .map(|(i, gv)| gv * b[i % b.len()].conj())
                                .collect();
                            res[0] = Some(Data::Complex(reduce_tiled_complex(&full, a.len())));
                        }
                        if needs(1) {
                            let full: Vec<C64> = g
                                .iter()
                                .enumerate()
                                .map(|(i, gv)| gv * a[i % a.len()].conj())
                                .collect();
                            res[1] = Some(Data::Complex(reduce_tiled_complex(&full, b.len())));
                        }
                    }
                    _ => unreachable!(),
                }
                res
            }
            Primitive::Div => {
                let a = val(0).as_real().unwrap();
                let b = val(1).as_real().unwrap();
                let g = real(g);
                let mut res = vec![None, None];
                if needs(0) {
                    let full: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gv)| gv / b[i % b.len()])
                        .collect();
                    res[0] = Some(Data::Real(reduce_tiled_real(&full, a.len())));
                }
                if needs(1) {
                    let full: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gv)| {
                            let bv = b[i % b.len()];
                            -gv * a[i % a.len()] / (bv * bv)
                        })
                        .collect();
                    res[1] = Some(Data::Real(reduce_tiled_real(&full, b.len())));
                }
                res
            }
            Primitive::Scale(c) => vec![Some(match g {
                Data::Real(g) => Data::Real(g.iter().map(|v| v * c).collect()),
                Data::Complex(g) => Data::Complex(g.iter().map(|v| v * c).collect()),
            })],
            Primitive::ScaleComplex(c) => {
                let cc = c.conj();
                vec![Some(Data::Complex(
                    complex(g).iter().map(|v| v * cc).collect(),
                ))]
            }
            Primitive::Shift(_) => vec![Some(g.clone())],
            Primitive::Conj => vec![Some(Data::Complex(
                complex(g).iter().map(|v| v.conj()).collect(),
            ))],
            Primitive::Abs => {
                let g = real(g);
                vec![Some(match val(0).data() {
                    Data::Real(a) => Data::Real(
                        a.iter()
                            .zip(g)
                            .map(|(&x, gv)| {
                                if x > 0.0 {
                                    *gv
                                } else if x < 0.0 {
                                    -gv
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    ),
                    Data::Complex(a) => {
                        let m = out.as_real().unwrap();
                        Data::Complex(
                            a.iter()
                                .zip(m)
                                .zip(g)
                                .map(|((z, &m), gv)| {
                                    if m > 0.0 {
                                        z * (gv / m)
                                    } else {
                                        C64::new(0.0, 0.0)
                                    }
                                })
                                .collect(),
                        )
                    }
                })]
            }
            Primitive::Abs2 => {
                let g = real(g);
                vec![Some(match val(0).data() {
                    Data::Real(a) => {
                        Data::Real(a.iter().zip(g).map(|(x, gv)| 2.0 * x * gv).collect())
                    }
                    Data::Complex(a) => {
                        Data::Complex(a.iter().zip(g).map(|(z, gv)| z * (2.0 * gv)).collect())
                    }
                })]
            }
            Primitive::Sqrt => {
                let s = out.as_real().unwrap();
                let g = real(g);
                vec![Some(Data::Real(
                    s.iter()
                        .zip(g)
                        .map(|(&s, gv)| if s > 0.0 { gv / (2.0 * s) } else { 0.0 })
                        .collect(),
                ))]
            }
            Primitive::Sum => {
                let n = val(0).numel();
                vec![Some(match g {
                    Data::Real(g) => Data::Real(vec![g[0]; n]),
                    Data::Complex(g) => Data::Complex(vec![g[0]; n]),
                })]
            }
            Primitive::MaskedSum(w) => {
                let gv = real(g)[0];
                vec![Some(Data::Real(w.iter().map(|w| w * gv).collect()))]
            }
            Primitive::SumLeading => {
                let lead = val(0).shape()[0];
                vec![Some(match g {
                    Data::Real(g) => Data::Real(g.repeat(lead)),
                    Data::Complex(g) => Data::Complex(g.repeat(lead)),
                })]
            }
            Primitive::Conv2d { padding } => {
                let geom = self
                    .conv_geom(inputs, *padding)
                    .expect("validated in forward");
                let g = real(g);
                let mut res = vec![None; inputs.len()];
                if needs(0) {
                    let w = val(1).as_real().unwrap();
                    res[0] = Some(Data::Real(conv::backward_input(&geom, g, w)));
                }
                if needs(1) {
                    let x = val(0).as_real().unwrap();
                    res[1] = Some(Data::Real(conv::backward_weight(&geom, g, x)));
                }
                if inputs.len() == 3 && needs(2) {
                    res[2] = Some(Data::Real(conv::backward_bias(&geom, g)));
                }
                res
            }
            Primitive::LeakyRelu(slope) => {
                let a = val(0).as_real().unwrap();
                let g = real(g);
                vec![Some(Data::Real(
                    a.iter()
                        .zip(g)
                        .map(|(&x, gv)| if x > 0.0 { *gv } else { slope * gv })
                        .collect(),
                ))]
            }
            Primitive::Resample(grid) => {
                let (planes, h, w) = trailing_hw("resample", val(0).shape()).unwrap();
                let (ih, iw) = (h * w, grid.out_len());
                vec![Some(match g {
                    Data::Real(g) => {
                        let mut d = vec![0.0; planes * ih];
                        for p in 0..planes {
                            grid.adjoint_real(
                                &g[p * iw..(p + 1) * iw],
                                &mut d[p * ih..(p + 1) * ih],
                            );
                        }
                        Data::Real(d)
                    }
                    Data::Complex(g) => {
                        let mut d = vec![C64::new(0.0, 0.0); planes * ih];
                        for p in 0..planes {
                            grid.adjoint_complex(
                                &g[p * iw..(p + 1) * iw],
                                &mut d[p * ih..(p + 1) * ih],
                            );
                        }
                        Data::Complex(d)
                    }
                })]
            }
            Primitive::Concat => {
                let mut offset = 0;
                inputs
                    .iter()
                    .map(|v| {
                        let n = self.nodes[v.0].value.numel();
                        let r = offset..offset + n;
                        offset += n;
                        Some(match g {
                            Data::Real(g) => Data::Real(g[r].to_vec()),
                            Data::Complex(g) => Data::Complex(g[r].to_vec()),
                        })
                    })
                    .collect()
            }
            Primitive::SliceLeading { start, .. } => {
                let x = val(0);
                let inner: usize = x.shape()[1..].iter().product();
                let mut d = zero_like(x);
                let off = start * inner;
                match (&mut d, g) {
                    (Data::Real(d), Data::Real(g)) => d[off..off + g.len()].copy_from_slice(g),
                    (Data::Complex(d), Data::Complex(g)) => {
                        d[off..off + g.len()].copy_from_slice(g)
                    }
                    _ => unreachable!(),
                }
                vec![Some(d)]
            }
            Primitive::Window { h: oh, w: ow } => {
                let x = val(0);
                let (planes, h, w) = trailing_hw("window", x.shape()).unwrap();
                let (ri, ro, rn) = window_axis(h, *oh);
                let (ci, co, cn) = window_axis(w, *ow);
                let mut d = zero_like(x);
                for p in 0..planes {
                    for r in 0..rn {
                        let s = p * h * w + (ri + r) * w + ci;
                        let o = p * oh * ow + (ro + r) * ow + co;
                        match (&mut d, g) {
                            (Data::Real(d), Data::Real(g)) => {
                                d[s..s + cn].copy_from_slice(&g[o..o + cn])
                            }
                            (Data::Complex(d), Data::Complex(g)) => {
                                d[s..s + cn].copy_from_slice(&g[o..o + cn])
                            }
                            _ => unreachable!(),
                        }
                    }
                }
                vec![Some(d)]
            }
            Primitive::AvgPool2 => {
                let (planes, h, w) = trailing_hw("avg_pool2", val(0).shape()).unwrap();
                let g = real(g);
                let (oh, ow) = (h / 2, w / 2);
                let mut d = vec![0.0; planes * h * w];
                for p in 0..planes {
                    for r in 0..h {
                        for c in 0..w {
                            d[p * h * w + r * w + c] = 0.25 * g[p * oh * ow + (r / 2) * ow + c / 2];
                        }
                    }
                }
                vec![Some(Data::Real(d))]
            }
            Primitive::Upsample2 => {
                let (planes, h, w) = trailing_hw("upsample2", val(0).shape()).unwrap();
                let g = real(g);
                let (oh, ow) = (2 * h, 2 * w);
                let mut d = vec![0.0; planes * h * w];
                for p in 0..planes {
                    for r in 0..oh {
                        for c in 0..ow {
                            d[p * h * w + (r / 2) * w + c / 2] += g[p * oh * ow + r * ow + c];
                        }
                    }
                }
                vec![Some(Data::Real(d))]
            }
            Primitive::Reshape(_) => vec![Some(g.clone())],
            Primitive::Fft2c | Primitive::Ifft2c => {
                let (_, h, w) = trailing_hw("fft", out.shape()).unwrap();
                let g = complex(g);
                let back = if matches!(op, Primitive::Fft2c) {
                    fft::ifft2c(g, h, w)
                } else {
                    fft::fft2c(g, h, w)
                };
                vec![Some(Data::Complex(back))]
            }
            Primitive::ToComplex => {
                vec![Some(Data::Real(complex(g).iter().map(|v| v.re).collect()))]
            }
            Primitive::RealPart => {
                vec![Some(Data::Complex(
                    real(g).iter().map(|&v| C64::new(v, 0.0)).collect(),
                ))]
            }
            Primitive::ImagPart => {
                vec![Some(Data::Complex(
                    real(g).iter().map(|&v| C64::new(0.0, v)).collect(),
                ))]
            }
            Primitive::Complexify => {
                let g = complex(g);
                vec![
                    needs(0).then(|| Data::Real(g.iter().map(|v| v.re).collect())),
                    needs(1).then(|| Data::Real(g.iter().map(|v| v.im).collect())),
                ]
            }
        }
    }
}

fn real(d: &Data) -> &[f64] {
    match d {
        Data::Real(v) => v,
        Data::Complex(_) => unreachable!("real node carries real gradient"),
    }
}

fn complex(d: &Data) -> &[C64] {
    match d {
        Data::Complex(v) => v,
        Data::Real(_) => unreachable!("complex node carries complex gradient"),
    }
}

/// Convenience wrappers over [`Tape::record_op`].
impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record_op(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record_op(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record_op(Primitive::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record_op(Primitive::Div, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.record_op(Primitive::Scale(c), &[a])
    }
    pub fn scale_complex(&mut self, a: Var, c: C64) -> Result<Var> {
        self.record_op(Primitive::ScaleComplex(c), &[a])
    }
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.record_op(Primitive::Shift(c), &[a])
    }
    pub fn conj(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Conj, &[a])
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Abs, &[a])
    }
    pub fn abs2(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Abs2, &[a])
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Sqrt, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Sum, &[a])
    }
    pub fn masked_sum(&mut self, a: Var, weights: Arc<Vec<f64>>) -> Result<Var> {
        self.record_op(Primitive::MaskedSum(weights), &[a])
    }
    pub fn sum_leading(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::SumLeading, &[a])
    }
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        padding: usize,
    ) -> Result<Var> {
        match bias {
            Some(b) => self.record_op(Primitive::Conv2d { padding }, &[x, weight, b]),
            None => self.record_op(Primitive::Conv2d { padding }, &[x, weight]),
        }
    }
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.record_op(Primitive::LeakyRelu(slope), &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::LeakyRelu(0.0), &[a])
    }
    pub fn resample(&mut self, a: Var, grid: Arc<ResampleGrid>) -> Result<Var> {
        self.record_op(Primitive::Resample(grid), &[a])
    }
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.record_op(Primitive::Concat, parts)
    }
    pub fn slice_leading(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.record_op(Primitive::SliceLeading { start, len }, &[a])
    }
    pub fn window(&mut self, a: Var, h: usize, w: usize) -> Result<Var> {
        self.record_op(Primitive::Window { h, w }, &[a])
    }
    pub fn avg_pool2(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::AvgPool2, &[a])
    }
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Upsample2, &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.record_op(Primitive::Reshape(shape.to_vec()), &[a])
    }
    pub fn fft2c(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Fft2c, &[a])
    }
    pub fn ifft2c(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::Ifft2c, &[a])
    }
    pub fn to_complex(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::ToComplex, &[a])
    }
    pub fn real_part(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::RealPart, &[a])
    }
    pub fn imag_part(&mut self, a: Var) -> Result<Var> {
        self.record_op(Primitive::ImagPart, &[a])
    }
    pub fn complexify(&mut self, re: Var, im: Var) -> Result<Var> {
        self.record_op(Primitive::Complexify, &[re, im])
    }

    /// Mean of all elements of a real tensor, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Root-sum-of-squares over the leading (coil) axis of a complex `[N,H,W]` tensor.
    pub fn rss(&mut self, coils: Var) -> Result<Var> {
        let p = self.abs2(coils)?;
        let s = self.sum_leading(p)?;
        self.sqrt(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn add_and_magnitude_examples() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::complex(&[1], vec![c(1.0, 2.0)]).unwrap());
        let b = t.constant(Tensor::complex(&[1], vec![c(3.0, -1.0)]).unwrap());
        let s = t.add(a, b).unwrap();
        assert_eq!(t.value(s).as_complex().unwrap(), &[c(4.0, 1.0)]);
        let z = t.constant(Tensor::complex(&[1], vec![c(3.0, 4.0)]).unwrap());
        let m = t.abs(z).unwrap();
        assert_eq!(t.value(m).as_real().unwrap(), &[5.0]);
    }

    #[test]
    fn broadcast_keeps_the_higher_rank_shape() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::real(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.leaf(Tensor::real(&[1, 2, 2], vec![1.0; 4]).unwrap());
        for (x, y) in [(a, b), (b, a)] {
            let p = t.mul(x, y).unwrap();
            assert_eq!(t.value(p).shape(), &[1, 2, 2]);
        }
        let p = t.mul(a, b).unwrap();
        let l = t.sum(p).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(a).unwrap().shape(), &[2, 2]);
        assert_eq!(g.get(b).unwrap().shape(), &[1, 2, 2]);
    }

    #[test]
    fn identity_kernel_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let mut t = Tape::new();
        let x = t.constant(Tensor::real(&[1, 5, 6], img.clone()).unwrap());
        let w = t.constant(Tensor::real(&[1, 1, 1, 1], vec![1.0]).unwrap());
        let y = t.conv2d(x, w, None, 0).unwrap();
        assert_eq!(t.value(y).as_real().unwrap(), &img[..]);
    }

    #[test]
    fn quadratic_and_linear_gradients() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::complex(&[1], vec![c(3.0, 4.0)]).unwrap());
        let p = t.abs2(z).unwrap();
        let l = t.sum(p).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(z).unwrap().as_complex().unwrap(), &[c(6.0, 8.0)]);

        let mut t = Tape::new();
        let z =
            t.leaf(Tensor::complex(&[3], vec![c(1.0, -2.0), c(0.5, 0.0), c(-3.0, 7.0)]).unwrap());
        let s = t.sum(z).unwrap();
        let l = t.real_part(s).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(z).unwrap().as_complex().unwrap(), &[c(1.0, 0.0); 3]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_complex_losses() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::complex(&[2], vec![c(1.0, 1.0); 2]).unwrap());
        assert!(t.backward(z).is_err());
        let s = t.sum(z).unwrap();
        assert!(t.backward(s).is_err());
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros_real(&[2, 3]));
        let b = t.constant(Tensor::zeros_real(&[4]));
        let err = t.add(a, b).unwrap_err().to_string();
        assert!(err.starts_with("add:"), "{err}");
        assert!(err.contains("[2, 3]") && err.contains("[4]"), "{err}");
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let x0 = vec![0.3, -1.2, 2.0];
        let grad_of = |twice: bool| {
            let mut t = Tape::new();
            let x = t.leaf(Tensor::real(&[3], x0.clone()).unwrap());
            let sq = t.abs2(x).unwrap();
            let g1 = t.sum(sq).unwrap();
            let l = if twice {
                let sq2 = t.abs2(x).unwrap();
                let g2 = t.sum(sq2).unwrap();
                t.add(g1, g2).unwrap()
            } else {
                g1
            };
            t.backward(l)
                .unwrap()
                .get(x)
                .unwrap()
                .as_real()
                .unwrap()
                .to_vec()
        };
        let once = grad_of(false);
        let twice = grad_of(true);
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::real(&[2], vec![1.0, 2.0]).unwrap());
        let k = t.constant(Tensor::real(&[2], vec![3.0, 4.0]).unwrap());
        let p = t.mul(x, k).unwrap();
        let l = t.sum(p).unwrap();
        let g = t.backward(l).unwrap();
        assert!(g.get(k).is_none());
        assert_eq!(g.get(x).unwrap().as_real().unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn window_crops_and_pads_centered() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::real(&[1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap());
        let c = t.window(x, 2, 2).unwrap();
        assert_eq!(t.value(c).as_real().unwrap(), &[5.0, 6.0, 9.0, 10.0]);
        let p = t.window(c, 4, 4).unwrap();
        let v = t.value(p).as_real().unwrap();
        assert_eq!(v[5], 5.0);
        assert_eq!(v[0], 0.0);
    }
}

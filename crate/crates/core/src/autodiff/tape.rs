use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels;
use super::tensor::{Real, Shape, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// An operation with a hand-written backward rule, recorded as a single node.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &str;

    /// Gradients for each input given the output gradient; `None` for inputs
    /// that receive no gradient.
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_out: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Real> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2 { x: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Concat { a: Var, b: Var },
    SliceChannels { x: Var, start: usize },
    ChannelMeanMax { x: Var, argmax: Vec<usize> },
    Affine { x: Var, scale: T },
    Sum { x: Var },
    Mean { x: Var },
    L1Mean { x: Var, target: Vec<T> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<T>> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Dynamic reverse-mode tape. Values are recorded in execution order, which
/// is a topological order of the graph; [`Tape::backward`] walks it in reverse.
pub struct Tape<T: Real> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, msg: String) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id {
            return Err(Error::Graph("variable belongs to a different tape".into()));
        }
        self.nodes
            .get(v.index)
            .ok_or_else(|| Error::Graph(format!("variable {} not on tape", v.index)))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var { tape: self.id, index }
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).expect("var from this tape").value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape
    }

    /// Accumulated gradient of a `requires_grad` leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.node(v).ok()?.grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.node(x)?.value.shape, self.node(w)?.value.shape, self.node(b)?.value.shape);
        if ws[1] != xs[1] {
            return Err(shape_err("conv2d", format!("input has {} channels, kernel expects {}", xs[1], ws[1])));
        }
        if bs != [1, ws[0], 1, 1] {
            return Err(shape_err("conv2d", format!("bias shape {bs:?} for {} output channels", ws[0])));
        }
        if stride == 0 || ws[2] % 2 == 0 || ws[3] % 2 == 0 {
            return Err(shape_err("conv2d", format!("need odd kernel and stride >= 1, got {ws:?} / {stride}")));
        }
        if xs[2] + 2 * pad < ws[2] || xs[3] + 2 * pad < ws[3] {
            return Err(shape_err("conv2d", format!("kernel {ws:?} larger than padded input {xs:?}")));
        }
        let out = kernels::conv2d_forward(&self.nodes[x.index].value, &self.nodes[w.index].value, &self.nodes[b.index].value, stride, pad);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(out, Op::Conv2d { x, w, b, stride, pad }, rg))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.node(x)?.value.shape;
        if xs[2] % 2 != 0 || xs[3] % 2 != 0 {
            return Err(shape_err("maxpool2", format!("spatial dims must be even, got {xs:?}")));
        }
        let (out, argmax) = kernels::maxpool2_forward(&self.nodes[x.index].value);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::MaxPool2 { x, argmax }, rg))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let out = kernels::upsample2_forward(&self.node(x)?.value);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Upsample2 { x }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = &self.node(x)?.value;
        let out = Tensor {
            shape: v.shape,
            data: v.data.iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect(),
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Relu { x }, rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = &self.node(x)?.value;
        let out = Tensor {
            shape: v.shape,
            data: v.data.iter().map(|&a| kernels::sigmoid(a)).collect(),
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Sigmoid { x }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        if va.shape != vb.shape {
            return Err(shape_err("add", format!("{:?} vs {:?}", va.shape, vb.shape)));
        }
        let out = Tensor {
            shape: va.shape,
            data: va.data.iter().zip(&vb.data).map(|(&p, &q)| p + q).collect(),
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Elementwise product. `b` may also be a single-channel gate
    /// `(n, 1, h, w)` broadcast over the channels of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (sa, sb) = (va.shape, vb.shape);
        let gate = sb[1] == 1 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3];
        if sa != sb && !gate {
            return Err(shape_err("mul", format!("{sa:?} vs {sb:?}")));
        }
        let hw = sa[2] * sa[3];
        let data = va
            .data
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let j = if sa == sb { i } else { (i / (sa[1] * hw)) * hw + i % hw };
                p * vb.data[j]
            })
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape: sa, data }, Op::Mul { a, b }, rg))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (sa, sb) = (va.shape, vb.shape);
        if sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] {
            return Err(shape_err("concat_channels", format!("{sa:?} vs {sb:?}")));
        }
        let per_a = sa[1] * sa[2] * sa[3];
        let per_b = sb[1] * sb[2] * sb[3];
        let mut data = Vec::with_capacity(va.numel() + vb.numel());
        for n in 0..sa[0] {
            data.extend_from_slice(&va.data[n * per_a..(n + 1) * per_a]);
            data.extend_from_slice(&vb.data[n * per_b..(n + 1) * per_b]);
        }
        let out = Tensor {
            shape: [sa[0], sa[1] + sb[1], sa[2], sa[3]],
            data,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Concat { a, b }, rg))
    }

    /// Channels `start..start + len` of `x`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = &self.node(x)?.value;
        let s = v.shape;
        if len == 0 || start + len > s[1] {
            return Err(shape_err("slice_channels", format!("{start}..{} of {} channels", start + len, s[1])));
        }
        let hw = s[2] * s[3];
        let mut data = Vec::with_capacity(s[0] * len * hw);
        for n in 0..s[0] {
            let base = (n * s[1] + start) * hw;
            data.extend_from_slice(&v.data[base..base + len * hw]);
        }
        let out = Tensor {
            shape: [s[0], len, s[2], s[3]],
            data,
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::SliceChannels { x, start }, rg))
    }

    /// Two channels: per-pixel mean and max over the input channels.
    pub fn channel_mean_max(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = kernels::channel_mean_max_forward(&self.node(x)?.value);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::ChannelMeanMax { x, argmax }, rg))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let v = &self.node(x)?.value;
        let out = Tensor {
            shape: v.shape,
            data: v.data.iter().map(|&a| scale * a + shift).collect(),
        };
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Affine { x, scale }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x)?.value.sum();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = &self.node(x)?.value;
        let m = v.sum() / T::of(v.numel() as f64);
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean { x }, rg))
    }

    /// Mean absolute difference to a constant target.
    pub fn l1_mean(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let v = &self.node(x)?.value;
        if v.shape != target.shape {
            return Err(shape_err("l1_mean", format!("{:?} vs target {:?}", v.shape, target.shape)));
        }
        let s: T = v.data.iter().zip(&target.data).map(|(&a, &t)| (a - t).abs()).sum();
        let m = s / T::of(v.numel() as f64);
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::scalar(m),
            Op::L1Mean {
                x,
                target: target.data.clone(),
            },
            rg,
        ))
    }

    /// Records an externally computed output with a custom backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Result<Var> {
        for &v in inputs {
            self.node(v)?;
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, accumulating into the `grad` of
    /// every `requires_grad` leaf that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.node(loss)?.value.shape;
        if shape != [1, 1, 1, 1] {
            return Err(Error::Shape(format!("loss must be scalar, got {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.index).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let contributions = self.input_grads(i, &g);
            for (v, cg) in contributions {
                if !self.nodes[v.index].requires_grad {
                    continue;
                }
                match &mut grads[v.index] {
                    Some(acc) => acc.add_assign(&cg),
                    slot @ None => *slot = Some(cg),
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                match &mut self.nodes[i].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.index].value;
        let map = |x: Var, f: &dyn Fn(usize, T) -> T| Tensor {
            shape: g.shape,
            data: g.data.iter().enumerate().map(|(k, &gk)| f(k, gk)).collect(),
        }
        .with_shape(val(x).shape);
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = kernels::conv2d_backward(val(*x), val(*w), g, *stride, *pad);
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = Tensor::zeros(val(*x).shape);
                for (k, &src) in argmax.iter().enumerate() {
                    gx.data[src] = gx.data[src] + g.data[k];
                }
                vec![(*x, gx)]
            }
            Op::Upsample2 { x } => vec![(*x, kernels::upsample2_backward(val(*x).shape, g))],
            Op::Relu { x } => {
                let xv = val(*x);
                vec![(*x, map(*x, &|k, gk| if xv.data[k] > T::zero() { gk } else { T::zero() }))]
            }
            Op::Sigmoid { x } => {
                let y = &node.value;
                vec![(*x, map(*x, &|k, gk| gk * y.data[k] * (T::one() - y.data[k])))]
            }
            Op::Add { a, b } => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul { a, b } => {
                let (va, vb) = (val(*a), val(*b));
                let (sa, sb) = (va.shape, vb.shape);
                if sa == sb {
                    vec![
                        (*a, map(*a, &|k, gk| gk * vb.data[k])),
                        (*b, map(*b, &|k, gk| gk * va.data[k])),
                    ]
                } else {
                    let hw = sa[2] * sa[3];
                    let bidx = |k: usize| (k / (sa[1] * hw)) * hw + k % hw;
                    let ga = map(*a, &|k, gk| gk * vb.data[bidx(k)]);
                    let mut gb = Tensor::zeros(sb);
                    for (k, &gk) in g.data.iter().enumerate() {
                        let j = bidx(k);
                        gb.data[j] = gb.data[j] + gk * va.data[k];
                    }
                    vec![(*a, ga), (*b, gb)]
                }
            }
            Op::Concat { a, b } => {
                let (sa, sb) = (val(*a).shape, val(*b).shape);
                let per_a = sa[1] * sa[2] * sa[3];
                let per_b = sb[1] * sb[2] * sb[3];
                let mut ga = Vec::with_capacity(sa[0] * per_a);
                let mut gb = Vec::with_capacity(sb[0] * per_b);
                for n in 0..sa[0] {
                    let base = n * (per_a + per_b);
                    ga.extend_from_slice(&g.data[base..base + per_a]);
                    gb.extend_from_slice(&g.data[base + per_a..base + per_a + per_b]);
                }
                vec![(*a, Tensor { shape: sa, data: ga }), (*b, Tensor { shape: sb, data: gb })]
            }
            Op::SliceChannels { x, start } => {
                let s = val(*x).shape;
                let hw = s[2] * s[3];
                let len = g.shape[1];
                let mut gx = Tensor::zeros(s);
                for n in 0..s[0] {
                    let dst = (n * s[1] + start) * hw;
                    let src = n * len * hw;
                    gx.data[dst..dst + len * hw].copy_from_slice(&g.data[src..src + len * hw]);
                }
                vec![(*x, gx)]
            }
            Op::ChannelMeanMax { x, argmax } => {
                vec![(*x, kernels::channel_mean_max_backward(val(*x).shape, argmax, g))]
            }
            Op::Affine { x, scale } => vec![(*x, map(*x, &|_, gk| gk * *scale))],
            Op::Sum { x } => {
                let s = val(*x).shape;
                vec![(*x, Tensor::filled(s, g.item()))]
            }
            Op::Mean { x } => {
                let v = val(*x);
                vec![(*x, Tensor::filled(v.shape, g.item() / T::of(v.numel() as f64)))]
            }
            Op::L1Mean { x, target } => {
                let v = val(*x);
                let scale = g.item() / T::of(v.numel() as f64);
                let data = v
                    .data
                    .iter()
                    .zip(target)
                    .map(|(&a, &t)| {
                        let d = a - t;
                        if d > T::zero() {
                            scale
                        } else if d < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                vec![(*x, Tensor { shape: v.shape, data })]
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor<T>> = inputs.iter().map(|&v| val(v)).collect();
                op.backward(&ins, &node.value, g)
                    .into_iter()
                    .zip(inputs)
                    .filter_map(|(gi, &v)| gi.map(|t| (v, t)))
                    .collect()
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    fn with_shape(mut self, shape: Shape) -> Self {
        debug_assert_eq!(self.shape.iter().product::<usize>(), shape.iter().product::<usize>());
        self.shape = shape;
        self
    }
}

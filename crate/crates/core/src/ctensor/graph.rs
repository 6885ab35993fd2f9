//! Tape-based reverse-mode differentiation over complex tensors.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and backward is a single reverse sweep. Gradients
//! are `(dL/dRe, dL/dIm)` pairs; see [`super::kernels`] for the convention.

use super::kernels::{self, ConvGeom, Planes, PlanesMut};
use super::tensor::numel;
use super::{ComplexTensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise unary/binary operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Conj,
    Magnitude,
    ScaleByReal,
}

#[derive(Debug, Clone, Copy)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary {
        kind: ElementwiseKind,
        a: Var,
        b: Var,
        bc: Broadcast,
    },
    Conj(Var),
    Magnitude(Var),
    RealPart(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    MatMul {
        a: Var,
        b: Var,
        dims: (usize, usize, usize),
    },
    Crelu(Var),
    Conv2d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// normalized input, before the affine map
        norm: (Vec<f64>, Vec<f64>),
        /// per-channel 1/sqrt(var + eps)
        inv_std: Vec<f64>,
        /// whether the statistics came from the batch (true) or were fixed
        batch_stats: bool,
    },
    LinearTime {
        x: Var,
        w: Var,
        bias: Option<Var>,
        dims: (usize, usize, usize, usize),
    },
    MeanLastAxis(Var),
    LogCompress {
        x: Var,
        alpha: Var,
        c: Var,
        eps: f64,
    },
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: ComplexTensor,
    op: Op,
    requires_grad: bool,
}

/// Per-channel statistics of a training-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    /// mean squared magnitude of the centred values
    pub var: Vec<f64>,
}

/// Recorded computation with gradients filled in by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

fn planes(t: &ComplexTensor) -> Planes<'_> {
    Planes {
        re: &t.re,
        im: &t.im,
    }
}

fn planes_mut(g: &mut (Vec<f64>, Vec<f64>)) -> PlanesMut<'_> {
    PlanesMut {
        re: &mut g.0,
        im: &mut g.1,
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; it receives a gradient iff `t.requires_grad`.
    pub fn leaf(&mut self, t: ComplexTensor) -> Var {
        let rg = t.requires_grad;
        self.push_raw(t, Op::Leaf, rg)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: ComplexTensor) -> Var {
        t.requires_grad = false;
        self.push_raw(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &ComplexTensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<(Vec<f64>, Vec<f64>)> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    fn push_raw(&mut self, value: ComplexTensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: ComplexTensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var, TensorError> {
        value.check_finite().map_err(|_| TensorError::NonFinite(name))?;
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, rg))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if numel(sb) == 1 {
            Ok(Broadcast::RhsScalar)
        } else if numel(sa) == 1 {
            Ok(Broadcast::LhsScalar)
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    /// Dispatches an [`ElementwiseKind`]; unary kinds ignore `b`.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var, TensorError> {
        match kind {
            ElementwiseKind::Conj => self.conj(a),
            ElementwiseKind::Magnitude => self.magnitude(a),
            _ => {
                let b = b.ok_or(TensorError::MissingOperand(kind))?;
                self.binary(kind, a, b)
            }
        }
    }

    fn binary(&mut self, kind: ElementwiseKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let name = match kind {
            ElementwiseKind::Add => "add",
            ElementwiseKind::Sub => "sub",
            ElementwiseKind::Mul => "mul",
            ElementwiseKind::ScaleByReal => "scale_by_real",
            _ => unreachable!("unary kind routed to binary"),
        };
        let bc = self.broadcast(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = match bc {
            Broadcast::LhsScalar => tb.shape().to_vec(),
            _ => ta.shape().to_vec(),
        };
        let n = numel(&shape);
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (ia, ib) = match bc {
                Broadcast::Same => (i, i),
                Broadcast::RhsScalar => (i, 0),
                Broadcast::LhsScalar => (0, i),
            };
            let (ar, ai) = (ta.re[ia], ta.im[ia]);
            let (br, bi) = (tb.re[ib], tb.im[ib]);
            let (r, m) = match kind {
                ElementwiseKind::Add => (ar + br, ai + bi),
                ElementwiseKind::Sub => (ar - br, ai - bi),
                ElementwiseKind::Mul => (ar * br - ai * bi, ar * bi + ai * br),
                ElementwiseKind::ScaleByReal => (ar * br, ai * br),
                _ => unreachable!(),
            };
            re[i] = r;
            im[i] = m;
        }
        let value = ComplexTensor::new_unchecked(&shape, re, im);
        self.push(value, Op::Binary { kind, a, b, bc }, &[a, b], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(ElementwiseKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(ElementwiseKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(ElementwiseKind::Mul, a, b)
    }

    /// Multiplies `a` by the real plane of `s` (the imaginary plane of `s` is ignored).
    pub fn scale_by_real(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        self.binary(ElementwiseKind::ScaleByReal, a, s)
    }

    pub fn conj(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let value = ComplexTensor::new_unchecked(t.shape(), t.re.clone(), t.im.iter().map(|v| -v).collect());
        self.push(value, Op::Conj(a), &[a], "conj")
    }

    /// `|z|` as a real-valued tensor (imaginary plane zero).
    pub fn magnitude(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let re = t.magnitudes();
        let value = ComplexTensor::new_unchecked(t.shape(), re, vec![0.0; t.len()]);
        self.push(value, Op::Magnitude(a), &[a], "magnitude")
    }

    pub fn real_part(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let value = ComplexTensor::new_unchecked(t.shape(), t.re.clone(), vec![0.0; t.len()]);
        self.push(value, Op::RealPart(a), &[a], "real_part")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let value = ComplexTensor::scalar(t.re.iter().sum(), t.im.iter().sum());
        self.push(value, Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let n = t.len() as f64;
        let value = ComplexTensor::scalar(t.re.iter().sum::<f64>() / n, t.im.iter().sum::<f64>() / n);
        self.push(value, Op::Mean(a), &[a], "mean")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a);
        if numel(shape) != t.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = ComplexTensor::new_unchecked(shape, t.re.clone(), t.im.clone());
        self.push(value, Op::Reshape(a), &[a], "reshape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = ComplexTensor::zeros(&[m, n]);
        kernels::matmul_forward(
            m,
            k,
            n,
            planes(self.value(a)),
            planes(self.value(b)),
            PlanesMut {
                re: &mut out.re,
                im: &mut out.im,
            },
        );
        self.push(out, Op::MatMul { a, b, dims: (m, k, n) }, &[a, b], "matmul")
    }

    /// Complex ReLU: `max(0, Re z) + i·max(0, Im z)`.
    pub fn crelu(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let value = ComplexTensor::new_unchecked(
            t.shape(),
            t.re.iter().map(|v| v.max(0.0)).collect(),
            t.im.iter().map(|v| v.max(0.0)).collect(),
        );
        self.push(value, Op::Crelu(a), &[a], "crelu")
    }

    /// Complex cross-correlation of `x: [B,Cin,H,W]` with `w: [Cout,Cin,K,K]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 4 || sw.len() != 4 || sw[1] != sx[1] || sw[2] != sw[3] || stride == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let geom = ConvGeom {
            batch: sx[0],
            in_ch: sx[1],
            out_ch: sw[0],
            in_h: sx[2],
            in_w: sx[3],
            kernel: sw[2],
            stride,
            padding,
        };
        if geom.in_h + 2 * padding < geom.kernel || geom.in_w + 2 * padding < geom.kernel {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [geom.out_ch] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![geom.out_ch],
                });
            }
        }
        let mut out = ComplexTensor::zeros(&[geom.batch, geom.out_ch, geom.out_h(), geom.out_w()]);
        kernels::conv2d_forward(
            &geom,
            planes(self.value(x)),
            planes(self.value(w)),
            bias.map(|b| planes(self.value(b))),
            PlanesMut {
                re: &mut out.re,
                im: &mut out.im,
            },
        );
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(out, Op::Conv2d { x, w, bias, geom }, &inputs, "conv2d")
    }

    /// Per-channel complex batch normalization of `[B, C, ...]`.
    ///
    /// With `fixed = None` the batch statistics are used and returned; with
    /// `fixed = Some((mean_re, mean_im, var))` those statistics are treated as
    /// constants.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        fixed: Option<(&[f64], &[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>), TensorError> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 || self.shape(gamma) != [sx[1]] || self.shape(beta) != [sx[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm",
                lhs: sx,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let (batch, ch) = (sx[0], sx[1]);
        let inner: usize = sx[2..].iter().product();
        let count = batch * inner;
        if fixed.is_none() && count < 2 {
            return Err(TensorError::DegenerateBatch);
        }
        let xt = self.value(x);
        let (gt, bt) = (self.value(gamma), self.value(beta));
        let n = xt.len();
        let (mut nre, mut nim) = (vec![0.0; n], vec![0.0; n]);
        let (mut yre, mut yim) = (vec![0.0; n], vec![0.0; n]);
        let mut inv_std = vec![0.0; ch];
        let mut stats = BatchStats {
            mean_re: vec![0.0; ch],
            mean_im: vec![0.0; ch],
            var: vec![0.0; ch],
        };
        let idx = |b: usize, c: usize| (b * ch + c) * inner;
        for c in 0..ch {
            let (mr, mi, var) = match fixed {
                Some((fr, fi, fv)) => (fr[c], fi[c], fv[c]),
                None => {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for b in 0..batch {
                        let o = idx(b, c);
                        sr += xt.re[o..o + inner].iter().sum::<f64>();
                        si += xt.im[o..o + inner].iter().sum::<f64>();
                    }
                    let (mr, mi) = (sr / count as f64, si / count as f64);
                    let mut v = 0.0;
                    for b in 0..batch {
                        let o = idx(b, c);
                        for j in o..o + inner {
                            let (dr, di) = (xt.re[j] - mr, xt.im[j] - mi);
                            v += dr * dr + di * di;
                        }
                    }
                    (mr, mi, v / count as f64)
                }
            };
            stats.mean_re[c] = mr;
            stats.mean_im[c] = mi;
            stats.var[c] = var;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[c] = s;
            let (gr, gi, br, bi) = (gt.re[c], gt.im[c], bt.re[c], bt.im[c]);
            for b in 0..batch {
                let o = idx(b, c);
                for j in o..o + inner {
                    let (ur, ui) = ((xt.re[j] - mr) * s, (xt.im[j] - mi) * s);
                    nre[j] = ur;
                    nim[j] = ui;
                    yre[j] = gr * ur - gi * ui + br;
                    yim[j] = gr * ui + gi * ur + bi;
                }
            }
        }
        let value = ComplexTensor::new_unchecked(&sx, yre, yim);
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            norm: (nre, nim),
            inv_std,
            batch_stats: fixed.is_none(),
        };
        let v = self.push(value, op, &[x, gamma, beta], "batchnorm")?;
        Ok((v, fixed.is_none().then_some(stats)))
    }

    /// Position-wise linear layer over `[B, D, T]` with weight `[O, D]`.
    pub fn linear_time(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var, TensorError> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 2 || sw[1] != sx[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear_time",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let dims = (sx[0], sx[1], sw[0], sx[2]);
        if let Some(b) = bias {
            if self.shape(b) != [dims.2] {
                return Err(TensorError::ShapeMismatch {
                    op: "linear_time bias",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![dims.2],
                });
            }
        }
        let mut out = ComplexTensor::zeros(&[dims.0, dims.2, dims.3]);
        kernels::linear_time_forward(
            dims,
            planes(self.value(x)),
            planes(self.value(w)),
            bias.map(|b| planes(self.value(b))),
            PlanesMut {
                re: &mut out.re,
                im: &mut out.im,
            },
        );
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(out, Op::LinearTime { x, w, bias, dims }, &inputs, "linear_time")
    }

    /// Complex arithmetic mean over the last axis.
    pub fn mean_last_axis(&mut self, x: Var) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let (&last, lead) = sx.split_last().ok_or(TensorError::DegenerateBatch)?;
        if last == 0 {
            return Err(TensorError::DegenerateBatch);
        }
        let t = self.value(x);
        let rows = t.len() / last;
        let mut out = ComplexTensor::zeros(lead);
        for r in 0..rows {
            out.re[r] = t.re[r * last..(r + 1) * last].iter().sum::<f64>() / last as f64;
            out.im[r] = t.im[r * last..(r + 1) * last].iter().sum::<f64>() / last as f64;
        }
        self.push(out, Op::MeanLastAxis(x), &[x], "mean_last_axis")
    }

    /// `|z|·e^{iθ} ↦ max(ε, −ln|z| + c)·α·e^{iθ}`, with scalar `alpha` and `c`
    /// read from the real planes of their nodes. Zero bins map to `α·ε`.
    pub fn log_compress(&mut self, x: Var, alpha: Var, c: Var, eps: f64) -> Result<Var, TensorError> {
        if numel(self.shape(alpha)) != 1 || numel(self.shape(c)) != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "log_compress",
                lhs: self.shape(alpha).to_vec(),
                rhs: self.shape(c).to_vec(),
            });
        }
        let (a, cc) = (self.value(alpha).re[0], self.value(c).re[0]);
        let t = self.value(x);
        let (mut re, mut im) = (vec![0.0; t.len()], vec![0.0; t.len()]);
        for i in 0..t.len() {
            let (zr, zi) = (t.re[i], t.im[i]);
            let r = (zr * zr + zi * zi).sqrt();
            if r == 0.0 {
                re[i] = a * eps;
            } else {
                let m = (cc - r.ln()).max(eps) * a;
                re[i] = m * zr / r;
                im[i] = m * zi / r;
            }
        }
        let value = ComplexTensor::new_unchecked(t.shape(), re, im);
        self.push(value, Op::LogCompress { x, alpha, c, eps }, &[x, alpha, c], "log_compress")
    }

    /// Mean categorical cross-entropy over rows of real-valued logits `[B, K]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() || targets.iter().any(|&t| t >= s[1]) {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: s,
                rhs: vec![targets.len()],
            });
        }
        let (b, k) = (s[0], s[1]);
        let t = self.value(logits);
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &t.re[r * k..(r + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            for j in 0..k {
                probs[r * k + j] = (row[j] - mx).exp() / z;
            }
            loss += mx + z.ln() - row[targets[r]];
        }
        let value = ComplexTensor::scalar(loss / b as f64, 0.0);
        let op = Op::SoftmaxXent {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        self.push(value, op, &[logits], "softmax_cross_entropy")
    }

    /// Reverse sweep from a real scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lt = self.value(loss);
        if lt.len() != 1 || lt.im[0] != 0.0 {
            return Err(TensorError::LossNotRealScalar(lt.shape().to_vec()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some((vec![1.0], vec![0.0]));
        for i in (0..=loss.0).rev() {
            let Some(gy) = self.grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &gy)?;
            self.grads[i] = Some(gy);
        }
        for (i, g) in self.grads.iter_mut().enumerate() {
            if !matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                *g = None;
            } else if let Some((gr, gi)) = g {
                if !gr.iter().chain(gi.iter()).all(|v| v.is_finite()) {
                    return Err(TensorError::NonFinite("gradient"));
                }
            }
        }
        Ok(())
    }

    /// Gradient buffer for input `v`, allocated on first use; `None` if `v` needs no gradient.
    fn slot(&mut self, node: usize, v: Var) -> Result<Option<(Vec<f64>, Vec<f64>)>, TensorError> {
        if v.0 >= node {
            return Err(TensorError::Cycle(node));
        }
        if !self.nodes[v.0].requires_grad {
            return Ok(None);
        }
        let n = self.nodes[v.0].value.len();
        Ok(Some(self.grads[v.0].take().unwrap_or_else(|| (vec![0.0; n], vec![0.0; n]))))
    }

    fn put(&mut self, v: Var, g: Option<(Vec<f64>, Vec<f64>)>) {
        if let Some(g) = g {
            self.grads[v.0] = Some(g);
        }
    }

    fn propagate(&mut self, i: usize, gy: &(Vec<f64>, Vec<f64>)) -> Result<(), TensorError> {
        let (gr, gi) = (&gy.0, &gy.1);
        // Temporarily detach the op so the node values can be borrowed freely.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let res = self.propagate_op(i, &op, gr, gi);
        self.nodes[i].op = op;
        res
    }

    fn propagate_op(&mut self, i: usize, op: &Op, gr: &[f64], gi: &[f64]) -> Result<(), TensorError> {
        match op {
            Op::Leaf => {}
            Op::Binary { kind, a, b, bc } => {
                let (a, b, bc, kind) = (*a, *b, *bc, *kind);
                let mut ga = self.slot(i, a)?;
                let mut gb = self.slot(i, b)?;
                let n = gr.len();
                for j in 0..n {
                    let (ia, ib) = match bc {
                        Broadcast::Same => (j, j),
                        Broadcast::RhsScalar => (j, 0),
                        Broadcast::LhsScalar => (0, j),
                    };
                    let (g_r, g_i) = (gr[j], gi[j]);
                    let (da, db) = match kind {
                        ElementwiseKind::Add => ((g_r, g_i), (g_r, g_i)),
                        ElementwiseKind::Sub => ((g_r, g_i), (-g_r, -g_i)),
                        ElementwiseKind::Mul => {
                            let ta = &self.nodes[a.0].value;
                            let tb = &self.nodes[b.0].value;
                            let (ar, ai) = (ta.re[ia], ta.im[ia]);
                            let (br, bi) = (tb.re[ib], tb.im[ib]);
                            // g·conj(b), g·conj(a)
                            ((g_r * br + g_i * bi, g_i * br - g_r * bi), (g_r * ar + g_i * ai, g_i * ar - g_r * ai))
                        }
                        ElementwiseKind::ScaleByReal => {
                            let ta = &self.nodes[a.0].value;
                            let tb = &self.nodes[b.0].value;
                            let s = tb.re[ib];
                            ((g_r * s, g_i * s), (g_r * ta.re[ia] + g_i * ta.im[ia], 0.0))
                        }
                        _ => unreachable!(),
                    };
                    if let Some(g) = ga.as_mut() {
                        g.0[ia] += da.0;
                        g.1[ia] += da.1;
                    }
                    if let Some(g) = gb.as_mut() {
                        g.0[ib] += db.0;
                        g.1[ib] += db.1;
                    }
                }
                self.put(a, ga);
                self.put(b, gb);
            }
            Op::Conj(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    for j in 0..gr.len() {
                        g.0[j] += gr[j];
                        g.1[j] -= gi[j];
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::Magnitude(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    let t = &self.nodes[a.0].value;
                    for j in 0..gr.len() {
                        let r = t.re[j].hypot(t.im[j]);
                        if r > 0.0 {
                            g.0[j] += gr[j] * t.re[j] / r;
                            g.1[j] += gr[j] * t.im[j] / r;
                        }
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::RealPart(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    for j in 0..gr.len() {
                        g.0[j] += gr[j];
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    let n = g.0.len();
                    let scale = if matches!(op, Op::Mean(_)) { 1.0 / n as f64 } else { 1.0 };
                    for j in 0..n {
                        g.0[j] += gr[0] * scale;
                        g.1[j] += gi[0] * scale;
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::Reshape(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    for j in 0..gr.len() {
                        g.0[j] += gr[j];
                        g.1[j] += gi[j];
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::MatMul { a, b, dims } => {
                let (a, b) = (*a, *b);
                let mut ga = self.slot(i, a)?;
                let mut gb = self.slot(i, b)?;
                let (m, k, n) = *dims;
                kernels::matmul_backward(
                    m,
                    k,
                    n,
                    planes(&self.nodes[a.0].value),
                    planes(&self.nodes[b.0].value),
                    Planes { re: gr, im: gi },
                    ga.as_mut().map(planes_mut),
                    gb.as_mut().map(planes_mut),
                );
                self.put(a, ga);
                self.put(b, gb);
            }
            Op::Crelu(a) => {
                if let Some(mut g) = self.slot(i, *a)? {
                    let t = &self.nodes[a.0].value;
                    for j in 0..gr.len() {
                        if t.re[j] > 0.0 {
                            g.0[j] += gr[j];
                        }
                        if t.im[j] > 0.0 {
                            g.1[j] += gi[j];
                        }
                    }
                    self.put(*a, Some(g));
                }
            }
            Op::Conv2d { x, w, bias, geom } => {
                let (x, w) = (*x, *w);
                let mut gx = self.slot(i, x)?;
                let mut gw = self.slot(i, w)?;
                let mut gb = match bias {
                    Some(b) => self.slot(i, *b)?,
                    None => None,
                };
                kernels::conv2d_backward(
                    geom,
                    planes(&self.nodes[x.0].value),
                    planes(&self.nodes[w.0].value),
                    Planes { re: gr, im: gi },
                    gx.as_mut().map(planes_mut),
                    gw.as_mut().map(planes_mut),
                    gb.as_mut().map(planes_mut),
                );
                self.put(x, gx);
                self.put(w, gw);
                if let Some(b) = bias {
                    self.put(*b, gb);
                }
            }
            Op::LinearTime { x, w, bias, dims } => {
                let (x, w) = (*x, *w);
                let mut gx = self.slot(i, x)?;
                let mut gw = self.slot(i, w)?;
                let mut gb = match bias {
                    Some(b) => self.slot(i, *b)?,
                    None => None,
                };
                kernels::linear_time_backward(
                    *dims,
                    planes(&self.nodes[x.0].value),
                    planes(&self.nodes[w.0].value),
                    Planes { re: gr, im: gi },
                    gx.as_mut().map(planes_mut),
                    gw.as_mut().map(planes_mut),
                    gb.as_mut().map(planes_mut),
                );
                self.put(x, gx);
                self.put(w, gw);
                if let Some(b) = bias {
                    self.put(*b, gb);
                }
            }
            Op::MeanLastAxis(x) => {
                if let Some(mut g) = self.slot(i, *x)? {
                    let last = *self.nodes[x.0].value.shape().last().unwrap_or(&1);
                    let inv = 1.0 / last as f64;
                    for r in 0..gr.len() {
                        for j in r * last..(r + 1) * last {
                            g.0[j] += gr[r] * inv;
                            g.1[j] += gi[r] * inv;
                        }
                    }
                    self.put(*x, Some(g));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                norm,
                inv_std,
                batch_stats,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let mut gx = self.slot(i, x)?;
                let mut gg = self.slot(i, gamma)?;
                let mut gbeta = self.slot(i, beta)?;
                let shape = self.nodes[x.0].value.shape().to_vec();
                let (batch, ch) = (shape[0], shape[1]);
                let inner: usize = shape[2..].iter().product();
                let count = (batch * inner) as f64;
                let gt = &self.nodes[gamma.0].value;
                for c in 0..ch {
                    let (gmr, gmi) = (gt.re[c], gt.im[c]);
                    let s = inv_std[c];
                    // affine parameter gradients and A = Σ Re(conj(gn)·d)
                    let (mut sg_r, mut sg_i, mut sb_r, mut sb_i) = (0.0, 0.0, 0.0, 0.0);
                    let mut a_sum = 0.0;
                    let (mut mgd_r, mut mgd_i) = (0.0, 0.0);
                    for b in 0..batch {
                        let o = (b * ch + c) * inner;
                        for j in o..o + inner {
                            let (yr, yi) = (gr[j], gi[j]);
                            let (nr, ni) = (norm.0[j], norm.1[j]);
                            sg_r += yr * nr + yi * ni;
                            sg_i += yi * nr - yr * ni;
                            sb_r += yr;
                            sb_i += yi;
                            // gn = gy·conj(γ)
                            let (pr, pi) = (yr * gmr + yi * gmi, yi * gmr - yr * gmi);
                            // d = n / s, so Re(conj(gn)·d) = Re(conj(gn)·n)/s
                            a_sum += (pr * nr + pi * ni) / s;
                            mgd_r += pr;
                            mgd_i += pi;
                        }
                    }
                    if let Some(g) = gg.as_mut() {
                        g.0[c] += sg_r;
                        g.1[c] += sg_i;
                    }
                    if let Some(g) = gbeta.as_mut() {
                        g.0[c] += sb_r;
                        g.1[c] += sb_i;
                    }
                    if let Some(g) = gx.as_mut() {
                        if *batch_stats {
                            // gd = s·gn − (s³·A/N)·d;  gz = gd − mean(gd)
                            let coef = s * s * s * a_sum / count;
                            // Σd = 0, so mean(gd) reduces to s·mean(gn)
                            let (mr, mi) = (s * mgd_r / count, s * mgd_i / count);
                            for b in 0..batch {
                                let o = (b * ch + c) * inner;
                                for j in o..o + inner {
                                    let (yr, yi) = (gr[j], gi[j]);
                                    let (pr, pi) = (yr * gmr + yi * gmi, yi * gmr - yr * gmi);
                                    let (dr, di) = (norm.0[j] / s, norm.1[j] / s);
                                    g.0[j] += s * pr - coef * dr - mr;
                                    g.1[j] += s * pi - coef * di - mi;
                                }
                            }
                        } else {
                            for b in 0..batch {
                                let o = (b * ch + c) * inner;
                                for j in o..o + inner {
                                    let (yr, yi) = (gr[j], gi[j]);
                                    g.0[j] += s * (yr * gmr + yi * gmi);
                                    g.1[j] += s * (yi * gmr - yr * gmi);
                                }
                            }
                        }
                    }
                }
                self.put(x, gx);
                self.put(gamma, gg);
                self.put(beta, gbeta);
            }
            Op::LogCompress { x, alpha, c, eps } => {
                let (x, alpha, c, eps) = (*x, *alpha, *c, *eps);
                let mut gx = self.slot(i, x)?;
                let mut ga = self.slot(i, alpha)?;
                let mut gc = self.slot(i, c)?;
                let a = self.nodes[alpha.0].value.re[0];
                let cc = self.nodes[c.0].value.re[0];
                let t = &self.nodes[x.0].value;
                let (mut da, mut dc) = (0.0, 0.0);
                for j in 0..gr.len() {
                    let (zr, zi) = (t.re[j], t.im[j]);
                    let r = (zr * zr + zi * zi).sqrt();
                    let (g_r, g_i) = (gr[j], gi[j]);
                    if r == 0.0 {
                        // output α·ε on the real axis
                        da += g_r * eps;
                        continue;
                    }
                    let (ur, ui) = (zr / r, zi / r);
                    let m = cc - r.ln();
                    let active = m > eps;
                    let h = m.max(eps);
                    // radial / tangential components of g relative to u
                    let g_rad = ur * g_r + ui * g_i;
                    let g_tan = ur * g_i - ui * g_r;
                    da += h * g_rad;
                    if active {
                        dc += a * g_rad;
                    }
                    if let Some(g) = gx.as_mut() {
                        let dr = if active { -a / r * g_rad } else { 0.0 };
                        let dt = a * h * g_tan / r;
                        // u·(dr + i·dt)
                        g.0[j] += ur * dr - ui * dt;
                        g.1[j] += ui * dr + ur * dt;
                    }
                }
                if let Some(g) = ga.as_mut() {
                    g.0[0] += da;
                }
                if let Some(g) = gc.as_mut() {
                    g.0[0] += dc;
                }
                self.put(x, gx);
                self.put(alpha, ga);
                self.put(c, gc);
            }
            Op::SoftmaxXent { logits, targets, probs } => {
                if let Some(mut g) = self.slot(i, *logits)? {
                    let b = targets.len();
                    let k = probs.len() / b;
                    let scale = gr[0] / b as f64;
                    for r in 0..b {
                        for j in 0..k {
                            let onehot = if targets[r] == j { 1.0 } else { 0.0 };
                            g.0[r * k + j] += (probs[r * k + j] - onehot) * scale;
                        }
                    }
                    self.put(*logits, Some(g));
                }
            }
        }
        Ok(())
    }
}

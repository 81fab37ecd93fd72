use std::borrow::Cow;

use super::kernels::{
    conv_backward_input_acc, conv_backward_kernel_acc, conv_forward_acc, conv_output_extent,
    deconv_output_extent, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, ConvGeometry,
};
use super::{Real, Tensor, LOG_CLAMP};
use crate::error::{contract_err, shape_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Conv2d { x: Var, kern: Var, geom: ConvGeometry },
    Deconv2d { x: Var, kern: Var, geom: ConvGeometry },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, T),
    Log(Var),
    Sum(Var),
    L2Loss(Var, Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    BroadcastSpatial { x: Var, plane: usize },
}

#[derive(Debug)]
struct Node<'a, T: Real> {
    shape: Vec<usize>,
    value: Cow<'a, [T]>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction. Leaves may borrow their values from caller-owned
/// tensors for the lifetime `'a`.
#[derive(Debug)]
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
    frozen: bool,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Broadcast mode of a binary elementwise op.
#[derive(Clone, Copy)]
enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaf_grads: Vec::new(), frozen: false }
    }

    /// While set, [`Tape::leaf`] records tensors without gradient tracking
    /// regardless of their `requires_grad` flag.
    pub fn freeze_leaves(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [T]>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'a, T> {
        &self.nodes[v.0]
    }

    /// Binds a tensor as a leaf, borrowing its buffer. Gradients are tracked
    /// iff the tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: &'a Tensor<T>) -> Var {
        let rg = t.requires_grad() && !self.frozen;
        self.push(t.shape().to_vec(), Cow::Borrowed(t.data()), Op::Leaf, rg)
    }

    /// Binds a borrowed slice as a leaf with an explicit shape.
    pub fn leaf_slice(&mut self, shape: &[usize], data: &'a [T], requires_grad: bool) -> Result<Var> {
        check_len(shape, data.len())?;
        Ok(self.push(shape.to_vec(), Cow::Borrowed(data), Op::Leaf, requires_grad))
    }

    /// Records an owned constant (no gradient).
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        check_len(shape, data.len())?;
        Ok(self.push(shape.to_vec(), Cow::Owned(data), Op::Leaf, false))
    }

    /// Records an owned leaf that tracks gradients.
    pub fn variable(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        check_len(shape, data.len())?;
        Ok(self.push(shape.to_vec(), Cow::Owned(data), Op::Leaf, true))
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.push(vec![1], Cow::Owned(vec![v]), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn item(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(contract_err!("item() on value of shape {:?}", n.shape));
        }
        Ok(n.value[0])
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::from_vec(&n.shape, n.value.to_vec()).expect("recorded shapes are valid")
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    /// Moves a leaf's accumulated gradient out of the tape.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.leaf_grads[v.0].take()
    }

    pub fn clear_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- linear algebra -------------------------------------------------

    /// Matrix product `a[M×K] · b[K×N]`. A rank-1 `b` of length K is treated
    /// as a column and yields a rank-1 result of length M.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 {
            return Err(shape_err!("matmul lhs must be rank 2, got {sa:?}"));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n, out_shape) = match sb.len() {
            1 => (sb[0], 1, vec![m]),
            2 => (sb[0], sb[1], vec![m, sb[1]]),
            _ => return Err(shape_err!("matmul rhs must be rank 1 or 2, got {sb:?}")),
        };
        if k != kb {
            return Err(shape_err!("matmul inner extents differ: {sa:?} x {sb:?}"));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out_shape, Cow::Owned(out), Op::MatMul { a, b, m, k, n }, rg))
    }

    pub fn conv2d(&mut self, x: Var, kern: Var, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kern).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sk[2] != sk[3] {
            return Err(shape_err!("conv2d expects C×H×W input and Co×Ci×k×k kernels, got {sx:?}, {sk:?}"));
        }
        if sk[1] != sx[0] {
            return Err(shape_err!("conv2d kernel expects {} input channels, input has {}", sk[1], sx[0]));
        }
        let k = sk[2];
        let geom = ConvGeometry {
            c_in: sx[0],
            h: sx[1],
            w: sx[2],
            c_out: sk[0],
            k,
            stride,
            pad: padding,
            h_out: conv_output_extent(sx[1], k, stride, padding)?,
            w_out: conv_output_extent(sx[2], k, stride, padding)?,
        };
        let mut out = vec![T::zero(); geom.c_out * geom.h_out * geom.w_out];
        conv_forward_acc(self.value(x), self.value(kern), &geom, &mut out);
        let rg = self.requires_grad(x) || self.requires_grad(kern);
        Ok(self.push(vec![geom.c_out, geom.h_out, geom.w_out], Cow::Owned(out), Op::Conv2d { x, kern, geom }, rg))
    }

    /// Transposed convolution; kernels are laid out `C_in×C_out×k×k` so that
    /// `deconv2d(·, K)` is the adjoint of `conv2d(·, K)`.
    pub fn deconv2d(&mut self, x: Var, kern: Var, stride: usize, padding: usize, output_padding: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kern).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sk[2] != sk[3] {
            return Err(shape_err!("deconv2d expects C×H×W input and Ci×Co×k×k kernels, got {sx:?}, {sk:?}"));
        }
        if sk[0] != sx[0] {
            return Err(shape_err!("deconv2d kernel expects {} input channels, input has {}", sk[0], sx[0]));
        }
        let k = sk[2];
        let h_out = deconv_output_extent(sx[1], k, stride, padding, output_padding)?;
        let w_out = deconv_output_extent(sx[2], k, stride, padding, output_padding)?;
        // forward conv geometry mapping the deconv output back onto its input
        let geom = ConvGeometry {
            c_in: sk[1],
            h: h_out,
            w: w_out,
            c_out: sx[0],
            k,
            stride,
            pad: padding,
            h_out: sx[1],
            w_out: sx[2],
        };
        let mut out = vec![T::zero(); geom.c_in * h_out * w_out];
        conv_backward_input_acc(self.value(x), self.value(kern), &geom, &mut out);
        let rg = self.requires_grad(x) || self.requires_grad(kern);
        Ok(self.push(vec![geom.c_in, h_out, w_out], Cow::Owned(out), Op::Deconv2d { x, kern, geom }, rg))
    }

    // ---- elementwise ----------------------------------------------------

    fn bcast(&self, a: Var, b: Var) -> Result<(Bcast, Vec<usize>)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (na, nb) = (self.value(a).len(), self.value(b).len());
        if sa == sb {
            Ok((Bcast::Same, sa.to_vec()))
        } else if na == 1 {
            Ok((Bcast::LeftScalar, sb.to_vec()))
        } else if nb == 1 {
            Ok((Bcast::RightScalar, sa.to_vec()))
        } else {
            Err(shape_err!("elementwise shapes differ: {sa:?} vs {sb:?}"))
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (mode, shape) = self.bcast(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let out: Vec<T> = match mode {
            Bcast::Same => va.iter().zip(vb.iter()).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::LeftScalar => vb.iter().map(|&y| f(va[0], y)).collect(),
            Bcast::RightScalar => va.iter().map(|&x| f(x, vb[0])).collect(),
        };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(shape, Cow::Owned(out), op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out: Vec<T> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(shape, Cow::Owned(out), op, rg)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.unary(a, |x| if x > T::zero() { x } else { x * slope }, Op::LeakyRelu(a, slope))
    }

    /// Natural log with the argument clamped below at 1e-7.
    pub fn log(&mut self, a: Var) -> Var {
        let floor = T::lit(LOG_CLAMP);
        self.unary(a, |x| x.max(floor).ln(), Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).iter().copied().sum();
        let rg = self.requires_grad(a);
        self.push(vec![1], Cow::Owned(vec![s]), Op::Sum(a), rg)
    }

    /// `‖a − b‖²₂` as a scalar.
    pub fn l2_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("l2_loss shapes differ: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let s: T = self
            .value(a)
            .iter()
            .zip(self.value(b).iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(vec![1], Cow::Owned(vec![s]), Op::L2Loss(a, b), rg))
    }

    // ---- layout ---------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        check_len(shape, self.value(a).len())?;
        let out = self.value(a).to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(shape.to_vec(), Cow::Owned(out), Op::Reshape(a), rg))
    }

    /// Concatenates along the leading axis; trailing axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| contract_err!("concat of zero values"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(shape_err!("concat trailing axes differ: {s:?} vs {tail:?}"));
            }
            lead += s[0];
            out.extend_from_slice(self.value(p));
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(shape, Cow::Owned(out), Op::Concat(parts.to_vec()), rg))
    }

    /// Contiguous sub-range of the flat buffer, returned with `shape`.
    pub fn slice(&mut self, a: Var, start: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        if start + len > self.value(a).len() {
            return Err(shape_err!("slice {start}..{} out of range {}", start + len, self.value(a).len()));
        }
        check_len(shape, len)?;
        let out = self.value(a)[start..start + len].to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(shape.to_vec(), Cow::Owned(out), Op::Slice { x: a, start }, rg))
    }

    /// Broadcasts a vector `[C]` to constant channel maps `[C×H×W]`.
    pub fn broadcast_spatial(&mut self, a: Var, h: usize, w: usize) -> Result<Var> {
        if self.shape(a).len() != 1 || h == 0 || w == 0 {
            return Err(shape_err!("broadcast_spatial expects a vector, got {:?}", self.shape(a)));
        }
        let plane = h * w;
        let c = self.value(a).len();
        let mut out = Vec::with_capacity(c * plane);
        for &v in self.value(a).iter() {
            out.extend(std::iter::repeat_n(v, plane));
        }
        let rg = self.requires_grad(a);
        Ok(self.push(vec![c, h, w], Cow::Owned(out), Op::BroadcastSpatial { x: a, plane }, rg))
    }

    // ---- reverse pass ---------------------------------------------------

    /// Propagates d(loss)/d(·) to every gradient-tracking leaf reachable from
    /// `loss`. Leaf gradients accumulate across calls until cleared.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(contract_err!("backward requires a scalar loss, got shape {:?}", self.shape(loss)));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                    None => self.leaf_grads[i] = Some(g),
                }
                continue;
            }
            self.reverse_rule(i, &g, &mut grads);
        }
        Ok(())
    }

    fn reverse_rule(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| -> &[T] { &nodes[v.0].value };
        let wants = |v: Var| nodes[v.0].requires_grad;
        let out = &nodes[i].value;

        match &nodes[i].op {
            Op::Leaf => unreachable!(),
            &Op::MatMul { a, b, m, k, n } => {
                if wants(a) {
                    matmul_a_bt_acc(g, val(b), slot(grads, a, m * k), m, k, n);
                }
                if wants(b) {
                    matmul_at_b_acc(val(a), g, slot(grads, b, k * n), m, k, n);
                }
            }
            &Op::Conv2d { x, kern, geom } => {
                if wants(x) {
                    let len = val(x).len();
                    conv_backward_input_acc(g, val(kern), &geom, slot(grads, x, len));
                }
                if wants(kern) {
                    let len = val(kern).len();
                    conv_backward_kernel_acc(val(x), g, &geom, slot(grads, kern, len));
                }
            }
            &Op::Deconv2d { x, kern, geom } => {
                // forward was conv-transpose: out = Kᵀ * x
                if wants(x) {
                    let len = val(x).len();
                    conv_forward_acc(g, val(kern), &geom, slot(grads, x, len));
                }
                if wants(kern) {
                    let len = val(kern).len();
                    conv_backward_kernel_acc(g, val(x), &geom, slot(grads, kern, len));
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) { -T::one() } else { T::one() };
                if wants(a) {
                    reduce_into(slot(grads, a, val(a).len()), g, |gv, _| gv);
                }
                if wants(b) {
                    reduce_into(slot(grads, b, val(b).len()), g, |gv, _| gv * sign);
                }
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                if wants(a) {
                    mul_grad(slot(grads, a, va.len()), g, vb);
                }
                if wants(b) {
                    mul_grad(slot(grads, b, vb.len()), g, va);
                }
            }
            &Op::Scale(a, c) => {
                let ga = slot(grads, a, g.len());
                ga.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv * c);
            }
            &Op::Sigmoid(a) => {
                let ga = slot(grads, a, g.len());
                for ((d, &gv), &y) in ga.iter_mut().zip(g).zip(out.iter()) {
                    *d += gv * y * (T::one() - y);
                }
            }
            &Op::Tanh(a) => {
                let ga = slot(grads, a, g.len());
                for ((d, &gv), &y) in ga.iter_mut().zip(g).zip(out.iter()) {
                    *d += gv * (T::one() - y * y);
                }
            }
            &Op::LeakyRelu(a, slope) => {
                let xa = val(a);
                let ga = slot(grads, a, g.len());
                for ((d, &gv), &x) in ga.iter_mut().zip(g).zip(xa) {
                    *d += if x > T::zero() { gv } else { gv * slope };
                }
            }
            &Op::Log(a) => {
                let floor = T::lit(LOG_CLAMP);
                let xa = val(a);
                let ga = slot(grads, a, g.len());
                for ((d, &gv), &x) in ga.iter_mut().zip(g).zip(xa) {
                    if x >= floor {
                        *d += gv / x;
                    }
                }
            }
            &Op::Sum(a) => {
                let n = val(a).len();
                slot(grads, a, n).iter_mut().for_each(|d| *d += g[0]);
            }
            &Op::L2Loss(a, b) => {
                let (va, vb) = (val(a), val(b));
                let two = T::lit(2.0) * g[0];
                if wants(a) {
                    let ga = slot(grads, a, va.len());
                    for ((d, &x), &y) in ga.iter_mut().zip(va).zip(vb) {
                        *d += two * (x - y);
                    }
                }
                if wants(b) {
                    let gb = slot(grads, b, vb.len());
                    for ((d, &x), &y) in gb.iter_mut().zip(va).zip(vb) {
                        *d -= two * (x - y);
                    }
                }
            }
            &Op::Reshape(a) => {
                let ga = slot(grads, a, g.len());
                ga.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    if wants(p) {
                        let gp = slot(grads, p, n);
                        gp.iter_mut().zip(&g[off..off + n]).for_each(|(d, &gv)| *d += gv);
                    }
                    off += n;
                }
            }
            &Op::Slice { x, start } => {
                let n = val(x).len();
                let gx = slot(grads, x, n);
                gx[start..start + g.len()].iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
            }
            &Op::BroadcastSpatial { x, plane } => {
                let n = val(x).len();
                let gx = slot(grads, x, n);
                for (c, d) in gx.iter_mut().enumerate() {
                    *d += g[c * plane..(c + 1) * plane].iter().copied().sum::<T>();
                }
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(shape_err!("invalid shape {shape:?}"));
    }
    let n: usize = shape.iter().product();
    if n != len {
        return Err(shape_err!("shape {shape:?} holds {n} elements, buffer has {len}"));
    }
    Ok(())
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

/// Accumulates `f(g)` into `dst`, summing when `dst` is a broadcast scalar.
fn reduce_into<T: Real>(dst: &mut [T], g: &[T], f: impl Fn(T, T) -> T) {
    if dst.len() == g.len() {
        dst.iter_mut().zip(g).for_each(|(d, &gv)| *d += f(gv, T::zero()));
    } else {
        let s: T = g.iter().map(|&gv| f(gv, T::zero())).sum();
        dst[0] += s;
    }
}

fn mul_grad<T: Real>(dst: &mut [T], g: &[T], other: &[T]) {
    let pick = |i: usize| if other.len() == 1 { other[0] } else { other[i] };
    if dst.len() == g.len() {
        dst.iter_mut().enumerate().for_each(|(i, d)| *d += g[i] * pick(i));
    } else {
        let s: T = g.iter().enumerate().map(|(i, &gv)| gv * pick(i)).sum();
        dst[0] += s;
    }
}

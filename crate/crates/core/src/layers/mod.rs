//! Network building blocks. Each block is a parameter container with a
//! `bind` method that records its tensors as leaves on a tape and returns a
//! small struct of [`Var`] handles used by the forward function.

mod discriminator;
mod encoder;
mod generator;
mod gru;

use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

pub use discriminator::{BoundDiscriminator, Conditioning, DiscriminatorConfig, DiscriminatorParams};
pub use encoder::{BoundViewEncoder, ViewEncoderConfig, ViewEncoderParams};
pub use generator::{BoundGeneratorHead, GeneratorConfig, GeneratorHeadParams};
pub use gru::{BoundGru, GruCellParams};

/// Leaky-ReLU slope used throughout the generator and discriminator.
pub const LEAKY_SLOPE: f64 = 0.2;

/// SplitMix64 step; derives independent init seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ordered, named access to a block's trainable tensors.
///
/// The order of `tensors`, `tensors_mut` and the bound block's `vars` must
/// agree; checkpoints and gradient transfer rely on it.
pub trait ParamSet<T: Real> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    fn set_trainable(&mut self, flag: bool) {
        self.tensors_mut().into_iter().for_each(|t| t.set_requires_grad(flag));
    }

    fn clear_grads(&mut self) {
        self.tensors_mut().into_iter().for_each(|t| t.clear_grad());
    }

    /// Adds gradients (as returned by [`take_grads`]) into the tensors.
    fn accumulate_grads(&mut self, grads: &[Option<Vec<T>>]) -> Result<()> {
        let ts = self.tensors_mut();
        if ts.len() != grads.len() {
            return Err(shape_err!("{} gradients for {} tensors", grads.len(), ts.len()));
        }
        for (t, g) in ts.into_iter().zip(grads) {
            if let Some(g) = g {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// Moves the gradients of `vars` out of a tape.
pub fn take_grads<T: Real>(tape: &mut Tape<'_, T>, vars: &[Var]) -> Vec<Option<Vec<T>>> {
    vars.iter().map(|&v| tape.take_grad(v)).collect()
}

/// Sums gradient lists element-wise in place (`acc += other`).
pub fn add_grads<T: Real>(acc: &mut Vec<Option<Vec<T>>>, other: Vec<Option<Vec<T>>>) {
    if acc.is_empty() {
        *acc = other;
        return;
    }
    for (a, o) in acc.iter_mut().zip(other) {
        match (a.as_mut(), o) {
            (Some(a), Some(o)) => a.iter_mut().zip(&o).for_each(|(x, &y)| *x += y),
            (None, Some(o)) => *a = Some(o),
            _ => {}
        }
    }
}

/// Fully connected layer `y = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl<T: Real> Linear<T> {
    pub fn new(d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            weight: Tensor::randn_init(&[d_out, d_in], derive_seed(seed, 0))?,
            bias: Tensor::randn_init(&[d_out], derive_seed(seed, 1))?,
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundLinear {
        BoundLinear { weight: tape.leaf(&self.weight), bias: tape.leaf(&self.bias) }
    }
}

impl BoundLinear {
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let x = if tape.shape(x).len() == 1 { x } else {
            let n = tape.value(x).len();
            tape.reshape(x, &[n])?
        };
        let y = tape.matmul(self.weight, x)?;
        tape.add(y, self.bias)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.weight, self.bias]
    }
}

impl<T: Real> ParamSet<T> for Linear<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Convolution kernel plus per-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConv {
    pub kernel: Var,
    pub bias: Var,
}

impl<T: Real> ConvLayer<T> {
    /// `kernel_shape` is `[a, b, k, k]`; the bias has `bias_len` entries.
    pub fn new(kernel_shape: [usize; 4], bias_len: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            kernel: Tensor::randn_init(&kernel_shape, derive_seed(seed, 0))?,
            bias: Tensor::randn_init(&[bias_len], derive_seed(seed, 1))?,
        })
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundConv {
        BoundConv { kernel: tape.leaf(&self.kernel), bias: tape.leaf(&self.bias) }
    }
}

impl BoundConv {
    fn add_bias<T: Real>(&self, tape: &mut Tape<'_, T>, y: Var) -> Result<Var> {
        let (h, w) = (tape.shape(y)[1], tape.shape(y)[2]);
        let b = tape.broadcast_spatial(self.bias, h, w)?;
        tape.add(y, b)
    }

    pub fn conv<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = tape.conv2d(x, self.kernel, stride, pad)?;
        self.add_bias(tape, y)
    }

    pub fn deconv<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, stride: usize, pad: usize, out_pad: usize) -> Result<Var> {
        let y = tape.deconv2d(x, self.kernel, stride, pad, out_pad)?;
        self.add_bias(tape, y)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.kernel, self.bias]
    }
}

impl<T: Real> ParamSet<T> for ConvLayer<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("kernel".into(), &self.kernel), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

/// Prefixes child tensor names, e.g. `conv0.kernel`.
pub(crate) fn prefixed<'a, T>(prefix: &str, items: Vec<(String, &'a Tensor<T>)>) -> Vec<(String, &'a Tensor<T>)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// Binds `img` on the tape after checking its geometry.
pub fn image_leaf<'a, T: Real>(tape: &mut Tape<'a, T>, img: &'a Tensor<T>, res: usize) -> Result<Var> {
    check_image(img.shape(), res)?;
    Ok(tape.leaf(img))
}

pub(crate) fn check_image(shape: &[usize], res: usize) -> Result<()> {
    if shape != [3, res, res] {
        return Err(shape_err!("expected a 3×{res}×{res} image, got {shape:?}"));
    }
    Ok(())
}

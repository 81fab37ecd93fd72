use super::{derive_seed, prefixed, BoundConv, ConvLayer, ParamSet, LEAKY_SLOPE};
use crate::error::{param_err, shape_err, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;
const OUT_PAD: usize = 1;
/// Side of the square seed feature map.
pub const SEED_EXTENT: usize = 4;

/// Deconvolutional head U: reshapes a `c·16` vector into `c` maps of 4×4 and
/// doubles the resolution with each transposed convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub seed_channels: usize,
    pub channels: Vec<usize>,
    /// Adds a size-preserving 3×3 layer after every hidden upsampling layer,
    /// giving a deeper head with the same output geometry.
    pub refine: bool,
}

impl GeneratorConfig {
    /// Four layers `(c, c/2, c/4, 3)` fed from `c` seed maps: 4×4 to 64×64.
    pub fn with_width(c: usize) -> Self {
        Self { seed_channels: c, channels: vec![c, c / 2, c / 4, 3], refine: false }
    }

    /// Three layers from 16 seed maps: 4×4 to 32×32.
    pub fn desk() -> Self {
        Self { seed_channels: 16, channels: vec![16, 8, 3], refine: false }
    }

    pub fn full_size() -> Self {
        Self::with_width(256)
    }

    pub fn input_len(&self) -> usize {
        self.seed_channels * SEED_EXTENT * SEED_EXTENT
    }

    pub fn output_extent(&self) -> usize {
        SEED_EXTENT << self.channels.len()
    }

    pub fn with_refine(mut self, on: bool) -> Self {
        self.refine = on;
        self
    }

    pub fn param_count(&self) -> usize {
        let mut c_in = self.seed_channels;
        let mut n = 0;
        for (i, &c) in self.channels.iter().enumerate() {
            n += c_in * c * KERNEL * KERNEL + c;
            if self.refine && i + 1 < self.channels.len() {
                n += c * c * KERNEL * KERNEL + c;
            }
            c_in = c;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorHeadParams<T> {
    pub config: GeneratorConfig,
    pub layers: Vec<ConvLayer<T>>,
    /// One per hidden layer when `config.refine` is set, otherwise empty.
    pub refine: Vec<ConvLayer<T>>,
}

#[derive(Debug, Clone)]
pub struct BoundGeneratorHead {
    layers: Vec<BoundConv>,
    refine: Vec<BoundConv>,
    seed_channels: usize,
}

impl<T: Real> GeneratorHeadParams<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        if config.seed_channels == 0 || config.channels.contains(&0) || config.channels.last() != Some(&3) {
            return Err(param_err!("generator channels must be positive and end in 3: {config:?}"));
        }
        let mut c_in = config.seed_channels;
        let mut layers = Vec::new();
        let mut refine = Vec::new();
        for (i, &c) in config.channels.iter().enumerate() {
            layers.push(ConvLayer::new([c_in, c, KERNEL, KERNEL], c, derive_seed(seed, i as u64))?);
            if config.refine && i + 1 < config.channels.len() {
                refine.push(ConvLayer::new([c, c, KERNEL, KERNEL], c, derive_seed(seed, 100 + i as u64))?);
            }
            c_in = c;
        }
        Ok(Self { config, layers, refine })
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundGeneratorHead {
        BoundGeneratorHead {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            refine: self.refine.iter().map(|l| l.bind(tape)).collect(),
            seed_channels: self.config.seed_channels,
        }
    }
}

impl BoundGeneratorHead {
    /// Generates a 3-channel image in [−1, 1] from a hidden vector.
    pub fn generate<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var) -> Result<Var> {
        let expected = self.seed_channels * SEED_EXTENT * SEED_EXTENT;
        if tape.value(h).len() != expected {
            return Err(shape_err!(
                "generator expects a vector of {expected}, got shape {:?}",
                tape.shape(h)
            ));
        }
        let mut x = tape.reshape(h, &[self.seed_channels, SEED_EXTENT, SEED_EXTENT])?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.deconv(tape, x, STRIDE, PAD, OUT_PAD)?;
            if i == last {
                x = tape.tanh(y);
                break;
            }
            x = tape.leaky_relu(y, T::lit(LEAKY_SLOPE));
            if let Some(r) = self.refine.get(i) {
                let y = r.deconv(tape, x, 1, PAD, 0)?;
                x = tape.leaky_relu(y, T::lit(LEAKY_SLOPE));
            }
        }
        Ok(x)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().chain(&self.refine).flat_map(|l| l.vars()).collect()
    }
}

impl<T: Real> ParamSet<T> for GeneratorHeadParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(prefixed(&format!("deconv{i}"), l.tensors()));
        }
        for (i, l) in self.refine.iter().enumerate() {
            out.extend(prefixed(&format!("refine{i}"), l.tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().chain(&mut self.refine).flat_map(|l| l.tensors_mut()).collect()
    }
}

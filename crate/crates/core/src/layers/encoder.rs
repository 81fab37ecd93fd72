use super::{check_image, derive_seed, prefixed, BoundConv, BoundLinear, ConvLayer, Linear, ParamSet, LEAKY_SLOPE};
use crate::error::{param_err, Result};
use crate::tensor::{conv_output_extent, Real, Tape, Tensor, Var};

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

/// Geometry of the view encoder: a stack of stride-2 3×3 convolutions
/// followed by one fully connected layer producing the view feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewEncoderConfig {
    pub resolution: usize,
    pub channels: Vec<usize>,
    pub d_f: usize,
}

impl ViewEncoderConfig {
    pub fn desk() -> Self {
        Self { resolution: 32, channels: vec![8, 16], d_f: 256 }
    }

    /// 224×224 input and 4096-d output, with five downsampling stages in
    /// place of a pretrained VGG19.
    pub fn full_size() -> Self {
        Self { resolution: 224, channels: vec![16, 32, 64, 64, 64], d_f: 4096 }
    }

    /// Spatial extent after the conv stack.
    pub fn final_extent(&self) -> Result<usize> {
        self.channels
            .iter()
            .try_fold(self.resolution, |r, _| conv_output_extent(r, KERNEL, STRIDE, PAD))
    }

    pub fn fc_inputs(&self) -> Result<usize> {
        let e = self.final_extent()?;
        Ok(self.channels.last().copied().unwrap_or(3) * e * e)
    }

    pub fn param_count(&self) -> Result<usize> {
        let mut c_in = 3;
        let mut n = 0;
        for &c in &self.channels {
            n += c * c_in * KERNEL * KERNEL + c;
            c_in = c;
        }
        Ok(n + self.fc_inputs()? * self.d_f + self.d_f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEncoderParams<T> {
    pub config: ViewEncoderConfig,
    pub convs: Vec<ConvLayer<T>>,
    pub fc: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct BoundViewEncoder {
    convs: Vec<BoundConv>,
    fc: BoundLinear,
    resolution: usize,
}

impl<T: Real> ViewEncoderParams<T> {
    pub fn new(config: ViewEncoderConfig, seed: u64) -> Result<Self> {
        if config.resolution == 0 || config.d_f == 0 || config.channels.contains(&0) {
            return Err(param_err!("view encoder dimensions must be positive: {config:?}"));
        }
        let mut c_in = 3;
        let mut convs = Vec::new();
        for (i, &c) in config.channels.iter().enumerate() {
            convs.push(ConvLayer::new([c, c_in, KERNEL, KERNEL], c, derive_seed(seed, i as u64))?);
            c_in = c;
        }
        let fc = Linear::new(config.fc_inputs()?, config.d_f, derive_seed(seed, 100))?;
        Ok(Self { config, convs, fc })
    }

    pub fn d_f(&self) -> usize {
        self.config.d_f
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundViewEncoder {
        BoundViewEncoder {
            convs: self.convs.iter().map(|c| c.bind(tape)).collect(),
            fc: self.fc.bind(tape),
            resolution: self.config.resolution,
        }
    }

    /// Encodes one image outside of any training pass.
    pub fn encode(&self, img: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(img);
        let f = bound.encode(&mut tape, x)?;
        Ok(tape.to_tensor(f))
    }
}

impl BoundViewEncoder {
    /// Maps a `3×H×W` image to a `d_f` feature in (−1, 1).
    pub fn encode<T: Real>(&self, tape: &mut Tape<'_, T>, img: Var) -> Result<Var> {
        check_image(tape.shape(img), self.resolution)?;
        let mut x = img;
        for conv in &self.convs {
            let y = conv.conv(tape, x, STRIDE, PAD)?;
            x = tape.leaky_relu(y, T::lit(LEAKY_SLOPE));
        }
        let f = self.fc.forward(tape, x)?;
        Ok(tape.tanh(f))
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.convs.iter().flat_map(|c| c.vars()).collect();
        v.extend(self.fc.vars());
        v
    }
}

impl<T: Real> ParamSet<T> for ViewEncoderParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(prefixed(&format!("conv{i}"), c.tensors()));
        }
        out.extend(prefixed("fc", self.fc.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.convs.iter_mut().flat_map(|c| c.tensors_mut()).collect();
        out.extend(self.fc.tensors_mut());
        out
    }
}

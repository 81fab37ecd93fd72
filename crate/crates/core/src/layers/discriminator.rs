use super::{check_image, derive_seed, prefixed, BoundConv, BoundLinear, ConvLayer, Linear, ParamSet, LEAKY_SLOPE};
use crate::error::{contract_err, param_err, shape_err, Result};
use crate::tensor::{conv_output_extent, Real, Tape, Tensor, Var};

const KERNEL: usize = 5;
const STRIDE: usize = 2;
const PAD: usize = 2;
const COND_KERNEL: usize = 3;

/// Condition path of the conditional variant: `neighbors` features of
/// length `d_f` each, broadcast as channel maps after the last trunk conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conditioning {
    pub neighbors: usize,
    pub d_f: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub resolution: usize,
    pub channels: [usize; 4],
    pub conditioning: Option<Conditioning>,
}

impl DiscriminatorConfig {
    pub fn desk() -> Self {
        Self { resolution: 32, channels: [4, 8, 16, 32], conditioning: None }
    }

    pub fn full_size() -> Self {
        Self { resolution: 64, channels: [64, 128, 256, 512], conditioning: None }
    }

    pub fn conditional(mut self, neighbors: usize, d_f: usize) -> Self {
        self.conditioning = Some(Conditioning { neighbors, d_f });
        self
    }

    /// Spatial extent of the final trunk feature map.
    pub fn final_extent(&self) -> Result<usize> {
        self.channels
            .iter()
            .try_fold(self.resolution, |r, _| conv_output_extent(r, KERNEL, STRIDE, PAD))
    }

    pub fn param_count(&self) -> Result<usize> {
        let mut c_in = 3;
        let mut n = 0;
        for &c in &self.channels {
            n += c * c_in * KERNEL * KERNEL + c;
            c_in = c;
        }
        if let Some(cond) = self.conditioning {
            n += c_in * (c_in + cond.neighbors * cond.d_f) * COND_KERNEL * COND_KERNEL + c_in;
        }
        let e = self.final_extent()?;
        Ok(n + c_in * e * e + 1)
    }
}

/// Discriminator D: four stride-2 5×5 convolutions with leaky ReLU, then a
/// single-output fully connected layer and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub config: DiscriminatorConfig,
    pub convs: Vec<ConvLayer<T>>,
    pub cond_conv: Option<ConvLayer<T>>,
    pub fc: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct BoundDiscriminator {
    convs: Vec<BoundConv>,
    cond_conv: Option<BoundConv>,
    fc: BoundLinear,
    config: DiscriminatorConfig,
}

impl<T: Real> DiscriminatorParams<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.channels.contains(&0) {
            return Err(param_err!("discriminator channels must be positive: {config:?}"));
        }
        let e = config.final_extent()?;
        let mut c_in = 3;
        let mut convs = Vec::new();
        for (i, &c) in config.channels.iter().enumerate() {
            convs.push(ConvLayer::new([c, c_in, KERNEL, KERNEL], c, derive_seed(seed, i as u64))?);
            c_in = c;
        }
        let cond_conv = match config.conditioning {
            Some(cond) => {
                let extra = cond.neighbors * cond.d_f;
                Some(ConvLayer::new([c_in, c_in + extra, COND_KERNEL, COND_KERNEL], c_in, derive_seed(seed, 50))?)
            }
            None => None,
        };
        let fc = Linear::new(c_in * e * e, 1, derive_seed(seed, 100))?;
        Ok(Self { config, convs, cond_conv, fc })
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundDiscriminator {
        BoundDiscriminator {
            convs: self.convs.iter().map(|c| c.bind(tape)).collect(),
            cond_conv: self.cond_conv.as_ref().map(|c| c.bind(tape)),
            fc: self.fc.bind(tape),
            config: self.config.clone(),
        }
    }
}

impl BoundDiscriminator {
    pub fn is_conditional(&self) -> bool {
        self.cond_conv.is_some()
    }

    /// Trunk output before the fully connected layer.
    pub fn feature_map<T: Real>(&self, tape: &mut Tape<'_, T>, img: Var) -> Result<Var> {
        check_image(tape.shape(img), self.config.resolution)?;
        let mut x = img;
        for conv in &self.convs {
            let y = conv.conv(tape, x, STRIDE, PAD)?;
            x = tape.leaky_relu(y, T::lit(LEAKY_SLOPE));
        }
        Ok(x)
    }

    fn head<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let logit = self.fc.forward(tape, x)?;
        Ok(tape.sigmoid(logit))
    }

    /// Probability that `img` is a real center view.
    pub fn discriminate<T: Real>(&self, tape: &mut Tape<'_, T>, img: Var) -> Result<Var> {
        if self.is_conditional() {
            return Err(contract_err!("conditional discriminator requires neighbor features"));
        }
        let x = self.feature_map(tape, img)?;
        self.head(tape, x)
    }

    /// Conditional variant: neighbor features are broadcast to channel maps,
    /// concatenated with the trunk output and passed through one more conv.
    pub fn conditional_discriminate<T: Real>(&self, tape: &mut Tape<'_, T>, img: Var, neighbors: &[Var]) -> Result<Var> {
        let (cond, conv) = match (self.config.conditioning, self.cond_conv.as_ref()) {
            (Some(c), Some(conv)) => (c, conv),
            _ => return Err(contract_err!("discriminator was built without a condition path")),
        };
        if neighbors.len() != cond.neighbors {
            return Err(contract_err!(
                "conditional discriminator expects {} neighbor features, got {}",
                cond.neighbors,
                neighbors.len()
            ));
        }
        let trunk = self.feature_map(tape, img)?;
        let (h, w) = (tape.shape(trunk)[1], tape.shape(trunk)[2]);
        let mut parts = vec![trunk];
        for &f in neighbors {
            if tape.shape(f) != [cond.d_f] {
                return Err(shape_err!("neighbor feature must have length {}, got {:?}", cond.d_f, tape.shape(f)));
            }
            parts.push(tape.broadcast_spatial(f, h, w)?);
        }
        let stacked = tape.concat(&parts)?;
        let y = conv.conv(tape, stacked, 1, COND_KERNEL / 2)?;
        let y = tape.leaky_relu(y, T::lit(LEAKY_SLOPE));
        self.head(tape, y)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.convs.iter().flat_map(|c| c.vars()).collect();
        if let Some(c) = &self.cond_conv {
            v.extend(c.vars());
        }
        v.extend(self.fc.vars());
        v
    }
}

impl<T: Real> ParamSet<T> for DiscriminatorParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.extend(prefixed(&format!("conv{i}"), c.tensors()));
        }
        if let Some(c) = &self.cond_conv {
            out.extend(prefixed("cond_conv", c.tensors()));
        }
        out.extend(prefixed("fc", self.fc.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.convs.iter_mut().flat_map(|c| c.tensors_mut()).collect();
        if let Some(c) = &mut self.cond_conv {
            out.extend(c.tensors_mut());
        }
        out.extend(self.fc.tensors_mut());
        out
    }
}

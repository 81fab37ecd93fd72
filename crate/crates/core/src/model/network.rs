use crate::error::{contract_err, param_err, shape_err, Result};
use crate::layers::{
    derive_seed, prefixed, BoundDiscriminator, BoundGeneratorHead, BoundGru, BoundLinear, BoundViewEncoder,
    DiscriminatorConfig, DiscriminatorParams, GeneratorConfig, GeneratorHeadParams, GruCellParams, Linear, ParamSet,
    ViewEncoderConfig, ViewEncoderParams,
};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Dimensions of every network in the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub encoder: ViewEncoderConfig,
    pub d_h: usize,
    pub f_dim: usize,
    pub neighbors: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl NetworkConfig {
    /// 32×32 views, 256-d features/hidden/memory, generator width 16.
    pub fn desk() -> Self {
        Self {
            encoder: ViewEncoderConfig::desk(),
            d_h: 256,
            f_dim: 256,
            neighbors: 4,
            generator: GeneratorConfig::desk(),
            discriminator: DiscriminatorConfig::desk(),
        }
    }

    /// 224×224 views, 4096-d features/hidden/memory, full-width U and D.
    pub fn full_size() -> Self {
        Self {
            encoder: ViewEncoderConfig::full_size(),
            d_h: 4096,
            f_dim: 4096,
            neighbors: 4,
            generator: GeneratorConfig::full_size(),
            discriminator: DiscriminatorConfig::full_size(),
        }
    }

    pub fn d_f(&self) -> usize {
        self.encoder.d_f
    }

    /// Side of generated (and ground-truth center) images.
    pub fn target_resolution(&self) -> usize {
        self.generator.output_extent()
    }

    pub fn with_view_resolution(mut self, res: usize) -> Self {
        self.encoder.resolution = res;
        self
    }

    pub fn with_f_dim(mut self, f_dim: usize) -> Self {
        self.f_dim = f_dim;
        self
    }

    /// Also resizes the conditional discriminator's condition path.
    pub fn with_neighbors(mut self, n: usize) -> Self {
        self.neighbors = n;
        let cond = self.discriminator.conditioning.is_some();
        self.with_conditional(cond)
    }

    pub fn with_refined_generator(mut self, on: bool) -> Self {
        self.generator.refine = on;
        self
    }

    pub fn with_conditional(mut self, on: bool) -> Self {
        self.discriminator.conditioning = None;
        if on {
            self.discriminator = self.discriminator.conditional(self.neighbors, self.encoder.d_f);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h != self.generator.input_len() {
            return Err(param_err!(
                "hidden size {} must equal the generator seed length {}",
                self.d_h,
                self.generator.input_len()
            ));
        }
        if self.f_dim == 0 || self.d_h == 0 {
            return Err(param_err!("feature dimensions must be positive"));
        }
        if self.discriminator.resolution != self.target_resolution() {
            return Err(param_err!(
                "discriminator resolution {} must match generator output {}",
                self.discriminator.resolution,
                self.target_resolution()
            ));
        }
        if let Some(c) = self.discriminator.conditioning {
            if c.neighbors != self.neighbors || c.d_f != self.d_f() {
                return Err(param_err!("condition path does not match N and d_f"));
            }
        }
        self.encoder.final_extent()?;
        self.discriminator.final_extent()?;
        Ok(())
    }

    /// Closed-form parameter counts `(generator side, discriminator)`.
    pub fn param_counts(&self) -> Result<(usize, usize)> {
        let gru = |d_in: usize, d_h: usize| 3 * (d_h * d_in + d_h * d_h + d_h);
        let d_f = self.d_f();
        let mut g = self.encoder.param_count()? + 2 * gru(d_f, self.d_h) + (self.d_h * d_f + d_f);
        if self.f_dim != d_f {
            g += self.f_dim * d_f + d_f;
        }
        g += self.generator.param_count();
        Ok((g, self.discriminator.param_count()?))
    }
}

/// Everything on the generator side: view encoder, RNNs E and R, the
/// decoder readout, the optional memory projection, and head U.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet<T> {
    pub encoder: ViewEncoderParams<T>,
    pub gru_e: GruCellParams<T>,
    pub gru_r: GruCellParams<T>,
    /// Maps R's hidden state to a predicted view feature.
    pub readout: Linear<T>,
    /// Present iff the memory dimension differs from the view feature size.
    pub projection: Option<Linear<T>>,
    pub head: GeneratorHeadParams<T>,
}

#[derive(Debug, Clone)]
pub struct BoundGenerator {
    encoder: BoundViewEncoder,
    gru_e: BoundGru,
    gru_r: BoundGru,
    readout: BoundLinear,
    projection: Option<BoundLinear>,
    head: BoundGeneratorHead,
    neighbors: usize,
    f_dim: usize,
    d_f: usize,
}

/// Result of running the encoder RNN over one section.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Final hidden state `h_i`.
    pub hidden: Var,
    /// View features `f_j` of the neighbors, in section order.
    pub features: Vec<Var>,
    /// The memory row as fed to the RNNs (projected when needed).
    pub memory_input: Var,
}

impl<T: Real> GeneratorNet<T> {
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let d_f = config.d_f();
        Ok(Self {
            encoder: ViewEncoderParams::new(config.encoder.clone(), derive_seed(seed, 1))?,
            gru_e: GruCellParams::new(d_f, config.d_h, derive_seed(seed, 2))?,
            gru_r: GruCellParams::new(d_f, config.d_h, derive_seed(seed, 3))?,
            readout: Linear::new(config.d_h, d_f, derive_seed(seed, 4))?,
            projection: if config.f_dim != d_f {
                Some(Linear::new(config.f_dim, d_f, derive_seed(seed, 5))?)
            } else {
                None
            },
            head: GeneratorHeadParams::new(config.generator.clone(), derive_seed(seed, 6))?,
        })
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>, neighbors: usize) -> BoundGenerator {
        BoundGenerator {
            encoder: self.encoder.bind(tape),
            gru_e: self.gru_e.bind(tape),
            gru_r: self.gru_r.bind(tape),
            readout: self.readout.bind(tape),
            projection: self.projection.as_ref().map(|p| p.bind(tape)),
            head: self.head.bind(tape),
            neighbors,
            f_dim: self.projection.as_ref().map_or(self.encoder.d_f(), |p| p.d_in()),
            d_f: self.encoder.d_f(),
        }
    }
}

impl<T: Real> ParamSet<T> for GeneratorNet<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = prefixed("encoder", self.encoder.tensors());
        out.extend(prefixed("gru_e", self.gru_e.tensors()));
        out.extend(prefixed("gru_r", self.gru_r.tensors()));
        out.extend(prefixed("readout", self.readout.tensors()));
        if let Some(p) = &self.projection {
            out.extend(prefixed("projection", p.tensors()));
        }
        out.extend(prefixed("head", self.head.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.gru_e.tensors_mut());
        out.extend(self.gru_r.tensors_mut());
        out.extend(self.readout.tensors_mut());
        if let Some(p) = &mut self.projection {
            out.extend(p.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }
}

impl BoundGenerator {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        v.extend(self.gru_e.vars());
        v.extend(self.gru_r.vars());
        v.extend(self.readout.vars());
        if let Some(p) = &self.projection {
            v.extend(p.vars());
        }
        v.extend(self.head.vars());
        v
    }

    pub fn encode_view<T: Real>(&self, tape: &mut Tape<'_, T>, img: Var) -> Result<Var> {
        self.encoder.encode(tape, img)
    }

    fn memory_input<T: Real>(&self, tape: &mut Tape<'_, T>, memory_row: Var) -> Result<Var> {
        if tape.shape(memory_row) != [self.f_dim] {
            return Err(shape_err!("memory row must have length {}, got {:?}", self.f_dim, tape.shape(memory_row)));
        }
        match &self.projection {
            Some(p) => p.forward(tape, memory_row),
            None => Ok(memory_row),
        }
    }

    /// Runs E for `N + 1` steps: the memory row first, then the neighbor
    /// features in section order. Returns the last hidden state `h_i`.
    pub fn encoder_forward<T: Real>(&self, tape: &mut Tape<'_, T>, memory_row: Var, neighbor_images: &[Var]) -> Result<EncoderOutput> {
        if neighbor_images.len() != self.neighbors {
            return Err(contract_err!(
                "section needs exactly {} neighbor views, got {}",
                self.neighbors,
                neighbor_images.len()
            ));
        }
        let memory_input = self.memory_input(tape, memory_row)?;
        let features = neighbor_images
            .iter()
            .map(|&img| self.encoder.encode(tape, img))
            .collect::<Result<Vec<_>>>()?;
        let h0 = tape.constant(&[self.gru_e.d_h()], vec![T::zero(); self.gru_e.d_h()])?;
        let mut h = self.gru_e.step(tape, memory_input, h0)?;
        for &f in &features {
            h = self.gru_e.step(tape, f, h)?;
        }
        Ok(EncoderOutput { hidden: h, features, memory_input })
    }

    /// Runs R from hidden state `h_i`. Step 1 consumes the memory input and
    /// predicts `f'_1`; step `j ≥ 2` consumes the ground-truth `f_{j−1}` and
    /// predicts `f'_j`.
    pub fn decoder_forward<T: Real>(&self, tape: &mut Tape<'_, T>, memory_input: Var, hidden: Var, ground_truth: &[Var]) -> Result<Vec<Var>> {
        if ground_truth.is_empty() {
            return Err(contract_err!("decoder needs at least one ground-truth feature"));
        }
        for &f in ground_truth {
            if tape.shape(f) != [self.d_f] {
                return Err(shape_err!("decoder feature must have length {}, got {:?}", self.d_f, tape.shape(f)));
            }
        }
        let mut h = hidden;
        let mut preds = Vec::with_capacity(ground_truth.len());
        for j in 0..ground_truth.len() {
            let input = if j == 0 { memory_input } else { ground_truth[j - 1] };
            h = self.gru_r.step(tape, input, h)?;
            preds.push(self.readout.forward(tape, h)?);
        }
        Ok(preds)
    }

    pub fn generate_center<T: Real>(&self, tape: &mut Tape<'_, T>, hidden: Var) -> Result<Var> {
        self.head.generate(tape, hidden)
    }
}

/// All trainable networks of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct VipGanParams<T> {
    pub config: NetworkConfig,
    pub generator: GeneratorNet<T>,
    pub discriminator: DiscriminatorParams<T>,
    /// Number of completed training steps.
    pub steps: u64,
}

impl<T: Real> VipGanParams<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            generator: GeneratorNet::new(&config, derive_seed(seed, 10))?,
            discriminator: DiscriminatorParams::new(config.discriminator.clone(), derive_seed(seed, 20))?,
            config,
            steps: 0,
        })
    }

    /// Freezes (or unfreezes) the view encoder, emulating a fixed extractor.
    pub fn set_encoder_frozen(&mut self, frozen: bool) {
        self.generator.encoder.set_trainable(!frozen);
    }

    pub fn encoder_frozen(&self) -> bool {
        self.generator.encoder.tensors().iter().all(|(_, t)| !t.requires_grad())
    }

    pub fn bind_generator<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundGenerator {
        self.generator.bind(tape, self.config.neighbors)
    }

    pub fn bind_discriminator<'a>(&'a self, tape: &mut Tape<'a, T>) -> BoundDiscriminator {
        self.discriminator.bind(tape)
    }

    /// Named tensors of both networks, prefixed `g.` and `d.`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = prefixed("g", self.generator.tensors());
        out.extend(prefixed("d", self.discriminator.tensors()));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut ts = self.generator.tensors_mut();
        ts.extend(self.discriminator.tensors_mut());
        names.into_iter().zip(ts).collect()
    }
}

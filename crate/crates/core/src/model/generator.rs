use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    dropout_mask, leaky_relu, leaky_relu_backward, relu, relu_backward, BatchNorm2d, Conv2d,
    ConvTranspose2d, Mode, Visit, VisitMut,
};
use super::ops::{concat_channels, split_channels, Tensor};
use super::spec::NetworkSpec;
use super::Module;
use crate::error::{Error, Result};

/// LeakyReLU (except on the raw input) → stride-2 conv → optional norm.
#[derive(Debug, Clone)]
struct EncoderBlock {
    pre_act: bool,
    conv: Conv2d,
    norm: Option<BatchNorm2d>,
    slope: f64,
}

impl EncoderBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let a = if self.pre_act {
            leaky_relu(x, self.slope)
        } else {
            x.clone()
        };
        let c = self.conv.forward(&a);
        match &mut self.norm {
            Some(bn) => bn.forward(&c, mode),
            None => c,
        }
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let dc = match &mut self.norm {
            Some(bn) => bn.backward(dy),
            None => dy.clone(),
        };
        // The activated input has the same sign as the raw input.
        let a = self.conv.cached_input().cloned().unwrap_or_default();
        let da = self.conv.backward(&dc);
        if self.pre_act {
            leaky_relu_backward(&da, &a, self.slope)
        } else {
            da
        }
    }
}

/// ReLU → stride-2 transposed conv → norm → optional dropout.
#[derive(Debug, Clone)]
struct DecoderBlock {
    conv: ConvTranspose2d,
    norm: BatchNorm2d,
    dropout: f64,
    mask: Option<Tensor>,
}

impl DecoderBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Tensor {
        let c = self.conv.forward(&relu(x));
        let mut y = self.norm.forward(&c, mode);
        self.mask = None;
        if self.dropout > 0.0 {
            if let Some(rng) = rng {
                let mask = dropout_mask(y.shape(), self.dropout, rng);
                y *= &mask;
                self.mask = Some(mask);
            }
        }
        y
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let dn = match self.mask.take() {
            Some(mask) => dy * &mask,
            None => dy.clone(),
        };
        let dc = self.norm.backward(&dn);
        let a = self.conv.cached_input().cloned().unwrap_or_default();
        let da = self.conv.backward(&dc);
        relu_backward(&da, &a)
    }
}

/// U-Net generator with skip connections and a tanh output layer.
#[derive(Debug, Clone)]
pub struct GeneratorNetwork {
    pub spec: NetworkSpec,
    pub mode: Mode,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    output: ConvTranspose2d,
    output_cache: Option<Tensor>,
}

impl GeneratorNetwork {
    /// Conv weights and norm scales drawn from N(0, 0.02) and N(1, 0.02),
    /// biases zero; deterministic in `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let down = spec.geom(spec.stride);
        let mut encoder = Vec::with_capacity(spec.encoder.len());
        let mut cin = spec.input_channels;
        for (i, l) in spec.encoder.iter().enumerate() {
            let conv = Conv2d::new(cin, l.channels, down, !l.norm, &mut rng);
            let norm = l.norm.then(|| BatchNorm2d::new(l.channels, &mut rng));
            encoder.push(EncoderBlock {
                pre_act: i > 0,
                conv,
                norm,
                slope: spec.leaky_slope,
            });
            cin = l.channels;
        }
        let n = spec.encoder.len();
        let mut decoder = Vec::with_capacity(spec.decoder.len());
        for (i, l) in spec.decoder.iter().enumerate() {
            let conv = ConvTranspose2d::new(cin, l.channels, down, false, &mut rng);
            let norm = BatchNorm2d::new(l.channels, &mut rng);
            decoder.push(DecoderBlock {
                conv,
                norm,
                dropout: l.dropout,
                mask: None,
            });
            cin = l.channels + spec.encoder[n - 2 - i].channels;
        }
        let output = ConvTranspose2d::new(cin, spec.output_channels, down, true, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            mode: Mode::Train,
            encoder,
            decoder,
            output,
            output_cache: None,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.spec.input_channels || h != w {
            return Err(Error::ShapeMismatch {
                expected: format!("(N, {}, S, S)", self.spec.input_channels),
                got: format!("{:?}", x.shape()),
            });
        }
        let side_ok = h.is_power_of_two() && h >= self.spec.min_side();
        if !side_ok {
            return Err(Error::ShapeMismatch {
                expected: format!("power-of-two side >= {}", self.spec.min_side()),
                got: format!("{h}"),
            });
        }
        Ok(())
    }

    /// Maps faces (N, C_in, S, S) to predictions (N, C_out, S, S) in [−1, 1].
    /// Dropout is applied only when an RNG is supplied.
    pub fn forward(&mut self, x: &Tensor, dropout: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        self.check_input(x)?;
        let mode = self.mode;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for block in &mut self.encoder {
            h = block.forward(&h, mode);
            skips.push(h.clone());
        }
        let n = skips.len();
        let mut rng = dropout;
        let mut d_in = skips[n - 1].clone();
        for (i, block) in self.decoder.iter_mut().enumerate() {
            let out = block.forward(&d_in, mode, rng.as_deref_mut());
            d_in = concat_channels(&out, &skips[n - 2 - i]);
        }
        let c = self.output.forward(&relu(&d_in));
        let y = c.mapv(f64::tanh);
        self.output_cache = Some(y.clone());
        Ok(y)
    }

    /// Backpropagates `dy` (gradient w.r.t. the forward output) through the
    /// most recent train-mode forward, accumulating parameter gradients.
    /// Returns the gradient w.r.t. the input.
    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let y = self.output_cache.take().expect("backward without forward");
        let dc = dy * &y.mapv(|v| 1.0 - v * v);
        let a = self.output.cached_input().cloned().unwrap_or_default();
        let mut d_cat = relu_backward(&self.output.backward(&dc), &a);

        let n = self.encoder.len();
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; n];
        for i in (0..self.decoder.len()).rev() {
            let out_ch = self.spec.decoder[i].channels;
            let (d_out, d_skip) = split_channels(&d_cat, out_ch);
            skip_grads[n - 2 - i] = Some(d_skip);
            d_cat = self.decoder[i].backward(&d_out);
        }
        // d_cat is now the gradient w.r.t. the bottleneck output.
        let mut d_h = d_cat;
        for i in (0..n).rev() {
            if let Some(s) = skip_grads[i].take() {
                d_h += &s;
            }
            d_h = self.encoder[i].backward(&d_h);
        }
        d_h
    }

    /// Spatial side of each encoder output for input `x`.
    pub fn encoder_output_sides(&mut self, x: &Tensor) -> Result<Vec<usize>> {
        self.check_input(x)?;
        let mode = self.mode;
        let mut h = x.clone();
        let mut sides = Vec::new();
        for block in &mut self.encoder {
            h = block.forward(&h, mode);
            sides.push(h.dim().2);
        }
        Ok(sides)
    }
}

impl Module for GeneratorNetwork {
    fn visit_mut(&mut self, f: &mut VisitMut) {
        for (i, b) in self.encoder.iter_mut().enumerate() {
            b.conv.visit_mut(&format!("enc{i}.conv"), f);
            if let Some(bn) = &mut b.norm {
                bn.visit_mut(&format!("enc{i}.norm"), f);
            }
        }
        for (i, b) in self.decoder.iter_mut().enumerate() {
            b.conv.visit_mut(&format!("dec{i}.conv"), f);
            b.norm.visit_mut(&format!("dec{i}.norm"), f);
        }
        self.output.visit_mut("out.conv", f);
    }

    fn visit(&self, f: &mut Visit) {
        for (i, b) in self.encoder.iter().enumerate() {
            b.conv.visit(&format!("enc{i}.conv"), f);
            if let Some(bn) = &b.norm {
                bn.visit(&format!("enc{i}.norm"), f);
            }
        }
        for (i, b) in self.decoder.iter().enumerate() {
            b.conv.visit(&format!("dec{i}.conv"), f);
            b.norm.visit(&format!("dec{i}.norm"), f);
        }
        self.output.visit("out.conv", f);
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{leaky_relu, leaky_relu_backward, BatchNorm2d, Conv2d, Mode, Visit, VisitMut};
use super::ops::{concat_channels, Tensor};
use super::spec::NetworkSpec;
use super::Module;
use crate::error::{Error, Result};

/// conv → optional norm → LeakyReLU
#[derive(Debug, Clone)]
struct DiscBlock {
    conv: Conv2d,
    norm: Option<BatchNorm2d>,
    out: Option<Tensor>,
}

/// Patch discriminator over the channel-wise concatenation of the
/// conditioning face and a candidate MRI frame. Emits one unbounded logit
/// per receptive-field patch.
#[derive(Debug, Clone)]
pub struct DiscriminatorNetwork {
    pub spec: NetworkSpec,
    pub mode: Mode,
    blocks: Vec<DiscBlock>,
    head: Conv2d,
}

impl DiscriminatorNetwork {
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strides = spec.disc_strides();
        let mut cin = spec.input_channels + spec.output_channels;
        let mut blocks = Vec::with_capacity(spec.disc_layers.len());
        for (i, &c) in spec.disc_layers.iter().enumerate() {
            let conv = Conv2d::new(cin, c, spec.geom(strides[i]), i == 0, &mut rng);
            let norm = (i > 0).then(|| BatchNorm2d::new(c, &mut rng));
            blocks.push(DiscBlock {
                conv,
                norm,
                out: None,
            });
            cin = c;
        }
        let head = Conv2d::new(cin, 1, spec.geom(1), true, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            mode: Mode::Train,
            blocks,
            head,
        })
    }

    /// Logit grid (N, 1, P, P) for `face` (N, C_in, S, S) and
    /// `candidate` (N, C_out, S, S).
    pub fn forward(&mut self, face: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        let (fd, cd) = (face.dim(), candidate.dim());
        if fd.0 != cd.0 || fd.2 != cd.2 || fd.3 != cd.3 {
            return Err(Error::ShapeMismatch {
                expected: format!("candidate with face batch/spatial dims {:?}", face.shape()),
                got: format!("{:?}", candidate.shape()),
            });
        }
        if fd.1 != self.spec.input_channels || cd.1 != self.spec.output_channels {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{} face and {} candidate channels",
                    self.spec.input_channels, self.spec.output_channels
                ),
                got: format!("{} and {}", fd.1, cd.1),
            });
        }
        if self.spec.disc_output_side(fd.2).is_none() || fd.2 != fd.3 {
            return Err(Error::ShapeMismatch {
                expected: "square input large enough for the discriminator".into(),
                got: format!("{:?}", face.shape()),
            });
        }
        let mode = self.mode;
        let slope = self.spec.leaky_slope;
        let mut h = concat_channels(face, candidate);
        for b in &mut self.blocks {
            let c = b.conv.forward(&h);
            let n = match &mut b.norm {
                Some(bn) => bn.forward(&c, mode),
                None => c,
            };
            h = leaky_relu(&n, slope);
            b.out = Some(h.clone());
        }
        Ok(self.head.forward(&h))
    }

    /// Backpropagates the logit gradient; returns the gradient w.r.t. the
    /// concatenated (face, candidate) input.
    pub fn backward(&mut self, d_logits: &Tensor) -> Tensor {
        let slope = self.spec.leaky_slope;
        let mut d = self.head.backward(d_logits);
        for b in self.blocks.iter_mut().rev() {
            let out = b.out.take().expect("backward without forward");
            let dn = leaky_relu_backward(&d, &out, slope);
            let dc = match &mut b.norm {
                Some(bn) => bn.backward(&dn),
                None => dn,
            };
            d = b.conv.backward(&dc);
        }
        d
    }
}

impl Module for DiscriminatorNetwork {
    fn visit_mut(&mut self, f: &mut VisitMut) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.conv.visit_mut(&format!("block{i}.conv"), f);
            if let Some(bn) = &mut b.norm {
                bn.visit_mut(&format!("block{i}.norm"), f);
            }
        }
        self.head.visit_mut("head.conv", f);
    }

    fn visit(&self, f: &mut Visit) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.conv.visit(&format!("block{i}.conv"), f);
            if let Some(bn) = &b.norm {
                bn.visit(&format!("block{i}.norm"), f);
            }
        }
        self.head.visit("head.conv", f);
    }
}

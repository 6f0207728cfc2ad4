//! Conditional image-to-image translation networks: a U-Net generator and a
//! patch discriminator, trained with a BCE adversarial term plus L1.

mod discriminator;
mod generator;
pub mod layers;
mod loss;
pub mod ops;
mod spec;

pub use discriminator::DiscriminatorNetwork;
pub use generator::GeneratorNetwork;
pub use layers::{Mode, Param, Visit, VisitMut};
pub use loss::{
    bce_with_logits, discriminator_loss, generator_loss, DiscriminatorLoss, GeneratorLoss,
    LossBreakdown,
};
pub use ops::Tensor;
pub use spec::{DecoderLayer, EncoderLayer, NetworkSpec, OutputActivation};

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};

/// Stacks equally sized (C, H, W) frames into an (N, C, H, W) batch.
pub fn batch_frames<'a>(frames: impl IntoIterator<Item = &'a Array3<f64>>) -> Result<Tensor> {
    let views: Vec<_> = frames.into_iter().map(|f| f.view()).collect();
    if views.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: "at least one frame".into(),
            got: "none".into(),
        });
    }
    ndarray::stack(Axis(0), &views).map_err(|e| Error::ShapeMismatch {
        expected: "frames of identical shape".into(),
        got: e.to_string(),
    })
}

/// A network whose named tensors can be enumerated in a stable order.
pub trait Module {
    fn visit(&self, f: &mut Visit);
    fn visit_mut(&mut self, f: &mut VisitMut);

    /// Number of trainable scalars.
    fn parameter_count(&self) -> usize {
        let mut total = 0;
        self.visit(&mut |_, p| {
            if p.trainable {
                total += p.len()
            }
        });
        total
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }
}

use serde::{Deserialize, Serialize};

use super::ops::ConvGeom;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub channels: usize,
    pub norm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayer {
    pub channels: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
}

/// Layer layout of the U-Net generator and the patch discriminator.
///
/// Decoder layer `i` upsamples the concatenation of the previous decoder
/// output with encoder output `len(encoder) − 1 − i` (layer 0 reads the
/// bottleneck alone). A final transposed convolution maps the last
/// concatenation to `output_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub output_channels: usize,
    pub output_activation: OutputActivation,
    /// Discriminator widths; all but the last use stride 2, the last stride 1,
    /// followed by a stride-1 single-channel logit layer.
    pub disc_layers: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub leaky_slope: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl NetworkSpec {
    /// Encoder C64-C128-C256-C512-C512-C512-C512-C512, decoder
    /// CD512-CD512-CD512-C512-C256-C128-C64, tanh output, 70×70 patch
    /// discriminator C64-C128-C256-C512.
    pub fn standard() -> Self {
        let enc = [64, 128, 256, 512, 512, 512, 512, 512];
        let dec = [512, 512, 512, 512, 256, 128, 64];
        Self {
            input_channels: 3,
            encoder: enc
                .iter()
                .enumerate()
                .map(|(i, &channels)| EncoderLayer {
                    channels,
                    norm: i != 0 && i != enc.len() - 1,
                })
                .collect(),
            decoder: dec
                .iter()
                .enumerate()
                .map(|(i, &channels)| DecoderLayer {
                    channels,
                    dropout: if i < 3 { 0.5 } else { 0.0 },
                })
                .collect(),
            output_channels: 1,
            output_activation: OutputActivation::Tanh,
            disc_layers: vec![64, 128, 256, 512],
            kernel_size: 4,
            stride: 2,
            leaky_slope: 0.2,
        }
    }

    /// Reduced network for 16×16 inputs: encoder [4, 8, 8, 8] with the
    /// mirrored decoder [8, 8, 4] and discriminator [4, 8].
    pub fn tiny() -> Self {
        Self::scaled(&[4, 8, 8, 8], &[4, 8])
    }

    /// Network with the given encoder widths, mirrored decoder and
    /// standard norm placement. Dropout sits on the first three decoder
    /// layers, never on the last one.
    pub fn scaled(encoder: &[usize], disc: &[usize]) -> Self {
        let n = encoder.len();
        let decoder: Vec<DecoderLayer> = (0..n.saturating_sub(1))
            .map(|i| DecoderLayer {
                channels: encoder[n - 2 - i],
                dropout: if i < 3 && i + 1 < n - 1 { 0.5 } else { 0.0 },
            })
            .collect();
        Self {
            encoder: encoder
                .iter()
                .enumerate()
                .map(|(i, &channels)| EncoderLayer {
                    channels,
                    norm: i != 0 && i != n - 1,
                })
                .collect(),
            decoder,
            disc_layers: disc.to_vec(),
            ..Self::standard()
        }
    }

    pub fn geom(&self, stride: usize) -> ConvGeom {
        ConvGeom {
            kernel: self.kernel_size,
            stride,
            pad: (self.kernel_size - self.stride) / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.encoder.is_empty() {
            return bad("encoder has no layers".into());
        }
        if self.decoder.len() + 1 != self.encoder.len() {
            return bad(format!(
                "skip mismatch: decoder has {} layers, encoder {} (need encoder − 1)",
                self.decoder.len(),
                self.encoder.len()
            ));
        }
        if self.kernel_size != 4 || self.stride != 2 {
            return bad(format!(
                "only kernel 4 / stride 2 are supported, got {}/{}",
                self.kernel_size, self.stride
            ));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.encoder.iter().any(|l| l.channels == 0)
            || self.decoder.iter().any(|l| l.channels == 0)
            || self.disc_layers.contains(&0)
        {
            return bad("layer widths must be positive".into());
        }
        if let Some(l) = self.decoder.iter().find(|l| l.dropout != 0.0 && l.dropout != 0.5) {
            return bad(format!("dropout rate {} not in {{0, 0.5}}", l.dropout));
        }
        if self.disc_layers.is_empty() {
            return bad("discriminator has no layers".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky slope {} outside (0, 1)", self.leaky_slope));
        }
        Ok(())
    }

    /// Smallest input side the generator accepts.
    pub fn min_side(&self) -> usize {
        1 << self.encoder.len()
    }

    pub fn check_input_side(&self, side: usize) -> Result<()> {
        if !side.is_power_of_two() || side < self.min_side() {
            return Err(Error::ShapeMismatch {
                expected: format!("square power-of-two side >= {}", self.min_side()),
                got: format!("{side}"),
            });
        }
        if self.disc_output_side(side).is_none() {
            return Err(Error::ShapeMismatch {
                expected: "input large enough for the discriminator".into(),
                got: format!("{side}"),
            });
        }
        Ok(())
    }

    /// Spatial side after each encoder layer.
    pub fn encoder_sides(&self, side: usize) -> Vec<usize> {
        let g = self.geom(self.stride);
        let mut s = side;
        self.encoder
            .iter()
            .map(|_| {
                s = g.conv_out(s).unwrap_or(0);
                s
            })
            .collect()
    }

    pub fn disc_strides(&self) -> Vec<usize> {
        let n = self.disc_layers.len();
        (0..=n)
            .map(|i| if i + 1 < n { self.stride } else { 1 })
            .collect()
    }

    /// Side of the discriminator's logit grid.
    pub fn disc_output_side(&self, side: usize) -> Option<usize> {
        let mut s = side;
        for stride in self.disc_strides() {
            s = self.geom(stride).conv_out(s)?;
        }
        Some(s)
    }

    /// Number of trainable generator scalars.
    pub fn generator_parameter_count(&self) -> usize {
        let kk = self.kernel_size * self.kernel_size;
        let mut total = 0;
        let mut cin = self.input_channels;
        for l in &self.encoder {
            total += cin * l.channels * kk + if l.norm { 2 * l.channels } else { l.channels };
            cin = l.channels;
        }
        let n = self.encoder.len();
        let mut cin = self.encoder[n - 1].channels;
        for (i, l) in self.decoder.iter().enumerate() {
            total += cin * l.channels * kk + 2 * l.channels;
            cin = l.channels + self.encoder[n - 2 - i].channels;
        }
        total + cin * self.output_channels * kk + self.output_channels
    }

    /// Number of trainable discriminator scalars.
    pub fn discriminator_parameter_count(&self) -> usize {
        let kk = self.kernel_size * self.kernel_size;
        let mut total = 0;
        let mut cin = self.input_channels + self.output_channels;
        for (i, &c) in self.disc_layers.iter().enumerate() {
            total += cin * c * kk + if i == 0 { c } else { 2 * c };
            cin = c;
        }
        total + cin * kk + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_spec_layout() {
        let s = NetworkSpec::standard();
        s.validate().unwrap();
        assert_eq!(s.encoder.len(), 8);
        assert_eq!(s.decoder.len(), 7);
        let widths: Vec<_> = s.decoder.iter().map(|l| l.channels).collect();
        assert_eq!(widths, [512, 512, 512, 512, 256, 128, 64]);
        let drops: Vec<_> = s.decoder.iter().map(|l| l.dropout).collect();
        assert_eq!(drops, [0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.encoder_sides(256), [128, 64, 32, 16, 8, 4, 2, 1]);
        assert_eq!(s.disc_output_side(256), Some(30));
    }

    #[test]
    fn tiny_spec_layout() {
        let s = NetworkSpec::tiny();
        s.validate().unwrap();
        let widths: Vec<_> = s.decoder.iter().map(|l| l.channels).collect();
        assert_eq!(widths, [8, 8, 4]);
        assert_eq!(s.encoder_sides(16), [8, 4, 2, 1]);
        assert_eq!(s.disc_output_side(16), Some(6));
    }

    #[test]
    fn skip_mismatch_rejected() {
        let mut s = NetworkSpec::tiny();
        s.decoder.pop();
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn bad_dropout_rejected() {
        let mut s = NetworkSpec::tiny();
        s.decoder[0].dropout = 0.3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn input_side_rule() {
        let s = NetworkSpec::standard();
        assert!(s.check_input_side(256).is_ok());
        assert!(s.check_input_side(128).is_err());
        assert!(s.check_input_side(300).is_err());
    }
}

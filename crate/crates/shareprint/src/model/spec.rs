//! Architecture description: layer names, per-layer dimensions, and the
//! default configurations.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// The eight named layers, in network order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerName {
    Constrained,
    Conv1,
    Conv2,
    Conv3,
    Conv4,
    Fc1,
    Fc2,
    Fc3,
}

pub const ALL_LAYERS: [LayerName; 8] = [
    LayerName::Constrained,
    LayerName::Conv1,
    LayerName::Conv2,
    LayerName::Conv3,
    LayerName::Conv4,
    LayerName::Fc1,
    LayerName::Fc2,
    LayerName::Fc3,
];

impl LayerName {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerName::Constrained => "constrained",
            LayerName::Conv1 => "conv1",
            LayerName::Conv2 => "conv2",
            LayerName::Conv3 => "conv3",
            LayerName::Conv4 => "conv4",
            LayerName::Fc1 => "fc1",
            LayerName::Fc2 => "fc2",
            LayerName::Fc3 => "fc3",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ModelError> {
        ALL_LAYERS
            .iter()
            .copied()
            .find(|l| l.as_str() == name)
            .ok_or_else(|| ModelError::UnknownLayer(name.to_string()))
    }

    pub fn index(self) -> usize {
        ALL_LAYERS.iter().position(|&l| l == self).expect("listed")
    }
}

impl std::fmt::Display for LayerName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    None,
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub size: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn none() -> Self {
        PoolSpec {
            kind: PoolKind::None,
            size: 1,
            stride: 1,
        }
    }

    pub fn max(size: usize, stride: usize) -> Self {
        PoolSpec {
            kind: PoolKind::Max,
            size,
            stride,
        }
    }

    pub fn avg(size: usize, stride: usize) -> Self {
        PoolSpec {
            kind: PoolKind::Avg,
            size,
            stride,
        }
    }
}

/// One standard convolutional block: conv, optional batch norm, tanh,
/// optional pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub batch_norm: bool,
    pub pool: PoolSpec,
}

/// Full architecture description. Exactly five convolutional layers (the
/// constrained layer plus four blocks) and three fully connected layers;
/// fc3 width always equals `num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub constrained_kernels: usize,
    pub constrained_kernel_size: usize,
    pub conv_layers: Vec<ConvSpec>,
    pub fc_dims: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    /// The reference configuration at 256x256 RGB: constrained 6@5x5,
    /// then 96/64/64/128 kernel blocks and 200-wide fc layers.
    pub fn standard(num_classes: usize) -> Self {
        ModelSpec {
            input_height: 256,
            input_width: 256,
            input_channels: 3,
            constrained_kernels: 6,
            constrained_kernel_size: 5,
            conv_layers: vec![
                ConvSpec {
                    kernels: 96,
                    kernel_size: 7,
                    stride: 2,
                    batch_norm: true,
                    pool: PoolSpec::max(3, 2),
                },
                ConvSpec {
                    kernels: 64,
                    kernel_size: 5,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::max(3, 2),
                },
                ConvSpec {
                    kernels: 64,
                    kernel_size: 5,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::max(3, 2),
                },
                ConvSpec {
                    kernels: 128,
                    kernel_size: 1,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::avg(3, 2),
                },
            ],
            fc_dims: vec![200, 200],
            num_classes,
        }
    }

    /// A lean profile for CPU-only runs: same shape, fewer kernels.
    pub fn desk(num_classes: usize) -> Self {
        let mut spec = Self::standard(num_classes);
        spec.conv_layers[0].kernels = 12;
        spec.conv_layers[1].kernels = 16;
        spec.conv_layers[2].kernels = 24;
        spec.conv_layers[3].kernels = 32;
        spec.fc_dims = vec![64, 64];
        spec
    }

    /// A small-geometry profile for smoke tests; still five conv layers
    /// and three fc layers.
    pub fn smoke(num_classes: usize, input: usize) -> Self {
        ModelSpec {
            input_height: input,
            input_width: input,
            input_channels: 3,
            constrained_kernels: 6,
            constrained_kernel_size: 5,
            conv_layers: vec![
                ConvSpec {
                    kernels: 4,
                    kernel_size: 3,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::max(2, 2),
                },
                ConvSpec {
                    kernels: 6,
                    kernel_size: 3,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::max(2, 2),
                },
                ConvSpec {
                    kernels: 8,
                    kernel_size: 3,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::none(),
                },
                ConvSpec {
                    kernels: 8,
                    kernel_size: 1,
                    stride: 1,
                    batch_norm: true,
                    pool: PoolSpec::none(),
                },
            ],
            fc_dims: vec![16, 16],
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.conv_layers.len() != 4 {
            return Err(ModelError::BadSpec(format!(
                "expected 4 standard conv blocks after the constrained layer, got {}",
                self.conv_layers.len()
            )));
        }
        if self.fc_dims.len() != 2 {
            return Err(ModelError::BadSpec(format!(
                "expected 2 hidden fc widths (fc3 is the class layer), got {}",
                self.fc_dims.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::BadSpec("need at least 2 classes".into()));
        }
        if self.constrained_kernels == 0
            || self.constrained_kernel_size < 3
            || self.constrained_kernel_size % 2 == 0
        {
            return Err(ModelError::BadSpec(
                "constrained layer needs >=1 kernel and an odd kernel size >= 3".into(),
            ));
        }
        for (i, c) in self.conv_layers.iter().enumerate() {
            if c.kernels == 0 || c.kernel_size == 0 || c.stride == 0 {
                return Err(ModelError::BadSpec(format!("conv{} has a zero dimension", i + 1)));
            }
        }
        if self.fc_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::BadSpec("zero-width fc layer".into()));
        }
        self.feature_len()?;
        Ok(())
    }

    /// Spatial geometry after each stage; errors when any stage collapses.
    pub fn feature_len(&self) -> Result<usize, ModelError> {
        let mut h = self.input_height;
        let mut w = self.input_width;
        let mut c;
        let shrink = |h: &mut usize, w: &mut usize, k: usize, s: usize, what: &str| {
            if *h < k || *w < k {
                return Err(ModelError::BadSpec(format!(
                    "{what}: {h}x{w} too small for kernel {k}"
                )));
            }
            *h = (*h - k) / s + 1;
            *w = (*w - k) / s + 1;
            Ok(())
        };
        shrink(&mut h, &mut w, self.constrained_kernel_size, 1, "constrained")?;
        c = self.constrained_kernels;
        for (i, conv) in self.conv_layers.iter().enumerate() {
            shrink(&mut h, &mut w, conv.kernel_size, conv.stride, &format!("conv{}", i + 1))?;
            c = conv.kernels;
            if conv.pool.kind != PoolKind::None {
                shrink(&mut h, &mut w, conv.pool.size, conv.pool.stride, &format!("conv{} pool", i + 1))?;
            }
        }
        Ok(c * h * w)
    }
}

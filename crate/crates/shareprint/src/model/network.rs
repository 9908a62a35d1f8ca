//! The assembled network: Xavier-initialized weights, the constrained
//! first-layer projection, freeze/share flags, and parameter access for
//! the optimizer.

use ndarray::{Array1, Array2, Array4, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Uniform};
use sha2::{Digest, Sha256};

use super::layers::{Activation, BatchNorm, ConvBlock, FcBlock, Layer};
use super::scalar::Scalar;
use super::spec::{LayerName, ModelSpec, ALL_LAYERS};
use super::stack::{backward_layers, forward_eval, forward_train, Gradients, Tape};
use super::ModelError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerFlags {
    pub frozen: bool,
    pub shared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerMode {
    Frozen,
    Trainable,
    Shared,
}

/// The weight state of a full eight-layer network.
#[derive(Debug, Clone)]
pub struct Network<F: Scalar> {
    pub spec: ModelSpec,
    layers: Vec<Layer<F>>,
    flags: Vec<LayerFlags>,
}

fn xavier_conv<F: Scalar>(
    out_ch: usize,
    in_ch: usize,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Array4<F> {
    let fan_in = (in_ch * k * k) as f64;
    let fan_out = (out_ch * k * k) as f64;
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Array4::from_shape_fn((out_ch, in_ch, k, k), |_| F::of_f64(dist.sample(rng)))
}

fn xavier_fc<F: Scalar>(out_f: usize, in_f: usize, rng: &mut ChaCha12Rng) -> Array2<F> {
    let limit = (6.0 / (in_f + out_f) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Array2::from_shape_fn((out_f, in_f), |_| F::of_f64(dist.sample(rng)))
}

impl<F: Scalar> Network<F> {
    /// Build and initialize deterministically from `seed`; the
    /// constrained layer is projected immediately.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut layers: Vec<Layer<F>> = Vec::with_capacity(8);
        layers.push(Layer::Conv(ConvBlock {
            weight: xavier_conv(
                spec.constrained_kernels,
                spec.input_channels,
                spec.constrained_kernel_size,
                &mut rng,
            ),
            bias: Array1::zeros(spec.constrained_kernels),
            stride: 1,
            bn: None,
            act: Activation::None,
            pool: super::spec::PoolSpec::none(),
            constrained: true,
        }));
        let mut in_ch = spec.constrained_kernels;
        for conv in &spec.conv_layers {
            layers.push(Layer::Conv(ConvBlock {
                weight: xavier_conv(conv.kernels, in_ch, conv.kernel_size, &mut rng),
                bias: Array1::zeros(conv.kernels),
                stride: conv.stride,
                bn: conv.batch_norm.then(|| BatchNorm::new(conv.kernels)),
                act: Activation::Tanh,
                pool: conv.pool,
                constrained: false,
            }));
            in_ch = conv.kernels;
        }
        let mut in_f = spec.feature_len()?;
        for &width in &spec.fc_dims {
            layers.push(Layer::Fc(FcBlock {
                weight: xavier_fc(width, in_f, &mut rng),
                bias: Array1::zeros(width),
                act: Activation::Tanh,
            }));
            in_f = width;
        }
        layers.push(Layer::Fc(FcBlock {
            weight: xavier_fc(spec.num_classes, in_f, &mut rng),
            bias: Array1::zeros(spec.num_classes),
            act: Activation::None,
        }));
        let mut net = Network {
            spec: spec.clone(),
            layers,
            flags: vec![LayerFlags::default(); 8],
        };
        net.project_constrained();
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn flags(&self) -> &[LayerFlags] {
        &self.flags
    }

    /// Re-initialize the class layer, e.g. when retargeting a checkpoint
    /// to a task with a different label set.
    pub fn reinit_fc3(&mut self, num_classes: usize, seed: u64) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let in_f = match &self.layers[LayerName::Fc2.index()] {
            Layer::Fc(fc) => fc.weight.dim().0,
            _ => unreachable!("fc2 is fully connected"),
        };
        self.layers[LayerName::Fc3.index()] = Layer::Fc(FcBlock {
            weight: xavier_fc(num_classes, in_f, &mut rng),
            bias: Array1::zeros(num_classes),
            act: Activation::None,
        });
        self.spec.num_classes = num_classes;
    }

    /// Restore the constrained-layer invariant: each 2-D kernel slice has
    /// center -1 and off-center coefficients summing to 1.
    pub fn project_constrained(&mut self) {
        let Layer::Conv(conv) = &mut self.layers[0] else {
            unreachable!("layer 0 is the constrained conv");
        };
        project_constrained_weight(&mut conv.weight);
        conv.bias.fill(F::zero());
    }

    /// Set frozen/trainable/shared on the contiguous prefix
    /// [constrained ..= boundary]. The class layer is never a boundary.
    pub fn set_layer_mode(&mut self, boundary: LayerName, mode: LayerMode) -> Result<(), ModelError> {
        if boundary == LayerName::Fc3 {
            return Err(ModelError::BadBoundary("fc3"));
        }
        for i in 0..=boundary.index() {
            match mode {
                LayerMode::Frozen => self.flags[i].frozen = true,
                LayerMode::Shared => self.flags[i].shared = true,
                LayerMode::Trainable => self.flags[i] = LayerFlags::default(),
            }
        }
        Ok(())
    }

    pub fn set_flags(&mut self, flags: Vec<LayerFlags>) {
        assert_eq!(flags.len(), self.flags.len());
        self.flags = flags;
    }

    fn check_geometry(&self, x: &Array4<F>) -> Result<(), ModelError> {
        let want = (
            x.dim().0,
            self.spec.input_channels,
            self.spec.input_height,
            self.spec.input_width,
        );
        if x.dim() != want {
            return Err(ModelError::BadGeometry {
                want,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Class probabilities for a batch (inference mode).
    pub fn predict_proba(&self, x: &Array4<F>) -> Result<Array2<F>, ModelError> {
        self.check_geometry(x)?;
        Ok(super::stack::softmax_rows(&forward_eval(&self.layers, x)))
    }

    /// Logits for a batch (inference mode).
    pub fn logits(&self, x: &Array4<F>) -> Result<Array2<F>, ModelError> {
        self.check_geometry(x)?;
        Ok(forward_eval(&self.layers, x))
    }

    /// Training forward pass: records a tape and updates batch-norm
    /// statistics of non-frozen layers.
    pub fn forward_train(&mut self, x: &Array4<F>) -> Result<(Array2<F>, Tape<F>), ModelError> {
        self.check_geometry(x)?;
        let frozen: Vec<bool> = self.flags.iter().map(|f| f.frozen).collect();
        Ok(forward_train(&mut self.layers, &frozen, x))
    }

    pub fn backward(&self, tape: &Tape<F>, dlogits: Array2<F>) -> Gradients<F> {
        backward_layers(&self.layers, tape, dlogits, false).0
    }

    /// Mutable views over every parameter tensor, with (layer, slot)
    /// ids matching [`Gradients`] order. Slots: 0 weight, 1 bias,
    /// 2 bn gamma, 3 bn beta.
    pub fn param_views_mut(&mut self) -> Vec<((usize, usize), ArrayViewMutD<'_, F>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(conv) => {
                    out.push(((i, 0), conv.weight.view_mut().into_dyn()));
                    out.push(((i, 1), conv.bias.view_mut().into_dyn()));
                    if let Some(bn) = conv.bn.as_mut() {
                        out.push(((i, 2), bn.gamma.view_mut().into_dyn()));
                        out.push(((i, 3), bn.beta.view_mut().into_dyn()));
                    }
                }
                Layer::Fc(fc) => {
                    out.push(((i, 0), fc.weight.view_mut().into_dyn()));
                    out.push(((i, 1), fc.bias.view_mut().into_dyn()));
                }
            }
        }
        out
    }

    /// SHA-256 over the named layers' parameters and statistics, in
    /// declaration order. Exact: hashes the canonical little-endian f64
    /// encoding of every value.
    pub fn checksum_layers(&self, names: &[LayerName]) -> String {
        let mut hasher = Sha256::new();
        for &name in names {
            hash_layer(&mut hasher, &self.layers[name.index()]);
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn checksum_all(&self) -> String {
        self.checksum_layers(&ALL_LAYERS)
    }

    /// Names of the layers whose `frozen` flag is set.
    pub fn frozen_layers(&self) -> Vec<LayerName> {
        ALL_LAYERS
            .iter()
            .copied()
            .filter(|l| self.flags[l.index()].frozen)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }
}

pub(super) fn hash_layer<F: Scalar>(hasher: &mut Sha256, layer: &Layer<F>) {
    let mut feed = |arr: &[F]| {
        for v in arr {
            hasher.update(v.as_f64().to_le_bytes());
        }
    };
    match layer {
        Layer::Conv(conv) => {
            feed(conv.weight.as_slice().expect("contiguous"));
            feed(conv.bias.as_slice().expect("contiguous"));
            if let Some(bn) = conv.bn.as_ref() {
                feed(bn.gamma.as_slice().expect("contiguous"));
                feed(bn.beta.as_slice().expect("contiguous"));
                feed(bn.running_mean.as_slice().expect("contiguous"));
                feed(bn.running_var.as_slice().expect("contiguous"));
            }
        }
        Layer::Fc(fc) => {
            feed(fc.weight.as_slice().expect("contiguous"));
            feed(fc.bias.as_slice().expect("contiguous"));
        }
    }
}

/// Project every 2-D kernel slice of a constrained conv weight.
pub fn project_constrained_weight<F: Scalar>(weight: &mut Array4<F>) {
    let (out_ch, in_ch, k, _) = weight.dim();
    let center = k / 2;
    let tiny = F::of_f64(1e-8);
    let uniform_fill = F::one() / F::from_usize(k * k - 1).expect("fits");
    for o in 0..out_ch {
        for c in 0..in_ch {
            let mut sum = F::zero();
            for y in 0..k {
                for x in 0..k {
                    if y != center || x != center {
                        sum = sum + weight[[o, c, y, x]];
                    }
                }
            }
            if sum.abs() < tiny {
                // degenerate kernel: fall back to a uniform averaging filter
                for y in 0..k {
                    for x in 0..k {
                        weight[[o, c, y, x]] = uniform_fill;
                    }
                }
            } else {
                let inv = F::one() / sum;
                for y in 0..k {
                    for x in 0..k {
                        weight[[o, c, y, x]] = weight[[o, c, y, x]] * inv;
                    }
                }
            }
            weight[[o, c, center, center]] = -F::one();
        }
    }
}

/// Largest violation of the constrained-kernel invariant: max over
/// kernels of |center + 1| and |off-center sum - 1|.
pub fn constrained_deviation<F: Scalar>(weight: &Array4<F>) -> f64 {
    let (out_ch, in_ch, k, _) = weight.dim();
    let center = k / 2;
    let mut worst = 0.0f64;
    for o in 0..out_ch {
        for c in 0..in_ch {
            let mut sum = 0.0f64;
            for y in 0..k {
                for x in 0..k {
                    if y != center || x != center {
                        sum += weight[[o, c, y, x]].as_f64();
                    }
                }
            }
            worst = worst
                .max((weight[[o, c, center, center]].as_f64() + 1.0).abs())
                .max((sum - 1.0).abs());
        }
    }
    worst
}

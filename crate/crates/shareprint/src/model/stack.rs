//! Forward and backward passes over a slice of layers, so a full network
//! and the shared trunk + branch pieces of a multitask model run through
//! one code path.

use ndarray::{Array1, Array2, Array4, Axis};

use super::layers::{
    act_backward, act_forward, bn_backward, bn_forward_eval, bn_forward_train, conv_backward,
    conv_forward, fc_backward, fc_forward, pool_backward, pool_forward, Activation, BnTape, Layer,
    PoolTape,
};
use super::scalar::Scalar;

pub enum LayerTape<F: Scalar> {
    Conv {
        input: Array4<F>,
        bn: Option<BnTape<F>>,
        bn_frozen: bool,
        /// Post-activation, pre-pool output; stored only for tanh.
        act_out: Option<Array4<F>>,
        pool: PoolTape,
        pool_input_dim: (usize, usize, usize, usize),
    },
    Fc {
        input: Array2<F>,
        output: Array2<F>,
    },
}

pub struct Tape<F: Scalar> {
    pub layers: Vec<LayerTape<F>>,
    /// Shape entering the flatten step, for reshaping the gradient.
    flatten_dim: (usize, usize, usize, usize),
}

/// Parameter gradients for a slice of layers, in layer order.
pub struct Gradients<F: Scalar> {
    pub layers: Vec<LayerGrads<F>>,
}

pub enum LayerGrads<F: Scalar> {
    Conv {
        dw: Array4<F>,
        db: Array1<F>,
        dgamma: Option<Array1<F>>,
        dbeta: Option<Array1<F>>,
    },
    Fc {
        dw: Array2<F>,
        db: Array1<F>,
    },
}

impl<F: Scalar> Gradients<F> {
    /// Elementwise sum, for accumulating multitask branch gradients into
    /// the shared trunk.
    pub fn add_scaled(&mut self, other: &Gradients<F>, scale: F) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (
                    LayerGrads::Conv {
                        dw,
                        db,
                        dgamma,
                        dbeta,
                    },
                    LayerGrads::Conv {
                        dw: dw2,
                        db: db2,
                        dgamma: dg2,
                        dbeta: db3,
                    },
                ) => {
                    dw.zip_mut_with(dw2, |x, &y| *x = *x + scale * y);
                    db.zip_mut_with(db2, |x, &y| *x = *x + scale * y);
                    if let (Some(dg), Some(dg2)) = (dgamma.as_mut(), dg2.as_ref()) {
                        dg.zip_mut_with(dg2, |x, &y| *x = *x + scale * y);
                    }
                    if let (Some(db), Some(db2)) = (dbeta.as_mut(), db3.as_ref()) {
                        db.zip_mut_with(db2, |x, &y| *x = *x + scale * y);
                    }
                }
                (LayerGrads::Fc { dw, db }, LayerGrads::Fc { dw: dw2, db: db2 }) => {
                    dw.zip_mut_with(dw2, |x, &y| *x = *x + scale * y);
                    db.zip_mut_with(db2, |x, &y| *x = *x + scale * y);
                }
                _ => panic!("gradient structure mismatch"),
            }
        }
    }

    pub fn scale(&mut self, scale: F) {
        for g in &mut self.layers {
            match g {
                LayerGrads::Conv {
                    dw,
                    db,
                    dgamma,
                    dbeta,
                } => {
                    dw.mapv_inplace(|v| v * scale);
                    db.mapv_inplace(|v| v * scale);
                    if let Some(dg) = dgamma {
                        dg.mapv_inplace(|v| v * scale);
                    }
                    if let Some(db) = dbeta {
                        db.mapv_inplace(|v| v * scale);
                    }
                }
                LayerGrads::Fc { dw, db } => {
                    dw.mapv_inplace(|v| v * scale);
                    db.mapv_inplace(|v| v * scale);
                }
            }
        }
    }
}

fn flatten<F: Scalar>(x: Array4<F>) -> Array2<F> {
    let (b, c, h, w) = x.dim();
    x.into_shape_with_order((b, c * h * w))
        .expect("standard layout flattens")
}

/// Training-mode forward pass over `layers`. `frozen[i]` switches layer
/// i's batch norm to stored statistics and suppresses stat updates.
/// Returns the output (logits when the slice ends at fc3) and the tape.
pub fn forward_train<F: Scalar>(
    layers: &mut [Layer<F>],
    frozen: &[bool],
    x: &Array4<F>,
) -> (Array2<F>, Tape<F>) {
    let mut tapes = Vec::with_capacity(layers.len());
    let mut cur4 = x.clone();
    let mut cur2: Option<Array2<F>> = None;
    let mut flatten_dim = (0, 0, 0, 0);
    for (i, layer) in layers.iter_mut().enumerate() {
        match layer {
            Layer::Conv(conv) => {
                let input = cur4;
                let z = conv_forward(&input, &conv.weight, &conv.bias, conv.stride);
                let (z, bn_tape) = match conv.bn.as_mut() {
                    Some(bn) => {
                        let (y, tape) = bn_forward_train(bn, &z, frozen[i]);
                        (y, Some(tape))
                    }
                    None => (z, None),
                };
                let activated = act_forward(conv.act, z);
                let act_out = matches!(conv.act, Activation::Tanh).then(|| activated.clone());
                let pool_input_dim = activated.dim();
                let (pooled, pool_tape) = pool_forward(&conv.pool, &activated);
                tapes.push(LayerTape::Conv {
                    input,
                    bn: bn_tape,
                    bn_frozen: frozen[i],
                    act_out,
                    pool: pool_tape,
                    pool_input_dim,
                });
                cur4 = pooled;
            }
            Layer::Fc(fc) => {
                let input = match cur2.take() {
                    Some(v) => v,
                    None => {
                        flatten_dim = cur4.dim();
                        let flat = flatten(std::mem::replace(&mut cur4, Array4::zeros((0, 0, 0, 0))));
                        flat
                    }
                };
                let output = fc_forward(fc, &input);
                tapes.push(LayerTape::Fc {
                    input,
                    output: output.clone(),
                });
                cur2 = Some(output);
            }
        }
    }
    let out = match cur2 {
        Some(v) => v,
        None => {
            flatten_dim = cur4.dim();
            flatten(cur4)
        }
    };
    (
        out,
        Tape {
            layers: tapes,
            flatten_dim,
        },
    )
}

/// Inference forward pass: batch norm uses running statistics, nothing is
/// recorded, every sample is independent of the rest of the batch.
pub fn forward_eval<F: Scalar>(layers: &[Layer<F>], x: &Array4<F>) -> Array2<F> {
    let mut cur4 = x.clone();
    let mut cur2: Option<Array2<F>> = None;
    for layer in layers {
        match layer {
            Layer::Conv(conv) => {
                let mut z = conv_forward(&cur4, &conv.weight, &conv.bias, conv.stride);
                if let Some(bn) = conv.bn.as_ref() {
                    z = bn_forward_eval(bn, &z);
                }
                let activated = act_forward(conv.act, z);
                let (pooled, _) = pool_forward(&conv.pool, &activated);
                cur4 = pooled;
            }
            Layer::Fc(fc) => {
                let input = cur2.take().unwrap_or_else(|| flatten(cur4.clone()));
                cur2 = Some(fc_forward(fc, &input));
            }
        }
    }
    cur2.unwrap_or_else(|| flatten(cur4))
}

/// Backward over `layers` with upstream gradient `d_out` (2-D, matching
/// the slice output). Returns gradients and, when `need_input_grad`, the
/// gradient with respect to the slice input.
pub fn backward_layers<F: Scalar>(
    layers: &[Layer<F>],
    tape: &Tape<F>,
    d_out: Array2<F>,
    need_input_grad: bool,
) -> (Gradients<F>, Option<Array4<F>>) {
    let mut grads: Vec<LayerGrads<F>> = Vec::with_capacity(layers.len());
    let mut d2 = Some(d_out);
    let mut d4: Option<Array4<F>> = None;
    for (i, layer) in layers.iter().enumerate().rev() {
        let need_dx = need_input_grad || i > 0;
        match (layer, &tape.layers[i]) {
            (Layer::Fc(fc), LayerTape::Fc { input, output }) => {
                let dy = d2.take().expect("fc gradient is 2-D");
                let (dw, db, dx) = fc_backward(fc, input, output, &dy);
                grads.push(LayerGrads::Fc { dw, db });
                // is the next layer down (i-1) convolutional? then reshape
                let feeds_conv = i == 0 || matches!(layers[i - 1], Layer::Conv(_));
                if feeds_conv && tape.flatten_dim.0 > 0 {
                    d4 = Some(
                        dx.into_shape_with_order(tape.flatten_dim)
                            .expect("flatten gradient reshapes"),
                    );
                } else {
                    d2 = Some(dx);
                }
            }
            (
                Layer::Conv(conv),
                LayerTape::Conv {
                    input,
                    bn,
                    bn_frozen,
                    act_out,
                    pool,
                    pool_input_dim,
                },
            ) => {
                let dy = d4.take().expect("conv gradient is 4-D");
                let d_pool = pool_backward(&conv.pool, pool, *pool_input_dim, &dy);
                let d_act = match conv.act {
                    Activation::None => d_pool,
                    Activation::Tanh => act_backward(
                        conv.act,
                        act_out.as_ref().expect("tanh output recorded"),
                        d_pool,
                    ),
                };
                let (d_conv, dgamma, dbeta) = match (conv.bn.as_ref(), bn) {
                    (Some(bn_params), Some(bn_tape)) => {
                        let (dx, dg, dbta) = bn_backward(bn_params, bn_tape, &d_act, *bn_frozen);
                        (dx, Some(dg), Some(dbta))
                    }
                    _ => (d_act, None, None),
                };
                let (dw, db, dx) = conv_backward(input, &conv.weight, &d_conv, conv.stride, need_dx);
                grads.push(LayerGrads::Conv {
                    dw,
                    db,
                    dgamma,
                    dbeta,
                });
                d4 = dx;
            }
            _ => unreachable!("tape and layers are built together"),
        }
    }
    grads.reverse();
    (Gradients { layers: grads }, d4)
}

// ---------------------------------------------------------------------------
// loss

/// Row-wise softmax.
pub fn softmax_rows<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.iter().fold(F::zero(), |a, &v| a + v);
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy of logits against class indices.
pub fn cross_entropy_loss<F: Scalar>(logits: &Array2<F>, targets: &[usize]) -> F {
    let b = logits.dim().0;
    assert_eq!(b, targets.len());
    let mut total = F::zero();
    for (row, &t) in logits.axis_iter(Axis(0)).zip(targets) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let logsum = row
            .iter()
            .fold(F::zero(), |a, &v| a + (v - max).exp())
            .ln()
            + max;
        total = total + (logsum - row[t]);
    }
    total / F::from_usize(b).expect("fits")
}

/// d(mean CE)/d(logits) = (softmax - onehot) / batch.
pub fn cross_entropy_grad<F: Scalar>(logits: &Array2<F>, targets: &[usize]) -> Array2<F> {
    let b = logits.dim().0;
    let mut grad = softmax_rows(logits);
    let scale = F::one() / F::from_usize(b).expect("fits");
    for (i, &t) in targets.iter().enumerate() {
        grad[[i, t]] = grad[[i, t]] - F::one();
    }
    grad.mapv_inplace(|v| v * scale);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::{BatchNorm, ConvBlock, FcBlock};
    use crate::model::spec::PoolSpec;
    use rand::{Rng, SeedableRng};

    fn tiny_stack(rng: &mut rand_chacha::ChaCha12Rng, with_bn: bool) -> Vec<Layer<f64>> {
        let conv = ConvBlock {
            weight: ndarray::Array4::from_shape_fn((4, 3, 3, 3), |_| rng.random_range(-0.4..0.4)),
            bias: ndarray::Array1::from_shape_fn(4, |_| rng.random_range(-0.1..0.1)),
            stride: 1,
            bn: with_bn.then(|| BatchNorm::new(4)),
            act: Activation::Tanh,
            pool: PoolSpec::max(2, 2),
            constrained: false,
        };
        // 8x8 -> conv3 -> 6x6 -> pool2 -> 3x3 x 4ch = 36 features
        let fc = FcBlock {
            weight: ndarray::Array2::from_shape_fn((3, 36), |_| rng.random_range(-0.3..0.3)),
            bias: ndarray::Array1::from_shape_fn(3, |_| rng.random_range(-0.1..0.1)),
            act: Activation::None,
        };
        vec![Layer::Conv(conv), Layer::Fc(fc)]
    }

    /// Central-difference check of d(loss)/d(param) across every
    /// parameter of the tiny conv+fc stack.
    fn grad_check(with_bn: bool) -> f64 {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let mut layers = tiny_stack(&mut rng, with_bn);
        let x =
            ndarray::Array4::<f64>::from_shape_fn((4, 3, 8, 8), |_| rng.random_range(-1.0..1.0));
        let targets = vec![0usize, 2, 1, 1];
        let frozen = vec![false, false];

        let (logits, tape) = forward_train(&mut layers, &frozen, &x);
        let dlogits = cross_entropy_grad(&logits, &targets);
        let (grads, _) = backward_layers(&layers, &tape, dlogits, false);

        let loss_of = |layers: &mut Vec<Layer<f64>>| {
            let (logits, _) = forward_train(layers, &[false, false], &x);
            cross_entropy_loss(&logits, &targets)
        };

        let mut worst: f64 = 0.0;
        let h = 1e-5;
        let mut rng2 = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for _ in 0..100 {
            let layer_idx = rng2.random_range(0..2);
            // pick a random parameter coordinate and perturb it
            let (analytic, fd) = match layer_idx {
                0 => {
                    let Layer::Conv(conv) = &layers[0] else { unreachable!() };
                    let wlen = conv.weight.len();
                    let blen = conv.bias.len();
                    let slot = rng2.random_range(0..wlen + blen);
                    let analytic = {
                        let LayerGrads::Conv { dw, db, .. } = &grads.layers[0] else {
                            unreachable!()
                        };
                        if slot < wlen {
                            dw.as_slice().unwrap()[slot]
                        } else {
                            db[slot - wlen]
                        }
                    };
                    let read = |layers: &Vec<Layer<f64>>| {
                        let Layer::Conv(c) = &layers[0] else { unreachable!() };
                        if slot < wlen {
                            c.weight.as_slice().unwrap()[slot]
                        } else {
                            c.bias[slot - wlen]
                        }
                    };
                    let write = |layers: &mut Vec<Layer<f64>>, v: f64| {
                        let Layer::Conv(c) = &mut layers[0] else { unreachable!() };
                        if slot < wlen {
                            c.weight.as_slice_mut().unwrap()[slot] = v;
                        } else {
                            c.bias[slot - wlen] = v;
                        }
                    };
                    let base = read(&layers);
                    write(&mut layers, base + h);
                    let lp = loss_of(&mut layers);
                    write(&mut layers, base - h);
                    let lm = loss_of(&mut layers);
                    write(&mut layers, base);
                    (analytic, (lp - lm) / (2.0 * h))
                }
                _ => {
                    let Layer::Fc(fc) = &layers[1] else { unreachable!() };
                    let wlen = fc.weight.len();
                    let blen = fc.bias.len();
                    let slot = rng2.random_range(0..wlen + blen);
                    let analytic = {
                        let LayerGrads::Fc { dw, db } = &grads.layers[1] else {
                            unreachable!()
                        };
                        if slot < wlen {
                            dw.as_slice().unwrap()[slot]
                        } else {
                            db[slot - wlen]
                        }
                    };
                    let read = |layers: &Vec<Layer<f64>>| {
                        let Layer::Fc(f) = &layers[1] else { unreachable!() };
                        if slot < wlen {
                            f.weight.as_slice().unwrap()[slot]
                        } else {
                            f.bias[slot - wlen]
                        }
                    };
                    let write = |layers: &mut Vec<Layer<f64>>, v: f64| {
                        let Layer::Fc(f) = &mut layers[1] else { unreachable!() };
                        if slot < wlen {
                            f.weight.as_slice_mut().unwrap()[slot] = v;
                        } else {
                            f.bias[slot - wlen] = v;
                        }
                    };
                    let base = read(&layers);
                    write(&mut layers, base + h);
                    let lp = loss_of(&mut layers);
                    write(&mut layers, base - h);
                    let lm = loss_of(&mut layers);
                    write(&mut layers, base);
                    (analytic, (lp - lm) / (2.0 * h))
                }
            };
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            worst = worst.max((analytic - fd).abs() / denom);
        }
        worst
    }

    #[test]
    fn tiny_model_gradients_match_finite_differences() {
        let worst = grad_check(false);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn tiny_model_with_bn_gradients_match_finite_differences() {
        let worst = grad_check(true);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = ndarray::arr2(&[[1.0f64, 2.0, 3.0], [-5.0, 0.0, 5.0]]);
        let probs = softmax_rows(&logits);
        for row in probs.axis_iter(Axis(0)) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_of_confident_correct_prediction_is_small() {
        let logits = ndarray::arr2(&[[10.0f64, -10.0, -10.0]]);
        let loss = cross_entropy_loss(&logits, &[0]);
        assert!(loss < 1e-6);
        let wrong = cross_entropy_loss(&logits, &[1]);
        assert!(wrong > 10.0);
    }
}

//! Layer primitives with explicit forward and backward passes.
//!
//! Convolutions run as im2col + GEMM per sample, parallelized over the
//! batch. Parameter-gradient reductions always sum in batch order so a
//! fixed seed reproduces training bit-for-bit regardless of thread count.

use ndarray::parallel::prelude::*;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Axis};

use super::scalar::Scalar;
use super::spec::{PoolKind, PoolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Tanh,
}

#[derive(Debug, Clone)]
pub struct BatchNorm<F: Scalar> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: F::of_f64(0.1),
            eps: F::of_f64(1e-5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock<F: Scalar> {
    /// [out_channels, in_channels, k, k]
    pub weight: Array4<F>,
    pub bias: Array1<F>,
    pub stride: usize,
    pub bn: Option<BatchNorm<F>>,
    pub act: Activation,
    pub pool: PoolSpec,
    /// Projected to the prediction-error-filter form after every update.
    pub constrained: bool,
}

#[derive(Debug, Clone)]
pub struct FcBlock<F: Scalar> {
    /// [out_features, in_features]
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub enum Layer<F: Scalar> {
    Conv(ConvBlock<F>),
    Fc(FcBlock<F>),
}

// ---------------------------------------------------------------------------
// convolution

pub fn conv_output_hw(h: usize, w: usize, k: usize, stride: usize) -> (usize, usize) {
    ((h - k) / stride + 1, (w - k) / stride + 1)
}

fn im2col<F: Scalar>(x: &ArrayView3<'_, F>, k: usize, stride: usize) -> Array2<F> {
    let (c, h, w) = x.dim();
    let (oh, ow) = conv_output_hw(h, w, k, stride);
    let mut cols = Array2::<F>::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let mut dst = cols.row_mut(row);
                for oy in 0..oh {
                    let iy = oy * stride + ky;
                    for ox in 0..ow {
                        dst[oy * ow + ox] = x[[ci, iy, ox * stride + kx]];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<F: Scalar>(cols: &Array2<F>, dx: &mut ndarray::ArrayViewMut3<'_, F>, k: usize, stride: usize) {
    let (c, h, w) = dx.dim();
    let (oh, ow) = conv_output_hw(h, w, k, stride);
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = cols.row(row);
                for oy in 0..oh {
                    let iy = oy * stride + ky;
                    for ox in 0..ow {
                        dx[[ci, iy, ox * stride + kx]] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Batched valid convolution: x [B,C,H,W] * w [O,C,k,k] -> [B,O,OH,OW].
pub fn conv_forward<F: Scalar>(
    x: &Array4<F>,
    weight: &Array4<F>,
    bias: &Array1<F>,
    stride: usize,
) -> Array4<F> {
    let (b, _c, h, w) = x.dim();
    let (o, _ci, k, _) = weight.dim();
    let (oh, ow) = conv_output_hw(h, w, k, stride);
    let w2d = weight
        .to_shape((o, weight.len() / o))
        .expect("weight is contiguous");
    let mut out = Array4::<F>::zeros((b, o, oh, ow));
    x.axis_iter(Axis(0))
        .into_par_iter()
        .zip(out.axis_iter_mut(Axis(0)).into_par_iter())
        .for_each(|(xi, mut oi)| {
            let cols = im2col(&xi, k, stride);
            let y = w2d.dot(&cols); // [O, OH*OW]
            for (ch, mut plane) in oi.axis_iter_mut(Axis(0)).enumerate() {
                let y_row = y.row(ch);
                let bias_ch = bias[ch];
                for (dst, &src) in plane.iter_mut().zip(y_row.iter()) {
                    *dst = src + bias_ch;
                }
            }
        });
    out
}

/// Gradients of a batched valid convolution. Returns (dw, db, dx);
/// `dx` is computed only when `need_dx` is set.
pub fn conv_backward<F: Scalar>(
    x: &Array4<F>,
    weight: &Array4<F>,
    dy: &Array4<F>,
    stride: usize,
    need_dx: bool,
) -> (Array4<F>, Array1<F>, Option<Array4<F>>) {
    let (b, c, h, w) = x.dim();
    let (o, _ci, k, _) = weight.dim();
    let klen = c * k * k;
    let w2d = weight.to_shape((o, klen)).expect("weight is contiguous");

    // per-sample contributions computed in parallel, reduced in order
    let per_sample: Vec<(Array2<F>, Array1<F>, Option<Array3<F>>)> = x
        .axis_iter(Axis(0))
        .into_par_iter()
        .zip(dy.axis_iter(Axis(0)).into_par_iter())
        .map(|(xi, dyi)| {
            let (oh, ow) = conv_output_hw(h, w, k, stride);
            let dy2d = dyi
                .to_shape((o, oh * ow))
                .expect("dy view reshapes")
                .into_owned();
            let cols = im2col(&xi, k, stride);
            let dw_i = dy2d.dot(&cols.t()); // [O, klen]
            let db_i = dy2d.sum_axis(Axis(1));
            let dx_i = if need_dx {
                let dcols = w2d.t().dot(&dy2d); // [klen, OH*OW]
                let mut dx = Array3::<F>::zeros((c, h, w));
                col2im_add(&dcols, &mut dx.view_mut(), k, stride);
                Some(dx)
            } else {
                None
            };
            (dw_i, db_i, dx_i)
        })
        .collect();

    let mut dw2d = Array2::<F>::zeros((o, klen));
    let mut db = Array1::<F>::zeros(o);
    let mut dx = need_dx.then(|| Array4::<F>::zeros((b, c, h, w)));
    for (i, (dw_i, db_i, dx_i)) in per_sample.into_iter().enumerate() {
        dw2d += &dw_i;
        db += &db_i;
        if let (Some(dx), Some(dx_i)) = (dx.as_mut(), dx_i) {
            dx.slice_mut(s![i, .., .., ..]).assign(&dx_i);
        }
    }
    let dw = dw2d
        .into_shape_with_order((o, c, k, k))
        .expect("gradient reshapes");
    (dw, db, dx)
}

// ---------------------------------------------------------------------------
// batch norm

pub struct BnTape<F: Scalar> {
    pub xhat: Array4<F>,
    pub invstd: Array1<F>,
}

/// Training-mode batch norm. Updates running statistics unless the layer
/// is frozen (frozen layers normalize with their stored statistics so
/// their state stays bit-identical).
pub fn bn_forward_train<F: Scalar>(
    bn: &mut BatchNorm<F>,
    x: &Array4<F>,
    frozen: bool,
) -> (Array4<F>, BnTape<F>) {
    if frozen {
        let (y, xhat, invstd) = bn_eval_with_tape(bn, x);
        return (y, BnTape { xhat, invstd });
    }
    let (b, c, h, w) = x.dim();
    let n = F::from_usize(b * h * w).expect("fits");
    let mut mean = Array1::<F>::zeros(c);
    let mut var = Array1::<F>::zeros(c);
    for ch in 0..c {
        let plane = x.slice(s![.., ch, .., ..]);
        let sum = plane.iter().fold(F::zero(), |a, &v| a + v);
        let mu = sum / n;
        let ss = plane.iter().fold(F::zero(), |a, &v| {
            let d = v - mu;
            a + d * d
        });
        mean[ch] = mu;
        var[ch] = ss / n;
    }
    let one = F::one();
    for ch in 0..c {
        bn.running_mean[ch] = (one - bn.momentum) * bn.running_mean[ch] + bn.momentum * mean[ch];
        bn.running_var[ch] = (one - bn.momentum) * bn.running_var[ch] + bn.momentum * var[ch];
    }
    let invstd = var.mapv(|v| one / (v + bn.eps).sqrt());
    let mut xhat = x.clone();
    let mut y = Array4::<F>::zeros(x.raw_dim());
    for ch in 0..c {
        let (mu, istd, g, be) = (mean[ch], invstd[ch], bn.gamma[ch], bn.beta[ch]);
        let mut xh = xhat.slice_mut(s![.., ch, .., ..]);
        let mut yv = y.slice_mut(s![.., ch, .., ..]);
        ndarray::Zip::from(&mut xh).and(&mut yv).for_each(|xh, yv| {
            *xh = (*xh - mu) * istd;
            *yv = g * *xh + be;
        });
    }
    (y, BnTape { xhat, invstd })
}

fn bn_eval_with_tape<F: Scalar>(
    bn: &BatchNorm<F>,
    x: &Array4<F>,
) -> (Array4<F>, Array4<F>, Array1<F>) {
    let c = x.dim().1;
    let one = F::one();
    let invstd = bn.running_var.mapv(|v| one / (v + bn.eps).sqrt());
    let mut xhat = x.clone();
    let mut y = Array4::<F>::zeros(x.raw_dim());
    for ch in 0..c {
        let (mu, istd, g, be) = (bn.running_mean[ch], invstd[ch], bn.gamma[ch], bn.beta[ch]);
        let mut xh = xhat.slice_mut(s![.., ch, .., ..]);
        let mut yv = y.slice_mut(s![.., ch, .., ..]);
        ndarray::Zip::from(&mut xh).and(&mut yv).for_each(|xh, yv| {
            *xh = (*xh - mu) * istd;
            *yv = g * *xh + be;
        });
    }
    (y, xhat, invstd)
}

pub fn bn_forward_eval<F: Scalar>(bn: &BatchNorm<F>, x: &Array4<F>) -> Array4<F> {
    bn_eval_with_tape(bn, x).0
}

/// Backward through training-mode batch norm. `frozen_stats` marks that
/// the forward pass used stored statistics (no batch coupling).
pub fn bn_backward<F: Scalar>(
    bn: &BatchNorm<F>,
    tape: &BnTape<F>,
    dy: &Array4<F>,
    frozen_stats: bool,
) -> (Array4<F>, Array1<F>, Array1<F>) {
    let (b, c, h, w) = dy.dim();
    let n = F::from_usize(b * h * w).expect("fits");
    let mut dgamma = Array1::<F>::zeros(c);
    let mut dbeta = Array1::<F>::zeros(c);
    let mut dx = Array4::<F>::zeros(dy.raw_dim());
    for ch in 0..c {
        let xh = tape.xhat.slice(s![.., ch, .., ..]);
        let dyv = dy.slice(s![.., ch, .., ..]);
        let sum_dy = dyv.iter().fold(F::zero(), |a, &v| a + v);
        let sum_dy_xhat = dyv
            .iter()
            .zip(xh.iter())
            .fold(F::zero(), |a, (&d, &x)| a + d * x);
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let g_istd = bn.gamma[ch] * tape.invstd[ch];
        let mut dxv = dx.slice_mut(s![.., ch, .., ..]);
        if frozen_stats {
            ndarray::Zip::from(&mut dxv).and(&dyv).for_each(|dx, &dy| {
                *dx = g_istd * dy;
            });
        } else {
            let mean_dy = sum_dy / n;
            let mean_dy_xhat = sum_dy_xhat / n;
            ndarray::Zip::from(&mut dxv)
                .and(&dyv)
                .and(&xh)
                .for_each(|dx, &dy, &xh| {
                    *dx = g_istd * (dy - mean_dy - xh * mean_dy_xhat);
                });
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// activation

pub fn act_forward<F: Scalar>(act: Activation, x: Array4<F>) -> Array4<F> {
    match act {
        Activation::None => x,
        Activation::Tanh => {
            let mut y = x;
            y.axis_iter_mut(Axis(0))
                .into_par_iter()
                .for_each(|mut s| s.mapv_inplace(|v| v.tanh()));
            y
        }
    }
}

/// dx = dy * (1 - y^2) for tanh; identity otherwise.
pub fn act_backward<F: Scalar>(act: Activation, y: &Array4<F>, dy: Array4<F>) -> Array4<F> {
    match act {
        Activation::None => dy,
        Activation::Tanh => {
            let mut dx = dy;
            let one = F::one();
            ndarray::Zip::from(&mut dx).and(y).for_each(|d, &y| {
                *d = *d * (one - y * y);
            });
            dx
        }
    }
}

// ---------------------------------------------------------------------------
// pooling

pub struct PoolTape {
    /// Flat spatial argmax per output element (max pooling only).
    pub argmax: Option<Array4<u32>>,
}

pub fn pool_forward<F: Scalar>(pool: &PoolSpec, x: &Array4<F>) -> (Array4<F>, PoolTape) {
    match pool.kind {
        PoolKind::None => (x.clone(), PoolTape { argmax: None }),
        PoolKind::Max => {
            let (b, c, h, w) = x.dim();
            let (oh, ow) = conv_output_hw(h, w, pool.size, pool.stride);
            let mut y = Array4::<F>::zeros((b, c, oh, ow));
            let mut argmax = Array4::<u32>::zeros((b, c, oh, ow));
            y.axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(argmax.axis_iter_mut(Axis(0)).into_par_iter())
                .zip(x.axis_iter(Axis(0)).into_par_iter())
                .for_each(|((mut yi, mut ai), xi)| {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = F::neg_infinity();
                                let mut best_idx = 0u32;
                                for py in 0..pool.size {
                                    let iy = oy * pool.stride + py;
                                    for px in 0..pool.size {
                                        let ix = ox * pool.stride + px;
                                        let v = xi[[ch, iy, ix]];
                                        if v > best {
                                            best = v;
                                            best_idx = (iy * w + ix) as u32;
                                        }
                                    }
                                }
                                yi[[ch, oy, ox]] = best;
                                ai[[ch, oy, ox]] = best_idx;
                            }
                        }
                    }
                });
            (y, PoolTape { argmax: Some(argmax) })
        }
        PoolKind::Avg => {
            let (b, c, h, w) = x.dim();
            let (oh, ow) = conv_output_hw(h, w, pool.size, pool.stride);
            let area = F::from_usize(pool.size * pool.size).expect("fits");
            let mut y = Array4::<F>::zeros((b, c, oh, ow));
            y.axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(x.axis_iter(Axis(0)).into_par_iter())
                .for_each(|(mut yi, xi)| {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = F::zero();
                                for py in 0..pool.size {
                                    for px in 0..pool.size {
                                        acc = acc
                                            + xi[[ch, oy * pool.stride + py, ox * pool.stride + px]];
                                    }
                                }
                                yi[[ch, oy, ox]] = acc / area;
                            }
                        }
                    }
                });
            (y, PoolTape { argmax: None })
        }
    }
}

pub fn pool_backward<F: Scalar>(
    pool: &PoolSpec,
    tape: &PoolTape,
    input_dim: (usize, usize, usize, usize),
    dy: &Array4<F>,
) -> Array4<F> {
    match pool.kind {
        PoolKind::None => dy.clone(),
        PoolKind::Max => {
            let argmax = tape.argmax.as_ref().expect("max pool stores argmax");
            let (_b, c, _h, w) = input_dim;
            let (bo, _co, oh, ow) = dy.dim();
            let mut dx = Array4::<F>::zeros(input_dim);
            for bi in 0..bo {
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let flat = argmax[[bi, ch, oy, ox]] as usize;
                            dx[[bi, ch, flat / w, flat % w]] =
                                dx[[bi, ch, flat / w, flat % w]] + dy[[bi, ch, oy, ox]];
                        }
                    }
                }
            }
            dx
        }
        PoolKind::Avg => {
            let (_b, c, _h, _w) = input_dim;
            let (bo, _co, oh, ow) = dy.dim();
            let area = F::from_usize(pool.size * pool.size).expect("fits");
            let mut dx = Array4::<F>::zeros(input_dim);
            for bi in 0..bo {
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let share = dy[[bi, ch, oy, ox]] / area;
                            for py in 0..pool.size {
                                for px in 0..pool.size {
                                    let iy = oy * pool.stride + py;
                                    let ix = ox * pool.stride + px;
                                    dx[[bi, ch, iy, ix]] = dx[[bi, ch, iy, ix]] + share;
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
    }
}

// ---------------------------------------------------------------------------
// fully connected

pub fn fc_forward<F: Scalar>(fc: &FcBlock<F>, x: &Array2<F>) -> Array2<F> {
    let mut y = x.dot(&fc.weight.t());
    for mut row in y.axis_iter_mut(Axis(0)) {
        row += &fc.bias;
    }
    match fc.act {
        Activation::None => y,
        Activation::Tanh => {
            y.mapv_inplace(|v| v.tanh());
            y
        }
    }
}

/// Backward through an fc block given its input and activated output.
pub fn fc_backward<F: Scalar>(
    fc: &FcBlock<F>,
    x: &Array2<F>,
    y: &Array2<F>,
    dy: &Array2<F>,
) -> (Array2<F>, Array1<F>, Array2<F>) {
    let dz = match fc.act {
        Activation::None => dy.clone(),
        Activation::Tanh => {
            let one = F::one();
            let mut dz = dy.clone();
            ndarray::Zip::from(&mut dz).and(y).for_each(|d, &y| {
                *d = *d * (one - y * y);
            });
            dz
        }
    };
    let dw = dz.t().dot(x);
    let db = dz.sum_axis(Axis(0));
    let dx = dz.dot(&fc.weight);
    (dw, db, dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn conv_forward_known_values() {
        // 1x1x3x3 input, single 2x2 kernel of ones, stride 1
        let mut x = Array4::<f64>::zeros((1, 1, 3, 3));
        for y in 0..3 {
            for xx in 0..3 {
                x[[0, 0, y, xx]] = (y * 3 + xx) as f64;
            }
        }
        let w = Array4::<f64>::ones((1, 1, 2, 2));
        let b = arr1(&[0.5]);
        let y = conv_forward(&x, &w, &b, 1);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        // windows: (0+1+3+4), (1+2+4+5), (3+4+6+7), (4+5+7+8) plus bias
        assert_eq!(y[[0, 0, 0, 0]], 8.5);
        assert_eq!(y[[0, 0, 0, 1]], 12.5);
        assert_eq!(y[[0, 0, 1, 0]], 20.5);
        assert_eq!(y[[0, 0, 1, 1]], 24.5);
    }

    #[test]
    fn conv_grad_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let x = Array4::<f64>::from_shape_fn((2, 2, 6, 6), |_| rng.random_range(-1.0..1.0));
        let mut w = Array4::<f64>::from_shape_fn((3, 2, 3, 3), |_| rng.random_range(-0.5..0.5));
        let b = Array1::<f64>::from_shape_fn(3, |_| rng.random_range(-0.1..0.1));
        // scalar objective: sum of squares of conv output
        let loss = |w: &Array4<f64>, x: &Array4<f64>| -> f64 {
            conv_forward(x, w, &b, 2).iter().map(|v| v * v).sum::<f64>()
        };
        let y = conv_forward(&x, &w, &b, 2);
        let dy = y.mapv(|v| 2.0 * v);
        let (dw, _db, dx) = conv_backward(&x, &w, &dy, 2, true);
        let dx = dx.unwrap();
        let h = 1e-6;
        for probe in [(0usize, 0usize, 0usize, 0usize), (2, 1, 2, 1), (1, 0, 1, 2)] {
            let base = w[probe];
            w[probe] = base + h;
            let lp = loss(&w, &x);
            w[probe] = base - h;
            let lm = loss(&w, &x);
            w[probe] = base;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - dw[probe]).abs() < 1e-5, "dw {probe:?}: fd={fd} an={}", dw[probe]);
        }
        let mut x2 = x.clone();
        for probe in [(0usize, 0usize, 2usize, 3usize), (1, 1, 4, 4)] {
            let base = x2[probe];
            x2[probe] = base + h;
            let lp = loss(&w, &x2);
            x2[probe] = base - h;
            let lm = loss(&w, &x2);
            x2[probe] = base;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - dx[probe]).abs() < 1e-5, "dx {probe:?}: fd={fd} an={}", dx[probe]);
        }
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut x = Array4::<f64>::zeros((1, 1, 4, 4));
        x[[0, 0, 1, 1]] = 5.0;
        x[[0, 0, 3, 2]] = 7.0;
        let pool = PoolSpec::max(2, 2);
        let (y, tape) = pool_forward(&pool, &x);
        assert_eq!(y[[0, 0, 0, 0]], 5.0);
        assert_eq!(y[[0, 0, 1, 1]], 7.0);
        let dy = Array4::<f64>::ones((1, 1, 2, 2));
        let dx = pool_backward(&pool, &tape, (1, 1, 4, 4), &dy);
        assert_eq!(dx[[0, 0, 1, 1]], 1.0);
        assert_eq!(dx[[0, 0, 3, 2]], 1.0);
        assert_eq!(dx.sum(), 4.0);
    }

    #[test]
    fn avg_pool_spreads_gradient_uniformly() {
        let x = Array4::<f64>::from_elem((1, 1, 4, 4), 2.0);
        let pool = PoolSpec::avg(2, 2);
        let (y, tape) = pool_forward(&pool, &x);
        assert!(y.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let dy = Array4::<f64>::ones((1, 1, 2, 2));
        let dx = pool_backward(&pool, &tape, (1, 1, 4, 4), &dy);
        assert!(dx.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn bn_train_normalizes_batch() {
        let mut bn = BatchNorm::<f64>::new(2);
        let x = Array4::<f64>::from_shape_fn((4, 2, 3, 3), |(b, c, y, xx)| {
            (b * 9 + y * 3 + xx) as f64 * (c as f64 + 1.0)
        });
        let (y, _tape) = bn_forward_train(&mut bn, &x, false);
        for ch in 0..2 {
            let plane = y.slice(s![.., ch, .., ..]);
            let n = plane.len() as f64;
            let mean: f64 = plane.iter().sum::<f64>() / n;
            let var: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
        // running stats moved off their init values
        assert!(bn.running_mean.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn bn_frozen_keeps_state_and_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean[0] = 3.0;
        bn.running_var[0] = 4.0;
        let snapshot = (bn.running_mean.clone(), bn.running_var.clone());
        let x = Array4::<f64>::from_elem((2, 1, 2, 2), 5.0);
        let (y, _tape) = bn_forward_train(&mut bn, &x, true);
        // (5 - 3) / sqrt(4 + eps) ~ 1
        assert!((y[[0, 0, 0, 0]] - 1.0).abs() < 1e-4);
        assert_eq!(bn.running_mean, snapshot.0);
        assert_eq!(bn.running_var, snapshot.1);
    }
}

//! Pointwise quantization, double quantization, and the periodic
//! histogram signature that re-quantization leaves behind.

use serde::{Deserialize, Serialize};

use super::SimError;

/// First and second quantization steps of a requantization chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub s1: u32,
    pub s2: u32,
}

impl QuantizerSpec {
    pub fn new(s1: u32, s2: u32) -> Result<Self, SimError> {
        if s1 == 0 || s2 == 0 {
            return Err(SimError::ZeroStep);
        }
        Ok(Self { s1, s2 })
    }

    /// Single re-quantization of a pristine source (first step is unity).
    pub fn requantize(s2: u32) -> Result<Self, SimError> {
        Self::new(1, s2)
    }
}

/// Quantize `k` with step `s1`: floor(k / s1).
pub fn quantize(k: i64, s1: u32) -> Result<i64, SimError> {
    if s1 == 0 {
        return Err(SimError::ZeroStep);
    }
    Ok(k.div_euclid(s1 as i64))
}

/// Double quantization with steps `s1` then `s2`:
/// floor(floor(k / s1) * s1 / s2).
///
/// Equivalent to quantize with s1, de-quantize (multiply back by s1),
/// quantize with s2.
pub fn double_quantize(k: i64, spec: QuantizerSpec) -> Result<i64, SimError> {
    if spec.s1 == 0 || spec.s2 == 0 {
        return Err(SimError::ZeroStep);
    }
    let dequantized = k.div_euclid(spec.s1 as i64) * spec.s1 as i64;
    Ok(dequantized.div_euclid(spec.s2 as i64))
}

/// Histogram of double-quantized outputs, indexed by output bin value
/// starting at the minimum reachable output.
#[derive(Debug, Clone, PartialEq)]
pub struct DqHistogram {
    /// Output value of bin 0.
    pub min_bin: i64,
    /// Count per consecutive output value.
    pub counts: Vec<u64>,
}

impl DqHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Build a histogram directly from already-binned values.
    pub fn from_values(values: impl IntoIterator<Item = i64>) -> Result<Self, SimError> {
        let values: Vec<i64> = values.into_iter().collect();
        if values.is_empty() {
            return Err(SimError::EmptyInput("histogram values"));
        }
        let min = *values.iter().min().expect("non-empty");
        let max = *values.iter().max().expect("non-empty");
        let mut counts = vec![0u64; (max - min) as usize + 1];
        for v in values {
            counts[(v - min) as usize] += 1;
        }
        Ok(DqHistogram {
            min_bin: min,
            counts,
        })
    }
}

/// Double-quantize every value and histogram the outputs.
pub fn dq_histogram(values: &[i64], spec: QuantizerSpec) -> Result<DqHistogram, SimError> {
    if values.is_empty() {
        return Err(SimError::EmptyInput("dq_histogram values"));
    }
    let outputs = values
        .iter()
        .map(|&k| double_quantize(k, spec))
        .collect::<Result<Vec<_>, _>>()?;
    DqHistogram::from_values(outputs)
}

/// Score in [0, 1] for periodic gap/peak structure in a histogram.
///
/// The statistic is the peak of the normalized autocorrelation of the
/// mean-removed bin counts over lags >= 1, clamped to [0, 1]. Uniformly
/// populated histograms (single quantization of uniform data) score near
/// zero; the comb left by a second, coarser-to-finer quantization scores
/// high. A single-bin histogram is degenerate and scores 0.
pub fn detect_dq_periodicity(hist: &DqHistogram) -> f64 {
    let nonzero = hist.counts.iter().filter(|&&c| c > 0).count();
    if hist.counts.len() < 4 || nonzero <= 1 {
        log::warn!(
            "degenerate histogram ({} bins, {} populated): periodicity score 0",
            hist.counts.len(),
            nonzero
        );
        return 0.0;
    }
    let n = hist.counts.len();
    let x: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = centered.iter().map(|v| v * v).sum();
    if r0 <= f64::EPSILON {
        // perfectly flat
        return 0.0;
    }
    let max_lag = (n / 2).max(2);
    let mut best = 0.0f64;
    for lag in 1..=max_lag.min(n - 1) {
        let r: f64 = (0..n - lag).map(|i| centered[i] * centered[i + lag]).sum();
        // normalize by the overlapping energy so short lags are not favored
        let norm = r0 * (n - lag) as f64 / n as f64;
        if norm > 0.0 {
            best = best.max(r / norm);
        }
    }
    best.clamp(0.0, 1.0)
}

/// Default decision threshold for [`detect_dq_periodicity`], picked by
/// [`DqCalibration::run`] over the (s1 > s2) grid on uniform 8-bit input.
pub const DEFAULT_DQ_SCORE_THRESHOLD: f64 = 0.5;

/// Calibration sweep comparing double-quantization scores against matched
/// single-quantization scores over a step grid.
#[derive(Debug, Clone)]
pub struct DqCalibration {
    pub min_dq_score: f64,
    pub max_single_score: f64,
    pub threshold: f64,
}

impl DqCalibration {
    /// Sweep s1 in [2, max_step], s2 in [1, s1) on uniform values 0..=255.
    /// The suggested threshold is the midpoint of the separation band.
    pub fn run(max_step: u32) -> Result<Self, SimError> {
        let values: Vec<i64> = (0..=255).collect();
        let mut min_dq = f64::INFINITY;
        let mut max_single = f64::NEG_INFINITY;
        for s1 in 2..=max_step {
            for s2 in 1..s1 {
                let dq = dq_histogram(&values, QuantizerSpec::new(s1, s2)?)?;
                min_dq = min_dq.min(detect_dq_periodicity(&dq));
                let single = dq_histogram(&values, QuantizerSpec::new(1, s2)?)?;
                max_single = max_single.max(detect_dq_periodicity(&single));
            }
        }
        Ok(DqCalibration {
            min_dq_score: min_dq,
            max_single_score: max_single,
            threshold: (min_dq + max_single) / 2.0,
        })
    }
}

/// 8x8 type-II DCT basis, orthonormal.
fn dct8_basis() -> [[f64; 8]; 8] {
    let mut basis = [[0.0f64; 8]; 8];
    for (u, row) in basis.iter_mut().enumerate() {
        let scale = if u == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        };
        for (x, b) in row.iter_mut().enumerate() {
            *b = scale * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    basis
}

/// Double-quantize a single-channel plane through 8x8 block DCT
/// coefficients, mirroring what block-transform recompression does.
///
/// Each 8x8 block is transformed, its coefficients pass through
/// floor-based double quantization scaled back by s2, and the block is
/// inverse transformed. Edge blocks narrower than 8 pixels are copied
/// through untouched.
pub fn block_dct_double_quantize(
    plane: &mut ndarray::Array2<f32>,
    spec: QuantizerSpec,
) -> Result<(), SimError> {
    if spec.s1 == 0 || spec.s2 == 0 {
        return Err(SimError::ZeroStep);
    }
    let basis = dct8_basis();
    let (h, w) = plane.dim();
    let s1 = spec.s1 as f64;
    let s2 = spec.s2 as f64;
    let mut block = [[0.0f64; 8]; 8];
    let mut tmp = [[0.0f64; 8]; 8];
    let mut coeff = [[0.0f64; 8]; 8];
    for by in (0..h.saturating_sub(7)).step_by(8) {
        for bx in (0..w.saturating_sub(7)).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y][x] = plane[[by + y, bx + x]] as f64;
                }
            }
            // C = B * block * B^T, applied separably
            for y in 0..8 {
                for v in 0..8 {
                    tmp[y][v] = (0..8).map(|x| basis[v][x] * block[y][x]).sum();
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let c: f64 = (0..8).map(|y| basis[u][y] * tmp[y][v]).sum();
                    let q1 = (c / s1).floor() * s1;
                    coeff[u][v] = (q1 / s2).floor() * s2;
                }
            }
            // block = B^T * C * B
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|v| basis[v][x] * coeff[u][v]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    let val: f64 = (0..8).map(|u| basis[u][y] * tmp[u][x]).sum();
                    plane[[by + y, bx + x]] = val as f32;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: quantize, de-quantize, quantize as three
    /// explicit steps.
    fn three_step_oracle(k: i64, s1: u32, s2: u32) -> i64 {
        let q = k.div_euclid(s1 as i64);
        let deq = q * s1 as i64;
        deq.div_euclid(s2 as i64)
    }

    #[test]
    fn quantize_hand_values() {
        assert_eq!(quantize(10, 3).unwrap(), 3);
        assert_eq!(quantize(7, 1).unwrap(), 7);
        assert_eq!(quantize(0, 9).unwrap(), 0);
    }

    #[test]
    fn quantize_zero_step_is_error() {
        assert!(matches!(quantize(3, 0), Err(SimError::ZeroStep)));
        assert!(matches!(
            double_quantize(3, QuantizerSpec { s1: 0, s2: 1 }),
            Err(SimError::ZeroStep)
        ));
        assert!(QuantizerSpec::new(1, 0).is_err());
    }

    #[test]
    fn double_quantize_hand_value() {
        // floor(floor(10/3)*3/2) = floor(4.5) = 4
        let spec = QuantizerSpec::new(3, 2).unwrap();
        assert_eq!(double_quantize(10, spec).unwrap(), 4);
    }

    #[test]
    fn double_quantize_matches_three_step_oracle_exhaustively() {
        for s1 in 1..=16u32 {
            for s2 in 1..=16u32 {
                let spec = QuantizerSpec::new(s1, s2).unwrap();
                for k in 0..=255i64 {
                    assert_eq!(
                        double_quantize(k, spec).unwrap(),
                        three_step_oracle(k, s1, s2),
                        "k={k} s1={s1} s2={s2}"
                    );
                }
            }
        }
    }

    #[test]
    fn double_quantize_collapse_identity() {
        for s in 1..=16u32 {
            let spec = QuantizerSpec::new(s, s).unwrap();
            for k in 0..=255i64 {
                assert_eq!(double_quantize(k, spec).unwrap(), quantize(k, s).unwrap());
            }
        }
    }

    proptest! {
        #[test]
        fn double_quantize_monotone(mut k1 in -4096i64..4096, mut k2 in -4096i64..4096,
                                    s1 in 1u32..=24, s2 in 1u32..=24) {
            if k1 > k2 {
                std::mem::swap(&mut k1, &mut k2);
            }
            let spec = QuantizerSpec::new(s1, s2).unwrap();
            prop_assert!(double_quantize(k1, spec).unwrap() <= double_quantize(k2, spec).unwrap());
        }

        #[test]
        fn double_quantize_matches_oracle_random(k in -100_000i64..100_000,
                                                 s1 in 1u32..=64, s2 in 1u32..=64) {
            let spec = QuantizerSpec::new(s1, s2).unwrap();
            prop_assert_eq!(double_quantize(k, spec).unwrap(), three_step_oracle(k, s1, s2));
        }
    }

    #[test]
    fn histogram_counts_sum_to_input_len() {
        let values: Vec<i64> = (0..=255).collect();
        let hist = dq_histogram(&values, QuantizerSpec::new(3, 2).unwrap()).unwrap();
        assert_eq!(hist.total(), 256);
    }

    #[test]
    fn histogram_empty_input_is_error() {
        assert!(dq_histogram(&[], QuantizerSpec::new(3, 2).unwrap()).is_err());
    }

    #[test]
    fn histogram_constant_input_single_bin() {
        let hist = dq_histogram(&[42; 100], QuantizerSpec::new(3, 2).unwrap()).unwrap();
        assert_eq!(hist.counts.len(), 1);
        assert_eq!(hist.counts[0], 100);
    }

    #[test]
    fn dq_histogram_has_periodic_empty_bins() {
        // Reachable outputs of Q_{3,2} over 0..=255: floor(3q/2) skips
        // every value congruent to 2 mod 3.
        let values: Vec<i64> = (0..=255).collect();
        let hist = dq_histogram(&values, QuantizerSpec::new(3, 2).unwrap()).unwrap();
        let empties: Vec<usize> = hist
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect();
        assert!(!empties.is_empty(), "expected gaps in the DQ histogram");
        let gaps: Vec<usize> = empties.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(
            gaps.iter().all(|&g| g == gaps[0]),
            "gap spacing should be periodic: {gaps:?}"
        );
    }

    #[test]
    fn periodicity_score_separates_dq_from_single() {
        let values: Vec<i64> = (0..=255).collect();
        let dq = dq_histogram(&values, QuantizerSpec::new(3, 2).unwrap()).unwrap();
        let single = dq_histogram(&values, QuantizerSpec::new(1, 1).unwrap()).unwrap();
        assert!(detect_dq_periodicity(&dq) > detect_dq_periodicity(&single));
    }

    #[test]
    fn periodicity_score_flat_histogram_near_zero() {
        let hist = DqHistogram {
            min_bin: 0,
            counts: vec![7; 64],
        };
        assert!(detect_dq_periodicity(&hist) < 0.05);
    }

    #[test]
    fn periodicity_score_degenerate_single_bin_is_zero() {
        let hist = DqHistogram {
            min_bin: 0,
            counts: vec![100],
        };
        assert_eq!(detect_dq_periodicity(&hist), 0.0);
    }

    #[test]
    fn calibrated_threshold_matches_pinned_default() {
        let cal = DqCalibration::run(8).unwrap();
        assert!(
            cal.min_dq_score > cal.max_single_score,
            "grid must separate: dq>={} single<={}",
            cal.min_dq_score,
            cal.max_single_score
        );
        assert!(
            cal.min_dq_score > DEFAULT_DQ_SCORE_THRESHOLD
                && cal.max_single_score < DEFAULT_DQ_SCORE_THRESHOLD,
            "pinned threshold {} outside calibrated band [{}, {}]",
            DEFAULT_DQ_SCORE_THRESHOLD,
            cal.max_single_score,
            cal.min_dq_score
        );
    }

    #[test]
    fn q52_scores_above_threshold() {
        let values: Vec<i64> = (0..=255).collect();
        let hist = dq_histogram(&values, QuantizerSpec::new(5, 2).unwrap()).unwrap();
        assert!(detect_dq_periodicity(&hist) > DEFAULT_DQ_SCORE_THRESHOLD);
    }

    #[test]
    fn block_dct_dq_leaves_quantized_coefficients() {
        // After the transform-domain DQ, re-measuring the DCT coefficients
        // must give values on the s2 lattice (up to float round-off).
        let mut plane = ndarray::Array2::from_shape_fn((16, 16), |(y, x)| {
            ((y * 31 + x * 17) % 251) as f32
        });
        let spec = QuantizerSpec::new(1, 4).unwrap();
        block_dct_double_quantize(&mut plane, spec).unwrap();
        let basis = dct8_basis();
        for by in (0..16).step_by(8) {
            for bx in (0..16).step_by(8) {
                for u in 0..8 {
                    for v in 0..8 {
                        let mut acc = 0.0f64;
                        for y in 0..8 {
                            for x in 0..8 {
                                acc += basis[u][y]
                                    * basis[v][x]
                                    * plane[[by + y, bx + x]] as f64;
                            }
                        }
                        let rem = (acc / 4.0) - (acc / 4.0).round();
                        assert!(rem.abs() < 1e-3, "coefficient {acc} not on lattice");
                    }
                }
            }
        }
    }
}

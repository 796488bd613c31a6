//! Plain (non-recorded) activations shared by the graph ops.

use rand::Rng;

use crate::Scalar;

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Inverted-dropout keep mask: zeros with probability `rate`, survivors
/// scaled by `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_softmax() {
        let p = softmax(&[3.0f64; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn sigmoid_at_zero_and_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-1e4f64) >= 0.0 && sigmoid(1e4f64) <= 1.0);
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn relu_clamps() {
        assert_eq!(relu(-2.0f32), 0.0);
        assert_eq!(relu(2.0f32), 2.0);
    }

    #[test]
    fn softmax_is_normalized_for_large_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..20);
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        if rng.random::<bool>() { 1e4 } else { -1e4 }
                    } else {
                        rng.random_range(-50.0..50.0)
                    }
                })
                .collect();
            let p = softmax(&x);
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() <= 1e-7, "{s}");
            let p32 = softmax(&x.iter().map(|&v| v as f32).collect::<Vec<_>>());
            assert!((p32.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mask: Vec<f64> = dropout_mask(1_000_000, 0.5, &mut rng);
        let kept = mask.iter().filter(|&&m| m > 0.0).count() as f64 / 1e6;
        assert!((kept - 0.5).abs() < 0.01);
        let mean: f64 = mask.iter().sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01);
        let none: Vec<f64> = dropout_mask(100, 0.0, &mut rng);
        assert!(none.iter().all(|&m| m == 1.0));
    }
}

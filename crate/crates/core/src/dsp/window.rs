use crate::error::{ensure, Result};
use crate::Scalar;

/// Periodic Hann window, `w[i] = 0.5 - 0.5 cos(2πi/n)`.
pub fn hann_window<T: Scalar>(n: usize) -> Result<Vec<T>> {
    ensure!(n >= 2, "hann window needs at least 2 samples, got {n}");
    let half = T::lit(0.5);
    let step = T::TAU() / T::lit(n as f64);
    Ok((0..n)
        .map(|i| half - half * (step * T::lit(i as f64)).cos())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_window() {
        let w: Vec<f64> = hann_window(4).unwrap();
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn midpoint_is_unity() {
        let w: Vec<f64> = hann_window(512).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w[256] - 1.0).abs() < 1e-15);
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn squared_overlap_sum_is_constant() {
        // 75% overlap: every sample is covered by four shifted windows.
        let w: Vec<f64> = hann_window(512).unwrap();
        for n in 0..128 {
            let mut acc = 0.0;
            let mut i = n;
            while i < 512 {
                acc += w[i] * w[i];
                i += 128;
            }
            assert!((acc - 1.5).abs() < 1e-12, "sample {n}: {acc}");
        }
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(hann_window::<f32>(1).is_err());
        assert!(hann_window::<f32>(0).is_err());
    }
}

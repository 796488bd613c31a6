use crate::error::{ensure, Result};
use crate::Scalar;

/// Mean square over the whole clip.
pub fn mean_power<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * v).sum::<T>() / T::lit(x.len() as f64)
}

pub fn snr_db<T: Scalar>(speech: &[T], noise: &[T]) -> T {
    T::lit(10.0) * (mean_power(speech) / mean_power(noise)).log10()
}

/// Returns `noise * g` with `g` chosen so that the speech-to-noise power
/// ratio equals `snr_db`.
pub fn rescale_to_snr<T: Scalar>(speech: &[T], noise: &[T], snr_db: T) -> Result<Vec<T>> {
    let ps = mean_power(speech);
    let pn = mean_power(noise);
    ensure!(ps > T::zero(), "speech signal is silent");
    ensure!(pn > T::zero(), "noise signal is silent");
    ensure!(snr_db.is_finite(), "snr must be finite");
    let g = (ps / (pn * T::lit(10.0).powf(snr_db / T::lit(10.0)))).sqrt();
    Ok(noise.iter().map(|&v| v * g).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_power_zero_db_is_identity() {
        let s = [1.0, -1.0, 1.0, -1.0];
        let n = [-1.0, 1.0, 1.0, -1.0];
        assert_eq!(rescale_to_snr(&s, &n, 0.0).unwrap(), n.to_vec());
    }

    #[test]
    fn gain_for_ten_db() {
        let s = [1.0f64; 8];
        let n = [2.0f64; 8];
        let out = rescale_to_snr(&s, &n, 10.0).unwrap();
        let g = out[0] / 2.0;
        assert!((g - (1.0f64 / 40.0).sqrt()).abs() < 1e-12);
        assert!((g - 0.15811).abs() < 1e-5);
        assert!((snr_db(&s, &out) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn gain_for_minus_ten_db() {
        let s = [0.5f64, -0.5];
        let out = rescale_to_snr(&s, &s, -10.0).unwrap();
        assert!((out[0] / s[0] - 10f64.sqrt()).abs() < 1e-12);
        assert!((snr_db(&s, &out) + 10.0).abs() < 1e-6);
    }

    #[test]
    fn silent_inputs_are_rejected() {
        assert!(rescale_to_snr(&[0.0f64; 4], &[1.0; 4], 0.0).is_err());
        assert!(rescale_to_snr(&[1.0f64; 4], &[0.0; 4], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn measured_snr_matches_request(
            s in prop::collection::vec(-1.0f64..1.0, 64),
            n in prop::collection::vec(-1.0f64..1.0, 64),
            target in -10.0f64..10.0,
        ) {
            prop_assume!(mean_power(&s) > 1e-6 && mean_power(&n) > 1e-6);
            let scaled = rescale_to_snr(&s, &n, target).unwrap();
            prop_assert!((snr_db(&s, &scaled) - target).abs() < 1e-6);
        }
    }
}

use adhoc_select::dsp::{istft, stft, StftConfig};
use adhoc_select::eval::stoi;
use adhoc_select::model::{ModelConfig, Network};
use adhoc_select::nn::{Dropout, Graph, Tensor};
use adhoc_select::scene::synth::speech_like;
use adhoc_select::scene::{distance, render_static, simulate_rir, Room, SPEED_OF_SOUND};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_inverts_away_from_the_edges(len in 1200usize..6000, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let x = noise(len, seed);
        let y = istft(&stft(&x, &cfg, 16000).unwrap(), &cfg, len).unwrap();
        let (lo, hi) = (cfg.win_len, len - cfg.win_len);
        prop_assert!(rel_l2(&x[lo..hi], &y[lo..hi]) < 1e-9);
    }

    #[test]
    fn attention_ignores_the_order_of_earlier_rows(k in 1usize..=8, seed in any::<u64>(), rot in 0usize..8) {
        let cfg = ModelConfig { filters: 4, d: 8, heads: 2, ffn_mult: 2, ..ModelConfig::default() };
        let net = Network::<f64>::new(cfg, 3).unwrap();
        let rows: Vec<Vec<f64>> = (0..k).map(|i| noise(8, seed ^ i as u64)).collect();
        let run = |rows: &[Vec<f64>]| {
            let mut g = Graph::new(net.params());
            let z: Vec<_> = rows.iter().map(|r| g.constant(Tensor::row(r.clone()))).collect();
            let mut dropout: Dropout<'_, ChaCha8Rng> = Dropout::Eval;
            let h = net.attention_aggregate(&mut g, &z, &mut dropout).unwrap();
            g.data(h).to_vec()
        };
        let mut permuted = rows.clone();
        if k > 1 {
            permuted[..k - 1].rotate_left(rot % (k - 1));
        }
        prop_assert!(rel_l2(&run(&rows), &run(&permuted)) < 1e-12);
    }

    #[test]
    fn direct_path_peak_sits_at_the_travel_time(
        src in prop::array::uniform3(0.5f64..4.5),
        mic in prop::array::uniform3(0.5f64..4.5),
    ) {
        let room = Room::new([5.0, 5.0, 5.0], 0.3, 0).unwrap();
        let rir = simulate_rir(&room, &src, &mic, 16000).unwrap();
        let peak = (0..rir.taps.len()).max_by(|&a, &b| rir.taps[a].abs().total_cmp(&rir.taps[b].abs())).unwrap();
        let expected = distance(&src, &mic) / SPEED_OF_SOUND * 16000.0;
        prop_assert!((rir.lag(peak) - expected).abs() <= 1.0);
    }

    #[test]
    fn stoi_ignores_the_estimate_gain(gain in 0.01f64..100.0) {
        let x = speech_like(3.0, 16000, 9).unwrap().samples;
        let y: Vec<f64> = x.iter().zip(noise(x.len(), 2)).map(|(a, n)| a + 0.02 * n).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * gain).collect();
        prop_assert!((stoi(&x, &y).unwrap() - stoi(&x, &scaled).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn stoi_falls_as_noise_rises() {
    let signals: Vec<Vec<f64>> = (0..10).map(|i| speech_like(3.0, 16000, 40 + i).unwrap().samples).collect();
    let mean_at = |snr_db: f64| {
        signals
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
                let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
                let y: Vec<f64> = x.iter().zip(noise(x.len(), i as u64)).map(|(a, n)| a + sigma * n).collect();
                stoi(x, &y).unwrap()
            })
            .sum::<f64>()
            / signals.len() as f64
    };
    let means: Vec<f64> = [20.0, 10.0, 0.0, -10.0].iter().map(|&s| mean_at(s)).collect();
    assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
    let x = &signals[0];
    assert!((stoi(x, x).unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn static_render_of_an_impulse_is_the_response() {
    let room = Room::new([6.0, 5.0, 3.0], 0.4, 2).unwrap();
    let rir = simulate_rir(&room, &[1.0, 1.0, 1.0], &[4.0, 3.0, 1.5], 16000).unwrap();
    let mut x = vec![0.0; 8000];
    x[0] = 1.0;
    let y = render_static(&x, &rir);
    for (n, v) in y.iter().enumerate() {
        let tap = rir.taps.get(n + rir.delay_offset).copied().unwrap_or(0.0);
        assert!((v - tap).abs() < 1e-12);
    }
}

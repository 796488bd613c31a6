//! Finite-difference check of the full training loss (speech term plus
//! request penalty) on a tiny f64 network.

use adhoc_select::model::{ModelConfig, Mode, Network};
use adhoc_select::scene::{generate_indexed, Scene, SceneConfig, SceneOverrides, SourceMaterial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `len`-sample window from the middle of a short scene. Skipping the
/// start keeps silent frames, whose encoder pre-activations sit exactly on
/// the ReLU kink, out of the check.
fn tiny_scene(mics: usize, seed: u64, len: usize) -> Scene {
    let cfg = SceneConfig { mics, max_order: 1, duration_s: 0.5, ..SceneConfig::default() };
    let mut s = generate_indexed(&SourceMaterial::Synthetic, &cfg, seed, 0, SceneOverrides::default()).unwrap();
    let start = 4000;
    s.mixtures.iter_mut().for_each(|m| *m = m[start..start + len].to_vec());
    s.clean = s.clean[start..start + len].to_vec();
    s
}

fn tiny_config(score_bias_init: f64) -> ModelConfig {
    ModelConfig {
        filters: 4,
        d: 8,
        heads: 2,
        ffn_mult: 2,
        chunk_frames: 2,
        lambda: 5e-3,
        score_bias_init,
        ..ModelConfig::default()
    }
}

fn requests(net: &Network<f64>, scene: &Scene, order: &[usize]) -> (f64, Vec<usize>) {
    let (l, hs, _) = net.loss_and_grads(scene, order, Mode::Eval).unwrap();
    (l.total, hs.iter().map(|h| h.n).collect())
}

/// Worst relative error over `samples` random parameter entries, using a
/// fourth-order central difference. Entries whose perturbation changes any
/// chunk's request count are redrawn, since the loss jumps there, as are
/// entries where a ReLU kink lies within the stencil. Kinks are detected
/// from the finite differences alone (estimates at different step sizes
/// disagree), never by comparing against the analytic gradient.
fn worst_relative_error(net: &Network<f64>, scene: &Scene, order: &[usize], samples: usize) -> f64 {
    let (_, halts, grads) = net.loss_and_grads(scene, order, Mode::Eval).unwrap();
    let base: Vec<usize> = halts.iter().map(|h| h.n).collect();
    let ids: Vec<_> = net.params().ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let (mut checked, mut redrawn) = (0, 0);
    while checked < samples {
        let id = ids[rng.random_range(0..ids.len())];
        let i = rng.random_range(0..net.params().get(id).len());
        let at = |delta: f64| {
            let mut n = net.clone();
            n.params_mut().get_mut(id).data[i] += delta;
            requests(&n, scene, order)
        };
        let pts: Vec<(f64, Vec<usize>)> = [2.0, 1.0, -1.0, -2.0].iter().map(|&k| at(k * h)).collect();
        if pts.iter().any(|p| p.1 != base) {
            redrawn += 1;
            assert!(redrawn < samples / 4, "too many request-count flips");
            continue;
        }
        let fd = (-pts[0].0 + 8.0 * pts[1].0 - 8.0 * pts[2].0 + pts[3].0) / (12.0 * h);
        let d1 = (pts[1].0 - pts[2].0) / (2.0 * h);
        let d2 = (pts[0].0 - pts[3].0) / (4.0 * h);
        let (fine_p, fine_m) = (at(h / 10.0), at(-h / 10.0));
        let fine = (fine_p.0 - fine_m.0) / (0.2 * h);
        let scale = fd.abs().max(1e-6);
        if (d1 - d2).abs() > 1e-2 * scale || (fine - fd).abs() > 1e-4 * scale {
            redrawn += 1;
            assert!(redrawn < samples / 4, "too many non-smooth entries");
            continue;
        }
        let ad = grads.get(id)[i];
        let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-6);
        worst = worst.max(rel);
        checked += 1;
    }
    eprintln!("checked {checked} entries, redrew {redrawn}, worst relative error {worst:e}");
    worst
}

#[test]
fn loss_gradients_match_finite_differences_while_halting() {
    let net = Network::<f64>::new(tiny_config(1.0), 2).unwrap();
    let scene = tiny_scene(3, 1, 1024);
    let order = [0, 2, 1];
    let (_, n) = requests(&net, &scene, &order);
    assert!(n.iter().any(|&n| n < 3), "setup should halt early: {n:?}");
    let worst = worst_relative_error(&net, &scene, &order, 220);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn loss_gradients_match_finite_differences_when_streaming_everything() {
    let net = Network::<f64>::new(tiny_config(-2.0), 5).unwrap();
    let scene = tiny_scene(3, 4, 768);
    let order = [0, 1, 2];
    let worst = worst_relative_error(&net, &scene, &order, 220);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

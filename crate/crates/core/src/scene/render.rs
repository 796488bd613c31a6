//! Rendering dry signals through (possibly moving) source-to-mic paths.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::room::{image_sources, simulate_rir_with_images, Point, Rir, Room};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Speech,
    Noise,
}

/// Straight-line motion from `start` to `end` over the clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTrajectory {
    pub start: Point,
    pub end: Point,
    pub kind: SourceKind,
}

impl SourceTrajectory {
    pub fn at(&self, frac: f64) -> Point {
        std::array::from_fn(|i| self.start[i] + (self.end[i] - self.start[i]) * frac)
    }
}

/// Piecewise-stationary rendering settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub n_blocks: usize,
    /// Cross-fade length between adjacent blocks, in samples.
    pub crossfade: usize,
    pub fs: u32,
    /// Minimum distance between either trajectory endpoint and the walls.
    pub wall_margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            n_blocks: 8,
            crossfade: 128,
            fs: 16_000,
            wall_margin: 0.1,
        }
    }
}

/// Linear convolution truncated to `out_len` samples, with the result
/// advanced by `advance` samples (`y[n] = (x * h)[n + advance]`).
pub fn fft_convolve(x: &[f64], h: &[f64], advance: usize, out_len: usize) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; out_len];
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(n, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    (0..out_len)
        .map(|i| {
            let j = i + advance;
            if j < full {
                a[j].re * scale
            } else {
                0.0
            }
        })
        .collect()
}

/// Static rendering: `dry` convolved with `rir`, aligned to lag zero and
/// truncated to the input length.
pub fn render_static(dry: &[f64], rir: &Rir) -> Vec<f64> {
    fft_convolve(dry, &rir.taps, rir.delay_offset, dry.len())
}

/// Cross-fade weights of each block; they sum to one at every sample.
pub fn block_weights(len: usize, n_blocks: usize, crossfade: usize) -> Vec<(usize, Vec<f64>)> {
    let block = len / n_blocks;
    let half = crossfade / 2;
    let boundary = |b: usize| b * block;
    // ramp from 0 to 1 across [B - half, B + half)
    let ramp = |n: usize, b: usize| -> f64 {
        let bnd = boundary(b) as f64;
        if crossfade == 0 {
            return if (n as f64) < bnd { 0.0 } else { 1.0 };
        }
        ((n as f64 + 0.5 - (bnd - half as f64)) / crossfade as f64).clamp(0.0, 1.0)
    };
    (0..n_blocks)
        .map(|b| {
            let start = if b == 0 { 0 } else { boundary(b).saturating_sub(half) };
            let end = if b + 1 == n_blocks { len } else { (boundary(b + 1) + half).min(len) };
            let w = (start..end)
                .map(|n| {
                    let rise = if b == 0 { 1.0 } else { ramp(n, b) };
                    let fall = if b + 1 == n_blocks { 1.0 } else { 1.0 - ramp(n, b + 1) };
                    rise * fall
                })
                .collect();
            (start, w)
        })
        .collect()
}

/// Renders a moving source at several microphones. Block `b` uses the
/// impulse response at the trajectory point `(b + 0.5) / n_blocks`.
pub fn render_moving_multi(
    dry: &[f64],
    traj: &SourceTrajectory,
    room: &Room,
    mics: &[Point],
    cfg: &RenderConfig,
) -> Result<Vec<Vec<f64>>> {
    ensure!(cfg.n_blocks >= 1, "n_blocks must be at least 1");
    ensure!(dry.len() >= cfg.n_blocks, "signal shorter than the block count");
    ensure!(
        room.contains(&traj.start, cfg.wall_margin) && room.contains(&traj.end, cfg.wall_margin),
        "trajectory {:?} -> {:?} leaves the room (margin {} m)",
        traj.start,
        traj.end,
        cfg.wall_margin
    );
    let len = dry.len();
    let mut out = vec![vec![0.0; len]; mics.len()];
    let max_len = 2 * cfg.fs as usize;
    for (b, (start, weights)) in block_weights(len, cfg.n_blocks, cfg.crossfade)
        .into_iter()
        .enumerate()
    {
        let pos = traj.at((b as f64 + 0.5) / cfg.n_blocks as f64);
        let images = image_sources(room, &pos);
        let segment: Vec<f64> = weights.iter().zip(&dry[start..]).map(|(w, x)| w * x).collect();
        for (mic, acc) in mics.iter().zip(out.iter_mut()) {
            let rir = simulate_rir_with_images(room, &images, &pos, mic, cfg.fs, max_len)?;
            // acausal fractional-delay taps reach back before the block start
            let from = start.saturating_sub(rir.delay_offset);
            let rendered = fft_convolve(&segment, &rir.taps, rir.delay_offset - (start - from), len - from);
            for (o, v) in acc[from..].iter_mut().zip(rendered) {
                *o += v;
            }
        }
    }
    Ok(out)
}

pub fn render_moving_source(
    dry: &[f64],
    traj: &SourceTrajectory,
    room: &Room,
    mic: &Point,
    cfg: &RenderConfig,
) -> Result<Vec<f64>> {
    Ok(render_moving_multi(dry, traj, room, std::slice::from_ref(mic), cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::super::room::{distance, simulate_rir, SPEED_OF_SOUND};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dry(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn direct_convolve(x: &[f64], h: &[f64], advance: usize, out_len: usize) -> Vec<f64> {
        (0..out_len)
            .map(|n| {
                let j = n + advance;
                (0..h.len()).filter(|&k| k <= j && j - k < x.len()).map(|k| h[k] * x[j - k]).sum()
            })
            .collect()
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x = dry(300, 1);
        let h = dry(70, 2);
        let a = fft_convolve(&x, &h, 5, 320);
        let b = direct_convolve(&x, &h, 5, 320);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn block_weights_partition_unity() {
        for (len, nb, xf) in [(32000, 8, 128), (1000, 3, 10), (500, 1, 128), (999, 4, 0)] {
            let mut total = vec![0.0; len];
            for (start, w) in block_weights(len, nb, xf) {
                for (i, v) in w.iter().enumerate() {
                    total[start + i] += v;
                }
            }
            assert!(total.iter().all(|&v| (v - 1.0).abs() < 1e-12), "{len} {nb} {xf}");
        }
    }

    fn room() -> Room {
        Room::new([11.0, 12.0, 10.5], 0.35, 3).unwrap()
    }

    #[test]
    fn close_source_keeps_pre_ringing_at_block_edges() {
        // 5 cm away: sinc taps extend before lag zero
        let rm = room();
        let x = dry(16000, 4);
        let mic = [5.0, 5.0, 1.5];
        let p = [5.05, 5.0, 1.5];
        let traj = SourceTrajectory { start: p, end: p, kind: SourceKind::Speech };
        let rir = simulate_rir(&rm, &p, &mic, 16000).unwrap();
        assert!(rir.delay_offset > 0);
        let moving = render_moving_source(&x, &traj, &rm, &mic, &RenderConfig::default()).unwrap();
        let fixed = render_static(&x, &rir);
        for (a, b) in moving.iter().zip(&fixed) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn static_trajectory_equals_static_convolution() {
        let rm = room();
        let x = dry(16000, 3);
        let p = [3.0, 4.0, 2.0];
        let mic = [8.0, 7.5, 1.5];
        let traj = SourceTrajectory { start: p, end: p, kind: SourceKind::Speech };
        let moving = render_moving_source(&x, &traj, &rm, &mic, &RenderConfig::default()).unwrap();
        let fixed = render_static(&x, &simulate_rir(&rm, &p, &mic, 16000).unwrap());
        for (a, b) in moving.iter().zip(&fixed) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_block_uses_midpoint() {
        let rm = room();
        let x = dry(8000, 4);
        let traj = SourceTrajectory { start: [2.0, 2.0, 2.0], end: [6.0, 8.0, 4.0], kind: SourceKind::Noise };
        let mic = [9.0, 3.0, 5.0];
        let cfg = RenderConfig { n_blocks: 1, ..RenderConfig::default() };
        let moving = render_moving_source(&x, &traj, &rm, &mic, &cfg).unwrap();
        let fixed = render_static(&x, &simulate_rir(&rm, &[4.0, 5.0, 3.0], &mic, 16000).unwrap());
        for (a, b) in moving.iter().zip(&fixed) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn per_block_direct_delay_tracks_motion() {
        // direct-path only; an impulse at each block centre shows up at the
        // geometric delay of that block's position
        let rm = Room::new([11.0, 12.0, 10.5], 0.35, 0).unwrap();
        let cfg = RenderConfig::default();
        let len = 32000;
        let traj = SourceTrajectory { start: [1.0, 1.0, 1.0], end: [10.0, 11.0, 9.0], kind: SourceKind::Speech };
        let mic = [5.0, 6.0, 5.0];
        let block = len / cfg.n_blocks;
        for b in 0..cfg.n_blocks {
            let mut x = vec![0.0; len];
            let centre = b * block + block / 2;
            x[centre] = 1.0;
            let y = render_moving_source(&x, &traj, &rm, &mic, &cfg).unwrap();
            let peak = (0..len).max_by(|&i, &j| y[i].abs().total_cmp(&y[j].abs())).unwrap();
            let pos = traj.at((b as f64 + 0.5) / cfg.n_blocks as f64);
            let expect = distance(&pos, &mic) / SPEED_OF_SOUND * 16000.0;
            assert!(((peak - centre) as f64 - expect).abs() <= 1.0, "block {b}");
        }
    }

    #[test]
    fn trajectory_outside_room_is_rejected() {
        let traj = SourceTrajectory { start: [0.05, 2.0, 2.0], end: [3.0, 3.0, 3.0], kind: SourceKind::Speech };
        let err = render_moving_source(&dry(800, 0), &traj, &room(), &[5.0, 5.0, 5.0], &RenderConfig::default());
        assert!(err.is_err());
    }
}

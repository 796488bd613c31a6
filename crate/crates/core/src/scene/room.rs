//! Shoebox rooms and image-source impulse responses.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub type Point = [f64; 3];

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Length of the windowed-sinc fractional delay kernel.
pub const SINC_TAPS: usize = 81;

const HALF_TAPS: usize = SINC_TAPS / 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Width, depth, height in metres.
    pub dims: [f64; 3],
    /// Energy absorption coefficient of every wall.
    pub absorption: f64,
    pub max_order: u32,
}

impl Room {
    pub fn new(dims: [f64; 3], absorption: f64, max_order: u32) -> Result<Self> {
        ensure!(
            dims.iter().all(|&d| d.is_finite() && d > 0.0),
            "room dimensions must be positive, got {dims:?}"
        );
        ensure!(
            absorption > 0.0 && absorption < 1.0,
            "absorption must lie in (0, 1), got {absorption}"
        );
        Ok(Self {
            dims,
            absorption,
            max_order,
        })
    }

    /// Amplitude reflection coefficient, `sqrt(1 - absorption)`.
    pub fn reflection_coefficient(&self) -> f64 {
        (1.0 - self.absorption).sqrt()
    }

    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        p.iter()
            .zip(&self.dims)
            .all(|(&c, &d)| c >= margin && c <= d - margin)
    }

    pub fn direct_only(&self) -> Self {
        Self {
            max_order: 0,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    pub reflections: u32,
}

/// Every image of `src` with at most `room.max_order` wall reflections.
///
/// Along one axis the image with lattice index `n` and mirror flag `u` sits
/// at `(1 - 2u) x + 2 n L` and has undergone `|n - u| + |n|` reflections.
pub fn image_sources(room: &Room, src: &Point) -> Vec<ImageSource> {
    let q = room.max_order as i64;
    let mut per_axis: [Vec<(f64, u32)>; 3] = Default::default();
    for axis in 0..3 {
        let (x, l) = (src[axis], room.dims[axis]);
        for n in -q..=q {
            for u in 0..=1i64 {
                let refl = ((n - u).abs() + n.abs()) as u32;
                if refl as i64 <= q {
                    let pos = (1 - 2 * u) as f64 * x + 2.0 * n as f64 * l;
                    per_axis[axis].push((pos, refl));
                }
            }
        }
    }
    let mut out = Vec::new();
    for &(x, rx) in &per_axis[0] {
        for &(y, ry) in &per_axis[1] {
            if rx + ry > room.max_order {
                continue;
            }
            for &(z, rz) in &per_axis[2] {
                let r = rx + ry + rz;
                if r <= room.max_order {
                    out.push(ImageSource {
                        position: [x, y, z],
                        reflections: r,
                    });
                }
            }
        }
    }
    out
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Room impulse response. Tap `i` corresponds to lag `i - delay_offset`
/// samples; the offset leaves room for the fractional-delay kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub delay_offset: usize,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|v| v * v).sum()
    }

    /// Lag in samples of tap `i`.
    pub fn lag(&self, i: usize) -> f64 {
        i as f64 - self.delay_offset as f64
    }
}

/// Impulse response from `src` to `mic`, truncated to `max_len` lags.
pub fn simulate_rir(room: &Room, src: &Point, mic: &Point, fs: u32) -> Result<Rir> {
    simulate_rir_with_images(room, &image_sources(room, src), src, mic, fs, 2 * fs as usize)
}

pub(crate) fn simulate_rir_with_images(
    room: &Room,
    images: &[ImageSource],
    src: &Point,
    mic: &Point,
    fs: u32,
    max_len: usize,
) -> Result<Rir> {
    let direct = distance(src, mic);
    ensure!(direct > 1e-6, "source and microphone coincide at {src:?}");
    ensure!(
        room.contains(src, 0.0) && room.contains(mic, 0.0),
        "source {src:?} or microphone {mic:?} lies outside the room"
    );
    let fs = fs as f64;
    let r = room.reflection_coefficient();
    let arrivals: Vec<(f64, f64)> = images
        .iter()
        .filter_map(|img| {
            let d = distance(&img.position, mic);
            let delay = d / SPEED_OF_SOUND * fs;
            (delay < max_len as f64).then(|| {
                let amp = r.powi(img.reflections as i32) / (4.0 * std::f64::consts::PI * d);
                (delay, amp)
            })
        })
        .collect();
    let longest = arrivals.iter().map(|a| a.0).fold(0.0, f64::max);
    let len = longest.ceil() as usize + SINC_TAPS + 1;
    let mut taps = vec![0.0; len];
    for (delay, amp) in arrivals {
        add_fractional_impulse(&mut taps, delay + HALF_TAPS as f64, amp);
    }
    Ok(Rir {
        taps,
        delay_offset: HALF_TAPS,
    })
}

/// Adds `amp · sinc(i - centre)` under a Hann window spanning the kernel.
fn add_fractional_impulse(taps: &mut [f64], centre: f64, amp: f64) {
    use std::f64::consts::PI;
    let mid = centre.round() as i64;
    let half = HALF_TAPS as i64;
    let width = HALF_TAPS as f64 + 1.0;
    for j in (mid - half)..=(mid + half) {
        if j < 0 || j as usize >= taps.len() {
            continue;
        }
        let x = j as f64 - centre;
        let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let w = 0.5 * (1.0 + (PI * x / width).cos());
        taps[j as usize] += amp * sinc * w;
    }
}

//! Helpers shared by the integration test targets.
//!
//! `oracle_flags` recomputes every frame's fall flag from scratch without
//! touching the detector: it rescans the stream for the calibration nose and
//! evaluates the displacement with its own arithmetic.

#![allow(dead_code)]

use fallsentry_core::stream::{LandmarkPoint, PoseFrame, StreamHeader, LANDMARK_COUNT};
use fallsentry_core::synth::{perturb, synthesize, PerturbSpec, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PATTERNS: [&str; 6] = [
    "forward-fall",
    "backward-fall",
    "left-fall",
    "right-fall",
    "no-fall-walk",
    "no-fall-sit",
];

fn raw_nose(frame: &PoseFrame, visibility_min: f64) -> Option<(f64, f64)> {
    let lm = frame.landmarks.as_ref()?;
    let nose = lm[0];
    (nose.visibility >= visibility_min).then_some((nose.x, nose.y))
}

pub fn oracle_flags(frames: &[PoseFrame], threshold: f64, visibility_min: f64) -> Vec<bool> {
    (0..frames.len())
        .map(|i| {
            let Some((x, y)) = raw_nose(&frames[i], visibility_min) else {
                return false;
            };
            let (x0, y0) = frames[..=i]
                .iter()
                .find_map(|f| raw_nose(f, visibility_min))
                .expect("frame i itself has a nose");
            let (dx, dy) = (x - x0, y - y0);
            (dx * dx + dy * dy).sqrt() > threshold
        })
        .collect()
}

/// A randomized stream description, reproducible from `seed`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    pub seed: u64,
    pub header: StreamHeader,
    pub synth: SynthSpec,
    pub perturb: PerturbSpec,
    pub threshold: f64,
    pub frames: Vec<PoseFrame>,
}

pub fn random_stream(seed: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];
    let frames = rng.random_range(1..300u64);
    let fall_start = rng.random_range(0..frames);
    let drop_px = rng.random_range(0.0..260.0);
    let ramp = rng.random_range(1..60u64);
    let header = StreamHeader::new(
        rng.random_range(160..1920),
        rng.random_range(120..1080),
        rng.random_range(10.0..60.0),
        "",
    );
    let synth = SynthSpec::new(pattern, frames, fall_start, drop_px, rng.random()).with_ramp(ramp);
    let sigma = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..6.0) };
    let dropout = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.4) };
    let perturb_spec = PerturbSpec::new(sigma, dropout, rng.random()).unwrap();
    let threshold = if rng.random_bool(0.3) { 95.0 } else { rng.random_range(10.0..200.0) };

    let clean = synthesize(&synth, &header).unwrap();
    let mut out = perturb(&clean, &perturb_spec);
    // Occasionally hide the nose or shoulders to exercise visibility gating.
    for frame in out.iter_mut() {
        if let Some(lm) = frame.landmarks.as_deref_mut() {
            if rng.random_bool(0.05) {
                lm[0].visibility = rng.random_range(0.0..1.0);
            }
            if rng.random_bool(0.05) {
                lm[27].visibility = rng.random_range(0.0..1.0);
            }
        }
    }
    RandomStream {
        seed,
        header: synth.header(&header),
        synth,
        perturb: perturb_spec,
        threshold,
        frames: out,
    }
}

/// Fully random landmarks (not a stick figure), for format round-trips.
pub fn noise_frames(seed: u64, count: usize) -> Vec<PoseFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..10_000u64);
    (0..count as u64)
        .map(|i| {
            if rng.random_bool(0.15) {
                return PoseFrame::missing(start + i);
            }
            let mut lm = [LandmarkPoint::default(); LANDMARK_COUNT];
            for p in lm.iter_mut() {
                *p = LandmarkPoint::new(
                    rng.random_range(-500.0..2500.0),
                    rng.random_range(-500.0..2500.0),
                    rng.random_range(0.0..=1.0),
                );
            }
            PoseFrame::new(start + i, lm)
        })
        .collect()
}

pub fn scale_frames(frames: &[PoseFrame], s: f64) -> Vec<PoseFrame> {
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            if let Some(lm) = f.landmarks.as_deref_mut() {
                for p in lm.iter_mut() {
                    p.x *= s;
                    p.y *= s;
                }
            }
            f
        })
        .collect()
}

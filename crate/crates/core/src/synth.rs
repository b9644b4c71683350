//! Synthetic landmark streams and landmark-level degradation.
//!
//! Motion patterns are trait objects looked up by name in a
//! [`PatternRegistry`]. Each pattern only decides the posture of a stick
//! figure per frame; a shared renderer turns postures into the 33 landmarks.
//!
//! Fall patterns move the nose straight down by `drop_px`, linearly over
//! `ramp_frames` frames starting after `fall_start`, so the head
//! displacement at frame `t` equals `drop_px * min(t - fall_start, ramp) / ramp`.
//! Non-fall patterns keep the nose strictly within `drop_px` of where it was
//! on frame 0.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; the algorithm name is
//! recorded in the generated header's `source` field.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Point;
use crate::stream::{LandmarkPoint, PoseFrame, StreamHeader, LANDMARK_COUNT};

pub const RNG_ALGORITHM: &str = "chacha8";
pub const DEFAULT_RAMP_FRAMES: u64 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("unknown pattern {0:?}")]
    UnknownPattern(String),
}

/// Frame-independent parameters a pattern may read.
#[derive(Debug, Clone, Copy)]
pub struct MotionContext {
    pub fall_start: u64,
    pub ramp_frames: u64,
    pub drop_px: f64,
    /// Walking cycle length in frames.
    pub walk_period: f64,
    pub walk_phase: f64,
    /// Peak sideways torso bend at the end of a fall, in body lengths.
    pub lean: f64,
}

impl MotionContext {
    /// Fraction of the ramp completed at `frame`, in `[0, 1]`.
    pub fn ramp_fraction(&self, frame: u64) -> f64 {
        self.ramp_steps(frame) as f64 / self.ramp_frames as f64
    }

    /// Nose descent at `frame` for a ramp reaching `total` px.
    pub fn descent(&self, frame: u64, total: f64) -> f64 {
        total * self.ramp_steps(frame) as f64 / self.ramp_frames as f64
    }

    fn ramp_steps(&self, frame: u64) -> u64 {
        frame.saturating_sub(self.fall_start).min(self.ramp_frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Subject faces the camera; shoulders spread across the image.
    Frontal,
    /// Subject seen side-on; left and right landmarks nearly overlap.
    Profile,
}

/// Stick-figure pose for one frame, relative to the standing figure.
#[derive(Debug, Clone, Copy)]
pub struct Posture {
    /// Nose offset from the standing nose, pixels.
    pub nose_offset: Point,
    /// Horizontal shift of the whole figure, feet included, pixels.
    pub body_shift: f64,
    /// Sideways torso bend in body lengths; positive bends toward +x.
    pub bend: f64,
    pub view: View,
}

pub trait MotionPattern: Send + Sync {
    fn name(&self) -> &'static str;
    fn is_fall(&self) -> bool;
    fn posture(&self, frame: u64, ctx: &MotionContext) -> Posture;
}

struct Fall {
    name: &'static str,
    bend_sign: f64,
    view: View,
}

impl MotionPattern for Fall {
    fn name(&self) -> &'static str {
        self.name
    }

    fn is_fall(&self) -> bool {
        true
    }

    fn posture(&self, frame: u64, ctx: &MotionContext) -> Posture {
        Posture {
            nose_offset: Point::new(0.0, ctx.descent(frame, ctx.drop_px)),
            body_shift: 0.0,
            bend: self.bend_sign * ctx.lean * ctx.ramp_fraction(frame),
            view: self.view,
        }
    }
}

/// Side-to-side sway with a small vertical bob; the nose stays within
/// `0.42 * drop_px` of its frame-0 position.
struct Walk;

impl MotionPattern for Walk {
    fn name(&self) -> &'static str {
        "no-fall-walk"
    }

    fn is_fall(&self) -> bool {
        false
    }

    fn posture(&self, frame: u64, ctx: &MotionContext) -> Posture {
        let sway = 0.2 * ctx.drop_px;
        let bob = 0.05 * ctx.drop_px;
        let phase = TAU * frame as f64 / ctx.walk_period + ctx.walk_phase;
        let phase0 = ctx.walk_phase;
        Posture {
            nose_offset: Point::new(0.0, bob * ((2.0 * phase).cos() - (2.0 * phase0).cos())),
            body_shift: sway * (phase.sin() - phase0.sin()),
            bend: 0.0,
            view: View::Frontal,
        }
    }
}

/// Lowers the head by 90% of `drop_px` over the ramp, upright throughout.
struct Sit;

impl MotionPattern for Sit {
    fn name(&self) -> &'static str {
        "no-fall-sit"
    }

    fn is_fall(&self) -> bool {
        false
    }

    fn posture(&self, frame: u64, ctx: &MotionContext) -> Posture {
        Posture {
            nose_offset: Point::new(0.0, ctx.descent(frame, 0.9 * ctx.drop_px)),
            body_shift: 0.0,
            bend: 0.0,
            view: View::Profile,
        }
    }
}

#[derive(Clone, Default)]
pub struct PatternRegistry {
    patterns: BTreeMap<String, Arc<dyn MotionPattern>>,
}

impl PatternRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register(Fall {
            name: "forward-fall",
            bend_sign: -1.0,
            view: View::Profile,
        });
        reg.register(Fall {
            name: "backward-fall",
            bend_sign: 1.0,
            view: View::Profile,
        });
        reg.register(Fall {
            name: "left-fall",
            bend_sign: -1.0,
            view: View::Frontal,
        });
        reg.register(Fall {
            name: "right-fall",
            bend_sign: 1.0,
            view: View::Frontal,
        });
        reg.register(Walk);
        reg.register(Sit);
        reg
    }

    pub fn register<P: MotionPattern + 'static>(&mut self, pattern: P) -> Option<Arc<dyn MotionPattern>> {
        self.patterns.insert(pattern.name().to_string(), Arc::new(pattern))
    }

    /// Case-insensitive lookup; `FORWARD_FALL` and `forward-fall` are the
    /// same pattern.
    pub fn get(&self, name: &str) -> Option<Arc<dyn MotionPattern>> {
        self.patterns.get(&normalize(name)).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.patterns.keys().map(String::as_str)
    }
}

fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('_', "-")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub pattern: String,
    pub frames: u64,
    pub fall_start: u64,
    pub drop_px: f64,
    pub ramp_frames: u64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(pattern: impl Into<String>, frames: u64, fall_start: u64, drop_px: f64, seed: u64) -> Self {
        Self {
            pattern: pattern.into(),
            frames,
            fall_start,
            drop_px,
            ramp_frames: DEFAULT_RAMP_FRAMES,
            seed,
        }
    }

    pub fn with_ramp(mut self, ramp_frames: u64) -> Self {
        self.ramp_frames = ramp_frames;
        self
    }

    /// Echo of the synthesis parameters for a stream header's `source` field.
    pub fn describe(&self) -> String {
        format!(
            "synth pattern={} frames={} fall_start={} drop_px={} ramp_frames={} seed={} rng={}",
            normalize(&self.pattern),
            self.frames,
            self.fall_start,
            self.drop_px,
            self.ramp_frames,
            self.seed,
            RNG_ALGORITHM
        )
    }

    /// `base` with its `source` replaced by [`SynthSpec::describe`].
    pub fn header(&self, base: &StreamHeader) -> StreamHeader {
        StreamHeader {
            source: self.describe(),
            ..base.clone()
        }
    }
}

// (along-body fraction from nose to ankles, lateral offset in body lengths;
// positive is the subject's left, which faces image +x when upright).
const TEMPLATE: [(f64, f64); LANDMARK_COUNT] = [
    (0.0, 0.0),
    (-0.020, 0.012),
    (-0.022, 0.022),
    (-0.022, 0.032),
    (-0.020, -0.012),
    (-0.022, -0.022),
    (-0.022, -0.032),
    (-0.010, 0.050),
    (-0.010, -0.050),
    (0.025, 0.015),
    (0.025, -0.015),
    (0.150, 0.120),
    (0.150, -0.120),
    (0.330, 0.150),
    (0.330, -0.150),
    (0.480, 0.160),
    (0.480, -0.160),
    (0.520, 0.165),
    (0.520, -0.165),
    (0.530, 0.160),
    (0.530, -0.160),
    (0.510, 0.150),
    (0.510, -0.150),
    (0.500, 0.070),
    (0.500, -0.070),
    (0.750, 0.070),
    (0.750, -0.070),
    (1.000, 0.070),
    (1.000, -0.070),
    (1.020, 0.065),
    (1.020, -0.065),
    (1.030, 0.090),
    (1.030, -0.090),
];

const PROFILE_SQUEEZE: f64 = 0.25;

/// Figure placement drawn once per stream. Values are rounded to 1/64 px so
/// that nose positions plus descents stay exact in `f64`.
#[derive(Debug, Clone, Copy)]
struct Figure {
    body: f64,
    center_x: f64,
    floor_y: f64,
}

fn dyadic(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

impl Figure {
    fn render(&self, posture: &Posture) -> [LandmarkPoint; LANDMARK_COUNT] {
        let feet = Point::new(self.center_x + posture.body_shift, self.floor_y);
        let nose = Point::new(
            feet.x + posture.nose_offset.x,
            self.floor_y - self.body + posture.nose_offset.y,
        );
        let (ax, ay) = (feet.x - nose.x, feet.y - nose.y);
        let len = ax.hypot(ay);
        let (ux, uy) = if len > 0.0 { (ax / len, ay / len) } else { (0.0, 1.0) };
        let (vx, vy) = (uy, -ux);
        let squeeze = match posture.view {
            View::Frontal => 1.0,
            View::Profile => PROFILE_SQUEEZE,
        };

        let mut out = [LandmarkPoint::default(); LANDMARK_COUNT];
        for (slot, &(along, lateral)) in out.iter_mut().zip(TEMPLATE.iter()) {
            let side = lateral * squeeze * self.body;
            let bend = posture.bend * self.body * (PI * along.clamp(0.0, 1.0)).sin();
            *slot = LandmarkPoint::new(
                nose.x + along * ax + side * vx + bend,
                nose.y + along * ay + side * vy,
                1.0,
            );
        }
        // Exact nose keeps displacement equal to the scripted descent.
        out[0] = LandmarkPoint::new(nose.x, nose.y, 1.0);
        out
    }
}

pub fn synthesize(spec: &SynthSpec, header: &StreamHeader) -> Result<Vec<PoseFrame>, SynthError> {
    synthesize_with(&PatternRegistry::with_builtins(), spec, header)
}

pub fn synthesize_with(
    registry: &PatternRegistry,
    spec: &SynthSpec,
    header: &StreamHeader,
) -> Result<Vec<PoseFrame>, SynthError> {
    let pattern = registry
        .get(&spec.pattern)
        .ok_or_else(|| SynthError::UnknownPattern(spec.pattern.clone()))?;
    header.validate().map_err(SynthError::InvalidSpec)?;
    if spec.frames == 0 {
        return Err(SynthError::InvalidSpec("frames must be positive".into()));
    }
    if spec.ramp_frames == 0 {
        return Err(SynthError::InvalidSpec("ramp_frames must be positive".into()));
    }
    if !(spec.drop_px.is_finite() && spec.drop_px >= 0.0) {
        return Err(SynthError::InvalidSpec(format!(
            "drop_px must be a non-negative number, got {}",
            spec.drop_px
        )));
    }
    if pattern.is_fall() && spec.fall_start >= spec.frames {
        return Err(SynthError::InvalidSpec(format!(
            "fall_start {} must be below frames {}",
            spec.fall_start, spec.frames
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (header.width as f64, header.height as f64);
    let figure = Figure {
        body: dyadic(h * rng.random_range(0.50..0.65)),
        center_x: dyadic(w * rng.random_range(0.35..0.65)),
        floor_y: dyadic(h * rng.random_range(0.85..0.95)),
    };
    let ctx = MotionContext {
        fall_start: spec.fall_start,
        ramp_frames: spec.ramp_frames,
        drop_px: spec.drop_px,
        walk_period: rng.random_range(24.0..48.0),
        walk_phase: rng.random_range(0.0..TAU),
        lean: rng.random_range(0.35..0.55),
    };

    Ok((0..spec.frames)
        .map(|t| PoseFrame::new(t, figure.render(&pattern.posture(t, &ctx))))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    noise_sigma_px: f64,
    dropout_prob: f64,
    seed: u64,
}

impl PerturbSpec {
    pub fn new(noise_sigma_px: f64, dropout_prob: f64, seed: u64) -> Result<Self, SynthError> {
        if !(noise_sigma_px.is_finite() && noise_sigma_px >= 0.0) {
            return Err(SynthError::InvalidSpec(format!(
                "noise sigma must be a non-negative number, got {noise_sigma_px}"
            )));
        }
        if !(0.0..=1.0).contains(&dropout_prob) {
            return Err(SynthError::InvalidSpec(format!(
                "dropout probability must lie in [0, 1], got {dropout_prob}"
            )));
        }
        Ok(Self {
            noise_sigma_px,
            dropout_prob,
            seed,
        })
    }

    pub fn noise_sigma_px(&self) -> f64 {
        self.noise_sigma_px
    }

    pub fn dropout_prob(&self) -> f64 {
        self.dropout_prob
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn describe(&self) -> String {
        format!(
            "perturb noise_sigma_px={} dropout={} seed={} rng={}",
            self.noise_sigma_px, self.dropout_prob, self.seed, RNG_ALGORITHM
        )
    }
}

impl fmt::Display for PerturbSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Adds Gaussian noise to every coordinate and drops whole frames at random.
/// Frame count, indices and visibilities are preserved.
pub fn perturb(frames: &[PoseFrame], spec: &PerturbSpec) -> Vec<PoseFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma_px > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma_px).expect("sigma validated"));

    frames
        .iter()
        .map(|frame| {
            let dropped = rng.random_bool(spec.dropout_prob);
            if dropped {
                return PoseFrame::missing(frame.index);
            }
            let mut out = frame.clone();
            if let (Some(noise), Some(landmarks)) = (&noise, out.landmarks.as_deref_mut()) {
                for lm in landmarks.iter_mut() {
                    lm.x += noise.sample(&mut rng);
                    lm.y += noise.sample(&mut rng);
                }
            }
            out
        })
        .collect()
}

//! Handcrafted geometric features computed from 2D pose landmarks.

use thiserror::Error;

use crate::stream::{KeypointId, PoseFrame};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("nose and neck coincide; head angle is undefined")]
    DegeneratePoints,
    #[error("baseline distance {0} must be positive")]
    ZeroBaseline(f64),
}

/// A point in pixel coordinates (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// The three per-frame features. Each is absent when its inputs were not
/// available on the frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureValues {
    /// Nose-to-neck angle in degrees, `[0, 180]`.
    pub head_angle_deg: Option<f64>,
    /// Nose to left ankle, pixels.
    pub dist_ankle_px: Option<f64>,
    /// Relative change of `dist_ankle_px` against the calibration baseline,
    /// in percent.
    pub pct_change: Option<f64>,
}

pub fn euclidean(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// The topology has no neck landmark; the shoulder midpoint stands in.
pub fn neck_point(frame: &PoseFrame, visibility_min: f64) -> Option<Point> {
    let left = frame.usable(KeypointId::LEFT_SHOULDER, visibility_min)?;
    let right = frame.usable(KeypointId::RIGHT_SHOULDER, visibility_min)?;
    Some(left.midpoint(right))
}

/// Absolute two-argument arctangent of the neck-to-nose vector, in degrees.
///
/// Upright heads in image coordinates sit near 90°, a head lying level with
/// the neck near 0° or 180°.
pub fn head_angle(nose: Point, neck: Point) -> Result<f64, GeometryError> {
    let dx = nose.x - neck.x;
    let dy = nose.y - neck.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::DegeneratePoints);
    }
    Ok(dy.atan2(dx).abs().to_degrees())
}

pub fn nose_ankle_distance(nose: Point, left_ankle: Point) -> f64 {
    euclidean(nose, left_ankle)
}

/// Relative change of `d_ankle` against `d_initial`, in percent.
pub fn percentage_change(d_ankle: f64, d_initial: f64) -> Result<f64, GeometryError> {
    if !(d_initial > 0.0) {
        return Err(GeometryError::ZeroBaseline(d_initial));
    }
    Ok(100.0 * (d_ankle / d_initial - 1.0))
}

pub fn head_displacement(initial: Point, current: Point) -> f64 {
    euclidean(initial, current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{LandmarkPoint, LANDMARK_COUNT};
    use approx::assert_abs_diff_eq;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn with_shoulders(left: Point, right: Point, vis: f64) -> PoseFrame {
        let mut lm = [LandmarkPoint::new(0.0, 0.0, 1.0); LANDMARK_COUNT];
        lm[11] = LandmarkPoint::new(left.x, left.y, vis);
        lm[12] = LandmarkPoint::new(right.x, right.y, 1.0);
        PoseFrame::new(0, lm)
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(p(0.0, 0.0), p(3.0, 4.0)), 5.0);
        assert_eq!(euclidean(p(7.0, -2.0), p(7.0, -2.0)), 0.0);
        // sqrt(60^2 + 72^2) at 40 digits
        assert_abs_diff_eq!(
            euclidean(p(100.0, 100.0), p(160.0, 172.0)),
            93.722_996_110_879_85,
            epsilon = 1e-12
        );
    }

    #[test]
    fn neck_is_shoulder_midpoint() {
        let f = with_shoulders(p(90.0, 120.0), p(110.0, 120.0), 1.0);
        assert_eq!(neck_point(&f, 0.5), Some(p(100.0, 120.0)));
        let f = with_shoulders(p(80.0, 115.0), p(130.0, 125.0), 1.0);
        assert_eq!(neck_point(&f, 0.5), Some(p(105.0, 120.0)));
        assert_eq!(neck_point(&PoseFrame::missing(0), 0.5), None);
        let hidden = with_shoulders(p(80.0, 115.0), p(130.0, 125.0), 0.2);
        assert_eq!(neck_point(&hidden, 0.5), None);
    }

    #[test]
    fn head_angle_examples() {
        assert_eq!(head_angle(p(100.0, 50.0), p(100.0, 100.0)).unwrap(), 90.0);
        assert_eq!(head_angle(p(150.0, 100.0), p(100.0, 100.0)).unwrap(), 0.0);
        assert_eq!(head_angle(p(50.0, 100.0), p(100.0, 100.0)).unwrap(), 180.0);
        // |atan2(-50, -10)| = 101.30993247402021...
        assert_abs_diff_eq!(
            head_angle(p(90.0, 50.0), p(100.0, 100.0)).unwrap(),
            101.309_932_474_020_21,
            epsilon = 1e-10
        );
        assert_eq!(
            head_angle(p(3.0, 3.0), p(3.0, 3.0)),
            Err(GeometryError::DegeneratePoints)
        );
    }

    #[test]
    fn ankle_distance_examples() {
        assert_eq!(nose_ankle_distance(p(0.0, 0.0), p(0.0, 137.28)), 137.28);
        assert_eq!(nose_ankle_distance(p(4.0, 4.0), p(4.0, 4.0)), 0.0);
        assert_eq!(nose_ankle_distance(p(50.0, 60.0), p(80.0, 20.0)), 50.0);
    }

    #[test]
    fn percentage_examples() {
        assert_abs_diff_eq!(percentage_change(31.89, 137.28).unwrap(), -76.77, epsilon = 0.01);
        assert_abs_diff_eq!(percentage_change(33.30, 140.87).unwrap(), -76.36, epsilon = 0.01);
        assert_abs_diff_eq!(percentage_change(31.89, 137.91).unwrap(), -76.88, epsilon = 0.01);
        assert_eq!(percentage_change(42.0, 42.0).unwrap(), 0.0);
        assert_eq!(percentage_change(0.0, 42.0).unwrap(), -100.0);
        assert_eq!(percentage_change(1.0, 0.0), Err(GeometryError::ZeroBaseline(0.0)));
        assert!(percentage_change(1.0, -3.0).is_err());
        assert!(percentage_change(1.0, f64::NAN).is_err());
    }

    #[test]
    fn displacement_examples() {
        assert_eq!(head_displacement(p(5.0, 5.0), p(5.0, 5.0)), 0.0);
        assert_eq!(head_displacement(p(100.0, 100.0), p(100.0, 200.0)), 100.0);
        assert_abs_diff_eq!(
            head_displacement(p(10.0, 20.0), p(70.0, 108.0)),
            106.508_215_645_554_78,
            epsilon = 1e-12
        );
    }
}

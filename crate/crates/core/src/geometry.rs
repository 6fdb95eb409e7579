//! 2-D points and the 68-point landmark numbering.
//!
//! Landmark numbers are 1-based throughout the public API: chin 1-17,
//! brows 18-27, nose 28-36, left eye 37-42, right eye 43-48, mouth 49-68.
//! "Left" means the image-left side (smaller x).

use serde::{Deserialize, Serialize};

pub const LANDMARK_COUNT: usize = 68;

pub const CHIN: std::ops::RangeInclusive<usize> = 1..=17;
pub const LEFT_BROW: std::ops::RangeInclusive<usize> = 18..=22;
pub const RIGHT_BROW: std::ops::RangeInclusive<usize> = 23..=27;
pub const LEFT_EYE: std::ops::RangeInclusive<usize> = 37..=42;
pub const RIGHT_EYE: std::ops::RangeInclusive<usize> = 43..=48;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates by `angle` radians (counter-clockwise in a y-up frame) about `center`.
    pub fn rotate_about(&self, center: Point, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        let dx = self.x - center.x;
        let dy = self.y - center.y;
        Point::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy)
    }
}

/// Centroid of a non-empty set of points.
pub fn centroid<'a, I: IntoIterator<Item = &'a Point>>(points: I) -> Point {
    let mut n = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    assert!(n > 0, "centroid of an empty point set");
    Point::new(sx / n as f64, sy / n as f64)
}

/// Mirror partner of each landmark under a left-right reflection of the face,
/// 1-based in and out.
pub fn mirror_index(landmark: usize) -> usize {
    MIRROR[landmark - 1]
}

#[rustfmt::skip]
const MIRROR: [usize; LANDMARK_COUNT] = [
    // chin 1-17
    17, 16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1,
    // brows 18-27
    27, 26, 25, 24, 23, 22, 21, 20, 19, 18,
    // nose bridge 28-31, lower nose 32-36
    28, 29, 30, 31, 36, 35, 34, 33, 32,
    // left eye 37-42
    46, 45, 44, 43, 48, 47,
    // right eye 43-48
    40, 39, 38, 37, 42, 41,
    // outer mouth 49-60
    55, 54, 53, 52, 51, 50, 49, 60, 59, 58, 57, 56,
    // inner mouth 61-68
    65, 64, 63, 62, 61, 68, 67, 66,
];

/// Reflects a full landmark set about the vertical line `x = axis` and
/// relabels every point with its mirror partner, so the result is again a
/// valid 68-point annotation of the mirrored face.
pub fn mirror_landmarks(points: &[Point], axis: f64) -> Vec<Point> {
    assert_eq!(points.len(), LANDMARK_COUNT);
    (1..=LANDMARK_COUNT)
        .map(|i| {
            let src = points[mirror_index(i) - 1];
            Point::new(2.0 * axis - src.x, src.y)
        })
        .collect()
}

/// Absolute polygon area by the shoelace formula.
pub fn polygon_area(points: &[Point]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, p) in points.iter().enumerate() {
        let q = &points[(i + 1) % points.len()];
        twice += p.x * q.y - q.x * p.y;
    }
    (twice / 2.0).abs()
}

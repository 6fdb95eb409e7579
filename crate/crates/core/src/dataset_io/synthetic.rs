//! Seeded synthetic cohorts with the clinical asymmetry patterns built in.
//!
//! Healthy faces are a mirror-symmetric template plus jitter. Peripheral
//! palsy droops one whole half-face (brow, lower lid and mouth corner);
//! central palsy droops only the mouth on one side.

use rand::Rng;

use super::{Cohort, Diagnosis, FaceBox, LandmarkSource, RawSample};
use crate::geometry::{mirror_index, Point, LANDMARK_COUNT};
use crate::seed::{derive_seed, rng};

/// Left-half template in a unit face frame (x right, y down). Points on the
/// midline are listed once; the right half is produced by mirroring.
#[rustfmt::skip]
const LEFT_HALF: &[(usize, f64, f64)] = &[
    // brow
    (18, 0.17, 0.300), (19, 0.23, 0.272), (20, 0.30, 0.262), (21, 0.37, 0.268), (22, 0.43, 0.285),
    // nose bridge and lower nose
    (28, 0.50, 0.360), (29, 0.50, 0.420), (30, 0.50, 0.480), (31, 0.50, 0.540),
    (32, 0.43, 0.600), (33, 0.465, 0.612), (34, 0.50, 0.620),
    // left eye
    (37, 0.25, 0.380), (38, 0.29, 0.355), (39, 0.34, 0.353), (40, 0.39, 0.380), (41, 0.34, 0.405), (42, 0.29, 0.407),
    // outer mouth
    (49, 0.36, 0.740), (50, 0.40, 0.712), (51, 0.46, 0.697), (52, 0.50, 0.703),
    (58, 0.50, 0.800), (59, 0.44, 0.792), (60, 0.395, 0.772),
    // inner mouth
    (61, 0.38, 0.740), (62, 0.44, 0.726), (63, 0.50, 0.726), (67, 0.50, 0.756), (68, 0.44, 0.756),
];

/// The symmetric template face in unit coordinates (axis `x = 0.5`).
pub fn template_face() -> Vec<Point> {
    let mut pts = vec![None; LANDMARK_COUNT];
    // chin: half ellipse through the jaw, 9 on the midline
    for i in 1..=9usize {
        let t = std::f64::consts::PI * (1.0 - (i - 1) as f64 / 16.0);
        pts[i - 1] = Some(Point::new(0.5 + 0.42 * t.cos(), 0.35 + 0.55 * t.sin()));
    }
    for &(i, x, y) in LEFT_HALF {
        pts[i - 1] = Some(Point::new(x, y));
    }
    for i in 1..=LANDMARK_COUNT {
        if pts[i - 1].is_none() {
            let m = pts[mirror_index(i) - 1].expect("left half defined");
            pts[i - 1] = Some(Point::new(1.0 - m.x, m.y));
        }
    }
    pts.into_iter().map(|p| p.expect("all landmarks defined")).collect()
}

const BROW: [usize; 5] = [18, 19, 20, 21, 22];
const LOWER_LID: [usize; 2] = [41, 42];
const MOUTH_SIDE: [(usize, f64, f64); 8] = [
    (49, 0.045, 0.015),
    (50, 0.030, 0.008),
    (60, 0.030, 0.008),
    (61, 0.030, 0.008),
    (51, 0.015, 0.0),
    (59, 0.015, 0.0),
    (62, 0.015, 0.0),
    (68, 0.015, 0.0),
];

fn side(i: usize, right: bool) -> usize {
    if right {
        mirror_index(i)
    } else {
        i
    }
}

fn deform(face: &mut [Point], label: Diagnosis, right: bool, severity: f64) {
    let toward_center = if right { -1.0 } else { 1.0 };
    if label == Diagnosis::Healthy {
        return;
    }
    for (i, dy, dx) in MOUTH_SIDE {
        let p = &mut face[side(i, right) - 1];
        p.y += dy * severity;
        p.x += toward_center * dx * severity;
    }
    if label == Diagnosis::Peripheral {
        for i in BROW {
            face[side(i, right) - 1].y += 0.045 * severity;
        }
        for i in LOWER_LID {
            face[side(i, right) - 1].y += 0.012 * severity;
        }
    }
}

fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn synth_sample(id: String, label: Diagnosis, seed: u64) -> RawSample {
    let mut r = rng(seed);
    let mut face = template_face();
    let right = r.gen_bool(0.5);
    let severity = r.gen_range(0.6..=1.0);
    deform(&mut face, label, right, severity);
    for p in &mut face {
        p.x += r.gen_range(-0.005..=0.005);
        p.y += r.gen_range(-0.005..=0.005);
    }

    let x0 = r.gen_range(20.0..400.0);
    let y0 = r.gen_range(20.0..400.0);
    let w = r.gen_range(300.0..600.0);
    let h = w * r.gen_range(1.05..1.25);
    let roll = r.gen_range(-6.0f64..6.0).to_radians();
    let top_left = Point::new(quantize(x0), quantize(y0));
    let bottom_right = Point::new(quantize(x0 + w), quantize(y0 + h));
    let face_box = FaceBox::new(top_left, bottom_right).expect("positive box");
    let center = Point::new(x0 + 0.5 * w, y0 + 0.5 * h);
    let landmarks = face
        .iter()
        .map(|u| {
            let p = Point::new(x0 + u.x * w, y0 + u.y * h).rotate_about(center, roll);
            // the template keeps a wide margin, so this only guards rounding
            Point::new(
                quantize(p.x).clamp(top_left.x, bottom_right.x),
                quantize(p.y).clamp(top_left.y, bottom_right.y),
            )
        })
        .collect();
    let source = if label == Diagnosis::Healthy { LandmarkSource::Automatic } else { LandmarkSource::Manual };
    RawSample::new(id, landmarks, face_box, label, source).expect("synthetic sample is valid")
}

/// Deterministic synthetic cohort: `n_p` peripheral, `n_c` central and
/// `n_h` healthy samples, in that order.
pub fn generate_synthetic_cohort(n_p: usize, n_c: usize, n_h: usize, seed: u64) -> Cohort {
    let mut samples = Vec::with_capacity(n_p + n_c + n_h);
    let mut stream = 0u64;
    for (label, n) in [(Diagnosis::Peripheral, n_p), (Diagnosis::Central, n_c), (Diagnosis::Healthy, n_h)] {
        for k in 0..n {
            let id = format!("syn-{}-{:04}", label.code(), k + 1);
            samples.push(synth_sample(id, label, derive_seed(seed, stream)));
            stream += 1;
        }
    }
    let provenance = format!("synthetic(p={n_p},c={n_c},h={n_h},seed={seed})");
    Cohort::new(samples, provenance).expect("generated ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mirror_landmarks;

    #[test]
    fn template_is_mirror_symmetric() {
        let t = template_face();
        let m = mirror_landmarks(&t, 0.5);
        for (a, b) in t.iter().zip(&m) {
            assert!(a.distance(b) < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn empty_cohort() {
        let c = generate_synthetic_cohort(0, 0, 0, 1);
        assert!(c.is_empty());
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(generate_synthetic_cohort(5, 3, 2, 7), generate_synthetic_cohort(5, 3, 2, 7));
        assert_ne!(generate_synthetic_cohort(5, 3, 2, 7), generate_synthetic_cohort(5, 3, 2, 8));
    }

    #[test]
    fn counts_and_containment() {
        let c = generate_synthetic_cohort(12, 5, 7, 3);
        assert_eq!(c.class_counts(), super::super::ClassCounts::new(12, 5, 7));
        for s in c.samples() {
            assert!(s.landmarks().iter().all(|p| s.face_box().contains(p)), "{}", s.id);
        }
    }

    #[test]
    fn central_keeps_upper_face_symmetric_before_jitter() {
        let mut f = template_face();
        deform(&mut f, Diagnosis::Central, false, 1.0);
        let t = template_face();
        for i in (18..=27).chain(37..=48) {
            assert_eq!(f[i - 1], t[i - 1]);
        }
        assert!(f[48].y > t[48].y);
    }
}

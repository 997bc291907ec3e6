//! Quaternion arithmetic and rotation distance measures.
//!
//! Rotations are stored as unit quaternions `(w, x, y, z)` with the
//! convention `w = cos(theta/2)`, `(x, y, z) = sin(theta/2) * axis`. The
//! stored form is canonical: `w >= 0`, ties broken by the first nonzero of
//! `x, y, z`. `q` and `-q` denote the same rotation and every distance here
//! is invariant to the sign flip.

use crate::error::{Error, Result};

/// Norm below which a raw 4-vector is rejected as a rotation.
pub const DEGENERATE_NORM_EPS: f64 = 1e-12;

/// A unit quaternion in canonical sign form.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    /// The identity rotation.
    pub const IDENTITY: Self = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes a raw `[w, x, y, z]` vector into a canonical unit quaternion.
    ///
    /// When the input is already unit to within 1e-12 the components are kept
    /// bit-exact (no renormalizing division), so serialized quaternions
    /// round-trip exactly.
    pub fn normalize(raw: [f64; 4]) -> Result<Self> {
        let ([w, x, y, z], _, _) = normalize_parts(&raw)?;
        Ok(UnitQuaternion { w, x, y, z })
    }

    fn canonicalized(self) -> Self {
        if canonical_flip(&[self.w, self.x, self.y, self.z]) {
            UnitQuaternion {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components as `[w, x, y, z]`.
    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Quaternion from an axis-angle pair. The axis need not be unit length.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let len = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(len > 0.0) {
            return Err(Error::DegenerateAxis);
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(UnitQuaternion {
            w: c,
            x: s * axis[0] / len,
            y: s * axis[1] / len,
            z: s * axis[2] / len,
        }
        .canonicalized())
    }

    /// Rotation composition `self ∘ rhs` ("apply rhs, then self"); agrees
    /// with the 3x3 rotation-matrix product.
    pub fn compose(self, rhs: Self) -> Self {
        let [w, x, y, z] = hamilton(&self.components(), &rhs.components());
        UnitQuaternion { w, x, y, z }.canonicalized()
    }

    /// Inverse rotation (conjugate for unit quaternions).
    pub fn inverse(self) -> Self {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .canonicalized()
    }

    pub fn dot(&self, rhs: &Self) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let vn = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * vn.atan2(self.w.abs())
    }

    /// 3x3 rotation matrix (row-major).
    pub fn to_rotation_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Quaternion from a rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &[[f64; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[2][1] - m[1][2]) / s;
            y = (m[0][2] - m[2][0]) / s;
            z = (m[1][0] - m[0][1]) / s;
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            w = (m[2][1] - m[1][2]) / s;
            x = 0.25 * s;
            y = (m[0][1] + m[1][0]) / s;
            z = (m[0][2] + m[2][0]) / s;
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            w = (m[0][2] - m[2][0]) / s;
            x = (m[0][1] + m[1][0]) / s;
            y = 0.25 * s;
            z = (m[1][2] + m[2][1]) / s;
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            w = (m[1][0] - m[0][1]) / s;
            x = (m[0][2] + m[2][0]) / s;
            y = (m[1][2] + m[2][1]) / s;
            z = 0.25 * s;
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
        .canonicalized()
    }

    /// Axis-angle (rotation vector) log map; magnitude in `[0, pi]`.
    pub fn log(&self) -> [f64; 3] {
        let q = self.canonicalized();
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if vn < 1e-12 {
            // First-order expansion around the identity.
            let scale = 2.0 / q.w;
            return [scale * q.x, scale * q.y, scale * q.z];
        }
        let theta = 2.0 * vn.atan2(q.w);
        let scale = theta / vn;
        [scale * q.x, scale * q.y, scale * q.z]
    }

    /// Exponential map of a rotation vector.
    pub fn exp(v: [f64; 3]) -> Self {
        let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (w, s) = if theta < 1e-8 {
            // sin(t/2)/t -> 1/2 - t^2/48
            (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
        } else {
            ((theta / 2.0).cos(), (theta / 2.0).sin() / theta)
        };
        UnitQuaternion::normalize([w, s * v[0], s * v[1], s * v[2]])
            .expect("exp map always yields a valid quaternion")
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Hamilton product on raw `[w, x, y, z]` components. Shared with the
/// differentiable kernels so taped and untaped paths agree bit-for-bit.
pub(crate) fn hamilton(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// Canonical-sign rule: flip when `w < 0`, tie broken by the first nonzero
/// of `x, y, z`.
pub(crate) fn canonical_flip(q: &[f64; 4]) -> bool {
    for c in q {
        if *c != 0.0 {
            return *c < 0.0;
        }
    }
    false
}

/// Normalization used by both [`UnitQuaternion::normalize`] and the
/// differentiable normalize kernel: returns the canonical components, the
/// input norm, and whether the sign was flipped. Inputs already unit to
/// within 1e-12 are kept bit-exact.
pub(crate) fn normalize_parts(raw: &[f64; 4]) -> Result<([f64; 4], f64, bool)> {
    let norm_sq: f64 = raw.iter().map(|c| c * c).sum();
    let norm = norm_sq.sqrt();
    if !(norm > DEGENERATE_NORM_EPS) {
        return Err(Error::DegenerateQuaternion {
            norm,
            eps: DEGENERATE_NORM_EPS,
        });
    }
    let mut q = if (norm_sq - 1.0).abs() < 1e-12 {
        *raw
    } else {
        [raw[0] / norm, raw[1] / norm, raw[2] / norm, raw[3] / norm]
    };
    let flipped = canonical_flip(&q);
    if flipped {
        for c in &mut q {
            *c = -*c;
        }
    }
    Ok((q, norm, flipped))
}

/// Angular (geodesic) distance between two rotations, in `[0, pi]` radians.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct AngularDistance {
    radians: f64,
}

impl AngularDistance {
    pub fn from_radians(radians: f64) -> Self {
        debug_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&radians));
        AngularDistance { radians }
    }

    pub fn radians(&self) -> f64 {
        self.radians
    }

    pub fn degrees(&self) -> f64 {
        self.radians.to_degrees()
    }
}

/// Geodesic distance: the angle of the rotation taking `a` to `b`.
///
/// Computed from the relative quaternion via `atan2`, which stays well
/// conditioned at both ends of `[0, pi]`.
pub fn geodesic_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> AngularDistance {
    let rel = a.inverse().compose(*b);
    AngularDistance::from_radians(rel.angle())
}

/// Chordal distance: Frobenius norm of the rotation-matrix difference.
///
/// Satisfies `d_C = 2*sqrt(2)*sin(d_theta/2)`.
pub fn chordal_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let ma = a.to_rotation_matrix();
    let mb = b.to_rotation_matrix();
    let mut sum = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            let d = ma[r][c] - mb[r][c];
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// Quaternion distance: `min(|q_a - q_b|, |q_a + q_b|)`, sign-flip invariant
/// by construction. Satisfies `d_Q = 2*sin(d_theta/4)`.
pub fn quaternion_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let pa = a.components();
    let pb = b.components();
    let mut minus = 0.0;
    let mut plus = 0.0;
    for i in 0..4 {
        let dm = pa[i] - pb[i];
        let dp = pa[i] + pb[i];
        minus += dm * dm;
        plus += dp * dp;
    }
    minus.sqrt().min(plus.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    use crate::synth::random_rotation;

    fn rot(axis: [f64; 3], deg: f64) -> UnitQuaternion {
        UnitQuaternion::from_axis_angle(axis, deg.to_radians()).unwrap()
    }

    fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                for k in 0..3 {
                    out[r][c] += a[r][k] * b[k][c];
                }
            }
        }
        out
    }

    #[test]
    fn normalize_scales_and_canonicalizes() {
        let q = UnitQuaternion::normalize([2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.components(), [1.0, 0.0, 0.0, 0.0]);
        let q = UnitQuaternion::normalize([-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.components(), [1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            UnitQuaternion::normalize([0.0; 4]),
            Err(Error::DegenerateQuaternion { .. })
        ));
    }

    #[test]
    fn canonical_sign_tie_break() {
        let q = UnitQuaternion::normalize([0.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(q.components(), [0.0, 1.0, 0.0, 0.0]);
        let q = UnitQuaternion::normalize([0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(q.components(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let id = UnitQuaternion::IDENTITY.compose(q);
            assert!(quaternion_distance(&id, &q) < 1e-15);
            let round = q.compose(q.inverse());
            assert!(geodesic_distance(&round, &UnitQuaternion::IDENTITY).radians() < 1e-9);
        }
    }

    #[test]
    fn compose_matches_matrix_product_oracle() {
        // rot(z,90) ∘ rot(z,90) = rot(z,180), checked through matrices.
        let a = rot([0.0, 0.0, 1.0], 90.0);
        let prod = a.compose(a);
        let oracle = UnitQuaternion::from_rotation_matrix(&mat_mul(
            &a.to_rotation_matrix(),
            &a.to_rotation_matrix(),
        ));
        assert!(quaternion_distance(&prod, &oracle) < 1e-12);
        assert!(quaternion_distance(&prod, &rot([0.0, 0.0, 1.0], 180.0)) < 1e-12);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let prod = a.compose(b);
            let oracle = UnitQuaternion::from_rotation_matrix(&mat_mul(
                &a.to_rotation_matrix(),
                &b.to_rotation_matrix(),
            ));
            assert!(quaternion_distance(&prod, &oracle) < 1e-12);
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            UnitQuaternion::IDENTITY.inverse().components(),
            [1.0, 0.0, 0.0, 0.0]
        );
        let q = rot([1.0, 0.0, 0.0], 90.0);
        let qi = rot([1.0, 0.0, 0.0], -90.0);
        assert!(quaternion_distance(&q.inverse(), &qi) < 1e-15);
    }

    #[test]
    fn geodesic_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = random_rotation(&mut rng);
        assert!(geodesic_distance(&q, &q).radians() < 1e-12);
        // q and -q are the same rotation; normalize(-q) is q again, so check
        // sign-flip invariance at the raw component level.
        let neg = UnitQuaternion::normalize(q.components().map(|c| -c)).unwrap();
        assert!(geodesic_distance(&q, &neg).radians() < 1e-12);

        // d(identity, rot(x,180)) = pi, against the matrix trace oracle.
        let half_turn = rot([1.0, 0.0, 0.0], 180.0);
        let d = geodesic_distance(&UnitQuaternion::IDENTITY, &half_turn).radians();
        let m = half_turn.to_rotation_matrix();
        let trace = m[0][0] + m[1][1] + m[2][2];
        let oracle = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        assert_abs_diff_eq!(d, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-7);
    }

    #[test]
    fn distance_identities_at_half_turn() {
        let a = UnitQuaternion::IDENTITY;
        let b = rot([0.0, 1.0, 0.0], 180.0);
        assert_abs_diff_eq!(chordal_distance(&a, &b), 2.0 * 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(quaternion_distance(&a, &b), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn distance_identities_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let theta = geodesic_distance(&a, &b).radians();
            let dc = chordal_distance(&a, &b);
            let dq = quaternion_distance(&a, &b);
            assert_abs_diff_eq!(dc, 2.0 * 2.0_f64.sqrt() * (theta / 2.0).sin(), epsilon = 1e-9);
            assert_abs_diff_eq!(dq, 2.0 * (theta / 4.0).sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn axis_angle_examples() {
        let q = UnitQuaternion::from_axis_angle([0.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(q.components(), [1.0, 0.0, 0.0, 0.0]);
        let q = UnitQuaternion::from_axis_angle([0.0, 0.0, 1.0], PI).unwrap();
        assert!(quaternion_distance(&q, &UnitQuaternion::normalize([0.0, 0.0, 0.0, 1.0]).unwrap()) < 1e-15);
        assert!(matches!(
            UnitQuaternion::from_axis_angle([0.0; 3], 1.0),
            Err(Error::DegenerateAxis)
        ));
    }

    #[test]
    fn matrix_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let q = random_rotation(&mut rng);
            let back = UnitQuaternion::from_rotation_matrix(&q.to_rotation_matrix());
            assert!(quaternion_distance(&q, &back) < 1e-9);
        }
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let q = random_rotation(&mut rng);
            let back = UnitQuaternion::exp(q.log());
            assert!(geodesic_distance(&q, &back).radians() < 1e-9);
        }
        // Near-identity branch.
        let tiny = UnitQuaternion::exp([1e-13, -2e-13, 5e-14]);
        let v = tiny.log();
        assert_abs_diff_eq!(v[0], 1e-13, epsilon = 1e-16);
    }

    fn arb_unit_quaternion() -> impl Strategy<Value = UnitQuaternion> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
        )
            .prop_filter_map("norm too small", |(w, x, y, z)| {
                UnitQuaternion::normalize([w, x, y, z]).ok()
            })
    }

    proptest! {
        #[test]
        fn prop_chordal_identity(a in arb_unit_quaternion(), b in arb_unit_quaternion()) {
            let theta = geodesic_distance(&a, &b).radians();
            prop_assert!((chordal_distance(&a, &b) - 2.0 * 2.0_f64.sqrt() * (theta / 2.0).sin()).abs() < 1e-9);
        }

        #[test]
        fn prop_quaternion_identity(a in arb_unit_quaternion(), b in arb_unit_quaternion()) {
            let theta = geodesic_distance(&a, &b).radians();
            prop_assert!((quaternion_distance(&a, &b) - 2.0 * (theta / 4.0).sin()).abs() < 1e-9);
        }

        #[test]
        fn prop_compose_associative(
            a in arb_unit_quaternion(),
            b in arb_unit_quaternion(),
            c in arb_unit_quaternion(),
        ) {
            let left = a.compose(b).compose(c);
            let right = a.compose(b.compose(c));
            prop_assert!(quaternion_distance(&left, &right) < 1e-9);
        }

        #[test]
        fn prop_distances_bi_invariant(
            a in arb_unit_quaternion(),
            b in arb_unit_quaternion(),
            s in arb_unit_quaternion(),
        ) {
            let theta = geodesic_distance(&a, &b).radians();
            prop_assert!((geodesic_distance(&s.compose(a), &s.compose(b)).radians() - theta).abs() < 1e-9);
            prop_assert!((geodesic_distance(&a.compose(s), &b.compose(s)).radians() - theta).abs() < 1e-9);
            let dc = chordal_distance(&a, &b);
            prop_assert!((chordal_distance(&s.compose(a), &s.compose(b)) - dc).abs() < 1e-9);
            prop_assert!((chordal_distance(&a.compose(s), &b.compose(s)) - dc).abs() < 1e-9);
            let dq = quaternion_distance(&a, &b);
            prop_assert!((quaternion_distance(&s.compose(a), &s.compose(b)) - dq).abs() < 1e-9);
            prop_assert!((quaternion_distance(&a.compose(s), &b.compose(s)) - dq).abs() < 1e-9);
        }
    }
}

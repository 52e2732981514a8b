//! Exponential maps, rotation matrices and Tait-Bryan angles.
//!
//! Matrices are row-major `[[f64; 3]; 3]` acting on column vectors.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Below this angle Rodrigues' coefficients are evaluated by their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// How close the middle Euler angle must be to ±π/2 to take the gimbal-lock branch.
pub const GIMBAL_TOLERANCE: f64 = 1e-7;

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        [Axis::X, Axis::Y, Axis::Z][i]
    }
}

/// Three distinct axes; angles `(a, b, c)` mean `R = R_0(a) * R_1(b) * R_2(c)`,
/// the same composition order in which BVH lists its rotation channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EulerOrder([Axis; 3]);

impl EulerOrder {
    pub const XYZ: EulerOrder = EulerOrder([Axis::X, Axis::Y, Axis::Z]);
    pub const XZY: EulerOrder = EulerOrder([Axis::X, Axis::Z, Axis::Y]);
    pub const YXZ: EulerOrder = EulerOrder([Axis::Y, Axis::X, Axis::Z]);
    pub const YZX: EulerOrder = EulerOrder([Axis::Y, Axis::Z, Axis::X]);
    pub const ZXY: EulerOrder = EulerOrder([Axis::Z, Axis::X, Axis::Y]);
    pub const ZYX: EulerOrder = EulerOrder([Axis::Z, Axis::Y, Axis::X]);

    pub const ALL: [EulerOrder; 6] = [Self::XYZ, Self::XZY, Self::YXZ, Self::YZX, Self::ZXY, Self::ZYX];

    /// `None` unless the three axes are distinct.
    pub fn new(axes: [Axis; 3]) -> Option<Self> {
        let [a, b, c] = axes;
        (a != b && b != c && a != c).then_some(EulerOrder(axes))
    }

    pub fn axes(self) -> [Axis; 3] {
        self.0
    }

    /// +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    fn parity(self) -> f64 {
        let [i, j, _] = self.0.map(Axis::index);
        if (i + 1) % 3 == j {
            1.0
        } else {
            -1.0
        }
    }
}

impl std::fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for a in self.0 {
            f.write_str(match a {
                Axis::X => "X",
                Axis::Y => "Y",
                Axis::Z => "Z",
            })?;
        }
        Ok(())
    }
}

impl From<EulerOrder> for String {
    fn from(o: EulerOrder) -> String {
        o.to_string()
    }
}

impl TryFrom<String> for EulerOrder {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let axes: Vec<Axis> = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(Axis::X),
                'Y' => Ok(Axis::Y),
                'Z' => Ok(Axis::Z),
                _ => Err(format!("bad axis {c:?} in euler order {s:?}")),
            })
            .collect::<Result<_, _>>()?;
        let axes: [Axis; 3] = axes
            .try_into()
            .map_err(|_| format!("euler order {s:?} must have three axes"))?;
        EulerOrder::new(axes).ok_or_else(|| format!("euler order {s:?} repeats an axis"))
    }
}

pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Right-handed rotation by `angle` radians about a coordinate axis.
pub fn axis_rotation(axis: Axis, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

pub fn euler_to_rotmat(angles: Vec3, order: EulerOrder) -> Mat3 {
    let [a, b, c] = order.axes();
    matmul(
        &matmul(&axis_rotation(a, angles[0]), &axis_rotation(b, angles[1])),
        &axis_rotation(c, angles[2]),
    )
}

/// Inverse of [`euler_to_rotmat`]. The middle angle lies in [-π/2, π/2].
///
/// At gimbal lock only the sum (or difference) of the outer angles is
/// observable; the third angle is then set to exactly 0.
pub fn rotmat_to_euler(r: &Mat3, order: EulerOrder) -> Vec3 {
    let [i, j, k] = order.axes().map(Axis::index);
    let s = order.parity();
    let sin_b = s * r[i][k];
    let cos_b = (r[i][i] * r[i][i] + r[i][j] * r[i][j]).sqrt();
    let b = sin_b.atan2(cos_b);
    if (b.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_TOLERANCE {
        let a = (s * r[k][j]).atan2(r[j][j]);
        return [a, b, 0.0];
    }
    let a = (-s * r[j][k]).atan2(r[k][k]);
    let c = (-s * r[i][j]).atan2(r[i][i]);
    [a, b, c]
}

fn hat(v: Vec3) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

/// Rodrigues' formula `I + A K + B K^2` with `K = hat(v)`.
pub fn expmap_to_rotmat(v: Vec3) -> Mat3 {
    let theta2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(v);
    let k2 = matmul(&k, &k);
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Unit quaternion `(w, x, y, z)` with `w >= 0`, via Shepperd's method.
pub fn rotmat_to_quaternion(r: &Mat3) -> [f64; 4] {
    let trace = r[0][0] + r[1][1] + r[2][2];
    let q = if trace > r[0][0].max(r[1][1]).max(r[2][2]) {
        let s = 2.0 * (1.0 + trace).sqrt();
        [
            0.25 * s,
            (r[2][1] - r[1][2]) / s,
            (r[0][2] - r[2][0]) / s,
            (r[1][0] - r[0][1]) / s,
        ]
    } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
        let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
        [
            (r[2][1] - r[1][2]) / s,
            0.25 * s,
            (r[0][1] + r[1][0]) / s,
            (r[0][2] + r[2][0]) / s,
        ]
    } else if r[1][1] >= r[2][2] {
        let s = 2.0 * (1.0 - r[0][0] + r[1][1] - r[2][2]).sqrt();
        [
            (r[0][2] - r[2][0]) / s,
            (r[0][1] + r[1][0]) / s,
            0.25 * s,
            (r[1][2] + r[2][1]) / s,
        ]
    } else {
        let s = 2.0 * (1.0 - r[0][0] - r[1][1] + r[2][2]).sqrt();
        [
            (r[1][0] - r[0][1]) / s,
            (r[0][2] + r[2][0]) / s,
            (r[1][2] + r[2][1]) / s,
            0.25 * s,
        ]
    };
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
    q.map(|x| sign * x / norm)
}

/// Logarithm of a rotation: axis times angle, with angle in [0, π].
pub fn rotmat_to_expmap(r: &Mat3) -> Vec3 {
    let [w, x, y, z] = rotmat_to_quaternion(r);
    let n = (x * x + y * y + z * z).sqrt();
    let scale = if n < SMALL_ANGLE {
        // angle = 2 atan(n / w) ~ 2n / w for tiny n
        2.0 / w
    } else {
        2.0 * n.atan2(w) / n
    };
    [x * scale, y * scale, z * scale]
}

/// Angle of `a^T b`, computed from the chordal distance for accuracy at small angles.
pub fn geodesic_distance(a: &Mat3, b: &Mat3) -> f64 {
    let mut sq = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a[i][j] - b[i][j];
            sq += d * d;
        }
    }
    2.0 * (sq.sqrt() / (2.0 * std::f64::consts::SQRT_2)).min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() < tol))
    }

    #[test]
    fn zero_expmap_is_identity() {
        assert_eq!(expmap_to_rotmat([0.0; 3]), IDENTITY);
        assert_eq!(rotmat_to_expmap(&IDENTITY), [0.0; 3]);
    }

    #[test]
    fn quarter_turn_about_x() {
        let r = expmap_to_rotmat([FRAC_PI_2, 0.0, 0.0]);
        let want = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        assert!(close(&r, &want, 1e-15));
    }

    #[test]
    fn identity_to_euler_is_zero() {
        for order in EulerOrder::ALL {
            assert_eq!(rotmat_to_euler(&IDENTITY, order), [0.0; 3]);
        }
    }

    #[test]
    fn gimbal_lock_zeroes_third_angle() {
        for order in EulerOrder::ALL {
            for b in [FRAC_PI_2, -FRAC_PI_2] {
                let r = euler_to_rotmat([0.3, b, -0.7], order);
                let e = rotmat_to_euler(&r, order);
                assert_eq!(e[2], 0.0, "{order}");
                assert!(close(&euler_to_rotmat(e, order), &r, 1e-9), "{order}");
            }
        }
    }

    #[test]
    fn half_turn_log() {
        let v = [0.0, std::f64::consts::PI, 0.0];
        let back = rotmat_to_expmap(&expmap_to_rotmat(v));
        assert!((back[1].abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn order_string_round_trip() {
        for order in EulerOrder::ALL {
            assert_eq!(EulerOrder::try_from(order.to_string()), Ok(order));
        }
        assert!(EulerOrder::try_from("XXY".to_string()).is_err());
    }
}

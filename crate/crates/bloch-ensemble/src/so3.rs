//! Rotation generators and the closed-form exponential on so(3).

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Generator of rotations about x: `Ω_x v = e_x × v`.
pub fn omega_x() -> Mat3 {
    hat(&Vec3::x())
}

pub fn omega_y() -> Mat3 {
    hat(&Vec3::y())
}

pub fn omega_z() -> Mat3 {
    hat(&Vec3::z())
}

/// Cross-product matrix of `a`, i.e. `a_x Ω_x + a_y Ω_y + a_z Ω_z`.
pub fn hat(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rotation about `axis / |axis|` by the angle `|axis|` (Rodrigues).
pub fn so3_exp(axis: &Vec3) -> Mat3 {
    let theta = axis.norm();
    let k = hat(axis);
    let (s, c) = if theta < 1e-8 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / (theta * theta))
    };
    Mat3::identity() + k * s + k * k * c
}

/// Rotation about z by `angle`, written out to avoid the general formula.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotate_about_z(m: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * m.x - s * m.y, s * m.x + c * m.y, m.z)
}

//! Minimal 3-vector helpers over `[f64; 3]`.
//!
//! All geometry in the workspace is plain Cartesian points in meters; a full
//! linear-algebra crate would be overkill for component-wise arithmetic and
//! Euclidean norms.

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Affine interpolation `(1 - alpha) * a + alpha * b`.
pub fn lerp(a: Vec3, b: Vec3, alpha: f64) -> Vec3 {
    [
        (1.0 - alpha) * a[0] + alpha * b[0],
        (1.0 - alpha) * a[1] + alpha * b[1],
        (1.0 - alpha) * a[2] + alpha * b[2],
    ]
}

/// Clamp each component of `a` to `[-limit, limit]`.
pub fn clamp_components(a: Vec3, limit: f64) -> Vec3 {
    [
        a[0].clamp(-limit, limit),
        a[1].clamp(-limit, limit),
        a[2].clamp(-limit, limit),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lerp_endpoints() {
        let a = [1.0, 2.0, 3.0];
        let b = [-1.0, 0.0, 5.0];
        assert_eq!(lerp(a, b, 0.0), a);
        assert_eq!(lerp(a, b, 1.0), b);
    }

    #[test]
    fn dist_is_euclidean() {
        assert_eq!(dist([0.0, 0.0, 0.0], [3.0, 4.0, 0.0]), 5.0);
    }

    #[test]
    fn clamp_limits_each_component() {
        assert_eq!(
            clamp_components([0.5, -0.5, 0.01], 0.1),
            [0.1, -0.1, 0.01]
        );
    }
}

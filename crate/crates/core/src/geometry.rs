//! 3-vector helpers; positions are meters.

pub type Vec3 = [f64; 3];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

pub fn lerp(a: Vec3, b: Vec3, f: f64) -> Vec3 {
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])]
}

pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
    lerp(a, b, 0.5)
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn distance_to_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    if len2 == 0.0 {
        return distance(p, a);
    }
    let ap = sub(p, a);
    let t = ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0);
    distance(p, lerp(a, b, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance() {
        let (a, b) = ([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert_eq!(distance_to_segment([0.0, 0.0, 0.5], a, b), 0.0);
        assert_eq!(distance_to_segment([3.0, 0.0, 0.5], a, b), 3.0);
        assert_eq!(distance_to_segment([0.0, 0.0, 3.0], a, b), 2.0);
        assert_eq!(midpoint(a, [0.0, 0.0, 0.1]), [0.0, 0.0, 0.05]);
    }
}

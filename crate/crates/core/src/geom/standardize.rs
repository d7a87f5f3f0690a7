use serde::{Deserialize, Serialize};

use super::{GeomError, Vec3};

/// Translation and scale applied by [`standardize`]; `original = p * scale + center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub center: Vec3,
    pub scale: f64,
}

impl StandardizeRecord {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) * (1.0 / self.scale)
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        p * self.scale + self.center
    }
}

/// Moves the center of mass to the origin and divides by the population standard
/// deviation of the point distances to that center.
pub fn standardize(points: &[Vec3]) -> Result<(Vec<Vec3>, StandardizeRecord), GeomError> {
    let n = points.len();
    if n < 2 {
        return Err(GeomError::TooFewPoints { need: 2, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let center = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) * inv_n;
    let dists: Vec<f64> = points.iter().map(|&p| p.distance(center)).collect();
    let mean = dists.iter().sum::<f64>() * inv_n;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() * inv_n;
    let scale = var.sqrt();
    if !(scale >= 1e-12) {
        return Err(GeomError::DegenerateScale(scale));
    }
    let record = StandardizeRecord { center, scale };
    Ok((points.iter().map(|&p| record.apply(p)).collect(), record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_collinear_points() {
        let pts = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0), Vec3::new(6.0, 0.0, 0.0)];
        let (out, rec) = standardize(&pts).unwrap();
        assert_eq!(rec.center, Vec3::new(3.0, 0.0, 0.0));
        assert!((rec.scale - 2f64.sqrt()).abs() < 1e-15);
        let s = 3.0 / 2f64.sqrt();
        for (o, e) in out.iter().zip([-s, 0.0, s]) {
            assert!((o.x - e).abs() < 1e-14 && o.y == 0.0 && o.z == 0.0);
        }
    }

    #[test]
    fn symmetric_pair_is_degenerate() {
        let pts = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert!(matches!(standardize(&pts), Err(GeomError::DegenerateScale(_))));
        assert!(matches!(standardize(&pts[..1]), Err(GeomError::TooFewPoints { .. })));
    }

    fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
        let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
                }
            }
            r
        };
        mul(rz, mul(ry, rx))
    }

    fn rotate(r: &[[f64; 3]; 3], p: Vec3) -> Vec3 {
        let a = p.to_array();
        Vec3::new(
            r[0][0] * a[0] + r[0][1] * a[1] + r[0][2] * a[2],
            r[1][0] * a[0] + r[1][1] * a[1] + r[1][2] * a[2],
            r[2][0] * a[0] + r[2][1] * a[1] + r[2][2] * a[2],
        )
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 5..40)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn idempotent(pts in cloud()) {
            if let Ok((once, _)) = standardize(&pts) {
                let (twice, rec) = standardize(&once).unwrap();
                prop_assert!((rec.scale - 1.0).abs() < 1e-10);
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!(a.distance(*b) < 1e-10);
                }
            }
        }

        #[test]
        fn rotation_equivariant(pts in cloud(), a in 0.0..6.3f64, b in 0.0..6.3f64, c in 0.0..6.3f64) {
            let r = rotation(a, b, c);
            if let Ok((base, _)) = standardize(&pts) {
                let rotated: Vec<Vec3> = pts.iter().map(|&p| rotate(&r, p)).collect();
                let (out, _) = standardize(&rotated).unwrap();
                for (o, p) in out.iter().zip(&base) {
                    prop_assert!(o.distance(rotate(&r, *p)) < 1e-10);
                }
            }
        }
    }
}

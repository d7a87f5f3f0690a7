//! Analytic test shapes and the swept-tube builder used by the synthetic generator.

use std::collections::BTreeMap;

use super::{TriangleMesh, Vec3};

/// Unit sphere by recursive subdivision of an icosahedron; `10·4^s + 2` vertices.
pub fn icosphere(subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pos: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, pos: &mut Vec<Vec3>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                pos.push(((pos[a] + pos[b]) * 0.5).normalized().unwrap());
                pos.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut pos);
            let bc = midpoint(b, c, &mut pos);
            let ca = midpoint(c, a, &mut pos);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(pos, faces).expect("icosphere is valid")
}

/// Planar grid of `nx × ny` vertices covering `[0, width] × [0, height]` in z = 0.
pub fn flat_grid(nx: usize, ny: usize, width: f64, height: f64) -> TriangleMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut pos = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            pos.push(Vec3::new(
                width * i as f64 / (nx - 1) as f64,
                height * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = j * nx + i;
            // alternate the diagonal to avoid a directional bias
            if (i + j) % 2 == 0 {
                faces.push([v, v + 1, v + nx + 1]);
                faces.push([v, v + nx + 1, v + nx]);
            } else {
                faces.push([v, v + 1, v + nx]);
                faces.push([v + 1, v + nx + 1, v + nx]);
            }
        }
    }
    TriangleMesh::new(pos, faces).expect("grid is valid")
}

/// Fibonacci-lattice samples of the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Sweeps circles of the given radii along a polyline using parallel-transported
/// frames. Rings are `n_around` vertices; vertex `ring * n_around + k`.
pub fn sweep_tube(centerline: &[Vec3], radii: &[f64], n_around: usize) -> TriangleMesh {
    assert!(centerline.len() >= 2 && radii.len() == centerline.len() && n_around >= 3);
    let m = centerline.len();
    let tangent = |i: usize| -> Vec3 {
        let (a, b) = if i == 0 {
            (centerline[0], centerline[1])
        } else if i == m - 1 {
            (centerline[m - 2], centerline[m - 1])
        } else {
            (centerline[i - 1], centerline[i + 1])
        };
        (b - a).normalized().expect("centerline has repeated points")
    };
    let t0 = tangent(0);
    let helper = if t0.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let mut normal = t0.cross(helper).normalized().unwrap();
    let mut pos = Vec::with_capacity(m * n_around);
    for i in 0..m {
        let t = tangent(i);
        // transport the normal by projecting out the new tangent
        normal = (normal - t * normal.dot(t)).normalized().unwrap_or(normal);
        let binormal = t.cross(normal);
        for k in 0..n_around {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n_around as f64;
            pos.push(centerline[i] + (normal * a.cos() + binormal * a.sin()) * radii[i]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (m - 1) * n_around);
    for i in 0..m - 1 {
        for k in 0..n_around {
            let a = i * n_around + k;
            let b = i * n_around + (k + 1) % n_around;
            let c = a + n_around;
            let d = b + n_around;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriangleMesh::new(pos, faces).expect("tube is valid")
}

/// Straight open cylinder along +z.
pub fn open_cylinder(n_around: usize, n_rings: usize, radius: f64, length: f64) -> TriangleMesh {
    let line: Vec<Vec3> = (0..n_rings)
        .map(|i| Vec3::new(0.0, 0.0, length * i as f64 / (n_rings - 1) as f64))
        .collect();
    sweep_tube(&line, &vec![radius; n_rings], n_around)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for s in 0..4 {
            let m = icosphere(s);
            assert_eq!(m.positions.len(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.faces.len(), 20 * 4usize.pow(s));
            let euler = m.positions.len() as i64 - m.edges().len() as i64 + m.faces.len() as i64;
            assert_eq!(euler, 2);
        }
    }

    #[test]
    fn icosphere_faces_point_outward() {
        let m = icosphere(2);
        for f in 0..m.faces.len() {
            let [a, b, c] = m.face_positions(f);
            assert!(m.face_cross(f).dot(a + b + c) > 0.0);
        }
    }

    #[test]
    fn tube_faces_point_outward() {
        let m = open_cylinder(12, 5, 1.0, 2.0);
        for f in 0..m.faces.len() {
            let [a, b, c] = m.face_positions(f);
            let centroid = (a + b + c) * (1.0 / 3.0);
            let radial = Vec3::new(centroid.x, centroid.y, 0.0);
            assert!(m.face_cross(f).dot(radial) > 0.0);
        }
    }
}

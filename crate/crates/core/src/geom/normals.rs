use super::{GeomError, TriangleMesh, Vec3};

/// Area-weighted vertex normals (sum of incident face cross products, normalized).
pub fn vertex_normals(mesh: &TriangleMesh) -> Result<Vec<Vec3>, GeomError> {
    if mesh.faces.is_empty() {
        return Err(GeomError::NoFaces);
    }
    let mut acc = vec![Vec3::ZERO; mesh.vertex_count()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = mesh.face_cross(f);
        for &v in face {
            acc[v] = acc[v] + c;
        }
    }
    let mut bad = Vec::new();
    let normals: Vec<Vec3> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            a.normalized().unwrap_or_else(|| {
                bad.push(i);
                Vec3::ZERO
            })
        })
        .collect();
    if bad.is_empty() {
        Ok(normals)
    } else {
        Err(GeomError::ZeroNormal {
            count: bad.len(),
            first: bad.into_iter().take(16).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::primitives::icosphere;

    fn tri(faces: Vec<[usize; 3]>) -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            faces,
        )
        .unwrap()
    }

    #[test]
    fn planar_triangle_and_flipped_winding() {
        for n in vertex_normals(&tri(vec![[0, 1, 2]])).unwrap() {
            assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
        }
        for n in vertex_normals(&tri(vec![[0, 2, 1]])).unwrap() {
            assert_eq!(n, Vec3::new(0.0, 0.0, -1.0));
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(4);
        for (n, p) in vertex_normals(&m).unwrap().iter().zip(&m.positions) {
            let radial = p.normalized().unwrap();
            assert!(n.dot(radial).clamp(-1.0, 1.0).acos() < 1e-2);
        }
    }

    #[test]
    fn isolated_vertex_is_reported() {
        let mut m = tri(vec![[0, 1, 2]]);
        m.positions.push(Vec3::new(5.0, 5.0, 5.0));
        match vertex_normals(&m) {
            Err(GeomError::ZeroNormal { count, first }) => {
                assert_eq!(count, 1);
                assert_eq!(first, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

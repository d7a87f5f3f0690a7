//! Geodesic distance on triangle meshes by the heat method: diffuse heat from
//! the sources for a short time, normalize its gradient, and recover the
//! distance by a Poisson solve.

use thiserror::Error;

use crate::geom::{TriangleMesh, Vec3};
use crate::sparse::{solve_spd_with, CgOptions, EnvelopeCholesky, LinalgError};
use crate::spectral::{cotan_laplacian, LaplacianPair, SpectralError};

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("face {face} has area {area:e} below 1e-14")]
    DegenerateFace { face: usize, area: f64 },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("source set is empty")]
    EmptySources,
    #[error("source vertex {index} out of range for {n} vertices")]
    SourceOutOfRange { index: usize, n: usize },
    #[error("linear solve failed: {0}")]
    SolveFailed(#[from] LinalgError),
}

impl GeodesicError {
    pub fn category(&self) -> &'static str {
        match self {
            GeodesicError::DegenerateFace { .. } => "DegenerateFace",
            GeodesicError::DimensionMismatch { .. } => "DimensionMismatch",
            GeodesicError::EmptySources => "EmptySources",
            GeodesicError::SourceOutOfRange { .. } => "SourceOutOfRange",
            GeodesicError::SolveFailed(_) => "SolveFailed",
        }
    }
}

impl From<SpectralError> for GeodesicError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::DegenerateFace { face, area } => GeodesicError::DegenerateFace { face, area },
            SpectralError::Linalg(l) => GeodesicError::SolveFailed(l),
            other => GeodesicError::SolveFailed(LinalgError::InvalidArgument(other.to_string())),
        }
    }
}

/// One tangent vector per face.
pub type FaceVectorField = Vec<Vec3>;

fn unit_normal_and_area(mesh: &TriangleMesh, f: usize) -> Result<(Vec3, f64), GeodesicError> {
    let c = mesh.face_cross(f);
    let area = 0.5 * c.norm();
    if !(area >= 1e-14) {
        return Err(GeodesicError::DegenerateFace { face: f, area });
    }
    Ok((c * (0.5 / area), area))
}

/// Gradient of the piecewise-linear interpolant of `u`, constant per face.
pub fn face_gradient(mesh: &TriangleMesh, u: &[f64]) -> Result<FaceVectorField, GeodesicError> {
    if u.len() != mesh.vertex_count() {
        return Err(GeodesicError::DimensionMismatch {
            expected: mesh.vertex_count(),
            got: u.len(),
        });
    }
    (0..mesh.faces.len())
        .map(|f| {
            let (n, area) = unit_normal_and_area(mesh, f)?;
            let face = mesh.faces[f];
            let p = mesh.face_positions(f);
            let mut g = Vec3::ZERO;
            for k in 0..3 {
                // edge opposite corner k, counter-clockwise
                let e = p[(k + 2) % 3] - p[(k + 1) % 3];
                g = g + n.cross(e) * u[face[k]];
            }
            Ok(g * (0.5 / area))
        })
        .collect()
}

/// Integrated divergence of a face field, `½ Σ cot θ₁ (e₁·X) + cot θ₂ (e₂·X)`.
/// With the cotangent stiffness `L` this satisfies `div(grad u) = −L u`.
pub fn divergence(mesh: &TriangleMesh, x: &[Vec3]) -> Result<Vec<f64>, GeodesicError> {
    if x.len() != mesh.faces.len() {
        return Err(GeodesicError::DimensionMismatch {
            expected: mesh.faces.len(),
            got: x.len(),
        });
    }
    let mut div = vec![0.0; mesh.vertex_count()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let (_, area) = unit_normal_and_area(mesh, f)?;
        let p = mesh.face_positions(f);
        let cot = |k: usize| {
            let (a, b) = (p[(k + 1) % 3] - p[k], p[(k + 2) % 3] - p[k]);
            a.dot(b) / (2.0 * area)
        };
        let cots = [cot(0), cot(1), cot(2)];
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let e1 = p[i] - p[k];
            let e2 = p[j] - p[k];
            // angle opposite e1 sits at j, opposite e2 at i
            div[face[k]] += 0.5 * (cots[j] * e1.dot(x[f]) + cots[i] * e2.dot(x[f]));
        }
    }
    Ok(div)
}

/// Heat-method distance solver with the heat-step factorization cached, so
/// several source sets on one mesh share the setup cost.
#[derive(Debug, Clone)]
pub struct HeatGeodesic {
    mesh: TriangleMesh,
    laplacian: LaplacianPair,
    heat: EnvelopeCholesky,
    /// Diffusion time `multiplier · h²`.
    pub time: f64,
}

impl HeatGeodesic {
    /// Requires a connected mesh; see [`heat_geodesic`] for the general case.
    pub fn new(mesh: &TriangleMesh, time_multiplier: f64) -> Result<Self, GeodesicError> {
        let laplacian = cotan_laplacian(mesh)?;
        let h = mesh.mean_edge_length();
        let time = time_multiplier * h * h;
        let heat = EnvelopeCholesky::factor(&laplacian.stiffness.plus_diagonal(time, 1.0, &laplacian.mass)?)?;
        Ok(Self {
            mesh: mesh.clone(),
            laplacian,
            heat,
            time,
        })
    }

    pub fn distances(&self, sources: &[usize]) -> Result<Vec<f64>, GeodesicError> {
        let n = self.mesh.vertex_count();
        check_sources(sources, n)?;
        let mut delta = vec![0.0; n];
        for &s in sources {
            delta[s] = 1.0;
        }
        let u = self.heat.solve(&delta)?;
        let x: Vec<Vec3> = face_gradient(&self.mesh, &u)?
            .into_iter()
            .map(|g| g.normalized().map_or(Vec3::ZERO, |d| d * -1.0))
            .collect();
        let rhs: Vec<f64> = divergence(&self.mesh, &x)?.into_iter().map(|d| -d).collect();
        let phi = solve_spd_with(
            &self.laplacian.stiffness,
            &rhs,
            &CgOptions {
                tol: 1e-10,
                max_iter: None,
                project_constant: true,
            },
        )?;
        let shift = sources.iter().map(|&s| phi[s]).fold(f64::INFINITY, f64::min);
        let mut d: Vec<f64> = phi.iter().map(|p| (p - shift).max(0.0)).collect();
        for &s in sources {
            d[s] = 0.0;
        }
        Ok(d)
    }
}

fn check_sources(sources: &[usize], n: usize) -> Result<(), GeodesicError> {
    if sources.is_empty() {
        return Err(GeodesicError::EmptySources);
    }
    if let Some(&index) = sources.iter().find(|&&s| s >= n) {
        return Err(GeodesicError::SourceOutOfRange { index, n });
    }
    Ok(())
}

/// Heat-method distances with diffusion time `multiplier · h²` (`h` the mean
/// edge length). Vertices in components without a source get `+∞`.
pub fn heat_geodesic(mesh: &TriangleMesh, sources: &[usize], time_multiplier: f64) -> Result<Vec<f64>, GeodesicError> {
    let n = mesh.vertex_count();
    check_sources(sources, n)?;
    let comp = component_labels(mesh);
    let count = comp.iter().max().map_or(0, |&c| c + 1);
    if count <= 1 {
        return HeatGeodesic::new(mesh, time_multiplier)?.distances(sources);
    }
    let mut out = vec![f64::INFINITY; n];
    for c in 0..count {
        let local_sources: Vec<usize> = sources.iter().copied().filter(|&s| comp[s] == c).collect();
        if local_sources.is_empty() {
            continue;
        }
        let verts: Vec<usize> = (0..n).filter(|&v| comp[v] == c).collect();
        let mut local = vec![usize::MAX; n];
        for (i, &v) in verts.iter().enumerate() {
            local[v] = i;
        }
        let faces = mesh
            .faces
            .iter()
            .filter(|f| comp[f[0]] == c)
            .map(|f| [local[f[0]], local[f[1]], local[f[2]]])
            .collect();
        let sub = TriangleMesh::new(verts.iter().map(|&v| mesh.positions[v]).collect(), faces)
            .map_err(|e| LinalgError::InvalidArgument(e.to_string()))?;
        let src: Vec<usize> = local_sources.iter().map(|&s| local[s]).collect();
        let d = HeatGeodesic::new(&sub, time_multiplier)?.distances(&src)?;
        for (i, &v) in verts.iter().enumerate() {
            out[v] = d[i];
        }
    }
    let unreached = out.iter().filter(|d| d.is_infinite()).count();
    if unreached > 0 {
        log::warn!("{unreached} vertices are not connected to any source");
    }
    Ok(out)
}

fn component_labels(mesh: &TriangleMesh) -> Vec<usize> {
    let n = mesh.vertex_count();
    let mut adj = vec![Vec::new(); n];
    for (a, b) in mesh.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

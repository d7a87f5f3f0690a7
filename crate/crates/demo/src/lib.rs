//! Browser demo over one synthetic vessel: HKS at a chosen time, heat-method
//! geodesics from a picked vertex, and balanced tertile labels of its TAWSS.
//!
//! [`Viewer`] is plain Rust so it can be tested natively; the `wasm` module
//! wraps it for JavaScript.

use great_core::geodesic::{GeodesicError, HeatGeodesic};
use great_core::geom::{flatten, standardize, GeomError, TriangleMesh};
use great_core::pipeline::{synth_tube, tawss, tertile_labels, PipelineError};
use great_core::sparse::{smallest_eigenpairs, EigenOptions, EigenPairs, LinalgError};
use great_core::spectral::{cotan_laplacian, hks, SpectralError};
use thiserror::Error;

/// Eigenpairs kept for the HKS slider; enough for t ≥ 1e-3 on the unit-spread tube.
pub const DEMO_EIGENPAIRS: usize = 64;
/// Slider range of the diffusion time.
pub const T_MIN: f64 = 1e-3;
pub const T_MAX: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub struct Viewer {
    mesh: TriangleMesh,
    eigen: EigenPairs,
    geodesic: HeatGeodesic,
    labels: Vec<usize>,
}

impl Viewer {
    /// Tube 0 of the synthetic dataset with `seed`, standardized to unit spread.
    pub fn new(seed: u64) -> Result<Self, DemoError> {
        let tube = synth_tube(seed, 0);
        let (positions, _) = standardize(&tube.mesh.positions)?;
        let mesh = TriangleMesh::new(positions, tube.mesh.faces.clone())?;
        let lp = cotan_laplacian(&mesh)?;
        let eigen = smallest_eigenpairs(
            &lp.stiffness,
            &lp.mass,
            DEMO_EIGENPAIRS.min(mesh.vertex_count()),
            &EigenOptions { seed, ..EigenOptions::default() },
        )?;
        let geodesic = HeatGeodesic::new(&mesh, 1.0)?;
        let labels = tertile_labels(&tawss(&tube.wss)?);
        Ok(Self { mesh, eigen, geodesic, labels })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Flat `x, y, z` per vertex.
    pub fn positions(&self) -> Vec<f32> {
        flatten(&self.mesh.positions).into_iter().map(|v| v as f32).collect()
    }

    /// Flat vertex triples per face.
    pub fn faces(&self) -> Vec<u32> {
        self.mesh.faces.iter().flatten().map(|&i| i as u32).collect()
    }

    /// Per-vertex HKS at time `t`, clamped to the slider range.
    pub fn hks_at(&self, t: f64) -> Result<Vec<f32>, DemoError> {
        let t = if t.is_finite() { t.clamp(T_MIN, T_MAX) } else { T_MIN };
        Ok(hks(&self.eigen, &[t])?.values.into_iter().map(|v| v as f32).collect())
    }

    /// Geodesic distance from `vertex` to every vertex.
    pub fn geodesic_from(&self, vertex: usize) -> Result<Vec<f32>, DemoError> {
        Ok(self.geodesic.distances(&[vertex])?.into_iter().map(|v| v as f32).collect())
    }

    /// 0 = low, 1 = mid, 2 = high TAWSS.
    pub fn tertile_labels(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l as u8).collect()
    }
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub struct Demo(super::Viewer);

    fn js(e: super::DemoError) -> JsError {
        JsError::new(&e.to_string())
    }

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(seed: u32) -> Result<Demo, JsError> {
            super::Viewer::new(seed as u64).map(Demo).map_err(js)
        }

        #[wasm_bindgen(js_name = vertexCount)]
        pub fn vertex_count(&self) -> usize {
            self.0.vertex_count()
        }

        pub fn positions(&self) -> Vec<f32> {
            self.0.positions()
        }

        pub fn faces(&self) -> Vec<u32> {
            self.0.faces()
        }

        #[wasm_bindgen(js_name = hksAt)]
        pub fn hks_at(&self, t: f64) -> Result<Vec<f32>, JsError> {
            self.0.hks_at(t).map_err(js)
        }

        #[wasm_bindgen(js_name = geodesicFrom)]
        pub fn geodesic_from(&self, vertex: usize) -> Result<Vec<f32>, JsError> {
            self.0.geodesic_from(vertex).map_err(js)
        }

        #[wasm_bindgen(js_name = tertileLabels)]
        pub fn tertile_labels(&self) -> Vec<u8> {
            self.0.tertile_labels()
        }
    }
}

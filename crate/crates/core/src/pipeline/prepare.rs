use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{local_radius, PreparedSample};
use super::labels::{tawss, tertile_labels};
use super::manifest::SampleManifest;
use super::PipelineError;
use crate::geodesic::heat_geodesic;
use crate::geom::gfld::GfldArray;
use crate::geom::io::load_shape;
use crate::geom::{boundary_loops, standardize, unflatten, vertex_normals, Shape};
use crate::spectral::{shape_hks, standardize_hks, HksOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareOptions {
    /// Compute standardized HKS with these options.
    pub hks: Option<HksOptions>,
    /// Inlet/outlet heat-method distances and normals (requires faces).
    pub surface: bool,
    pub geodesic_time: f64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            hks: None,
            surface: true,
            geodesic_time: 1.0,
        }
    }
}

/// Loads and preprocesses manifest entry `id`. Positions are standardized and
/// the centerline is mapped through the same transform.
pub fn prepare_sample(manifest: &SampleManifest, id: usize, opts: &PrepareOptions) -> Result<PreparedSample, PipelineError> {
    let rec = manifest
        .samples
        .get(id)
        .ok_or_else(|| PipelineError::BadManifest(format!("no sample {id}")))?;
    let mut shape = load_shape(manifest.resolve(&rec.shape))?;
    let (positions, record) = standardize(shape.positions())?;
    *shape.positions_mut() = positions.clone();
    let n = positions.len();

    let (mut normals, mut geo_inlet, mut geo_outlet) = (None, None, None);
    if opts.surface {
        let mesh = match &shape {
            Shape::Mesh(m) => m,
            Shape::Points(_) => return Err(PipelineError::MissingField(format!("sample {id}: faces (needed for geodesics)"))),
        };
        normals = Some(vertex_normals(mesh)?);
        let loops = boundary_loops(mesh)?;
        let distances = |sources: Vec<usize>| -> Result<Vec<f64>, PipelineError> {
            let mut d = heat_geodesic(mesh, &sources, opts.geodesic_time)?;
            let far = d.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
            if d.iter().any(|v| !v.is_finite()) {
                warn!("sample {id}: vertices unreachable from a boundary, using the largest finite distance");
                d.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = far);
            }
            Ok(d)
        };
        geo_inlet = Some(distances(rec.inlet.vertices(&loops)?)?);
        geo_outlet = Some(distances(rec.outlet.vertices(&loops)?)?);
    }

    let radius = match &rec.centerline {
        Some(path) => {
            let arr = GfldArray::read(manifest.resolve(path))?;
            if arr.shape.len() != 2 || arr.shape[1] != 3 {
                return Err(PipelineError::ShapeMismatch(format!("centerline must be m x 3, got {:?}", arr.shape)));
            }
            let line: Vec<_> = unflatten(&arr.data).into_iter().map(|p| record.apply(p)).collect();
            Some(local_radius(&positions, &line)?)
        }
        None => None,
    };

    let hks = match &opts.hks {
        Some(h) => {
            let s = standardize_hks(&shape_hks(&shape, h)?)?;
            if !s.constant_times.is_empty() {
                warn!("sample {id}: constant HKS at times {:?}", s.constant_times);
            }
            Some(s.field)
        }
        None => None,
    };

    let (tawss_values, labels) = match &rec.wss {
        Some(path) => {
            let series = GfldArray::read(manifest.resolve(path))?;
            if series.shape.first() != Some(&n) {
                return Err(PipelineError::ShapeMismatch(format!("WSS series {:?} for {n} points", series.shape)));
            }
            let t = tawss(&series)?;
            let l = tertile_labels(&t);
            (Some(t), Some(l))
        }
        None => (None, None),
    };

    Ok(PreparedSample {
        id,
        patient: rec.patient.clone(),
        artery: rec.artery,
        waveform: [rec.waveform_mean, rec.waveform_std],
        positions,
        normals,
        geo_inlet,
        geo_outlet,
        radius,
        hks,
        tawss: tawss_values,
        labels,
    })
}

/// All samples, preprocessed on `jobs` threads (0 = rayon default). Output order
/// and values do not depend on `jobs`.
pub fn prepare_all(manifest: &SampleManifest, opts: &PrepareOptions, jobs: usize) -> Result<Vec<PreparedSample>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::BadConfig(e.to_string()))?;
    pool.install(|| {
        (0..manifest.samples.len())
            .into_par_iter()
            .map(|i| prepare_sample(manifest, i, opts))
            .collect()
    })
}

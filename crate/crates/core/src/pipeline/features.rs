use serde::{Deserialize, Serialize};

use super::manifest::Artery;
use super::PipelineError;
use crate::geom::Vec3;
use crate::nn::Tensor;
use crate::spectral::HksField;

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(a + ab * t)
}

/// Per point, the distance to the nearest point of the polyline.
pub fn local_radius(points: &[Vec3], centerline: &[Vec3]) -> Result<Vec<f64>, PipelineError> {
    if centerline.len() < 2 {
        return Err(PipelineError::EmptyCenterline(centerline.len()));
    }
    Ok(points
        .iter()
        .map(|&p| {
            centerline
                .windows(2)
                .map(|s| point_segment_distance(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Everything feature assembly and training need for one artery, in
/// standardized coordinates.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    /// Index in the manifest.
    pub id: usize,
    pub patient: String,
    pub artery: Artery,
    pub waveform: [f64; 2],
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub geo_inlet: Option<Vec<f64>>,
    pub geo_outlet: Option<Vec<f64>>,
    pub radius: Option<Vec<f64>>,
    /// Per-time standardized HKS.
    pub hks: Option<HksField>,
    pub tawss: Option<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl PreparedSample {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    /// Point coordinates and normals.
    pub geometry: bool,
    pub radius: bool,
    pub hks: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self {
            geometry: true,
            radius: false,
            hks: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub start: usize,
    pub width: usize,
    /// Standardized with training-split statistics.
    pub scalar: bool,
}

/// Column layout of an assembled feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub channels: Vec<Channel>,
}

impl ChannelLayout {
    /// Fixed order: coords 3, normals 3 (geometry only), waveform mean/std 2,
    /// artery one-hot 3, geodesic to inlet 1, to outlet 1, then radius 1 and
    /// HKS 16 when flagged.
    pub fn new(flags: FeatureFlags, hks_times: usize) -> Self {
        let mut spec: Vec<(&str, usize, bool)> = Vec::new();
        if flags.geometry {
            spec.extend([("coords", 3, false), ("normals", 3, false)]);
        }
        spec.extend([("waveform", 2, true), ("artery", 3, false), ("geo_inlet", 1, true), ("geo_outlet", 1, true)]);
        if flags.radius {
            spec.push(("radius", 1, true));
        }
        if flags.hks {
            spec.push(("hks", hks_times, false));
        }
        let mut start = 0;
        let channels = spec
            .into_iter()
            .map(|(name, width, scalar)| {
                let c = Channel {
                    name: name.into(),
                    start,
                    width,
                    scalar,
                };
                start += width;
                c
            })
            .collect();
        Self { channels }
    }

    pub fn c_in(&self) -> usize {
        self.channels.iter().map(|c| c.width).sum()
    }

    pub fn scalar_columns(&self) -> Vec<usize> {
        self.channels
            .iter()
            .filter(|c| c.scalar)
            .flat_map(|c| c.start..c.start + c.width)
            .collect()
    }
}

/// Raw (unstandardized) per-point features in layout order.
pub fn assemble_features(sample: &PreparedSample, flags: FeatureFlags) -> Result<(Tensor, ChannelLayout), PipelineError> {
    let n = sample.len();
    let missing = |what: &str| PipelineError::MissingField(format!("sample {}: {what}", sample.id));
    let hks_times = if flags.hks { sample.hks.as_ref().ok_or_else(|| missing("hks"))?.t() } else { 16 };
    let layout = ChannelLayout::new(flags, hks_times);
    let normals = if flags.geometry { Some(sample.normals.as_ref().ok_or_else(|| missing("normals"))?) } else { None };
    let geo_in = sample.geo_inlet.as_ref().ok_or_else(|| missing("inlet geodesics"))?;
    let geo_out = sample.geo_outlet.as_ref().ok_or_else(|| missing("outlet geodesics"))?;
    let radius = if flags.radius { Some(sample.radius.as_ref().ok_or_else(|| missing("centerline radius"))?) } else { None };
    let hks = if flags.hks { sample.hks.as_ref() } else { None };
    let onehot = sample.artery.one_hot();
    let c = layout.c_in();
    let mut data = Vec::with_capacity(n * c);
    for i in 0..n {
        if let Some(normals) = normals {
            data.extend(sample.positions[i].to_array());
            data.extend(normals[i].to_array());
        }
        data.extend(sample.waveform);
        data.extend(onehot);
        data.push(geo_in[i]);
        data.push(geo_out[i]);
        if let Some(r) = radius {
            data.push(r[i]);
        }
        if let Some(h) = hks {
            data.extend_from_slice(h.row(i));
        }
    }
    Ok((Tensor::from_vec(n, c, data)?, layout))
}

/// Per-column mean and std of the scalar channels, pooled over the points of
/// the training samples. Other columns pass through (mean 0, std 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit(train: &[&Tensor], layout: &ChannelLayout) -> Result<Self, PipelineError> {
        let c = layout.c_in();
        let mut mean = vec![0.0; c];
        let mut std = vec![1.0; c];
        let rows: usize = train.iter().map(|t| t.rows).sum();
        if rows == 0 {
            return Err(PipelineError::MissingField("no training points to fit feature statistics".into()));
        }
        if let Some(t) = train.iter().find(|t| t.cols != c) {
            return Err(PipelineError::ShapeMismatch(format!("{} feature columns, layout has {c}", t.cols)));
        }
        for j in layout.scalar_columns() {
            let col = || train.iter().flat_map(|t| (0..t.rows).map(move |i| t.data[i * c + j]));
            let m = col().sum::<f64>() / rows as f64;
            let var = col().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64;
            mean[j] = m;
            std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, t: &Tensor) -> Tensor {
        let mut out = t.clone();
        for row in out.data.chunks_mut(t.cols) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }
}

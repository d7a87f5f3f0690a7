use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{Artery, Boundary, SampleManifest, SampleRecord};
use super::PipelineError;
use crate::geom::gfld::{Dtype, GfldArray};
use crate::geom::io::write_shape;
use crate::geom::primitives::sweep_tube;
use crate::geom::{flatten, TriangleMesh, Vec3};
use crate::rng::{substream, Stream};

/// Time steps in the synthetic WSS series.
pub const WSS_STEPS: usize = 8;

/// One synthetic vessel in millimetre-like units.
#[derive(Debug, Clone)]
pub struct SynthTube {
    pub mesh: TriangleMesh,
    pub centerline: Vec<Vec3>,
    pub radii: Vec<f64>,
    /// Per-vertex TAWSS proxy.
    pub proxy: Vec<f64>,
    /// `n × 3 × WSS_STEPS` series whose TAWSS is the proxy.
    pub wss: GfldArray,
    pub patient: String,
    pub artery: Artery,
    pub waveform: [f64; 2],
}

fn fourier<R: Rng>(rng: &mut R, harmonics: usize, amplitude: f64) -> Vec<(f64, f64)> {
    (1..=harmonics)
        .map(|h| (rng.random_range(-amplitude..amplitude) / h as f64, rng.random_range(0.0..2.0 * PI)))
        .collect()
}

fn eval_fourier(terms: &[(f64, f64)], u: f64) -> f64 {
    terms
        .iter()
        .enumerate()
        .map(|(h, &(a, phase))| a * ((h + 1) as f64 * PI * u + phase).sin())
        .sum()
}

/// Tube `index` of the dataset with the given seed: a circle swept along a random
/// smooth curve with a varying radius and an optional stenosis. The proxy is
/// `(r₀/r)³ · (1 + 1.5 κ r cos θ)` with θ the angle to the curvature normal, times
/// log-normal noise, so narrowings and outer bends carry high shear.
pub fn synth_tube(seed: u64, index: usize) -> SynthTube {
    let mut rng = substream(seed, Stream::Synth, index as u64);
    let rings = rng.random_range(40..=48);
    let around = rng.random_range(25..=28);
    let length = 30.0;
    let (cx, cy) = (fourier(&mut rng, 3, 3.0), fourier(&mut rng, 3, 3.0));
    let r0 = rng.random_range(1.5..2.5);
    let wobble = fourier(&mut rng, 2, 0.15);
    let depth = rng.random_range(0.0..0.45);
    let center = rng.random_range(0.3..0.7);
    let width = rng.random_range(0.07..0.17);

    let u = |i: usize| i as f64 / (rings - 1) as f64;
    let centerline: Vec<Vec3> = (0..rings)
        .map(|i| Vec3::new(eval_fourier(&cx, u(i)), eval_fourier(&cy, u(i)), length * u(i)))
        .collect();
    let radii: Vec<f64> = (0..rings)
        .map(|i| {
            let stenosis = 1.0 - depth * (-((u(i) - center) / width).powi(2)).exp();
            r0 * (1.0 + eval_fourier(&wobble, u(i))) * stenosis
        })
        .collect();
    let mesh = sweep_tube(&centerline, &radii, around);

    // discrete curvature vector from the second difference
    let curvature: Vec<Vec3> = (0..rings)
        .map(|i| {
            let (a, b, c) = (centerline[i.saturating_sub(1)], centerline[i], centerline[(i + 1).min(rings - 1)]);
            if i == 0 || i == rings - 1 {
                return Vec3::ZERO;
            }
            let ds = 0.5 * (a.distance(b) + b.distance(c));
            (a + c - b * 2.0) * (1.0 / (ds * ds))
        })
        .collect();
    let noise = Normal::new(0.0f64, 0.1).expect("valid std");
    let proxy: Vec<f64> = (0..rings * around)
        .map(|v| {
            let i = v / around;
            let radial = (mesh.positions[v] - centerline[i]) * (1.0 / radii[i]);
            let bend = 1.0 + 1.5 * radii[i] * curvature[i].dot(radial);
            (r0 / radii[i]).powi(3) * bend.max(0.05) * noise.sample(&mut rng).exp()
        })
        .collect();

    // pulsatile axial flow; the sinusoid averages to zero over the sampled steps
    let n = proxy.len();
    let mut data = vec![0.0; n * 3 * WSS_STEPS];
    for v in 0..n {
        let i = v / around;
        let tangent = (centerline[(i + 1).min(rings - 1)] - centerline[i.saturating_sub(1)])
            .normalized()
            .expect("distinct centerline points");
        for s in 0..WSS_STEPS {
            let mag = proxy[v] * (1.0 + 0.5 * (2.0 * PI * s as f64 / WSS_STEPS as f64).sin());
            for (k, c) in (tangent * mag).to_array().into_iter().enumerate() {
                data[v * 3 * WSS_STEPS + k * WSS_STEPS + s] = c;
            }
        }
    }

    let artery = Artery::ALL[rng.random_range(0..3)];
    let waveform = [rng.random_range(80.0..120.0), rng.random_range(10.0..30.0)];
    SynthTube {
        mesh,
        centerline,
        radii,
        proxy,
        wss: GfldArray::new(Dtype::F64, vec![n, 3, WSS_STEPS], data),
        // two arteries per patient
        patient: format!("P{:03}", index / 2),
        artery,
        waveform,
    }
}

/// Writes `count` tubes (`tube_XXX.ply`, `.wss.gfld`, `.centerline.gfld`) and
/// `manifest.json` into `out_dir`. Inlet is boundary loop 0 (first ring),
/// outlet loop 1.
pub fn synth_tubes(count: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<SampleManifest, PipelineError> {
    if count == 0 {
        return Err(PipelineError::BadConfig("count must be at least 1".into()));
    }
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out)?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let tube = synth_tube(seed, i);
        let stem = format!("tube_{i:03}");
        let shape = format!("{stem}.ply");
        let wss = format!("{stem}.wss.gfld");
        let centerline = format!("{stem}.centerline.gfld");
        write_shape(out.join(&shape), &tube.mesh.positions, &tube.mesh.faces)?;
        tube.wss.write(out.join(&wss))?;
        GfldArray::matrix(Dtype::F64, tube.centerline.len(), 3, flatten(&tube.centerline)).write(out.join(&centerline))?;
        samples.push(SampleRecord {
            shape: shape.into(),
            wss: Some(wss.into()),
            patient: tube.patient,
            artery: tube.artery,
            waveform_mean: tube.waveform[0],
            waveform_std: tube.waveform[1],
            inlet: Boundary::Loop(0),
            outlet: Boundary::Loop(1),
            centerline: Some(centerline.into()),
        });
    }
    let manifest = SampleManifest {
        root: out.to_path_buf(),
        samples,
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

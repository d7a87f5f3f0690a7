use std::fs;
use std::path::{Path, PathBuf};

use great_core::geodesic::heat_geodesic;
use great_core::geom::gfld::{Dtype, GfldArray};
use great_core::geom::io::{load_shape, write_shape};
use great_core::geom::{boundary_loops, standardize, Shape};
use great_core::model::{ModelConfig, VatrModel};
use great_core::nn::ParamStore;
use great_core::pipeline::{
    accuracy, constant_predictor_mae, cross_validate, grouped_kfold, pretrain, prepare_all, synth_tubes, tawss,
    tertile_labels, PrepareOptions, PreparedSample, SampleManifest, SegModel,
};
use great_core::spectral::{shape_hks, standardize_hks, HksOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::{Command, FeatureArgs, HksArgs, RunArgs};

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Standardize { input, out, record } => {
            announce(&json!({ "input": input, "out": out, "record": record }), None)?;
            standardize_cmd(&input, &out, record.as_deref())
        }
        Command::Hks(args) => hks_cmd(args),
        Command::Geodesic {
            input,
            sources,
            time_mult,
            out,
        } => {
            announce(
                &json!({ "input": input, "sources": sources, "time_mult": time_mult, "out": out }),
                None,
            )?;
            geodesic_cmd(&input, &sources, time_mult, &out)
        }
        Command::Label { wss, out, tawss_out } => {
            announce(&json!({ "wss": wss, "out": out, "tawss_out": tawss_out }), None)?;
            label_cmd(&wss, &out, tawss_out.as_deref())
        }
        Command::Pretrain { manifest, out, run } => pretrain_cmd(&manifest, &out, &run),
        Command::Finetune {
            manifest,
            pretrained,
            out,
            run,
            features,
        } => finetune_cmd(&manifest, pretrained.as_deref(), &out, &run, &features),
        Command::Evaluate { pred, labels } => {
            announce(&json!({ "pred": pred, "labels": labels }), None)?;
            evaluate_cmd(&pred, &labels)
        }
        Command::Synth { count, seed, out } => {
            announce(&json!({ "count": count, "seed": seed, "out": out }), Some(seed))?;
            let m = synth_tubes(count, seed, &out)?;
            println!("wrote {} tubes and {}", m.samples.len(), out.join("manifest.json").display());
            Ok(())
        }
        Command::Inspect { path } => {
            announce(&json!({ "path": path }), None)?;
            println!("{}", serde_json::to_string(&inspect(&path)?)?);
            Ok(())
        }
    }
}

/// Every run states its resolved configuration and seed before doing work.
fn announce(config: &impl Serialize, seed: Option<u64>) -> Result<(), CliError> {
    println!("config: {}", serde_json::to_string(config)?);
    match seed {
        Some(s) => println!("seed: {s}"),
        None => println!("seed: none (deterministic)"),
    }
    Ok(())
}

fn faces_of(shape: &Shape) -> Vec<[usize; 3]> {
    shape.as_mesh().map(|m| m.faces.clone()).unwrap_or_default()
}

fn standardize_cmd(input: &Path, out: &Path, record: Option<&Path>) -> Result<(), CliError> {
    let shape = load_shape(input)?;
    let (positions, rec) = standardize(shape.positions())?;
    write_shape(out, &positions, &faces_of(&shape))?;
    let text = serde_json::to_string(&rec)?;
    if let Some(p) = record {
        fs::write(p, &text)?;
    }
    println!("record: {text}");
    Ok(())
}

fn hks_cmd(a: HksArgs) -> Result<(), CliError> {
    let opts = HksOptions {
        k: a.k,
        times: a.times,
        t_min: a.tmin,
        t_max: a.tmax,
        laplacian: a.laplacian,
        k_neighbors: a.k_neighbors,
        seed: a.seed,
    };
    announce(
        &json!({ "input": a.input, "hks": opts, "standardized": !a.raw, "out": a.out }),
        Some(a.seed),
    )?;
    let mut shape = load_shape(&a.input)?;
    let (positions, _) = standardize(shape.positions())?;
    *shape.positions_mut() = positions;
    let mut field = shape_hks(&shape, &opts)?;
    if !a.raw {
        let s = standardize_hks(&field)?;
        if !s.constant_times.is_empty() {
            log::warn!("constant HKS at times {:?}", s.constant_times);
        }
        field = s.field;
    }
    GfldArray::matrix(Dtype::F32, field.n, field.t(), field.values).write(&a.out)?;
    println!("wrote {} x {} to {}", field.n, opts.times, a.out.display());
    Ok(())
}

/// `loop:<id>` or a comma-separated vertex list.
fn parse_sources(spec: &str, shape: &Shape) -> Result<Vec<usize>, CliError> {
    if let Some(id) = spec.strip_prefix("loop:") {
        let id: usize = id.trim().parse().map_err(|_| CliError::Usage(format!("bad loop id '{id}'")))?;
        let mesh = shape.as_mesh().ok_or(great_core::geom::GeomError::NoFaces)?;
        let loops = boundary_loops(mesh)?;
        return loops
            .get(id)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("boundary loop {id} does not exist ({} loops)", loops.len())));
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad vertex index '{s}'"))))
        .collect()
}

fn geodesic_cmd(input: &Path, sources: &str, time_mult: f64, out: &Path) -> Result<(), CliError> {
    let shape = load_shape(input)?;
    let src = parse_sources(sources, &shape)?;
    let mesh = shape.as_mesh().ok_or(great_core::geom::GeomError::NoFaces)?;
    let d = heat_geodesic(mesh, &src, time_mult)?;
    let unreached = d.iter().filter(|v| v.is_infinite()).count();
    if unreached > 0 {
        log::warn!("{unreached} vertices are unreachable and stored as +inf");
    }
    GfldArray::new(Dtype::F64, vec![d.len()], d).write(out)?;
    println!("wrote distances from {} sources to {}", src.len(), out.display());
    Ok(())
}

fn label_cmd(wss: &Path, out: &Path, tawss_out: Option<&Path>) -> Result<(), CliError> {
    let series = GfldArray::read(wss)?;
    let t = tawss(&series)?;
    let labels = tertile_labels(&t);
    let mut counts = [0usize; 3];
    labels.iter().for_each(|&l| counts[l] += 1);
    GfldArray::new(Dtype::F32, vec![labels.len()], labels.iter().map(|&l| l as f64).collect()).write(out)?;
    if let Some(p) = tawss_out {
        GfldArray::new(Dtype::F64, vec![t.len()], t).write(p)?;
    }
    println!("class sizes low/mid/high: {counts:?}");
    Ok(())
}

fn run_overrides(run: &RunArgs) -> Overrides {
    let mut o = Overrides::default();
    o.set("seed", run.seed)
        .set("jobs", run.jobs)
        .set("folds", run.folds)
        .set("train.epochs", run.epochs)
        .set("train.batch_size", run.batch_size)
        .set("train.lr", run.lr)
        .set("train.lr_decay", run.lr_decay)
        .set("train.eval_every", run.eval_every)
        .set("model.c_hidden", run.hidden)
        .set("model.num_blocks", run.blocks)
        .set("model.num_heads", run.heads)
        .set("model.n_coarse", run.coarse)
        .set("hks.k", run.hks_k);
    o
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct Sidecar {
    kind: String,
    config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frozen_config: Option<ModelConfig>,
}

fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

fn save_checkpoint(store: &ParamStore, sidecar: &Sidecar, path: &Path) -> Result<(), CliError> {
    store.save(path)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

fn load_pretrained(path: &Path) -> Result<VatrModel, CliError> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)
        .map_err(|e| CliError::Config(format!("{}: config sidecar not readable ({e})", side.display())))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.kind != "pretrained" {
        return Err(CliError::Config(format!("{} is a '{}' checkpoint, not a pre-trained one", path.display(), sidecar.kind)));
    }
    let store = ParamStore::load(path)?;
    let fresh = VatrModel::new(sidecar.config.clone(), 0)?;
    if store.total_count() != fresh.store.total_count() {
        return Err(CliError::Config(format!(
            "{}: {} weights but the sidecar config needs {}",
            path.display(),
            store.total_count(),
            fresh.store.total_count()
        )));
    }
    Ok(VatrModel {
        config: sidecar.config,
        store,
    })
}

/// Validation is fold 0 of a grouped split with the run's seed and fold count.
fn pretrain_cmd(manifest_path: &Path, out: &Path, run: &RunArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(RunConfig::pretrain_defaults(), run.config.as_deref(), run_overrides(run).into_value())?;
    cfg.model.c_in = 3;
    cfg.model.c_out = cfg.hks.times;
    cfg.model.decode = false;
    announce(&cfg, Some(cfg.seed))?;
    let manifest = SampleManifest::load(manifest_path)?;
    let pool = thread_pool(cfg.jobs)?;
    let opts = PrepareOptions {
        hks: Some(cfg.hks.clone()),
        surface: false,
        geodesic_time: cfg.geodesic_time,
    };
    let samples = prepare_all(&manifest, &opts, cfg.jobs)?;
    let (train, val, split) = if cfg.folds > 1 {
        let split = grouped_kfold(&manifest.patients(), cfg.folds, cfg.seed)?;
        let train: Vec<&PreparedSample> = split.train_indices(0).iter().map(|&i| &samples[i]).collect();
        let val: Vec<&PreparedSample> = split.folds[0].iter().map(|&i| &samples[i]).collect();
        (train, val, Some(split))
    } else {
        (samples.iter().collect(), Vec::new(), None)
    };
    let (model, log) = pool.install(|| pretrain(&train, &val, cfg.model.clone(), &cfg.train))?;
    fs::create_dir_all(out)?;
    log.write_csv(out.join("pretrain.csv"))?;
    if let Some(s) = &split {
        fs::write(out.join("split.json"), s.to_json() + "\n")?;
    }
    let weights = out.join("pretrained.grwt");
    save_checkpoint(
        &model.store,
        &Sidecar {
            kind: "pretrained".into(),
            config: model.config.clone(),
            frozen_config: None,
        },
        &weights,
    )?;
    if let Some(mae) = log.final_eval() {
        let (constant, _) = constant_predictor_mae(&train, &val, cfg.model.n_coarse, cfg.seed)?;
        println!("validation MAE {mae:.4} (constant predictor {constant:.4})");
    }
    println!("wrote {}", weights.display());
    Ok(())
}

fn finetune_cmd(
    manifest_path: &Path,
    pretrained: Option<&Path>,
    out: &Path,
    run: &RunArgs,
    features: &FeatureArgs,
) -> Result<(), CliError> {
    let mut o = run_overrides(run);
    o.set("features.geometry", features.no_geometry.then_some(false))
        .set("features.radius", features.radius.then_some(true))
        .set("features.hks", features.hks.then_some(true));
    let cfg = RunConfig::resolve(RunConfig::finetune_defaults(), run.config.as_deref(), o.into_value())?;
    announce(&json!({ "run": cfg, "pretrained": pretrained }), Some(cfg.seed))?;
    let manifest = SampleManifest::load(manifest_path)?;
    let backbone = pretrained.map(load_pretrained).transpose()?;
    let opts = PrepareOptions {
        hks: cfg.features.hks.then(|| cfg.hks.clone()),
        surface: true,
        geodesic_time: cfg.geodesic_time,
    };
    let samples = prepare_all(&manifest, &opts, cfg.jobs)?;
    let split = grouped_kfold(&manifest.patients(), cfg.folds, cfg.seed)?;
    let pool = thread_pool(cfg.jobs)?;
    let folds = pool.install(|| cross_validate(&samples, &split, cfg.features, backbone.as_ref(), cfg.model.clone(), &cfg.train))?;

    fs::create_dir_all(out)?;
    fs::write(out.join("split.json"), split.to_json() + "\n")?;
    let mut per_fold = Vec::new();
    for f in &folds {
        f.log.write_csv(out.join(format!("fold_{}.csv", f.fold)))?;
        let sidecar = match &f.model {
            SegModel::Baseline(m) => Sidecar {
                kind: "baseline".into(),
                config: m.config.clone(),
                frozen_config: None,
            },
            SegModel::Great(m) => Sidecar {
                kind: "great".into(),
                config: m.config.clone(),
                frozen_config: Some(m.frozen_config.clone()),
            },
        };
        save_checkpoint(f.model.store(), &sidecar, &out.join(format!("fold_{}.grwt", f.fold)))?;
        per_fold.push(json!({
            "fold": f.fold,
            "train_accuracy": f.train_accuracy,
            "eval_accuracy": f.eval_accuracy,
            "feature_mean": f.stats.mean,
            "feature_std": f.stats.std,
        }));
    }
    let mean = |key: fn(&great_core::pipeline::FoldResult) -> f64| folds.iter().map(key).sum::<f64>() / folds.len() as f64;
    let summary = json!({
        "model": if backbone.is_some() { "great" } else { "baseline" },
        "folds": per_fold,
        "mean_train_accuracy": mean(|f| f.train_accuracy),
        "mean_eval_accuracy": mean(|f| f.eval_accuracy),
    });
    fs::write(out.join("accuracies.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "mean train accuracy {:.4}, mean held-out accuracy {:.4} over {} folds",
        summary["mean_train_accuracy"].as_f64().unwrap_or(f64::NAN),
        summary["mean_eval_accuracy"].as_f64().unwrap_or(f64::NAN),
        split.k()
    );
    Ok(())
}

/// Rows of a label vector or argmax over the columns of a score matrix.
fn as_labels(a: &GfldArray) -> Result<Vec<usize>, CliError> {
    let to_label = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(CliError::Usage(format!("label {v} is not a non-negative integer")))
        }
    };
    match a.shape[..] {
        [_] | [_, 1] => a.data.iter().map(|&v| to_label(v)).collect(),
        [n, c] => Ok((0..n)
            .map(|i| {
                let row = &a.data[i * c..(i + 1) * c];
                (0..c).fold(0, |b, j| if row[j] > row[b] { j } else { b })
            })
            .collect()),
        _ => Err(CliError::Usage(format!("expected n or n x C, got {:?}", a.shape))),
    }
}

fn evaluate_cmd(pred: &Path, labels: &Path) -> Result<(), CliError> {
    let p = as_labels(&GfldArray::read(pred)?)?;
    let t = as_labels(&GfldArray::read(labels)?)?;
    let acc = accuracy(&p, &t)?;
    println!("{}", json!({ "accuracy": acc, "points": t.len() }));
    Ok(())
}

fn inspect(path: &Path) -> Result<Value, CliError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"GFLD") {
        let a = GfldArray::from_bytes(&bytes)?;
        return Ok(json!({ "kind": "gfld", "dtype": a.dtype.name(), "shape": a.shape }));
    }
    if bytes.starts_with(b"GRWT") {
        let store = ParamStore::from_bytes(&bytes)?;
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("checked by the parser"));
        let params: Vec<Value> = store
            .params()
            .iter()
            .map(|p| json!({ "name": p.name, "shape": [p.value.rows, p.value.cols] }))
            .collect();
        return Ok(json!({
            "kind": "grwt",
            "version": version,
            "count": params.len(),
            "scalars": store.total_count(),
            "params": params,
        }));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
    if ext == "json" {
        let v: Value = serde_json::from_slice(&bytes)?;
        if v.is_array() {
            let m = SampleManifest::load(path)?;
            let mut patients = m.patients();
            patients.sort();
            patients.dedup();
            return Ok(json!({ "kind": "manifest", "samples": m.samples.len(), "patients": patients.len() }));
        }
        if v.get("kind").is_some() && v.get("config").is_some() {
            return Ok(json!({ "kind": "checkpoint-config", "config": v }));
        }
        if split_like(&v) {
            let folds = v.as_object().map_or(0, |o| o.len());
            return Ok(json!({ "kind": "split", "folds": folds }));
        }
        return Ok(json!({ "kind": "json", "value": v }));
    }
    let shape = load_shape(path)?;
    Ok(json!({
        "kind": "shape",
        "vertices": shape.positions().len(),
        "faces": shape.as_mesh().map_or(0, |m| m.faces.len()),
    }))
}

fn split_like(v: &Value) -> bool {
    v.as_object()
        .is_some_and(|o| !o.is_empty() && o.iter().all(|(k, v)| k.parse::<usize>().is_ok() && v.is_array()))
}

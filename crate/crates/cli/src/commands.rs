use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use viewseg::crf::CrfParams;
use viewseg::decompose::decompose_shape;
use viewseg::mesh::{load_mesh_auto, save_ply, Mesh, MeshFormat, PlyWriteOptions};
use viewseg::metrics::{entropy_map, evaluate};
use viewseg::optim::AdamState;
use viewseg::pipeline::{refine, train_crf_stage, train_network, Manifest, PreparedShape, RunConfig};
use viewseg::synth::{generate, perturb, toy_humanoid, two_spheres};
use viewseg::viewnet::{Checkpoint, CrfSection, StepRecord, ViewNet};
use viewseg::{Error, Result};

use crate::{export, Cli, Command, Shape};

/// Predicted labels as written by `infer` and read by `eval`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelFile {
    pub labels: Vec<u32>,
    #[serde(rename = "L")]
    pub classes: usize,
}

#[derive(Serialize)]
struct PdfFile<'a> {
    #[serde(rename = "L")]
    classes: usize,
    refined: bool,
    pdf: Vec<&'a [f64]>,
    entropy: &'a [f64],
}

pub fn run(cli: Cli) -> Result<()> {
    let explicit_config = cli.config.is_some();
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Decompose { mesh, out } => decompose(&config, &mesh, &out),
        Command::Train { dataset, out, resume, no_crf } => train(&config, &dataset, &out, resume.as_deref(), no_crf),
        Command::Infer { mesh, checkpoint, out, no_crf } => infer(&config, &mesh, &checkpoint, &out, no_crf),
        Command::Eval { pred, gt, checkpoint, out } => {
            eval(explicit_config.then_some(&config), &pred, &gt, checkpoint.as_deref(), out.as_deref())
        }
        Command::Synth { out, count, shape, noise } => synth(&config, &out, count, shape, noise),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn decompose(config: &RunConfig, mesh_path: &Path, out: &Path) -> Result<()> {
    let mesh = load_mesh_auto(mesh_path)?;
    let views = decompose_shape(&mesh, &config.decompose)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("decompose", config);
    manifest.add_input(&file_name(mesh_path), mesh_path)?;
    for (m, view) in views.iter().enumerate() {
        let stem = format!("view_{:02}", m + 1);
        view.save(out, &stem)?;
        for ext in ["ply", "json"] {
            let name = format!("{stem}.{ext}");
            manifest.add_output(&name, &out.join(&name))?;
        }
    }
    manifest.save(&out.join("manifest.json"))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Labeled meshes of `dir`, sorted by file name.
fn load_dataset(dir: &Path) -> Result<Vec<(PathBuf, Mesh)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| MeshFormat::from_path(p).is_some())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("{} contains no .ply or .obj meshes", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let mesh = load_mesh_auto(&p)?;
            if mesh.labels().is_none() {
                return Err(Error::Validation(format!("{} has no vertex labels", p.display())));
            }
            Ok((p, mesh))
        })
        .collect()
}

fn log_line(file: &mut fs::File, path: &Path, r: &StepRecord) -> Result<()> {
    let line = serde_json::to_string(r)?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))
}

fn train(config: &RunConfig, dataset: &Path, out: &Path, resume: Option<&Path>, no_crf: bool) -> Result<()> {
    let data = load_dataset(dataset)?;
    for (p, m) in &data {
        m.check_labels(config.classes).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
    }
    let (mut net, mut state) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.architecture != config.architecture() {
                return Err(Error::Validation(format!(
                    "checkpoint {} was trained with a different architecture than the config",
                    path.display()
                )));
            }
            let (net, state) = ck.restore()?;
            let state = state.unwrap_or_else(|| AdamState { step: ck.step, ..AdamState::new(net.parameter_count()) });
            (net, state)
        }
        None => {
            let net = ViewNet::new(config.architecture(), config.seed)?;
            let state = AdamState::new(net.parameter_count());
            (net, state)
        }
    };
    create_dir(out)?;
    let meshes: Vec<Mesh> = data.iter().map(|(_, m)| m.clone()).collect();
    let log_path = out.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    train_network(&mut net, &meshes, config, &mut state, |r| {
        if log_err.is_none() {
            log_err = log_line(&mut log, &log_path, r).err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let mut checkpoint = Checkpoint::capture(&net, Some(&state));
    let mut outputs = vec!["model.json", "train_log.jsonl"];
    if config.crf.enabled && !no_crf {
        let crf = if config.epochs == 0 || config.crf.epochs == 0 {
            config.crf.initial_params(config.classes)
        } else {
            let crf_log_path = out.join("crf_log.jsonl");
            let mut crf_log = fs::File::create(&crf_log_path).map_err(|e| Error::io(&crf_log_path, e))?;
            let mut err = None;
            let (crf, _) = train_crf_stage(&net, &meshes, config, |r| {
                if err.is_none() {
                    err = log_line(&mut crf_log, &crf_log_path, r).err();
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            outputs.push("crf_log.jsonl");
            crf
        };
        checkpoint.crf = Some(CrfSection::new(crf));
    }
    checkpoint.save(&out.join("model.json"))?;
    let mut manifest = Manifest::new("train", config);
    for (p, _) in &data {
        manifest.add_input(&file_name(p), p)?;
    }
    if let Some(r) = resume {
        manifest.add_input("resume", r)?;
    }
    for name in outputs {
        manifest.add_output(name, &out.join(name))?;
    }
    manifest.save(&out.join("manifest.json"))
}

fn infer(config: &RunConfig, mesh_path: &Path, checkpoint_path: &Path, out: &Path, no_crf: bool) -> Result<()> {
    let ck = Checkpoint::load(checkpoint_path)?;
    if ck.architecture.classes != config.classes {
        return Err(Error::Validation(format!(
            "checkpoint predicts {} classes but the config has {}",
            ck.architecture.classes, config.classes
        )));
    }
    let (net, _) = ck.restore()?;
    let crf: Option<CrfParams> = if no_crf || !config.crf.enabled {
        None
    } else {
        Some(ck.crf_params()?.ok_or_else(|| {
            Error::Validation(format!("{} holds no CRF; train with the CRF or pass --no-crf", checkpoint_path.display()))
        })?)
    };
    let mesh = load_mesh_auto(mesh_path)?;
    let mesh = if mesh.normals().is_some() { mesh } else { mesh.with_computed_normals()? };
    let shape = PreparedShape::new(&mesh, &config.decompose, net.architecture())?;
    let seg = refine(&mesh, shape.aggregate(&net)?, crf.as_ref())?;
    let pdf = seg.final_pdf();
    let entropy = entropy_map(pdf);
    create_dir(out)?;
    let labels = LabelFile { labels: seg.labels.clone(), classes: config.classes };
    write(&out.join("labels.json"), &serde_json::to_string(&labels)?)?;
    let pdf_file = PdfFile { classes: pdf.classes(), refined: seg.refined.is_some(), pdf: pdf.rows().collect(), entropy: &entropy };
    write(&out.join("pdf.json"), &serde_json::to_string(&pdf_file)?)?;
    export::save_colored(&out.join("segmentation.ply"), &mesh, &seg.labels)?;
    export::save_entropy(&out.join("entropy.ply"), &mesh, &entropy)?;
    let mut manifest = Manifest::new("infer", config);
    manifest.add_input(&file_name(mesh_path), mesh_path)?;
    manifest.add_input(&file_name(checkpoint_path), checkpoint_path)?;
    for name in ["labels.json", "pdf.json", "segmentation.ply", "entropy.ply"] {
        manifest.add_output(name, &out.join(name))?;
    }
    manifest.save(&out.join("manifest.json"))
}

fn eval(config: Option<&RunConfig>, pred: &Path, gt: &Path, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(pred).map_err(|e| Error::io(pred, e))?;
    let labels: LabelFile =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", pred.display())))?;
    if let Some(config) = config {
        let manifest_path = pred.with_file_name("manifest.json");
        if manifest_path.exists() {
            let m = Manifest::load(&manifest_path)?;
            if m.config_hash != config.hash() {
                return Err(Error::Validation(format!(
                    "{} was produced with a different configuration",
                    pred.display()
                )));
            }
        }
    }
    let mesh = load_mesh_auto(gt)?;
    let gt_labels = mesh
        .labels()
        .ok_or_else(|| Error::Validation(format!("{} has no vertex labels", gt.display())))?;
    let mut report = evaluate(&labels.labels, gt_labels, labels.classes, Some(&mesh))?;
    if let Some(path) = checkpoint {
        report.parameter_count = Some(Checkpoint::load(path)?.architecture.parameter_count());
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(config: &RunConfig, out: &Path, count: u64, shape: Shape, noise: f64) -> Result<()> {
    create_dir(out)?;
    let mut manifest = Manifest::new("synth", config);
    for seed in config.seed..config.seed + count {
        let spec = match shape {
            Shape::Humanoid => toy_humanoid(seed),
            Shape::TwoSpheres => two_spheres(0.1),
        };
        let mesh = perturb(&generate(&spec)?, seed, noise)?;
        let name = format!("shape_{seed:04}.ply");
        save_ply(&out.join(&name), &mesh, &PlyWriteOptions::default())?;
        manifest.add_output(&name, &out.join(&name))?;
    }
    manifest.save(&out.join("manifest.json"))
}

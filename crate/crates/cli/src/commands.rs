//! The `register`, `corrupt`, `decompose` and `evaluate` commands.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use prpca_core::corruption::{corrupt, CorruptionKind, CorruptionSpec};
use prpca_core::io::{self, Visual};
use prpca_core::metrics::{ForegroundLabels, MetricsReport};
use prpca_core::registration::{
    anchor_index, median_panorama, register_static, register_video, register_with_homographies, unregister,
    RansacConfig, RegisteredVideo, RegistrationConfig, DEFAULT_CANVAS_BUDGET,
};
use prpca_core::solvers::{prpca_run, rpca_missing_run, tvrpca_missing_run, IterationRecord};
use prpca_core::{Error, Frame, MaskTensor, VideoTensor};

use crate::config::{PipelineConfig, RegistrationSource, Variant};
use crate::error::{CliError, CliResult, StageExt};
use crate::manifest::{write_file, OutputLock, RunManifest};

pub const HOMOGRAPHY_FILE: &str = "homographies.txt";
pub const EVALUATE_MANIFEST: &str = "evaluate_manifest.json";

/// Frames of one input sequence.
#[derive(Debug, Clone)]
pub struct Input {
    pub files: Vec<PathBuf>,
    /// One sequence per channel.
    pub channels: Vec<Vec<Frame>>,
}

impl Input {
    pub fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        let pattern = path_str(cfg.input()?)?;
        let files = io::list_frame_files(pattern).stage("load")?;
        let channels = io::load_frames_with(pattern, cfg.color.unwrap_or_default()).stage("load")?;
        Ok(Input { files, channels })
    }

    pub fn shape(&self) -> [usize; 3] {
        let f = &self.channels[0];
        [f[0].height(), f[0].width(), f.len()]
    }

    /// The sequence registration runs on.
    pub fn luminance(&self) -> CliResult<Vec<Frame>> {
        luminance(&self.channels)
    }
}

fn luminance(channels: &[Vec<Frame>]) -> CliResult<Vec<Frame>> {
    if channels.len() != 3 {
        return Ok(channels[0].clone());
    }
    (0..channels[0].len())
        .map(|k| {
            let y = channels[0][k].as_matrix() * 0.299
                + channels[1][k].as_matrix() * 0.587
                + channels[2][k].as_matrix() * 0.114;
            Frame::new(y.map(|v| v.clamp(0.0, 1.0))).stage("load")
        })
        .collect()
}

fn path_str(path: &Path) -> CliResult<&str> {
    path.to_str()
        .ok_or_else(|| CliError::Config(format!("path {} is not valid UTF-8", path.display())))
}

fn relative(dir: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(dir).unwrap_or(path).to_path_buf()
}

/// Foreground labels matched to `frame_files` by file stem, or by position
/// when no stems match and the counts agree.
pub fn load_labels(pattern: &Path, frame_files: &[PathBuf], height: usize, width: usize) -> CliResult<ForegroundLabels> {
    let files = io::list_frame_files(path_str(pattern)?).stage("labels")?;
    let p = frame_files.len();
    let position = |f: &PathBuf| frame_files.iter().position(|g| g.file_stem() == f.file_stem());
    let slots: Vec<usize> = if files.iter().all(|f| position(f).is_some()) {
        files.iter().map(|f| position(f).unwrap()).collect()
    } else if files.len() == p {
        (0..p).collect()
    } else {
        return Err(CliError::Config(format!(
            "{} label files neither share names with the {p} frames nor match their count",
            files.len()
        )));
    };
    let mut frames = vec![None; p];
    for (file, k) in files.iter().zip(slots) {
        let (a, b, mut masks) = io::load_masks(path_str(file)?).stage("labels")?;
        if (a, b) != (height, width) {
            return Err(CliError::Stage {
                stage: "labels",
                source: Error::Ingestion {
                    path: file.clone(),
                    reason: format!("label is {a}x{b}, frames are {height}x{width}"),
                },
            });
        }
        frames[k] = Some(masks.remove(0));
    }
    ForegroundLabels::new(height, width, frames).stage("labels")
}

/// Register `frames` according to the configured source.
pub fn register(cfg: &PipelineConfig, frames: &[Frame]) -> CliResult<RegisteredVideo> {
    match cfg.registration() {
        RegistrationSource::Auto => {
            let reg_cfg = RegistrationConfig {
                ransac: RansacConfig {
                    seed: cfg.seed(),
                    ..RansacConfig::default()
                },
                ..RegistrationConfig::default()
            };
            register_video(frames, &reg_cfg).stage("register")
        }
        RegistrationSource::Static => register_static(frames).stage("register"),
        RegistrationSource::File(path) => {
            let hs = io::read_homographies(&path).stage("register")?;
            if hs.len() != frames.len() {
                return Err(CliError::Config(format!(
                    "{} holds {} homographies for {} frames",
                    path.display(),
                    hs.len(),
                    frames.len()
                )));
            }
            register_with_homographies(frames, hs, anchor_index(frames.len()), DEFAULT_CANVAS_BUDGET).stage("register")
        }
    }
}

/// Warp another channel with homographies already estimated.
fn reuse_registration(reg: &RegisteredVideo, frames: &[Frame]) -> CliResult<RegisteredVideo> {
    register_with_homographies(frames, reg.anchored.clone(), reg.anchor, DEFAULT_CANVAS_BUDGET).stage("register")
}

/// Estimate homographies; write them with a median panorama and coverage masks.
pub fn cmd_register(cfg: &PipelineConfig) -> CliResult<RunManifest> {
    let input = Input::load(cfg)?;
    let out = cfg.output()?.to_path_buf();
    if cfg.registration() == RegistrationSource::Auto && input.shape()[2] < 2 {
        return Err(CliError::Config("internal registration needs at least 2 frames".into()));
    }
    let _lock = OutputLock::acquire(&out)?;
    let mut manifest = RunManifest::new("register", cfg.clone());
    manifest.frames = Some(input.shape());
    manifest.seeds.insert("ransac".into(), cfg.seed());
    let frames = input.luminance()?;
    let reg = manifest.time("register", || register(cfg, &frames))?;
    let (m, n) = reg.canvas_shape();
    manifest.canvas = Some([m, n, frames.len()]);
    manifest.time("write", || {
        io::write_homographies(&out.join(HOMOGRAPHY_FILE), &reg.anchored).stage("write")?;
        let pano = median_panorama(&reg.frames, &reg.mask).stage("write")?;
        io::write_png(&out.join("panorama.png"), &pano).stage("write")?;
        io::write_mask_sequence(&out.join("masks"), "mask", &reg.mask).stage("write")?;
        Ok(())
    })?;
    manifest.outputs = vec![HOMOGRAPHY_FILE.into(), "panorama.png".into(), "masks".into()];
    manifest.write(&out)?;
    Ok(manifest)
}

/// Corrupt the input and write the frames, the outlier masks and numeric dumps.
pub fn cmd_corrupt(cfg: &PipelineConfig) -> CliResult<RunManifest> {
    let level = cfg
        .level
        .ok_or_else(|| CliError::Config("corrupt needs --level".into()))?;
    let spec = CorruptionSpec::new(cfg.corruption.unwrap_or(CorruptionKind::SaltPepper), level, cfg.seed());
    spec.validate().stage("corrupt")?;
    let input = Input::load(cfg)?;
    let out = cfg.output()?.to_path_buf();
    let _lock = OutputLock::acquire(&out)?;
    let mut manifest = RunManifest::new("corrupt", cfg.clone());
    manifest.frames = Some(input.shape());
    manifest.seeds.insert("corruption".into(), spec.seed);
    let many = input.channels.len() > 1;
    for (c, channel) in input.channels.iter().enumerate() {
        let dir = if many { out.join(format!("channel_{}", c + 1)) } else { out.clone() };
        let clean = VideoTensor::from_frames(channel).stage("corrupt")?;
        let (noisy, kept) = manifest.time("corrupt", || corrupt(&clean, &spec).stage("corrupt"))?;
        let (m, n, p) = noisy.shape();
        let outliers = p * m * n - kept.count_ones();
        manifest.notes.push(format!(
            "channel {}: {outliers} of {} pixels altered ({:.4})",
            c + 1,
            m * n * p,
            outliers as f64 / (m * n * p) as f64
        ));
        manifest.time("write", || {
            for (k, file) in input.files.iter().enumerate() {
                let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                io::write_png16(&dir.join("frames").join(format!("{stem}.png")), &noisy.plane(k)).stage("write")?;
            }
            let flipped: Vec<bool> = kept.as_slice().iter().map(|&b| !b).collect();
            let outlier_mask = MaskTensor::from_vec(m, n, p, flipped).stage("write")?;
            io::write_mask_sequence(&dir.join("outliers"), "outlier", &outlier_mask).stage("write")?;
            io::write_video_dump(&dir.join("corrupted.bin"), &noisy).stage("write")?;
            io::write_video_dump(&dir.join("outliers.bin"), &mask_video(&outlier_mask)).stage("write")?;
            Ok(())
        })?;
        manifest.outputs.push(relative(&out, &dir));
    }
    manifest.write(&out)?;
    Ok(manifest)
}

fn mask_video(mask: &MaskTensor) -> VideoTensor {
    let (m, n, _) = mask.shape();
    VideoTensor::from_matrix(m, n, mask.to_matrix()).expect("mask shape is consistent")
}

/// Solver output in canvas coordinates.
#[derive(Debug, Clone)]
pub struct Components {
    pub l: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub e: Option<DMatrix<f64>>,
    pub trace: Trace,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum Trace {
    Prpca(Vec<IterationRecord>),
    /// Constraint residual per iteration.
    Residual(Vec<f64>),
    None,
}

#[derive(Serialize)]
struct PrpcaRow {
    iteration: usize,
    rel_change_l: f64,
    rel_change_s: f64,
    rel_change_e: f64,
    cost: Option<f64>,
}

#[derive(Serialize)]
struct ResidualRow {
    iteration: usize,
    residual: f64,
}

/// Run the configured variant on a registered sequence.
pub fn solve(cfg: &PipelineConfig, reg: &RegisteredVideo) -> CliResult<Components> {
    let (m, n) = reg.canvas_shape();
    let p = reg.frames.frames();
    match cfg.variant() {
        Variant::PrpcaOptshrink | Variant::PrpcaSvt => {
            let d = prpca_run(&reg.frames, &reg.mask, &cfg.solver(m, n)).stage("solve")?;
            Ok(Components {
                iterations: d.history.len(),
                l: d.l,
                s: d.s,
                e: Some(d.e),
                trace: Trace::Prpca(d.history),
            })
        }
        Variant::Rpca => {
            let (lam_l, lam_s, tau, iters) = cfg.rpca(m * n, p);
            let out = rpca_missing_run(&reg.frames, &reg.mask, lam_l, lam_s, tau, iters).stage("solve")?;
            Ok(Components {
                l: out.l,
                s: out.s,
                e: None,
                trace: Trace::None,
                iterations: iters,
            })
        }
        Variant::Tvrpca => {
            let out = tvrpca_missing_run(&reg.frames, &reg.mask, &cfg.tvrpca(m * n, p)).stage("solve")?;
            Ok(Components {
                iterations: out.residuals.len(),
                l: out.l,
                s: out.s,
                e: Some(out.e),
                trace: Trace::Residual(out.residuals),
            })
        }
    }
}

fn write_trace(path: &Path, trace: &Trace) -> CliResult<bool> {
    let csv_err = |e: csv::Error| CliError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let file = || {
        File::create(path).map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        })
    };
    match trace {
        Trace::Prpca(history) => {
            let mut w = csv::Writer::from_writer(file()?);
            for r in history {
                w.serialize(PrpcaRow {
                    iteration: r.iteration,
                    rel_change_l: r.rel_change_l,
                    rel_change_s: r.rel_change_s,
                    rel_change_e: r.rel_change_e,
                    cost: r.cost,
                })
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| csv_err(e.into()))?;
        }
        Trace::Residual(res) => {
            let mut w = csv::Writer::from_writer(file()?);
            for (k, &residual) in res.iter().enumerate() {
                w.serialize(ResidualRow {
                    iteration: k + 1,
                    residual,
                })
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| csv_err(e.into()))?;
        }
        Trace::None => return Ok(false),
    }
    Ok(true)
}

/// Unregistered `L + S` and `S`, the pair the metrics are computed on.
pub const EVAL_RECONSTRUCTION: &str = "dumps/frames_LS.bin";
pub const EVAL_FOREGROUND: &str = "dumps/frames_S.bin";

/// Write canvas and original-perspective sequences, dumps and the trace.
fn write_components(dir: &Path, reg: &RegisteredVideo, comps: &Components) -> CliResult<(VideoTensor, VideoTensor)> {
    let (m, n) = reg.canvas_shape();
    let video = |x: &DMatrix<f64>| VideoTensor::from_matrix(m, n, x.clone()).stage("write");
    let l = video(&comps.l)?;
    let s = video(&comps.s)?;
    let ls = video(&(&comps.l + &comps.s))?;
    let mut named: Vec<(&str, VideoTensor, Visual)> = vec![("L", l, Visual::Intensity), ("S", s, Visual::Signed)];
    if let Some(e) = &comps.e {
        named.push(("E", video(e)?, Visual::Signed));
    }
    let dumps = dir.join("dumps");
    fs::create_dir_all(&dumps).map_err(|source| CliError::Output {
        path: dumps.clone(),
        source,
    })?;
    for (name, v, visual) in &named {
        io::write_png_sequence(&dir.join("panorama"), name, v, *visual).stage("write")?;
        io::write_video_dump(&dumps.join(format!("panorama_{name}.bin")), v).stage("write")?;
    }
    io::write_video_dump(&dumps.join("panorama_M.bin"), &mask_video(&reg.mask)).stage("write")?;

    named.push(("LS", ls, Visual::Intensity));
    let refs: Vec<&VideoTensor> = named.iter().map(|(_, v, _)| v).collect();
    let back = unregister(&refs, reg).stage("write")?;
    for ((name, _, visual), v) in named.iter().zip(&back) {
        io::write_png_sequence(&dir.join("frames"), name, v, *visual).stage("write")?;
        io::write_video_dump(&dumps.join(format!("frames_{name}.bin")), v).stage("write")?;
    }
    let background = median_panorama(&named[0].1, &reg.mask).stage("write")?;
    io::write_png(&dir.join("background.png"), &background).stage("write")?;
    write_trace(&dir.join("trace.csv"), &comps.trace)?;
    let ls_back = back.last().expect("LS is always written").clone();
    Ok((ls_back, back[1].clone()))
}

/// Register, decompose and write every artifact; evaluate when labels are given.
pub fn cmd_decompose(cfg: &PipelineConfig) -> CliResult<RunManifest> {
    let input = Input::load(cfg)?;
    let out = cfg.output()?.to_path_buf();
    let spec = cfg.corruption_spec()?;
    if let Some(spec) = &spec {
        spec.validate().stage("corrupt")?;
    }
    let truth_input = match &cfg.truth {
        Some(path) => {
            let t = Input::load(&PipelineConfig {
                input: Some(path.clone()),
                ..cfg.clone()
            })?;
            if t.shape() != input.shape() || t.channels.len() != input.channels.len() {
                return Err(CliError::Config(format!(
                    "truth frames {:?} do not match input frames {:?}",
                    t.shape(),
                    input.shape()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let [a, b, p] = input.shape();
    let label_files = truth_input.as_ref().map_or(&input.files, |t| &t.files);
    let labels = match &cfg.labels {
        Some(path) => Some(load_labels(path, label_files, a, b)?),
        None => None,
    };
    if let RegistrationSource::File(path) = cfg.registration() {
        if !path.exists() {
            return Err(CliError::Stage {
                stage: "register",
                source: Error::Ingestion {
                    path,
                    reason: "homography file not found".into(),
                },
            });
        }
    }

    let _lock = OutputLock::acquire(&out)?;
    let mut manifest = RunManifest::new("decompose", cfg.clone());
    manifest.frames = Some(input.shape());
    manifest.seeds.insert("ransac".into(), cfg.seed());

    let mut channels = input.channels.clone();
    if let Some(spec) = spec {
        manifest.seeds.insert("corruption".into(), spec.seed);
        manifest.time("corrupt", || {
            for ch in channels.iter_mut() {
                let clean = VideoTensor::from_frames(ch).stage("corrupt")?;
                let (noisy, _) = corrupt(&clean, &spec).stage("corrupt")?;
                *ch = (0..p).map(|k| Frame::new(noisy.plane(k))).collect::<Result<_, _>>().stage("corrupt")?;
            }
            Ok(())
        })?;
    }
    // Without explicit truth, corrupted runs are scored against the loaded frames.
    let truth_channels = match (&truth_input, cfg.corruption.is_some()) {
        (Some(t), _) => Some(t.channels.clone()),
        (None, true) => Some(input.channels.clone()),
        (None, false) => None,
    };

    let luma = luminance(&channels)?;
    let reg = manifest.time("register", || register(cfg, &luma))?;
    let (m, n) = reg.canvas_shape();
    manifest.canvas = Some([m, n, p]);
    manifest.config = cfg.resolved(m, n, p);
    io::write_homographies(&out.join(HOMOGRAPHY_FILE), &reg.anchored).stage("write")?;
    manifest.outputs.push(HOMOGRAPHY_FILE.into());

    let many = channels.len() > 1;
    for (c, ch) in channels.iter().enumerate() {
        let dir = if many { out.join(format!("channel_{}", c + 1)) } else { out.clone() };
        let reg_c = if many { reuse_registration(&reg, ch)? } else { reg.clone() };
        let stage = if many { format!("solve_channel_{}", c + 1) } else { "solve".to_string() };
        let comps = manifest.time(&stage, || solve(cfg, &reg_c))?;
        manifest.iterations = Some(comps.iterations);
        if matches!(comps.trace, Trace::None) {
            manifest.notes.push("this variant records no per-iteration trace".into());
        }
        let (ls, s) = manifest.time("write", || write_components(&dir, &reg_c, &comps))?;
        manifest.outputs.push(relative(&out, &dir));
        if let (Some(labels), Some(truth)) = (&labels, &truth_channels) {
            let clean = VideoTensor::from_frames(&truth[c]).stage("evaluate")?;
            let report = manifest.time("evaluate", || {
                Ok(MetricsReport::evaluate(&ls, &s, &clean, labels, cfg.threshold()?))
            })?;
            io::write_metrics(&dir, &report).stage("evaluate")?;
        } else if labels.is_some() {
            manifest.notes.push("labels given without truth frames; metrics skipped".into());
        }
    }
    write_file(&out.join("config.toml"), manifest.config.to_toml()?)?;
    manifest.write(&out)?;
    Ok(manifest)
}

/// Score a decomposition directory against clean frames and labels.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> CliResult<(MetricsReport, RunManifest)> {
    let dir = cfg.input()?.to_path_buf();
    let out = cfg.output.clone().unwrap_or_else(|| dir.clone());
    let truth_path = cfg
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs --truth".into()))?;
    let policy = cfg.threshold()?;
    let mut manifest = RunManifest::new("evaluate", cfg.clone());
    let (rec, fg) = manifest.time("load", || {
        let rec = io::read_video_dump(&dir.join(EVAL_RECONSTRUCTION)).stage("load")?;
        let fg = io::read_video_dump(&dir.join(EVAL_FOREGROUND)).stage("load")?;
        Ok((rec, fg))
    })?;
    let truth = Input::load(&PipelineConfig {
        input: Some(truth_path.clone()),
        color: Some(Default::default()),
        ..Default::default()
    })?;
    let [a, b, p] = truth.shape();
    if rec.shape() != (a, b, p) {
        return Err(CliError::Config(format!(
            "decomposition is {:?}, truth frames are {a}x{b}x{p}",
            rec.shape()
        )));
    }
    let labels = match &cfg.labels {
        Some(path) => load_labels(path, &truth.files, a, b)?,
        None => ForegroundLabels::new(a, b, vec![None; p]).stage("labels")?,
    };
    let clean = VideoTensor::from_frames(&truth.channels[0]).stage("load")?;
    let report = manifest.time("evaluate", || Ok(MetricsReport::evaluate(&rec, &fg, &clean, &labels, policy)))?;
    manifest.frames = Some([a, b, p]);
    let _lock = OutputLock::acquire(&out)?;
    io::write_metrics(&out, &report).stage("write")?;
    manifest.outputs = vec!["metrics.txt".into(), "metrics.json".into()];
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&out.join(EVALUATE_MANIFEST), json)?;
    Ok((report, manifest))
}

//! End-to-end orchestration: track a sequence directory, evaluate estimated
//! meshes against ground truth, and export metric point clouds.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::energy::EnergyBreakdown;
use crate::features::{
    build_correspondences, correspondences_from_pairs, putative_match, read_correspondence_csv,
    BlobDetector, Correspondence, Detector, FeatureError, GrayImage, Keypoint,
};
use crate::mesh::{
    build_canonical_mesh, mesh_from_obj, read_obj, transform_point, write_obj, CanonicalMesh,
    MeshError, MeshState, Vertex3,
};
use crate::rgbd::{frame_paths, segment_foreground, Manifest, RgbdError, RgbdFrame};
use crate::solver::{prefactor, solve_frame, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rgbd(#[from] RgbdError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame/vertex count mismatch: {0}")]
    CountMismatch(String),
    #[error("config error: {0}")]
    Config(String),
}

/// Where per-frame correspondences come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorrespondenceSource {
    /// Feature detection + putative matching against the canonical frame.
    Detector,
    /// `corr_%05d.csv` files in the sequence directory.
    Csv,
    /// No correspondence term input (the textureless regime).
    None,
}

/// Where the canonical mesh comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalSource {
    /// Segment frame 0 and build the hexagonal mesh over it.
    FromFrame,
    /// Load an OBJ written off-line (for example a ground-truth mesh).
    FromObj(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sequence: PathBuf,
    pub output: PathBuf,
    pub spacing: f64,
    /// Overrides the manifest band when set.
    pub z_band: Option<(f64, f64)>,
    pub solver: SolverConfig,
    pub correspondence_source: CorrespondenceSource,
    pub canonical_source: CanonicalSource,
    /// Gate for putative matching, in pixels; defaults to 3 x spacing.
    pub match_gate: Option<f64>,
}

impl RunConfig {
    pub fn new(sequence: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        RunConfig {
            sequence: sequence.into(),
            output: output.into(),
            spacing: 16.0,
            z_band: None,
            solver: SolverConfig::default(),
            correspondence_source: CorrespondenceSource::Csv,
            canonical_source: CanonicalSource::FromFrame,
            match_gate: None,
        }
    }
}

/// Tracking result summary.
#[derive(Debug, Clone)]
pub struct TrackReport {
    pub frames: usize,
    pub vertex_count: usize,
    pub dropped_correspondences: usize,
}

fn load_frame(dir: &Path, t: usize) -> Result<RgbdFrame, PipelineError> {
    let (ppm, pgm) = frame_paths(dir, t);
    Ok(RgbdFrame::load(&ppm, &pgm)?)
}

/// State carried by the detector path across frames: per canonical keypoint,
/// its last known current-frame position.
struct DetectorState {
    detector: BlobDetector,
    canonical_kps: Vec<Keypoint>,
    last_positions: Vec<(f64, f64)>,
    attachments: Vec<Option<crate::mesh::BarycentricAttachment>>,
}

impl DetectorState {
    fn init(
        frame0: &RgbdFrame,
        seg0: &crate::rgbd::Segmentation,
        mesh: &CanonicalMesh,
    ) -> Self {
        let detector = BlobDetector::default();
        let gray = GrayImage::from_frame(frame0);
        let canonical_kps = detector.detect(&gray, &seg0.foreground);
        let last_positions = canonical_kps.iter().map(|k| (k.x, k.y)).collect();
        let attachments = canonical_kps
            .iter()
            .map(|k| {
                frame0
                    .sample_depth(k.x, k.y)
                    .ok()
                    .flatten()
                    .and_then(|z| crate::mesh::barycentric_coords(Vertex3::new(k.x, k.y, z), mesh).ok())
            })
            .collect();
        DetectorState { detector, canonical_kps, last_positions, attachments }
    }

    fn correspondences_for(
        &mut self,
        frame: &RgbdFrame,
        seg: &crate::rgbd::Segmentation,
        mesh: &CanonicalMesh,
        canonical_frame: &RgbdFrame,
        prev_state: &MeshState,
        gate: f64,
    ) -> (Vec<Correspondence>, usize) {
        let gray = GrayImage::from_frame(frame);
        let current = self.detector.detect(&gray, &seg.foreground);
        // unmatched canonical features fall back to their transform under the
        // previous mesh estimate
        for (i, att) in self.attachments.iter().enumerate() {
            if let Some(att) = att {
                let p = transform_point(mesh, att, prev_state);
                if self.last_positions[i] == (self.canonical_kps[i].x, self.canonical_kps[i].y) {
                    self.last_positions[i] = (p.x, p.y);
                }
            }
        }
        let matches = putative_match(&self.canonical_kps, &current, &self.last_positions, gate);
        for m in &matches {
            self.last_positions[m.canonical] = (current[m.current].x, current[m.current].y);
        }
        let (corrs, drops) = build_correspondences(
            &matches,
            &self.canonical_kps,
            &current,
            mesh,
            canonical_frame,
            frame,
        );
        (corrs, drops.outside_mesh + drops.invalid_depth)
    }
}

/// Track a sequence: frame 0 fixes the canonical mesh, frames 1..N-1 are
/// solved sequentially. Writes `est_%05d.obj` and `energy.csv` to the output
/// directory.
pub fn track(config: &RunConfig) -> Result<TrackReport, PipelineError> {
    config
        .solver
        .params
        .validate()
        .map_err(PipelineError::Config)?;
    let manifest = Manifest::load(&config.sequence.join("manifest.txt"))?;
    let (z_near, z_far) = config.z_band.unwrap_or((manifest.z_near, manifest.z_far));
    std::fs::create_dir_all(&config.output)?;

    let frame0 = load_frame(&config.sequence, 0)?;
    let seg0 = segment_foreground(&frame0, z_near, z_far)?;
    let mesh = match &config.canonical_source {
        CanonicalSource::FromFrame => {
            build_canonical_mesh(&seg0.foreground, &frame0, config.spacing)?
        }
        CanonicalSource::FromObj(path) => mesh_from_obj(path)?,
    };
    let system = prefactor(&mesh.smoothness, config.solver.params.alpha)?;
    let gate = config.match_gate.unwrap_or(3.0 * mesh.spacing);

    let mut detector_state = match config.correspondence_source {
        CorrespondenceSource::Detector => Some(DetectorState::init(&frame0, &seg0, &mesh)),
        _ => None,
    };

    let mut state = MeshState::from_mesh(&mesh);
    write_obj(&config.output.join("est_00000.obj"), &state, &mesh.triangles)?;
    let mut trace_file = BufWriter::new(std::fs::File::create(config.output.join("energy.csv"))?);
    writeln!(trace_file, "frame,iter,smooth,corr,depth,bound,total")?;
    let mut dropped = 0usize;

    for t in 1..manifest.frames {
        let frame = load_frame(&config.sequence, t)?;
        let seg = segment_foreground(&frame, z_near, z_far)?;
        let correspondences = match config.correspondence_source {
            CorrespondenceSource::None => Vec::new(),
            CorrespondenceSource::Csv => {
                let path = config.sequence.join(format!("corr_{t:05}.csv"));
                let pairs = read_correspondence_csv(&path)?;
                let (corrs, drops) = correspondences_from_pairs(&pairs, &mesh);
                dropped += drops.outside_mesh + drops.invalid_depth;
                corrs
            }
            CorrespondenceSource::Detector => {
                let ds = detector_state.as_mut().expect("detector state");
                let (corrs, drops) =
                    ds.correspondences_for(&frame, &seg, &mesh, &frame0, &state, gate);
                dropped += drops;
                corrs
            }
        };
        let (next, trace) =
            solve_frame(&state, &mesh, &frame, &seg, &correspondences, &system, &config.solver)?;
        write_trace(&mut trace_file, t, &trace)?;
        state = next;
        write_obj(&config.output.join(format!("est_{t:05}.obj")), &state, &mesh.triangles)?;
    }
    Ok(TrackReport { frames: manifest.frames, vertex_count: mesh.n(), dropped_correspondences: dropped })
}

fn write_trace(
    f: &mut impl Write,
    frame: usize,
    trace: &[EnergyBreakdown],
) -> Result<(), PipelineError> {
    for (it, b) in trace.iter().enumerate() {
        writeln!(
            f,
            "{},{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            frame, it, b.smoothness, b.correspondence, b.depth, b.boundary, b.total
        )?;
    }
    Ok(())
}

/// Per-frame and aggregate error metrics, index-matched vertices.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_frame: Vec<(f64, f64)>, // (rmse, max error)
    pub mean_rmse: f64,
    pub mean_max: f64,
}

fn obj_series(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for t in 0.. {
        let p = dir.join(format!("{prefix}_{t:05}.obj"));
        if !p.exists() {
            break;
        }
        out.push(p);
    }
    Ok(out)
}

/// RMSE and max vertex error per frame between estimated and truth meshes.
pub fn evaluate(est_dir: &Path, truth_dir: &Path) -> Result<EvalReport, PipelineError> {
    let est = obj_series(est_dir, "est")?;
    let truth = obj_series(truth_dir, "truth")?;
    if est.is_empty() || est.len() != truth.len() {
        return Err(PipelineError::CountMismatch(format!(
            "{} estimated vs {} truth frames",
            est.len(),
            truth.len()
        )));
    }
    let mut per_frame = Vec::with_capacity(est.len());
    for (e, t) in est.iter().zip(&truth) {
        let (ev, _) = read_obj(e)?;
        let (tv, _) = read_obj(t)?;
        if ev.len() != tv.len() {
            return Err(PipelineError::CountMismatch(format!(
                "{} vs {} vertices in {}",
                ev.len(),
                tv.len(),
                e.display()
            )));
        }
        per_frame.push(frame_errors(&ev, &tv));
    }
    let n = per_frame.len() as f64;
    let mean_rmse = per_frame.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_max = per_frame.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(EvalReport { per_frame, mean_rmse, mean_max })
}

pub fn frame_errors(est: &[Vertex3], truth: &[Vertex3]) -> (f64, f64) {
    let mut sum2 = 0.0;
    let mut max = 0.0f64;
    for (e, t) in est.iter().zip(truth) {
        let d = e.sub(*t).norm();
        sum2 += d * d;
        max = max.max(d);
    }
    ((sum2 / est.len() as f64).sqrt(), max)
}

pub fn write_metrics(report: &EvalReport, path: &Path) -> Result<(), PipelineError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "frame,rmse,max_err")?;
    for (t, (rmse, max)) in report.per_frame.iter().enumerate() {
        writeln!(f, "{},{:.6},{:.6}", t, rmse, max)?;
    }
    writeln!(f, "mean,{:.6},{:.6}", report.mean_rmse, report.mean_max)?;
    Ok(())
}

/// Pinhole intrinsics for metric export.
#[derive(Debug, Clone, Copy)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Convert an estimated mesh from (col, row, depth) to metric camera
/// coordinates and write it as an OBJ point cloud with faces preserved.
pub fn export_cloud(
    mesh_path: &Path,
    out_path: &Path,
    intrinsics: &Intrinsics,
) -> Result<(), PipelineError> {
    let (vertices, triangles) = read_obj(mesh_path)?;
    let metric: Vec<Vertex3> = vertices
        .iter()
        .map(|v| {
            Vertex3::new(
                (v.x - intrinsics.cx) * v.z / intrinsics.fx,
                (v.y - intrinsics.cy) * v.z / intrinsics.fy,
                v.z,
            )
        })
        .collect();
    let state = MeshState {
        x: metric.iter().map(|v| v.x).collect(),
        y: metric.iter().map(|v| v.y).collect(),
        z: metric.iter().map(|v| v.z).collect(),
    };
    write_obj(out_path, &state, &triangles)?;
    Ok(())
}

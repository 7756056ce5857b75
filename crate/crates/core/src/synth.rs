//! Synthetic RGBD sequences with exact ground-truth mesh trajectories and
//! planted correspondences, covering the tracked scenarios (translation,
//! slant, bend, out-of-plane rotation, self-occluding fold).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::features::write_correspondence_csv;
use crate::mesh::{
    build_canonical_mesh, write_obj, CanonicalMesh, MeshError, MeshState, Vertex3,
};
use crate::rgbd::{Bitmap, Manifest, RgbdError, RgbdFrame};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rgbd(#[from] RgbdError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}

/// Closed-form ground-truth motions. Each is the identity at t = 0 and
/// continuous in t.
#[derive(Debug, Clone, Copy)]
pub enum DeformationKind {
    /// Constant per-frame translation.
    Translate { dx: f64, dy: f64, dz: f64 },
    /// Rotation about the bottom horizontal edge, up to theta_max at the last frame.
    Slant { theta_max: f64 },
    /// Wrap around a horizontal-axis cylinder whose curvature grows to kappa_max.
    CylinderBend { kappa_max: f64 },
    /// Rotation about the vertical axis through the mesh center.
    OutOfPlaneRotate { theta_max: f64 },
    /// The part below a horizontal crease rotates over it toward the camera.
    FoldOcclude { theta_max: f64, crease_frac: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct DeformationModel {
    pub kind: DeformationKind,
    pub frames: usize,
}

/// Ground-truth state at frame t.
pub fn deform(model: &DeformationModel, mesh: &CanonicalMesh, t: usize) -> MeshState {
    assert!(t < model.frames, "frame index out of range");
    let s = if model.frames <= 1 { 0.0 } else { t as f64 / (model.frames - 1) as f64 };
    let canonical = MeshState::from_mesh(mesh);
    let n = mesh.n();
    let (mut min_x, mut max_x, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut min_y = f64::INFINITY;
    for v in &mesh.vertices {
        min_x = min_x.min(v.x);
        max_x = max_x.max(v.x);
        min_y = min_y.min(v.y);
        max_y = max_y.max(v.y);
    }
    let center_x = 0.5 * (min_x + max_x);
    let z_ref = canonical.z.iter().sum::<f64>() / n as f64;

    let mut out = canonical.clone();
    match model.kind {
        DeformationKind::Translate { dx, dy, dz } => {
            for i in 0..n {
                out.x[i] += dx * t as f64;
                out.y[i] += dy * t as f64;
                out.z[i] += dz * t as f64;
            }
        }
        DeformationKind::Slant { theta_max } => {
            // rotate about the horizontal line y = max_y in the plane z = z_ref
            let theta = s * theta_max;
            let (sin, cos) = theta.sin_cos();
            for i in 0..n {
                let dy = canonical.y[i] - max_y;
                let dz = canonical.z[i] - z_ref;
                out.y[i] = max_y + dy * cos - dz * sin;
                out.z[i] = z_ref + dy * sin + dz * cos;
            }
        }
        DeformationKind::CylinderBend { kappa_max } => {
            let kappa = s * kappa_max;
            if kappa > 1e-9 {
                let radius = 1.0 / kappa;
                for i in 0..n {
                    let arc = canonical.x[i] - center_x;
                    let phi = arc / radius;
                    out.x[i] = center_x + radius * phi.sin();
                    out.z[i] = canonical.z[i] - radius * (1.0 - phi.cos());
                }
            }
        }
        DeformationKind::OutOfPlaneRotate { theta_max } => {
            // rotate about the vertical line x = center_x in the plane z = z_ref
            let theta = s * theta_max;
            let (sin, cos) = theta.sin_cos();
            for i in 0..n {
                let dx = canonical.x[i] - center_x;
                let dz = canonical.z[i] - z_ref;
                out.x[i] = center_x + dx * cos - dz * sin;
                out.z[i] = z_ref + dx * sin + dz * cos;
            }
        }
        DeformationKind::FoldOcclude { theta_max, crease_frac } => {
            let crease_y = min_y + crease_frac * (max_y - min_y);
            let theta = s * theta_max;
            let (sin, cos) = theta.sin_cos();
            for i in 0..n {
                let dy = canonical.y[i] - crease_y;
                if dy > 0.0 {
                    let dz = canonical.z[i] - z_ref;
                    // fold toward the camera (z decreases)
                    out.y[i] = crease_y + dy * cos - dz * sin;
                    out.z[i] = z_ref - dy * sin + dz * cos;
                }
            }
        }
    }
    out
}

/// A canonical-plane texture image, anchored at `origin` in pixel coordinates.
#[derive(Debug, Clone)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub origin: (f64, f64),
    pub data: Vec<[u8; 3]>,
}

impl Texture {
    pub fn flat(width: usize, height: usize, origin: (f64, f64), gray: u8) -> Self {
        Texture { width, height, origin, data: vec![[gray; 3]; width * height] }
    }

    /// Seeded high-contrast random blobs on a gray base, `density` blobs per
    /// 100x100 canonical pixels.
    pub fn random_blobs(
        width: usize,
        height: usize,
        origin: (f64, f64),
        density: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut tex = Texture::flat(width, height, origin, 120);
        let count = (density * (width * height) as f64 / 10_000.0).round() as usize;
        for _ in 0..count {
            let cx = rng.gen_range(0..width) as f64;
            let cy = rng.gen_range(0..height) as f64;
            let rad = rng.gen_range(2.5..6.0);
            let bright: u8 = if rng.gen_bool(0.5) { 250 } else { 10 };
            for r in 0..height {
                for c in 0..width {
                    let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
                    if d2 <= rad * rad {
                        tex.data[r * width + c] = [bright; 3];
                    }
                }
            }
        }
        tex
    }

    fn sample(&self, x: f64, y: f64) -> [u8; 3] {
        let c = ((x - self.origin.0).round() as isize).clamp(0, self.width as isize - 1) as usize;
        let r = ((y - self.origin.1).round() as isize).clamp(0, self.height as isize - 1) as usize;
        self.data[r * self.width + c]
    }
}

/// Rasterize the deformed mesh with a z-buffer (nearest surface wins). Depth
/// is barycentrically interpolated; color comes from the canonical-plane
/// texture. Background pixels carry invalid depth (0) and black.
pub fn render(
    mesh: &CanonicalMesh,
    state: &MeshState,
    texture: &Texture,
    width: usize,
    height: usize,
) -> RgbdFrame {
    let mut frame = RgbdFrame::new(width, height);
    let mut zbuf = vec![f64::INFINITY; width * height];
    for tri in &mesh.triangles {
        let [i, j, k] = *tri;
        let (a, b, c) = (state.vertex(i), state.vertex(j), state.vertex(k));
        let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if det.abs() < 1e-12 {
            continue; // edge-on in projection
        }
        let min_c = a.x.min(b.x).min(c.x).floor().max(0.0) as usize;
        let max_c = (a.x.max(b.x).max(c.x).ceil() as usize).min(width.saturating_sub(1));
        let min_r = a.y.min(b.y).min(c.y).floor().max(0.0) as usize;
        let max_r = (a.y.max(b.y).max(c.y).ceil() as usize).min(height.saturating_sub(1));
        for r in min_r..=max_r {
            for col in min_c..=max_c {
                let px = col as f64;
                let py = r as f64;
                let w0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / det;
                let w1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / det;
                let w2 = 1.0 - w0 - w1;
                if w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9 {
                    continue;
                }
                let z = w0 * a.z + w1 * b.z + w2 * c.z;
                let p = r * width + col;
                if z < zbuf[p] {
                    zbuf[p] = z;
                    frame.depth[p] = z.round().clamp(1.0, 65535.0) as u16;
                    let (vi, vj, vk) =
                        (mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
                    let tx = w0 * vi.x + w1 * vj.x + w2 * vk.x;
                    let ty = w0 * vi.y + w1 * vj.y + w2 * vk.y;
                    frame.color[p] = texture.sample(tx, ty);
                }
            }
        }
    }
    frame
}

/// Additive Gaussian depth noise plus random invalid-pixel dropout on the
/// rendered surface.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub sigma: f64,
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { sigma: 2.0, dropout: 0.01 }
    }
}

pub fn apply_noise(frame: &mut RgbdFrame, noise: &NoiseModel, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, noise.sigma.max(1e-12)).unwrap();
    for d in frame.depth.iter_mut() {
        if *d == 0 {
            continue;
        }
        if noise.dropout > 0.0 && rng.gen_bool(noise.dropout) {
            *d = 0;
            continue;
        }
        if noise.sigma > 0.0 {
            let v = *d as f64 + normal.sample(rng);
            *d = v.round().clamp(1.0, 65535.0) as u16;
        }
    }
}

/// Fixed pseudo-random barycentric sample points, reused across frames so the
/// same canonical point is tracked through the whole sequence.
fn sample_points(mesh: &CanonicalMesh, density: f64, seed: u64) -> Vec<(usize, [f64; 3])> {
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for v in &mesh.vertices {
        min_x = min_x.min(v.x);
        max_x = max_x.max(v.x);
        min_y = min_y.min(v.y);
        max_y = max_y.max(v.y);
    }
    let area = (max_x - min_x) * (max_y - min_y);
    let count = (density * area / 10_000.0).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706c616e74);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0..mesh.triangles.len());
            let mut u = rng.gen_range(0.0..1.0);
            let mut v = rng.gen_range(0.0..1.0);
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            (t, [u, v, 1.0 - u - v])
        })
        .collect()
}

fn point_at(mesh: &CanonicalMesh, state: &MeshState, tri: usize, beta: [f64; 3]) -> Vertex3 {
    let [i, j, k] = mesh.triangles[tri];
    Vertex3::new(
        beta[0] * state.x[i] + beta[1] * state.x[j] + beta[2] * state.x[k],
        beta[0] * state.y[i] + beta[1] * state.y[j] + beta[2] * state.y[k],
        beta[0] * state.z[i] + beta[1] * state.z[j] + beta[2] * state.z[k],
    )
}

/// Canonical/observed pairs at frame t; points occluded in the rendered frame
/// are dropped.
pub fn plant_correspondences(
    model: &DeformationModel,
    mesh: &CanonicalMesh,
    density: f64,
    seed: u64,
    t: usize,
    rendered: &RgbdFrame,
) -> Vec<(Vertex3, Vertex3)> {
    let samples = sample_points(mesh, density, seed);
    let canonical = MeshState::from_mesh(mesh);
    let state = deform(model, mesh, t);
    let mut out = Vec::new();
    for (tri, beta) in samples {
        let chat = point_at(mesh, &canonical, tri, beta);
        let c = point_at(mesh, &state, tri, beta);
        let visible = match rendered.sample_depth(c.x, c.y) {
            Ok(Some(d)) => (d - c.z).abs() <= 1.5,
            _ => false,
        };
        if visible {
            out.push((chat, c));
        }
    }
    out
}

/// Named scenario presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Translate,
    Slant,
    Bend,
    Rotate,
    Fold,
    TexturelessRotate,
}

impl std::str::FromStr for Scenario {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        match s {
            "translate" => Ok(Scenario::Translate),
            "slant" => Ok(Scenario::Slant),
            "bend" => Ok(Scenario::Bend),
            "rotate" => Ok(Scenario::Rotate),
            "fold" => Ok(Scenario::Fold),
            "textureless-rotate" => Ok(Scenario::TexturelessRotate),
            _ => Err(SynthError::UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub spacing: f64,
    /// Planted features per 100x100 canonical pixels; 0 = textureless.
    pub density: f64,
    pub noise: NoiseModel,
    /// Object rest depth.
    pub z0: f64,
}

impl SynthConfig {
    pub fn preset(scenario: Scenario, seed: u64) -> Self {
        let density = match scenario {
            Scenario::TexturelessRotate => 0.0,
            Scenario::Bend => 2.0,
            _ => 12.0,
        };
        SynthConfig {
            scenario,
            seed,
            frames: 20,
            width: 240,
            height: 220,
            spacing: 16.0,
            density,
            noise: NoiseModel::default(),
            z0: 800.0,
        }
    }

    pub fn model(&self) -> DeformationModel {
        let kind = match self.scenario {
            Scenario::Translate => DeformationKind::Translate { dx: 1.5, dy: 0.5, dz: 2.0 },
            Scenario::Slant => DeformationKind::Slant { theta_max: 45f64.to_radians() },
            Scenario::Bend => DeformationKind::CylinderBend { kappa_max: 1.0 / 140.0 },
            Scenario::Rotate | Scenario::TexturelessRotate => {
                DeformationKind::OutOfPlaneRotate { theta_max: 40f64.to_radians() }
            }
            Scenario::Fold => {
                DeformationKind::FoldOcclude { theta_max: 150f64.to_radians(), crease_frac: 2.0 / 3.0 }
            }
        };
        DeformationModel { kind, frames: self.frames }
    }

    pub fn z_band(&self) -> (f64, f64) {
        (self.z0 - 250.0, self.z0 + 250.0)
    }
}

/// Everything one synthetic sequence produces, in memory.
pub struct SyntheticSequence {
    pub mesh: CanonicalMesh,
    pub frames: Vec<RgbdFrame>,
    pub truth_states: Vec<MeshState>,
    pub planted: Vec<Vec<(Vertex3, Vertex3)>>,
    pub manifest: Manifest,
}

/// Build the canonical rectangle object, deform, render, and plant
/// correspondences for every frame. Deterministic in the seed.
pub fn generate_sequence(config: &SynthConfig) -> Result<SyntheticSequence, SynthError> {
    let (w, h) = (config.width, config.height);
    // rectangular object centered in the image
    let (ow, oh) = (w * 55 / 100, h * 60 / 100);
    let (c0, r0) = ((w - ow) / 2, (h - oh) / 2);
    let mut mask = Bitmap::new(w, h);
    let mut flat = RgbdFrame::new(w, h);
    for r in r0..r0 + oh {
        for c in c0..c0 + ow {
            mask.set(c, r, true);
            flat.depth[r * w + c] = config.z0 as u16;
        }
    }
    let mesh = build_canonical_mesh(&mask, &flat, config.spacing)?;

    let mut tex_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x746578);
    let (min_x, min_y, bw, bh) = {
        let (mut min_x, mut max_x, mut min_y, mut max_y) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in &mesh.vertices {
            min_x = min_x.min(v.x);
            max_x = max_x.max(v.x);
            min_y = min_y.min(v.y);
            max_y = max_y.max(v.y);
        }
        (min_x, min_y, (max_x - min_x).ceil() as usize + 1, (max_y - min_y).ceil() as usize + 1)
    };
    let texture = if config.density > 0.0 {
        Texture::random_blobs(bw, bh, (min_x, min_y), config.density, &mut tex_rng)
    } else {
        Texture::flat(bw, bh, (min_x, min_y), 120)
    };

    let model = config.model();
    let mut frames = Vec::with_capacity(config.frames);
    let mut truth_states = Vec::with_capacity(config.frames);
    let mut planted = Vec::with_capacity(config.frames);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e6f697365);
    for t in 0..config.frames {
        let state = deform(&model, &mesh, t);
        let clean = render(&mesh, &state, &texture, w, h);
        let pairs = plant_correspondences(&model, &mesh, config.density, config.seed, t, &clean);
        let mut frame = clean;
        apply_noise(&mut frame, &config.noise, &mut noise_rng);
        frames.push(frame);
        truth_states.push(state);
        planted.push(pairs);
    }
    let (z_near, z_far) = config.z_band();
    Ok(SyntheticSequence {
        mesh,
        frames,
        truth_states,
        planted,
        manifest: Manifest { z_near, z_far, frames: config.frames },
    })
}

/// Write a sequence directory: manifest, frame pairs, ground-truth meshes,
/// and per-frame correspondence CSVs.
pub fn write_sequence(seq: &SyntheticSequence, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    seq.manifest.save(&dir.join("manifest.txt"))?;
    for (t, frame) in seq.frames.iter().enumerate() {
        let (ppm, pgm) = crate::rgbd::frame_paths(dir, t);
        frame.save_ppm(&ppm)?;
        frame.save_pgm(&pgm)?;
        write_obj(&dir.join(format!("truth_{t:05}.obj")), &seq.truth_states[t], &seq.mesh.triangles)?;
        write_correspondence_csv(&dir.join(format!("corr_{t:05}.csv")), t, &seq.planted[t])?;
    }
    Ok(())
}

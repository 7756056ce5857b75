//! The four-term energy and its analytic gradients with respect to the
//! per-axis coordinate vectors.

use crate::features::Correspondence;
use crate::mesh::{transform_point, CanonicalMesh, MeshState};
use crate::rgbd::{nearest_boundary_point3d, RgbdError, RgbdFrame, Segmentation};
use crate::sparse::SparseMat;

#[derive(Debug, Clone, Copy)]
pub struct EnergyParams {
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub lambda_b: f64,
    /// Adaptation rate of the semi-implicit update; larger means smaller steps.
    pub alpha: f64,
    /// Depth residuals larger than this are treated as occlusion and skipped.
    pub occlusion_threshold: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            lambda_c: 1.3,
            lambda_d: 0.6,
            lambda_b: 0.8,
            alpha: 10.0,
            occlusion_threshold: 30.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha <= 0.0 {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        for (name, v) in [
            ("lambda_c", self.lambda_c),
            ("lambda_d", self.lambda_d),
            ("lambda_b", self.lambda_b),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyBreakdown {
    pub smoothness: f64,
    pub correspondence: f64,
    pub depth: f64,
    pub boundary: f64,
    pub total: f64,
}

/// A term's value and its gradient per axis.
#[derive(Debug, Clone)]
pub struct TermEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub grad_z: Vec<f64>,
}

impl TermEval {
    fn zeros(n: usize) -> Self {
        TermEval { value: 0.0, grad_x: vec![0.0; n], grad_y: vec![0.0; n], grad_z: vec![0.0; n] }
    }
}

/// Psi_S = 1/2 (X^T K X + Y^T K Y + Z^T K Z); gradient (KX, KY, KZ).
pub fn psi_smoothness(state: &MeshState, k: &SparseMat) -> TermEval {
    assert_eq!(state.n(), k.n());
    let gx = k.matvec(&state.x);
    let gy = k.matvec(&state.y);
    let gz = k.matvec(&state.z);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let value = 0.5 * (dot(&state.x, &gx) + dot(&state.y, &gy) + dot(&state.z, &gz));
    TermEval { value, grad_x: gx, grad_y: gy, grad_z: gz }
}

/// Psi_C = 1/2 sum ||c_i - T_V(chat_i)||^2; gradient scatters -beta times the
/// residual into the attached vertex slots.
pub fn psi_correspondence(
    state: &MeshState,
    mesh: &CanonicalMesh,
    correspondences: &[Correspondence],
) -> TermEval {
    let mut out = TermEval::zeros(state.n());
    for corr in correspondences {
        let t = transform_point(mesh, &corr.attachment, state);
        let r = corr.observed_point.sub(t);
        out.value += 0.5 * (r.x * r.x + r.y * r.y + r.z * r.z);
        let [i, j, k] = mesh.triangles[corr.attachment.triangle];
        for (slot, &b) in [i, j, k].iter().zip(&corr.attachment.beta) {
            out.grad_x[*slot] -= r.x * b;
            out.grad_y[*slot] -= r.y * b;
            out.grad_z[*slot] -= r.z * b;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DepthEval {
    pub value: f64,
    pub skipped: usize,
}

/// Psi_D = 1/2 sum |d(x_i, y_i) - z_i|^2 over vertices with a usable depth
/// sample; z-gradient element i is -(d - z_i). Residuals beyond the occlusion
/// threshold are skipped, as are out-of-bounds or invalid samples.
pub fn psi_depth(
    state: &MeshState,
    frame: &RgbdFrame,
    occlusion_threshold: f64,
) -> (DepthEval, Vec<f64>) {
    let n = state.n();
    let mut grad_z = vec![0.0; n];
    let mut eval = DepthEval::default();
    for i in 0..n {
        let d = match frame.sample_depth(state.x[i], state.y[i]) {
            Ok(Some(d)) => d,
            _ => {
                eval.skipped += 1;
                continue;
            }
        };
        let r = d - state.z[i];
        if r.abs() > occlusion_threshold {
            eval.skipped += 1;
            continue;
        }
        eval.value += 0.5 * r * r;
        grad_z[i] = -r;
    }
    (eval, grad_z)
}

/// Psi_B in displacement form: each boundary vertex is pulled toward its
/// nearest current-frame boundary point. Value 1/2 sum ||b(v_i) - v_i||^2;
/// gradient is the negated residual in the vertex slots.
pub fn psi_boundary(
    state: &MeshState,
    mesh: &CanonicalMesh,
    seg: &Segmentation,
    frame: &RgbdFrame,
) -> Result<TermEval, RgbdError> {
    let mut out = TermEval::zeros(state.n());
    for &i in &mesh.boundary {
        let v = state.vertex(i);
        if v.x < 0.0
            || v.y < 0.0
            || v.x > (frame.width - 1) as f64
            || v.y > (frame.height - 1) as f64
        {
            continue; // transient overshoot contributes nothing
        }
        let b = nearest_boundary_point3d(seg, frame, v)?;
        let r = b.sub(v);
        out.value += 0.5 * (r.x * r.x + r.y * r.y + r.z * r.z);
        out.grad_x[i] = -r.x;
        out.grad_y[i] = -r.y;
        out.grad_z[i] = -r.z;
    }
    Ok(out)
}

/// Scalar diagnostic form of the boundary term: difference between current and
/// canonical nearest-boundary distances per boundary vertex.
pub fn boundary_distance_diagnostic(
    state: &MeshState,
    mesh: &CanonicalMesh,
    seg: &Segmentation,
    frame: &RgbdFrame,
    canonical_seg: &Segmentation,
    canonical_frame: &RgbdFrame,
) -> Result<f64, RgbdError> {
    let mut value = 0.0;
    for &i in &mesh.boundary {
        let v = state.vertex(i);
        let vhat = mesh.vertices[i];
        let g = nearest_boundary_point3d(seg, frame, v)?.sub(v).norm();
        let ghat = nearest_boundary_point3d(canonical_seg, canonical_frame, vhat)?.sub(vhat).norm();
        value += 0.5 * (g - ghat) * (g - ghat);
    }
    Ok(value)
}

/// Everything the data terms need for one frame.
pub struct EnergyInputs<'a> {
    pub mesh: &'a CanonicalMesh,
    pub frame: &'a RgbdFrame,
    pub seg: &'a Segmentation,
    pub correspondences: &'a [Correspondence],
}

/// Weighted total per the four-term decomposition. Terms with zero weight are
/// not evaluated.
pub fn psi_total(
    state: &MeshState,
    inputs: &EnergyInputs,
    params: &EnergyParams,
) -> Result<EnergyBreakdown, RgbdError> {
    let smoothness = psi_smoothness(state, &inputs.mesh.smoothness).value;
    let correspondence = if params.lambda_c > 0.0 {
        psi_correspondence(state, inputs.mesh, inputs.correspondences).value
    } else {
        0.0
    };
    let depth = if params.lambda_d > 0.0 {
        psi_depth(state, inputs.frame, params.occlusion_threshold).0.value
    } else {
        0.0
    };
    let boundary = if params.lambda_b > 0.0 {
        psi_boundary(state, inputs.mesh, inputs.seg, inputs.frame)?.value
    } else {
        0.0
    };
    Ok(EnergyBreakdown {
        smoothness,
        correspondence,
        depth,
        boundary,
        total: smoothness
            + params.lambda_c * correspondence
            + params.lambda_d * depth
            + params.lambda_b * boundary,
    })
}

//! Semi-implicit per-frame minimization: the smoothness term is treated at the
//! new iterate, data terms at the previous one, so each iteration is three
//! solves against the constant matrix K + alpha I.

use thiserror::Error;

use crate::energy::{
    psi_correspondence, psi_depth, psi_total, EnergyBreakdown, EnergyInputs, EnergyParams,
};
use crate::features::Correspondence;
use crate::mesh::{CanonicalMesh, MeshState};
use crate::rgbd::{nearest_boundary_point3d, RgbdError, RgbdFrame, Segmentation};
use crate::sparse::SparseMat;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("system is not positive definite (pivot {0} at row {1})")]
    NotPositiveDefinite(f64, usize),
    #[error("solver diverged: non-finite coordinate at iteration {0}")]
    Diverged(usize),
    #[error(transparent)]
    Rgbd(#[from] RgbdError),
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub params: EnergyParams,
    pub max_iterations: usize,
    /// Max per-vertex displacement below which a frame is converged.
    pub convergence_tol: f64,
    /// Iterations between re-evaluating depth samples and boundary targets.
    pub refresh_data_terms_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            params: EnergyParams::default(),
            max_iterations: 100,
            convergence_tol: 0.01,
            refresh_data_terms_every: 1,
        }
    }
}

/// K + alpha I with a reusable skyline Cholesky factor.
pub struct FactoredSystem {
    pub matrix: SparseMat,
    factor: SkylineCholesky,
}

impl FactoredSystem {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve(rhs)
    }
}

/// Lower-triangular Cholesky factor stored by row envelope: row i holds
/// columns first[i]..=i. Fill during factorization stays inside the envelope.
struct SkylineCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SkylineCholesky {
    fn factor(a: &SparseMat) -> Result<Self, SolverError> {
        let n = a.n();
        let mut first = vec![0usize; n];
        for i in 0..n {
            first[i] = a.row(i).map(|(j, _)| j).filter(|&j| j <= i).min().unwrap_or(i).min(i);
        }
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; i - first[i] + 1];
                for (j, v) in a.row(i) {
                    if j >= first[i] && j <= i {
                        row[j - first[i]] = v;
                    }
                }
                row
            })
            .collect();
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut sum = rows[i][j - first[i]];
                for k in lo..j {
                    sum -= rows[i][k - first[i]] * rows[j][k - first[j]];
                }
                if j < i {
                    let ljj = rows[j][j - first[j]];
                    rows[i][j - first[i]] = sum / ljj;
                } else {
                    if sum <= 0.0 {
                        return Err(SolverError::NotPositiveDefinite(sum, i));
                    }
                    rows[i][j - first[i]] = sum.sqrt();
                }
            }
        }
        Ok(SkylineCholesky { first, rows })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in self.first[i]..i {
                sum -= self.rows[i][k - self.first[i]] * y[k];
            }
            y[i] = sum / self.rows[i][i - self.first[i]];
        }
        for i in (0..n).rev() {
            y[i] /= self.rows[i][i - self.first[i]];
            let xi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.rows[i][k - self.first[i]] * xi;
            }
        }
        y
    }
}

/// Factor K + alpha I once; K and alpha are constant across a sequence.
pub fn prefactor(k: &SparseMat, alpha: f64) -> Result<FactoredSystem, SolverError> {
    if alpha <= 0.0 {
        return Err(SolverError::NotPositiveDefinite(alpha, 0));
    }
    let n = k.n();
    let mut triplets: Vec<(usize, usize, f64)> =
        (0..n).map(|i| (i, i, alpha)).collect();
    for i in 0..n {
        for (j, v) in k.row(i) {
            triplets.push((i, j, v));
        }
    }
    let matrix = SparseMat::from_triplets(n, &triplets);
    let factor = SkylineCholesky::factor(&matrix)?;
    Ok(FactoredSystem { matrix, factor })
}

/// Per-axis explicit data forces (the right-hand-side sums beyond alpha V_{t-1}).
#[derive(Debug, Clone)]
pub struct DataForces {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl DataForces {
    pub fn zeros(n: usize) -> Self {
        DataForces { x: vec![0.0; n], y: vec![0.0; n], z: vec![0.0; n] }
    }
}

/// One semi-implicit step: solve (K + alpha I) V_t = alpha V_{t-1} + forces
/// per axis with the shared factorization.
pub fn iterate(
    state_prev: &MeshState,
    system: &FactoredSystem,
    forces: &DataForces,
    alpha: f64,
) -> MeshState {
    let n = state_prev.n();
    let rhs = |prev: &[f64], f: &[f64]| -> Vec<f64> {
        (0..n).map(|i| alpha * prev[i] + f[i]).collect()
    };
    MeshState {
        x: system.solve(&rhs(&state_prev.x, &forces.x)),
        y: system.solve(&rhs(&state_prev.y, &forces.y)),
        z: system.solve(&rhs(&state_prev.z, &forces.z)),
    }
}

/// Cached per-vertex data-term targets, refreshed every
/// `refresh_data_terms_every` iterations.
struct TargetCache {
    /// Depth sample at each vertex's (x, y), None when unusable.
    depth: Vec<Option<f64>>,
    /// Nearest-boundary 3D point per boundary vertex (indexed like mesh.boundary).
    boundary: Vec<Option<crate::mesh::Vertex3>>,
}

fn refresh_targets(
    state: &MeshState,
    mesh: &CanonicalMesh,
    frame: &RgbdFrame,
    seg: &Segmentation,
) -> Result<TargetCache, SolverError> {
    let n = state.n();
    let mut depth = vec![None; n];
    for i in 0..n {
        if let Ok(d) = frame.sample_depth(state.x[i], state.y[i]) {
            depth[i] = d;
        }
    }
    let mut boundary = vec![None; mesh.boundary.len()];
    for (bi, &i) in mesh.boundary.iter().enumerate() {
        let v = state.vertex(i);
        if v.x < 0.0
            || v.y < 0.0
            || v.x > (frame.width - 1) as f64
            || v.y > (frame.height - 1) as f64
        {
            continue;
        }
        boundary[bi] = Some(nearest_boundary_point3d(seg, frame, v)?);
    }
    Ok(TargetCache { depth, boundary })
}

/// Assemble the explicit forces at the previous iterate from cached targets.
fn assemble_forces(
    state: &MeshState,
    mesh: &CanonicalMesh,
    correspondences: &[Correspondence],
    targets: &TargetCache,
    params: &EnergyParams,
) -> DataForces {
    let n = state.n();
    let mut f = DataForces::zeros(n);

    if params.lambda_c > 0.0 && !correspondences.is_empty() {
        let e = psi_correspondence(state, mesh, correspondences);
        for i in 0..n {
            f.x[i] -= params.lambda_c * e.grad_x[i];
            f.y[i] -= params.lambda_c * e.grad_y[i];
            f.z[i] -= params.lambda_c * e.grad_z[i];
        }
    }
    if params.lambda_d > 0.0 {
        for i in 0..n {
            if let Some(d) = targets.depth[i] {
                let r = d - state.z[i];
                if r.abs() <= params.occlusion_threshold {
                    f.z[i] += params.lambda_d * r;
                }
            }
        }
    }
    if params.lambda_b > 0.0 {
        for (bi, &i) in mesh.boundary.iter().enumerate() {
            if let Some(b) = targets.boundary[bi] {
                f.x[i] += params.lambda_b * (b.x - state.x[i]);
                f.y[i] += params.lambda_b * (b.y - state.y[i]);
                f.z[i] += params.lambda_b * (b.z - state.z[i]);
            }
        }
    }
    f
}

/// Minimize the frame energy starting from the previous frame's solution.
/// Returns the converged state and the per-iteration energy trace.
pub fn solve_frame(
    state_init: &MeshState,
    mesh: &CanonicalMesh,
    frame: &RgbdFrame,
    seg: &Segmentation,
    correspondences: &[Correspondence],
    system: &FactoredSystem,
    config: &SolverConfig,
) -> Result<(MeshState, Vec<EnergyBreakdown>), SolverError> {
    let params = &config.params;
    let refresh_every = config.refresh_data_terms_every.max(1);
    let mut state = state_init.clone();
    let mut trace = Vec::new();
    let mut targets = refresh_targets(&state, mesh, frame, seg)?;
    for it in 0..config.max_iterations {
        if it > 0 && it % refresh_every == 0 {
            targets = refresh_targets(&state, mesh, frame, seg)?;
        }
        let forces = assemble_forces(&state, mesh, correspondences, &targets, params);
        let next = iterate(&state, system, &forces, params.alpha);
        if !next.is_finite() {
            return Err(SolverError::Diverged(it));
        }
        let disp = next.max_displacement(&state);
        state = next;
        let inputs = EnergyInputs { mesh, frame, seg, correspondences };
        trace.push(psi_total(&state, &inputs, params)?);
        if disp < config.convergence_tol {
            break;
        }
    }
    Ok((state, trace))
}

/// Depth-term skip count at a state, for reporting.
pub fn depth_skip_count(state: &MeshState, frame: &RgbdFrame, params: &EnergyParams) -> usize {
    psi_depth(state, frame, params.occlusion_threshold).0.skipped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::psi_smoothness;
    use crate::features::Correspondence;
    use crate::mesh::{build_canonical_mesh, transform_point, BarycentricAttachment, Vertex3};
    use crate::rgbd::{segment_foreground, Bitmap};
    use rand::{Rng, SeedableRng};

    fn grid_mesh(w: usize, h: usize, spacing: f64) -> (CanonicalMesh, RgbdFrame) {
        let mut mask = Bitmap::new(w, h);
        for r in 0..h {
            for c in 0..w {
                mask.set(c, r, true);
            }
        }
        let mut frame = RgbdFrame::new(w, h);
        frame.depth.fill(800);
        (build_canonical_mesh(&mask, &frame, spacing).unwrap(), frame)
    }

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()).unwrap();
            m.swap(col, piv);
            x.swap(col, piv);
            let p = m[col][col];
            for r in col + 1..n {
                let f = m[r][col] / p;
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            x[col] /= m[col][col];
            for r in 0..col {
                x[r] -= m[r][col] * x[col];
            }
        }
        x
    }

    #[test]
    fn identity_system_when_k_zero() {
        let k = SparseMat::zero(5);
        let sys = prefactor(&k, 1.0).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
        let x = sys.solve(&b);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn alpha_nonpositive_rejected() {
        let k = SparseMat::zero(3);
        assert!(matches!(prefactor(&k, 0.0), Err(SolverError::NotPositiveDefinite(_, _))));
    }

    #[test]
    fn chain_matches_dense_inverse() {
        let k = crate::mesh::smoothness_matrix(&[[0, 1, 2]], 3);
        let sys = prefactor(&k, 0.5).unwrap();
        let a = sys.matrix.to_dense();
        let b = vec![1.0, 2.0, -1.0];
        let got = sys.solve(&b);
        let want = dense_solve(&a, &b);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_solve_matches_dense_oracle() {
        let (mesh, _) = grid_mesh(90, 80, 10.0);
        let sys = prefactor(&mesh.smoothness, 2.5).unwrap();
        let a = sys.matrix.to_dense();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let b: Vec<f64> = (0..mesh.n()).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let got = sys.solve(&b);
            let want = dense_solve(&a, &b);
            let max_diff = got
                .iter()
                .zip(&want)
                .map(|(g, w)| (g - w).abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-8, "max diff {max_diff}");
            // residual check
            let r = sys.matrix.matvec(&got);
            let binf = b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-10 * binf.max(1.0));
            }
        }
    }

    #[test]
    fn affine_state_is_fixed_point_without_forces() {
        let (mesh, _) = grid_mesh(70, 70, 10.0);
        let sys = prefactor(&mesh.smoothness, 10.0).unwrap();
        let state = MeshState::from_mesh(&mesh); // canonical is affine
        let forces = DataForces::zeros(mesh.n());
        let next = iterate(&state, &sys, &forces, 10.0);
        assert!(next.max_displacement(&state) < 1e-9);
    }

    /// With no forces the iteration contracts toward K's nullspace; verified
    /// against a dense eigendecomposition via repeated application.
    #[test]
    fn pure_smoothing_converges_to_nullspace_projection() {
        let (mesh, _) = grid_mesh(46, 44, 10.0);
        assert!(mesh.n() <= 50, "n = {}", mesh.n());
        let alpha = 10.0;
        let sys = prefactor(&mesh.smoothness, alpha).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let mut state = MeshState::from_mesh(&mesh);
        for v in state.z.iter_mut() {
            *v += rng.gen_range(-20.0..20.0);
        }
        // single-step check: next = alpha (K + alpha I)^-1 state, per axis
        let forces = DataForces::zeros(mesh.n());
        let next = iterate(&state, &sys, &forces, alpha);
        let scaled: Vec<f64> = state.z.iter().map(|z| alpha * z).collect();
        let want = sys.solve(&scaled);
        for (g, w) in next.z.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10);
        }
        // iterate to convergence; limit must satisfy K z = 0
        let mut cur = state;
        for _ in 0..8000 {
            cur = iterate(&cur, &sys, &forces, alpha);
        }
        let kz = mesh.smoothness.matvec(&cur.z);
        let scale = cur.z.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for v in kz {
            assert!(v.abs() < 1e-6 * scale.max(1.0));
        }
        // the nullspace projection preserves affine content: mean preserved
        // on each lattice line is hard to state simply; check energy ~ 0
        assert!(psi_smoothness(&cur, &mesh.smoothness).value < 1e-8);
    }

    fn pin_correspondences(
        mesh: &CanonicalMesh,
        offsets: &[(usize, Vertex3)],
    ) -> Vec<Correspondence> {
        let canonical = MeshState::from_mesh(mesh);
        offsets
            .iter()
            .map(|&(t, off)| {
                let att = BarycentricAttachment { triangle: t, beta: [0.4, 0.35, 0.25] };
                let p = transform_point(mesh, &att, &canonical);
                Correspondence {
                    canonical_point: p,
                    attachment: att,
                    observed_point: p.add(off),
                    descriptor_distance: 0.0,
                }
            })
            .collect()
    }

    /// The fully quadratic subproblem (smoothness + correspondence) is solved
    /// exactly; compare to the dense normal-equations minimizer.
    #[test]
    fn converged_state_matches_dense_quadratic_minimizer() {
        let (mesh, frame) = grid_mesh(50, 48, 10.0);
        let n = mesh.n();
        assert!(n <= 50);
        let lambda_c = 1.3;
        // spread attachments so no affine mode is left nearly unconstrained
        // (three collinear pins make the iteration crawl)
        let nt = mesh.triangles.len();
        let corrs = pin_correspondences(
            &mesh,
            &[
                (0, Vertex3::new(3.0, -1.0, 12.0)),
                (nt / 5, Vertex3::new(-2.0, 2.0, -8.0)),
                (nt / 2, Vertex3::new(0.5, -1.5, 4.0)),
                (3 * nt / 4, Vertex3::new(-1.0, 0.5, -3.0)),
                (nt - 1, Vertex3::new(1.0, 1.5, 5.0)),
            ],
        );
        let params = EnergyParams {
            lambda_c,
            lambda_d: 0.0,
            lambda_b: 0.0,
            ..EnergyParams::default()
        };
        let config = SolverConfig {
            params,
            max_iterations: 50_000,
            convergence_tol: 1e-12,
            refresh_data_terms_every: 1,
        };
        let seg = {
            let mut f2 = frame.clone();
            f2.depth.fill(800);
            segment_foreground(&f2, 700.0, 900.0).unwrap()
        };
        let sys = prefactor(&mesh.smoothness, params.alpha).unwrap();
        let init = MeshState::from_mesh(&mesh);
        let (state, _) =
            solve_frame(&init, &mesh, &frame, &seg, &corrs, &sys, &config).unwrap();

        // dense oracle: (K + lambda_c sum B B^T) v = lambda_c sum target B
        let mut a = mesh.smoothness.to_dense();
        let mut rhs_x = vec![0.0; n];
        let mut rhs_y = vec![0.0; n];
        let mut rhs_z = vec![0.0; n];
        for corr in &corrs {
            let [i, j, k] = mesh.triangles[corr.attachment.triangle];
            let slots = [i, j, k];
            for (si, &bi) in corr.attachment.beta.iter().enumerate() {
                for (sj, &bj) in corr.attachment.beta.iter().enumerate() {
                    a[slots[si]][slots[sj]] += lambda_c * bi * bj;
                }
                rhs_x[slots[si]] += lambda_c * bi * corr.observed_point.x;
                rhs_y[slots[si]] += lambda_c * bi * corr.observed_point.y;
                rhs_z[slots[si]] += lambda_c * bi * corr.observed_point.z;
            }
        }
        let want_x = dense_solve(&a, &rhs_x);
        let want_y = dense_solve(&a, &rhs_y);
        let want_z = dense_solve(&a, &rhs_z);
        for i in 0..n {
            let d = ((state.x[i] - want_x[i]).powi(2)
                + (state.y[i] - want_y[i]).powi(2)
                + (state.z[i] - want_z[i]).powi(2))
            .sqrt();
            assert!(d <= 1e-6 * mesh.spacing, "vertex {i} off by {d}");
        }
    }

    #[test]
    fn fixed_point_residual_at_convergence() {
        let (mesh, frame) = grid_mesh(60, 60, 10.0);
        let seg = segment_foreground(&frame, 700.0, 900.0).unwrap();
        // several spread pins so every affine mode contracts; boundary off
        // because its nearest-pixel targets are piecewise constant, so the
        // iteration can hop between pixels instead of settling this tight
        let nt = mesh.triangles.len();
        let corrs = pin_correspondences(
            &mesh,
            &[
                (0, Vertex3::new(2.0, 1.0, 6.0)),
                (nt / 3, Vertex3::new(-1.0, 2.0, -4.0)),
                (2 * nt / 3, Vertex3::new(1.5, -0.5, 3.0)),
                (nt - 1, Vertex3::new(-0.5, 1.0, 2.0)),
            ],
        );
        // small alpha: the fixed point is alpha-independent but the step
        // toward it scales like 1/alpha, and this test needs a tight limit
        let params = EnergyParams { lambda_b: 0.0, alpha: 0.5, ..EnergyParams::default() };
        let config = SolverConfig {
            params,
            max_iterations: 50_000,
            convergence_tol: 1e-9,
            ..SolverConfig::default()
        };
        let sys = prefactor(&mesh.smoothness, config.params.alpha).unwrap();
        let init = MeshState::from_mesh(&mesh);
        let (state, trace) = solve_frame(&init, &mesh, &frame, &seg, &corrs, &sys, &config).unwrap();
        assert!(trace.len() < config.max_iterations, "did not converge: {} iters", trace.len());
        let (again, _) = solve_frame(
            &state,
            &mesh,
            &frame,
            &seg,
            &corrs,
            &sys,
            &SolverConfig { max_iterations: 1, ..config },
        )
        .unwrap();
        let resid = again.max_displacement(&state);
        assert!(resid < config.convergence_tol * 10.0, "residual {resid}");
    }

    #[test]
    fn stationary_frame_converges_quickly() {
        let (mesh, frame) = grid_mesh(60, 60, 10.0);
        let seg = segment_foreground(&frame, 700.0, 900.0).unwrap();
        // perfect correspondences at the canonical positions; boundary off
        // because its pull toward the silhouette moves any clipped mesh
        let corrs = pin_correspondences(&mesh, &[(0, Vertex3::new(0.0, 0.0, 0.0))]);
        let config = SolverConfig {
            params: EnergyParams { lambda_b: 0.0, ..EnergyParams::default() },
            ..SolverConfig::default()
        };
        let sys = prefactor(&mesh.smoothness, config.params.alpha).unwrap();
        let init = MeshState::from_mesh(&mesh);
        let (state, trace) =
            solve_frame(&init, &mesh, &frame, &seg, &corrs, &sys, &config).unwrap();
        assert!(trace.len() <= 5, "took {} iterations", trace.len());
        assert!(state.max_displacement(&init) < 0.05);
    }

    #[test]
    fn energy_trend_is_downward() {
        let (mesh, frame) = grid_mesh(70, 64, 10.0);
        let seg = segment_foreground(&frame, 700.0, 900.0).unwrap();
        let corrs = pin_correspondences(
            &mesh,
            &[(1, Vertex3::new(4.0, 2.0, 15.0)), (5, Vertex3::new(-3.0, 1.0, -10.0))],
        );
        let config = SolverConfig { max_iterations: 20, convergence_tol: 1e-12, ..Default::default() };
        let sys = prefactor(&mesh.smoothness, config.params.alpha).unwrap();
        let init = MeshState::from_mesh(&mesh);
        let (_, trace) = solve_frame(&init, &mesh, &frame, &seg, &corrs, &sys, &config).unwrap();
        assert!(trace.len() >= 10);
        assert!(trace[9].total <= trace[0].total);
    }

    /// Permuting vertex indices permutes the solution.
    #[test]
    fn solution_independent_of_vertex_ordering() {
        let (mesh, frame) = grid_mesh(48, 44, 10.0);
        let n = mesh.n();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let pvertices: Vec<Vertex3> = perm.iter().map(|&o| mesh.vertices[o]).collect();
        let ptris: Vec<[usize; 3]> = mesh
            .triangles
            .iter()
            .map(|t| [inv[t[0]], inv[t[1]], inv[t[2]]])
            .collect();
        let pmesh = crate::mesh::finish_mesh(pvertices, ptris, mesh.spacing).unwrap();

        let seg = segment_foreground(&frame, 700.0, 900.0).unwrap();
        let mk_corr = |m: &CanonicalMesh, tri: usize| {
            let canonical = MeshState::from_mesh(m);
            let att = BarycentricAttachment { triangle: tri, beta: [0.5, 0.3, 0.2] };
            let p = transform_point(m, &att, &canonical);
            Correspondence {
                canonical_point: p,
                attachment: att,
                observed_point: p.add(Vertex3::new(2.0, -1.0, 8.0)),
                descriptor_distance: 0.0,
            }
        };
        // same physical triangle in both meshes
        let corr_a = mk_corr(&mesh, 0);
        let phys = mesh.triangles[0].map(|v| inv[v]);
        let tri_b = pmesh
            .triangles
            .iter()
            .position(|t| {
                let mut s = *t;
                let mut p = phys;
                s.sort_unstable();
                p.sort_unstable();
                s == p
            })
            .unwrap();
        let canonical_b = MeshState::from_mesh(&pmesh);
        let att_b = crate::mesh::barycentric_coords(corr_a.canonical_point, &pmesh).unwrap();
        let _ = canonical_b;
        let _ = tri_b;
        let corr_b = Correspondence {
            canonical_point: corr_a.canonical_point,
            attachment: att_b,
            observed_point: corr_a.observed_point,
            descriptor_distance: 0.0,
        };

        let config = SolverConfig {
            max_iterations: 2000,
            convergence_tol: 1e-10,
            ..SolverConfig::default()
        };
        let sys_a = prefactor(&mesh.smoothness, config.params.alpha).unwrap();
        let sys_b = prefactor(&pmesh.smoothness, config.params.alpha).unwrap();
        let params_no_data = EnergyParams { lambda_d: 0.0, lambda_b: 0.0, ..config.params };
        let config = SolverConfig { params: params_no_data, ..config };
        let (sa, _) = solve_frame(
            &MeshState::from_mesh(&mesh),
            &mesh,
            &frame,
            &seg,
            &[corr_a],
            &sys_a,
            &config,
        )
        .unwrap();
        let (sb, _) = solve_frame(
            &MeshState::from_mesh(&pmesh),
            &pmesh,
            &frame,
            &seg,
            &[corr_b],
            &sys_b,
            &config,
        )
        .unwrap();
        for old in 0..n {
            let new = inv[old];
            let d = sa.vertex(old).sub(sb.vertex(new)).norm();
            assert!(d <= 1e-9 * 100.0, "vertex {old}: diff {d}");
        }
    }
}

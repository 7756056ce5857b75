//! Canonical hexagonal triangle mesh, collinear-triplet smoothness structure,
//! and barycentric point attachment.

use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::rgbd::{Bitmap, RgbdFrame};
use crate::sparse::SparseMat;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("foreground mask is empty")]
    EmptyMask,
    #[error("degenerate mesh: no triangle survived clipping")]
    DegenerateMesh,
    #[error("point ({0}, {1}) lies outside every mesh triangle")]
    OutsideMesh(f64, f64),
    #[error("triangle {0} is singular in projection")]
    SingularTriangle(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad OBJ file: {0}")]
    Parse(String),
}

/// A 3D point in (pixel-column, pixel-row, depth) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vertex3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vertex3 { x, y, z }
    }

    pub fn sub(self, o: Vertex3) -> Vertex3 {
        Vertex3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Vertex3) -> Vertex3 {
        Vertex3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// The undeformed reference mesh. Immutable once built.
#[derive(Debug, Clone)]
pub struct CanonicalMesh {
    pub vertices: Vec<Vertex3>,
    /// Vertex index triples, consistent winding.
    pub triangles: Vec<[usize; 3]>,
    /// Ordered (i, j, k): two connected, equidistant, collinear edges through j.
    pub triplets: Vec<[usize; 3]>,
    /// Vertices with degree != 6, ascending.
    pub boundary: Vec<usize>,
    /// Grid edge length in pixels.
    pub spacing: f64,
    /// K = K_col^T K_col, n x n, symmetric PSD.
    pub smoothness: SparseMat,
}

/// Per-frame mesh coordinates, one vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl MeshState {
    pub fn from_mesh(mesh: &CanonicalMesh) -> Self {
        MeshState {
            x: mesh.vertices.iter().map(|v| v.x).collect(),
            y: mesh.vertices.iter().map(|v| v.y).collect(),
            z: mesh.vertices.iter().map(|v| v.z).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn vertex(&self, i: usize) -> Vertex3 {
        Vertex3::new(self.x[i], self.y[i], self.z[i])
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).chain(&self.z).all(|v| v.is_finite())
    }

    /// Largest per-vertex Euclidean displacement between two states.
    pub fn max_displacement(&self, other: &MeshState) -> f64 {
        (0..self.n())
            .map(|i| self.vertex(i).sub(other.vertex(i)).norm())
            .fold(0.0, f64::max)
    }
}

/// A point expressed as convex weights over one triangle's vertices.
#[derive(Debug, Clone, Copy)]
pub struct BarycentricAttachment {
    pub triangle: usize,
    pub beta: [f64; 3],
}

const BETA_TOL: f64 = 1e-9;

impl CanonicalMesh {
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary.binary_search(&i).is_ok()
    }
}

/// Build the canonical mesh over a foreground mask: a hexagonal grid of
/// equilateral triangles covering the mask's bounding box, clipped to
/// triangles whose centroid lies inside the mask. Vertex depth comes from the
/// depth image, with holes filled from the nearest valid mask pixel.
pub fn build_canonical_mesh(
    mask: &Bitmap,
    frame: &RgbdFrame,
    spacing: f64,
) -> Result<CanonicalMesh, MeshError> {
    assert!(spacing >= 2.0, "spacing below 2 pixels");
    let mut min_c = usize::MAX;
    let mut max_c = 0usize;
    let mut min_r = usize::MAX;
    let mut max_r = 0usize;
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(c, r) {
                min_c = min_c.min(c);
                max_c = max_c.max(c);
                min_r = min_r.min(r);
                max_r = max_r.max(r);
            }
        }
    }
    if min_c == usize::MAX {
        return Err(MeshError::EmptyMask);
    }

    let row_step = spacing * 3f64.sqrt() / 2.0;
    let n_rows = ((max_r - min_r) as f64 / row_step).ceil() as usize + 2;
    let n_cols = ((max_c - min_c) as f64 / spacing).ceil() as usize + 2;
    let grid_xy = |r: usize, c: usize| -> (f64, f64) {
        let off = if r % 2 == 1 { spacing / 2.0 } else { 0.0 };
        (min_c as f64 + c as f64 * spacing + off - spacing / 2.0, min_r as f64 + r as f64 * row_step)
    };

    let inside = |x: f64, y: f64| -> bool {
        if x < 0.0 || y < 0.0 {
            return false;
        }
        mask.get(x.round() as usize, y.round() as usize)
    };

    // grid triangles whose centroid lands in the mask
    let mut grid_tris: Vec<[(usize, usize); 3]> = Vec::new();
    for r in 0..n_rows - 1 {
        for c in 0..n_cols - 1 {
            let pair: [[(usize, usize); 3]; 2] = if r % 2 == 0 {
                [
                    [(r, c), (r, c + 1), (r + 1, c)],
                    [(r, c + 1), (r + 1, c + 1), (r + 1, c)],
                ]
            } else {
                [
                    [(r, c), (r + 1, c), (r + 1, c + 1)],
                    [(r, c), (r, c + 1), (r + 1, c + 1)],
                ]
            };
            for tri in pair {
                let (mut cx, mut cy) = (0.0, 0.0);
                for &(tr, tc) in &tri {
                    let (x, y) = grid_xy(tr, tc);
                    cx += x / 3.0;
                    cy += y / 3.0;
                }
                if inside(cx, cy) {
                    grid_tris.push(tri);
                }
            }
        }
    }
    if grid_tris.is_empty() {
        return Err(MeshError::DegenerateMesh);
    }

    // reindex surviving vertices in (row, col) order
    let mut used: Vec<(usize, usize)> =
        grid_tris.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let index: std::collections::HashMap<(usize, usize), usize> =
        used.iter().enumerate().map(|(i, &rc)| (rc, i)).collect();

    let mut vertices = Vec::with_capacity(used.len());
    for &(r, c) in &used {
        let (x, y) = grid_xy(r, c);
        let z = vertex_depth(frame, mask, x, y);
        vertices.push(Vertex3::new(x, y, z));
    }

    let mut triangles: Vec<[usize; 3]> = grid_tris
        .iter()
        .map(|tri| [index[&tri[0]], index[&tri[1]], index[&tri[2]]])
        .collect();
    // consistent winding: positive signed area in image coordinates
    for tri in &mut triangles {
        let [a, b, c] = *tri;
        let (va, vb, vc) = (vertices[a], vertices[b], vertices[c]);
        let cross = (vb.x - va.x) * (vc.y - va.y) - (vb.y - va.y) * (vc.x - va.x);
        if cross < 0.0 {
            tri.swap(1, 2);
        }
    }

    finish_mesh(vertices, triangles, spacing)
}

/// Depth at a vertex position: bilinear sample, else nearest valid mask pixel.
fn vertex_depth(frame: &RgbdFrame, mask: &Bitmap, x: f64, y: f64) -> f64 {
    if let Ok(Some(d)) = frame.sample_depth(x, y) {
        return d;
    }
    let mut best = (f64::INFINITY, 0.0);
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(c, r) && frame.valid(c, r) {
                let d2 = (c as f64 - x).powi(2) + (r as f64 - y).powi(2);
                if d2 < best.0 {
                    best = (d2, frame.depth_at(c, r) as f64);
                }
            }
        }
    }
    best.1
}

/// Derive triplets, boundary set, and K for a given vertex/triangle set.
/// Also the entry point for meshes loaded from OBJ.
pub fn finish_mesh(
    vertices: Vec<Vertex3>,
    triangles: Vec<[usize; 3]>,
    spacing: f64,
) -> Result<CanonicalMesh, MeshError> {
    if triangles.is_empty() {
        return Err(MeshError::DegenerateMesh);
    }
    let n = vertices.len();
    let mut neighbors: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for tri in &triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            neighbors[a].insert(b);
            neighbors[b].insert(a);
        }
    }

    // collinear triplets: for every middle vertex j, neighbor pairs (i, k)
    // with v_i - 2 v_j + v_k = 0 in projection; validated geometrically
    let tol = 1e-6 * spacing;
    let mut triplets = Vec::new();
    for j in 0..n {
        let nbrs: Vec<usize> = neighbors[j].iter().copied().collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &k in &nbrs[a + 1..] {
                let rx = vertices[i].x - 2.0 * vertices[j].x + vertices[k].x;
                let ry = vertices[i].y - 2.0 * vertices[j].y + vertices[k].y;
                if rx.abs() <= tol && ry.abs() <= tol {
                    triplets.push([i, j, k]);
                }
            }
        }
    }
    triplets.sort_unstable();

    let boundary: Vec<usize> = (0..n).filter(|&i| neighbors[i].len() != 6).collect();
    let smoothness = smoothness_matrix(&triplets, n);
    Ok(CanonicalMesh { vertices, triangles, triplets, boundary, spacing, smoothness })
}

/// K = K_col^T K_col where each triplet contributes a row (+1, -2, +1).
pub fn smoothness_matrix(triplets: &[[usize; 3]], n: usize) -> SparseMat {
    let mut entries = Vec::with_capacity(triplets.len() * 9);
    for &[i, j, k] in triplets {
        assert!(i < n && j < n && k < n, "triplet index out of bounds");
        let stamp = [(i, 1.0), (j, -2.0), (k, 1.0)];
        for &(a, ca) in &stamp {
            for &(b, cb) in &stamp {
                entries.push((a, b, ca * cb));
            }
        }
    }
    SparseMat::from_triplets(n, &entries)
}

/// Barycentric coordinates of p within one triangle, from the 2x2 projected
/// system. Errors if the projected triangle is singular; does not check
/// containment.
pub fn barycentric_in_triangle(
    p: Vertex3,
    mesh: &CanonicalMesh,
    triangle: usize,
) -> Result<[f64; 3], MeshError> {
    let [i, j, k] = mesh.triangles[triangle];
    let (vi, vj, vk) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
    let a = vi.x - vk.x;
    let b = vj.x - vk.x;
    let c = vi.y - vk.y;
    let d = vj.y - vk.y;
    let det = a * d - b * c;
    if det.abs() < 1e-12 * mesh.spacing * mesh.spacing {
        return Err(MeshError::SingularTriangle(triangle));
    }
    let rx = p.x - vk.x;
    let ry = p.y - vk.y;
    let bi = (d * rx - b * ry) / det;
    let bj = (a * ry - c * rx) / det;
    Ok([bi, bj, 1.0 - bi - bj])
}

/// Locate the triangle containing p's projection and return its barycentric
/// attachment. Ties on shared edges go to the lowest triangle index.
pub fn barycentric_coords(
    p: Vertex3,
    mesh: &CanonicalMesh,
) -> Result<BarycentricAttachment, MeshError> {
    for t in 0..mesh.triangles.len() {
        let beta = match barycentric_in_triangle(p, mesh, t) {
            Ok(b) => b,
            Err(MeshError::SingularTriangle(_)) => continue,
            Err(e) => return Err(e),
        };
        if beta.iter().all(|&b| b >= -BETA_TOL && b <= 1.0 + BETA_TOL) {
            return Ok(BarycentricAttachment { triangle: t, beta });
        }
    }
    Err(MeshError::OutsideMesh(p.x, p.y))
}

/// T_V(p): the attached point under a deformed state.
pub fn transform_point(
    mesh: &CanonicalMesh,
    attachment: &BarycentricAttachment,
    state: &MeshState,
) -> Vertex3 {
    let [i, j, k] = mesh.triangles[attachment.triangle];
    let [bi, bj, bk] = attachment.beta;
    Vertex3::new(
        bi * state.x[i] + bj * state.x[j] + bk * state.x[k],
        bi * state.y[i] + bj * state.y[j] + bk * state.y[k],
        bi * state.z[i] + bj * state.z[j] + bk * state.z[k],
    )
}

/// Wavefront OBJ export; vertex order is construction order so frame-to-frame
/// vertex identity is index identity.
pub fn write_obj(path: &Path, state: &MeshState, triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    for i in 0..state.n() {
        writeln!(f, "v {} {} {}", state.x[i], state.y[i], state.z[i])?;
    }
    for tri in triangles {
        writeln!(f, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1)?;
    }
    Ok(())
}

pub fn read_obj(path: &Path) -> Result<(Vec<Vertex3>, Vec<[usize; 3]>), MeshError> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coord = || {
                    it.next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| MeshError::Parse(format!("bad vertex line: {line}")))
                };
                vertices.push(Vertex3::new(coord()?, coord()?, coord()?));
            }
            Some("f") => {
                let mut idx = || {
                    it.next()
                        .and_then(|s| s.split('/').next())
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| MeshError::Parse(format!("bad face line: {line}")))
                };
                let (a, b, c) = (idx()?, idx()?, idx()?);
                if a == 0 || b == 0 || c == 0 {
                    return Err(MeshError::Parse("OBJ indices are 1-based".into()));
                }
                triangles.push([a - 1, b - 1, c - 1]);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

/// Rebuild a canonical mesh (triplets, boundary, K) from an OBJ file.
/// Spacing is inferred as the median edge length.
pub fn mesh_from_obj(path: &Path) -> Result<CanonicalMesh, MeshError> {
    let (vertices, triangles) = read_obj(path)?;
    if triangles.is_empty() {
        return Err(MeshError::DegenerateMesh);
    }
    let mut lens: Vec<f64> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| {
            let d = vertices[a].sub(vertices[b]);
            (d.x * d.x + d.y * d.y).sqrt()
        })
        .collect();
    lens.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spacing = lens[lens.len() / 2];
    finish_mesh(vertices, triangles, spacing)
}

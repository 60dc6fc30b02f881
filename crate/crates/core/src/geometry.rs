//! Chart atlases and quadrature for S³, S⁴, their hemispheres, and the cone
//! over S⁴, with deterministic parallel integration.
//!
//! Spheres carry a cubed-sphere midpoint atlas: the 2(d+1) faces of the
//! boundary of [−1,1]^{d+1}, each with an M^d midpoint lattice, radially
//! projected to the unit sphere. There are no coordinate singularities and,
//! for even M, no node ever lands on the equator, so hemisphere splitting is
//! exact at the node level.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Round-sphere volumes used by the weight invariants.
pub const VOL_S3: f64 = 2.0 * PI * PI;
pub const VOL_S4: f64 = 8.0 * PI * PI / 3.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("sphere resolution M={0} invalid: must be even and ≥ 4")]
    BadResolution(usize),
    #[error("radial point count R={0} invalid: must be ≥ 4")]
    BadRadial(usize),
    #[error("operation requires a {expected} mesh, got {got}")]
    WrongKind { expected: String, got: String },
    #[error("mesh cache version/key mismatch: {0}")]
    CacheMismatch(String),
}

#[derive(Debug, Error)]
#[error("non-finite integrand at node {index} (chart {chart})")]
pub struct NonFiniteIntegrand {
    pub index: usize,
    pub chart: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    Sphere3,
    Sphere4,
    /// Upper hemisphere of S⁴ (last ambient coordinate > 0).
    HemisphereUpper,
    /// Lower hemisphere of S⁴, opposite orientation as a manifold.
    HemisphereLower,
    /// Cone [0,1] × S⁴ realizing the five-dimensional ball.
    Cone5,
}

impl std::fmt::Display for RegionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegionKind::Sphere3 => "S3",
            RegionKind::Sphere4 => "S4",
            RegionKind::HemisphereUpper => "D",
            RegionKind::HemisphereLower => "D'",
            RegionKind::Cone5 => "D5",
        };
        write!(f, "{s}")
    }
}

/// One quadrature node.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Node {
    pub chart: u16,
    /// Chart coordinates (first `udim` entries used).
    pub u: [f64; 5],
    /// Ambient coordinates (first `adim` entries used). For the cone this is
    /// (r, p₀..p₄) with p on the unit S⁴.
    pub x: [f64; 6],
    /// Round-measure weight (sums to the sphere volume).
    pub w_measure: f64,
    /// Chart cell volume, used for top-degree form coefficients.
    pub w_box: f64,
    /// Chart orientation sign relative to the region's reference orientation.
    pub orient: f64,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct RegionMesh {
    pub kind: RegionKind,
    /// Region dimension: 3, 4 or 5.
    pub dim: usize,
    pub m: usize,
    /// Radial point count (cone only, else 0).
    pub r: usize,
    pub nodes: Vec<Node>,
    /// +1, except −1 for the lower hemisphere regarded as an oriented disc.
    pub manifold_sign: f64,
}

fn sphere_dim(kind: RegionKind) -> usize {
    match kind {
        RegionKind::Sphere3 => 3,
        RegionKind::Sphere4 | RegionKind::HemisphereUpper | RegionKind::HemisphereLower => 4,
        RegionKind::Cone5 => 4,
    }
}

impl RegionMesh {
    /// Chart-coordinate dimension.
    pub fn udim(&self) -> usize {
        self.dim
    }

    /// Ambient-coordinate dimension.
    pub fn adim(&self) -> usize {
        match self.kind {
            RegionKind::Sphere3 => 4,
            RegionKind::Cone5 => 6,
            _ => 5,
        }
    }

    fn face_count(&self) -> usize {
        2 * (sphere_dim(self.kind) + 1)
    }

    /// Ambient point of chart coordinates (valid also off the node lattice
    /// and slightly outside the chart box; the projection is analytic).
    pub fn chart_point(&self, chart: u16, u: &[f64]) -> [f64; 6] {
        match self.kind {
            RegionKind::Cone5 => {
                let base = sphere_chart_point(4, chart, &u[1..5]);
                let mut x = [0.0; 6];
                x[0] = u[0];
                x[1..6].copy_from_slice(&base[..5]);
                x
            }
            _ => sphere_chart_point(sphere_dim(self.kind), chart, u),
        }
    }

    /// Columns ∂x/∂u_i of the chart map.
    pub fn chart_jacobian(&self, chart: u16, u: &[f64]) -> [[f64; 6]; 5] {
        let mut cols = [[0.0; 6]; 5];
        match self.kind {
            RegionKind::Cone5 => {
                cols[0][0] = 1.0;
                let base = sphere_chart_jacobian(4, chart, &u[1..5]);
                for i in 0..4 {
                    for j in 0..5 {
                        cols[i + 1][j + 1] = base[i][j];
                    }
                }
            }
            _ => {
                let d = sphere_dim(self.kind);
                let base = sphere_chart_jacobian(d, chart, u);
                for i in 0..d {
                    cols[i][..d + 1].copy_from_slice(&base[i][..d + 1]);
                }
            }
        }
        cols
    }

    pub fn total_measure(&self) -> f64 {
        self.nodes.iter().map(|n| n.w_measure).sum()
    }

    pub fn total_box_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.w_box).sum()
    }

    /// ∫ of the ambient orientation form, respecting the manifold orientation.
    /// Positive on S³, S⁴ and D; negative on D′.
    pub fn oriented_volume(&self) -> f64 {
        let d = sphere_dim(self.kind);
        assert!(self.kind != RegionKind::Cone5);
        let mut total = 0.0;
        for n in &self.nodes {
            let x = &n.x;
            let jac = self.chart_jacobian(n.chart, &n.u);
            // Ω(∂u₁..∂u_d) = det[x, ∂x/∂u₁, ..., ∂x/∂u_d].
            let mut m = [[0.0f64; 6]; 6];
            for j in 0..=d {
                m[0][j] = x[j];
                for i in 0..d {
                    m[i + 1][j] = jac[i][j];
                }
            }
            total += det_real(&m, d + 1) * n.w_box * n.orient;
        }
        total * self.manifold_sign
    }
}

fn sphere_chart_point(d: usize, chart: u16, u: &[f64]) -> [f64; 6] {
    let axis = (chart / 2) as usize;
    let sign = if chart % 2 == 0 { 1.0 } else { -1.0 };
    let mut c = [0.0f64; 6];
    c[axis] = sign;
    let mut k = 0;
    for j in 0..=d {
        if j != axis {
            c[j] = u[k];
            k += 1;
        }
    }
    let rho = c[..d + 1].iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = [0.0f64; 6];
    for j in 0..=d {
        x[j] = c[j] / rho;
    }
    x
}

fn sphere_chart_jacobian(d: usize, chart: u16, u: &[f64]) -> [[f64; 6]; 5] {
    let axis = (chart / 2) as usize;
    let x = sphere_chart_point(d, chart, u);
    let rho2 = 1.0 + u.iter().take(d).map(|v| v * v).sum::<f64>();
    let rho = rho2.sqrt();
    // ∂x/∂u_i = e_{m(i)}/ρ − x·u_i/ρ² with m(i) the i-th non-axis index.
    let mut cols = [[0.0; 6]; 5];
    let mut k = 0;
    for j in 0..=d {
        if j != axis {
            for t in 0..=d {
                cols[k][t] = -x[t] * u[k] / rho2;
            }
            cols[k][j] += 1.0 / rho;
            k += 1;
        }
    }
    cols
}

fn chart_orientation(axis: usize, sign: f64) -> f64 {
    // Outward-normal-first convention on the boundary of the cube.
    sign * if axis % 2 == 0 { 1.0 } else { -1.0 }
}

fn det_real(m: &[[f64; 6]; 6], n: usize) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for r in col + 1..n {
            if a[r][col].abs() > best {
                best = a[r][col].abs();
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for j in col..n {
                a[r][j] -= f * a[col][j];
            }
        }
    }
    det
}

/// Solid angle of one lattice cell: ∫ ρ^{-(d+1)} du by a per-cell tensor
/// Gauss rule. Integrands are sampled at cell midpoints, but the cell
/// measures themselves are computed to high order so that weight sums hit
/// sphere volumes well inside the stated tolerances.
fn cell_solid_angle(d: usize, center: &[f64], cell: f64) -> f64 {
    const GP: [f64; 3] = [-0.7745966692414834, 0.0, 0.7745966692414834];
    const GW: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let half = 0.5 * cell;
    let mut total = 0.0;
    let mut idx = [0usize; 5];
    loop {
        let mut w = 1.0;
        let mut rho2 = 1.0;
        for i in 0..d {
            let ui = center[i] + half * GP[idx[i]];
            w *= GW[idx[i]] * half;
            rho2 += ui * ui;
        }
        total += w / rho2.powf(0.5 * (d + 1) as f64);
        let mut i = 0;
        loop {
            idx[i] += 1;
            if idx[i] < 3 {
                break;
            }
            idx[i] = 0;
            i += 1;
            if i == d {
                return total;
            }
        }
    }
}

/// Cubed-sphere midpoint mesh of S³ or S⁴.
pub fn build_sphere_mesh(d: usize, m: usize) -> Result<RegionMesh, GeometryError> {
    assert!(d == 3 || d == 4, "only S3 and S4 are supported");
    if m < 4 || m % 2 != 0 {
        return Err(GeometryError::BadResolution(m));
    }
    let kind = if d == 3 { RegionKind::Sphere3 } else { RegionKind::Sphere4 };
    let faces = 2 * (d + 1);
    let cell = 2.0 / m as f64;
    let w_box = cell.powi(d as i32);
    let mut nodes = Vec::with_capacity(faces * m.pow(d as u32));
    let mut mesh = RegionMesh { kind, dim: d, m, r: 0, nodes: Vec::new(), manifold_sign: 1.0 };
    for chart in 0..faces as u16 {
        let axis = (chart / 2) as usize;
        let sign = if chart % 2 == 0 { 1.0 } else { -1.0 };
        let orient = chart_orientation(axis, sign);
        let mut idx = vec![0usize; d];
        loop {
            let mut u = [0.0f64; 5];
            for i in 0..d {
                u[i] = -1.0 + cell * (idx[i] as f64 + 0.5);
            }
            let x = sphere_chart_point(d, chart, &u[..d]);
            let w_measure = cell_solid_angle(d, &u[..d], cell);
            nodes.push(Node { chart, u, x, w_measure, w_box, orient });
            // advance odometer
            let mut i = 0;
            loop {
                idx[i] += 1;
                if idx[i] < m {
                    break;
                }
                idx[i] = 0;
                i += 1;
                if i == d {
                    break;
                }
            }
            if i == d {
                break;
            }
        }
    }
    mesh.nodes = nodes;
    Ok(mesh)
}

/// Restrict an S⁴ mesh to a hemisphere. `positive` selects the upper
/// hemisphere D (last ambient coordinate > 0); the lower copy D′ is flagged
/// with the opposite manifold orientation. Node weights and chart
/// orientations are unchanged, so D and D′ partition S⁴ exactly.
pub fn hemisphere(mesh: &RegionMesh, positive: bool) -> Result<RegionMesh, GeometryError> {
    if mesh.kind != RegionKind::Sphere4 {
        return Err(GeometryError::WrongKind {
            expected: "S4".into(),
            got: mesh.kind.to_string(),
        });
    }
    let nodes: Vec<Node> = mesh
        .nodes
        .iter()
        .filter(|n| if positive { n.x[4] > 0.0 } else { n.x[4] < 0.0 })
        .copied()
        .collect();
    debug_assert!(nodes.iter().all(|n| n.x[4] != 0.0));
    Ok(RegionMesh {
        kind: if positive { RegionKind::HemisphereUpper } else { RegionKind::HemisphereLower },
        dim: 4,
        m: mesh.m,
        r: 0,
        nodes,
        manifold_sign: if positive { 1.0 } else { -1.0 },
    })
}

/// Cone [0,1] × S⁴ with midpoint radial nodes, base-major node order. Chart
/// coordinates are (r, base chart coordinates); r is the first coordinate in
/// every pullback, and the orientation dr ∧ (base) makes the r = 1 slice the
/// positively-oriented boundary S⁴.
pub fn cone_mesh(base: &RegionMesh, r: usize) -> Result<RegionMesh, GeometryError> {
    if base.kind != RegionKind::Sphere4 {
        return Err(GeometryError::WrongKind {
            expected: "S4".into(),
            got: base.kind.to_string(),
        });
    }
    if r < 4 {
        return Err(GeometryError::BadRadial(r));
    }
    let wr = 1.0 / r as f64;
    let mut nodes = Vec::with_capacity(base.nodes.len() * r);
    for b in &base.nodes {
        for k in 0..r {
            let rad = (k as f64 + 0.5) * wr;
            let mut u = [0.0f64; 5];
            u[0] = rad;
            u[1..5].copy_from_slice(&b.u[..4]);
            let mut x = [0.0f64; 6];
            x[0] = rad;
            x[1..6].copy_from_slice(&b.x[..5]);
            let w_box = wr * b.w_box;
            nodes.push(Node { chart: b.chart, u, x, w_measure: w_box, w_box, orient: b.orient });
        }
    }
    Ok(RegionMesh { kind: RegionKind::Cone5, dim: 5, m: base.m, r, nodes, manifold_sign: 1.0 })
}

/// How node weights enter the sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// Round-measure weights, no orientation sign: scalar densities.
    Measure,
    /// Chart cell volume × chart orientation: top-degree form coefficients.
    Form,
}

const CHUNK: usize = 2048;

/// Deterministic data-parallel quadrature of several integrands at once.
///
/// Nodes are split into fixed chunks; chunks are summed sequentially, the
/// per-chunk partials are combined by a fixed pairwise tree. The result is
/// bitwise independent of the worker count.
pub fn integrate_many<const K: usize>(
    mesh: &RegionMesh,
    weighting: Weighting,
    f: impl Fn(&Node) -> [C64; K] + Sync,
) -> Result<[C64; K], NonFiniteIntegrand> {
    let chunks: Vec<Result<[C64; K], NonFiniteIntegrand>> = mesh
        .nodes
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, nodes)| {
            let mut acc = [C64::new(0.0, 0.0); K];
            for (i, node) in nodes.iter().enumerate() {
                let w = match weighting {
                    Weighting::Measure => node.w_measure,
                    Weighting::Form => node.w_box * node.orient,
                };
                let vals = f(node);
                for k in 0..K {
                    let v = vals[k];
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(NonFiniteIntegrand { index: ci * CHUNK + i, chart: node.chart });
                    }
                    acc[k] += v * w;
                }
            }
            Ok(acc)
        })
        .collect();

    let mut partials = Vec::with_capacity(chunks.len());
    for c in chunks {
        partials.push(c?);
    }
    Ok(pairwise_tree(&partials))
}

fn pairwise_tree<const K: usize>(parts: &[[C64; K]]) -> [C64; K] {
    match parts.len() {
        0 => [C64::new(0.0, 0.0); K],
        1 => parts[0],
        n => {
            let (a, b) = parts.split_at(n / 2);
            let (x, y) = (pairwise_tree(a), pairwise_tree(b));
            let mut out = x;
            for k in 0..K {
                out[k] += y[k];
            }
            out
        }
    }
}

/// Single-integrand wrapper around [`integrate_many`].
pub fn integrate(
    mesh: &RegionMesh,
    weighting: Weighting,
    f: impl Fn(&Node) -> C64 + Sync,
) -> Result<C64, NonFiniteIntegrand> {
    integrate_many::<1>(mesh, weighting, |n| [f(n)]).map(|v| v[0])
}

/// Versioned mesh cache record.
#[derive(Serialize, Deserialize)]
pub struct MeshCache {
    pub version: u32,
    pub kind: RegionKind,
    pub m: usize,
    pub r: usize,
    pub mesh: RegionMesh,
}

pub const MESH_CACHE_VERSION: u32 = 1;

pub fn dump_mesh(mesh: &RegionMesh, path: &std::path::Path) -> std::io::Result<()> {
    let rec = MeshCache {
        version: MESH_CACHE_VERSION,
        kind: mesh.kind,
        m: mesh.m,
        r: mesh.r,
        mesh: mesh.clone(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &rec)?;
    Ok(())
}

pub fn load_mesh(
    path: &std::path::Path,
    kind: RegionKind,
    m: usize,
    r: usize,
) -> Result<RegionMesh, GeometryError> {
    let file = std::fs::File::open(path)
        .map_err(|e| GeometryError::CacheMismatch(format!("open failed: {e}")))?;
    let rec: MeshCache = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| GeometryError::CacheMismatch(format!("parse failed: {e}")))?;
    if rec.version != MESH_CACHE_VERSION || rec.kind != kind || rec.m != m || rec.r != r {
        return Err(GeometryError::CacheMismatch(format!(
            "cache holds version {} {} (M={}, R={}), wanted version {} {} (M={}, R={})",
            rec.version, rec.kind, rec.m, rec.r, MESH_CACHE_VERSION, kind, m, r
        )));
    }
    Ok(rec.mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_volumes() {
        let s3 = build_sphere_mesh(3, 16).unwrap();
        assert!((s3.total_measure() - VOL_S3).abs() / VOL_S3 < 1e-3);
        let s4 = build_sphere_mesh(4, 12).unwrap();
        assert!((s4.total_measure() - VOL_S4).abs() / VOL_S4 < 1e-3);
    }

    #[test]
    fn bad_resolution_rejected() {
        assert!(build_sphere_mesh(3, 7).is_err());
        assert!(build_sphere_mesh(3, 2).is_err());
        assert!(cone_mesh(&build_sphere_mesh(4, 4).unwrap(), 3).is_err());
    }

    #[test]
    fn coordinate_symmetry_integral() {
        // ∫ x₀² over S³ is a quarter of the volume by symmetry.
        let s3 = build_sphere_mesh(3, 16).unwrap();
        let v = integrate(&s3, Weighting::Measure, |n| C64::new(n.x[0] * n.x[0], 0.0)).unwrap();
        assert!((v.re - VOL_S3 / 4.0).abs() / (VOL_S3 / 4.0) < 1e-2);
    }

    #[test]
    fn hemisphere_partition_is_exact() {
        let s4 = build_sphere_mesh(4, 12).unwrap();
        let d = hemisphere(&s4, true).unwrap();
        let dp = hemisphere(&s4, false).unwrap();
        assert_eq!(d.nodes.len() + dp.nodes.len(), s4.nodes.len());
        let total = d.total_measure() + dp.total_measure();
        assert!((total - s4.total_measure()).abs() < 1e-10);
        assert!((d.total_measure() - VOL_S4 / 2.0).abs() / (VOL_S4 / 2.0) < 1e-2);
        // disjoint node sets
        assert!(d.nodes.iter().all(|n| n.x[4] > 0.0));
        assert!(dp.nodes.iter().all(|n| n.x[4] < 0.0));
    }

    #[test]
    fn orientation_signs() {
        let s3 = build_sphere_mesh(3, 8).unwrap();
        let v3 = s3.oriented_volume();
        assert!((v3 - VOL_S3).abs() / VOL_S3 < 1e-2, "v3 = {v3}");
        let s4 = build_sphere_mesh(4, 8).unwrap();
        let v4 = s4.oriented_volume();
        assert!((v4 - VOL_S4).abs() / VOL_S4 < 1e-2, "v4 = {v4}");
        let d = hemisphere(&s4, true).unwrap();
        let dp = hemisphere(&s4, false).unwrap();
        assert!(d.oriented_volume() > 0.0);
        assert!(dp.oriented_volume() < 0.0);
    }

    #[test]
    fn cone_structure() {
        let base = build_sphere_mesh(4, 6).unwrap();
        let cone = cone_mesh(&base, 5).unwrap();
        assert_eq!(cone.nodes.len(), base.nodes.len() * 5);
        assert!(cone.nodes.iter().all(|n| n.u[0] > 0.0 && n.u[0] < 1.0));
        // Direct-summation oracle for the product lattice box weights.
        let direct: f64 = base.nodes.iter().map(|n| n.w_box).sum();
        assert!((cone.total_box_weight() - direct).abs() < 1e-9);
    }

    #[test]
    fn integrate_linearity_and_zero() {
        let s3 = build_sphere_mesh(3, 8).unwrap();
        let z = integrate(&s3, Weighting::Measure, |_| C64::new(0.0, 0.0)).unwrap();
        assert_eq!(z, C64::new(0.0, 0.0));
        let f = |n: &Node| C64::new(n.x[1], n.x[2]);
        let g = |n: &Node| C64::new(n.x[0] * n.x[3], 1.0);
        let (a, b) = (C64::new(2.5, 0.0), C64::new(0.0, -1.25));
        let lhs = integrate(&s3, Weighting::Measure, |n| a * f(n) + b * g(n)).unwrap();
        let rhs = a * integrate(&s3, Weighting::Measure, f).unwrap()
            + b * integrate(&s3, Weighting::Measure, g).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_names_node() {
        let s3 = build_sphere_mesh(3, 4).unwrap();
        let err = integrate(&s3, Weighting::Measure, |n| {
            if n.x[0] > 0.9 {
                C64::new(f64::NAN, 0.0)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        assert!(err.is_err());
    }

    #[test]
    fn reduction_is_thread_count_independent() {
        let s4 = build_sphere_mesh(4, 8).unwrap();
        let f = |n: &Node| C64::new((n.x[0] * 1.37).sin() * n.x[3], n.x[2] * n.x[1]);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| integrate(&s4, Weighting::Measure, f).unwrap())
        };
        let a = run(1);
        let b = run(3);
        let c = run(7);
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
        assert_eq!(a.re.to_bits(), c.re.to_bits());
        assert_eq!(a.im.to_bits(), c.im.to_bits());
    }

    #[test]
    fn mesh_cache_roundtrip() {
        let dir = std::env::temp_dir().join("wzw_mesh_cache_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s3_m4.json");
        let mesh = build_sphere_mesh(3, 4).unwrap();
        dump_mesh(&mesh, &path).unwrap();
        let loaded = load_mesh(&path, RegionKind::Sphere3, 4, 0).unwrap();
        assert_eq!(loaded.nodes.len(), mesh.nodes.len());
        assert!(load_mesh(&path, RegionKind::Sphere3, 8, 0).is_err());
    }
}

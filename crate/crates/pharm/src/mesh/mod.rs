//! Triangle meshes of circular domains and piecewise-linear maps on them.

mod gen;
pub mod io;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CircularDomain, ConvexClip, Pt};

pub use gen::mesh_circular_domain;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryLoop {
    /// Boundary circle index: 0 outer, `i` for inner circle `i`.
    pub label: usize,
    /// Vertices in counterclockwise order around the circle's center.
    pub vertices: Vec<usize>,
}

/// Per-triangle area and basis-function gradients (as `x + iy`).
#[derive(Clone, Copy, Debug)]
pub struct TriGeom {
    pub area: f64,
    pub grad: [Pt; 3],
}

#[derive(Debug)]
pub struct Topology {
    /// Neighbor across the edge opposite local vertex `k`.
    pub neighbors: Vec<[Option<usize>; 3]>,
    pub vertex_triangles: Vec<Vec<usize>>,
    pub vertex_neighbors: Vec<Vec<usize>>,
    pub on_boundary: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TriMesh {
    #[serde(with = "pts_serde")]
    pub vertices: Vec<Pt>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_loops: Vec<BoundaryLoop>,
    #[serde(skip)]
    topo: OnceLock<Topology>,
    #[serde(skip)]
    geom: OnceLock<Vec<TriGeom>>,
    #[serde(skip)]
    locator: OnceLock<Locator>,
}

mod pts_serde {
    use super::Pt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Pt], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.re, p.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Pt>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[x, y]| Pt::new(x, y)).collect())
    }
}

impl Clone for TriMesh {
    fn clone(&self) -> Self {
        TriMesh::from_parts(self.vertices.clone(), self.triangles.clone(), self.boundary_loops.clone())
    }
}

impl PartialEq for TriMesh {
    fn eq(&self, o: &Self) -> bool {
        self.vertices == o.vertices && self.triangles == o.triangles && self.boundary_loops == o.boundary_loops
    }
}

fn signed_area(a: Pt, b: Pt, c: Pt) -> f64 {
    0.5 * ((b - a).re * (c - a).im - (b - a).im * (c - a).re)
}

impl TriMesh {
    fn from_parts(vertices: Vec<Pt>, triangles: Vec<[usize; 3]>, boundary_loops: Vec<BoundaryLoop>) -> Self {
        TriMesh {
            vertices,
            triangles,
            boundary_loops,
            topo: OnceLock::new(),
            geom: OnceLock::new(),
            locator: OnceLock::new(),
        }
    }

    /// Builds and validates a mesh: indices in range, positive orientation,
    /// each undirected edge used by at most two triangles.
    pub fn new(vertices: Vec<Pt>, triangles: Vec<[usize; 3]>, boundary_loops: Vec<BoundaryLoop>) -> Result<Self> {
        let m = Self::from_parts(vertices, triangles, boundary_loops);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut edges: HashMap<(usize, usize), u8> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Config(format!("triangle {t} references a missing vertex")));
            }
            if self.tri_area(t) <= 0.0 {
                return Err(Error::DegenerateTriangle(t));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let e = edges.entry((a.min(b), a.max(b))).or_default();
                *e += 1;
                if *e > 2 {
                    return Err(Error::Config(format!("edge ({a},{b}) is not manifold")));
                }
            }
        }
        let mut seen = vec![false; n];
        for l in &self.boundary_loops {
            for &v in &l.vertices {
                if v >= n || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Config("boundary loops must be disjoint".into()));
                }
            }
        }
        Ok(())
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        self.geometry().iter().map(|g| g.area).sum()
    }

    pub fn geometry(&self) -> &[TriGeom] {
        self.geom.get_or_init(|| {
            self.triangles
                .iter()
                .map(|&[a, b, c]| {
                    let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                    let area = signed_area(pa, pb, pc);
                    let i = Pt::new(0.0, 1.0);
                    let s = 1.0 / (2.0 * area);
                    TriGeom { area, grad: [i * (pc - pb) * s, i * (pa - pc) * s, i * (pb - pa) * s] }
                })
                .collect()
        })
    }

    pub fn topology(&self) -> &Topology {
        self.topo.get_or_init(|| build_topology(self))
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.topology().on_boundary[v]
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        let b = &self.topology().on_boundary;
        (0..self.vertices.len()).filter(|&v| !b[v]).collect()
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        let b = &self.topology().on_boundary;
        (0..self.vertices.len()).filter(|&v| b[v]).collect()
    }

    /// Interior angles of triangle `t` in radians.
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let tri = self.triangles[t];
        let mut out = [0.0; 3];
        for k in 0..3 {
            let p = self.vertices[tri[k]];
            let a = self.vertices[tri[(k + 1) % 3]] - p;
            let b = self.vertices[tri[(k + 2) % 3]] - p;
            out[k] = (a.conj() * b).arg().abs();
        }
        out
    }

    pub fn min_angle_deg(&self) -> f64 {
        (0..self.triangles.len())
            .flat_map(|t| self.angles(t))
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    pub fn centroid(&self, t: usize) -> Pt {
        let [a, b, c] = self.triangles[t];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Image of the mesh under a point map. Orientation-reversing maps get
    /// their triangles and loops flipped so the result stays counterclockwise.
    pub fn mapped<F: Fn(Pt) -> Pt>(&self, f: F, reverses: bool) -> Result<TriMesh> {
        let vertices = self.vertices.iter().map(|&z| f(z)).collect();
        let (triangles, loops) = if reverses {
            (
                self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
                self.boundary_loops
                    .iter()
                    .map(|l| BoundaryLoop { label: l.label, vertices: l.vertices.iter().rev().copied().collect() })
                    .collect(),
            )
        } else {
            (self.triangles.clone(), self.boundary_loops.clone())
        };
        TriMesh::new(vertices, triangles, loops)
    }

    /// Circle through three well-spread vertices of a boundary loop.
    pub fn loop_circle(&self, label: usize) -> Option<crate::geometry::Circle> {
        let l = self.boundary_loops.iter().find(|l| l.label == label)?;
        let n = l.vertices.len();
        if n < 3 {
            return None;
        }
        let [a, b, c] = [0, n / 3, 2 * n / 3].map(|k| self.vertices[l.vertices[k]]);
        circumcircle(a, b, c)
    }

    /// Triangle containing `z` and its barycentric coordinates.
    pub fn locate(&self, z: Pt) -> Option<(usize, [f64; 3])> {
        self.locator.get_or_init(|| Locator::new(self)).find(self, z)
    }
}

pub fn circumcircle(a: Pt, b: Pt, c: Pt) -> Option<crate::geometry::Circle> {
    let (b, c) = (b - a, c - a);
    let d = 2.0 * (b.re * c.im - b.im * c.re);
    if d == 0.0 {
        return None;
    }
    let (bb, cc) = (b.norm_sqr(), c.norm_sqr());
    let u = Pt::new((c.im * bb - b.im * cc) / d, (b.re * cc - c.re * bb) / d);
    crate::geometry::Circle::new(a + u, u.norm()).ok()
}

fn build_topology(m: &TriMesh) -> Topology {
    let nv = m.vertices.len();
    let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * m.triangles.len());
    let mut neighbors = vec![[None; 3]; m.triangles.len()];
    let mut vertex_triangles = vec![Vec::new(); nv];
    for (t, tri) in m.triangles.iter().enumerate() {
        for k in 0..3 {
            vertex_triangles[tri[k]].push(t);
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let key = (a.min(b), a.max(b));
            if let Some(&(o, ok)) = edge_owner.get(&key) {
                neighbors[t][k] = Some(o);
                neighbors[o][ok] = Some(t);
            } else {
                edge_owner.insert(key, (t, k));
            }
        }
    }
    let mut on_boundary = vec![false; nv];
    for (t, tri) in m.triangles.iter().enumerate() {
        for k in 0..3 {
            if neighbors[t][k].is_none() {
                on_boundary[tri[(k + 1) % 3]] = true;
                on_boundary[tri[(k + 2) % 3]] = true;
            }
        }
    }
    let mut vertex_neighbors = vec![Vec::new(); nv];
    for tri in &m.triangles {
        for k in 0..3 {
            for j in 1..3 {
                vertex_neighbors[tri[k]].push(tri[(k + j) % 3]);
            }
        }
    }
    for n in vertex_neighbors.iter_mut() {
        n.sort_unstable();
        n.dedup();
    }
    Topology { neighbors, vertex_triangles, vertex_neighbors, on_boundary }
}

#[derive(Debug)]
struct Locator {
    lo: Pt,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(m: &TriMesh) -> Self {
        let (mut lo, mut hi) = (Pt::new(f64::INFINITY, f64::INFINITY), Pt::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &m.vertices {
            lo = Pt::new(lo.re.min(p.re), lo.im.min(p.im));
            hi = Pt::new(hi.re.max(p.re), hi.im.max(p.im));
        }
        let n = (m.triangles.len().max(1) as f64).sqrt().ceil() as usize;
        let cell = ((hi.re - lo.re).max(hi.im - lo.im) / n as f64).max(1e-12);
        let nx = ((hi.re - lo.re) / cell).floor() as usize + 1;
        let ny = ((hi.im - lo.im) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in m.triangles.iter().enumerate() {
            let ps = tri.map(|v| m.vertices[v]);
            let (x0, x1) = (ps.iter().map(|p| p.re).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ps.iter().map(|p| p.im).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p.im).fold(f64::NEG_INFINITY, f64::max));
            let (i0, i1) = (((x0 - lo.re) / cell) as usize, (((x1 - lo.re) / cell) as usize).min(nx - 1));
            let (j0, j1) = (((y0 - lo.im) / cell) as usize, (((y1 - lo.im) / cell) as usize).min(ny - 1));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator { lo, cell, nx, ny, buckets }
    }

    fn find(&self, m: &TriMesh, z: Pt) -> Option<(usize, [f64; 3])> {
        let fx = (z.re - self.lo.re) / self.cell;
        let fy = (z.im - self.lo.im) / self.cell;
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        let b = &self.buckets[fy as usize * self.nx + fx as usize];
        for &t in b {
            let [a, bb, c] = m.triangles[t];
            let (pa, pb, pc) = (m.vertices[a], m.vertices[bb], m.vertices[c]);
            let area = signed_area(pa, pb, pc);
            let l0 = signed_area(z, pb, pc) / area;
            let l1 = signed_area(pa, z, pc) / area;
            let l2 = 1.0 - l0 - l1;
            let eps = -1e-12;
            if l0 >= eps && l1 >= eps && l2 >= eps {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }
}

/// Piecewise-linear map `u + iv` given by its vertex values.
#[derive(Clone, Debug)]
pub struct DiscreteMap {
    pub mesh: Arc<TriMesh>,
    pub values: Vec<Pt>,
    pub p: f64,
    pub target: CircularDomain,
}

impl DiscreteMap {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<Pt>, p: f64, target: CircularDomain) -> Result<Self> {
        if values.len() != mesh.vertices.len() {
            return Err(Error::Config("value count does not match the vertex count".into()));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::Config(format!("exponent must be at least 2, got {p}")));
        }
        if values.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Config("map values must be finite".into()));
        }
        Ok(DiscreteMap { mesh, values, p, target })
    }

    pub fn from_fn<F: Fn(Pt) -> Pt>(mesh: Arc<TriMesh>, p: f64, target: CircularDomain, f: F) -> Result<Self> {
        let values = mesh.vertices.iter().map(|&z| f(z)).collect();
        Self::new(mesh, values, p, target)
    }

    pub fn identity(mesh: Arc<TriMesh>, p: f64, target: CircularDomain) -> Result<Self> {
        Self::from_fn(mesh, p, target, |z| z)
    }

    pub fn with_values(&self, values: Vec<Pt>) -> Self {
        DiscreteMap { mesh: self.mesh.clone(), values, p: self.p, target: self.target.clone() }
    }

    pub fn u(&self) -> Vec<f64> {
        self.values.iter().map(|w| w.re).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.values.iter().map(|w| w.im).collect()
    }

    /// Constant gradients `(grad u, grad v)` on triangle `t`.
    pub fn gradients(&self, t: usize) -> (Pt, Pt) {
        let g = &self.mesh.geometry()[t];
        let tri = self.mesh.triangles[t];
        // differences against vertex 0, so constants have exactly zero gradient
        let w0 = self.values[tri[0]];
        let d1 = self.values[tri[1]] - w0;
        let d2 = self.values[tri[2]] - w0;
        (g.grad[1] * d1.re + g.grad[2] * d2.re, g.grad[1] * d1.im + g.grad[2] * d2.im)
    }

    pub fn jacobian(&self, t: usize) -> f64 {
        let (gu, gv) = self.gradients(t);
        gu.re * gv.im - gu.im * gv.re
    }

    /// Value at an arbitrary point of the meshed region.
    pub fn eval(&self, z: Pt) -> Option<Pt> {
        let (t, l) = self.mesh.locate(z)?;
        let tri = self.mesh.triangles[t];
        Some(self.values[tri[0]] * l[0] + self.values[tri[1]] * l[1] + self.values[tri[2]] * l[2])
    }

    fn same_space(&self, o: &DiscreteMap) -> Result<()> {
        if !(Arc::ptr_eq(&self.mesh, &o.mesh) || *self.mesh == *o.mesh) || self.p != o.p {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    pub fn difference(&self, o: &DiscreteMap) -> Result<DiscreteMap> {
        self.same_space(o)?;
        Ok(self.with_values(self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect()))
    }
}

/// `sum area * |grad u|^p` over the given triangles.
pub fn field_energy(mesh: &TriMesh, triangles: &[usize], u: &[f64], p: f64) -> f64 {
    let geom = mesh.geometry();
    triangles
        .iter()
        .map(|&t| {
            let tri = mesh.triangles[t];
            let g = geom[t].grad[1] * (u[tri[1]] - u[tri[0]]) + geom[t].grad[2] * (u[tri[2]] - u[tri[0]]);
            geom[t].area * g.norm_sqr().powf(0.5 * p)
        })
        .sum()
}

fn pow_norm(g: Pt, p: f64) -> f64 {
    if p == 2.0 {
        g.norm_sqr()
    } else {
        g.norm_sqr().powf(0.5 * p)
    }
}

/// p-energy of the map restricted to a set of triangles.
pub fn energy_on(m: &DiscreteMap, triangles: &[usize]) -> f64 {
    let geom = m.mesh.geometry();
    triangles
        .iter()
        .map(|&t| {
            let (gu, gv) = m.gradients(t);
            geom[t].area * (pow_norm(gu, m.p) + pow_norm(gv, m.p))
        })
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub total: f64,
    pub per_triangle: Vec<f64>,
    pub jacobian_integral: f64,
    pub min_jacobian: f64,
    pub max_jacobian: f64,
    pub sup_value: f64,
    pub energy_root: f64,
}

pub fn energy(m: &DiscreteMap) -> Result<EnergyReport> {
    let geom = m.mesh.geometry();
    let mut per = Vec::with_capacity(geom.len());
    let (mut jint, mut jmin, mut jmax) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for (t, g) in geom.iter().enumerate() {
        if !(g.area > 0.0) {
            return Err(Error::DegenerateTriangle(t));
        }
        let (gu, gv) = m.gradients(t);
        per.push(g.area * (pow_norm(gu, m.p) + pow_norm(gv, m.p)));
        let j = gu.re * gv.im - gu.im * gv.re;
        jint += g.area * j;
        jmin = f64::min(jmin, j);
        jmax = f64::max(jmax, j);
    }
    let total: f64 = per.iter().sum();
    let sup_value = m.values.iter().map(|w| w.norm()).fold(0.0, f64::max);
    Ok(EnergyReport {
        total,
        per_triangle: per,
        jacobian_integral: jint,
        min_jacobian: jmin,
        max_jacobian: jmax,
        sup_value,
        energy_root: total.powf(1.0 / m.p),
    })
}

pub fn total_energy(m: &DiscreteMap) -> f64 {
    energy_on(m, &(0..m.mesh.triangles.len()).collect::<Vec<_>>())
}

pub fn jacobian_integral(m: &DiscreteMap, region: &[usize]) -> f64 {
    let geom = m.mesh.geometry();
    region.iter().map(|&t| geom[t].area * m.jacobian(t)).sum()
}

pub fn sup_distance(m1: &DiscreteMap, m2: &DiscreteMap) -> Result<f64> {
    m1.same_space(m2)?;
    Ok(m1.values.iter().zip(&m2.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

pub fn royden_distance(m1: &DiscreteMap, m2: &DiscreteMap) -> Result<f64> {
    let d = m1.difference(m2)?;
    let sup = d.values.iter().map(|w| w.norm()).fold(0.0, f64::max);
    Ok(sup + total_energy(&d).powf(1.0 / m1.p))
}

/// Edge-connected set of triangles with its boundary structure.
#[derive(Clone, Debug, Serialize)]
pub struct CellPatch {
    pub triangles: Vec<usize>,
    pub vertices: Vec<usize>,
    /// Boundary cycle, counterclockwise; empty when the boundary is not a single simple cycle.
    pub boundary: Vec<usize>,
    pub interior: Vec<usize>,
    pub euler: i64,
    pub simple_boundary: bool,
    pub clip: Option<ConvexClip>,
}

impl CellPatch {
    /// Disk-like: Euler characteristic 1 and one simple boundary cycle.
    pub fn is_disk(&self) -> bool {
        self.euler == 1 && self.simple_boundary
    }
}

/// Splits a triangle set into edge-connected patches.
pub fn patches(mesh: &TriMesh, triangles: &[usize]) -> Vec<CellPatch> {
    let topo = mesh.topology();
    let mut member: HashMap<usize, usize> = triangles.iter().map(|&t| (t, usize::MAX)).collect();
    let mut sorted: Vec<usize> = triangles.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::new();
    for &seed in &sorted {
        if member[&seed] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![seed];
        member.insert(seed, id);
        let mut k = 0;
        while k < comp.len() {
            let t = comp[k];
            k += 1;
            for n in topo.neighbors[t].iter().flatten() {
                if let Some(slot) = member.get_mut(n) {
                    if *slot == usize::MAX {
                        *slot = id;
                        comp.push(*n);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(describe_patch(mesh, comp, &member, id));
    }
    out
}

fn describe_patch(mesh: &TriMesh, tris: Vec<usize>, member: &HashMap<usize, usize>, id: usize) -> CellPatch {
    let topo = mesh.topology();
    let mut verts: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangles[t]).collect();
    verts.sort_unstable();
    verts.dedup();
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut interior_edges = 0usize;
    let mut boundary_edges = 0usize;
    for &t in &tris {
        let tri = mesh.triangles[t];
        for k in 0..3 {
            let inside = topo.neighbors[t][k].is_some_and(|n| member.get(&n) == Some(&id));
            if inside {
                interior_edges += 1;
            } else {
                boundary_edges += 1;
                next.entry(tri[(k + 1) % 3]).or_default().push(tri[(k + 2) % 3]);
            }
        }
    }
    let edges = boundary_edges + interior_edges / 2;
    let euler = verts.len() as i64 - edges as i64 + tris.len() as i64;
    let mut on_b: Vec<usize> = next.keys().copied().collect();
    on_b.sort_unstable();
    let interior: Vec<usize> = verts.iter().copied().filter(|v| !next.contains_key(v)).collect();
    let mut boundary = Vec::new();
    let simple = next.values().all(|v| v.len() == 1) && !on_b.is_empty() && {
        let start = on_b[0];
        let mut cur = start;
        loop {
            boundary.push(cur);
            cur = next[&cur][0];
            if cur == start || boundary.len() > on_b.len() {
                break;
            }
        }
        boundary.len() == on_b.len() && cur == start
    };
    if !simple {
        boundary.clear();
    }
    CellPatch { triangles: tris, vertices: verts, boundary, interior, euler, simple_boundary: simple, clip: None }
}

/// Triangles whose three vertex images lie in the closed clip.
pub fn triangles_in_clip(m: &DiscreteMap, clip: &ConvexClip) -> Vec<usize> {
    let tol = 1e-12 * clip.square.side;
    m.mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, tri)| tri.iter().all(|&v| clip.contains(m.values[v], tol)))
        .map(|(t, _)| t)
        .collect()
}

/// All edge-connected patches of the preimage of a clip; callers keep the
/// disk-like ones as cells.
pub fn extract_cell(m: &DiscreteMap, clip: &ConvexClip) -> Vec<CellPatch> {
    let tris = triangles_in_clip(m, clip);
    let mut ps = patches(&m.mesh, &tris);
    for p in ps.iter_mut() {
        p.clip = Some(*clip);
    }
    ps
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopReport {
    pub label: usize,
    pub winding: i64,
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InjectivityReport {
    pub min_jacobian: f64,
    pub nonpositive: usize,
    pub loops: Vec<LoopReport>,
    pub injective: bool,
}

/// Winding number and weak angular monotonicity of a closed polygon about `pole`.
pub fn angular_monotonicity(points: &[Pt], pole: Pt, tol: f64) -> (i64, bool) {
    if points.len() < 3 {
        return (0, false);
    }
    let mut total = 0.0;
    let mut monotone = true;
    for k in 0..points.len() {
        let a = points[k] - pole;
        let b = points[(k + 1) % points.len()] - pole;
        let d = (a.conj() * b).arg();
        if d < -tol {
            monotone = false;
        }
        total += d;
    }
    let winding = (total / std::f64::consts::TAU).round() as i64;
    (winding, monotone && winding == 1)
}

pub fn check_injectivity(m: &DiscreteMap) -> InjectivityReport {
    let n = m.mesh.triangles.len();
    let js: Vec<f64> = (0..n).map(|t| m.jacobian(t)).collect();
    let min_jacobian = js.iter().copied().fold(f64::INFINITY, f64::min);
    let nonpositive = js.iter().filter(|&&j| j <= 0.0).count();
    let loops: Vec<LoopReport> = m
        .mesh
        .boundary_loops
        .iter()
        .map(|l| {
            let pole = if l.label < m.target.connectivity() { m.target.circle(l.label).center } else { Pt::new(0.0, 0.0) };
            let pts: Vec<Pt> = l.vertices.iter().map(|&v| m.values[v]).collect();
            let (winding, monotone) = angular_monotonicity(&pts, pole, 1e-12);
            LoopReport { label: l.label, winding, monotone }
        })
        .collect();
    let injective = min_jacobian > 0.0 && loops.iter().all(|l| l.monotone);
    InjectivityReport { min_jacobian, nonpositive, loops, injective }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModulusForm {
    /// `|dh|^p / (|dx|^(p-2) E)` for p > 2.
    Power,
    /// `|dh|^2 log(e + 1/|dx|) / E` for p = 2.
    Logarithmic,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModulusReport {
    pub form: ModulusForm,
    pub max_ratio: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn modulus_check(m: &DiscreteMap, pairs: &[(Pt, Pt)]) -> Result<ModulusReport> {
    let form = if m.p > 2.0 {
        ModulusForm::Power
    } else if m.mesh.boundary_loops.len() >= 2 {
        ModulusForm::Logarithmic
    } else {
        return Err(Error::Precondition("the logarithmic form needs a multiply connected domain".into()));
    };
    let e = total_energy(m);
    let (mut max_ratio, mut evaluated, mut skipped) = (0.0f64, 0, 0);
    for &(x1, x2) in pairs {
        let dx = (x1 - x2).norm();
        let (Some(h1), Some(h2)) = (m.eval(x1), m.eval(x2)) else {
            skipped += 1;
            continue;
        };
        if dx == 0.0 {
            skipped += 1;
            continue;
        }
        let dh = (h1 - h2).norm();
        let r = if dh == 0.0 {
            0.0
        } else {
            match form {
                ModulusForm::Power => dh.powf(m.p) / (dx.powf(m.p - 2.0) * e),
                ModulusForm::Logarithmic => dh * dh * (std::f64::consts::E + 1.0 / dx).ln() / e,
            }
        };
        max_ratio = max_ratio.max(r);
        evaluated += 1;
    }
    Ok(ModulusReport { form, max_ratio, evaluated, skipped })
}

//! Scalar p-Laplace Dirichlet problems on P1 meshes, the componentwise
//! p-harmonic extension onto convex targets, and complex-gradient diagnostics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Circle, ConvexClip, Pt};
use crate::mesh::{angular_monotonicity, CellPatch, TriMesh};
use crate::sparse::{dot, pcg, Csr};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub p: f64,
    /// Residual tolerance relative to the problem's gradient scale.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Regularization stages as fractions of the data's gradient scale; the last should be 0.
    pub eps_stages: Vec<f64>,
    pub armijo: f64,
    pub backtrack: f64,
    pub cg_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            p: 2.0,
            tol_grad: 1e-9,
            max_iter: 100,
            eps_stages: vec![1e-1, 1e-2, 0.0],
            armijo: 1e-4,
            backtrack: 0.5,
            cg_tol: 1e-10,
        }
    }
}

impl SolveOptions {
    pub fn with_p(p: f64) -> Self {
        SolveOptions { p, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::Config("tol_grad must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Config("line search parameters out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    /// Full-length vertex vector; only free entries differ from the input.
    #[serde(skip)]
    pub values: Vec<f64>,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    /// Conjugate-gradient steps summed over all Newton iterations.
    pub cg_iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
}

/// Triangles carrying the energy and the vertices free to move.
#[derive(Clone, Debug)]
pub struct SolveDomain {
    pub triangles: Vec<usize>,
    pub free: Vec<usize>,
}

impl SolveDomain {
    /// Whole mesh, Dirichlet data on every boundary vertex.
    pub fn whole(mesh: &TriMesh) -> Self {
        SolveDomain { triangles: (0..mesh.triangles.len()).collect(), free: mesh.interior_vertices() }
    }

    /// A disk-like patch, Dirichlet data on its boundary cycle.
    pub fn patch(patch: &CellPatch) -> Result<Self> {
        if !patch.is_disk() {
            return Err(Error::Precondition(format!(
                "patch is not disk-like (Euler characteristic {}, simple boundary {})",
                patch.euler, patch.simple_boundary
            )));
        }
        Ok(SolveDomain { triangles: patch.triangles.clone(), free: patch.interior.clone() })
    }
}

const NONE: usize = usize::MAX;

struct Problem<'a> {
    mesh: &'a TriMesh,
    tris: &'a [usize],
    free: &'a [usize],
    local: Vec<[usize; 3]>,
    hess: Csr,
    slots: Vec<[usize; 9]>,
    p: f64,
}

impl<'a> Problem<'a> {
    fn new(mesh: &'a TriMesh, dom: &'a SolveDomain, p: f64) -> Self {
        let index: HashMap<usize, usize> = dom.free.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let local: Vec<[usize; 3]> = dom
            .triangles
            .iter()
            .map(|&t| mesh.triangles[t].map(|v| index.get(&v).copied().unwrap_or(NONE)))
            .collect();
        let mut rows = vec![Vec::new(); dom.free.len()];
        for l in &local {
            for &a in l.iter().filter(|&&a| a != NONE) {
                for &b in l.iter().filter(|&&b| b != NONE) {
                    rows[a].push(b);
                }
            }
        }
        let hess = Csr::from_rows(rows);
        let slots = local
            .iter()
            .map(|l| {
                let mut s = [NONE; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        if l[i] != NONE && l[j] != NONE {
                            s[3 * i + j] = hess.slot(l[i], l[j]).unwrap();
                        }
                    }
                }
                s
            })
            .collect();
        Problem { mesh, tris: &dom.triangles, free: &dom.free, local, hess, slots, p }
    }

    fn grad_t(&self, k: usize, u: &[f64]) -> Pt {
        let t = self.tris[k];
        let g = &self.mesh.geometry()[t];
        let tri = self.mesh.triangles[t];
        g.grad[1] * (u[tri[1]] - u[tri[0]]) + g.grad[2] * (u[tri[2]] - u[tri[0]])
    }

    fn energy(&self, u: &[f64], eps: f64) -> f64 {
        let geom = self.mesh.geometry();
        let e2 = eps * eps;
        let hp = 0.5 * self.p;
        (0..self.tris.len())
            .map(|k| {
                let s = self.grad_t(k, u).norm_sqr() + e2;
                geom[self.tris[k]].area * if hp == 1.0 { s } else { s.powf(hp) }
            })
            .sum()
    }

    fn gradient(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let geom = self.mesh.geometry();
        let mut out = vec![0.0; self.free.len()];
        let e2 = eps * eps;
        for k in 0..self.tris.len() {
            let g = self.grad_t(k, u);
            let s = g.norm_sqr() + e2;
            let geo = &geom[self.tris[k]];
            let w = geo.area * self.p * s.powf(0.5 * self.p - 1.0);
            for i in 0..3 {
                let li = self.local[k][i];
                if li != NONE {
                    out[li] += w * (g.re * geo.grad[i].re + g.im * geo.grad[i].im);
                }
            }
        }
        out
    }

    fn assemble(&mut self, u: &[f64], eps: f64) {
        self.hess.clear();
        let geom = self.mesh.geometry();
        let e2 = eps * eps;
        let p = self.p;
        for k in 0..self.tris.len() {
            let g = self.grad_t(k, u);
            let s = g.norm_sqr() + e2;
            let geo = &geom[self.tris[k]];
            let a = geo.area * p * s.powf(0.5 * p - 1.0);
            let b = if s > 0.0 && p != 2.0 { geo.area * p * (p - 2.0) * s.powf(0.5 * p - 1.0) / s } else { 0.0 };
            for i in 0..3 {
                for j in 0..3 {
                    let slot = self.slots[k][3 * i + j];
                    if slot == NONE {
                        continue;
                    }
                    let (gi, gj) = (geo.grad[i], geo.grad[j]);
                    let dij = gi.re * gj.re + gi.im * gj.im;
                    let ci = g.re * gi.re + g.im * gi.im;
                    let cj = g.re * gj.re + g.im * gj.im;
                    self.hess.vals[slot] += a * dij + b * ci * cj;
                }
            }
        }
    }

    fn set_free(&self, u: &mut [f64], x: &[f64]) {
        for (i, &v) in self.free.iter().enumerate() {
            u[v] = x[i];
        }
    }

    fn free_of(&self, u: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| u[v]).collect()
    }

    /// Area-weighted RMS gradient of the data and the mean triangle size.
    fn scales(&self, u: &[f64]) -> (f64, f64) {
        let geom = self.mesh.geometry();
        let (mut a, mut g2) = (0.0, 0.0);
        for k in 0..self.tris.len() {
            let ar = geom[self.tris[k]].area;
            a += ar;
            g2 += ar * self.grad_t(k, u).norm_sqr();
        }
        if a == 0.0 {
            return (0.0, 0.0);
        }
        ((g2 / a).sqrt(), (a / self.tris.len() as f64).sqrt())
    }
}

/// Discrete energy `sum area |grad u|^p` over the domain's triangles.
pub fn discrete_energy(mesh: &TriMesh, dom: &SolveDomain, u: &[f64], p: f64) -> f64 {
    Problem::new(mesh, dom, p).energy(u, 0.0)
}

/// Gradient of `discrete_energy` with respect to the free vertex values,
/// in the order of `dom.free`.
pub fn energy_gradient(mesh: &TriMesh, dom: &SolveDomain, u: &[f64], p: f64) -> Vec<f64> {
    Problem::new(mesh, dom, p).gradient(u, 0.0)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimizes `sum area |grad u|^p` over the free vertices. Entries of `u0`
/// at non-free vertices are the Dirichlet data; free entries seed the solve.
pub fn solve_scalar(mesh: &TriMesh, dom: &SolveDomain, u0: &[f64], opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    if u0.len() != mesh.vertices.len() {
        return Err(Error::Config("field length does not match the mesh".into()));
    }
    let mut pb = Problem::new(mesh, dom, opts.p);
    let e_init = pb.energy(u0, 0.0);
    let (gscale, hscale) = pb.scales(u0);
    let scale = opts.p * gscale.powf(opts.p - 1.0) * hscale;
    let tol = if scale > 0.0 { opts.tol_grad * scale } else { f64::MIN_POSITIVE };
    if dom.free.is_empty() {
        return Ok(SolveResult {
            values: u0.to_vec(),
            energy: e_init,
            initial_energy: e_init,
            iterations: 0,
            cg_iterations: 0,
            residual: 0.0,
            tolerance: tol,
            converged: true,
        });
    }
    let mut u = u0.to_vec();
    let n = dom.free.len();
    let cg_max = 20 * n + 100;
    let mut iterations = 0;
    let mut cg_iterations = 0;
    let stages: Vec<f64> = if opts.p == 2.0 { vec![0.0] } else { opts.eps_stages.clone() };
    let mut d = vec![0.0; n];
    for (si, &frac) in stages.iter().enumerate() {
        let eps = frac * gscale;
        let last = si + 1 == stages.len();
        let stage_tol = if last { tol } else { tol.max(1e-4 * scale) };
        let stage_iter = if last { opts.max_iter } else { opts.max_iter.min(30) };
        for _ in 0..stage_iter {
            let g = pb.gradient(&u, eps);
            if max_norm(&g) <= stage_tol {
                break;
            }
            iterations += 1;
            pb.assemble(&u, eps);
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let mut shift = if opts.p == 2.0 { 0.0 } else { 1e-12 };
            let mut ok = false;
            for _ in 0..6 {
                let cg_tol = if opts.p == 2.0 { opts.cg_tol.min(1e-13) } else { opts.cg_tol };
                let out = pcg(&pb.hess, &rhs, shift, cg_tol, cg_max, &mut d);
                cg_iterations += out.iterations;
                if out.positive && dot(&d, &g) < 0.0 {
                    ok = true;
                    break;
                }
                shift = (shift * 100.0).max(1e-8);
            }
            if !ok {
                d.copy_from_slice(&rhs);
            }
            if !line_search(&pb, &mut u, &d, &g, eps, opts) {
                // gradient-descent fallback
                if !line_search(&pb, &mut u, &rhs, &g, eps, opts) {
                    break;
                }
            }
        }
    }
    let residual = max_norm(&pb.gradient(&u, 0.0));
    let energy = pb.energy(&u, 0.0);
    if energy > e_init {
        let r0 = max_norm(&pb.gradient(u0, 0.0));
        return Ok(SolveResult {
            values: u0.to_vec(),
            energy: e_init,
            initial_energy: e_init,
            iterations,
            cg_iterations,
            residual: r0,
            tolerance: tol,
            converged: r0 <= tol,
        });
    }
    Ok(SolveResult { values: u, energy, initial_energy: e_init, iterations, cg_iterations, residual, tolerance: tol, converged: residual <= tol })
}

fn line_search(pb: &Problem, u: &mut [f64], d: &[f64], g: &[f64], eps: f64, opts: &SolveOptions) -> bool {
    let x0 = pb.free_of(u);
    let e0 = pb.energy(u, eps);
    let slope = dot(g, d);
    if !(slope < 0.0) {
        return false;
    }
    let slack = 1e-14 * e0.abs();
    let mut t = 1.0;
    let mut x = x0.clone();
    while t > 1e-12 {
        for i in 0..x.len() {
            x[i] = x0[i] + t * d[i];
        }
        pb.set_free(u, &x);
        if pb.energy(u, eps) <= e0 + opts.armijo * t * slope + slack {
            return true;
        }
        t *= opts.backtrack;
    }
    pb.set_free(u, &x0);
    false
}

/// Convex image regions for the componentwise extension.
#[derive(Clone, Debug)]
pub enum ConvexTarget {
    Clip(ConvexClip),
    Disk(Circle),
    /// Counterclockwise convex polygon.
    Polygon(Vec<Pt>),
}

impl ConvexTarget {
    pub fn contains(&self, z: Pt, tol: f64) -> bool {
        match self {
            ConvexTarget::Clip(c) => c.contains(z, tol),
            ConvexTarget::Disk(c) => c.signed_distance(z) <= tol,
            ConvexTarget::Polygon(ps) => (0..ps.len()).all(|k| {
                let a = ps[k];
                let b = ps[(k + 1) % ps.len()];
                let e = b - a;
                let w = z - a;
                (e.re * w.im - e.im * w.re) / e.norm() >= -tol
            }),
        }
    }

    pub fn pole(&self) -> Pt {
        match self {
            ConvexTarget::Clip(c) => c.pole(),
            ConvexTarget::Disk(c) => c.center,
            ConvexTarget::Polygon(ps) => ps.iter().sum::<Pt>() / ps.len() as f64,
        }
    }

    fn scale(&self) -> f64 {
        match self {
            ConvexTarget::Clip(c) => c.square.side,
            ConvexTarget::Disk(c) => c.radius,
            ConvexTarget::Polygon(ps) => ps.iter().map(|p| (p - ps[0]).norm()).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Extension {
    #[serde(skip)]
    pub values: Vec<Pt>,
    pub u: SolveResult,
    pub v: SolveResult,
    pub min_jacobian: f64,
    pub nonpositive: usize,
    pub univalence_violated: bool,
    /// Interior images inside the closed target.
    pub inside_target: bool,
    /// Each component between its boundary extremes.
    pub max_principle: bool,
}

impl Extension {
    pub fn energy(&self) -> f64 {
        self.u.energy + self.v.energy
    }

    pub fn initial_energy(&self) -> f64 {
        self.u.initial_energy + self.v.initial_energy
    }

    pub fn converged(&self) -> bool {
        self.u.converged && self.v.converged
    }
}

/// Checks that the boundary trace of `patch` runs once, counterclockwise and
/// without backtracking, around the target's pole.
pub fn check_trace(patch: &CellPatch, values: &[Pt], target: &ConvexTarget, tol: f64) -> Result<()> {
    let trace: Vec<Pt> = patch.boundary.iter().map(|&v| values[v]).collect();
    let (winding, monotone) = angular_monotonicity(&trace, target.pole(), tol);
    if !monotone {
        return Err(Error::NonMonotone(format!("winding {winding} about the target pole")));
    }
    Ok(())
}

/// Solves the two components independently on a disk-like patch with the
/// boundary trace of `values`; interior entries of `values` seed the solve.
pub fn p_harmonic_extension(
    mesh: &TriMesh,
    patch: &CellPatch,
    values: &[Pt],
    target: &ConvexTarget,
    opts: &SolveOptions,
) -> Result<Extension> {
    extension_with_tolerance(mesh, patch, values, target, opts, 1e-12)
}

pub fn extension_with_tolerance(
    mesh: &TriMesh,
    patch: &CellPatch,
    values: &[Pt],
    target: &ConvexTarget,
    opts: &SolveOptions,
    monotone_tol: f64,
) -> Result<Extension> {
    let dom = SolveDomain::patch(patch)?;
    check_trace(patch, values, target, monotone_tol)?;
    let tol = 1e-9 * target.scale();
    for &b in &patch.boundary {
        if !target.contains(values[b], tol) {
            return Err(Error::Precondition("boundary trace leaves the convex target".into()));
        }
    }
    let re: Vec<f64> = values.iter().map(|w| w.re).collect();
    let im: Vec<f64> = values.iter().map(|w| w.im).collect();
    let u = solve_scalar(mesh, &dom, &re, opts)?;
    let v = solve_scalar(mesh, &dom, &im, opts)?;
    let mut out = values.to_vec();
    for &k in &dom.free {
        out[k] = Pt::new(u.values[k], v.values[k]);
    }
    let geom = mesh.geometry();
    let mut min_j = f64::INFINITY;
    let mut nonpositive = 0;
    for &t in &dom.triangles {
        let tri = mesh.triangles[t];
        let d1 = out[tri[1]] - out[tri[0]];
        let d2 = out[tri[2]] - out[tri[0]];
        let gu = geom[t].grad[1] * d1.re + geom[t].grad[2] * d2.re;
        let gv = geom[t].grad[1] * d1.im + geom[t].grad[2] * d2.im;
        let j = gu.re * gv.im - gu.im * gv.re;
        min_j = min_j.min(j);
        if j <= 0.0 {
            nonpositive += 1;
        }
    }
    let bounds = |f: fn(&Pt) -> f64| {
        let vals: Vec<f64> = patch.boundary.iter().map(|&b| f(&values[b])).collect();
        (vals.iter().copied().fold(f64::INFINITY, f64::min), vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let (ulo, uhi) = bounds(|w| w.re);
    let (vlo, vhi) = bounds(|w| w.im);
    let slack = if opts.p == 2.0 { 1e-12 } else { 1e-8 } * target.scale();
    let max_principle = dom.free.iter().all(|&k| {
        let w = out[k];
        w.re >= ulo - slack && w.re <= uhi + slack && w.im >= vlo - slack && w.im <= vhi + slack
    });
    let inside_target = dom.free.iter().all(|&k| target.contains(out[k], tol));
    Ok(Extension {
        values: out,
        u,
        v,
        min_jacobian: min_j,
        nonpositive,
        univalence_violated: nonpositive > 0,
        inside_target,
        max_principle,
    })
}

/// `f = (u_x - i u_y) / 2` on each listed triangle.
pub fn complex_gradient(mesh: &TriMesh, triangles: &[usize], u: &[f64]) -> Vec<Pt> {
    let geom = mesh.geometry();
    triangles
        .iter()
        .map(|&t| {
            let tri = mesh.triangles[t];
            let g = geom[t].grad[1] * (u[tri[1]] - u[tri[0]]) + geom[t].grad[2] * (u[tri[2]] - u[tri[0]]);
            0.5 * g.conj()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BeltramiReport {
    pub bound: f64,
    pub stars: usize,
    pub indeterminate: usize,
    pub median: f64,
    pub fraction_within: f64,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

/// Least-squares estimates of `f_z` and `f_zbar` over interior vertex stars.
/// `f` is first recovered at vertices by area-weighted averaging of the
/// triangle values, then fitted linearly over each star.
pub fn beltrami_ratio(mesh: &TriMesh, u: &[f64], p: f64, slack: f64) -> BeltramiReport {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let f_tri = complex_gradient(mesh, &all, u);
    let geom = mesh.geometry();
    let topo = mesh.topology();
    let nv = mesh.vertices.len();
    let mut f_v = vec![Pt::new(0.0, 0.0); nv];
    for v in 0..nv {
        let mut a = 0.0;
        for &t in &topo.vertex_triangles[v] {
            f_v[v] += f_tri[t] * geom[t].area;
            a += geom[t].area;
        }
        if a > 0.0 {
            f_v[v] /= a;
        }
    }
    let fscale = f_tri.iter().map(|f| f.norm()).fold(0.0, f64::max);
    let bound = (1.0 - 2.0 / p).abs() + slack;
    let mut ratios = Vec::new();
    let mut indeterminate = 0;
    for v in 0..nv {
        if topo.on_boundary[v] || topo.vertex_neighbors[v].iter().any(|&w| topo.on_boundary[w]) {
            continue;
        }
        let z0 = mesh.vertices[v];
        let pts = std::iter::once(v).chain(topo.vertex_neighbors[v].iter().copied());
        let mut m = [[0.0f64; 3]; 3];
        let mut rhs = [Pt::new(0.0, 0.0); 3];
        for w in pts {
            let d = mesh.vertices[w] - z0;
            let row = [1.0, d.re, d.im];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += row[i] * row[j];
                }
                rhs[i] += f_v[w] * row[i];
            }
        }
        let Some(sol) = solve3(m, rhs) else {
            indeterminate += 1;
            continue;
        };
        let (fx, fy) = (sol[1], sol[2]);
        let i = Pt::new(0.0, 1.0);
        let fz = 0.5 * (fx - i * fy);
        let fzb = 0.5 * (fx + i * fy);
        let tiny = 1e-12 * fscale.max(f64::MIN_POSITIVE);
        if fz.norm() <= tiny {
            indeterminate += 1;
            ratios.push(0.0);
            continue;
        }
        ratios.push(fzb.norm() / fz.norm());
    }
    let stars = ratios.len();
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if stars == 0 { 0.0 } else { sorted[stars / 2] };
    let within = ratios.iter().filter(|&&r| r <= bound).count();
    BeltramiReport {
        bound,
        stars,
        indeterminate,
        median,
        fraction_within: if stars == 0 { 1.0 } else { within as f64 / stars as f64 },
        ratios,
    }
}

/// Cramer's rule for a symmetric 3x3 system with complex right-hand side.
fn solve3(m: [[f64; 3]; 3], b: [Pt; 3]) -> Option<[Pt; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let scale = m.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
    if d.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    let mut out = [Pt::new(0.0, 0.0); 3];
    for (k, o) in out.iter_mut().enumerate() {
        let (mut re, mut im) = (m, m);
        for i in 0..3 {
            re[i][k] = b[i].re;
            im[i][k] = b[i].im;
        }
        *o = Pt::new(det(re) / d, det(im) / d);
    }
    Some(out)
}

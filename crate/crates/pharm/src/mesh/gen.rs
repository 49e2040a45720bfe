use std::collections::HashMap;

use spade::{ConstrainedDelaunayTriangulation, DelaunayTriangulation, Point2, Triangulation};

use super::{BoundaryLoop, TriMesh};
use crate::error::{Error, Result};
use crate::geometry::{Circle, CircularDomain, Pt};

const MIN_ANGLE_DEG: f64 = 20.0;
const SMOOTHING_ROUNDS: usize = 8;

/// Unit vector at angle `2 pi j / n`, exact at the quarter points.
fn unit_dir(j: usize, n: usize, offset: f64) -> Pt {
    if offset == 0.0 && (4 * j).is_multiple_of(n) {
        return match (4 * j) / n {
            0 | 4 => Pt::new(1.0, 0.0),
            1 => Pt::new(0.0, 1.0),
            2 => Pt::new(-1.0, 0.0),
            _ => Pt::new(0.0, -1.0),
        };
    }
    let t = std::f64::consts::TAU * j as f64 / n as f64 + offset;
    Pt::new(t.cos(), t.sin())
}

struct Ring {
    circle: Circle,
    n: usize,
    /// radial spacing of the structured layers
    dr: f64,
    /// +1 rings grow outward (inner circles), -1 inward (outer circle)
    dir: f64,
}

/// Conforming triangulation of a circular domain: boundary-fitted polar
/// layers along every circle, a smoothed hexagonal lattice in between,
/// constrained Delaunay connectivity.
pub fn mesh_circular_domain(dom: &CircularDomain, target_edge: f64) -> Result<TriMesh> {
    dom.validate()?;
    let h = target_edge;
    let gap = dom.narrowest_gap();
    if !(h > 0.0) || h >= gap {
        return Err(Error::Meshing(format!("target edge {h} must be positive and below the narrowest gap {gap:.4}")));
    }
    let rings: Vec<Ring> = dom
        .circles()
        .enumerate()
        .map(|(k, c)| {
            let mut n = ((std::f64::consts::TAU * c.radius / h).ceil() as usize).max(12);
            n = n.div_ceil(4) * 4;
            let dr = std::f64::consts::TAU * c.radius / n as f64 * 3f64.sqrt() / 2.0;
            Ring { circle: *c, n, dr, dir: if k == 0 { -1.0 } else { 1.0 } }
        })
        .collect();
    for r in &rings[1..] {
        if r.n < 12 || r.circle.radius < 1.5 * h {
            return Err(Error::Meshing(format!("inner radius {} is too small for edge {h}", r.circle.radius)));
        }
    }
    let layers: usize = ((gap / h - 1.6) / (2.0 * 0.87)).floor().clamp(0.0, 2.0) as usize;

    let mut pts: Vec<Pt> = Vec::new();
    let mut loops = Vec::new();
    for (k, r) in rings.iter().enumerate() {
        let start = pts.len();
        for j in 0..r.n {
            pts.push(r.circle.center + unit_dir(j, r.n, 0.0) * r.circle.radius);
        }
        loops.push(BoundaryLoop { label: k, vertices: (start..pts.len()).collect() });
    }
    for r in &rings {
        for layer in 1..=layers {
            let rad = r.circle.radius + r.dir * layer as f64 * r.dr;
            let off = std::f64::consts::PI / r.n as f64 * layer as f64;
            for j in 0..r.n {
                pts.push(r.circle.center + unit_dir(j, r.n, off) * rad);
            }
        }
    }
    let fixed = pts.len();

    let clearance = |z: Pt| -> bool {
        rings.iter().all(|r| {
            let sd = r.circle.signed_distance(z) * r.dir;
            sd >= (layers as f64 + 0.8) * r.dr
        })
    };
    let c0 = dom.outer.center;
    let big = dom.outer.radius;
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = (2.0 * big / dy).ceil() as i64 + 1;
    let cols = (2.0 * big / h).ceil() as i64 + 1;
    for i in -rows / 2..=rows / 2 {
        for j in -cols / 2..=cols / 2 {
            let x = j as f64 * h + if i.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
            let z = c0 + Pt::new(x, i as f64 * dy);
            if clearance(z) {
                pts.push(z);
            }
        }
    }

    let inside = |z: Pt| dom.contains(z);
    for _ in 0..SMOOTHING_ROUNDS {
        let tris = delaunay(&pts)?;
        let mut acc = vec![(Pt::new(0.0, 0.0), 0.0f64); pts.len()];
        for [a, b, c] in tris {
            let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
            let cen = (pa + pb + pc) / 3.0;
            if !inside(cen) {
                continue;
            }
            let area = 0.5 * ((pb - pa).re * (pc - pa).im - (pb - pa).im * (pc - pa).re);
            for v in [a, b, c] {
                acc[v].0 += cen * area;
                acc[v].1 += area;
            }
        }
        for v in fixed..pts.len() {
            if acc[v].1 > 0.0 {
                let z = acc[v].0 / acc[v].1;
                if clearance(z) {
                    pts[v] = z;
                }
            }
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(pts.len());
    for p in &pts {
        let hd = cdt
            .insert(Point2::new(p.re, p.im))
            .map_err(|e| Error::Meshing(format!("insertion failed: {e:?}")))?;
        handles.push(hd);
    }
    let back: HashMap<usize, usize> = handles.iter().enumerate().map(|(i, hd)| (hd.index(), i)).collect();
    if back.len() != pts.len() {
        return Err(Error::Meshing("duplicate mesh points".into()));
    }
    for l in &loops {
        let n = l.vertices.len();
        for k in 0..n {
            cdt.add_constraint(handles[l.vertices[k]], handles[l.vertices[(k + 1) % n]]);
        }
    }
    let mut triangles = Vec::new();
    for f in cdt.inner_faces() {
        let vs = f.vertices().map(|v| back[&v.fix().index()]);
        let cen = (pts[vs[0]] + pts[vs[1]] + pts[vs[2]]) / 3.0;
        if inside(cen) {
            triangles.push(vs);
        }
    }
    triangles.sort_unstable();
    let mesh = TriMesh::new(pts, triangles, loops)?;
    let worst = mesh.min_angle_deg();
    if worst < MIN_ANGLE_DEG {
        return Err(Error::Meshing(format!("minimum angle {worst:.2} deg below the {MIN_ANGLE_DEG} deg floor")));
    }
    Ok(mesh)
}

fn delaunay(pts: &[Pt]) -> Result<Vec<[usize; 3]>> {
    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut back = HashMap::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let hd = dt
            .insert(Point2::new(p.re, p.im))
            .map_err(|e| Error::Meshing(format!("insertion failed: {e:?}")))?;
        back.insert(hd.index(), i);
    }
    Ok(dt.inner_faces().map(|f| f.vertices().map(|v| back[&v.fix().index()])).collect())
}

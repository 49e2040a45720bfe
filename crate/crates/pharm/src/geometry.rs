//! Planar geometry on circular domains: circle inversions, reflected copies,
//! radial extensions, the arc straightener and the three square families.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Pt = Complex64;

pub mod pt_serde {
    use super::Pt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Pt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([p.re, p.im])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pt, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Pt::new(x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    #[serde(with = "pt_serde")]
    pub center: Pt,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Pt, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.re.is_finite() || !center.im.is_finite() {
            return Err(Error::Config(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Circle { center, radius })
    }

    pub fn unit() -> Self {
        Circle { center: Pt::new(0.0, 0.0), radius: 1.0 }
    }

    /// Signed distance to the circle, negative inside.
    pub fn signed_distance(&self, z: Pt) -> f64 {
        (z - self.center).norm() - self.radius
    }

    pub fn point_at(&self, theta: f64) -> Pt {
        self.center + Pt::from_polar(self.radius, theta)
    }

    pub fn reflect(&self, z: Pt) -> Result<Pt> {
        reflect_in_circle(z, self)
    }
}

/// Inversion z -> r^2 (z - c) / |z - c|^2 + c.
pub fn reflect_in_circle(z: Pt, c: &Circle) -> Result<Pt> {
    let d = z - c.center;
    let n2 = d.norm_sqr();
    if n2 == 0.0 {
        return Err(Error::AtCenter);
    }
    Ok(c.center + d * (c.radius * c.radius / n2))
}

/// Image of `other` under inversion in `mirror`. Fails if `other` passes
/// through the mirror's center.
pub fn invert_circle(mirror: &Circle, other: &Circle) -> Result<Circle> {
    let d = other.center - mirror.center;
    let dd = d.norm_sqr();
    let rr = other.radius * other.radius;
    let denom = dd - rr;
    if denom.abs() <= 1e-14 * (dd + rr) {
        return Err(Error::Precondition("circle passes through the inversion center".into()));
    }
    let k = mirror.radius * mirror.radius;
    Circle::new(mirror.center + d * (k / denom), k * other.radius / denom.abs())
}

/// Outer circle plus disjoint inner circles. Circle index 0 is the outer
/// boundary, index `i >= 1` is `inner[i - 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularDomain {
    pub outer: Circle,
    #[serde(default)]
    pub inner: Vec<Circle>,
    #[serde(default)]
    pub centers_outside: bool,
}

impl CircularDomain {
    pub fn new(outer: Circle, inner: Vec<Circle>, centers_outside: bool) -> Result<Self> {
        let d = CircularDomain { outer, inner, centers_outside };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(c: Circle) -> Self {
        CircularDomain { outer: c, inner: Vec::new(), centers_outside: false }
    }

    /// Concentric annulus r1 < |z - c| < r2.
    pub fn annulus(center: Pt, r1: f64, r2: f64) -> Result<Self> {
        Self::new(Circle::new(center, r2)?, vec![Circle::new(center, r1)?], true)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: CircularDomain = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        Circle::new(self.outer.center, self.outer.radius)?;
        for (i, c) in self.inner.iter().enumerate() {
            Circle::new(c.center, c.radius)?;
            if (c.center - self.outer.center).norm() + c.radius >= self.outer.radius {
                return Err(Error::Config(format!("inner circle {} is not inside the outer disk", i + 1)));
            }
            for (j, o) in self.inner.iter().enumerate().skip(i + 1) {
                if (c.center - o.center).norm() <= c.radius + o.radius {
                    return Err(Error::Config(format!("inner disks {} and {} intersect", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn connectivity(&self) -> usize {
        1 + self.inner.len()
    }

    pub fn circle(&self, k: usize) -> &Circle {
        if k == 0 {
            &self.outer
        } else {
            &self.inner[k - 1]
        }
    }

    pub fn circles(&self) -> impl Iterator<Item = &Circle> {
        std::iter::once(&self.outer).chain(self.inner.iter())
    }

    /// Open-domain membership.
    pub fn contains(&self, z: Pt) -> bool {
        self.outer.signed_distance(z) < 0.0 && self.inner.iter().all(|c| c.signed_distance(z) > 0.0)
    }

    /// Closed-domain membership with tolerance.
    pub fn contains_closed(&self, z: Pt, tol: f64) -> bool {
        self.outer.signed_distance(z) <= tol && self.inner.iter().all(|c| c.signed_distance(z) >= -tol)
    }

    pub fn area(&self) -> f64 {
        let r2 = |c: &Circle| std::f64::consts::PI * c.radius * c.radius;
        r2(&self.outer) - self.inner.iter().map(r2).sum::<f64>()
    }

    /// Smallest distance between two boundary circles.
    pub fn narrowest_gap(&self) -> f64 {
        let mut g = f64::INFINITY;
        for (i, c) in self.inner.iter().enumerate() {
            g = g.min(self.outer.radius - (c.center - self.outer.center).norm() - c.radius);
            for o in &self.inner[i + 1..] {
                g = g.min((c.center - o.center).norm() - c.radius - o.radius);
            }
        }
        if self.inner.is_empty() {
            g = 2.0 * self.outer.radius;
        }
        g
    }

    /// Whether the outer center really avoids the open domain.
    pub fn outer_center_outside(&self) -> bool {
        !self.contains(self.outer.center)
    }
}

/// One reflected copy: the image of the domain under inversion in circle `mirror`.
#[derive(Clone, Debug, Serialize)]
pub struct ReflectedCopy {
    pub mirror: usize,
    /// `(j, image of circle j)` for every `j != mirror`.
    pub images: Vec<(usize, Circle)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReflectedDomains {
    pub domain: CircularDomain,
    pub copies: Vec<ReflectedCopy>,
}

impl ReflectedDomains {
    /// All `(i, j, circle)` image circles, `i != j`.
    pub fn image_circles(&self) -> Vec<(usize, usize, Circle)> {
        self.copies
            .iter()
            .flat_map(|c| c.images.iter().map(move |(j, k)| (c.mirror, *j, *k)))
            .collect()
    }

    /// Membership in the open reflected copy `i`.
    pub fn copy_contains(&self, i: usize, z: Pt) -> bool {
        match reflect_in_circle(z, self.domain.circle(i)) {
            Ok(w) => self.domain.contains(w),
            Err(_) => false,
        }
    }

    /// Membership in the extended domain: closure of the domain plus all copies.
    pub fn extended_contains(&self, z: Pt) -> bool {
        self.domain.contains_closed(z, 0.0) || (0..self.copies.len()).any(|i| self.copy_contains(i, z))
    }
}

pub fn build_reflected_domains(dom: &CircularDomain) -> Result<ReflectedDomains> {
    dom.validate()?;
    if dom.connectivity() < 2 {
        return Err(Error::Unsupported("reflected copies need at least two boundary circles".into()));
    }
    if !dom.centers_outside || !dom.outer_center_outside() {
        return Err(Error::Precondition("outer center must lie outside the domain".into()));
    }
    let l = dom.connectivity();
    let mut copies = Vec::with_capacity(l);
    for i in 0..l {
        let mirror = dom.circle(i);
        let mut images = Vec::with_capacity(l - 1);
        for j in (0..l).filter(|&j| j != i) {
            images.push((j, invert_circle(mirror, dom.circle(j))?));
        }
        copies.push(ReflectedCopy { mirror: i, images });
    }
    Ok(ReflectedDomains { domain: dom.clone(), copies })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inside,
    Outside,
}

/// Radial extension of boundary values `g(theta)` given on `source`:
/// `c' + (rho / r) (g(theta) - c')` at `source.center + rho e^{i theta}`.
pub fn radial_extend<G: Fn(f64) -> Pt>(g: G, source: &Circle, target_center: Pt, side: Side, z: Pt) -> Result<Pt> {
    let d = z - source.center;
    let rho = d.norm();
    let ok = match side {
        Side::Inside => rho <= source.radius * (1.0 + 1e-12),
        Side::Outside => rho >= source.radius * (1.0 - 1e-12),
    };
    if !ok {
        return Err(Error::Precondition(format!("point at radius {rho} is on the wrong side")));
    }
    if rho == 0.0 {
        return Ok(target_center);
    }
    let t = d.arg();
    Ok(target_center + (g(t) - target_center) * (rho / source.radius))
}

/// Bi-Lipschitz map straightening the graph of a piecewise-linear `f` on
/// `[a, b]` onto its chord inside the collar `|y - f(x)| <= delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArcStraightener {
    pub xs: Vec<f64>,
    pub fs: Vec<f64>,
    pub delta: f64,
}

impl ArcStraightener {
    pub fn new(xs: Vec<f64>, fs: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config("collar half-width must be positive".into()));
        }
        if xs.len() < 2 || xs.len() != fs.len() || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("arc samples must be at least two strictly increasing abscissae".into()));
        }
        let s = ArcStraightener { xs, fs, delta };
        for (&x, &f) in s.xs.iter().zip(&s.fs) {
            if (s.phi(x) - f).abs() >= delta {
                return Err(Error::Config(format!("chord leaves the collar at x = {x}")));
            }
        }
        Ok(s)
    }

    pub fn a(&self) -> f64 {
        self.xs[0]
    }

    pub fn b(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn phi(&self, x: f64) -> f64 {
        let (a, b) = (self.a(), self.b());
        let (fa, fb) = (self.fs[0], *self.fs.last().unwrap());
        ((x - a) * fb + (b - x) * fa) / (b - a)
    }

    /// `f` on `[a, b]`, extended by the chord outside.
    pub fn f(&self, x: f64) -> f64 {
        if x <= self.a() || x >= self.b() {
            return self.phi(x);
        }
        let k = self.xs.partition_point(|&t| t <= x) - 1;
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.fs[k] + t * (self.fs[k + 1] - self.fs[k])
    }

    pub fn apply(&self, z: Pt) -> Pt {
        let (x, y) = (z.re, z.im);
        let f = self.f(x);
        let p = self.phi(x);
        let d = self.delta;
        let bump = (y - f - d).abs() - 2.0 * (y - f).abs() + (y - f + d).abs();
        Pt::new(x, y + (p - f) / (2.0 * d) * bump)
    }

    /// Inverse of `apply`, solving the per-abscissa three-piece linear map.
    pub fn inverse(&self, w: Pt) -> Pt {
        let (x, yp) = (w.re, w.im);
        let f = self.f(x);
        let p = self.phi(x);
        let d = self.delta;
        let y = if yp <= f - d || yp >= f + d {
            yp
        } else if yp <= p {
            (f - d) + (yp - (f - d)) * d / (p - f + d)
        } else {
            f + (yp - p) * d / (f + d - p)
        };
        Pt::new(x, y)
    }

    /// Smallest and largest slope of `y -> y'` over all abscissae.
    pub fn slope_bounds(&self) -> (f64, f64) {
        let d = self.delta;
        let mut lo: f64 = 1.0;
        let mut hi: f64 = 1.0;
        for (&x, &f) in self.xs.iter().zip(&self.fs) {
            let g = self.phi(x) - f;
            for s in [(d + g) / d, (d - g) / d] {
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::A, Family::B, Family::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Axis-parallel open square. `grid` holds `(x, y, side)` in integer units
/// of the owning family set, so disjointness can be checked exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    #[serde(with = "pt_serde")]
    pub corner: Pt,
    pub side: f64,
    pub family: Family,
    pub grid: [i64; 3],
}

impl Square {
    pub fn new(corner: Pt, side: f64, family: Family) -> Self {
        Square { corner, side, family, grid: [0, 0, 0] }
    }

    pub fn center(&self) -> Pt {
        self.corner + Pt::new(0.5 * self.side, 0.5 * self.side)
    }

    pub fn diameter(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }

    pub fn contains_open(&self, z: Pt) -> bool {
        z.re > self.corner.re
            && z.re < self.corner.re + self.side
            && z.im > self.corner.im
            && z.im < self.corner.im + self.side
    }

    pub fn contains_closed(&self, z: Pt, tol: f64) -> bool {
        z.re >= self.corner.re - tol
            && z.re <= self.corner.re + self.side + tol
            && z.im >= self.corner.im - tol
            && z.im <= self.corner.im + self.side + tol
    }

    pub fn corners(&self) -> [Pt; 4] {
        let s = self.side;
        let c = self.corner;
        [c, c + Pt::new(s, 0.0), c + Pt::new(s, s), c + Pt::new(0.0, s)]
    }

    /// Distance from `z` to the closed square.
    pub fn distance(&self, z: Pt) -> f64 {
        let dx = (self.corner.re - z.re).max(0.0).max(z.re - self.corner.re - self.side);
        let dy = (self.corner.im - z.im).max(0.0).max(z.im - self.corner.im - self.side);
        dx.hypot(dy)
    }

    /// Closed square meets the closed disk.
    pub fn meets_disk(&self, c: &Circle) -> bool {
        self.distance(c.center) <= c.radius
    }

    /// Closed square inside the closed disk.
    pub fn inside_disk(&self, c: &Circle) -> bool {
        self.corners().iter().all(|&p| (p - c.center).norm() <= c.radius)
    }

    pub fn open_overlap(&self, o: &Square) -> bool {
        let [x, y, s] = self.grid;
        let [u, v, t] = o.grid;
        x < u + t && u < x + s && y < v + t && v < y + s
    }
}

/// Families A, B, C of pairwise disjoint open squares avoiding a set of
/// closed disks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SquareFamilies {
    pub rho: f64,
    pub base_side: f64,
    pub s_min: f64,
    pub delta_min: f64,
    #[serde(with = "pt_serde")]
    pub origin: Pt,
    pub unit: f64,
    pub excluded: Vec<Circle>,
    pub families: [Vec<Square>; 3],
}

impl SquareFamilies {
    pub fn family(&self, f: Family) -> &[Square] {
        &self.families[f.index()]
    }

    pub fn all(&self) -> impl Iterator<Item = &Square> {
        self.families.iter().flatten()
    }

    pub fn covering(&self, z: Pt) -> Vec<&Square> {
        self.all().filter(|q| q.contains_open(z)).collect()
    }

    pub fn dist_to_excluded(&self, z: Pt) -> f64 {
        self.excluded.iter().map(|c| c.signed_distance(z)).fold(f64::INFINITY, f64::min)
    }

    /// Number of overlapping open pairs within one family (exact, on grid units).
    pub fn overlap_count(&self, f: Family) -> usize {
        let sq = self.family(f);
        let mut n = 0;
        // squares are sorted by corner, so a sweep on x suffices
        for i in 0..sq.len() {
            let [x, _, s] = sq[i].grid;
            for o in &sq[i + 1..] {
                if o.grid[0] >= x + s {
                    break;
                }
                if sq[i].open_overlap(o) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Default refinement depth below the base grid for squares touching F.
pub const DEFAULT_DEPTH: u32 = 4;

pub fn three_square_families(f: &[Circle], rho: f64, origin_shift: Pt, window: (Pt, Pt)) -> Result<SquareFamilies> {
    three_square_families_with_depth(f, rho, origin_shift, window, DEFAULT_DEPTH)
}

pub fn three_square_families_with_depth(
    f: &[Circle],
    rho: f64,
    origin_shift: Pt,
    window: (Pt, Pt),
    depth: u32,
) -> Result<SquareFamilies> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config("rho must be positive".into()));
    }
    for (i, c) in f.iter().enumerate() {
        for o in &f[i + 1..] {
            if (c.center - o.center).norm() <= c.radius + o.radius {
                return Err(Error::Config("excluded disks must be pairwise disjoint".into()));
            }
        }
    }
    let s = rho / std::f64::consts::SQRT_2;
    // integer unit: base side is 8 << depth units, C squares are 2 << depth
    let scale: i64 = 8 << depth;
    let unit = s / scale as f64;
    let s_min = s / (1u64 << depth) as f64;
    let o = origin_shift;
    let (lo, hi) = window;
    let i0 = ((lo.re - o.re) / s).floor() as i64 - 1;
    let i1 = ((hi.re - o.re) / s).ceil() as i64 + 1;
    let j0 = ((lo.im - o.im) / s).floor() as i64 - 1;
    let j1 = ((hi.im - o.im) / s).ceil() as i64 + 1;

    let mk = |x: i64, y: i64, side: i64, fam: Family| Square {
        corner: o + Pt::new(x as f64 * unit, y as f64 * unit),
        side: side as f64 * unit,
        family: fam,
        grid: [x, y, side],
    };
    let in_window = |q: &Square| {
        q.corner.re < hi.re && q.corner.re + q.side > lo.re && q.corner.im < hi.im && q.corner.im + q.side > lo.im
    };

    let mut fams: [Vec<Square>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let h = scale / 2;
    let e = scale / 8;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let (x, y) = (i * scale, j * scale);
            let seeds = [
                mk(x, y, scale, Family::A),
                mk(x + h, y + h, scale, Family::B),
                mk(x - e, y + h - e, 2 * e, Family::C),
                mk(x + h - e, y - e, 2 * e, Family::C),
            ];
            for q in seeds {
                if in_window(&q) {
                    // A and B stop at s_min, C squares start a quarter smaller
                    let floor = if q.family == Family::C { 2 } else { 8 };
                    refine(q, f, floor, &mk, &mut fams[q.family.index()]);
                }
            }
        }
    }
    for fam in fams.iter_mut() {
        fam.sort_by(|a, b| (a.grid[0], a.grid[1]).cmp(&(b.grid[0], b.grid[1])));
    }
    Ok(SquareFamilies {
        rho,
        base_side: s,
        s_min,
        delta_min: 2.0 * std::f64::consts::SQRT_2 * s_min,
        origin: o,
        unit,
        excluded: f.to_vec(),
        families: fams,
    })
}

fn refine<M: Fn(i64, i64, i64, Family) -> Square>(q: Square, f: &[Circle], floor: i64, mk: &M, out: &mut Vec<Square>) {
    if f.iter().any(|c| q.inside_disk(c)) {
        return;
    }
    if !f.iter().any(|c| q.meets_disk(c)) {
        out.push(q);
        return;
    }
    let [x, y, s] = q.grid;
    let half = s / 2;
    if half < floor {
        return;
    }
    for (dx, dy) in [(0, 0), (half, 0), (0, half), (half, half)] {
        refine(mk(x + dx, y + dy, half, q.family), f, floor, mk, out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    Inner,
    Boundary,
    Empty,
}

/// The convex region `Q ∩ D` of a square and the outer disk.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvexClip {
    pub square: Square,
    pub disk: Circle,
    pub kind: ClipKind,
}

impl ConvexClip {
    pub fn contains(&self, z: Pt, tol: f64) -> bool {
        self.kind != ClipKind::Empty
            && self.square.contains_closed(z, tol)
            && (self.kind == ClipKind::Inner || self.disk.signed_distance(z) <= tol)
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            ClipKind::Empty => 0.0,
            ClipKind::Inner => self.square.side * self.square.side,
            ClipKind::Boundary => rect_disk_area(&self.square, &self.disk),
        }
    }

    /// A point well inside the region, used as the pole for angular ordering.
    pub fn pole(&self) -> Pt {
        if self.kind != ClipKind::Boundary {
            return self.square.center();
        }
        let n = 48;
        let mut acc = Pt::new(0.0, 0.0);
        let mut k = 0usize;
        for i in 0..n {
            for j in 0..n {
                let z = self.square.corner
                    + Pt::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64) * self.square.side;
                if self.disk.signed_distance(z) < 0.0 {
                    acc += z;
                    k += 1;
                }
            }
        }
        if k == 0 {
            // sliver: nearest point of the square to the disk center, nudged inward
            let c = self.disk.center;
            let q = Pt::new(
                c.re.clamp(self.square.corner.re, self.square.corner.re + self.square.side),
                c.im.clamp(self.square.corner.im, self.square.corner.im + self.square.side),
            );
            return q;
        }
        acc / k as f64
    }
}

pub fn convex_clip(q: &Square, dom: &CircularDomain) -> Result<ConvexClip> {
    for (i, c) in dom.inner.iter().enumerate() {
        if q.meets_disk(c) {
            return Err(Error::Precondition(format!("square meets inner disk {}", i + 1)));
        }
    }
    let kind = if q.inside_disk(&dom.outer) && q.corners().iter().all(|&p| dom.outer.signed_distance(p) < 0.0) {
        ClipKind::Inner
    } else if q.distance(dom.outer.center) >= dom.outer.radius {
        ClipKind::Empty
    } else {
        ClipKind::Boundary
    };
    Ok(ConvexClip { square: *q, disk: dom.outer, kind })
}

/// Exact area of an axis-parallel square intersected with a disk.
pub fn rect_disk_area(q: &Square, c: &Circle) -> f64 {
    let x0 = q.corner.re - c.center.re;
    let y0 = q.corner.im - c.center.im;
    let (x1, y1) = (x0 + q.side, y0 + q.side);
    let r = c.radius;
    quadrant_area(x1, y1, r) - quadrant_area(x0, y1, r) - quadrant_area(x1, y0, r) + quadrant_area(x0, y0, r)
}

/// Area of `{X < x, Y < y, X^2 + Y^2 < r^2}`.
fn quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    // G is an antiderivative of sqrt(r^2 - X^2)
    let g = |t: f64| {
        let t = t.clamp(-r, r);
        0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
    };
    let xc = x.clamp(-r, r);
    if y >= r {
        return 2.0 * (g(xc) - g(-r));
    }
    if y <= -r {
        return 0.0;
    }
    let w = (r * r - y * y).sqrt();
    // on |X| < w the column is cut at y, elsewhere it is full (y >= 0) or empty (y < 0)
    let inner = |a: f64, b: f64| if b > a { y * (b - a) + g(b) - g(a) } else { 0.0 };
    let full = |a: f64, b: f64| if b > a { 2.0 * (g(b) - g(a)) } else { 0.0 };
    let mut area = inner(-w, xc.min(w));
    if y >= 0.0 {
        area += full(-r, xc.min(-w)) + full(w, xc);
    }
    area
}

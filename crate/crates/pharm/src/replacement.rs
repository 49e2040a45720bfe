//! Cell replacement, the three family sweeps, the per-circle chain and an
//! energy-descent driver.
//!
//! Cells are extracted from the map as given and solved directly; there is no
//! approximating homeomorphism sequence behind them.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    convex_clip, invert_circle, reflect_in_circle, three_square_families, Circle, CircularDomain, ClipKind, Family, Pt,
    Square, SquareFamilies,
};
use crate::mesh::{
    check_injectivity, energy_on, patches, royden_distance, sup_distance, total_energy, CellPatch, DiscreteMap,
    InjectivityReport, TriMesh,
};
use crate::psolve::{extension_with_tolerance, ConvexTarget, SolveOptions};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplaceOptions {
    pub solve: SolveOptions,
    /// Angular backtracking (radians) tolerated along a cell's boundary trace.
    pub monotone_tol: f64,
    /// Royden budget for a triple sweep; `None` disables the check.
    pub budget: Option<f64>,
}

impl Default for ReplaceOptions {
    fn default() -> Self {
        ReplaceOptions { solve: SolveOptions::default(), monotone_tol: 1e-9, budget: None }
    }
}

impl ReplaceOptions {
    fn for_map(&self, m: &DiscreteMap) -> Self {
        let mut o = self.clone();
        o.solve.p = m.p;
        o
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotDisk,
    NoInterior,
    NonMonotone,
    TraceOutside,
    LeavesClip,
    Fold,
    EnergyIncrease,
    Conflict,
    Solver,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellOutcome {
    pub replaced: bool,
    pub skip: Option<SkipReason>,
    pub triangles: usize,
    pub interior: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub min_jacobian: f64,
    /// Integral of the Jacobian of the replaced map over the cell.
    pub jacobian_integral: f64,
    pub clip_area: f64,
}

impl CellOutcome {
    fn skipped(cell: &CellPatch, why: SkipReason, e: f64) -> Self {
        CellOutcome {
            replaced: false,
            skip: Some(why),
            triangles: cell.triangles.len(),
            interior: cell.interior.len(),
            energy_before: e,
            energy_after: e,
            min_jacobian: f64::NAN,
            jacobian_integral: f64::NAN,
            clip_area: cell.clip.map_or(f64::NAN, |c| c.area()),
        }
    }
}

/// Solves one cell against a value snapshot. Returns the outcome and the new
/// values of the cell's interior vertices (empty when skipped).
fn solve_cell(m: &DiscreteMap, cell: &CellPatch, opts: &ReplaceOptions) -> (CellOutcome, Vec<(usize, Pt)>) {
    let e0 = energy_on(m, &cell.triangles);
    let Some(clip) = cell.clip else {
        return (CellOutcome::skipped(cell, SkipReason::TraceOutside, e0), Vec::new());
    };
    if !cell.is_disk() {
        return (CellOutcome::skipped(cell, SkipReason::NotDisk, e0), Vec::new());
    }
    if cell.interior.is_empty() {
        return (CellOutcome::skipped(cell, SkipReason::NoInterior, e0), Vec::new());
    }
    let target = ConvexTarget::Clip(clip);
    let ext = match extension_with_tolerance(&m.mesh, cell, &m.values, &target, &opts.solve, opts.monotone_tol) {
        Ok(x) => x,
        Err(Error::NonMonotone(_)) => return (CellOutcome::skipped(cell, SkipReason::NonMonotone, e0), Vec::new()),
        Err(Error::Precondition(_)) => return (CellOutcome::skipped(cell, SkipReason::TraceOutside, e0), Vec::new()),
        Err(_) => return (CellOutcome::skipped(cell, SkipReason::Solver, e0), Vec::new()),
    };
    // the square part is checked without slack so displacements stay within
    // the square's diameter
    let disk_tol = 1e-9 * clip.square.side;
    let inside = cell.interior.iter().all(|&v| {
        let w = ext.values[v];
        clip.square.contains_closed(w, 0.0) && (clip.kind == ClipKind::Inner || clip.disk.signed_distance(w) <= disk_tol)
    });
    if !inside {
        return (CellOutcome::skipped(cell, SkipReason::LeavesClip, e0), Vec::new());
    }
    if ext.nonpositive > 0 {
        return (CellOutcome::skipped(cell, SkipReason::Fold, e0), Vec::new());
    }
    let out = m.with_values(ext.values);
    let e1 = energy_on(&out, &cell.triangles);
    if e1 > e0 * (1.0 + 1e-12) {
        return (CellOutcome::skipped(cell, SkipReason::EnergyIncrease, e0), Vec::new());
    }
    let geom = m.mesh.geometry();
    let jint = cell.triangles.iter().map(|&t| geom[t].area * out.jacobian(t)).sum();
    let updates = cell.interior.iter().map(|&v| (v, out.values[v])).collect();
    let outcome = CellOutcome {
        replaced: true,
        skip: None,
        triangles: cell.triangles.len(),
        interior: cell.interior.len(),
        energy_before: e0,
        energy_after: e1,
        min_jacobian: ext.min_jacobian,
        jacobian_integral: jint,
        clip_area: clip.area(),
    };
    (outcome, updates)
}

/// Replaces `m` on one cell by the p-harmonic extension of its own trace.
/// Vertices outside the cell interior keep their values bit for bit; a cell
/// failing a precondition comes back unchanged with the reason recorded.
pub fn replace_on_cell(m: &DiscreteMap, cell: &CellPatch, opts: &ReplaceOptions) -> Result<(DiscreteMap, CellOutcome)> {
    let opts = opts.for_map(m);
    opts.solve.validate()?;
    let (outcome, updates) = solve_cell(m, cell, &opts);
    let mut values = m.values.clone();
    for (v, w) in updates {
        values[v] = w;
    }
    Ok((m.with_values(values), outcome))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub family: Option<Family>,
    /// Largest square diameter in the sweep.
    pub rho: f64,
    pub squares: usize,
    pub cells: usize,
    pub replaced: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub energy_before: f64,
    pub energy_after: f64,
    pub sup_distance: f64,
    pub royden_distance: f64,
    pub injectivity: InjectivityReport,
    /// Triangles of replaced cells.
    #[serde(skip)]
    pub touched: Vec<usize>,
}

/// All preimage patches of the clips of `squares`, each tagged with its clip.
/// Squares whose clip is empty are dropped.
pub fn family_cells(m: &DiscreteMap, squares: &[Square]) -> Result<Vec<CellPatch>> {
    let mut clips = Vec::with_capacity(squares.len());
    for q in squares {
        let c = convex_clip(q, &m.target)?;
        if c.kind != ClipKind::Empty {
            clips.push(c);
        }
    }
    if clips.is_empty() {
        return Ok(Vec::new());
    }
    let bucket = clips.iter().map(|c| c.square.side).fold(0.0, f64::max);
    let key = |x: f64| (x / bucket).floor() as i64;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, c) in clips.iter().enumerate() {
        let q = c.square;
        for i in key(q.corner.re)..=key(q.corner.re + q.side) {
            for j in key(q.corner.im)..=key(q.corner.im + q.side) {
                grid.entry((i, j)).or_default().push(k);
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clips.len()];
    let mut cand = Vec::new();
    for (t, tri) in m.mesh.triangles.iter().enumerate() {
        let w = tri.map(|v| m.values[v]);
        let (x0, x1) = (w.iter().map(|z| z.re).fold(f64::INFINITY, f64::min), w.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (w.iter().map(|z| z.im).fold(f64::INFINITY, f64::min), w.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max));
        if x1 - x0 > bucket || y1 - y0 > bucket {
            continue;
        }
        cand.clear();
        for i in key(x0)..=key(x1) {
            for j in key(y0)..=key(y1) {
                if let Some(ks) = grid.get(&(i, j)) {
                    cand.extend_from_slice(ks);
                }
            }
        }
        cand.sort_unstable();
        cand.dedup();
        for &k in &cand {
            let tol = 1e-12 * clips[k].square.side;
            if w.iter().all(|&z| clips[k].contains(z, tol)) {
                members[k].push(t);
            }
        }
    }
    let mut cells = Vec::new();
    for (k, tris) in members.iter().enumerate() {
        for mut p in patches(&m.mesh, tris) {
            p.clip = Some(clips[k]);
            cells.push(p);
        }
    }
    Ok(cells)
}

/// Indices of cells whose interior vertices no other cell reads or writes.
fn independent(cells: &[CellPatch], n: usize) -> Vec<bool> {
    let mut count = vec![0u32; n];
    for c in cells {
        for &v in &c.vertices {
            count[v] += 1;
        }
    }
    cells.iter().map(|c| c.interior.iter().all(|&v| count[v] == 1)).collect()
}

/// One family sweep: replacement on every admissible cell. Cells are solved
/// concurrently against the input and scattered back in cell order.
pub fn sweep_family(m: &DiscreteMap, squares: &[Square], opts: &ReplaceOptions) -> Result<(DiscreteMap, SweepReport)> {
    sweep_impl(m, squares, opts, None)
}

/// Sequential sweep visiting the cells in the given order (a permutation of
/// the cell list), each solved against the evolving map.
pub fn sweep_family_ordered(
    m: &DiscreteMap,
    squares: &[Square],
    opts: &ReplaceOptions,
    order: &[usize],
) -> Result<(DiscreteMap, SweepReport)> {
    sweep_impl(m, squares, opts, Some(order))
}

fn sweep_impl(
    m: &DiscreteMap,
    squares: &[Square],
    opts: &ReplaceOptions,
    order: Option<&[usize]>,
) -> Result<(DiscreteMap, SweepReport)> {
    let opts = opts.for_map(m);
    opts.solve.validate()?;
    let cells = family_cells(m, squares)?;
    let free = independent(&cells, m.values.len());
    let mut values = m.values.clone();
    let mut outcomes: Vec<Option<CellOutcome>> = vec![None; cells.len()];
    match order {
        None => {
            let solved: Vec<(usize, CellOutcome, Vec<(usize, Pt)>)> = (0..cells.len())
                .into_par_iter()
                .filter(|&k| free[k])
                .map(|k| {
                    let (o, u) = solve_cell(m, &cells[k], &opts);
                    (k, o, u)
                })
                .collect();
            for (k, o, u) in solved {
                for (v, w) in u {
                    values[v] = w;
                }
                outcomes[k] = Some(o);
            }
        }
        Some(ord) => {
            let mut seen = vec![false; cells.len()];
            if ord.len() != cells.len() || ord.iter().any(|&k| k >= cells.len() || std::mem::replace(&mut seen[k], true)) {
                return Err(Error::Config("cell order must be a permutation of the cells".into()));
            }
            let mut cur = m.clone();
            for &k in ord.iter().filter(|&&k| free[k]) {
                let (o, u) = solve_cell(&cur, &cells[k], &opts);
                for (v, w) in u {
                    cur.values[v] = w;
                }
                outcomes[k] = Some(o);
            }
            values = cur.values;
        }
    }
    let out = m.with_values(values);
    let mut skipped = BTreeMap::new();
    let mut touched = Vec::new();
    let mut replaced = 0;
    for (k, o) in outcomes.iter().enumerate() {
        match o {
            None => *skipped.entry(SkipReason::Conflict).or_insert(0) += 1,
            Some(o) if o.replaced => {
                replaced += 1;
                touched.extend_from_slice(&cells[k].triangles);
            }
            Some(o) => *skipped.entry(o.skip.unwrap_or(SkipReason::Solver)).or_insert(0) += 1,
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let family = squares.first().map(|q| q.family).filter(|f| squares.iter().all(|q| q.family == *f));
    let report = SweepReport {
        family,
        rho: squares.iter().map(|q| q.diameter()).fold(0.0, f64::max),
        squares: squares.len(),
        cells: cells.len(),
        replaced,
        skipped,
        energy_before: total_energy(m),
        energy_after: total_energy(&out),
        sup_distance: sup_distance(m, &out)?,
        royden_distance: royden_distance(m, &out)?,
        injectivity: check_injectivity(&out),
        touched,
    };
    Ok((out, report))
}

/// Square families for a target domain: `F` is the union of the inner disks
/// and the window is the outer disk's bounding box.
pub fn families_for_domain(target: &CircularDomain, rho: f64, origin_shift: Pt) -> Result<SquareFamilies> {
    let r = target.outer.radius;
    if !(rho > 0.0) || rho > 0.5 * r {
        return Err(Error::Config(format!("rho {rho} must lie in (0, {}]", 0.5 * r)));
    }
    let c = target.outer.center;
    let d = Pt::new(r, r);
    three_square_families(&target.inner, rho, origin_shift, (c - d, c + d))
}

/// Triangles whose three vertex images do not all sit on one boundary
/// circle of the target other than circle `k`: the triangle-level preimage
/// of the open target together with circle `k`.
pub fn omega_region(m: &DiscreteMap, k: usize) -> Vec<usize> {
    let circles: Vec<(usize, Circle)> =
        m.target.circles().enumerate().filter(|&(j, _)| j != k).map(|(j, c)| (j, *c)).collect();
    let on = |w: Pt, c: &Circle| c.signed_distance(w).abs() <= 1e-9 * c.radius;
    (0..m.mesh.triangles.len())
        .filter(|&t| {
            let w = m.mesh.triangles[t].map(|v| m.values[v]);
            !circles.iter().any(|(_, c)| w.iter().all(|&z| on(z, c)))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TripleReport {
    pub rho: f64,
    pub sweeps: Vec<SweepReport>,
    pub energy_before: f64,
    pub energy_after: f64,
    pub sup_distance: f64,
    pub royden_distance: f64,
    pub budget: Option<f64>,
    pub budget_exceeded: bool,
    pub boundary_unchanged: bool,
    /// Triangles touched by some replaced cell across the three sweeps.
    #[serde(skip)]
    pub omega: Vec<usize>,
    pub omega_triangles: usize,
    /// Minimum Jacobian over the touched triangles.
    pub omega_min_jacobian: f64,
    /// Size of the triangle-level preimage of the target plus the outer circle.
    pub preimage_triangles: usize,
    pub injectivity: InjectivityReport,
}

/// Sweeps with families A, B and C in turn.
pub fn triple_sweep(m: &DiscreteMap, fams: &SquareFamilies, opts: &ReplaceOptions) -> Result<(DiscreteMap, TripleReport)> {
    let mut cur = m.clone();
    let mut sweeps = Vec::with_capacity(3);
    let mut omega = Vec::new();
    for f in Family::ALL {
        let (next, rep) = sweep_family(&cur, fams.family(f), opts)?;
        omega.extend_from_slice(&rep.touched);
        sweeps.push(rep);
        cur = next;
    }
    omega.sort_unstable();
    omega.dedup();
    let royden = royden_distance(m, &cur)?;
    let boundary_unchanged = m.mesh.boundary_vertices().iter().all(|&v| m.values[v] == cur.values[v]);
    let omega_min_jacobian = omega.iter().map(|&t| cur.jacobian(t)).fold(f64::INFINITY, f64::min);
    let report = TripleReport {
        rho: fams.rho,
        energy_before: total_energy(m),
        energy_after: total_energy(&cur),
        sup_distance: sup_distance(m, &cur)?,
        royden_distance: royden,
        budget: opts.budget,
        budget_exceeded: opts.budget.is_some_and(|b| royden > b),
        boundary_unchanged,
        omega_triangles: omega.len(),
        omega,
        omega_min_jacobian,
        preimage_triangles: omega_region(m, 0).len(),
        injectivity: check_injectivity(&cur),
        sweeps,
    };
    Ok((cur, report))
}

/// Triple sweeps with `rho` halved until the Royden budget holds or
/// `max_halvings` is used up; the last attempt is returned either way.
pub fn calibrated_triple_sweep(
    m: &DiscreteMap,
    rho: f64,
    origin_shift: Pt,
    opts: &ReplaceOptions,
    max_halvings: usize,
) -> Result<(DiscreteMap, TripleReport)> {
    let mut r = rho;
    let mut last = None;
    for _ in 0..=max_halvings {
        let fams = families_for_domain(&m.target, r, origin_shift)?;
        let (out, rep) = triple_sweep(m, &fams, opts)?;
        if !rep.budget_exceeded {
            return Ok((out, rep));
        }
        last = Some((out, rep));
        r *= 0.5;
    }
    Ok(last.expect("at least one attempt"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Royden budget per link, measured in the original coordinates.
    pub eps: f64,
    /// Square diameters tried per link, largest first; entries above half the
    /// link's outer radius are passed over.
    pub rho: Vec<f64>,
    pub p: f64,
    /// Boundary circles in processing order, 0 for the outer circle.
    pub order: Vec<usize>,
    #[serde(with = "crate::geometry::pt_serde")]
    pub origin_shift: Pt,
    pub replace: ReplaceOptions,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            eps: 0.1,
            rho: vec![0.4, 0.2, 0.1, 0.05],
            p: 2.0,
            order: Vec::new(),
            origin_shift: Pt::new(0.0, 0.0),
            replace: ReplaceOptions::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, m: &DiscreteMap) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.rho.is_empty() || self.rho.iter().any(|&r| !(r > 0.0)) || self.rho.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("rho schedule must be positive and strictly decreasing".into()));
        }
        if self.p != m.p {
            return Err(Error::Config(format!("chain exponent {} differs from the map's {}", self.p, m.p)));
        }
        let l = m.target.connectivity();
        let mut seen = vec![false; l];
        if self.order.len() != l || self.order.iter().any(|&k| k >= l || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::Config(format!("order must list each of the {l} boundary circles once")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LinkReport {
    pub circle: usize,
    /// `None` when no schedule entry fit the link's domain.
    pub rho: Option<f64>,
    pub shift: Option<[f64; 2]>,
    pub attempts: usize,
    pub royden_distance: f64,
    pub budget_exceeded: bool,
    pub replaced_cells: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
    /// Non-positive Jacobians left on the link's region.
    pub omega_folds: usize,
    /// Non-positive Jacobians left anywhere.
    pub folds: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    #[serde(skip)]
    pub omega: Vec<usize>,
    pub omega_triangles: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub eps: f64,
    pub links: Vec<LinkReport>,
    pub royden_distance: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub boundary_identical: bool,
    /// Every triangle lies in some link's region.
    pub omega_covers: bool,
    pub uncovered: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub injectivity: InjectivityReport,
}

/// The link's working copy: mesh, values and target seen from circle `k`
/// as the outer circle, and the map back to the original target.
struct LinkFrame {
    map: DiscreteMap,
    back: Option<Circle>,
}

fn link_frame(m: &DiscreteMap, k: usize) -> Result<LinkFrame> {
    if k == 0 {
        return Ok(LinkFrame { map: m.clone(), back: None });
    }
    if !m.target.centers_outside {
        return Err(Error::Precondition(format!(
            "circle {k} cannot play the outer role: target is not flagged with centers outside"
        )));
    }
    let src = m
        .mesh
        .loop_circle(k)
        .ok_or_else(|| Error::Precondition(format!("mesh has no boundary loop for circle {k}")))?;
    let tgt = *m.target.circle(k);
    let mesh: TriMesh = m.mesh.mapped(|z| reflect_in_circle(z, &src).unwrap_or(z), true)?;
    let mut inner = Vec::new();
    for j in (0..m.target.connectivity()).filter(|&j| j != k) {
        inner.push(invert_circle(&tgt, m.target.circle(j))?);
    }
    let target = CircularDomain::new(tgt, inner, true)?;
    let values = m.values.iter().map(|&w| reflect_in_circle(w, &tgt)).collect::<Result<Vec<_>>>()?;
    Ok(LinkFrame { map: DiscreteMap::new(Arc::new(mesh), values, m.p, target)?, back: Some(tgt) })
}

/// Pulls a link result back: only vertices the link changed are rewritten.
fn pull_back(m: &DiscreteMap, frame: &LinkFrame, out: &DiscreteMap) -> Result<DiscreteMap> {
    let mut values = m.values.clone();
    for (v, (a, b)) in frame.map.values.iter().zip(&out.values).enumerate() {
        if a != b {
            values[v] = match &frame.back {
                Some(c) => reflect_in_circle(*b, c)?,
                None => *b,
            };
        }
    }
    Ok(m.with_values(values))
}

/// Grid offsets tried per square size, as fractions of the square side.
const LINK_SHIFTS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.25, 0.75)];

/// One link of the chain: a triple sweep with circle `k` in the outer role.
/// Attempts run over the rho schedule and a few grid offsets each; the first
/// one within budget and without folds on the link's region is kept,
/// otherwise the best by (budget, folds).
fn chain_link(m: &DiscreteMap, k: usize, cfg: &ChainConfig) -> Result<(DiscreteMap, LinkReport)> {
    let frame = link_frame(m, k)?;
    let omega = omega_region(m, k);
    let outer_r = frame.map.target.outer.radius;
    let mut best: Option<(DiscreteMap, LinkReport)> = None;
    let mut attempts = 0;
    let mut opts = cfg.replace.clone();
    opts.budget = None;
    'outer: for &rho in cfg.rho.iter().filter(|&&r| r <= 0.5 * outer_r) {
        let s = rho / std::f64::consts::SQRT_2;
        for (fx, fy) in LINK_SHIFTS {
            attempts += 1;
            let shift = cfg.origin_shift + Pt::new(fx, fy) * s;
            let fams = families_for_domain(&frame.map.target, rho, shift)?;
            let (out, rep) = triple_sweep(&frame.map, &fams, &opts)?;
            let back = pull_back(m, &frame, &out)?;
            let royden = royden_distance(m, &back)?;
            let mut skipped = BTreeMap::new();
            for sw in &rep.sweeps {
                for (r, n) in &sw.skipped {
                    *skipped.entry(*r).or_insert(0) += n;
                }
            }
            let link = LinkReport {
                circle: k,
                rho: Some(rho),
                shift: Some([shift.re, shift.im]),
                attempts,
                royden_distance: royden,
                budget_exceeded: royden > cfg.eps,
                replaced_cells: rep.sweeps.iter().map(|s| s.replaced).sum(),
                skipped,
                omega_folds: omega.iter().filter(|&&t| back.jacobian(t) <= 0.0).count(),
                folds: (0..back.mesh.triangles.len()).filter(|&t| back.jacobian(t) <= 0.0).count(),
                energy_before: total_energy(m),
                energy_after: total_energy(&back),
                omega_triangles: omega.len(),
                omega: omega.clone(),
            };
            let rank = |l: &LinkReport| (l.budget_exceeded, l.folds);
            let done = rank(&link) == (false, 0);
            if best.as_ref().is_none_or(|(_, b)| rank(&link) < rank(b)) {
                best = Some((back, link));
            }
            if done {
                break 'outer;
            }
        }
    }
    if let Some((map, mut link)) = best {
        link.attempts = attempts;
        return Ok((map, link));
    }
    let e = total_energy(m);
    let link = LinkReport {
        circle: k,
        rho: None,
        shift: None,
        attempts: 0,
        royden_distance: 0.0,
        budget_exceeded: false,
        replaced_cells: 0,
        skipped: BTreeMap::new(),
        omega_folds: omega.iter().filter(|&&t| m.jacobian(t) <= 0.0).count(),
        folds: (0..m.mesh.triangles.len()).filter(|&t| m.jacobian(t) <= 0.0).count(),
        energy_before: e,
        energy_after: e,
        omega_triangles: omega.len(),
        omega,
    };
    Ok((m.clone(), link))
}

/// The chain `H_0, ..., H_l`: one calibrated triple sweep per boundary circle
/// in `cfg.order`, inner circles handled through reflection in the source
/// and target circles.
pub fn boundary_chain(m: &DiscreteMap, cfg: &ChainConfig) -> Result<(DiscreteMap, ChainReport)> {
    cfg.validate(m)?;
    let mut cur = m.clone();
    let mut links = Vec::with_capacity(cfg.order.len());
    let mut covered = vec![false; m.mesh.triangles.len()];
    for &k in &cfg.order {
        let (next, link) = chain_link(&cur, k, cfg)?;
        for &t in &link.omega {
            covered[t] = true;
        }
        links.push(link);
        cur = next;
    }
    let uncovered = covered.iter().filter(|&&c| !c).count();
    let royden = royden_distance(m, &cur)?;
    let bound = cfg.order.len() as f64 * cfg.eps;
    let report = ChainReport {
        eps: cfg.eps,
        links,
        royden_distance: royden,
        bound,
        within_bound: royden <= bound,
        boundary_identical: m.mesh.boundary_vertices().iter().all(|&v| m.values[v] == cur.values[v]),
        omega_covers: uncovered == 0,
        uncovered,
        energy_before: total_energy(m),
        energy_after: total_energy(&cur),
        injectivity: check_injectivity(&cur),
    };
    Ok((cur, report))
}

/// Runs the chain from `m` once per budget in `eps_schedule`.
pub fn approximate_by_diffeomorphism(
    m: &DiscreteMap,
    eps_schedule: &[f64],
    cfg: &ChainConfig,
) -> Result<Vec<(DiscreteMap, ChainReport)>> {
    if eps_schedule.is_empty() || eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps schedule must be strictly decreasing".into()));
    }
    eps_schedule
        .iter()
        .map(|&eps| boundary_chain(m, &ChainConfig { eps, ..cfg.clone() }))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DescentReport {
    pub rho: f64,
    /// Energy before the first round and after each round.
    pub energies: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Grid shifts used by `energy_descent` repeat with this period.
pub const DESCENT_CYCLE: usize = 4;

/// Number of consecutive quiet cycles required before `energy_descent` stops.
/// One quiet cycle is not enough: a cell that was skipped can become
/// replaceable a round later and release a late drop.
pub const DESCENT_PATIENCE: usize = 2;

/// Repeated triple sweeps over shifted grids. The shifts repeat every
/// `DESCENT_CYCLE` rounds; the loop stops after `DESCENT_PATIENCE` consecutive
/// cycles that each lower the energy by less than `stop_tol`, or after
/// `max_rounds`.
pub fn energy_descent(
    m: &DiscreteMap,
    rho: f64,
    opts: &ReplaceOptions,
    stop_tol: f64,
    max_rounds: usize,
) -> Result<(DiscreteMap, DescentReport)> {
    let mut cur = m.clone();
    let mut energies = vec![total_energy(m)];
    let mut converged = false;
    let mut quiet = 0;
    let s = rho / std::f64::consts::SQRT_2;
    let mut opts = opts.clone();
    opts.budget = None;
    for round in 0..max_rounds {
        // low-discrepancy shifts so successive grids do not line up
        let k = (round % DESCENT_CYCLE) as f64;
        let shift = Pt::new((k * 0.618_033_988_749_895).fract(), (k * 0.754_877_666_246_693).fract()) * s;
        let fams = families_for_domain(&m.target, rho, shift)?;
        let (next, _) = triple_sweep(&cur, &fams, &opts)?;
        let e = total_energy(&next);
        cur = next;
        energies.push(e);
        if (round + 1) % DESCENT_CYCLE == 0 {
            if energies[energies.len() - 1 - DESCENT_CYCLE] - e < stop_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet == DESCENT_PATIENCE {
                converged = true;
                break;
            }
        }
    }
    let rounds = energies.len() - 1;
    Ok((cur, DescentReport { rho, energies, rounds, converged }))
}

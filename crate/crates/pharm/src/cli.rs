//! Scenario drivers: run configuration, the Möbius and puncture demos, and
//! output files (CSV tables, JSON-lines reports, JSON summaries, SVG).

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Circle, CircularDomain, Pt, Square};
use crate::mesh::io::{self, SCHEMA};
use crate::mesh::{
    check_injectivity, extract_cell, field_energy, mesh_circular_domain, sup_distance, total_energy,
    DiscreteMap, TriMesh,
};
use crate::psolve::{beltrami_ratio, solve_scalar, SolveDomain, SolveOptions};
use crate::replacement::{
    approximate_by_diffeomorphism, energy_descent, families_for_domain, replace_on_cell, triple_sweep, ChainConfig,
    ReplaceOptions,
};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "PHARM_OUT_DIR";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: String,
    /// Source domain; each scenario has its own default.
    pub domain: Option<CircularDomain>,
    /// Target domain; defaults to the source domain.
    pub target: Option<CircularDomain>,
    pub mesh_edge: f64,
    pub p: f64,
    pub rho: Vec<f64>,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Number of Möbius maps in the collapse demo.
    pub k: usize,
    pub mesh_file: Option<PathBuf>,
    pub map_file: Option<PathBuf>,
    pub stop_tol: f64,
    pub max_rounds: usize,
    pub svg: bool,
    pub solve: SolveOptions,
    /// Chain settings for `approximate`; `rho` also drives `sweep` when set.
    pub chain: Option<ChainConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: String::new(),
            domain: None,
            target: None,
            mesh_edge: 0.05,
            p: 2.0,
            rho: vec![0.4, 0.2, 0.1],
            eps: vec![0.4, 0.2, 0.1],
            seed: 1,
            out_dir: PathBuf::from("out"),
            k: 5,
            mesh_file: None,
            map_file: None,
            stop_tol: 1e-6,
            max_rounds: 10,
            svg: false,
            solve: SolveOptions::default(),
            chain: None,
        }
    }
}

pub const SCENARIOS: [&str; 8] = ["mesh", "solve", "replace", "sweep", "approximate", "descent", "mobius", "puncture"];

impl RunConfig {
    /// Overlays the keys of a JSON config file onto `self`.
    pub fn merge_json(&self, overrides: &str) -> Result<RunConfig> {
        let mut base = serde_json::to_value(self)?;
        let over: Value = serde_json::from_str(overrides)?;
        let Value::Object(over) = over else {
            return Err(Error::Config("config file must hold a JSON object".into()));
        };
        let obj = base.as_object_mut().expect("struct serializes to an object");
        for (k, v) in over {
            if !obj.contains_key(&k) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
            obj.insert(k, v);
        }
        Ok(serde_json::from_value(base)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(Error::Config(format!("unknown scenario '{}' (expected one of {:?})", self.scenario, SCENARIOS)));
        }
        if !(self.mesh_edge > 0.0 && self.mesh_edge.is_finite()) {
            return Err(Error::Config("mesh edge must be positive".into()));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if self.scenario == "mobius" && self.k < 3 {
            return Err(Error::Config("the Möbius demo needs at least 3 maps".into()));
        }
        Ok(())
    }
}

// ---------- scenario maps ----------

/// `h_k(z) = (z + a_k) / (1 + a_k z)`, `a_k = (k - 1) / k`, on a unit-disk
/// mesh. Real vertices use real arithmetic so `h_k(1) = 1`, `h_k(-1) = -1`.
pub fn mobius_sequence(k: usize, mesh: Arc<TriMesh>) -> Result<DiscreteMap> {
    if k == 0 {
        return Err(Error::Config("Möbius index starts at 1".into()));
    }
    let a = (k as f64 - 1.0) / k as f64;
    DiscreteMap::from_fn(mesh, 2.0, CircularDomain::disk(Circle::unit()), |z| {
        if z.im == 0.0 {
            Pt::new((z.re + a) / (1.0 + a * z.re), 0.0)
        } else {
            (z + a) / (1.0 + a * z)
        }
    })
}

/// Smooth perturbation of the identity on a disk, vanishing on the boundary.
pub fn perturbed_identity(mesh: Arc<TriMesh>, dom: &CircularDomain, p: f64, amp: f64, seed: u64) -> Result<DiscreteMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, Pt)> = (0..4)
        .map(|_| {
            let c = Pt::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0), rng.gen_range(0.0..TAU), c)
        })
        .collect();
    let c0 = dom.outer.center;
    let r = dom.outer.radius;
    let boundary: Vec<bool> = (0..mesh.vertices.len()).map(|v| mesh.is_boundary_vertex(v)).collect();
    let vals = mesh
        .vertices
        .iter()
        .zip(&boundary)
        .map(|(&z, &b)| {
            if b {
                return z;
            }
            let w = (z - c0) / r;
            let bump = 1.0 - w.norm_sqr();
            let field: Pt = modes.iter().map(|&(fx, fy, ph, c)| c * (fx * w.re + ph).sin() * (fy * w.im).cos()).sum();
            z + field * (amp * r * bump / 4.0)
        })
        .collect();
    DiscreteMap::new(mesh, vals, p, dom.clone())
}

/// Parameters of the pinched annulus map: a band of the given width around
/// the circle of radius `collapse_radius`, over the sector `|theta| < half_angle`,
/// is collapsed radially onto that circle; the rest is stretched to fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Pinch {
    pub collapse_radius: f64,
    pub band: f64,
    pub half_angle: f64,
}

impl Default for Pinch {
    fn default() -> Self {
        Pinch { collapse_radius: 1.5, band: 0.06, half_angle: 0.25 }
    }
}

impl Pinch {
    /// Radial profile on the annulus `1 < r < 2`.
    pub fn apply(&self, z: Pt) -> Pt {
        let r = z.norm();
        let th = z.arg();
        let w = if th.abs() < self.half_angle { (PI * th / (2.0 * self.half_angle)).cos().powi(2) } else { 0.0 };
        let c = self.band * w;
        let rc = self.collapse_radius;
        let (lo, hi) = (rc - 0.5 * c, rc + 0.5 * c);
        let rr = if r <= lo {
            1.0 + (r - 1.0) * (rc - 1.0) / (lo - 1.0)
        } else if r >= hi {
            rc + (r - hi) * (2.0 - rc) / (2.0 - hi)
        } else {
            rc
        };
        Pt::from_polar(rr, th)
    }
}

pub fn standard_annulus() -> CircularDomain {
    CircularDomain::annulus(Pt::new(0.0, 0.0), 1.0, 2.0).expect("valid annulus")
}

/// Monotone, non-injective map of the annulus `1 < |z| < 2` onto itself;
/// boundary vertices keep their positions exactly.
pub fn pinched_annulus_map(mesh: Arc<TriMesh>, p: f64, pinch: Pinch) -> Result<DiscreteMap> {
    let vals = (0..mesh.vertices.len())
        .map(|v| if mesh.is_boundary_vertex(v) { mesh.vertices[v] } else { pinch.apply(mesh.vertices[v]) })
        .collect();
    DiscreteMap::new(mesh, vals, p, standard_annulus())
}

/// `z (1 + 0.3 sin(5 theta) (r - 1)(2 - r))` on the annulus `1 < |z| < 2`;
/// the radial taper keeps the boundary fixed and the map injective.
pub fn noisy_annulus_map(mesh: Arc<TriMesh>, p: f64) -> Result<DiscreteMap> {
    let vals = (0..mesh.vertices.len())
        .map(|v| {
            let z = mesh.vertices[v];
            if mesh.is_boundary_vertex(v) {
                return z;
            }
            let r = z.norm();
            z * (1.0 + 0.3 * (5.0 * z.arg()).sin() * (r - 1.0) * (2.0 - r))
        })
        .collect();
    DiscreteMap::new(mesh, vals, p, standard_annulus())
}

/// Closed-form radial p-harmonic function on `1 < r < 2` with values 0 and 1.
pub fn radial_exact(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        r.ln() / 2f64.ln()
    } else {
        let e = (p - 2.0) / (p - 1.0);
        (r.powf(e) - 1.0) / (2f64.powf(e) - 1.0)
    }
}

// ---------- Möbius collapse demo ----------

#[derive(Clone, Debug, Serialize)]
pub struct MobiusRow {
    pub k: usize,
    pub a: f64,
    pub energy: f64,
    pub sup_dist: f64,
    pub strong_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MobiusReport {
    pub mesh_edge: f64,
    pub vertices: usize,
    pub rows: Vec<MobiusRow>,
    /// Largest relative deviation of the energies from 2 pi.
    pub energy_rel_err: f64,
    pub strong_gap_rel_err: f64,
    pub sup_dist_err: f64,
    pub sup_dist_nonincreasing: bool,
}

impl MobiusReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,energy,sup_dist,strong_gap\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.k, io::fmt(r.energy), io::fmt(r.sup_dist), io::fmt(r.strong_gap));
        }
        s
    }
}

pub fn mobius_collapse_demo(count: usize, mesh_edge: f64) -> Result<MobiusReport> {
    if count < 3 {
        return Err(Error::Config("the Möbius demo needs at least 3 maps".into()));
    }
    let mesh = Arc::new(mesh_circular_domain(&CircularDomain::disk(Circle::unit()), mesh_edge)?);
    let one = DiscreteMap::from_fn(mesh.clone(), 2.0, CircularDomain::disk(Circle::unit()), |_| Pt::new(1.0, 0.0))?;
    let mut rows = Vec::with_capacity(count);
    for k in 1..=count {
        let h = mobius_sequence(k, mesh.clone())?;
        rows.push(MobiusRow {
            k,
            a: (k as f64 - 1.0) / k as f64,
            energy: total_energy(&h),
            sup_dist: sup_distance(&h, &one)?,
            strong_gap: total_energy(&h.difference(&one)?),
        });
    }
    let rel = |x: f64| (x - TAU).abs() / TAU;
    Ok(MobiusReport {
        mesh_edge,
        vertices: mesh.vertices.len(),
        energy_rel_err: rows.iter().map(|r| rel(r.energy)).fold(0.0, f64::max),
        strong_gap_rel_err: rows.iter().map(|r| rel(r.strong_gap)).fold(0.0, f64::max),
        sup_dist_err: rows.iter().map(|r| (r.sup_dist - 2.0).abs()).fold(0.0, f64::max),
        sup_dist_nonincreasing: rows.windows(2).all(|w| w[1].sup_dist <= w[0].sup_dist),
        rows,
    })
}

// ---------- puncture normalization ----------

#[derive(Clone, Debug, Serialize)]
pub struct PunctureMapReport {
    pub energy: f64,
    /// Fitted constant: max over samples of `dist^2(h(z), S) log(e + 2/dist(z, S)) / E`.
    pub fitted_c: f64,
    pub samples: usize,
    /// Extension samples where the fitted bound predicts `|h(1/conj z)| >= 1/2`.
    pub predicted: usize,
    /// Of those, samples where it fails.
    pub violations: usize,
    pub min_extension_modulus: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PunctureReport {
    pub maps: Vec<PunctureMapReport>,
    pub max_fitted_c: f64,
    pub extension_radius: f64,
}

/// `conj(h(1/conj z))^{-1}` for `|z| >= 1`.
pub fn inversion_extension(m: &DiscreteMap, z: Pt) -> Option<Pt> {
    if z.norm() < 1.0 {
        return None;
    }
    let zeta = 1.0 / z.conj();
    let w = m.eval(zeta).or_else(|| m.eval(zeta * (1.0 - 1e-12)))?;
    if w.norm() == 0.0 {
        return None;
    }
    Some(1.0 / w.conj())
}

/// Fits the constant of the distance-to-boundary estimate for maps of the
/// unit disk fixing 0, and checks the inversion extension on `1 <= |z| <= r`.
pub fn puncture_normalization_check(maps: &[DiscreteMap], r: f64) -> Result<PunctureReport> {
    if !(r > 1.0) {
        return Err(Error::Config("extension radius must exceed 1".into()));
    }
    let mut out = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let h0 = m.eval(Pt::new(0.0, 0.0)).ok_or_else(|| Error::Precondition("map is not defined at 0".into()))?;
        if h0.norm() > 1e-9 {
            return Err(Error::Precondition(format!("map {i} does not fix 0 (h(0) = {h0})")));
        }
        for v in m.mesh.boundary_vertices() {
            if (m.values[v].norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!("map {i} does not keep the unit circle")));
            }
        }
        let all: Vec<usize> = (0..m.mesh.triangles.len()).collect();
        let energy = field_energy(&m.mesh, &all, &m.u(), 2.0) + field_energy(&m.mesh, &all, &m.v(), 2.0);
        if !(energy > 0.0) {
            return Err(Error::Precondition(format!("map {i} has zero energy")));
        }
        let mut c: f64 = 0.0;
        let mut samples = 0;
        for v in m.mesh.interior_vertices() {
            let dz = 1.0 - m.mesh.vertices[v].norm();
            if dz <= 0.0 {
                continue;
            }
            let dw = (1.0 - m.values[v].norm()).max(0.0);
            c = c.max(dw * dw * (std::f64::consts::E + 2.0 / dz).ln() / energy);
            samples += 1;
        }
        let (mut predicted, mut violations) = (0, 0);
        let mut min_mod = f64::INFINITY;
        // radii cluster at 1, where the bound can force |h| >= 1/2
        for j in 0..=8 {
            let rad = 1.0 + (r - 1.0) * 0.25f64.powi(j);
            for a in 0..64 {
                let z = Pt::from_polar(rad, TAU * a as f64 / 64.0);
                let zeta = 1.0 / z.conj();
                let Some(ext) = inversion_extension(m, z) else { continue };
                min_mod = min_mod.min(ext.norm());
                let d = 1.0 - zeta.norm();
                let bound = (c * energy / (std::f64::consts::E + 2.0 / d).ln()).sqrt();
                if bound <= 0.5 {
                    predicted += 1;
                    if 1.0 / ext.norm() < 0.5 {
                        violations += 1;
                    }
                }
            }
        }
        out.push(PunctureMapReport { energy, fitted_c: c, samples, predicted, violations, min_extension_modulus: min_mod });
    }
    Ok(PunctureReport { max_fitted_c: out.iter().map(|m| m.fitted_c).fold(0.0, f64::max), maps: out, extension_radius: r })
}

// ---------- output helpers ----------

/// Image mesh (and optionally some squares) as an SVG drawing.
pub fn svg_of_map(m: &DiscreteMap, squares: &[Square]) -> String {
    let c = m.target.outer.center;
    let r = m.target.outer.radius * 1.05;
    let size = 800.0;
    let k = size / (2.0 * r);
    let tx = |z: Pt| ((z.re - c.re + r) * k, (c.im + r - z.im) * k);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">"#);
    for (t, tri) in m.mesh.triangles.iter().enumerate() {
        let pts: Vec<String> = tri
            .iter()
            .map(|&v| {
                let (x, y) = tx(m.values[v]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let fill = if m.jacobian(t) > 0.0 { "none" } else { "#d33" };
        let _ = writeln!(s, r##"<polygon points="{}" fill="{fill}" stroke="#333" stroke-width="0.3"/>"##, pts.join(" "));
    }
    for q in squares {
        let (x, y) = tx(q.corner + Pt::new(0.0, q.side));
        let w = q.side * k;
        let _ = writeln!(s, r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{w:.2}" fill="none" stroke="#26c" stroke-width="0.8"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Out { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(p, body)?;
        Ok(())
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        let mut f = fs::File::create(p)?;
        for r in rows {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    fn map(&mut self, name: &str, m: &DiscreteMap) -> Result<()> {
        let p = self.path(name);
        io::write_map(m, &p)?;
        self.files.push(io::sidecar_path(Path::new(name)).to_string_lossy().into_owned());
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema: u32,
    pub scenario: String,
    pub metrics: Value,
    pub files: Vec<String>,
    /// SHA-256 of every artifact except the summary itself.
    pub sha256: BTreeMap<String, String>,
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn load_or_mesh(cfg: &RunConfig, dom: &CircularDomain) -> Result<Arc<TriMesh>> {
    Ok(Arc::new(match &cfg.mesh_file {
        Some(p) => io::read_mesh(p)?,
        None => mesh_circular_domain(dom, cfg.mesh_edge)?,
    }))
}

/// Loads the configured map file, or builds the scenario's default map.
fn input_map<F: FnOnce(Arc<TriMesh>) -> Result<DiscreteMap>>(
    cfg: &RunConfig,
    dom: &CircularDomain,
    default: F,
) -> Result<DiscreteMap> {
    let mesh = load_or_mesh(cfg, dom)?;
    match &cfg.map_file {
        Some(p) => io::read_map(mesh, p),
        None => default(mesh),
    }
}

/// Resolves the output directory: the environment override wins.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| cfg.out_dir.clone())
}

/// Runs one scenario and writes its artifacts plus `summary.json`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut out = Out::new(output_dir(cfg))?;
    let metrics = match cfg.scenario.as_str() {
        "mesh" => run_mesh(cfg, &mut out)?,
        "solve" => run_solve(cfg, &mut out)?,
        "replace" => run_replace(cfg, &mut out)?,
        "sweep" => run_sweep(cfg, &mut out)?,
        "approximate" => run_approximate(cfg, &mut out)?,
        "descent" => run_descent(cfg, &mut out)?,
        "mobius" => run_mobius(cfg, &mut out)?,
        "puncture" => run_puncture(cfg, &mut out)?,
        _ => unreachable!("validated"),
    };
    let mut sha256 = BTreeMap::new();
    for f in &out.files {
        sha256.insert(f.clone(), file_digest(&out.dir.join(f))?);
    }
    out.files.push("summary.json".into());
    let summary = RunSummary { schema: SCHEMA, scenario: cfg.scenario.clone(), metrics, files: out.files.clone(), sha256 };
    fs::write(out.dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn run_mesh(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = cfg.domain.clone().unwrap_or_else(|| CircularDomain::disk(Circle::unit()));
    let mesh = mesh_circular_domain(&dom, cfg.mesh_edge)?;
    let p = out.path("mesh.json");
    io::write_mesh(&mesh, &p)?;
    let area = mesh.total_area();
    Ok(json!({
        "vertices": mesh.vertices.len(),
        "triangles": mesh.triangles.len(),
        "min_angle_deg": mesh.min_angle_deg(),
        "area": area,
        "area_rel_err": (area - dom.area()).abs() / dom.area(),
    }))
}

fn run_solve(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = standard_annulus();
    let mesh = load_or_mesh(cfg, &dom)?;
    let u0: Vec<f64> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(v, z)| if mesh.is_boundary_vertex(v) { if z.norm() > 1.5 { 1.0 } else { 0.0 } } else { 0.5 })
        .collect();
    let opts = SolveOptions { p: cfg.p, ..cfg.solve.clone() };
    let res = solve_scalar(&mesh, &SolveDomain::whole(&mesh), &u0, &opts)?;
    if !res.converged {
        return Err(Error::Numerical(format!("solve did not converge (residual {:.3e})", res.residual)));
    }
    let err = mesh
        .vertices
        .iter()
        .zip(&res.values)
        .map(|(z, u)| (u - radial_exact(z.norm(), cfg.p)).abs())
        .fold(0.0, f64::max);
    let bel = beltrami_ratio(&mesh, &res.values, cfg.p, 0.1);
    let vals = res.values.iter().map(|&u| Pt::new(u, 0.0)).collect();
    let m = DiscreteMap::new(mesh.clone(), vals, cfg.p, dom)?;
    out.map("solution.csv", &m)?;
    out.jsonl("solve.jsonl", std::slice::from_ref(&res))?;
    Ok(json!({ "p": cfg.p, "vertices": mesh.vertices.len(), "linf_error": err, "solve": res, "beltrami": bel }))
}

fn run_replace(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = cfg.domain.clone().unwrap_or_else(|| CircularDomain::disk(Circle::unit()));
    let m = input_map(cfg, &dom, |mesh| perturbed_identity(mesh, &dom, cfg.p, 0.1, cfg.seed))?;
    let rho = cfg.rho.first().copied().unwrap_or(0.4);
    let side = rho / std::f64::consts::SQRT_2;
    let c = m.target.outer.center;
    let q = Square::new(c - Pt::new(0.5 * side, 0.5 * side), side, crate::geometry::Family::A);
    let clip = crate::geometry::convex_clip(&q, &m.target)?;
    let cells = extract_cell(&m, &clip);
    let Some(cell) = cells.iter().filter(|c| c.is_disk()).max_by_key(|c| c.triangles.len()) else {
        return Err(Error::Numerical("no disk-like cell under the central square".into()));
    };
    let opts = ReplaceOptions { solve: cfg.solve.clone(), ..Default::default() };
    let (res, outcome) = replace_on_cell(&m, cell, &opts)?;
    out.map("replaced.csv", &res)?;
    Ok(json!({
        "outcome": outcome,
        "clip_kind": clip.kind,
        "energy_before": total_energy(&m),
        "energy_after": total_energy(&res),
        "sup_distance": sup_distance(&m, &res)?,
    }))
}

fn run_sweep(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = cfg.domain.clone().unwrap_or_else(|| CircularDomain::disk(Circle::unit()));
    let m = input_map(cfg, &dom, |mesh| perturbed_identity(mesh, &dom, cfg.p, 0.1, cfg.seed))?;
    let (rhos, opts) = match &cfg.chain {
        Some(c) => (c.rho.clone(), c.replace.clone()),
        None => (cfg.rho.clone(), ReplaceOptions { solve: cfg.solve.clone(), ..Default::default() }),
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, &rho) in rhos.iter().enumerate() {
        let fams = families_for_domain(&m.target, rho, Pt::new(0.0, 0.0))?;
        let (res, rep) = triple_sweep(&m, &fams, &opts)?;
        for s in &rep.sweeps {
            lines.push(json!({ "rho": rho, "sweep": s }));
        }
        let max_disp = m.values.iter().zip(&res.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let per_family_ok = rep.sweeps.iter().all(|s| s.sup_distance <= rho);
        rows.push(json!({
            "rho": rho,
            "max_family_displacement": rep.sweeps.iter().map(|s| s.sup_distance).fold(0.0, f64::max),
            "family_displacement_within_rho": per_family_ok,
            "total_displacement": max_disp,
            "energy_before": rep.energy_before,
            "energy_after": rep.energy_after,
            "royden_distance": rep.royden_distance,
            "boundary_unchanged": rep.boundary_unchanged,
            "omega_min_jacobian": rep.omega_min_jacobian,
        }));
        out.map(&format!("sweep_{i}.csv"), &res)?;
        if cfg.svg {
            out.text(&format!("sweep_{i}.svg"), &svg_of_map(&res, fams.family(crate::geometry::Family::A)))?;
        }
    }
    out.jsonl("sweeps.jsonl", &lines)?;
    Ok(json!({ "input_energy": total_energy(&m), "runs": rows }))
}

fn run_approximate(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = cfg.domain.clone().unwrap_or_else(standard_annulus);
    let m = input_map(cfg, &dom, |mesh| pinched_annulus_map(mesh, cfg.p, Pinch::default()))?;
    let chain = cfg.chain.clone().unwrap_or_else(|| ChainConfig {
        p: m.p,
        order: (0..m.target.connectivity()).collect(),
        rho: vec![0.5, 0.25, 0.125, 0.0625],
        replace: ReplaceOptions { solve: cfg.solve.clone(), ..Default::default() },
        ..Default::default()
    });
    let results = approximate_by_diffeomorphism(&m, &cfg.eps, &chain)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, (h, rep)) in results.iter().enumerate() {
        out.map(&format!("approx_{i}.csv"), h)?;
        if cfg.svg {
            out.text(&format!("approx_{i}.svg"), &svg_of_map(h, &[]))?;
        }
        rows.push(json!({
            "eps": rep.eps,
            "royden_distance": rep.royden_distance,
            "bound": rep.bound,
            "within_bound": rep.within_bound,
            "boundary_identical": rep.boundary_identical,
            "omega_covers": rep.omega_covers,
            "min_jacobian": rep.injectivity.min_jacobian,
            "injective": rep.injectivity.injective,
            "strong_gap": total_energy(&h.difference(&m)?),
        }));
        reports.push(rep.clone());
    }
    out.jsonl("chain.jsonl", &reports)?;
    let inj = check_injectivity(&m);
    Ok(json!({ "input_min_jacobian": inj.min_jacobian, "input_nonpositive": inj.nonpositive, "schedule": rows }))
}

fn run_descent(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = cfg.domain.clone().unwrap_or_else(standard_annulus);
    let m = input_map(cfg, &dom, |mesh| noisy_annulus_map(mesh, cfg.p))?;
    let rho = cfg.rho.first().copied().unwrap_or(0.4);
    let opts = ReplaceOptions { solve: cfg.solve.clone(), ..Default::default() };
    let (res, rep) = energy_descent(&m, rho, &opts, cfg.stop_tol, cfg.max_rounds)?;
    let id = DiscreteMap::identity(m.mesh.clone(), m.p, m.target.clone())?;
    let e_id = total_energy(&id);
    out.map("descent.csv", &res)?;
    let mut csv = String::from("round,energy\n");
    for (i, e) in rep.energies.iter().enumerate() {
        let _ = writeln!(csv, "{i},{}", io::fmt(*e));
    }
    out.text("energy.csv", &csv)?;
    let last = *rep.energies.last().unwrap();
    Ok(json!({ "report": rep, "identity_energy": e_id, "final_rel_gap": (last - e_id) / e_id }))
}

fn run_mobius(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let rep = mobius_collapse_demo(cfg.k, cfg.mesh_edge)?;
    out.text("mobius.csv", &rep.to_csv())?;
    Ok(serde_json::to_value(&rep)?)
}

fn run_puncture(cfg: &RunConfig, out: &mut Out) -> Result<Value> {
    let dom = CircularDomain::disk(Circle::unit());
    let mesh = load_or_mesh(cfg, &dom)?;
    let rot = Pt::from_polar(1.0, 0.7);
    let maps = vec![
        DiscreteMap::identity(mesh.clone(), 2.0, dom.clone())?,
        DiscreteMap::from_fn(mesh.clone(), 2.0, dom.clone(), |z| z * rot)?,
        DiscreteMap::from_fn(mesh.clone(), 2.0, dom.clone(), |z| if z.norm() == 0.0 { z } else { z * z.norm().sqrt() })?,
    ];
    let rep = puncture_normalization_check(&maps, 2.0)?;
    out.jsonl("puncture.jsonl", &rep.maps)?;
    Ok(serde_json::to_value(&rep)?)
}

use std::f64::consts::TAU;
use std::sync::Arc;

use pharm::cli::radial_exact;
use pharm::geometry::{Circle, CircularDomain, Pt};
use pharm::mesh::{check_injectivity, mesh_circular_domain, patches, CellPatch, DiscreteMap, TriMesh};
use pharm::psolve::*;
use pharm::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk_mesh(h: f64) -> TriMesh {
    mesh_circular_domain(&CircularDomain::disk(Circle::unit()), h).unwrap()
}

fn annulus_mesh(h: f64) -> TriMesh {
    mesh_circular_domain(&CircularDomain::annulus(Pt::new(0.0, 0.0), 1.0, 2.0).unwrap(), h).unwrap()
}

fn whole_patch(mesh: &TriMesh) -> CellPatch {
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let mut ps = patches(mesh, &all);
    assert_eq!(ps.len(), 1);
    ps.remove(0)
}

/// Boundary data from `g`, interior seeded with zeros.
fn dirichlet(mesh: &TriMesh, g: impl Fn(Pt) -> f64) -> Vec<f64> {
    (0..mesh.vertices.len()).map(|v| if mesh.is_boundary_vertex(v) { g(mesh.vertices[v]) } else { 0.0 }).collect()
}

#[test]
fn affine_data_is_reproduced() {
    let mesh = disk_mesh(0.1);
    let dom = SolveDomain::whole(&mesh);
    let f = |z: Pt| 0.7 * z.re - 1.3 * z.im + 0.2;
    for p in [2.0, 3.0, 4.0] {
        let r = solve_scalar(&mesh, &dom, &dirichlet(&mesh, f), &SolveOptions::with_p(p)).unwrap();
        assert!(r.converged, "p = {p}");
        assert!(r.residual <= r.tolerance);
        let err = mesh.vertices.iter().zip(&r.values).map(|(z, u)| (u - f(*z)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "p = {p}: error {err}");
    }
}

#[test]
fn annulus_radial_solutions() {
    let mesh = annulus_mesh(0.05);
    let dom = SolveDomain::whole(&mesh);
    let u0 = dirichlet(&mesh, |z| if z.norm() > 1.5 { 1.0 } else { 0.0 });
    for (p, tol) in [(2.0, 1e-2), (3.0, 2e-2)] {
        let r = solve_scalar(&mesh, &dom, &u0, &SolveOptions::with_p(p)).unwrap();
        assert!(r.converged);
        let err = mesh
            .vertices
            .iter()
            .zip(&r.values)
            .map(|(z, u)| (u - radial_exact(z.norm(), p)).abs())
            .fold(0.0, f64::max);
        assert!(err <= tol, "p = {p}: L-infinity error {err}");
        assert!(r.energy <= r.initial_energy);
    }
}

#[test]
fn solve_errors() {
    let mesh = annulus_mesh(0.2);
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let ring = &patches(&mesh, &all)[0];
    assert!(!ring.is_disk());
    assert!(matches!(SolveDomain::patch(ring), Err(Error::Precondition(_))));
    let bad = SolveOptions { p: 1.5, ..Default::default() };
    let dom = SolveDomain::whole(&mesh);
    assert!(matches!(solve_scalar(&mesh, &dom, &vec![0.0; mesh.vertices.len()], &bad), Err(Error::Config(_))));
    let short = vec![0.0; 3];
    assert!(solve_scalar(&mesh, &dom, &short, &SolveOptions::default()).is_err());
}

#[test]
fn hitting_max_iter_reports_best_iterate() {
    let mesh = annulus_mesh(0.1);
    let dom = SolveDomain::whole(&mesh);
    let u0 = dirichlet(&mesh, |z| if z.norm() > 1.5 { 1.0 } else { 0.0 });
    let opts = SolveOptions { p: 4.0, max_iter: 1, tol_grad: 1e-14, ..Default::default() };
    let r = solve_scalar(&mesh, &dom, &u0, &opts).unwrap();
    assert!(!r.converged);
    assert!(r.energy <= r.initial_energy);
}

fn circle_trace(mesh: &TriMesh, patch: &CellPatch, g: impl Fn(f64) -> Pt) -> Vec<Pt> {
    let mut vals = mesh.vertices.clone();
    for &b in &patch.boundary {
        vals[b] = g(mesh.vertices[b].arg());
    }
    for &i in &patch.interior {
        vals[i] = Pt::new(0.0, 0.0);
    }
    vals
}

#[test]
fn extension_examples() {
    let mesh = disk_mesh(0.05);
    let patch = whole_patch(&mesh);
    let disk = ConvexTarget::Disk(Circle::unit());

    let id = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.0, t));
    let ext = p_harmonic_extension(&mesh, &patch, &id, &disk, &SolveOptions::with_p(2.0)).unwrap();
    let m = DiscreteMap::new(Arc::new(disk_mesh(0.05)), ext.values.clone(), 2.0, CircularDomain::disk(Circle::unit())).unwrap();
    for t in 0..mesh.triangles.len() {
        assert!((m.jacobian(t) - 1.0).abs() < 1e-6);
    }

    let warp = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.0, t + 0.3 * t.sin()));
    let ext = p_harmonic_extension(&mesh, &patch, &warp, &disk, &SolveOptions::with_p(2.0)).unwrap();
    assert!(ext.min_jacobian > 0.0 && !ext.univalence_violated);
    assert!(ext.inside_target && ext.max_principle && ext.converged());
}

/// Point at arc-length fraction `s` along the square `[-1, 1]^2`, from `(1, 0)`.
fn square_perimeter(s: f64) -> Pt {
    let corners = [Pt::new(1.0, -1.0), Pt::new(1.0, 1.0), Pt::new(-1.0, 1.0), Pt::new(-1.0, -1.0)];
    let d = (s.rem_euclid(1.0) * 8.0 + 1.0) % 8.0;
    let k = (d / 2.0).floor() as usize % 4;
    let t = (d - 2.0 * k as f64) / 2.0;
    corners[k] + (corners[(k + 1) % 4] - corners[k]) * t
}

#[test]
fn square_target_extension_is_univalent() {
    let mesh = disk_mesh(0.05);
    let patch = whole_patch(&mesh);
    let target = ConvexTarget::Polygon(vec![Pt::new(-1.0, -1.0), Pt::new(1.0, -1.0), Pt::new(1.0, 1.0), Pt::new(-1.0, 1.0)]);
    let vals = circle_trace(&mesh, &patch, |t| square_perimeter(t.rem_euclid(TAU) / TAU));
    let ext = p_harmonic_extension(&mesh, &patch, &vals, &target, &SolveOptions::with_p(4.0)).unwrap();
    assert!(ext.converged());
    assert!(ext.min_jacobian > 0.0, "min J {}", ext.min_jacobian);
    assert!(ext.inside_target);
}

#[test]
fn non_monotone_trace_is_rejected() {
    let mesh = disk_mesh(0.1);
    let patch = whole_patch(&mesh);
    let disk = ConvexTarget::Disk(Circle::unit());
    let doubled = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.0, 2.0 * t));
    let r = p_harmonic_extension(&mesh, &patch, &doubled, &disk, &SolveOptions::with_p(2.0));
    assert!(matches!(r, Err(Error::NonMonotone(_))));
    let backwards = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.0, -t));
    assert!(matches!(
        p_harmonic_extension(&mesh, &patch, &backwards, &disk, &SolveOptions::with_p(2.0)),
        Err(Error::NonMonotone(_))
    ));
    let outside = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.5, t));
    assert!(p_harmonic_extension(&mesh, &patch, &outside, &disk, &SolveOptions::with_p(2.0)).is_err());
}

#[test]
fn complex_gradient_examples() {
    let mesh = disk_mesh(0.1);
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let x: Vec<f64> = mesh.vertices.iter().map(|z| z.re).collect();
    let y: Vec<f64> = mesh.vertices.iter().map(|z| z.im).collect();
    for f in complex_gradient(&mesh, &all, &x) {
        assert!((f - Pt::new(0.5, 0.0)).norm() < 1e-12);
    }
    for f in complex_gradient(&mesh, &all, &y) {
        assert!((f - Pt::new(0.0, -0.5)).norm() < 1e-12);
    }
    let ann = annulus_mesh(0.05);
    let tris: Vec<usize> =
        (0..ann.triangles.len()).filter(|&t| (1.1..1.9).contains(&ann.centroid(t).norm())).collect();
    let lnr: Vec<f64> = ann.vertices.iter().map(|z| z.norm().ln()).collect();
    let fs = complex_gradient(&ann, &tris, &lnr);
    let worst = tris
        .iter()
        .zip(&fs)
        .map(|(&t, f)| {
            let z = ann.centroid(t);
            let exact = z.conj() / (2.0 * z.norm_sqr());
            (f - exact).norm() / exact.norm()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 2e-2, "relative error {worst}");
}

#[test]
fn beltrami_examples() {
    let mesh = annulus_mesh(0.05);
    let dom = SolveDomain::whole(&mesh);
    let u0 = dirichlet(&mesh, |z| if z.norm() > 1.5 { 1.0 } else { 0.0 });
    let r2 = solve_scalar(&mesh, &dom, &u0, &SolveOptions::with_p(2.0)).unwrap();
    let b2 = beltrami_ratio(&mesh, &r2.values, 2.0, 0.1);
    assert!(b2.median <= 0.05, "median {}", b2.median);
    let r4 = solve_scalar(&mesh, &dom, &u0, &SolveOptions::with_p(4.0)).unwrap();
    let b4 = beltrami_ratio(&mesh, &r4.values, 4.0, 0.1);
    assert!((b4.bound - 0.6).abs() < 1e-15);
    assert!(b4.fraction_within >= 0.9, "fraction {}", b4.fraction_within);

    let disk = disk_mesh(0.1);
    let affine: Vec<f64> = disk.vertices.iter().map(|z| 2.0 * z.re + z.im).collect();
    let b = beltrami_ratio(&disk, &affine, 3.0, 0.1);
    assert!(b.ratios.iter().all(|&r| r == 0.0) || b.indeterminate == b.stars);
}

#[test]
fn maximum_principle_on_random_data() {
    let mesh = disk_mesh(0.1);
    let dom = SolveDomain::whole(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in [2.0, 3.0, 4.0] {
        for _ in 0..3 {
            let u0: Vec<f64> = (0..mesh.vertices.len())
                .map(|v| if mesh.is_boundary_vertex(v) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect();
            let r = solve_scalar(&mesh, &dom, &u0, &SolveOptions::with_p(p)).unwrap();
            let bvals: Vec<f64> = mesh.boundary_vertices().iter().map(|&v| u0[v]).collect();
            let lo = bvals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = bvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = if p == 2.0 { 0.0 } else { 1e-8 };
            for &v in &dom.free {
                assert!(r.values[v] >= lo - slack && r.values[v] <= hi + slack, "p = {p}");
            }
            assert!(r.energy <= discrete_energy(&mesh, &dom, &u0, p) * (1.0 + 1e-10));
        }
    }
}

#[test]
fn component_order_does_not_matter() {
    let mesh = disk_mesh(0.1);
    let dom = SolveDomain::whole(&mesh);
    let u0 = dirichlet(&mesh, |z| (3.0 * z.arg()).sin());
    let v0 = dirichlet(&mesh, |z| z.re * z.im);
    let opts = SolveOptions::with_p(3.0);
    let u_first = solve_scalar(&mesh, &dom, &u0, &opts).unwrap();
    let v_second = solve_scalar(&mesh, &dom, &v0, &opts).unwrap();
    let v_first = solve_scalar(&mesh, &dom, &v0, &opts).unwrap();
    let u_second = solve_scalar(&mesh, &dom, &u0, &opts).unwrap();
    assert_eq!(u_first.values, u_second.values);
    assert_eq!(v_first.values, v_second.values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_energy_convex_along_segments(seed in 0u64..10_000, p in 2.0f64..5.0) {
        let mesh = disk_mesh(0.2);
        let dom = SolveDomain::whole(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = mesh.vertices.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = mesh.vertices.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at = |t: f64| {
            let u: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            discrete_energy(&mesh, &dom, &u, p)
        };
        let es: Vec<f64> = (0..=10).map(|k| at(k as f64 / 10.0)).collect();
        for w in es.windows(3) {
            let scale = w[0].abs().max(w[1].abs()).max(w[2].abs());
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn prop_solve_beats_pl_competitor(seed in 0u64..10_000, p in prop::sample::select(vec![2.0, 3.0, 4.0])) {
        let mesh = disk_mesh(0.2);
        let dom = SolveDomain::whole(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: Vec<f64> = mesh.vertices.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = solve_scalar(&mesh, &dom, &u0, &SolveOptions::with_p(p)).unwrap();
        prop_assert!(r.energy <= discrete_energy(&mesh, &dom, &u0, p) * (1.0 + 1e-10));
    }
}

#[test]
fn solved_map_is_injective() {
    let mesh = Arc::new(disk_mesh(0.05));
    let patch = whole_patch(&mesh);
    let vals = circle_trace(&mesh, &patch, |t| Pt::from_polar(1.0, t + 0.2 * (2.0 * t).sin()));
    let ext = p_harmonic_extension(&mesh, &patch, &vals, &ConvexTarget::Disk(Circle::unit()), &SolveOptions::with_p(3.0)).unwrap();
    let m = DiscreteMap::new(mesh, ext.values, 3.0, CircularDomain::disk(Circle::unit())).unwrap();
    assert!(check_injectivity(&m).injective);
}

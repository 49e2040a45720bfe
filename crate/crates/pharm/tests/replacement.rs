use std::f64::consts::TAU;
use std::sync::Arc;

use pharm::cli::{noisy_annulus_map, perturbed_identity, standard_annulus};
use pharm::geometry::{convex_clip, Circle, CircularDomain, Family, Pt, Square};
use pharm::mesh::{
    check_injectivity, extract_cell, mesh_circular_domain, royden_distance, sup_distance, total_energy, CellPatch,
    DiscreteMap, TriMesh,
};
use pharm::replacement::*;
use pharm::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_disk() -> CircularDomain {
    CircularDomain::disk(Circle::unit())
}

fn disk_mesh(h: f64) -> Arc<TriMesh> {
    Arc::new(mesh_circular_domain(&unit_disk(), h).unwrap())
}

fn central_cell(m: &DiscreteMap, corner: Pt, side: f64) -> CellPatch {
    let clip = convex_clip(&Square::new(corner, side, Family::A), &m.target).unwrap();
    let mut cells: Vec<CellPatch> = extract_cell(m, &clip).into_iter().filter(|c| c.is_disk()).collect();
    assert_eq!(cells.len(), 1);
    cells.remove(0)
}

fn boundary_equal(a: &DiscreteMap, b: &DiscreteMap) -> bool {
    a.mesh.boundary_vertices().iter().all(|&v| a.values[v] == b.values[v])
}

#[test]
fn affine_map_is_left_alone() {
    let mesh = disk_mesh(0.05);
    for p in [2.0, 3.0, 4.0] {
        let m = DiscreteMap::from_fn(mesh.clone(), p, unit_disk(), |z| Pt::new(0.8 * z.re + 0.1 * z.im, 0.9 * z.im) * 0.9)
            .unwrap();
        let cell = central_cell(&m, Pt::new(-0.15, -0.1), 0.25);
        let (out, o) = replace_on_cell(&m, &cell, &ReplaceOptions::default()).unwrap();
        assert!(o.replaced);
        assert_eq!(out.values, m.values, "p = {p}");
    }
}

#[test]
fn identity_is_harmonic() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh, 2.0, unit_disk()).unwrap();
    let cell = central_cell(&id, Pt::new(0.1, -0.3), 0.3);
    let (out, o) = replace_on_cell(&id, &cell, &ReplaceOptions::default()).unwrap();
    assert!(o.replaced);
    assert!(sup_distance(&id, &out).unwrap() < 1e-12);
}

/// `sum_T area * |sum_k d_k grad phi_k|^2`, written out from the stiffness entries.
fn quadratic_form(mesh: &TriMesh, d: &[f64]) -> f64 {
    let geom = mesh.geometry();
    let mut q = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let (gi, gj) = (geom[t].grad[i], geom[t].grad[j]);
                q += geom[t].area * (gi.re * gj.re + gi.im * gj.im) * d[tri[i]] * d[tri[j]];
            }
        }
    }
    q
}

#[test]
fn zigzag_decrease_matches_quadratic_form() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh.clone(), 2.0, unit_disk()).unwrap();
    let cell = central_cell(&id, Pt::new(-0.2, -0.2), 0.4);
    let mut du = vec![0.0; mesh.vertices.len()];
    let mut dv = vec![0.0; mesh.vertices.len()];
    for (k, &v) in cell.interior.iter().enumerate() {
        let z = mesh.vertices[v];
        // alternating sign, small enough to stay inside the square
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        du[v] = 0.004 * s * (1.0 + z.re);
        dv[v] = -0.003 * s;
    }
    let m = id.with_values(mesh.vertices.iter().enumerate().map(|(v, z)| z + Pt::new(du[v], dv[v])).collect());
    let (out, o) = replace_on_cell(&m, &cell, &ReplaceOptions::default()).unwrap();
    assert!(o.replaced);
    let decrease = total_energy(&m) - total_energy(&out);
    assert!(decrease > 0.0);
    let q = quadratic_form(&mesh, &du) + quadratic_form(&mesh, &dv);
    assert!((decrease - q).abs() <= 1e-8 * q, "decrease {decrease} vs quadratic form {q}");
    assert!(sup_distance(&out, &id).unwrap() < 1e-12);
}

#[test]
fn outside_cell_is_bit_identical() {
    let mesh = disk_mesh(0.05);
    let m = perturbed_identity(mesh.clone(), &unit_disk(), 3.0, 0.3, 7).unwrap();
    let cell = central_cell(&m, Pt::new(-0.2, 0.0), 0.3);
    let (out, o) = replace_on_cell(&m, &cell, &ReplaceOptions::default()).unwrap();
    assert!(o.replaced);
    assert!(o.energy_after <= o.energy_before);
    // change of variables: the Jacobian integral is the area enclosed by the traced boundary
    let trace: Vec<Pt> = cell.boundary.iter().map(|&v| m.values[v]).collect();
    let enclosed: f64 = (0..trace.len())
        .map(|k| {
            let (a, b) = (trace[k], trace[(k + 1) % trace.len()]);
            0.5 * (a.re * b.im - a.im * b.re)
        })
        .sum();
    assert!((o.jacobian_integral - enclosed).abs() <= 1e-12);
    assert!(o.jacobian_integral > 0.0 && o.jacobian_integral <= o.clip_area);
    let interior: std::collections::HashSet<usize> = cell.interior.iter().copied().collect();
    for v in 0..mesh.vertices.len() {
        if !interior.contains(&v) {
            assert_eq!(out.values[v], m.values[v]);
        }
    }
    assert!(total_energy(&out) <= total_energy(&m) * (1.0 + 1e-10));
}

#[test]
fn cell_image_fills_the_clip_under_refinement() {
    // cells keep triangles whose images lie in the clip, so the image misses a
    // strip of width about one edge along the clip boundary
    let mut gaps = Vec::new();
    for h in [0.05, 0.025, 0.0125] {
        let m = perturbed_identity(disk_mesh(h), &unit_disk(), 2.0, 0.3, 7).unwrap();
        let cell = central_cell(&m, Pt::new(-0.2, 0.0), 0.3);
        let (_, o) = replace_on_cell(&m, &cell, &ReplaceOptions::default()).unwrap();
        assert!(o.replaced);
        gaps.push((o.clip_area - o.jacobian_integral) / o.clip_area);
    }
    assert!(gaps.windows(2).all(|w| w[1] < 0.75 * w[0]), "{gaps:?}");
}

#[test]
fn inadmissible_cells_are_skipped() {
    let ann = standard_annulus();
    let mesh = Arc::new(mesh_circular_domain(&ann, 0.1).unwrap());
    let m = DiscreteMap::identity(mesh.clone(), 2.0, ann.clone()).unwrap();
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    let mut ring = pharm::mesh::patches(&mesh, &all).remove(0);
    ring.clip = Some(convex_clip(&Square::new(Pt::new(1.2, 1.2), 0.3, Family::A), &ann).unwrap());
    let (out, o) = replace_on_cell(&m, &ring, &ReplaceOptions::default()).unwrap();
    assert_eq!(o.skip, Some(SkipReason::NotDisk));
    assert_eq!(out.values, m.values);

    // a cell whose trace winds backwards
    let disk = disk_mesh(0.05);
    let flipped = DiscreteMap::from_fn(disk, 2.0, unit_disk(), |z| z.conj()).unwrap();
    let cell = central_cell(&flipped, Pt::new(-0.15, -0.15), 0.3);
    let (_, o) = replace_on_cell(&flipped, &cell, &ReplaceOptions::default()).unwrap();
    assert_eq!(o.skip, Some(SkipReason::NonMonotone));
}

fn families(m: &DiscreteMap, rho: f64) -> pharm::geometry::SquareFamilies {
    families_for_domain(&m.target, rho, Pt::new(0.0, 0.0)).unwrap()
}

#[test]
fn sweep_examples() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh.clone(), 2.0, unit_disk()).unwrap();
    let far = [Square::new(Pt::new(3.0, 3.0), 0.2, Family::A), Square::new(Pt::new(-4.0, 0.0), 0.2, Family::A)];
    let (out, rep) = sweep_family(&id, &far, &ReplaceOptions::default()).unwrap();
    assert_eq!(out.values, id.values);
    assert_eq!(rep.cells, 0);

    let fams = families(&id, 0.2);
    for f in Family::ALL {
        let (out, rep) = sweep_family(&id, fams.family(f), &ReplaceOptions::default()).unwrap();
        // C squares can be too small to hold interior vertices
        assert!(rep.replaced > 0 || f == Family::C);
        assert!(sup_distance(&id, &out).unwrap() < 1e-12, "{f:?}");
    }

    let m = perturbed_identity(mesh, &unit_disk(), 2.0, 0.3, 3).unwrap();
    let (once, rep) = sweep_family(&m, fams.family(Family::A), &ReplaceOptions::default()).unwrap();
    assert!(rep.sup_distance <= 0.2);
    assert!(rep.energy_after < rep.energy_before);
    assert!(boundary_equal(&m, &once));
    let (twice, rep2) = sweep_family(&once, fams.family(Family::A), &ReplaceOptions::default()).unwrap();
    assert!(rep2.energy_before - rep2.energy_after <= 1e-3 * (rep.energy_before - rep.energy_after));
    assert!(sup_distance(&once, &twice).unwrap() <= 0.1 * rep.sup_distance);
}

#[test]
fn sweep_displacement_bounded_by_rho() {
    let mesh = disk_mesh(0.05);
    let m = perturbed_identity(mesh, &unit_disk(), 3.0, 0.5, 11).unwrap();
    for rho in [0.4, 0.2, 0.1] {
        let fams = families(&m, rho);
        for f in Family::ALL {
            let (out, rep) = sweep_family(&m, fams.family(f), &ReplaceOptions::default()).unwrap();
            for (a, b) in m.values.iter().zip(&out.values) {
                assert!((a - b).norm() <= rho);
            }
            assert!(rep.energy_after <= rep.energy_before * (1.0 + 1e-10));
            assert!(boundary_equal(&m, &out));
        }
    }
}

#[test]
fn cell_order_is_irrelevant() {
    let mesh = disk_mesh(0.05);
    let m = perturbed_identity(mesh, &unit_disk(), 3.0, 0.4, 5).unwrap();
    let fams = families(&m, 0.2);
    let squares = fams.family(Family::B);
    let n = family_cells(&m, squares).unwrap().len();
    let (par, _) = sweep_family(&m, squares, &ReplaceOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let (seq, _) = sweep_family_ordered(&m, squares, &ReplaceOptions::default(), &order).unwrap();
        assert_eq!(seq.values, par.values);
    }
    assert!(matches!(
        sweep_family_ordered(&m, squares, &ReplaceOptions::default(), &[0, 0]),
        Err(Error::Config(_))
    ));
}

#[test]
fn triple_sweep_identity_and_budget() {
    let mesh = disk_mesh(0.05);
    assert!(mesh.vertices.len() >= 1000);
    let id = DiscreteMap::identity(mesh.clone(), 2.0, unit_disk()).unwrap();
    let (out, rep) = triple_sweep(&id, &families(&id, 0.3), &ReplaceOptions::default()).unwrap();
    assert!(rep.royden_distance < 1e-9);
    assert!(sup_distance(&out, &id).unwrap() < 1e-12);

    let m = perturbed_identity(mesh, &unit_disk(), 2.0, 0.5, 2).unwrap();
    let opts = ReplaceOptions { budget: Some(0.1), ..Default::default() };
    let (out, rep) = calibrated_triple_sweep(&m, 0.4, Pt::new(0.0, 0.0), &opts, 4).unwrap();
    assert!(!rep.budget_exceeded);
    let d = royden_distance(&m, &out).unwrap();
    assert!(d <= 0.1, "Royden distance {d}");
    assert!(rep.boundary_unchanged && boundary_equal(&m, &out));
    assert!(rep.energy_after <= rep.energy_before * (1.0 + 1e-10));
}

#[test]
fn triple_sweep_unfolds_an_interior_fold() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh.clone(), 2.0, unit_disk()).unwrap();
    // push one vertex across its neighbours inside the A square [0, s]^2
    let target = Pt::new(0.14, 0.14);
    let v = (0..mesh.vertices.len())
        .filter(|&v| !mesh.is_boundary_vertex(v))
        .min_by(|&a, &b| (mesh.vertices[a] - target).norm().total_cmp(&(mesh.vertices[b] - target).norm()))
        .unwrap();
    let mut vals = id.values.clone();
    vals[v] += Pt::new(0.06, 0.0);
    let folded = id.with_values(vals);
    let before = check_injectivity(&folded);
    assert!(before.nonpositive >= 1 && before.nonpositive <= 4, "{} folds", before.nonpositive);
    let fams = families(&folded, 0.4);
    assert!(fams.family(Family::A).iter().any(|q| q.contains_open(target)));
    let (out, rep) = triple_sweep(&folded, &fams, &ReplaceOptions::default()).unwrap();
    assert!(rep.omega_min_jacobian > 0.0);
    assert!(check_injectivity(&out).injective);
}

#[test]
fn chain_on_a_disk_with_p3() {
    let mesh = disk_mesh(0.05);
    let m = perturbed_identity(mesh, &unit_disk(), 3.0, 0.5, 4).unwrap();
    let cfg = ChainConfig { eps: 0.2, p: 3.0, order: vec![0], ..Default::default() };
    let (out, rep) = boundary_chain(&m, &cfg).unwrap();
    assert_eq!(rep.links.len(), 1);
    assert!(rep.injectivity.injective);
    assert!(rep.boundary_identical && boundary_equal(&m, &out));
    assert!(rep.omega_covers && rep.uncovered == 0);
    assert!(rep.royden_distance <= cfg.eps);
}

#[test]
fn chain_config_errors() {
    let mesh = disk_mesh(0.1);
    let m = DiscreteMap::identity(mesh, 2.0, unit_disk()).unwrap();
    for bad in [
        ChainConfig { eps: 0.0, ..Default::default() },
        ChainConfig { rho: vec![0.1, 0.2], ..Default::default() },
        ChainConfig { p: 3.0, ..Default::default() },
        ChainConfig { order: vec![0, 0], ..Default::default() },
    ] {
        assert!(matches!(boundary_chain(&m, &bad), Err(Error::Config(_))), "{bad:?}");
    }
    assert!(approximate_by_diffeomorphism(&m, &[0.1, 0.2], &ChainConfig::default()).is_err());

    let ann = CircularDomain { centers_outside: false, ..standard_annulus() };
    let amesh = Arc::new(mesh_circular_domain(&ann, 0.1).unwrap());
    let am = DiscreteMap::identity(amesh, 2.0, ann).unwrap();
    let cfg = ChainConfig { order: vec![0, 1], ..Default::default() };
    assert!(matches!(boundary_chain(&am, &cfg), Err(Error::Precondition(_))));
}

#[test]
fn approximating_the_identity_returns_it() {
    let ann = standard_annulus();
    let mesh = Arc::new(mesh_circular_domain(&ann, 0.05).unwrap());
    let id = DiscreteMap::identity(mesh, 2.0, ann).unwrap();
    let cfg = ChainConfig { order: vec![0, 1], ..Default::default() };
    for (h, rep) in approximate_by_diffeomorphism(&id, &[0.4, 0.2], &cfg).unwrap() {
        assert!(sup_distance(&h, &id).unwrap() < 1e-9);
        assert!(rep.boundary_identical && rep.injectivity.injective && rep.omega_covers);
    }
}

#[test]
fn descent_examples() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh, 2.0, unit_disk()).unwrap();
    let (out, rep) = energy_descent(&id, 0.3, &ReplaceOptions::default(), 1e-9, 3).unwrap();
    assert!((total_energy(&out) - TAU).abs() / TAU < 1e-2);
    assert!(rep.energies.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-9));

    let ann = standard_annulus();
    let amesh = Arc::new(mesh_circular_domain(&ann, 0.05).unwrap());
    let noisy = noisy_annulus_map(amesh.clone(), 2.0).unwrap();
    let target = total_energy(&DiscreteMap::identity(amesh, 2.0, ann).unwrap());
    let (out, rep) = energy_descent(&noisy, 0.4, &ReplaceOptions::default(), 1e-6, 10).unwrap();
    assert!(rep.energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)));
    let last = total_energy(&out);
    assert!((last - target) / target <= 0.02, "gap {}", (last - target) / target);
    assert!(boundary_equal(&noisy, &out));

    let disk = disk_mesh(0.05);
    let m = perturbed_identity(disk, &unit_disk(), 2.0, 0.5, 6).unwrap();
    let stop = 1e-4;
    let (settled, rep) = energy_descent(&m, 0.3, &ReplaceOptions::default(), stop, 200).unwrap();
    assert!(rep.converged);
    let (again, _) = energy_descent(&settled, 0.3, &ReplaceOptions::default(), stop, 200).unwrap();
    assert!(total_energy(&settled) - total_energy(&again) < stop);
}

//! Mesh JSON, map CSV and the map's JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DiscreteMap, TriMesh};
use crate::error::{Error, Result};
use crate::geometry::{CircularDomain, Pt};

pub const SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MeshFile {
    schema: u32,
    #[serde(flatten)]
    mesh: TriMesh,
}

pub fn mesh_to_json(mesh: &TriMesh) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a> {
        schema: u32,
        #[serde(flatten)]
        mesh: &'a TriMesh,
    }
    Ok(serde_json::to_string(&Out { schema: SCHEMA, mesh })?)
}

pub fn mesh_from_json(s: &str) -> Result<TriMesh> {
    let f: MeshFile = serde_json::from_str(s)?;
    let m = f.mesh;
    TriMesh::new(m.vertices, m.triangles, m.boundary_loops)
}

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    fs::write(path, mesh_to_json(mesh)?)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    mesh_from_json(&fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: u32,
    pub p: f64,
    pub target_domain: CircularDomain,
    pub boundary_flags: Vec<bool>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `vertex_id,x,y,u,v` rows plus the sidecar next to it.
pub fn write_map(m: &DiscreteMap, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["vertex_id", "x", "y", "u", "v"])?;
    for (i, (z, h)) in m.mesh.vertices.iter().zip(&m.values).enumerate() {
        w.write_record([i.to_string(), fmt(z.re), fmt(z.im), fmt(h.re), fmt(h.im)])?;
    }
    w.flush()?;
    let side = Sidecar {
        schema: SCHEMA,
        p: m.p,
        target_domain: m.target.clone(),
        boundary_flags: (0..m.mesh.vertices.len()).map(|v| m.mesh.is_boundary_vertex(v)).collect(),
    };
    fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Round-trip exact formatting of a float.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a map written by `write_map` onto `mesh`; positions must agree.
pub fn read_map(mesh: Arc<TriMesh>, csv_path: &Path) -> Result<DiscreteMap> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let mut r = csv::Reader::from_path(csv_path)?;
    let mut values = vec![Pt::new(f64::NAN, f64::NAN); mesh.vertices.len()];
    for rec in r.records() {
        let rec = rec?;
        let get = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Config("short map row".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in map file: {e}")))
        };
        let id: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("bad vertex id".into()))?;
        if id >= values.len() {
            return Err(Error::MeshMismatch);
        }
        let z = Pt::new(get(1)?, get(2)?);
        if (z - mesh.vertices[id]).norm() > 1e-9 * (1.0 + z.norm()) {
            return Err(Error::MeshMismatch);
        }
        values[id] = Pt::new(get(3)?, get(4)?);
    }
    DiscreteMap::new(mesh, values, side.p, side.target_domain)
}

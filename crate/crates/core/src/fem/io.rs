//! Directory layout of a saved simulation.
//!
//! ```text
//! meta               key = value lines
//! rsaw.csv           t,rsaw
//! t_<days>.csv       x,y,u1,u2,N,M,c,rho
//! elements_<k>.csv   a,b,c      (connectivity of mesh epoch k)
//! rim_<k>.csv        node       (rim markers of mesh epoch k)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::biomodel::VariableParams;
use crate::geometry::{ShapeKind, WoundGeometry};

use super::{FemError, Record, SimResult};

fn csv_err(e: csv::Error) -> FemError {
    FemError::Parse(e.to_string())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(super) fn save(r: &SimResult, dir: &Path) -> Result<(), FemError> {
    fs::create_dir_all(dir)?;
    let mut epochs = Vec::with_capacity(r.records.len());
    let mut meshes: Vec<(&Arc<Vec<[usize; 3]>>, &Arc<Vec<usize>>)> = Vec::new();
    for rec in &r.records {
        let pos = meshes.iter().position(|(t, m)| Arc::ptr_eq(t, &rec.triangles) && Arc::ptr_eq(m, &rec.rim));
        let k = pos.unwrap_or_else(|| {
            meshes.push((&rec.triangles, &rec.rim));
            meshes.len() - 1
        });
        epochs.push(k);
    }

    let g = &r.geometry;
    let mut meta = String::new();
    meta.push_str(&format!("kind = {}\nx_cut = {}\ny_cut = {}\n", g.kind, g.x_cut, g.y_cut));
    if let Some(w) = g.weights {
        meta.push_str(&format!("weights = {}\n", join(&w)));
    }
    meta.push_str(&r.params.to_kv());
    meta.push_str(&format!(
        "kinetic = {}\nconfig = {}\nremesh_count = {}\nwall_seconds = {}\ntimes = {}\nmesh_epochs = {}\n",
        serde_json::to_string(&r.kinetic).map_err(|e| FemError::Parse(e.to_string()))?,
        serde_json::to_string(&r.config).map_err(|e| FemError::Parse(e.to_string()))?,
        r.remesh_count,
        r.wall_seconds,
        join(&r.records.iter().map(|x| x.t).collect::<Vec<_>>()),
        join(&epochs),
    ));
    fs::write(dir.join("meta"), meta)?;

    let mut w = csv::Writer::from_path(dir.join("rsaw.csv")).map_err(csv_err)?;
    w.write_record(["t", "rsaw"]).map_err(csv_err)?;
    for rec in &r.records {
        w.write_record([rec.t.to_string(), format!("{:?}", rec.rsaw)]).map_err(csv_err)?;
    }
    w.flush()?;

    for rec in &r.records {
        let mut w = csv::Writer::from_path(dir.join(format!("t_{}.csv", rec.t))).map_err(csv_err)?;
        w.write_record(["x", "y", "u1", "u2", "N", "M", "c", "rho"]).map_err(csv_err)?;
        for i in 0..rec.nodes.len() {
            let row = [
                rec.nodes[i][0],
                rec.nodes[i][1],
                rec.u[i][0],
                rec.u[i][1],
                rec.n[i],
                rec.m[i],
                rec.c[i],
                rec.rho[i],
            ];
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
    }
    for (k, (tri, rim)) in meshes.iter().enumerate() {
        let mut w = csv::Writer::from_path(dir.join(format!("elements_{k}.csv"))).map_err(csv_err)?;
        w.write_record(["a", "b", "c"]).map_err(csv_err)?;
        for t in tri.iter() {
            w.write_record(t.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(format!("rim_{k}.csv"))).map_err(csv_err)?;
        w.write_record(["node"]).map_err(csv_err)?;
        for i in rim.iter() {
            w.write_record([i.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn read_rows<T: std::str::FromStr>(path: &Path) -> Result<Vec<Vec<T>>, FemError> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<T>().map_err(|_| FemError::Parse(format!("{}: bad value '{s}'", path.display()))))
            .collect::<Result<Vec<T>, _>>()?;
        out.push(row);
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, FemError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|_| FemError::Parse(format!("bad list entry '{x}'")))).collect()
}

pub(super) fn load(dir: &Path) -> Result<SimResult, FemError> {
    let text = fs::read_to_string(dir.join("meta"))?;
    let mut kv = BTreeMap::new();
    let mut param_lines = String::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let (k, v) = (k.trim(), v.trim());
            if ["d_f", "chi_f", "d_c", "k_f", "a_c_i"].contains(&k) {
                param_lines.push_str(line);
                param_lines.push('\n');
            }
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| FemError::Parse(format!("meta lacks '{k}'")));
    let num = |k: &str| -> Result<f64, FemError> { get(k)?.parse().map_err(|_| FemError::Parse(format!("bad '{k}'"))) };
    let kind: ShapeKind = get("kind")?.parse().map_err(|e: crate::geometry::GeometryError| FemError::Parse(e.to_string()))?;
    let (x_cut, y_cut) = (num("x_cut")?, num("y_cut")?);
    let geometry = match kind {
        ShapeKind::Convex => {
            let w: Vec<f64> = parse_list(get("weights")?)?;
            if w.len() != 3 {
                return Err(FemError::Parse("weights need three entries".into()));
            }
            WoundGeometry::convex(x_cut, y_cut, [w[0], w[1], w[2]])
        }
        k => WoundGeometry::basic(k, x_cut, y_cut),
    }
    .map_err(|e| FemError::Parse(e.to_string()))?;
    let params = VariableParams::from_kv(&param_lines)?;
    let kinetic = serde_json::from_str(get("kinetic")?).map_err(|e| FemError::Parse(e.to_string()))?;
    let config = serde_json::from_str(get("config")?).map_err(|e| FemError::Parse(e.to_string()))?;
    let times: Vec<f64> = parse_list(get("times")?)?;
    let epochs: Vec<usize> = parse_list(get("mesh_epochs")?)?;
    if times.len() != epochs.len() {
        return Err(FemError::Parse("times and mesh_epochs differ in length".into()));
    }
    let mut meshes: BTreeMap<usize, (Arc<Vec<[usize; 3]>>, Arc<Vec<usize>>)> = BTreeMap::new();
    for &k in &epochs {
        if meshes.contains_key(&k) {
            continue;
        }
        let tri = read_rows::<usize>(&dir.join(format!("elements_{k}.csv")))?
            .into_iter()
            .map(|r| if r.len() == 3 { Ok([r[0], r[1], r[2]]) } else { Err(FemError::Parse("element row".into())) })
            .collect::<Result<Vec<_>, _>>()?;
        let rim = read_rows::<usize>(&dir.join(format!("rim_{k}.csv")))?.into_iter().flatten().collect();
        meshes.insert(k, (Arc::new(tri), Arc::new(rim)));
    }
    let rsaw = read_rows::<f64>(&dir.join("rsaw.csv"))?;
    let mut records = Vec::with_capacity(times.len());
    for (idx, (&t, &k)) in times.iter().zip(&epochs).enumerate() {
        let rows = read_rows::<f64>(&dir.join(format!("t_{t}.csv")))?;
        let mut rec = Record {
            t,
            nodes: Vec::with_capacity(rows.len()),
            u: Vec::with_capacity(rows.len()),
            n: Vec::with_capacity(rows.len()),
            m: Vec::with_capacity(rows.len()),
            c: Vec::with_capacity(rows.len()),
            rho: Vec::with_capacity(rows.len()),
            triangles: Arc::clone(&meshes[&k].0),
            rim: Arc::clone(&meshes[&k].1),
            rsaw: rsaw.get(idx).and_then(|r| r.get(1)).copied().ok_or_else(|| FemError::Parse("rsaw.csv too short".into()))?,
        };
        for r in rows {
            if r.len() != 8 {
                return Err(FemError::Parse(format!("t_{t}.csv: expected 8 columns")));
            }
            rec.nodes.push([r[0], r[1]]);
            rec.u.push([r[2], r[3]]);
            rec.n.push(r[4]);
            rec.m.push(r[5]);
            rec.c.push(r[6]);
            rec.rho.push(r[7]);
        }
        records.push(rec);
    }
    Ok(SimResult {
        geometry,
        params,
        kinetic,
        config,
        records,
        remesh_count: get("remesh_count")?.parse().map_err(|_| FemError::Parse("remesh_count".into()))?,
        wall_seconds: num("wall_seconds")?,
    })
}

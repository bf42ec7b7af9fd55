//! ASCII OBJ, PLY and XYZ readers and writers.
//!
//! Polygonal faces are fan-triangulated on read. Degenerate faces are dropped
//! at load time.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Point3, PointCloud, TriangleMesh};
use crate::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line_no)?;
                let y = parse_f64(toks.next(), line_no)?;
                let z = parse_f64(toks.next(), line_no)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    // v, v/vt, v//vn, v/vt/vn
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("invalid face index {tok:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(line_no, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(line_no, format!("face index {idx} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(line_no, "face with fewer than 3 vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?.without_degenerate_faces())
}

pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut w: W) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
    list_prop: Option<String>,
}

pub fn parse_ply(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (n, raw) in lines.by_ref() {
        let line_no = n + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(parse_err(line_no, format!("unsupported PLY format {other:?}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(line_no, "invalid element count"))?,
                props: Vec::new(),
                list_prop: None,
            }),
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element"))?;
                el.props.push(name.to_string());
                el.list_prop = Some(name.to_string());
            }
            ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element"))?;
                el.props.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(line_no, format!("unexpected header line {raw:?}"))),
        }
    }
    if !header_done {
        return Err(parse_err(0, "missing end_header"));
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    for el in &elements {
        for _ in 0..el.count {
            let (n, raw) = body
                .next()
                .ok_or_else(|| parse_err(0, format!("truncated {} element", el.name)))?;
            let line_no = n + 1;
            let toks: Vec<&str> = raw.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let pos = |name: &str| -> Result<f64> {
                        let k = el
                            .props
                            .iter()
                            .position(|p| p == name)
                            .ok_or_else(|| parse_err(line_no, format!("vertex has no {name}")))?;
                        parse_f64(toks.get(k).copied(), line_no)
                    };
                    vertices.push(Point3::new(pos("x")?, pos("y")?, pos("z")?));
                }
                "face" => {
                    // the index list is assumed to be the first property
                    let count: usize = toks
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "invalid face list length"))?;
                    if toks.len() < count + 1 || count < 3 {
                        return Err(parse_err(line_no, "malformed face"));
                    }
                    let poly = toks[1..=count]
                        .iter()
                        .map(|t| {
                            t.parse::<usize>()
                                .map_err(|_| parse_err(line_no, format!("invalid index {t:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    fan(&poly, &mut faces);
                }
                _ => {}
            }
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?.without_degenerate_faces())
}

pub fn write_ply<W: Write>(mesh: &TriangleMesh, mut w: W) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "element face {}", mesh.faces.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let x = parse_f64(toks.next(), n + 1)?;
        let y = parse_f64(toks.next(), n + 1)?;
        let z = parse_f64(toks.next(), n + 1)?;
        points.push(Point3::new(x, y, z));
    }
    PointCloud::new(points)
}

pub fn write_xyz<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads an OBJ or PLY mesh, chosen by file extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path)?;
    match extension(path).as_str() {
        "obj" => parse_obj(&text),
        "ply" => parse_ply(&text),
        other => Err(Error::InvalidArgument(format!(
            "unsupported mesh extension {other:?} (expected obj or ply)"
        ))),
    }
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match extension(path).as_str() {
        "ply" => write_ply(mesh, &mut w)?,
        _ => write_obj(mesh, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    parse_xyz(&fs::read_to_string(path)?)
}

pub fn write_xyz_file(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_xyz(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

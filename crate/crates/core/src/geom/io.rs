//! ASCII OBJ meshes and binary little-endian PLY point clouds.
//!
//! OBJ floats are written with the shortest representation that parses back
//! to the same `f64`, so mesh round trips are exact. PLY stores `float32`
//! properties `x y z [nx ny nz]`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{PointCloud, Vec3};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Mesh as stored in OBJ: positions, optional per-vertex normals and
/// optional per-face-corner texture coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub uvs: Vec<[f64; 2]>,
    /// Indices into `uvs`, one triple per face; empty when the file has no `vt`.
    pub face_uvs: Vec<[usize; 3]>,
    pub faces: Vec<[usize; 3]>,
}

pub fn obj_to_string(mesh: &ObjMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for uv in &mesh.uvs {
        let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    let has_n = mesh.normals.is_some();
    for (fi, f) in mesh.faces.iter().enumerate() {
        s.push('f');
        for c in 0..3 {
            let v = f[c] + 1;
            match (mesh.face_uvs.get(fi), has_n) {
                (Some(t), true) => write!(s, " {v}/{}/{v}", t[c] + 1),
                (Some(t), false) => write!(s, " {v}/{}", t[c] + 1),
                (None, true) => write!(s, " {v}//{v}"),
                (None, false) => write!(s, " {v}"),
            }
            .expect("write to string");
        }
        s.push('\n');
    }
    s
}

pub fn write_obj(mesh: &ObjMesh, path: &Path) -> Result<(), FormatError> {
    write_file(path, obj_to_string(mesh).as_bytes())
}

fn parse_index(token: &str, count: usize, line: usize, what: &str) -> Result<usize, FormatError> {
    let err = |message: String| FormatError::Parse { line, message };
    let raw: i64 = token
        .parse()
        .map_err(|_| err(format!("bad {what} index '{token}'")))?;
    let idx = if raw < 0 { count as i64 + raw } else { raw - 1 };
    if idx < 0 || idx as usize >= count {
        return Err(err(format!(
            "{what} index {raw} out of range ({count} defined)"
        )));
    }
    Ok(idx as usize)
}

fn parse_floats<const N: usize>(parts: &[&str], line: usize) -> Result<[f64; N], FormatError> {
    if parts.len() < N {
        return Err(FormatError::Parse {
            line,
            message: format!("expected {N} values"),
        });
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| FormatError::Parse {
            line,
            message: format!("bad number '{p}'"),
        })?;
    }
    Ok(out)
}

pub fn parse_obj(text: &str) -> Result<ObjMesh, FormatError> {
    let mut mesh = ObjMesh::default();
    let mut vn: Vec<Vec3> = Vec::new();
    // (corner vertex, corner normal) pairs, resolved after all records are read
    let mut corner_normals: Vec<(usize, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.split('#').next().unwrap_or("");
        let parts: Vec<&str> = raw.split_whitespace().collect();
        let Some((&tag, rest)) = parts.split_first() else {
            continue;
        };
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(rest, line)?;
                mesh.vertices.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(rest, line)?;
                mesh.uvs.push([u, v]);
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(rest, line)?;
                vn.push(Vec3::new(x, y, z));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(FormatError::Parse {
                        line,
                        message: "face needs at least 3 corners".into(),
                    });
                }
                let mut corners = Vec::with_capacity(rest.len());
                for c in rest {
                    let mut fields = c.split('/');
                    let v = parse_index(
                        fields.next().unwrap_or(""),
                        mesh.vertices.len(),
                        line,
                        "vertex",
                    )?;
                    let t = match fields.next() {
                        Some(t) if !t.is_empty() => {
                            Some(parse_index(t, mesh.uvs.len(), line, "texture")?)
                        }
                        _ => None,
                    };
                    let n = match fields.next() {
                        Some(n) if !n.is_empty() => Some(parse_index(n, vn.len(), line, "normal")?),
                        _ => None,
                    };
                    corners.push((v, t, n));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    mesh.faces.push(tri.map(|c| c.0));
                    if tri.iter().all(|c| c.1.is_some()) {
                        mesh.face_uvs.push(tri.map(|c| c.1.unwrap_or(0)));
                    } else if !mesh.face_uvs.is_empty() {
                        return Err(FormatError::Parse {
                            line,
                            message: "face without texture coordinates in textured mesh".into(),
                        });
                    }
                    for c in tri {
                        if let Some(n) = c.2 {
                            corner_normals.push((c.0, n));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    if !mesh.face_uvs.is_empty() && mesh.face_uvs.len() != mesh.faces.len() {
        return Err(FormatError::Invalid(
            "texture coordinates missing on some faces".into(),
        ));
    }
    if !vn.is_empty() {
        let mut normals = vec![Vec3::zeros(); mesh.vertices.len()];
        for (v, n) in corner_normals {
            normals[v] = vn[n];
        }
        mesh.normals = Some(normals);
    }
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<ObjMesh, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_obj(&text)
}

pub fn ply_to_bytes(cloud: &PointCloud) -> Result<Vec<u8>, FormatError> {
    if cloud.is_empty() {
        return Err(FormatError::Invalid(
            "refusing to write an empty point cloud".into(),
        ));
    }
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    for p in ["x", "y", "z"] {
        header.push_str(&format!("property float {p}\n"));
    }
    if cloud.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            header.push_str(&format!("property float {p}\n"));
        }
    }
    header.push_str("end_header\n");
    let stride = if cloud.normals.is_some() { 24 } else { 12 };
    let mut out = Vec::with_capacity(header.len() + stride * cloud.len());
    out.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.positions.iter().enumerate() {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(normals) = &cloud.normals {
            for c in normals[i].iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), FormatError> {
    let bytes = ply_to_bytes(cloud)?;
    write_file(path, &bytes)
}

#[derive(Clone, Copy)]
enum PlyScalar {
    F32,
    F64,
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    let mut reader = BufReader::new(bytes);
    let mut line = String::new();
    let mut line_no = 0;
    let mut props: Vec<(String, PlyScalar)> = Vec::new();
    let mut count: Option<usize> = None;
    let mut format = String::new();
    let perr = |line: usize, m: &str| FormatError::Parse {
        line,
        message: m.to_string(),
    };
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        line_no += 1;
        if n == 0 {
            return Err(perr(line_no, "unexpected end of header"));
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(perr(1, "missing 'ply' magic")),
            ["format", f, _] => format = f.to_string(),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", c] => {
                count = Some(c.parse().map_err(|_| perr(line_no, "bad vertex count"))?);
            }
            ["element", other, ..] => {
                return Err(perr(line_no, &format!("unsupported element '{other}'")))
            }
            ["property", ty, name] => {
                let scalar = match *ty {
                    "float" | "float32" => PlyScalar::F32,
                    "double" | "float64" => PlyScalar::F64,
                    _ => return Err(perr(line_no, &format!("unsupported property type '{ty}'"))),
                };
                props.push((name.to_string(), scalar));
            }
            ["end_header"] => break,
            _ => {
                return Err(perr(
                    line_no,
                    &format!("unrecognized header line '{}'", line.trim()),
                ))
            }
        }
    }
    let count = count.ok_or_else(|| FormatError::Invalid("no vertex element".into()))?;
    let find = |name: &str| props.iter().position(|p| p.0 == name);
    let xyz = [find("x"), find("y"), find("z")];
    let nxyz = [find("nx"), find("ny"), find("nz")];
    if xyz.iter().any(Option::is_none) {
        return Err(FormatError::Invalid("missing x/y/z properties".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    match format.as_str() {
        "binary_little_endian" => {
            let mut rest = Vec::new();
            reader
                .read_to_end(&mut rest)
                .map_err(|e| FormatError::Invalid(e.to_string()))?;
            let stride: usize = props
                .iter()
                .map(|p| match p.1 {
                    PlyScalar::F32 => 4,
                    PlyScalar::F64 => 8,
                })
                .sum();
            if rest.len() != stride * count {
                return Err(FormatError::Invalid(format!(
                    "body has {} bytes, expected {}",
                    rest.len(),
                    stride * count
                )));
            }
            for chunk in rest.chunks_exact(stride) {
                let mut off = 0;
                let mut row = Vec::with_capacity(props.len());
                for p in &props {
                    match p.1 {
                        PlyScalar::F32 => {
                            row.push(f32::from_le_bytes(
                                chunk[off..off + 4].try_into().expect("4 bytes"),
                            ) as f64);
                            off += 4;
                        }
                        PlyScalar::F64 => {
                            row.push(f64::from_le_bytes(
                                chunk[off..off + 8].try_into().expect("8 bytes"),
                            ));
                            off += 8;
                        }
                    }
                }
                rows.push(row);
            }
        }
        "ascii" => {
            for l in reader.lines() {
                let l = l.map_err(|e| FormatError::Invalid(e.to_string()))?;
                line_no += 1;
                if l.trim().is_empty() {
                    continue;
                }
                let row: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
                let row = row.map_err(|_| perr(line_no, "bad number"))?;
                if row.len() != props.len() {
                    return Err(perr(line_no, "wrong property count"));
                }
                rows.push(row);
            }
            if rows.len() != count {
                return Err(FormatError::Invalid(format!(
                    "expected {count} vertices, found {}",
                    rows.len()
                )));
            }
        }
        other => {
            return Err(FormatError::Invalid(format!(
                "unsupported format '{other}'"
            )))
        }
    }

    let pick = |r: &Vec<f64>, idx: [Option<usize>; 3]| {
        Vec3::new(r[idx[0].unwrap()], r[idx[1].unwrap()], r[idx[2].unwrap()])
    };
    let positions = rows.iter().map(|r| pick(r, xyz)).collect();
    let normals = if nxyz.iter().all(Option::is_some) {
        Some(rows.iter().map(|r| pick(r, nxyz)).collect())
    } else {
        None
    };
    Ok(PointCloud { positions, normals })
}

pub fn read_ply(path: &Path) -> Result<PointCloud, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    parse_ply(&bytes)
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    f.write_all(bytes).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip_is_exact() {
        let mesh = ObjMesh {
            vertices: vec![
                Vec3::new(0.1, 1.0 / 3.0, -2e-9),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 7.25),
            ],
            normals: Some(vec![Vec3::z(), Vec3::z(), Vec3::new(0.6, 0.0, 0.8)]),
            uvs: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.3, 0.3]],
            face_uvs: vec![[0, 1, 3]],
            faces: vec![[0, 1, 2]],
        };
        let text = obj_to_string(&mesh);
        assert_eq!(parse_obj(&text).unwrap(), mesh);
    }

    #[test]
    fn obj_reports_line_of_bad_face() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\n# ok\nf 1 2 3\nf 1 2 9\n";
        match parse_obj(text) {
            Err(FormatError::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn obj_quads_are_fanned() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert_eq!(parse_obj(text).unwrap().faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn ply_round_trip_is_bit_exact() {
        let cloud = PointCloud {
            positions: vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 5.5, 1e-3)],
            normals: Some(vec![Vec3::z(), Vec3::new(0.6, 0.8, 0.0)]),
        };
        let bytes = ply_to_bytes(&cloud).unwrap();
        let back = parse_ply(&bytes).unwrap();
        for (a, b) in cloud.positions.iter().zip(&back.positions) {
            for k in 0..3 {
                assert_eq!((a[k] as f32) as f64, b[k]);
            }
        }
        assert_eq!(ply_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn ply_ascii_is_readable() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty double z\nend_header\n1 2 3\n4 5 6\n";
        let c = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(c.positions[1], Vec3::new(4.0, 5.0, 6.0));
        assert!(c.normals.is_none());
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(ply_to_bytes(&PointCloud::default()).is_err());
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BodyError, Skeleton, TemplateBody, UvAtlas};
use crate::geom::io::{read_obj, write_obj, FormatError, ObjMesh};
use crate::geom::{TriMesh, Vec3};

/// Skeleton and skinning sidecar of a rigged mesh.
///
/// `parents` uses -1 for roots; `offsets` are rest-pose offsets from the
/// parent joint; `weights` is `N x J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinningFile {
    pub joints: Vec<String>,
    pub parents: Vec<i64>,
    pub offsets: Vec<[f64; 3]>,
    pub weights: Vec<Vec<f64>>,
}

impl SkinningFile {
    pub fn from_body(body: &TemplateBody) -> Self {
        let s = &body.skeleton;
        Self {
            joints: s.names.clone(),
            parents: s
                .parents
                .iter()
                .map(|p| p.map_or(-1, |p| p as i64))
                .collect(),
            offsets: s.offsets.iter().map(|o| [o.x, o.y, o.z]).collect(),
            weights: body.skinning.clone(),
        }
    }
}

/// Writes the body as an OBJ (with its UV atlas, if any) plus a skinning JSON.
pub fn save_rigged_mesh(
    body: &TemplateBody,
    mesh_path: &Path,
    skinning_path: &Path,
) -> Result<(), BodyError> {
    let (uvs, face_uvs) = match &body.uv {
        Some(uv) => (uv.uvs.clone(), uv.face_uvs.clone()),
        None => (Vec::new(), Vec::new()),
    };
    let obj = ObjMesh {
        vertices: body.mesh.vertices.clone(),
        normals: Some(body.normals.clone()),
        uvs,
        face_uvs,
        faces: body.mesh.faces.clone(),
    };
    write_obj(&obj, mesh_path)?;
    let json = serde_json::to_string(&SkinningFile::from_body(body)).expect("skinning serializes");
    crate::geom::io::write_file(skinning_path, json.as_bytes())?;
    Ok(())
}

/// Loads a rigged mesh from an OBJ file and a skinning JSON.
///
/// Weight rows summing to within 1% of one are renormalized; others are
/// rejected with their row index.
pub fn load_rigged_mesh(mesh_path: &Path, skinning_path: &Path) -> Result<TemplateBody, BodyError> {
    let obj = read_obj(mesh_path)?;
    let text = fs::read_to_string(skinning_path).map_err(|e| FormatError::io(skinning_path, e))?;
    let skin: SkinningFile = serde_json::from_str(&text).map_err(|e| BodyError::Json {
        path: skinning_path.display().to_string(),
        message: e.to_string(),
    })?;
    body_from_parts(obj, skin)
}

pub(crate) fn body_from_parts(obj: ObjMesh, skin: SkinningFile) -> Result<TemplateBody, BodyError> {
    let parents = skin
        .parents
        .iter()
        .map(|&p| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(BodyError::Skeleton(format!("bad parent index {p}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let skeleton = Skeleton::new(
        skin.joints,
        parents,
        skin.offsets.iter().map(|o| Vec3::from(*o)).collect(),
    )?;

    if skin.weights.len() != obj.vertices.len() {
        return Err(BodyError::WeightRowCount {
            expected: obj.vertices.len(),
            got: skin.weights.len(),
        });
    }
    let joints = skeleton.joint_count();
    let mut weights = skin.weights;
    for (row, w) in weights.iter_mut().enumerate() {
        let sum: f64 = w.iter().sum();
        if w.len() != joints
            || w.iter().any(|&x| x < 0.0 || !x.is_finite())
            || !(0.99..=1.01).contains(&sum)
        {
            return Err(BodyError::BadWeightRow { row, sum });
        }
        if sum != 1.0 {
            for x in w.iter_mut() {
                *x /= sum;
            }
        }
    }
    let uv = (!obj.face_uvs.is_empty()).then(|| UvAtlas {
        uvs: obj.uvs.clone(),
        face_uvs: obj.face_uvs.clone(),
    });
    let mesh = TriMesh::new(obj.vertices, obj.faces)?;
    TemplateBody::new(mesh, skeleton, weights, uv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_humanoid, HumanoidConfig};

    #[test]
    fn humanoid_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let body = build_humanoid(&HumanoidConfig::default()).unwrap();
        let (m, s) = (dir.path().join("body.obj"), dir.path().join("skin.json"));
        save_rigged_mesh(&body, &m, &s).unwrap();
        let back = load_rigged_mesh(&m, &s).unwrap();
        assert_eq!(back.mesh, body.mesh);
        assert_eq!(back.skeleton, body.skeleton);
        assert_eq!(back.uv, body.uv);
        assert_eq!(back.normals, body.normals);
    }

    #[test]
    fn half_weight_row_is_named() {
        let obj = ObjMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            faces: vec![[0, 1, 2]],
            ..Default::default()
        };
        let skin = SkinningFile {
            joints: vec!["a".into(), "b".into()],
            parents: vec![-1, 0],
            offsets: vec![[0.0; 3], [0.0, 1.0, 0.0]],
            weights: vec![vec![1.0, 0.0], vec![0.25, 0.25], vec![0.0, 1.0]],
        };
        match body_from_parts(obj, skin) {
            Err(BodyError::BadWeightRow { row, sum }) => {
                assert_eq!(row, 1);
                assert_eq!(sum, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn near_unit_rows_are_renormalized() {
        let obj = ObjMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            faces: vec![[0, 1, 2]],
            ..Default::default()
        };
        let skin = SkinningFile {
            joints: vec!["a".into()],
            parents: vec![-1],
            offsets: vec![[0.0; 3]],
            weights: vec![vec![1.005], vec![1.0], vec![0.995]],
        };
        let body = body_from_parts(obj, skin).unwrap();
        assert!(body.skinning.iter().all(|w| (w[0] - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bad_face_index_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("bad.obj");
        fs::write(&m, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap();
        let s = dir.path().join("skin.json");
        fs::write(
            &s,
            r#"{"joints":["a"],"parents":[-1],"offsets":[[0,0,0]],"weights":[[1],[1],[1]]}"#,
        )
        .unwrap();
        match load_rigged_mesh(&m, &s) {
            Err(BodyError::Format(FormatError::Parse { line, .. })) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}

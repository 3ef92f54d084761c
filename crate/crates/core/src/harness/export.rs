use std::path::Path;

use super::HarnessError;
use crate::body::TemplateBody;
use crate::geom::io::{write_obj, write_ply, ObjMesh};
use crate::geom::{sample_surface, vertex_normals, PointCloud, Vec3};
use crate::model::ClosetModel;
use crate::net::{read_checkpoint, write_checkpoint};

/// Writes `cloud` as binary PLY. Empty clouds are rejected before any file
/// is created.
pub fn export_cloud(cloud: &PointCloud, path: &Path) -> Result<(), HarnessError> {
    Ok(write_ply(cloud, path)?)
}

pub fn export_mesh(mesh: &ObjMesh, path: &Path) -> Result<(), HarnessError> {
    Ok(write_obj(mesh, path)?)
}

/// The body's faces and UV atlas over `vertices` (the rest pose or any
/// posed copy), with recomputed vertex normals.
pub fn body_obj(body: &TemplateBody, vertices: &[Vec3]) -> ObjMesh {
    let (uvs, face_uvs) = body
        .uv
        .as_ref()
        .map(|a| (a.uvs.clone(), a.face_uvs.clone()))
        .unwrap_or_default();
    ObjMesh {
        vertices: vertices.to_vec(),
        normals: Some(vertex_normals(vertices, body.faces())),
        uvs,
        face_uvs,
        faces: body.faces().to_vec(),
    }
}

/// Writes the garment template of `outfit` at `count` surface points.
pub fn export_template(
    model: &ClosetModel,
    outfit: &str,
    count: usize,
    seed: u64,
    path: &Path,
) -> Result<PointCloud, HarnessError> {
    let points = sample_surface(&model.body().mesh, count, seed)?;
    let cloud = model.template_preview(outfit, &points)?;
    export_cloud(&cloud, path)?;
    Ok(cloud)
}

pub fn save_model(model: &ClosetModel, path: &Path) -> Result<(), HarnessError> {
    Ok(write_checkpoint(&model.to_checkpoint(), path)?)
}

pub fn load_model(body: TemplateBody, path: &Path) -> Result<ClosetModel, HarnessError> {
    Ok(ClosetModel::from_checkpoint(body, &read_checkpoint(path)?)?)
}

//! The deformation model: encode the posed body and the outfit code into
//! per-vertex features, interpolate them at body-surface points and decode a
//! garment-template displacement plus a pose-dependent wrinkle displacement
//! in each point's local frame.

mod uv;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use uv::{uv_at, uv_baseline_features, FeatureGrid, UvRaster};

use crate::body::{lbs_pose, BodyError, Pose, TemplateBody};
use crate::geom::{
    sample_surface, FrameField, GeomError, LocalFrame, Mat3, PointCloud, SurfacePoint, Vec3,
};
use crate::net::{
    checkpoint_from_bytes, checkpoint_to_bytes, pose_input, Checkpoint, Decoder, EncoderCache,
    EncoderConfig, GarmentCode, NetError, ParamId, ParameterStore, PointEncoder, SparseRows, Tape,
    Tensor, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown outfit '{0}'")]
    UnknownOutfit(String),
    #[error("uv ({}, {}) lies outside the atlas", .0[0], .0[1])]
    OutsideAtlas([f64; 2]),
    #[error("face {0} has no uv coordinates")]
    MissingUv(usize),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Switches that each disable or replace one pathway of the full model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// One displacement head instead of separate template and wrinkle heads.
    pub no_etd: bool,
    /// Features read through the UV atlas instead of surface interpolation.
    pub no_csf_uv_baseline: bool,
    /// Keep garment features out of the wrinkle decoder.
    pub no_garment_to_pose_decoder: bool,
    /// Add a data term on the garment template alone.
    pub template_data_term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pose_encoder: EncoderConfig,
    pub garment_encoder: EncoderConfig,
    pub code_width: usize,
    pub code_std: f64,
    pub decoder_hidden: Vec<usize>,
    /// Feed posed-minus-template offsets to the pose encoder as well.
    pub pose_residual: bool,
    pub uv_resolution: usize,
    pub ablations: Ablations,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-width defaults for a template of `vertices` points.
    pub fn for_vertices(vertices: usize) -> Self {
        let counts = EncoderConfig::counts_for(vertices);
        let levels = counts.len();
        Self {
            pose_encoder: EncoderConfig {
                abstraction_counts: counts.clone(),
                neighbors: 16,
                widths: [32, 64, 64, 128, 128, 128][..levels].to_vec(),
                output: 64,
            },
            garment_encoder: EncoderConfig {
                abstraction_counts: counts,
                neighbors: 16,
                widths: [32, 32, 64, 64, 64, 64][..levels].to_vec(),
                output: 64,
            },
            code_width: GarmentCode::DEFAULT_WIDTH,
            code_std: GarmentCode::DEFAULT_STD,
            decoder_hidden: vec![256; 4],
            pose_residual: true,
            uv_resolution: 128,
            ablations: Ablations::default(),
            seed: 0,
        }
    }
}

/// One decoded point.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSample {
    pub sp: SurfacePoint,
    pub p_t: Vec3,
    pub p_u: Vec3,
    pub frame: LocalFrame,
    /// Pose-invariant garment-template displacement (local frame).
    pub r_g: Vec3,
    /// Pose-dependent displacement (local frame).
    pub r_p: Vec3,
    pub normal_local: Vec3,
    pub x_world: Vec3,
    pub n_world: Vec3,
}

impl DeformationSample {
    pub fn r(&self) -> Vec3 {
        self.r_g + self.r_p
    }
}

/// Handles to one batch item recorded on a tape.
#[derive(Debug, Clone)]
pub struct RecordedBatch {
    pub points: Vec<SurfacePoint>,
    pub p_t: Vec<Vec3>,
    pub p_u: Vec<Vec3>,
    pub frames: Vec<LocalFrame>,
    /// `None` without a separate template head.
    pub r_g: Option<Var>,
    pub r_p: Var,
    pub r: Var,
    pub normal_local: Var,
    pub x_world: Var,
    pub n_world: Var,
    /// Template displacement alone mapped to world space.
    pub template_world: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct ClosetModel {
    body: TemplateBody,
    config: ModelConfig,
    store: ParameterStore,
    codes: GarmentCode,
    pose_encoder: PointEncoder,
    garment_encoder: PointEncoder,
    garment_decoder: Option<Decoder>,
    pose_decoder: Decoder,
    pose_cache: Arc<EncoderCache>,
    garment_cache: Arc<EncoderCache>,
    uv_raster: Option<Arc<UvRaster>>,
}

fn rows_of(v: &[Vec3]) -> Tensor {
    Tensor::from_vec(v.len(), 3, v.iter().flat_map(|p| [p.x, p.y, p.z]).collect())
}

fn vec_rows(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows())
        .map(|r| Vec3::from_row_slice(t.row(r)))
        .collect()
}

impl ClosetModel {
    pub fn new(body: TemplateBody, config: ModelConfig) -> Result<Self, ModelError> {
        if config.code_width == 0 {
            return Err(ModelError::Config(
                "garment code width must be positive".into(),
            ));
        }
        let ab = config.ablations;
        if ab.no_csf_uv_baseline && body.uv.is_none() {
            return Err(ModelError::Config(
                "uv baseline needs a template with a uv atlas".into(),
            ));
        }
        let mut store = ParameterStore::new(config.seed);
        let pose_in = if config.pose_residual { 6 } else { 3 };
        let pose_encoder = PointEncoder::new(
            &mut store,
            "pose_encoder",
            config.pose_encoder.clone(),
            pose_in,
        )?;
        let garment_encoder = PointEncoder::new(
            &mut store,
            "garment_encoder",
            config.garment_encoder.clone(),
            config.code_width,
        )?;
        let (c_p, c_g) = (config.pose_encoder.output, config.garment_encoder.output);
        let garment_decoder = if ab.no_etd {
            None
        } else {
            Some(Decoder::new(
                &mut store,
                "garment_decoder",
                c_g + 3,
                &config.decoder_hidden,
                3,
            )?)
        };
        let pose_inputs = c_p
            + 3
            + if ab.no_garment_to_pose_decoder {
                0
            } else {
                c_g
            };
        let pose_decoder = Decoder::new(
            &mut store,
            "pose_decoder",
            pose_inputs,
            &config.decoder_hidden,
            6,
        )?;
        let pose_cache = Arc::new(EncoderCache::new(body.vertices(), &config.pose_encoder)?);
        let garment_cache = if config.garment_encoder.abstraction_counts
            == config.pose_encoder.abstraction_counts
            && config.garment_encoder.neighbors == config.pose_encoder.neighbors
        {
            pose_cache.clone()
        } else {
            Arc::new(EncoderCache::new(body.vertices(), &config.garment_encoder)?)
        };
        let uv_raster = match (&body.uv, ab.no_csf_uv_baseline) {
            (Some(atlas), true) => {
                Some(Arc::new(UvRaster::new(atlas, config.uv_resolution.max(2))))
            }
            _ => None,
        };
        let codes = GarmentCode::new(body.vertex_count(), config.code_width, config.code_std);
        Ok(Self {
            body,
            config,
            store,
            codes,
            pose_encoder,
            garment_encoder,
            garment_decoder,
            pose_decoder,
            pose_cache,
            garment_cache,
            uv_raster,
        })
    }

    pub fn body(&self) -> &TemplateBody {
        &self.body
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn garment_codes(&self) -> &GarmentCode {
        &self.codes
    }

    pub fn garment_decoder(&self) -> Option<&Decoder> {
        self.garment_decoder.as_ref()
    }

    pub fn pose_decoder(&self) -> &Decoder {
        &self.pose_decoder
    }

    /// Creates the garment code for `outfit` if it does not exist yet.
    pub fn ensure_outfit(&mut self, outfit: &str) -> Result<ParamId, ModelError> {
        Ok(self.codes.ensure(&mut self.store, outfit)?)
    }

    pub fn code_id(&self, outfit: &str) -> Result<ParamId, ModelError> {
        self.codes
            .get(outfit)
            .ok_or_else(|| ModelError::UnknownOutfit(outfit.to_string()))
    }

    /// Per-vertex garment features of `outfit`. They read only the code and
    /// the template, never the pose.
    pub fn garment_features(&self, tape: &mut Tape, outfit: &str) -> Result<Var, ModelError> {
        let code = tape.param(&self.store, self.code_id(outfit)?);
        Ok(self
            .garment_encoder
            .forward(tape, &self.store, &self.garment_cache, code)?)
    }

    /// Posed vertices with the root's rigid motion removed.
    fn canonical_posed(&self, pose: &Pose, posed: &[Vec3]) -> Vec<Vec3> {
        let root = pose.rotations[0];
        if root == Mat3::identity() && pose.translation == Vec3::zeros() {
            return posed.to_vec();
        }
        let j0 = self.body.skeleton.offsets[0];
        let inv = root.transpose();
        posed
            .iter()
            .map(|x| inv * (x - j0 - pose.translation) + j0)
            .collect()
    }

    fn interpolation(&self, points: &[SurfacePoint]) -> Result<SparseRows, ModelError> {
        if let (Some(raster), Some(atlas)) = (&self.uv_raster, &self.body.uv) {
            return raster.resampler(atlas, self.body.faces(), self.body.vertex_count(), points);
        }
        let mut rows = SparseRows::new(self.body.vertex_count());
        for sp in points {
            let idx = sp.vertex_indices(self.body.faces())?;
            rows.push_row(idx.iter().zip(sp.bary).map(|(&v, b)| (v, b)));
        }
        Ok(rows)
    }

    /// Records the decoding of `points` under `pose` on `tape`, given the
    /// outfit's garment features from [`Self::garment_features`].
    pub fn record(
        &self,
        tape: &mut Tape,
        garment: Var,
        pose: &Pose,
        points: &[SurfacePoint],
    ) -> Result<RecordedBatch, ModelError> {
        let posed = lbs_pose(&self.body, pose)?.vertices;
        let faces = self.body.faces();
        let field = FrameField::new(&posed, faces);
        let mut frames = Vec::with_capacity(points.len());
        let mut p_t = Vec::with_capacity(points.len());
        for sp in points {
            frames.push(field.frame(sp)?);
            p_t.push(crate::geom::position_at(self.body.vertices(), faces, sp)?);
        }
        let p_u: Vec<Vec3> = frames.iter().map(|f| f.origin).collect();
        let rotations = Arc::new(frames.iter().map(|f| f.rotation).collect::<Vec<Mat3>>());

        let canonical = self.canonical_posed(pose, &posed);
        let input = tape.constant(pose_input(
            self.body.vertices(),
            &canonical,
            self.config.pose_residual,
        )?);
        let pose_feats = self
            .pose_encoder
            .forward(tape, &self.store, &self.pose_cache, input)?;

        let mix = Arc::new(self.interpolation(points)?);
        let g = tape.sparse(garment, mix.clone());
        let p = tape.sparse(pose_feats, mix);
        let pt = tape.constant(rows_of(&p_t));

        let r_g = match &self.garment_decoder {
            Some(dec) => {
                let x = tape.concat_cols(&[g, pt]);
                Some(dec.forward(tape, &self.store, x)?)
            }
            None => None,
        };
        let pose_in = if self.config.ablations.no_garment_to_pose_decoder {
            tape.concat_cols(&[p, pt])
        } else {
            tape.concat_cols(&[g, p, pt])
        };
        let head = self.pose_decoder.forward(tape, &self.store, pose_in)?;
        let r_p = tape.slice_cols(head, 0, 3);
        let raw_normal = tape.slice_cols(head, 3, 3);
        let mut up = Tensor::zeros(points.len(), 3);
        for r in 0..points.len() {
            up.row_mut(r)[2] = 1.0;
        }
        let normal_local = tape.add_const(raw_normal, &up);
        let r = match r_g {
            Some(rg) => tape.add(rg, r_p),
            None => r_p,
        };
        let anchors = rows_of(&p_u);
        let world = tape.row_linear3(r, rotations.clone());
        let x_world = tape.add_const(world, &anchors);
        let n_rot = tape.row_linear3(normal_local, rotations.clone());
        let n_world = tape.normalize_rows(n_rot);
        let template_world = match (r_g, self.config.ablations.template_data_term) {
            (Some(rg), true) => {
                let w = tape.row_linear3(rg, rotations);
                Some(tape.add_const(w, &anchors))
            }
            _ => None,
        };
        Ok(RecordedBatch {
            points: points.to_vec(),
            p_t,
            p_u,
            frames,
            r_g,
            r_p,
            r,
            normal_local,
            x_world,
            n_world,
            template_world,
        })
    }

    /// Decodes `points` for `outfit` under `pose`.
    pub fn forward(
        &self,
        pose: &Pose,
        outfit: &str,
        points: &[SurfacePoint],
    ) -> Result<Vec<DeformationSample>, ModelError> {
        let mut tape = Tape::new();
        let garment = self.garment_features(&mut tape, outfit)?;
        let rec = self.record(&mut tape, garment, pose, points)?;
        Ok(samples_from(&tape, &rec))
    }

    /// Garment template of `outfit` on the rest-pose body: template
    /// displacements only.
    pub fn template_preview(
        &self,
        outfit: &str,
        points: &[SurfacePoint],
    ) -> Result<PointCloud, ModelError> {
        let mut tape = Tape::new();
        let garment = self.garment_features(&mut tape, outfit)?;
        let faces = self.body.faces();
        let field = FrameField::new(self.body.vertices(), faces);
        let frames = points
            .iter()
            .map(|sp| field.frame(sp))
            .collect::<Result<Vec<_>, _>>()?;
        let r_g = match &self.garment_decoder {
            Some(dec) => {
                let mix = Arc::new(self.interpolation(points)?);
                let g = tape.sparse(garment, mix);
                let p_t: Vec<Vec3> = frames.iter().map(|f| f.origin).collect();
                let pt = tape.constant(rows_of(&p_t));
                let x = tape.concat_cols(&[g, pt]);
                let out = dec.forward(&mut tape, &self.store, x)?;
                vec_rows(tape.value(out))
            }
            None => vec![Vec3::zeros(); points.len()],
        };
        let positions = frames
            .iter()
            .zip(&r_g)
            .map(|(f, r)| f.to_world(r))
            .collect();
        Ok(PointCloud::from_positions(positions))
    }

    /// One cloud per pose, decoded at a fixed set of `count` surface points
    /// so points correspond across frames.
    pub fn animate(
        &self,
        poses: &[Pose],
        outfit: &str,
        count: usize,
        seed: u64,
    ) -> Result<Vec<PointCloud>, ModelError> {
        let points = sample_surface(&self.body.mesh, count, seed)?;
        poses
            .iter()
            .map(|pose| {
                let samples = self.forward(pose, outfit, &points)?;
                let positions = samples.iter().map(|s| s.x_world).collect();
                let normals = samples.iter().map(|s| s.n_world).collect();
                Ok(PointCloud::new(positions, Some(normals))?)
            })
            .collect()
    }

    /// Serializable form of the model: configuration, outfit ids and all
    /// parameters.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "config": self.config,
            "outfits": self.codes.outfits().collect::<Vec<_>>(),
        });
        Checkpoint::from_store(&self.store, meta)
    }

    pub fn from_checkpoint(body: TemplateBody, ck: &Checkpoint) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Net(NetError::Checkpoint(m));
        let config: ModelConfig = serde_json::from_value(ck.metadata["config"].clone())
            .map_err(|e| bad(e.to_string()))?;
        let outfits: Vec<String> = serde_json::from_value(ck.metadata["outfits"].clone())
            .map_err(|e| bad(e.to_string()))?;
        let mut model = Self::new(body, config)?;
        for o in &outfits {
            model.ensure_outfit(o)?;
        }
        model.store.load_values(&ck.tensors)?;
        Ok(model)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint_to_bytes(&self.to_checkpoint())
    }

    pub fn from_checkpoint_bytes(body: TemplateBody, bytes: &[u8]) -> Result<Self, ModelError> {
        Self::from_checkpoint(body, &checkpoint_from_bytes(bytes)?)
    }
}

/// Reads recorded values back into per-point samples.
pub fn samples_from(tape: &Tape, rec: &RecordedBatch) -> Vec<DeformationSample> {
    let r_p = vec_rows(tape.value(rec.r_p));
    let r_g = match rec.r_g {
        Some(v) => vec_rows(tape.value(v)),
        None => vec![Vec3::zeros(); r_p.len()],
    };
    let normal = vec_rows(tape.value(rec.normal_local));
    let x = vec_rows(tape.value(rec.x_world));
    let n = vec_rows(tape.value(rec.n_world));
    (0..r_p.len())
        .map(|i| DeformationSample {
            sp: rec.points[i],
            p_t: rec.p_t[i],
            p_u: rec.p_u[i],
            frame: rec.frames[i],
            r_g: r_g[i],
            r_p: r_p[i],
            normal_local: normal[i],
            x_world: x[i],
            n_world: n[i],
        })
        .collect()
}

#[cfg(test)]
mod tests;

//! Hierarchical point-set encoder over the template vertices.
//!
//! Grouping is computed once on template coordinates: each level picks
//! centers by farthest-point sampling, groups the `k` nearest points of the
//! previous level around each center and max-pools a shared MLP over the
//! group. Feature propagation interpolates back level by level with
//! inverse-distance weights over the three nearest coarse points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layers::Linear;
use super::params::ParameterStore;
use super::tape::{SparseRows, Tape, Var};
use super::tensor::Tensor;
use super::NetError;
use crate::geom::{farthest_point_sample, k_nearest_brute_force, Vec3};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Strictly decreasing point counts, one per level.
    pub abstraction_counts: Vec<usize>,
    /// Group size of each abstraction.
    pub neighbors: usize,
    /// Feature width per level.
    pub widths: Vec<usize>,
    /// Width of the per-vertex output.
    pub output: usize,
}

impl EncoderConfig {
    pub const FULL_COUNTS: [usize; 6] = [2048, 1024, 512, 256, 128, 64];

    /// Six abstraction counts suited to a template of `vertices` points: the
    /// full-resolution counts from 6890 vertices up, otherwise powers of two
    /// starting near half the vertex count.
    pub fn counts_for(vertices: usize) -> Vec<usize> {
        if vertices >= 6890 {
            return Self::FULL_COUNTS.to_vec();
        }
        let target = (0.55 * vertices as f64).floor() as usize;
        if target == 0 {
            return Vec::new();
        }
        let mut c = 1usize << (usize::BITS - 1 - target.leading_zeros());
        let mut out = Vec::new();
        while out.len() < 6 && c >= 1 {
            out.push(c);
            c /= 2;
        }
        out
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.abstraction_counts.is_empty() {
            return bad("encoder needs at least one level");
        }
        if self.abstraction_counts.windows(2).any(|w| w[1] >= w[0]) {
            return bad("abstraction counts must be strictly decreasing");
        }
        if *self.abstraction_counts.last().unwrap() < 1 {
            return bad("last abstraction count must be at least 1");
        }
        if self.widths.len() != self.abstraction_counts.len() {
            return bad("one feature width per level required");
        }
        if self.widths.contains(&0) || self.output == 0 {
            return bad("zero-width encoder layer");
        }
        if self.neighbors == 0 {
            return bad("neighborhood size must be positive");
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.abstraction_counts.len()
    }
}

/// Static grouping tables of one abstraction level.
#[derive(Debug, Clone)]
pub struct EncoderLevel {
    /// Indices of the centers into the previous level's points.
    pub centers: Vec<usize>,
    /// Center positions.
    pub positions: Vec<Vec3>,
    /// Group size actually used (at most the previous level's count).
    pub group: usize,
    /// Flattened member indices, `group` per center, into the previous level.
    pub members: Arc<Vec<usize>>,
    /// Member offsets from their center divided by `radius`.
    pub relative: Tensor,
    pub radius: f64,
    /// Interpolation from this level's points back onto the previous level.
    pub upsample: Arc<SparseRows>,
}

/// Grouping and interpolation tables for a fixed template.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    points: usize,
    levels: Vec<EncoderLevel>,
}

impl EncoderCache {
    pub fn new(template: &[Vec3], config: &EncoderConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut prev: Vec<Vec3> = template.to_vec();
        let mut levels = Vec::with_capacity(config.levels());
        for &count in &config.abstraction_counts {
            let centers = farthest_point_sample(&prev, count)?;
            let positions: Vec<Vec3> = centers.iter().map(|&i| prev[i]).collect();
            let group = config.neighbors.min(prev.len());
            let mut members = Vec::with_capacity(count * group);
            let mut offsets = Vec::with_capacity(count * group);
            let mut radius: f64 = 0.0;
            for c in &positions {
                for (j, d2) in k_nearest_brute_force(c, &prev, group) {
                    members.push(j);
                    offsets.push(prev[j] - c);
                    radius = radius.max(d2.sqrt());
                }
            }
            if radius == 0.0 {
                radius = 1.0;
            }
            let relative = Tensor::from_vec(
                offsets.len(),
                3,
                offsets
                    .iter()
                    .flat_map(|o| [o.x / radius, o.y / radius, o.z / radius])
                    .collect(),
            );
            let mut upsample = SparseRows::new(positions.len());
            for p in &prev {
                let near = k_nearest_brute_force(p, &positions, 3.min(positions.len()));
                if near[0].1 == 0.0 {
                    upsample.push_row([(near[0].0, 1.0)]);
                } else {
                    let inv: Vec<f64> = near.iter().map(|&(_, d2)| 1.0 / d2.sqrt()).collect();
                    let total: f64 = inv.iter().sum();
                    upsample.push_row(near.iter().zip(&inv).map(|(&(j, _), w)| (j, w / total)));
                }
            }
            levels.push(EncoderLevel {
                centers,
                positions: positions.clone(),
                group,
                members: Arc::new(members),
                relative,
                radius,
                upsample: Arc::new(upsample),
            });
            prev = positions;
        }
        Ok(Self {
            points: template.len(),
            levels,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn levels(&self) -> &[EncoderLevel] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [EncoderLevel] {
        &mut self.levels
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Abstraction {
    first: Linear,
    second: Linear,
}

/// Set-abstraction / feature-propagation encoder producing per-vertex
/// features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEncoder {
    config: EncoderConfig,
    inputs: usize,
    abstractions: Vec<Abstraction>,
    propagations: Vec<Linear>,
    head: Linear,
}

impl PointEncoder {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        config: EncoderConfig,
        inputs: usize,
    ) -> Result<Self, NetError> {
        config.validate()?;
        if inputs == 0 {
            return Err(NetError::Config(
                "encoder input width must be positive".into(),
            ));
        }
        let level_width = |l: usize| if l == 0 { inputs } else { config.widths[l - 1] };
        let mut abstractions = Vec::new();
        for (l, &w) in config.widths.iter().enumerate() {
            abstractions.push(Abstraction {
                first: Linear::new(store, &format!("{name}.sa{l}.0"), level_width(l) + 3, w)?,
                second: Linear::new(store, &format!("{name}.sa{l}.1"), w, w)?,
            });
        }
        let mut propagations = Vec::new();
        for l in 0..config.levels() {
            let coarse = config.widths[l];
            propagations.push(Linear::new(
                store,
                &format!("{name}.fp{l}"),
                coarse + level_width(l),
                config.widths[l],
            )?);
        }
        let head = Linear::new(
            store,
            &format!("{name}.head"),
            config.widths[0],
            config.output,
        )?;
        Ok(Self {
            config,
            inputs,
            abstractions,
            propagations,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn output_width(&self) -> usize {
        self.config.output
    }

    /// Linear layers whose input includes the normalized relative positions,
    /// with the row offset where those three rows start.
    pub fn position_layers(&self) -> Vec<(Linear, usize)> {
        self.abstractions
            .iter()
            .map(|a| (a.first, a.first.inputs - 3))
            .collect()
    }

    /// Per-vertex features for `input` (one row per template vertex).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        cache: &EncoderCache,
        input: Var,
    ) -> Result<Var, NetError> {
        let (rows, cols) = tape.value(input).shape();
        if rows != cache.points() {
            return Err(NetError::LengthMismatch {
                what: "encoder input",
                expected: cache.points(),
                got: rows,
            });
        }
        if cols != self.inputs {
            return Err(NetError::WidthMismatch {
                what: "encoder input",
                expected: self.inputs,
                got: cols,
            });
        }
        if cache.levels().len() != self.config.levels() {
            return Err(NetError::Config(
                "encoder cache built for a different configuration".into(),
            ));
        }
        let mut feats = vec![input];
        for (level, sa) in cache.levels().iter().zip(&self.abstractions) {
            let grouped = tape.gather_rows(*feats.last().unwrap(), level.members.clone());
            let rel = tape.constant(level.relative.clone());
            let h = tape.concat_cols(&[grouped, rel]);
            let h = sa.first.forward(tape, store, h)?;
            let h = tape.relu(h);
            let h = sa.second.forward(tape, store, h)?;
            let h = tape.relu(h);
            feats.push(tape.group_max(h, level.group));
        }
        let mut up = *feats.last().unwrap();
        for l in (0..self.config.levels()).rev() {
            let interp = tape.sparse(up, cache.levels()[l].upsample.clone());
            let h = tape.concat_cols(&[interp, feats[l]]);
            let h = self.propagations[l].forward(tape, store, h)?;
            up = tape.relu(h);
        }
        self.head.forward(tape, store, up)
    }
}

/// Posed vertex coordinates, optionally followed by their offsets from the
/// template, as an encoder input.
pub fn pose_input(
    template: &[Vec3],
    posed: &[Vec3],
    with_residual: bool,
) -> Result<Tensor, NetError> {
    if template.len() != posed.len() {
        return Err(NetError::LengthMismatch {
            what: "posed vertices",
            expected: template.len(),
            got: posed.len(),
        });
    }
    let w = if with_residual { 6 } else { 3 };
    let mut data = Vec::with_capacity(posed.len() * w);
    for (t, u) in template.iter().zip(posed) {
        data.extend_from_slice(&[u.x, u.y, u.z]);
        if with_residual {
            data.extend_from_slice(&[u.x - t.x, u.y - t.y, u.z - t.z]);
        }
    }
    Ok(Tensor::from_vec(posed.len(), w, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_humanoid, HumanoidConfig};

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            abstraction_counts: vec![64, 16, 4],
            neighbors: 8,
            widths: vec![8, 8, 8],
            output: 5,
        }
    }

    fn template() -> Vec<Vec3> {
        let body = build_humanoid(&HumanoidConfig {
            around: 6,
            rings: 2,
            ..Default::default()
        })
        .unwrap();
        body.vertices().to_vec()
    }

    #[test]
    fn default_counts() {
        assert_eq!(EncoderConfig::counts_for(992), [512, 256, 128, 64, 32, 16]);
        assert_eq!(
            EncoderConfig::counts_for(6890),
            [2048, 1024, 512, 256, 128, 64]
        );
        assert_eq!(EncoderConfig::counts_for(288), [128, 64, 32, 16, 8, 4]);
        assert_eq!(EncoderConfig::counts_for(5), [2, 1]);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        assert!(c.validate().is_ok());
        c.abstraction_counts = vec![16, 16, 4];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.widths[1] = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn upsample_rows_are_convex() {
        let t = template();
        let cache = EncoderCache::new(&t, &small_config()).unwrap();
        for level in cache.levels() {
            for r in 0..level.upsample.rows() {
                let s: f64 = level.upsample.row(r).iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            assert!(level.relative.data().iter().all(|x| x.abs() <= 1.0 + 1e-12));
        }
        // Centers are their own nearest coarse point.
        let l0 = &cache.levels()[0];
        for (k, &c) in l0.centers.iter().enumerate() {
            assert_eq!(l0.upsample.row(c), &[(k, 1.0)]);
        }
    }

    fn encode(
        enc: &PointEncoder,
        store: &ParameterStore,
        cache: &EncoderCache,
        input: Tensor,
    ) -> Tensor {
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let y = enc.forward(&mut tape, store, cache, x).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn identity_pose_is_deterministic() {
        let t = template();
        let mut store = ParameterStore::new(4);
        let enc = PointEncoder::new(&mut store, "pose", small_config(), 6).unwrap();
        let cache = EncoderCache::new(&t, &small_config()).unwrap();
        let a = encode(&enc, &store, &cache, pose_input(&t, &t, true).unwrap());
        let b = encode(&enc, &store, &cache, pose_input(&t, &t, true).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.shape(), (t.len(), 5));
    }

    #[test]
    fn pooling_ignores_order_within_groups() {
        let t = template();
        let mut store = ParameterStore::new(4);
        let enc = PointEncoder::new(&mut store, "pose", small_config(), 6).unwrap();
        let cache = EncoderCache::new(&t, &small_config()).unwrap();
        let input = pose_input(&t, &t.iter().map(|v| v * 1.1).collect::<Vec<_>>(), true).unwrap();
        let before = encode(&enc, &store, &cache, input.clone());

        let mut shuffled = cache.clone();
        let level = &mut shuffled.levels_mut()[0];
        let g = level.group;
        let mut members = (*level.members).clone();
        let mut rel = level.relative.clone();
        for c in 0..members.len() / g {
            members[c * g..(c + 1) * g].reverse();
            let rows: Vec<Vec<f64>> = (c * g..(c + 1) * g)
                .rev()
                .map(|r| level.relative.row(r).to_vec())
                .collect();
            for (k, row) in rows.iter().enumerate() {
                rel.row_mut(c * g + k).copy_from_slice(row);
            }
        }
        level.members = Arc::new(members);
        level.relative = rel;
        assert_eq!(encode(&enc, &store, &cache, input.clone()), before);
        assert_eq!(encode(&enc, &store, &shuffled, input), before);
    }

    #[test]
    fn zero_code_through_zero_bias_network_is_zero() {
        let t = template();
        let mut store = ParameterStore::new(4);
        let enc = PointEncoder::new(&mut store, "garment", small_config(), 7).unwrap();
        for (layer, pos_row) in enc.position_layers() {
            let w = store.value_mut(layer.weight);
            for r in pos_row..pos_row + 3 {
                w.row_mut(r).fill(0.0);
            }
        }
        let cache = EncoderCache::new(&t, &small_config()).unwrap();
        let out = encode(&enc, &store, &cache, Tensor::zeros(t.len(), 7));
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let t = template();
        assert!(pose_input(&t, &t[1..], true).is_err());
        let mut store = ParameterStore::new(4);
        let enc = PointEncoder::new(&mut store, "pose", small_config(), 3).unwrap();
        let cache = EncoderCache::new(&t, &small_config()).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(t.len() - 1, 3));
        assert!(matches!(
            enc.forward(&mut tape, &store, &cache, x),
            Err(NetError::LengthMismatch { .. })
        ));
    }
}

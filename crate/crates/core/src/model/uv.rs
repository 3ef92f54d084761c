//! Feature lookup through a UV atlas, the seamed alternative to surface
//! interpolation.

use super::ModelError;
use crate::body::UvAtlas;
use crate::geom::SurfacePoint;
use crate::net::SparseRows;

/// Square texel grid of feature vectors; texel `(i, j)` is centered at
/// `((i + 0.5) / res, (j + 0.5) / res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    res: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(res: usize, channels: usize) -> Self {
        assert!(res >= 2, "grid needs at least 2x2 texels");
        Self {
            res,
            channels,
            data: vec![0.0; res * res * channels],
        }
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn texel(&self, i: usize, j: usize) -> &[f64] {
        let k = (j * self.res + i) * self.channels;
        &self.data[k..k + self.channels]
    }

    pub fn texel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = (j * self.res + i) * self.channels;
        &mut self.data[k..k + self.channels]
    }

    /// Bilinear sample at `uv`.
    pub fn sample(&self, uv: [f64; 2]) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.channels];
        for (i, j, w) in bilinear_taps(self.res, uv)? {
            for (o, t) in out.iter_mut().zip(self.texel(i, j)) {
                *o += w * t;
            }
        }
        Ok(out)
    }
}

/// The four texels around `uv` and their bilinear weights. Coordinates are
/// clamped to the outermost texel centers.
pub(crate) fn bilinear_taps(
    res: usize,
    uv: [f64; 2],
) -> Result<[(usize, usize, f64); 4], ModelError> {
    if !uv.iter().all(|c| (0.0..=1.0).contains(c)) {
        return Err(ModelError::OutsideAtlas(uv));
    }
    let split = |c: f64| {
        let x = (c * res as f64 - 0.5).clamp(0.0, (res - 1) as f64);
        let i = (x.floor() as usize).min(res - 2);
        (i, x - i as f64)
    };
    let (i, fx) = split(uv[0]);
    let (j, fy) = split(uv[1]);
    Ok([
        (i, j, (1.0 - fx) * (1.0 - fy)),
        (i + 1, j, fx * (1.0 - fy)),
        (i, j + 1, (1.0 - fx) * fy),
        (i + 1, j + 1, fx * fy),
    ])
}

/// UV coordinate of a surface point, interpolated from its face's corners.
pub fn uv_at(atlas: &UvAtlas, sp: &SurfacePoint) -> Result<[f64; 2], ModelError> {
    let corners = atlas
        .face_uvs
        .get(sp.face)
        .ok_or(ModelError::MissingUv(sp.face))?;
    let mut uv = [0.0; 2];
    for (k, &c) in corners.iter().enumerate() {
        let t = atlas.uvs.get(c).ok_or(ModelError::MissingUv(sp.face))?;
        uv[0] += sp.bary[k] * t[0];
        uv[1] += sp.bary[k] * t[1];
    }
    Ok(uv)
}

/// Feature at `sp` read from `grid` through the atlas.
pub fn uv_baseline_features(
    atlas: &UvAtlas,
    grid: &FeatureGrid,
    sp: &SurfacePoint,
) -> Result<Vec<f64>, ModelError> {
    grid.sample(uv_at(atlas, sp)?)
}

/// Which face (and where in it) covers each texel center of the atlas.
#[derive(Debug, Clone)]
pub struct UvRaster {
    res: usize,
    cover: Vec<Option<(usize, [f64; 3])>>,
}

impl UvRaster {
    pub fn new(atlas: &UvAtlas, res: usize) -> Self {
        assert!(res >= 2);
        let mut cover = vec![None; res * res];
        for (f, c) in atlas.face_uvs.iter().enumerate() {
            let p = c.map(|k| atlas.uvs[k]);
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            if det.abs() < 1e-18 {
                continue;
            }
            let lo = |a: usize| {
                let m = p.iter().map(|q| q[a]).fold(f64::INFINITY, f64::min);
                ((m * res as f64 - 0.5).floor().max(0.0)) as usize
            };
            let hi = |a: usize| {
                let m = p.iter().map(|q| q[a]).fold(f64::NEG_INFINITY, f64::max);
                ((m * res as f64 - 0.5).ceil().max(0.0) as usize).min(res - 1)
            };
            for j in lo(1)..=hi(1) {
                for i in lo(0)..=hi(0) {
                    if cover[j * res + i].is_some() {
                        continue;
                    }
                    let (x, y) = ((i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64);
                    let b1 = ((x - p[0][0]) * (p[2][1] - p[0][1])
                        - (p[2][0] - p[0][0]) * (y - p[0][1]))
                        / det;
                    let b2 = ((p[1][0] - p[0][0]) * (y - p[0][1])
                        - (x - p[0][0]) * (p[1][1] - p[0][1]))
                        / det;
                    let b0 = 1.0 - b1 - b2;
                    if b0 >= -1e-12 && b1 >= -1e-12 && b2 >= -1e-12 {
                        cover[j * res + i] = Some((f, [b0, b1, b2]));
                    }
                }
            }
        }
        Self { res, cover }
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn covered(&self) -> usize {
        self.cover.iter().filter(|c| c.is_some()).count()
    }

    /// Rasterizes per-vertex features onto the texel grid. Uncovered texels
    /// stay zero.
    pub fn splat<F: AsRef<[f64]>>(&self, faces: &[[usize; 3]], features: &[F]) -> FeatureGrid {
        let channels = features.first().map_or(0, |f| f.as_ref().len());
        let mut grid = FeatureGrid::new(self.res, channels);
        for j in 0..self.res {
            for i in 0..self.res {
                if let Some((f, b)) = self.cover[j * self.res + i] {
                    let t = grid.texel_mut(i, j);
                    for (k, &v) in faces[f].iter().enumerate() {
                        for (o, x) in t.iter_mut().zip(features[v].as_ref()) {
                            *o += b[k] * x;
                        }
                    }
                }
            }
        }
        grid
    }

    /// Linear map from per-vertex features to features sampled at `points`
    /// through splatting and bilinear lookup.
    pub fn resampler(
        &self,
        atlas: &UvAtlas,
        faces: &[[usize; 3]],
        vertices: usize,
        points: &[SurfacePoint],
    ) -> Result<SparseRows, ModelError> {
        let mut rows = SparseRows::new(vertices);
        for sp in points {
            let mut entries = Vec::with_capacity(12);
            for (i, j, w) in bilinear_taps(self.res, uv_at(atlas, sp)?)? {
                if w == 0.0 {
                    continue;
                }
                if let Some((f, b)) = self.cover[j * self.res + i] {
                    for (k, &v) in faces[f].iter().enumerate() {
                        entries.push((v, w * b[k]));
                    }
                }
            }
            rows.push_row(entries);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_humanoid, HumanoidConfig};
    use crate::net::Tensor;

    #[test]
    fn texel_center_reads_exact_texel() {
        let mut grid = FeatureGrid::new(8, 2);
        for j in 0..8 {
            for i in 0..8 {
                grid.texel_mut(i, j)
                    .copy_from_slice(&[(i * 10 + j) as f64 * 0.37, -(j as f64) / 3.0]);
            }
        }
        let atlas = UvAtlas {
            uvs: vec![[3.5 / 8.0, 5.5 / 8.0], [0.9, 0.1], [0.1, 0.1]],
            face_uvs: vec![[0, 1, 2]],
        };
        let sp = SurfacePoint::new(0, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            uv_baseline_features(&atlas, &grid, &sp).unwrap(),
            grid.texel(3, 5)
        );
    }

    #[test]
    fn outside_atlas_is_an_error() {
        let grid = FeatureGrid::new(4, 1);
        assert!(matches!(
            grid.sample([1.2, 0.5]),
            Err(ModelError::OutsideAtlas(_))
        ));
    }

    #[test]
    fn interior_edge_is_continuous() {
        let mut grid = FeatureGrid::new(16, 1);
        for j in 0..16 {
            for i in 0..16 {
                grid.texel_mut(i, j)[0] = (i as f64 * 0.7).sin() + j as f64 * 0.1;
            }
        }
        // two faces sharing the edge (1,2) in UV as well as on the surface
        let atlas = UvAtlas {
            uvs: vec![[0.1, 0.1], [0.8, 0.2], [0.3, 0.9], [0.9, 0.8]],
            face_uvs: vec![[0, 1, 2], [1, 3, 2]],
        };
        let a = SurfacePoint::new(0, [0.0, 0.3, 0.7]).unwrap();
        let b = SurfacePoint::new(1, [0.3, 0.0, 0.7]).unwrap();
        let (fa, fb) = (
            uv_baseline_features(&atlas, &grid, &a).unwrap(),
            uv_baseline_features(&atlas, &grid, &b).unwrap(),
        );
        assert!((fa[0] - fb[0]).abs() < 1e-12);
    }

    #[test]
    fn resampler_matches_splat_then_sample() {
        let body = build_humanoid(&HumanoidConfig {
            around: 6,
            rings: 2,
            ..Default::default()
        })
        .unwrap();
        let atlas = body.uv.clone().unwrap();
        let raster = UvRaster::new(&atlas, 64);
        assert!(raster.covered() > 64 * 64 / 4);
        let feats: Vec<Vec<f64>> = body
            .vertices()
            .iter()
            .map(|v| vec![v.x, v.y * v.z])
            .collect();
        let grid = raster.splat(body.faces(), &feats);
        let points = crate::geom::sample_surface(&body.mesh, 50, 3).unwrap();
        let map = raster
            .resampler(&atlas, body.faces(), body.vertex_count(), &points)
            .unwrap();
        let input = Tensor::from_rows(&feats, 2);
        let out = map.apply(&input);
        for (r, sp) in points.iter().enumerate() {
            let want = uv_baseline_features(&atlas, &grid, sp).unwrap();
            for c in 0..2 {
                assert!((out.get(r, c) - want[c]).abs() < 1e-12);
            }
        }
    }
}

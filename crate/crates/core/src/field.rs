//! Dense fields over the image grid: Mahalanobis distances, opacities,
//! depth-ordered composition, masks and feature splatting.
//!
//! Storage is row-major, `values[h * W + w]`, and cell `(w, h)` (zero-based)
//! sits at normalized coordinate `((w + 1) / W, (h + 1) / H)`. The first
//! coordinate is horizontal.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blob::{chi2_quantile_2dof, quadratic_form, BlobGaussian, ConfidenceLevel};
use crate::math;
use crate::scene::BlobScene;
use crate::{Error, Result};

/// Pixel grid with normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoordGrid {
    pub width: usize,
    pub height: usize,
}

impl CoordGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("grid dimensions must be positive"));
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn coord_of(w: usize, h: usize, width: usize, height: usize) -> (f64, f64) {
        ((w + 1) as f64 / width as f64, (h + 1) as f64 / height as f64)
    }

    #[inline]
    pub fn coord(&self, w: usize, h: usize) -> (f64, f64) {
        Self::coord_of(w, h, self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All coordinates in storage order.
    pub fn coords(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.height).flat_map(move |h| (0..self.width).map(move |w| self.coord(w, h)))
    }
}

/// Make a [`CoordGrid`]; zero dimensions are a domain error.
pub fn make_grid(width: usize, height: usize) -> Result<CoordGrid> {
    CoordGrid::new(width, height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Distance,
    Opacity,
    ComposedOpacity,
    Mask,
    /// Per-cell norm of a feature map.
    FeatureNorm,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Distance => "distance",
            FieldKind::Opacity => "opacity",
            FieldKind::ComposedOpacity => "composed-opacity",
            FieldKind::Mask => "mask",
            FieldKind::FeatureNorm => "feature-norm",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(FieldKind::Distance),
            "opacity" => Ok(FieldKind::Opacity),
            "composed-opacity" => Ok(FieldKind::ComposedOpacity),
            "mask" => Ok(FieldKind::Mask),
            "feature-norm" => Ok(FieldKind::FeatureNorm),
            _ => Err(Error::Domain("unknown field kind")),
        }
    }
}

/// H x W scalar field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub width: usize,
    pub height: usize,
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl FieldMap {
    pub fn filled(width: usize, height: usize, kind: FieldKind, value: f64) -> Self {
        Self {
            width,
            height,
            kind,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, w: usize, h: usize) -> f64 {
        self.values[h * self.width + w]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of cells with value `>= 0.5` (the set cells of a mask).
    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn same_shape(&self, other: &FieldMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &FieldMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(alloc::format!(
                "field {}x{} vs {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            )))
        }
    }
}

/// H x W x d feature field, `values[(h * W + w) * d + k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            values: vec![0.0; width * height * depth],
        }
    }

    #[inline]
    pub fn cell(&self, w: usize, h: usize) -> &[f64] {
        let i = (h * self.width + w) * self.depth;
        &self.values[i..i + self.depth]
    }

    /// Per-cell Euclidean norm, for previews.
    pub fn norm_field(&self) -> FieldMap {
        let values = if self.depth == 0 {
            vec![0.0; self.width * self.height]
        } else {
            self.values
                .chunks_exact(self.depth)
                .map(|c| math::sqrt(c.iter().map(|v| v * v).sum()))
                .collect()
        };
        FieldMap {
            width: self.width,
            height: self.height,
            kind: FieldKind::FeatureNorm,
            values,
        }
    }
}

/// Squared Mahalanobis distance of every grid point to the blob mean.
pub fn mahalanobis_map(grid: &CoordGrid, g: &BlobGaussian) -> Result<FieldMap> {
    let (pxx, pxy, pyy) = g.precision()?;
    let values = grid
        .coords()
        .map(|(x, y)| quadratic_form(pxx, pxy, pyy, x - g.mu[0], y - g.mu[1]))
        .collect();
    Ok(FieldMap {
        width: grid.width,
        height: grid.height,
        kind: FieldKind::Distance,
        values,
    })
}

/// `logistic(-d)` per cell; peaks at 0.5 where `d = 0`.
///
/// Cells farther than roughly `d = 745` underflow to exactly zero.
pub fn opacity_map(distance: &FieldMap) -> FieldMap {
    FieldMap {
        width: distance.width,
        height: distance.height,
        kind: FieldKind::Opacity,
        values: distance.values.iter().map(|&d| math::logistic(-d)).collect(),
    }
}

/// `logistic(s * (chi2(p) - d))`, a sharpened opacity with its half-level on
/// the confidence ellipse. Not used by the default pipeline.
pub fn sharp_opacity_map(distance: &FieldMap, sharpness: f64, p: ConfidenceLevel) -> FieldMap {
    let q = chi2_quantile_2dof(p);
    FieldMap {
        width: distance.width,
        height: distance.height,
        kind: FieldKind::Opacity,
        values: distance
            .values
            .iter()
            .map(|&d| math::logistic(sharpness * (q - d)))
            .collect(),
    }
}

/// Raw opacity of a single blob.
pub fn blob_opacity(grid: &CoordGrid, g: &BlobGaussian) -> Result<FieldMap> {
    Ok(opacity_map(&mahalanobis_map(grid, g)?))
}

/// Composed opacities plus the transmittance left behind all blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    /// One composed-opacity field per input layer, same order.
    pub layers: Vec<FieldMap>,
    /// `prod_j (1 - O_j)` per cell.
    pub transmittance: FieldMap,
}

/// Composes back-to-front ordered opacities: layer `i` is attenuated by
/// every layer in front of it (higher index).
pub fn compose(opacities: &[FieldMap]) -> Result<Composition> {
    let Some(first) = opacities.first() else {
        return Err(Error::Domain("nothing to compose"));
    };
    for o in opacities {
        first.check_shape(o)?;
    }
    let mut transmittance = FieldMap::filled(first.width, first.height, FieldKind::Opacity, 1.0);
    let mut layers = vec![FieldMap::filled(first.width, first.height, FieldKind::ComposedOpacity, 0.0); opacities.len()];
    for (o, out) in opacities.iter().zip(layers.iter_mut()).rev() {
        for ((t, &v), c) in transmittance.values.iter_mut().zip(&o.values).zip(out.values.iter_mut()) {
            *c = v * *t;
            *t *= 1.0 - v;
        }
    }
    Ok(Composition { layers, transmittance })
}

/// Composition of every blob in `scene` over `grid`.
pub fn compose_scene(scene: &BlobScene, grid: &CoordGrid) -> Result<Composition> {
    if scene.is_empty() {
        return Ok(Composition {
            layers: Vec::new(),
            transmittance: FieldMap::filled(grid.width, grid.height, FieldKind::Opacity, 1.0),
        });
    }
    let opacities = scene
        .blobs()
        .iter()
        .map(|b| blob_opacity(grid, b.gaussian()))
        .collect::<Result<Vec<_>>>()?;
    compose(&opacities)
}

/// Composed opacity of every blob in depth order.
pub fn composed_opacities(scene: &BlobScene, grid: &CoordGrid) -> Result<Vec<FieldMap>> {
    Ok(compose_scene(scene, grid)?.layers)
}

/// Broadcasts `f` over the grid weighted by `oc`.
pub fn splat(f: &[f64], oc: &FieldMap) -> FeatureMap {
    let depth = f.len();
    let mut values = Vec::with_capacity(oc.values.len() * depth);
    for &o in &oc.values {
        values.extend(f.iter().map(|&v| o * v));
    }
    FeatureMap {
        width: oc.width,
        height: oc.height,
        depth,
        values,
    }
}

/// Sum of per-blob splats with composed opacities.
pub fn scene_feature_map(scene: &BlobScene, grid: &CoordGrid) -> Result<FeatureMap> {
    let depth = scene
        .feature_dim()
        .ok_or(Error::Domain("scene feature map needs at least one blob"))?;
    let layers = composed_opacities(scene, grid)?;
    let mut out = FeatureMap::zeros(grid.width, grid.height, depth);
    for (blob, oc) in scene.blobs().iter().zip(&layers) {
        let f = blob.feature();
        if f.len() != depth {
            return Err(Error::Shape(alloc::format!(
                "blob `{}` feature dimension {} != {depth}",
                blob.id(),
                f.len()
            )));
        }
        let single = splat(f, oc);
        for (acc, v) in out.values.iter_mut().zip(&single.values) {
            *acc += v;
        }
    }
    Ok(out)
}

/// Interior of the `p`-confidence ellipse: 1 where `d_M <= chi2(p)`.
pub fn blob_mask(g: &BlobGaussian, grid: &CoordGrid, p: ConfidenceLevel) -> Result<FieldMap> {
    let q = chi2_quantile_2dof(p);
    let mut m = mahalanobis_map(grid, g)?;
    m.kind = FieldKind::Mask;
    for v in &mut m.values {
        *v = if *v <= q { 1.0 } else { 0.0 };
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::{ellipse_to_gaussian, BlobEllipse};
    use crate::scene::BlobEntry;
    use alloc::vec;

    fn iso(mu: [f64; 2], var: f64) -> BlobGaussian {
        BlobGaussian::new(mu, [[var, 0.0], [0.0, var]]).unwrap()
    }

    #[test]
    fn grid_coordinates() {
        let g = make_grid(1, 1).unwrap();
        assert_eq!(g.coord(0, 0), (1.0, 1.0));
        let g = make_grid(2, 2).unwrap();
        let c: Vec<_> = g.coords().collect();
        assert_eq!(c, vec![(0.5, 0.5), (1.0, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        let g = make_grid(512, 512).unwrap();
        assert_eq!(g.coord(0, 0), (1.0 / 512.0, 1.0 / 512.0));
        assert!(make_grid(0, 3).is_err());
        assert!(make_grid(3, 0).is_err());
    }

    #[test]
    fn mahalanobis_closed_forms() {
        let grid = make_grid(10, 10).unwrap();
        // mean on the grid point (0.5, 0.5) = cell (4, 4)
        let d = mahalanobis_map(&grid, &iso([0.5, 0.5], 0.01)).unwrap();
        assert_eq!(d.get(4, 4), 0.0);
        // r = 0.1 along x, sigma = 0.1
        assert!((d.get(5, 4) - 1.0).abs() < 1e-12);
        assert!(d.values.iter().all(|&v| v >= 0.0));

        let g = BlobGaussian::new([0.3, 0.4], [[0.04, 0.0], [0.0, 0.01]]).unwrap();
        assert!((g.mahalanobis(0.5, 0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_is_degenerate() {
        let g = BlobGaussian {
            mu: [0.5, 0.5],
            sigma: [[0.01, 0.01], [0.01, 0.01]],
        };
        let grid = make_grid(4, 4).unwrap();
        assert!(matches!(mahalanobis_map(&grid, &g), Err(Error::Degenerate(_))));
    }

    #[test]
    fn opacity_values() {
        let d = FieldMap {
            width: 3,
            height: 1,
            kind: FieldKind::Distance,
            values: vec![0.0, 1.0, 1e6],
        };
        let o = opacity_map(&d);
        assert_eq!(o.values[0], 0.5);
        assert!((o.values[1] - 0.2689414213699951).abs() < 1e-15);
        assert!(o.values[2] >= 0.0 && o.values[2] < 1e-300);
        assert_eq!(o.kind, FieldKind::Opacity);
    }

    #[test]
    fn sharp_opacity_half_level_on_ellipse() {
        let p = ConfidenceLevel::default();
        let d = FieldMap {
            width: 1,
            height: 1,
            kind: FieldKind::Distance,
            values: vec![p.quantile()],
        };
        assert_eq!(sharp_opacity_map(&d, 4.0, p).values[0], 0.5);
    }

    #[test]
    fn composition_hand_values() {
        let half = FieldMap::filled(2, 2, FieldKind::Opacity, 0.5);
        let c = compose(&[half.clone(), half.clone()]).unwrap();
        assert!(c.layers[1].values.iter().all(|&v| v == 0.5));
        assert!(c.layers[0].values.iter().all(|&v| v == 0.25));
        assert!(c.transmittance.values.iter().all(|&v| v == 0.25));

        let single = compose(core::slice::from_ref(&half)).unwrap();
        assert_eq!(single.layers[0].values, half.values);
    }

    #[test]
    fn frontmost_equals_raw_opacity() {
        let p = ConfidenceLevel::default();
        let blobs = vec![
            BlobEntry::new("back", "", BlobEllipse::new(0.4, 0.5, 0.3, 0.2, 0.1).unwrap(), vec![1.0], p).unwrap(),
            BlobEntry::new("front", "", BlobEllipse::new(0.6, 0.5, 0.2, 0.1, 1.0).unwrap(), vec![2.0], p).unwrap(),
        ];
        let scene = BlobScene::new(16, 16, p, blobs).unwrap();
        let layers = composed_opacities(&scene, &scene.grid()).unwrap();
        let raw = blob_opacity(&scene.grid(), scene.blobs()[1].gaussian()).unwrap();
        assert_eq!(layers[1].values, raw.values);
    }

    #[test]
    fn splat_scales_feature() {
        let oc = FieldMap::filled(1, 1, FieldKind::ComposedOpacity, 0.5);
        assert_eq!(splat(&[1.0, 2.0], &oc).values, vec![0.5, 1.0]);
        assert!(splat(&[0.0, 0.0], &oc).values.iter().all(|&v| v == 0.0));
        let zero_depth = splat(&[], &oc);
        assert_eq!((zero_depth.depth, zero_depth.values.len()), (0, 0));
    }

    #[test]
    fn empty_scene_feature_map_is_an_error() {
        let scene = BlobScene::empty(4, 4).unwrap();
        assert!(scene_feature_map(&scene, &scene.grid()).is_err());
        assert!(composed_opacities(&scene, &scene.grid()).unwrap().is_empty());
    }

    #[test]
    fn mask_boundary() {
        let p = ConfidenceLevel::default();
        let grid = make_grid(10, 10).unwrap();
        let g = ellipse_to_gaussian(&BlobEllipse::new(0.5, 0.5, 0.2, 0.2, 0.0).unwrap(), p);
        let m = blob_mask(&g, &grid, p).unwrap();
        assert_eq!(m.get(4, 4), 1.0);
        assert!(m.values.iter().all(|&v| v == 0.0 || v == 1.0));
        // cell 7 sits at x = 0.8, outside; cell 5 at x = 0.6, inside
        assert_eq!(m.get(7, 4), 0.0);
        assert_eq!(m.get(5, 4), 1.0);
    }
}

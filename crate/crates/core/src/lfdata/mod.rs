//! Light-field containers, dataset ingestion and synthetic scenes.

mod manifest;
mod pfm;
mod synth;

pub use manifest::{load_lightfield, load_png, save_png16, write_manifest, Manifest};
pub use pfm::{read_pfm, write_pfm, write_pfm_to};
pub use synth::{synth_lightfield, SceneKind, SceneSpec, Texture};

use crate::error::{Error, Result};

/// Position of a sub-aperture view in the view grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ViewCoordinate {
    /// Column in the view grid.
    pub u: usize,
    /// Row in the view grid.
    pub v: usize,
}

impl ViewCoordinate {
    pub const fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension("image must be nonempty".into()));
        }
        if !(channels == 1 || channels == 3) {
            return Err(Error::Dimension(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for c in 0..channels {
                    data.push(f(col, row, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize, c: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + c]
    }

    /// Rec. 601 luma for RGB images; single-channel images are returned as is.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// A two-plane light field: a regular grid of sub-aperture views.
#[derive(Debug, Clone)]
pub struct LightField {
    views: Vec<Image>,
    grid_rows: usize,
    grid_cols: usize,
    center: ViewCoordinate,
    /// Pixels of shift per unit view offset, as declared by the dataset.
    pub disparity_scale: f64,
}

impl LightField {
    /// Build from views in row-major (v-major) order.
    pub fn new(views: Vec<Image>, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        if grid_rows == 0 || grid_cols == 0 {
            return Err(Error::LightField("view grid must be nonempty".into()));
        }
        if views.len() != grid_rows * grid_cols {
            return Err(Error::LightField(format!(
                "{} views for a {grid_rows}x{grid_cols} grid",
                views.len()
            )));
        }
        let first = &views[0];
        for (i, view) in views.iter().enumerate() {
            if view.width != first.width
                || view.height != first.height
                || view.channels != first.channels
            {
                return Err(Error::LightField(format!(
                    "view {i} is {}x{}x{}, expected {}x{}x{}",
                    view.width, view.height, view.channels, first.width, first.height, first.channels
                )));
            }
            if view.data.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::LightField(format!("view {i} has values outside [0, 1]")));
            }
        }
        Ok(Self {
            views,
            grid_rows,
            grid_cols,
            center: ViewCoordinate::new((grid_cols - 1) / 2, (grid_rows - 1) / 2),
            disparity_scale: 1.0,
        })
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn center(&self) -> ViewCoordinate {
        self.center
    }

    pub fn width(&self) -> usize {
        self.views[0].width
    }

    pub fn height(&self) -> usize {
        self.views[0].height
    }

    pub fn channels(&self) -> usize {
        self.views[0].channels
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn view_image(&self, vc: ViewCoordinate) -> Result<&Image> {
        if vc.u >= self.grid_cols || vc.v >= self.grid_rows {
            return Err(Error::ViewIndex {
                u: vc.u,
                v: vc.v,
                cols: self.grid_cols,
                rows: self.grid_rows,
            });
        }
        Ok(&self.views[vc.v * self.grid_cols + vc.u])
    }

    pub fn center_view(&self) -> &Image {
        &self.views[self.center.v * self.grid_cols + self.center.u]
    }

    /// All view coordinates in row-major order.
    pub fn coordinates(&self) -> impl Iterator<Item = ViewCoordinate> + '_ {
        (0..self.grid_rows).flat_map(move |v| (0..self.grid_cols).map(move |u| ViewCoordinate::new(u, v)))
    }

    /// Non-center views in row-major order: the candidate set for selection.
    pub fn side_views(&self) -> Vec<ViewCoordinate> {
        self.coordinates().filter(|&vc| vc != self.center).collect()
    }

    /// Offset of `vc` from the center view in view-grid steps `(du, dv)`.
    pub fn offset(&self, vc: ViewCoordinate) -> (f64, f64) {
        (
            vc.u as f64 - self.center.u as f64,
            vc.v as f64 - self.center.v as f64,
        )
    }

    pub fn to_gray(&self) -> LightField {
        LightField {
            views: self.views.iter().map(Image::to_gray).collect(),
            ..self.clone()
        }
    }
}

/// Disparity in pixels per unit view offset, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    /// All pixels valid. Values must be finite.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::with_mask(width, height, values, valid)
    }

    pub fn with_mask(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} values / {} mask entries for a {width}x{height} map",
                values.len(),
                valid.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .zip(&valid)
            .position(|(v, &ok)| ok && !v.is_finite())
        {
            return Err(Error::NonFinite {
                row: i / width.max(1),
                col: i % width.max(1),
            });
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(col, row));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    /// Min and max over valid pixels, `None` if nothing is valid.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> LightField {
        let views = (0..rows * cols)
            .map(|i| Image::from_fn(2, 2, 1, |_, _, _| i as f64 / (rows * cols) as f64).unwrap())
            .collect();
        LightField::new(views, rows, cols).unwrap()
    }

    #[test]
    fn center_of_odd_grids() {
        assert_eq!(grid(3, 3).center(), ViewCoordinate::new(1, 1));
        assert_eq!(grid(9, 9).center(), ViewCoordinate::new(4, 4));
        assert_eq!(grid(5, 3).center(), ViewCoordinate::new(1, 2));
    }

    #[test]
    fn view_lookup() {
        let lf = grid(3, 3);
        assert_eq!(lf.view_image(lf.center()).unwrap(), lf.center_view());
        assert_eq!(lf.view_image(ViewCoordinate::new(0, 0)).unwrap().get(0, 0, 0), 0.0);
        assert!(matches!(
            lf.view_image(ViewCoordinate::new(3, 0)),
            Err(Error::ViewIndex { .. })
        ));
        assert_eq!(lf.side_views().len(), 8);
    }

    #[test]
    fn mismatched_views_rejected() {
        let a = Image::from_fn(2, 2, 1, |_, _, _| 0.0).unwrap();
        let b = Image::from_fn(3, 2, 1, |_, _, _| 0.0).unwrap();
        assert!(LightField::new(vec![a.clone(), b], 1, 2).is_err());
        assert!(LightField::new(vec![a.clone(); 3], 2, 2).is_err());
        let bad = Image::new(1, 1, 1, vec![1.5]).unwrap();
        assert!(LightField::new(vec![bad], 1, 1).is_err());
    }

    #[test]
    fn disparity_map_rejects_nan_in_valid_region() {
        assert!(DisparityMap::new(2, 1, vec![0.0, f64::NAN]).is_err());
        let m = DisparityMap::with_mask(2, 1, vec![0.0, f64::NAN], vec![true, false]).unwrap();
        assert_eq!(m.range(), Some((0.0, 0.0)));
    }
}

//! Manifest-driven view-stack ingestion and PNG view I/O.
//!
//! ```text
//! grid_rows = 9
//! grid_cols = 9
//! disparity_scale = 1.0
//! gt = gt_disp_lowres.pfm
//! views = input_Cam000.png, input_Cam001.png,
//!         input_Cam002.png, ...
//! ```
//!
//! Views are listed row-major (v-major). Relative paths resolve against the
//! manifest's directory.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::{read_pfm, DisparityMap, Image, LightField};
use crate::error::{Error, Result};
use crate::kv::{split_list, KvFile};

const KEYS: &[&str] = &["grid_rows", "grid_cols", "views", "gt", "disparity_scale"];

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub views: Vec<PathBuf>,
    pub gt: Option<PathBuf>,
    pub disparity_scale: f64,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KvFile::read(path)?;
        for e in &kv.entries {
            if !KEYS.contains(&e.key.as_str()) {
                return Err(kv.error(e, format!("unknown manifest key `{}`", e.key)));
            }
        }
        let required = |key: &str| {
            kv.get(key).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("missing `{key}`"),
            })
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let grid_rows = kv.parse_value(required("grid_rows")?)?;
        let grid_cols = kv.parse_value(required("grid_cols")?)?;
        let views = split_list(&required("views")?.value)
            .into_iter()
            .map(|p| base.join(p))
            .collect();
        let gt = kv.get("gt").map(|e| base.join(&e.value));
        let disparity_scale = match kv.get("disparity_scale") {
            Some(e) => kv.parse_value(e)?,
            None => 1.0,
        };
        Ok(Self {
            grid_rows,
            grid_cols,
            views,
            gt,
            disparity_scale,
        })
    }

    pub fn load_ground_truth(&self) -> Result<Option<DisparityMap>> {
        self.gt.as_deref().map(read_pfm).transpose()
    }
}

/// Write a manifest whose paths are relative to `dir`.
pub fn write_manifest(
    path: &Path,
    grid_rows: usize,
    grid_cols: usize,
    views: &[String],
    gt: Option<&str>,
    disparity_scale: f64,
) -> Result<()> {
    let mut text = format!("grid_rows = {grid_rows}\ngrid_cols = {grid_cols}\ndisparity_scale = {disparity_scale}\n");
    if let Some(gt) = gt {
        text.push_str(&format!("gt = {gt}\n"));
    }
    text.push_str("views =\n");
    for row in views.chunks(grid_cols.max(1)) {
        text.push_str("  ");
        text.push_str(&row.join(", "));
        text.push_str(",\n");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Load the views a manifest lists into a [`LightField`].
pub fn load_lightfield(manifest: &Path) -> Result<LightField> {
    let m = Manifest::read(manifest)?;
    if m.views.len() != m.grid_rows * m.grid_cols {
        return Err(Error::LightField(format!(
            "{}: {} views listed for a {}x{} grid",
            manifest.display(),
            m.views.len(),
            m.grid_rows,
            m.grid_cols
        )));
    }
    let views = m.views.iter().map(|p| load_png(p)).collect::<Result<Vec<_>>>()?;
    let mut lf = LightField::new(views, m.grid_rows, m.grid_cols)?;
    lf.disparity_scale = m.disparity_scale;
    Ok(lf)
}

/// Decode an 8- or 16-bit PNG into a normalized gray or RGB image.
/// Alpha is dropped.
pub fn load_png(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let (channels, data): (usize, Vec<f64>) = match (gray, img.color().bytes_per_pixel() / img.color().channel_count() as u8) {
        (true, 1) => (1, img.into_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (true, _) => (1, img.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        (false, 1) => (3, img.into_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (false, _) => (3, img.into_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
    };
    Image::new(w, h, channels, data)
}

/// Save as a 16-bit PNG (gray or RGB, matching the image).
pub fn save_png16(img: &Image, path: &Path) -> Result<()> {
    let quant: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quant).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quant).expect("sized buffer"))
    };
    dynamic.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfdata::ViewCoordinate;

    fn write_grid(dir: &Path, rows: usize, cols: usize, listed: usize) -> PathBuf {
        let mut names = Vec::new();
        for i in 0..rows * cols {
            let img = Image::from_fn(4, 3, 1, |x, y, _| ((i + x + y) % 7) as f64 / 7.0).unwrap();
            let name = format!("v{i:03}.png");
            save_png16(&img, &dir.join(&name)).unwrap();
            names.push(name);
        }
        let path = dir.join("scene.txt");
        write_manifest(&path, rows, cols, &names[..listed], None, 1.0).unwrap();
        path
    }

    #[test]
    fn nine_by_nine_center() {
        let dir = tempfile::tempdir().unwrap();
        let lf = load_lightfield(&write_grid(dir.path(), 9, 9, 81)).unwrap();
        assert_eq!(lf.center(), ViewCoordinate::new(4, 4));
        assert_eq!((lf.width(), lf.height(), lf.channels()), (4, 3, 1));
    }

    #[test]
    fn three_by_three_center_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let lf = load_lightfield(&write_grid(dir.path(), 3, 3, 9)).unwrap();
        assert_eq!(lf.center(), ViewCoordinate::new(1, 1));
        let first = load_png(&dir.path().join("v000.png")).unwrap();
        assert_eq!(lf.view_image(ViewCoordinate::new(0, 0)).unwrap(), &first);
        // Deterministic ingestion.
        let again = load_lightfield(&dir.path().join("scene.txt")).unwrap();
        assert_eq!(again.center_view(), lf.center_view());
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_lightfield(&write_grid(dir.path(), 9, 9, 80)).unwrap_err();
        assert!(err.to_string().contains("80 views"), "{err}");
    }

    #[test]
    fn missing_view_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "grid_rows = 1\ngrid_cols = 1\nviews = nope.png\n").unwrap();
        let err = load_lightfield(&path).unwrap_err();
        assert!(err.to_string().contains("nope.png"));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "grid_rows = 1\ngrid_cols = 1\ncolour = 3\nviews = a.png\n").unwrap();
        assert!(Manifest::read(&path).is_err());
    }

    #[test]
    fn png16_roundtrip_precision() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 4, 3, |x, y, c| (x * 7 + y * 3 + c) as f64 / 40.0).unwrap();
        let path = dir.path().join("a.png");
        save_png16(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}

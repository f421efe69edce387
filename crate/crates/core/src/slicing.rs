//! Grid decomposition of an image into fixed-size fragments.
//!
//! The grid is anchored at the top-left corner. Partial fragments can only
//! occur on the right and bottom edges; the two [`EdgeMode`]s either drop
//! them or keep them with zero padding. Fragment order is row-major and is
//! part of the contract: downstream weighted sums accumulate in this order.

use crate::error::{Error, Result};
use crate::imaging::{crop_region, ImageRgb, Region};

/// How fragments that extend past the image boundary are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// Emit only fragments fully inside the image.
    DropPartial,
    /// Emit every grid cell, zero-padding the area outside the image.
    PadPartial,
}

impl EdgeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeMode::DropPartial => "drop_partial",
            EdgeMode::PadPartial => "pad_partial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "drop_partial" => Ok(EdgeMode::DropPartial),
            "pad_partial" => Ok(EdgeMode::PadPartial),
            other => Err(Error::InvalidConfig(format!(
                "unknown edge mode {other:?}, expected drop_partial or pad_partial"
            ))),
        }
    }
}

/// One cell of the slicing grid.
///
/// `source` is the cell's intersection with the image, so `valid_fraction`
/// is the share of the `patch_size` square covered by real pixels. Interior
/// cells have fraction 1; in drop mode every emitted cell does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentSpec {
    pub grid_row: u32,
    pub grid_col: u32,
    pub source: Region,
    pub patch_size: u32,
    pub valid_fraction: f64,
}

/// Plan the fragment grid for an image of the given dimensions.
///
/// Drop mode yields `floor(w/s) x floor(h/s)` fragments, pad mode
/// `ceil(w/s) x ceil(h/s)`, ordered row-major by `(grid_row, grid_col)`.
pub fn slice_grid(width: u32, height: u32, patch_size: u32, mode: EdgeMode) -> Result<Vec<FragmentSpec>> {
    if patch_size == 0 {
        return Err(Error::InvalidPatchSize);
    }
    let (cols, rows) = match mode {
        EdgeMode::DropPartial => (width / patch_size, height / patch_size),
        EdgeMode::PadPartial => (width.div_ceil(patch_size), height.div_ceil(patch_size)),
    };
    if cols == 0 || rows == 0 {
        return Err(Error::EmptyGrid {
            width,
            height,
            patch_size,
        });
    }
    let patch_area = patch_size as u64 * patch_size as u64;
    let mut specs = Vec::with_capacity(cols as usize * rows as usize);
    for grid_row in 0..rows {
        let y = grid_row * patch_size;
        let h = patch_size.min(height - y);
        for grid_col in 0..cols {
            let x = grid_col * patch_size;
            let w = patch_size.min(width - x);
            let source = Region::new(x, y, w, h);
            specs.push(FragmentSpec {
                grid_row,
                grid_col,
                source,
                patch_size,
                valid_fraction: source.area() as f64 / patch_area as f64,
            });
        }
    }
    Ok(specs)
}

/// Materialize one fragment as a `patch_size x patch_size` image.
///
/// The source pixels land in the top-left corner; in pad mode the remainder
/// stays black. The fragment description must have been produced for this
/// image's dimensions.
pub fn extract_fragment(img: &ImageRgb, spec: &FragmentSpec, mode: EdgeMode) -> Result<ImageRgb> {
    check_spec(img, spec, mode)?;
    let source = crop_region(img, spec.source)?;
    if spec.source.w == spec.patch_size && spec.source.h == spec.patch_size {
        return Ok(source);
    }
    let mut out = ImageRgb::filled(spec.patch_size, spec.patch_size, [0, 0, 0])?;
    for y in 0..source.height() {
        for x in 0..source.width() {
            out.set_pixel(x, y, source.pixel(x, y));
        }
    }
    Ok(out)
}

fn check_spec(img: &ImageRgb, spec: &FragmentSpec, mode: EdgeMode) -> Result<()> {
    if spec.patch_size == 0 {
        return Err(Error::InvalidPatchSize);
    }
    spec.source.check_bounds(img).map_err(|_| {
        Error::InconsistentSpec(format!(
            "fragment source {:?} does not fit inside a {}x{} image",
            spec.source,
            img.width(),
            img.height()
        ))
    })?;
    if spec.source.w > spec.patch_size || spec.source.h > spec.patch_size {
        return Err(Error::InconsistentSpec(format!(
            "fragment source {:?} exceeds patch size {}",
            spec.source, spec.patch_size
        )));
    }
    let patch_area = spec.patch_size as u64 * spec.patch_size as u64;
    let expected = spec.source.area() as f64 / patch_area as f64;
    if spec.valid_fraction != expected {
        return Err(Error::InconsistentSpec(format!(
            "valid_fraction {} does not match source geometry (expected {expected})",
            spec.valid_fraction
        )));
    }
    if mode == EdgeMode::DropPartial && spec.valid_fraction != 1.0 {
        return Err(Error::InconsistentSpec(
            "drop mode cannot carry a partial fragment".to_string(),
        ));
    }
    Ok(())
}

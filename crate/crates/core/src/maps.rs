//! Per-pixel float grids with validity masks.

use crate::error::MapError;

/// Row-major float grid with a validity mask.
///
/// Values at invalid pixels are unspecified; readers must consult the mask.
/// Equality compares shape, mask and the valid values only.
#[derive(Clone, Debug)]
pub struct FloatMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

/// Camera-frame depth `z` in meters; valid pixels are strictly positive.
pub type DepthMap = FloatMap;

/// Per-pixel depth variance in m².
pub type VarianceMap = FloatMap;

impl PartialEq for FloatMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.valid == other.valid
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a == b)
    }
}

impl FloatMap {
    /// All-invalid map.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![f64::NAN; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Map whose pixels are valid exactly where `values` is finite.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, MapError> {
        if values.len() != width * height {
            return Err(MapError::BadLength {
                len: values.len(),
                width,
                height,
            });
        }
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, MapError> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(MapError::BadLength {
                len: values.len().min(valid.len()),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// Builds a map by evaluating `f(col, row)`; `None` marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut map = Self::invalid(width, height);
        for row in 0..height {
            for col in 0..width {
                if let Some(v) = f(col, row) {
                    map.set(col, row, v);
                }
            }
        }
        map
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.at(self.index(col, row))
    }

    /// Value at a flat index, if valid.
    #[inline]
    pub fn at(&self, idx: usize) -> Option<f64> {
        if self.valid[idx] {
            Some(self.values[idx])
        } else {
            None
        }
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        let idx = self.index(col, row);
        self.set_at(idx, value);
    }

    #[inline]
    pub fn set_at(&mut self, idx: usize, value: f64) {
        self.values[idx] = value;
        self.valid[idx] = true;
    }

    #[inline]
    pub fn invalidate_at(&mut self, idx: usize) {
        self.values[idx] = f64::NAN;
        self.valid[idx] = false;
    }

    #[inline]
    pub fn is_valid_at(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `(flat index, value)` for every valid pixel, in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter_map(|(i, (&v, &ok))| ok.then_some((i, v)))
    }

    /// Applies `f` to every valid value.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        for (v, &ok) in out.values.iter_mut().zip(&self.valid) {
            if ok {
                *v = f(*v);
            }
        }
        out
    }

    pub fn same_shape(&self, other: &FloatMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &FloatMap) -> Result<(), MapError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(MapError::DimensionMismatch {
                want_w: self.width,
                want_h: self.height,
                got_w: other.width,
                got_h: other.height,
            })
        }
    }

    /// Values with invalid pixels encoded as NaN.
    pub fn to_nan_encoded(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { v } else { f64::NAN })
            .collect()
    }
}

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension min-max scaler onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn fit(matrix: ArrayView2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::InsufficientData(
                "cannot fit a scaler on zero rows".into(),
            ));
        }
        let min = matrix
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let max = matrix
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self { min, max })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dims() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} dimensions, got {cols}",
                self.dims()
            )));
        }
        Ok(())
    }

    /// Maps into `[-1, 1]`; constant dimensions map to 0 and values outside
    /// the fitted range are clamped.
    pub fn transform(&self, matrix: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(matrix.ncols())?;
        let mut out = matrix.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            col.mapv_inplace(|x| {
                if span > 0.0 {
                    (2.0 * (x - lo) / span - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            });
        }
        Ok(out)
    }

    pub fn inverse(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(scaled.ncols())?;
        let mut out = scaled.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            col.mapv_inplace(|y| lo + (y + 1.0) * (hi - lo) / 2.0);
        }
        Ok(out)
    }
}

/// Fits a scaler on `matrix` and returns the scaled copy with its parameters.
pub fn minmax_scale(matrix: ArrayView2<f64>) -> Result<(Array2<f64>, ScalerParams)> {
    let params = ScalerParams::fit(matrix)?;
    Ok((params.transform(matrix)?, params))
}

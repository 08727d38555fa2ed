//! Threshold-sweep IoU accuracy.
//!
//! The groundtruth specular map (8-bit scaled L*) is binarized at every
//! integer level of a range; the IoU of each binarization against the
//! predicted mask is averaged over the range. Scene accuracy is the mean over
//! views.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::colorspace::Gray8Image;
use crate::detect_single::SpecularMask;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Inclusive range of 8-bit binarization levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdRange {
    lo: u8,
    hi: u8,
}

impl Default for ThresholdRange {
    fn default() -> Self {
        Self { lo: 156, hi: 255 }
    }
}

impl ThresholdRange {
    pub fn new(lo: u8, hi: u8) -> Result<Self> {
        if lo > hi {
            return Err(Error::invalid(
                "threshold range",
                format!("lo {lo} above hi {hi}"),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> u8 {
        self.lo
    }

    pub fn hi(&self) -> u8 {
        self.hi
    }

    pub fn len(&self) -> usize {
        usize::from(self.hi - self.lo) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn levels(&self) -> impl Iterator<Item = u8> {
        self.lo..=self.hi
    }
}

/// How a groundtruth level is compared against the sweep threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdComparison {
    /// `gt >= T`, so saturated groundtruth still matches at `T = 255`.
    #[default]
    AtLeast,
    /// `gt > T`.
    Above,
}

impl ThresholdComparison {
    #[inline]
    pub fn passes(self, value: u8, threshold: u8) -> bool {
        match self {
            Self::AtLeast => value >= threshold,
            Self::Above => value > threshold,
        }
    }
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// `|a and b| / |a or b|`, defined as 1 when both masks are empty.
pub fn iou<T: Real>(a: &SpecularMask, b: &SpecularMask) -> Result<T> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(ratio(inter, union))
}

#[inline]
fn ratio<T: Real>(inter: usize, union: usize) -> T {
    if union == 0 {
        T::one()
    } else {
        T::lit(inter as f64) / T::lit(union as f64)
    }
}

/// Mean IoU of `predicted` against the groundtruth binarized at every level of `range`.
///
/// Runs in one pass over the pixels using level histograms.
pub fn view_accuracy<T: Real>(
    gt: &Gray8Image,
    predicted: &SpecularMask,
    range: ThresholdRange,
    comparison: ThresholdComparison,
) -> Result<T> {
    check_dims(gt.dims(), predicted.dims())?;
    let mut all = [0usize; 257];
    let mut hit = [0usize; 257];
    let mut predicted_count = 0usize;
    for (&v, &p) in gt.data().iter().zip(predicted.data()) {
        all[v as usize] += 1;
        if p {
            hit[v as usize] += 1;
            predicted_count += 1;
        }
    }
    // Suffix sums: count of pixels with level >= k.
    for k in (0..256).rev() {
        all[k] += all[k + 1];
        hit[k] += hit[k + 1];
    }
    let mut sum = T::zero();
    for t in range.levels() {
        let first = match comparison {
            ThresholdComparison::AtLeast => t as usize,
            ThresholdComparison::Above => t as usize + 1,
        };
        let positive = all[first];
        let inter = hit[first];
        sum = sum + ratio::<T>(inter, positive + predicted_count - inter);
    }
    Ok(sum / T::lit(range.len() as f64))
}

/// Mean of the per-view accuracies.
pub fn scene_accuracy<T: Real>(per_view: &[T]) -> Result<T> {
    if per_view.is_empty() {
        return Err(Error::Empty("scene accuracy over no views"));
    }
    Ok(per_view.iter().copied().sum::<T>() / T::lit(per_view.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewScore<T> {
    pub view_id: String,
    pub accuracy: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport<T> {
    views: Vec<ViewScore<T>>,
    overall: T,
}

impl<T: Real> EvalReport<T> {
    pub fn new(views: Vec<ViewScore<T>>) -> Result<Self> {
        let accs: Vec<T> = views.iter().map(|v| v.accuracy).collect();
        let overall = scene_accuracy(&accs)?;
        Ok(Self { views, overall })
    }

    pub fn views(&self) -> &[ViewScore<T>] {
        &self.views
    }

    pub fn overall(&self) -> T {
        self.overall
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// `A_O/#views`, e.g. `0.0502/336`.
    pub fn summary_line(&self) -> String {
        format!("{:.4}/{}", self.overall, self.views.len())
    }

    /// `view_id,accuracy` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["view_id", "accuracy"])?;
        for v in &self.views {
            w.write_record([v.view_id.as_str(), &format!("{:.12}", v.accuracy)])?;
        }
        w.flush()
    }
}

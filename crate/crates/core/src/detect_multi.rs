//! Face-based multi-view specular filtering.
//!
//! Per view, every visible face is labeled specular-potential or diffuse by
//! majority vote of the single-view mask over its pixels. Then, for every
//! ordered pair of views `(i, j)`, a luminance threshold
//! `t = mu(d) + phi * mu(s)` is computed from the faces both views see
//! (`mu` is a trimmed mean), and a specular-potential face of view `i` is kept
//! only if its mean luminance in `i` exceeds its mean luminance in `j` by at
//! least `t`. A face failing any pair is dropped.
//!
//! Labels used for the pair statistics always come from the initial
//! per-view labeling, so the outcome does not depend on pair order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::LuminanceImage;
use crate::detect_single::SpecularMask;
use crate::error::{Error, Result};
use crate::geometry::{mean_over, FaceProjectionTable};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig<T> {
    /// Weight of the specular-face mean in the pair threshold.
    pub phi: T,
    /// Fraction trimmed from each tail before averaging.
    pub trim_fraction: T,
    /// A face is specular-potential when strictly more than this fraction of its pixels is masked.
    pub mask_majority: T,
}

impl<T: Real> Default for AggregationConfig<T> {
    fn default() -> Self {
        Self {
            phi: T::lit(0.5),
            trim_fraction: T::lit(0.1),
            mask_majority: T::lit(0.5),
        }
    }
}

impl<T: Real> AggregationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi >= T::zero() && self.phi.is_finite()) {
            return Err(Error::invalid("aggregation config", format!("phi {} must be >= 0", self.phi)));
        }
        if !(self.trim_fraction >= T::zero() && self.trim_fraction < T::lit(0.5)) {
            return Err(Error::invalid(
                "aggregation config",
                format!("trim fraction {} not in [0, 0.5)", self.trim_fraction),
            ));
        }
        if !(self.mask_majority > T::zero() && self.mask_majority <= T::one()) {
            return Err(Error::invalid(
                "aggregation config",
                format!("mask majority {} not in (0, 1]", self.mask_majority),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceClass {
    Hidden,
    Specular,
    Diffuse,
}

/// Per-view split of the visible faces into specular-potential and diffuse sets.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceLabeling<T> {
    view: usize,
    classes: Vec<FaceClass>,
    mean_luminance: Vec<Option<T>>,
}

impl<T: Real> FaceLabeling<T> {
    /// Assembles a labeling directly. A face is hidden exactly when it has no mean luminance.
    pub fn from_parts(
        view: usize,
        classes: Vec<FaceClass>,
        mean_luminance: Vec<Option<T>>,
    ) -> Result<Self> {
        if classes.len() != mean_luminance.len() {
            return Err(Error::invalid(
                "face labeling",
                format!("{} classes vs {} luminances", classes.len(), mean_luminance.len()),
            ));
        }
        for (k, (c, l)) in classes.iter().zip(&mean_luminance).enumerate() {
            if (*c == FaceClass::Hidden) != l.is_none() {
                return Err(Error::invalid(
                    "face labeling",
                    format!("face {k} is {c:?} but luminance is {l:?}"),
                ));
            }
        }
        Ok(Self {
            view,
            classes,
            mean_luminance,
        })
    }

    pub fn view(&self) -> usize {
        self.view
    }

    pub fn face_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, face: usize) -> FaceClass {
        self.classes[face]
    }

    pub fn mean_luminance(&self, face: usize) -> Option<T> {
        self.mean_luminance[face]
    }

    pub fn is_visible(&self, face: usize) -> bool {
        self.classes[face] != FaceClass::Hidden
    }

    pub fn specular_faces(&self) -> impl Iterator<Item = u32> + '_ {
        self.faces_of(FaceClass::Specular)
    }

    pub fn diffuse_faces(&self) -> impl Iterator<Item = u32> + '_ {
        self.faces_of(FaceClass::Diffuse)
    }

    fn faces_of(&self, class: FaceClass) -> impl Iterator<Item = u32> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == class)
            .map(|(k, _)| k as u32)
    }
}

pub fn classify_faces<T: Real>(
    mask: &SpecularMask,
    table: &FaceProjectionTable<T>,
    img: &LuminanceImage<T>,
    cfg: &AggregationConfig<T>,
) -> Result<FaceLabeling<T>> {
    cfg.validate()?;
    for dims in [mask.dims(), img.dims()] {
        if dims != table.dims() {
            return Err(Error::DimensionMismatch {
                expected: table.dims(),
                actual: dims,
            });
        }
    }
    let n = table.face_count();
    let mut classes = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for face in 0..n {
        let pixels = table.pixels(face);
        match mean_over(pixels, img) {
            None => {
                classes.push(FaceClass::Hidden);
                means.push(None);
            }
            Some(mean) => {
                let masked = pixels.iter().filter(|p| mask.get(p.row, p.col)).count();
                let fraction = T::lit(masked as f64) / T::lit(pixels.len() as f64);
                classes.push(if fraction > cfg.mask_majority {
                    FaceClass::Specular
                } else {
                    FaceClass::Diffuse
                });
                means.push(Some(mean));
            }
        }
    }
    FaceLabeling::from_parts(table.view(), classes, means)
}

/// Mean after dropping `floor(trim_fraction * n)` values from each end.
///
/// Falls back to the plain mean when trimming would leave nothing.
pub fn trimmed_mean<T: Real>(values: &[T], trim_fraction: T) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Empty("trimmed mean of no values"));
    }
    let n = values.len();
    let k = (trim_fraction.max(T::zero()) * T::lit(n as f64))
        .floor()
        .to_usize()
        .unwrap_or(0);
    let mean = |xs: &[T]| xs.iter().copied().sum::<T>() / T::lit(xs.len() as f64);
    if k == 0 || 2 * k >= n {
        return Ok(mean(values));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(mean(&sorted[k..n - k]))
}

/// `t = mu(d) + phi * mu(s)`; `None` when either set is empty (the pair is skipped).
pub fn specular_threshold<T: Real>(
    specular: &[T],
    diffuse: &[T],
    cfg: &AggregationConfig<T>,
) -> Option<T> {
    let mu_s = trimmed_mean(specular, cfg.trim_fraction).ok()?;
    let mu_d = trimmed_mean(diffuse, cfg.trim_fraction).ok()?;
    Some(mu_d + cfg.phi * mu_s)
}

/// One failed comparison that removed `face` from the view's specular set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exclusion<T> {
    pub face: u32,
    pub other_view: usize,
    pub threshold: T,
    /// Luminance in this view minus luminance in `other_view`.
    pub difference: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairThreshold<T> {
    pub other_view: usize,
    pub threshold: T,
    pub common_specular: usize,
    pub common_diffuse: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedPair {
    pub other_view: usize,
    pub common_specular: usize,
    pub common_diffuse: usize,
}

/// Outcome of the cross-view filter for one reference view.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViewVerdict<T> {
    pub view: usize,
    /// Specular-potential faces before filtering, ascending.
    pub initial: Vec<u32>,
    /// Faces that passed every pair, ascending.
    pub surviving: Vec<u32>,
    /// Every failed (face, pair) comparison, sorted by face then other view.
    pub exclusions: Vec<Exclusion<T>>,
    pub thresholds: Vec<PairThreshold<T>>,
    pub skipped: Vec<SkippedPair>,
}

impl<T> ViewVerdict<T> {
    pub fn is_surviving(&self, face: u32) -> bool {
        self.surviving.binary_search(&face).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecularVerdict<T> {
    pub views: Vec<ViewVerdict<T>>,
    /// Fewer than two views: nothing could be compared.
    pub degenerate: bool,
}

impl<T> SpecularVerdict<T> {
    pub fn surviving_count(&self) -> usize {
        self.views.iter().map(|v| v.surviving.len()).sum()
    }
}

/// Filters the specular set of view `reference` against `others`, in the given order.
pub fn filter_view<T: Real>(
    labelings: &[FaceLabeling<T>],
    reference: usize,
    others: &[usize],
    cfg: &AggregationConfig<T>,
) -> ViewVerdict<T> {
    let li = &labelings[reference];
    let initial: Vec<u32> = li.specular_faces().collect();
    let mut excluded = vec![false; initial.len()];
    let mut exclusions = Vec::new();
    let mut thresholds = Vec::new();
    let mut skipped = Vec::new();
    let mut s_vals = Vec::new();
    let mut d_vals = Vec::new();

    for &j in others {
        if j == reference {
            continue;
        }
        let lj = &labelings[j];
        s_vals.clear();
        d_vals.clear();
        for face in 0..li.face_count() {
            let (Some(a), Some(b)) = (li.mean_luminance[face], lj.mean_luminance[face]) else {
                continue;
            };
            let pair_mean = (a + b) * T::lit(0.5);
            match li.classes[face] {
                FaceClass::Specular => s_vals.push(pair_mean),
                FaceClass::Diffuse => d_vals.push(pair_mean),
                FaceClass::Hidden => {}
            }
        }
        let Some(t) = specular_threshold(&s_vals, &d_vals, cfg) else {
            skipped.push(SkippedPair {
                other_view: j,
                common_specular: s_vals.len(),
                common_diffuse: d_vals.len(),
            });
            continue;
        };
        thresholds.push(PairThreshold {
            other_view: j,
            threshold: t,
            common_specular: s_vals.len(),
            common_diffuse: d_vals.len(),
        });
        for (slot, &face) in initial.iter().enumerate() {
            let a = li.mean_luminance[face as usize].expect("specular faces are visible");
            // Not seen from j: no evidence either way.
            let Some(b) = lj.mean_luminance[face as usize] else {
                continue;
            };
            let difference = a - b;
            if !(difference >= t) {
                excluded[slot] = true;
                exclusions.push(Exclusion {
                    face,
                    other_view: j,
                    threshold: t,
                    difference,
                });
            }
        }
    }

    exclusions.sort_by_key(|e| (e.face, e.other_view));
    thresholds.sort_by_key(|p| p.other_view);
    skipped.sort_by_key(|p| p.other_view);
    let surviving = initial
        .iter()
        .zip(&excluded)
        .filter(|(_, &x)| !x)
        .map(|(&f, _)| f)
        .collect();
    ViewVerdict {
        view: li.view,
        initial,
        surviving,
        exclusions,
        thresholds,
        skipped,
    }
}

/// All-pairs filter over every view; reference views are processed in parallel.
pub fn cross_view_filter<T: Real>(
    labelings: &[FaceLabeling<T>],
    cfg: &AggregationConfig<T>,
) -> Result<SpecularVerdict<T>> {
    cfg.validate()?;
    if let Some(first) = labelings.first() {
        if let Some(bad) = labelings.iter().find(|l| l.face_count() != first.face_count()) {
            return Err(Error::invalid(
                "labelings",
                format!(
                    "view {} has {} faces, view {} has {}",
                    bad.view,
                    bad.face_count(),
                    first.view,
                    first.face_count()
                ),
            ));
        }
    }
    let all: Vec<usize> = (0..labelings.len()).collect();
    let views = all
        .par_iter()
        .map(|&i| filter_view(labelings, i, &all, cfg))
        .collect();
    Ok(SpecularVerdict {
        views,
        degenerate: labelings.len() < 2,
    })
}

/// Pixels owned by surviving faces.
pub fn render_verdict_mask<T: Real>(
    verdict: &ViewVerdict<T>,
    table: &FaceProjectionTable<T>,
) -> SpecularMask {
    let mut keep = vec![false; table.face_count()];
    for &f in &verdict.surviving {
        if let Some(k) = keep.get_mut(f as usize) {
            *k = true;
        }
    }
    let data = table
        .owner_map()
        .iter()
        .map(|&f| keep.get(f as usize).copied().unwrap_or(false))
        .collect();
    SpecularMask::new(table.width(), table.height(), data).expect("table dimensions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FaceProjectionTable;

    fn labeling(view: usize, entries: &[(FaceClass, Option<f64>)]) -> FaceLabeling<f64> {
        FaceLabeling::from_parts(
            view,
            entries.iter().map(|e| e.0).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
        .unwrap()
    }

    fn strip_table(owner: Vec<u32>, faces: usize) -> FaceProjectionTable<f64> {
        let n = owner.len() as u32;
        let depth = vec![1.0; owner.len()];
        FaceProjectionTable::from_owner_map(0, n, 1, faces, owner, &depth).unwrap()
    }

    #[test]
    fn majority_is_strict() {
        let table = strip_table(vec![0; 10].into_iter().chain(vec![1; 10]).collect(), 2);
        let mut bits = vec![false; 20];
        bits[..6].iter_mut().for_each(|b| *b = true); // face 0: 6 of 10
        bits[10..15].iter_mut().for_each(|b| *b = true); // face 1: 5 of 10
        let mask = SpecularMask::new(20, 1, bits).unwrap();
        let img = LuminanceImage::filled(20, 1, 50.0).unwrap();
        let l = classify_faces(&mask, &table, &img, &AggregationConfig::default()).unwrap();
        assert_eq!(l.class(0), FaceClass::Specular);
        assert_eq!(l.class(1), FaceClass::Diffuse);
        assert_eq!(l.mean_luminance(1), Some(50.0));
    }

    #[test]
    fn empty_mask_labels_everything_diffuse() {
        let table = strip_table(vec![0, 0, 1, u32::MAX], 3);
        let img = LuminanceImage::filled(4, 1, 10.0).unwrap();
        let l = classify_faces(&SpecularMask::empty(4, 1), &table, &img, &AggregationConfig::default())
            .unwrap();
        assert_eq!(l.specular_faces().count(), 0);
        assert_eq!(l.diffuse_faces().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(l.class(2), FaceClass::Hidden);
    }

    #[test]
    fn classify_rejects_mismatched_dims() {
        let table = strip_table(vec![0, 0], 1);
        let img = LuminanceImage::filled(2, 1, 10.0).unwrap();
        let mask = SpecularMask::empty(3, 1);
        assert!(classify_faces(&mask, &table, &img, &AggregationConfig::default()).is_err());
    }

    #[test]
    fn trimmed_mean_cases() {
        assert_eq!(trimmed_mean(&[5.0], 0.4).unwrap(), 5.0);
        assert_eq!(trimmed_mean(&[1.0, 2.0, 3.0, 4.0, 100.0], 0.2).unwrap(), 3.0);
        assert_eq!(trimmed_mean(&[1.0, 2.0, 3.0], 0.0).unwrap(), 2.0);
        assert_eq!(trimmed_mean(&[100.0, 1.0, 3.0, 2.0, 4.0], 0.2).unwrap(), 3.0);
        // floor(0.49 * 2) = 0, nothing trimmed
        assert_eq!(trimmed_mean(&[1.0, 3.0], 0.49).unwrap(), 2.0);
        assert!(trimmed_mean::<f64>(&[], 0.1).is_err());
    }

    #[test]
    fn threshold_cases() {
        let cfg = AggregationConfig {
            phi: 0.5,
            trim_fraction: 0.0,
            mask_majority: 0.5,
        };
        assert_eq!(specular_threshold(&[80.0], &[40.0], &cfg), Some(80.0));
        assert_eq!(specular_threshold(&[90.0], &[10.0, 20.0, 30.0], &cfg), Some(65.0));
        let off = AggregationConfig { phi: 0.0, ..cfg };
        assert_eq!(specular_threshold(&[90.0], &[10.0, 20.0, 30.0], &off), Some(20.0));
        assert_eq!(specular_threshold(&[], &[1.0], &cfg), None);
        assert_eq!(specular_threshold(&[1.0], &[], &cfg), None);
    }

    fn no_trim() -> AggregationConfig<f64> {
        AggregationConfig {
            trim_fraction: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn strong_view_dependent_face_survives() {
        use FaceClass::*;
        // Pair means: diffuse 20, specular (100 + 10) / 2 = 55, so t = 47.5.
        let a = labeling(0, &[(Specular, Some(100.0)), (Diffuse, Some(20.0))]);
        let b = labeling(1, &[(Diffuse, Some(10.0)), (Diffuse, Some(20.0))]);
        let v = cross_view_filter(&[a, b], &no_trim()).unwrap();
        assert_eq!(v.views[0].surviving, vec![0]);
        assert!((v.views[0].thresholds[0].threshold - (20.0 + 0.5 * 55.0)).abs() < 1e-12);
    }

    #[test]
    fn view_invariant_face_is_excluded() {
        use FaceClass::*;
        let a = labeling(0, &[(Specular, Some(70.0)), (Diffuse, Some(20.0))]);
        let b = labeling(1, &[(Specular, Some(70.0)), (Diffuse, Some(20.0))]);
        let v = cross_view_filter(&[a, b], &no_trim()).unwrap();
        assert!(v.views[0].surviving.is_empty());
        assert!(v.views[1].surviving.is_empty());
        let ex = &v.views[0].exclusions[0];
        assert_eq!((ex.face, ex.other_view, ex.difference), (0, 1, 0.0));
    }

    #[test]
    fn unseen_face_is_kept_and_pairs_without_diffuse_skip() {
        use FaceClass::*;
        let a = labeling(0, &[(Specular, Some(90.0)), (Specular, Some(95.0)), (Diffuse, Some(20.0))]);
        let b = labeling(1, &[(Hidden, None), (Diffuse, Some(94.0)), (Diffuse, Some(20.0))]);
        let c = labeling(2, &[(Diffuse, Some(30.0)), (Diffuse, Some(94.0)), (Hidden, None)]);
        let v = cross_view_filter(&[a, b, c], &no_trim()).unwrap();
        // Pair (0, 2) shares no diffuse face: skipped.
        assert_eq!(v.views[0].skipped.len(), 1);
        assert_eq!(v.views[0].skipped[0].other_view, 2);
        // Face 0 is hidden in view 1, face 1 fails against view 1.
        assert_eq!(v.views[0].surviving, vec![0]);
    }

    #[test]
    fn single_view_passes_through() {
        use FaceClass::*;
        let a = labeling(0, &[(Specular, Some(90.0)), (Diffuse, Some(20.0))]);
        let v = cross_view_filter(&[a], &AggregationConfig::default()).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.views[0].surviving, vec![0]);
    }

    #[test]
    fn mismatched_face_counts_rejected() {
        use FaceClass::*;
        let a = labeling(0, &[(Diffuse, Some(1.0))]);
        let b = labeling(1, &[(Diffuse, Some(1.0)), (Diffuse, Some(1.0))]);
        assert!(cross_view_filter(&[a, b], &AggregationConfig::default()).is_err());
    }

    #[test]
    fn verdict_mask_is_union_of_surviving_pixels() {
        let table = strip_table(vec![0, 0, 1, 1, 1, 2, u32::MAX], 3);
        let verdict = ViewVerdict::<f64> {
            view: 0,
            initial: vec![0, 1, 2],
            surviving: vec![0, 1],
            exclusions: vec![],
            thresholds: vec![],
            skipped: vec![],
        };
        let m = render_verdict_mask(&verdict, &table);
        assert_eq!(m.count(), table.pixel_count(0) + table.pixel_count(1));
        assert_eq!(m.data(), &[true, true, true, true, true, false, false]);
        let none = ViewVerdict::<f64> {
            surviving: vec![],
            ..verdict
        };
        assert_eq!(render_verdict_mask(&none, &table).count(), 0);
    }
}

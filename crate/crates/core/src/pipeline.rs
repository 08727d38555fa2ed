//! End-to-end detection and evaluation over a set of views of one mesh.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::{srgb_to_lab_luminance, LuminanceImage};
use crate::detect_multi::{
    classify_faces, cross_view_filter, render_verdict_mask, AggregationConfig, FaceLabeling,
    SpecularVerdict,
};
use crate::detect_single::{detect_single_view, SingleViewConfig, SpecularMask};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_faces, CameraView, FaceProjectionTable, TriangleMesh};
use crate::io::{self, SceneManifest};
use crate::metric::{view_accuracy, EvalReport, ThresholdComparison, ThresholdRange, ViewScore};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct DetectionConfig<T> {
    pub aggregation: AggregationConfig<T>,
    pub single_view: SingleViewConfig,
}

impl<T: Real> Default for DetectionConfig<T> {
    fn default() -> Self {
        Self {
            aggregation: AggregationConfig::default(),
            single_view: SingleViewConfig::default(),
        }
    }
}

impl<T: Real> DetectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.aggregation.validate()?;
        self.single_view.validate()
    }
}

#[derive(Clone, Debug)]
pub struct ViewInput<T> {
    pub id: String,
    pub camera: CameraView<T>,
    pub luminance: LuminanceImage<T>,
}

#[derive(Clone, Debug)]
pub struct ViewDetection<T> {
    pub id: String,
    pub table: FaceProjectionTable<T>,
    pub single_view: SpecularMask,
    pub labeling: FaceLabeling<T>,
    /// Pixels of the faces that survived the cross-view filter.
    pub mask: SpecularMask,
}

#[derive(Clone, Debug)]
pub struct Detection<T> {
    pub views: Vec<ViewDetection<T>>,
    pub verdict: SpecularVerdict<T>,
}

/// Single-view masks, face labels and the cross-view verdict for every view.
pub fn detect<T: Real>(
    mesh: &TriangleMesh<T>,
    views: &[ViewInput<T>],
    cfg: &DetectionConfig<T>,
) -> Result<Detection<T>> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::Empty("detection over no views"));
    }
    let staged = views
        .par_iter()
        .enumerate()
        .map(|(k, v)| {
            let dims = (v.camera.width(), v.camera.height());
            if dims != v.luminance.dims() {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: v.luminance.dims(),
                });
            }
            let table = rasterize_faces(mesh, &v.camera, k);
            let single = detect_single_view(&v.luminance, &cfg.single_view)?;
            let labeling = classify_faces(&single, &table, &v.luminance, &cfg.aggregation)?;
            Ok((table, single, labeling))
        })
        .collect::<Result<Vec<_>>>()?;
    let labelings: Vec<FaceLabeling<T>> = staged.iter().map(|s| s.2.clone()).collect();
    let verdict = cross_view_filter(&labelings, &cfg.aggregation)?;
    let views = staged
        .into_iter()
        .zip(views)
        .zip(&verdict.views)
        .map(|(((table, single_view, labeling), input), v)| ViewDetection {
            id: input.id.clone(),
            mask: render_verdict_mask(v, &table),
            table,
            single_view,
            labeling,
        })
        .collect();
    Ok(Detection { views, verdict })
}

/// Loads the mesh and every view of a scene directory.
pub fn load_views<T: Real>(manifest: &SceneManifest) -> Result<(TriangleMesh<T>, Vec<ViewInput<T>>)> {
    let mesh = io::load_ply(&manifest.mesh)?;
    let views = manifest
        .views
        .par_iter()
        .map(|entry| {
            let rgb = io::read_rgb_png(&entry.image)?;
            let camera = io::load_camera(&entry.camera, rgb.width(), rgb.height())?;
            Ok(ViewInput {
                id: entry.id.clone(),
                camera,
                luminance: srgb_to_lab_luminance(&rgb),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mesh, views))
}

#[derive(Serialize)]
struct ViewProvenance<'a, T> {
    id: &'a str,
    single_view_pixels: usize,
    mask_pixels: usize,
    #[serde(flatten)]
    verdict: &'a crate::detect_multi::ViewVerdict<T>,
}

#[derive(Serialize)]
struct Provenance<'a, T> {
    degenerate: bool,
    config: &'a DetectionConfig<T>,
    views: Vec<ViewProvenance<'a, T>>,
}

/// Exclusion provenance as pretty JSON.
pub fn provenance_json<T: Real + Serialize>(det: &Detection<T>, cfg: &DetectionConfig<T>) -> String {
    let doc = Provenance {
        degenerate: det.verdict.degenerate,
        config: cfg,
        views: det
            .views
            .iter()
            .zip(&det.verdict.views)
            .map(|(v, verdict)| ViewProvenance {
                id: &v.id,
                single_view_pixels: v.single_view.count(),
                mask_pixels: v.mask.count(),
                verdict,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("provenance is plain data")
}

/// Writes `Mask_<id>.png`, `SingleView_<id>.png` and `provenance.json` into `out`.
pub fn write_detection<T: Real + Serialize>(
    det: &Detection<T>,
    cfg: &DetectionConfig<T>,
    out: impl AsRef<Path>,
) -> Result<()> {
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for v in &det.views {
        io::write_mask_png(&v.mask, out.join(io::image_file_name("Mask", &v.id)))?;
        io::write_mask_png(&v.single_view, out.join(io::image_file_name("SingleView", &v.id)))?;
    }
    let path = out.join("provenance.json");
    std::fs::write(&path, provenance_json(det, cfg)).map_err(|e| Error::io(&path, e))
}

/// Scores predicted masks against a scene's groundtruth.
///
/// `masks` pairs view ids with predictions; views without groundtruth are skipped.
pub fn evaluate<T: Real>(
    manifest: &SceneManifest,
    masks: &[(String, SpecularMask)],
    range: ThresholdRange,
    comparison: ThresholdComparison,
) -> Result<EvalReport<T>> {
    let scores = masks
        .par_iter()
        .filter_map(|(id, mask)| {
            let gt_path = manifest.view(id)?.specular.as_ref()?;
            Some(io::read_gray_png(gt_path).and_then(|gt| {
                Ok(ViewScore {
                    view_id: id.clone(),
                    accuracy: view_accuracy(&gt, mask, range, comparison)?,
                })
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(scores)
}

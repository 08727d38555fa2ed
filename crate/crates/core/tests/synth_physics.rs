use speclight_core::colorspace::{lightness_from_y, lightness_to_level, srgb_to_lab_luminance};
use speclight_core::geometry::{face_mean_luminance, normalize, rasterize_faces};
use speclight_core::synth::{build_scene, render_direct, ObjectKind};

#[test]
fn diffuse_shading_ignores_the_viewer() {
    let s = build_scene::<f64>(4, 2).unwrap();
    let m = s.materials[10];
    let p = [2.0, 1.0, 0.0];
    let n = [0.0, 0.0, 1.0];
    let (d0, _) = s.shade(p, n, [0.3, 0.2, 1.7], &m);
    for eye in [[3.5, 3.0, 2.0], [2.0, 1.0, 0.5], [0.1, 3.9, 2.9]] {
        assert_eq!(s.shade(p, n, eye, &m).0, d0);
    }
}

#[test]
fn diffuse_faces_look_the_same_from_every_camera() {
    let s = build_scene::<f64>(4, 4).unwrap().without_specular();
    let tables: Vec<_> = (0..4).map(|k| rasterize_faces(&s.mesh, &s.cameras[k], k)).collect();
    let lum: Vec<_> = (0..4)
        .map(|k| srgb_to_lab_luminance::<f64>(&render_direct(&s, k).unwrap().image))
        .collect();
    let mut diffs = Vec::new();
    for f in 0..s.mesh.face_count() {
        let seen: Vec<f64> = (0..4)
            .filter(|&k| tables[k].pixel_count(f) >= 10)
            .filter_map(|k| face_mean_luminance(&tables[k], &lum[k], f).unwrap())
            .collect();
        for a in 0..seen.len() {
            for b in a + 1..seen.len() {
                diffs.push((seen[a] - seen[b]).abs() * 255.0 / 100.0);
            }
        }
    }
    diffs.sort_by(f64::total_cmp);
    assert!(diffs.len() > 100);
    // Faces crossing shadow edges or partly occluded sample different parts of
    // the face, so only the typical face is held to one level.
    assert!(diffs[diffs.len() / 2] <= 1.0, "median {}", diffs[diffs.len() / 2]);
}

#[test]
fn glossy_highlights_move_between_cameras() {
    let s = build_scene::<f64>(2, 4).unwrap();
    let glossy = s.faces_of_kind(ObjectKind::Glossy);
    let renders: Vec<_> = (0..4).map(|k| render_direct(&s, k).unwrap()).collect();
    let mut spread = 0.0f64;
    for &f in &glossy {
        let means: Vec<f64> = renders
            .iter()
            .filter_map(|r| {
                let px: Vec<f64> = r
                    .face_ids
                    .iter()
                    .zip(r.specular_gt.data())
                    .filter(|(&id, _)| id == f)
                    .map(|(_, &g)| f64::from(g))
                    .collect();
                (!px.is_empty()).then(|| px.iter().sum::<f64>() / px.len() as f64)
            })
            .collect();
        if means.len() >= 2 {
            let hi = means.iter().cloned().fold(f64::MIN, f64::max);
            let lo = means.iter().cloned().fold(f64::MAX, f64::min);
            spread = spread.max(hi - lo);
        }
    }
    assert!(spread > 100.0, "largest cross-view change {spread}");
}

#[test]
fn render_maps_are_consistent() {
    let s = build_scene::<f64>(6, 2).unwrap();
    for k in 0..2 {
        let r = render_direct(&s, k).unwrap();
        let table = rasterize_faces(&s.mesh, &s.cameras[k], k);
        let n = 128 * 128;
        assert_eq!(r.image.data().len(), 3 * n);
        assert_eq!(r.specular_gt.data().len(), n);
        assert_eq!((r.depth.len(), r.normals.len(), r.face_ids.len()), (n, n, n));
        let agree = table.owner_map().iter().zip(&r.face_ids).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.995 * n as f64, "{agree}/{n}");
        for i in 0..n {
            let y = r.specular_luminance[i].clamp(0.0, 1.0);
            assert_eq!(r.specular_gt.data()[i], lightness_to_level(lightness_from_y(y)));
            let len: f64 = r.normals[i].iter().map(|c| c * c).sum();
            assert!(r.face_ids[i] == u32::MAX || (len - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn normals_face_the_camera() {
    let s = build_scene::<f64>(8, 2).unwrap();
    let r = render_direct(&s, 0).unwrap();
    for i in (0..r.face_ids.len()).step_by(13) {
        let row = (i / 128) as f64 + 0.5;
        let col = (i % 128) as f64 + 0.5;
        let d = normalize(s.cameras[0].ray_direction(row, col));
        let dn: f64 = (0..3).map(|c| d[c] * r.normals[i][c]).sum();
        assert!(dn < 0.0);
    }
}

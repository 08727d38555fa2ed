use proptest::prelude::*;
use speclight_core::geometry::{rasterize_faces, CameraView, Mat4, TriangleMesh};

fn quarter_turn(k: u8) -> [[f64; 3]; 3] {
    match k % 4 {
        0 => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        1 => [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        2 => [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
        _ => [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    }
}

fn camera() -> CameraView<f64> {
    // Looks along world +y from y = -6; right is +x, down is -z.
    CameraView::new(
        Mat4::intrinsics(32.0, 32.0, 16.0, 16.0),
        Mat4::rigid(
            [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]],
            [0.5, -6.0, 0.25],
        ),
        32,
        32,
    )
    .unwrap()
}

fn dyadic() -> impl Strategy<Value = f64> {
    (-128i32..128).prop_map(|v| f64::from(v) / 64.0)
}

fn mesh_strategy() -> impl Strategy<Value = TriangleMesh<f64>> {
    prop::collection::vec([dyadic(), dyadic(), dyadic()], 9..45).prop_filter_map("degenerate", |vs| {
        let n = vs.len() / 3 * 3;
        let faces = (0..n as u32 / 3).map(|f| [3 * f, 3 * f + 1, 3 * f + 2]).collect();
        TriangleMesh::new(vs[..n].to_vec(), faces).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Quarter turns and integer shifts keep every coordinate exact, so the
    // pixel sets must match exactly.
    #[test]
    fn exact_rigid_motion_keeps_pixel_sets(mesh in mesh_strategy(), k in 0u8..4, t in [-8i32..8, -8i32..8, -8i32..8]) {
        let cam = camera();
        let m = Mat4::rigid(quarter_turn(k), t.map(f64::from));
        let before = rasterize_faces(&mesh, &cam, 0);
        let after = rasterize_faces(&mesh.transformed(&m), &cam.transformed(&m).unwrap(), 0);
        prop_assert_eq!(before.owner_map(), after.owner_map());
        for f in 0..mesh.face_count() {
            prop_assert_eq!(before.pixels(f), after.pixels(f));
        }
    }
}

#[test]
fn general_rigid_motion_keeps_nearly_all_pixels() {
    let cam = camera();
    let mut vs = Vec::new();
    let mut faces = Vec::new();
    for i in 0..30u32 {
        let x = f64::from(i % 6) * 0.3 - 0.8;
        let z = f64::from(i / 6) * 0.3 - 0.6;
        let y = 0.07 * f64::from(i);
        vs.extend([[x, y, z], [x + 0.5, y + 0.02, z], [x, y - 0.01, z + 0.5]]);
        faces.push([3 * i, 3 * i + 1, 3 * i + 2]);
    }
    let mesh = TriangleMesh::new(vs, faces).unwrap();
    let (a, b) = (0.7f64, -0.4f64);
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0], [0.0, b.cos(), -b.sin()], [0.0, b.sin(), b.cos()]];
    let m = Mat4::rigid(rz, [1.3, -0.2, 2.9]).mul(&Mat4::rigid(rx, [0.0; 3]));
    let before = rasterize_faces(&mesh, &cam, 0);
    let after = rasterize_faces(&mesh.transformed(&m), &cam.transformed(&m).unwrap(), 0);
    let same = before.owner_map().iter().zip(after.owner_map()).filter(|(x, y)| x == y).count();
    assert!(same as f64 >= 0.995 * 1024.0, "{same}/1024");
}

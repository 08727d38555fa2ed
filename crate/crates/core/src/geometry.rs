//! Mesh and camera model, plus face backprojection.
//!
//! Camera space follows the usual vision convention: +x right, +y down,
//! +z forward. A pixel `(row, col)` covers `[col, col + 1) x [row, row + 1)`
//! in continuous image coordinates and is sampled at its center.
//!
//! [`rasterize_faces`] is a plain z-buffer: near-plane clipping, no back-face
//! culling, top-left fill rule, and depth ties resolved towards the lower
//! face index.

use crate::colorspace::LuminanceImage;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Point3<T> = [T; 3];

/// Camera-space depth of the near clipping plane.
pub const NEAR_PLANE: f64 = 1e-4;

const NO_FACE: u32 = u32::MAX;

#[inline]
pub fn sub<T: Real>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add<T: Real>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale<T: Real>(a: Point3<T>, s: T) -> Point3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<T: Real>(a: Point3<T>, b: Point3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: Point3<T>, b: Point3<T>) -> Point3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn normalize<T: Real>(a: Point3<T>) -> Point3<T> {
    let n = dot(a, a).sqrt();
    scale(a, T::one() / n)
}

/// Row-major 4x4 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4<T>(pub [[T; 4]; 4]);

impl<T: Real> Mat4<T> {
    pub fn identity() -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Mat4(m)
    }

    pub fn from_rows(rows: [[T; 4]; 4]) -> Self {
        Mat4(rows)
    }

    /// Pinhole intrinsics embedded in a 4x4 matrix.
    pub fn intrinsics(fx: T, fy: T, cx: T, cy: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat4([
            [fx, z, cx, z],
            [z, fy, cy, z],
            [z, z, o, z],
            [z, z, z, o],
        ])
    }

    /// Rigid transform from a rotation (rows) and a translation.
    pub fn rigid(rotation: [[T; 3]; 3], translation: Point3<T>) -> Self {
        let (o, z) = (T::one(), T::zero());
        let r = rotation;
        Mat4([
            [r[0][0], r[0][1], r[0][2], translation[0]],
            [r[1][0], r[1][1], r[1][2], translation[1]],
            [r[2][0], r[2][1], r[2][2], translation[2]],
            [z, z, z, o],
        ])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = [[T::zero(); 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Mat4(out)
    }

    #[inline]
    pub fn transform_point(&self, p: Point3<T>) -> Point3<T> {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
        ]
    }

    #[inline]
    pub fn transform_vector(&self, v: Point3<T>) -> Point3<T> {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn rotation(&self) -> [[T; 3]; 3] {
        let m = &self.0;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> Point3<T> {
        [self.0[0][3], self.0[1][3], self.0[2][3]]
    }

    /// Inverse of a rigid transform: `[R^T | -R^T t]`.
    pub fn rigid_inverse(&self) -> Self {
        let r = self.rotation();
        let t = self.translation();
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let nt = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Mat4::rigid(rt, nt)
    }

    /// Largest deviation of `R^T R` from identity, and of the last row from `[0 0 0 1]`.
    pub fn rigidity_error(&self) -> T {
        let r = self.rotation();
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let v: T = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((v - target).abs());
            }
        }
        let last = self.0[3];
        for (k, v) in last.iter().enumerate() {
            let target = if k == 3 { T::one() } else { T::zero() };
            worst = worst.max((*v - target).abs());
        }
        worst
    }
}

/// Triangle mesh shared by every view.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T> {
    vertices: Vec<Point3<T>>,
    faces: Vec<[u32; 3]>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid(
                "mesh",
                format!("{} vertices, need at least 3", vertices.len()),
            ));
        }
        if vertices.len() >= NO_FACE as usize || faces.len() >= NO_FACE as usize {
            return Err(Error::invalid("mesh", "too many elements for u32 indexing"));
        }
        let n = vertices.len() as u32;
        for (k, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {k} {f:?} indexes past {n} vertices"),
                ));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {k} {f:?} repeats a vertex"),
                ));
            }
        }
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("mesh", format!("non-finite vertex {v:?}")));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Point3<T>; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    /// Applies a rigid (or any affine) transform to every vertex.
    pub fn transformed(&self, m: &Mat4<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| m.transform_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Intrinsics plus camera-to-world pose for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView<T> {
    intrinsics: Mat4<T>,
    camera_to_world: Mat4<T>,
    world_to_camera: Mat4<T>,
    width: u32,
    height: u32,
}

impl<T: Real> CameraView<T> {
    pub fn new(
        intrinsics: Mat4<T>,
        camera_to_world: Mat4<T>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera", "image dimensions must be positive"));
        }
        let k = &intrinsics.0;
        let (fx, fy, cx, cy) = (k[0][0], k[1][1], k[0][2], k[1][2]);
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::invalid(
                "camera",
                format!("focal lengths must be positive, got fx={fx} fy={fy}"),
            ));
        }
        let (w, h) = (T::lit(f64::from(width)), T::lit(f64::from(height)));
        if !(cx > T::zero() && cx < w && cy > T::zero() && cy < h) {
            return Err(Error::invalid(
                "camera",
                format!("principal point ({cx}, {cy}) outside {width}x{height}"),
            ));
        }
        let err = camera_to_world.rigidity_error();
        if !(err <= T::lit(1e-6)) {
            return Err(Error::invalid(
                "camera",
                format!("pose is not rigid (orthonormality error {err})"),
            ));
        }
        Ok(Self {
            intrinsics,
            world_to_camera: camera_to_world.rigid_inverse(),
            camera_to_world,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` roughly opposite to image rows.
    pub fn look_at(
        eye: Point3<T>,
        target: Point3<T>,
        up: Point3<T>,
        horizontal_fov_deg: T,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = normalize(sub(target, eye));
        let right = cross(forward, up);
        if dot(right, right) <= T::lit(1e-12) {
            return Err(Error::invalid("camera", "view direction parallel to up vector"));
        }
        let right = normalize(right);
        let down = cross(forward, right);
        let rotation = [
            [right[0], down[0], forward[0]],
            [right[1], down[1], forward[1]],
            [right[2], down[2], forward[2]],
        ];
        let half = T::lit(0.5);
        let (w, h) = (T::lit(f64::from(width)), T::lit(f64::from(height)));
        let f = w * half / (horizontal_fov_deg.to_radians() * half).tan();
        Self::new(
            Mat4::intrinsics(f, f, w * half, h * half),
            Mat4::rigid(rotation, eye),
            width,
            height,
        )
    }

    pub fn intrinsics(&self) -> &Mat4<T> {
        &self.intrinsics
    }

    pub fn camera_to_world(&self) -> &Mat4<T> {
        &self.camera_to_world
    }

    pub fn world_to_camera(&self) -> &Mat4<T> {
        &self.world_to_camera
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn center(&self) -> Point3<T> {
        self.camera_to_world.translation()
    }

    /// Same camera after moving the whole world by `m` (rigid).
    pub fn transformed(&self, m: &Mat4<T>) -> Result<Self> {
        Self::new(
            self.intrinsics,
            m.mul(&self.camera_to_world),
            self.width,
            self.height,
        )
    }

    /// Projects a camera-space point, assuming `z > 0`. Returns `(row, col)`.
    #[inline]
    fn project_camera_space(&self, p: Point3<T>) -> (T, T) {
        let k = &self.intrinsics.0;
        let inv_z = T::one() / p[2];
        let col = (k[0][0] * p[0] + k[0][1] * p[1] + k[0][2] * p[2] + k[0][3]) * inv_z;
        let row = (k[1][0] * p[0] + k[1][1] * p[1] + k[1][2] * p[2] + k[1][3]) * inv_z;
        (row, col)
    }

    /// World-space ray direction through continuous pixel coordinates (z = 1 in camera space).
    pub fn ray_direction(&self, row: T, col: T) -> Point3<T> {
        let k = &self.intrinsics.0;
        let (fx, fy, cx, cy, skew) = (k[0][0], k[1][1], k[0][2], k[1][2], k[0][1]);
        let y = (row - cy) / fy;
        let x = (col - cx - skew * y) / fx;
        self.camera_to_world.transform_vector([x, y, T::one()])
    }
}

/// Projected position of a vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenPoint<T> {
    pub row: T,
    pub col: T,
    /// Camera-space z.
    pub depth: T,
}

/// Pinhole projection; `None` when the point is at or behind the camera plane.
pub fn project_vertex<T: Real>(v: Point3<T>, cam: &CameraView<T>) -> Option<ScreenPoint<T>> {
    let p = cam.world_to_camera.transform_point(v);
    if !(p[2] > T::zero()) {
        return None;
    }
    let (row, col) = cam.project_camera_space(p);
    Some(ScreenPoint {
        row,
        col,
        depth: p[2],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
}

/// Per-view visibility of every mesh face: the pixels where it is the front-most surface.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceProjectionTable<T> {
    view: usize,
    width: u32,
    height: u32,
    /// Owning face per pixel, `u32::MAX` when uncovered.
    owner: Vec<u32>,
    offsets: Vec<u32>,
    pixels: Vec<Pixel>,
    mean_depth: Vec<T>,
}

impl<T: Real> FaceProjectionTable<T> {
    /// Builds the table from a per-pixel owner map and depth buffer.
    pub fn from_owner_map(
        view: usize,
        width: u32,
        height: u32,
        face_count: usize,
        owner: Vec<u32>,
        depth: &[T],
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if owner.len() != n || depth.len() != n {
            return Err(Error::invalid(
                "projection table",
                format!("owner/depth buffers do not match {width}x{height}"),
            ));
        }
        let mut counts = vec![0u32; face_count + 1];
        let mut depth_sum = vec![T::zero(); face_count];
        for (&f, &d) in owner.iter().zip(depth) {
            if f == NO_FACE {
                continue;
            }
            if f as usize >= face_count {
                return Err(Error::invalid(
                    "projection table",
                    format!("face {f} out of range for {face_count} faces"),
                ));
            }
            counts[f as usize + 1] += 1;
            depth_sum[f as usize] = depth_sum[f as usize] + d;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut pixels = vec![Pixel { row: 0, col: 0 }; offsets[face_count] as usize];
        for (i, &f) in owner.iter().enumerate() {
            if f == NO_FACE {
                continue;
            }
            let slot = &mut cursor[f as usize];
            pixels[*slot as usize] = Pixel {
                row: (i / width as usize) as u32,
                col: (i % width as usize) as u32,
            };
            *slot += 1;
        }
        let mean_depth = (0..face_count)
            .map(|f| {
                let c = offsets[f + 1] - offsets[f];
                if c == 0 {
                    T::nan()
                } else {
                    depth_sum[f] / T::lit(f64::from(c))
                }
            })
            .collect();
        Ok(Self {
            view,
            width,
            height,
            owner,
            offsets,
            pixels,
            mean_depth,
        })
    }

    pub fn view(&self) -> usize {
        self.view
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn face_count(&self) -> usize {
        self.mean_depth.len()
    }

    /// Visible pixels of `face`, row-major.
    pub fn pixels(&self, face: usize) -> &[Pixel] {
        &self.pixels[self.offsets[face] as usize..self.offsets[face + 1] as usize]
    }

    pub fn pixel_count(&self, face: usize) -> usize {
        (self.offsets[face + 1] - self.offsets[face]) as usize
    }

    pub fn is_visible(&self, face: usize) -> bool {
        self.pixel_count(face) > 0
    }

    pub fn mean_depth(&self, face: usize) -> Option<T> {
        let d = self.mean_depth[face];
        (!d.is_nan()).then_some(d)
    }

    /// Face owning `(row, col)`, if any.
    #[inline]
    pub fn owner(&self, row: u32, col: u32) -> Option<u32> {
        let f = self.owner[row as usize * self.width as usize + col as usize];
        (f != NO_FACE).then_some(f)
    }

    /// Raw owner map, `u32::MAX` for uncovered pixels.
    pub fn owner_map(&self) -> &[u32] {
        &self.owner
    }

    pub fn covered_pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn visible_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.face_count()).filter(|&f| self.is_visible(f))
    }
}

#[derive(Clone, Copy)]
struct ScreenVertex<T> {
    x: T,
    y: T,
    inv_z: T,
}

/// Clips a camera-space triangle against `z >= near` (Sutherland-Hodgman).
fn clip_near<T: Real>(tri: [Point3<T>; 3], near: T, out: &mut Vec<Point3<T>>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a[2] >= near;
        let b_in = b[2] >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a[2]) / (b[2] - a[2]);
            let mut p = add(a, scale(sub(b, a), t));
            p[2] = near;
            out.push(p);
        }
    }
}

#[inline]
fn edge<T: Real>(a: &ScreenVertex<T>, b: &ScreenVertex<T>, px: T, py: T) -> T {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Top or left edge for a triangle with positive [`edge`] area in y-down coordinates.
#[inline]
fn is_top_left<T: Real>(a: &ScreenVertex<T>, b: &ScreenVertex<T>) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    (dy == T::zero() && dx > T::zero()) || dy < T::zero()
}

struct ZBuffer<T> {
    width: u32,
    height: u32,
    depth: Vec<T>,
    owner: Vec<u32>,
}

impl<T: Real> ZBuffer<T> {
    fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            depth: vec![T::infinity(); n],
            owner: vec![NO_FACE; n],
        }
    }

    fn fill_triangle(&mut self, face: u32, v: [ScreenVertex<T>; 3]) {
        let mut v = v;
        let mut area = edge(&v[0], &v[1], v[2].x, v[2].y);
        if area == T::zero() || !area.is_finite() {
            return;
        }
        if area < T::zero() {
            v.swap(1, 2);
            area = -area;
        }
        let half = T::lit(0.5);
        let (w, h) = (T::lit(f64::from(self.width)), T::lit(f64::from(self.height)));
        let min_x = v.iter().map(|p| p.x).fold(T::infinity(), T::min);
        let max_x = v.iter().map(|p| p.x).fold(T::neg_infinity(), T::max);
        let min_y = v.iter().map(|p| p.y).fold(T::infinity(), T::min);
        let max_y = v.iter().map(|p| p.y).fold(T::neg_infinity(), T::max);
        if max_x < T::zero() || max_y < T::zero() || min_x > w || min_y > h {
            return;
        }
        // Pixel c is sampled at c + 0.5.
        let c0 = (min_x - half).ceil().max(T::zero());
        let c1 = (max_x - half).floor().min(w - T::one());
        let r0 = (min_y - half).ceil().max(T::zero());
        let r1 = (max_y - half).floor().min(h - T::one());
        if c0 > c1 || r0 > r1 {
            return;
        }
        let (c0, c1) = (c0.to_usize().unwrap_or(0), c1.to_usize().unwrap_or(0));
        let (r0, r1) = (r0.to_usize().unwrap_or(0), r1.to_usize().unwrap_or(0));
        let top_left = [
            is_top_left(&v[1], &v[2]),
            is_top_left(&v[2], &v[0]),
            is_top_left(&v[0], &v[1]),
        ];
        let inv_area = T::one() / area;
        for r in r0..=r1 {
            let py = T::lit(r as f64) + half;
            let row_base = r * self.width as usize;
            for c in c0..=c1 {
                let px = T::lit(c as f64) + half;
                let e = [
                    edge(&v[1], &v[2], px, py),
                    edge(&v[2], &v[0], px, py),
                    edge(&v[0], &v[1], px, py),
                ];
                let inside = e
                    .iter()
                    .zip(top_left)
                    .all(|(&ei, tl)| ei > T::zero() || (ei == T::zero() && tl));
                if !inside {
                    continue;
                }
                let inv_z =
                    (e[0] * v[0].inv_z + e[1] * v[1].inv_z + e[2] * v[2].inv_z) * inv_area;
                let depth = T::one() / inv_z;
                let idx = row_base + c;
                if depth < self.depth[idx] {
                    self.depth[idx] = depth;
                    self.owner[idx] = face;
                }
            }
        }
    }
}

/// Z-buffer backprojection of every face into `cam`.
pub fn rasterize_faces<T: Real>(
    mesh: &TriangleMesh<T>,
    cam: &CameraView<T>,
    view: usize,
) -> FaceProjectionTable<T> {
    let w2c = cam.world_to_camera();
    let camera_space: Vec<Point3<T>> = mesh
        .vertices
        .iter()
        .map(|&v| w2c.transform_point(v))
        .collect();
    let near = T::lit(NEAR_PLANE);
    let mut zbuf = ZBuffer::new(cam.width, cam.height);
    let mut poly = Vec::with_capacity(4);
    for (face, idx) in mesh.faces.iter().enumerate() {
        let tri = idx.map(|i| camera_space[i as usize]);
        if tri.iter().all(|p| p[2] < near) {
            continue;
        }
        clip_near(tri, near, &mut poly);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex<T>> = poly
            .iter()
            .map(|&p| {
                let (row, col) = cam.project_camera_space(p);
                ScreenVertex {
                    x: col,
                    y: row,
                    inv_z: T::one() / p[2],
                }
            })
            .collect();
        for k in 1..screen.len() - 1 {
            zbuf.fill_triangle(face as u32, [screen[0], screen[k], screen[k + 1]]);
        }
    }
    let depth: Vec<T> = zbuf
        .depth
        .iter()
        .map(|&d| if d.is_finite() { d } else { T::zero() })
        .collect();
    FaceProjectionTable::from_owner_map(
        view,
        cam.width,
        cam.height,
        mesh.face_count(),
        zbuf.owner,
        &depth,
    )
    .expect("z-buffer produces a consistent owner map")
}

/// Mean L* over the visible pixels of `face`; `None` when the face is not visible.
pub fn face_mean_luminance<T: Real>(
    table: &FaceProjectionTable<T>,
    img: &LuminanceImage<T>,
    face: usize,
) -> Result<Option<T>> {
    if table.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: table.dims(),
            actual: img.dims(),
        });
    }
    if face >= table.face_count() {
        return Err(Error::invalid(
            "face index",
            format!("{face} >= {}", table.face_count()),
        ));
    }
    Ok(mean_over(table.pixels(face), img))
}

pub(crate) fn mean_over<T: Real>(pixels: &[Pixel], img: &LuminanceImage<T>) -> Option<T> {
    if pixels.is_empty() {
        return None;
    }
    let sum: T = pixels.iter().map(|p| img.get(p.row, p.col)).sum();
    Some(sum / T::lit(pixels.len() as f64))
}

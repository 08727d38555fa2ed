//! Synthetic multi-view scenes with exact specular groundtruth.
//!
//! A scene is a 4 x 4 x 3 room with axis-aligned boxes on the floor, lit by
//! point lights. Every box side is tessellated into a grid of small triangles
//! so that highlights cover whole faces. Rendering casts one ray per pixel
//! center against the boxes analytically, shades with Lambert diffuse
//! (inverse-square falloff) plus a Blinn-Phong specular lobe, and casts hard
//! shadow rays. The specular term is emitted separately as groundtruth.

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::{
    lightness_from_y, lightness_to_level, relative_luminance, srgb_encode_u8, Gray8Image, RgbImage,
};
use crate::error::{Error, Result};
use crate::geometry::{
    add, dot, normalize, project_vertex, scale, sub, CameraView, Point3, TriangleMesh,
};
use crate::io::{self, LightInfo, LightType, PlyEncoding};
use crate::scalar::Real;

pub const ROOM_SIZE: [f64; 3] = [4.0, 4.0, 3.0];
pub const DEFAULT_RENDER_SIZE: u32 = 128;
/// Target edge length of a tessellation cell.
pub const CELL_SIZE: f64 = 0.2;
const HORIZONTAL_FOV_DEG: f64 = 75.0;
const SHADOW_BIAS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material<T> {
    /// Linear RGB diffuse albedo.
    pub albedo: [T; 3],
    /// Specular coefficient in `[0, 1]`.
    pub specular: T,
    pub shininess: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLight<T> {
    pub position: Point3<T>,
    /// Linear RGB color, components in `[0, 1]`.
    pub color: [T; 3],
    pub strength: T,
}

impl<T: Real> PointLight<T> {
    pub fn intensity(&self) -> [T; 3] {
        self.color.map(|c| c * self.strength)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Room,
    WhiteDiffuse,
    Glossy,
    Furniture,
}

/// One tessellated side of a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxSide {
    pub axis: usize,
    /// Side lies on the max plane of `axis`.
    pub at_max: bool,
    pub cells_u: u32,
    pub cells_v: u32,
    pub first_face: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject<T> {
    pub kind: ObjectKind,
    pub min: Point3<T>,
    pub max: Point3<T>,
    pub material: Material<T>,
    pub sides: Vec<BoxSide>,
    pub faces: Range<u32>,
}

impl<T: Real> SceneObject<T> {
    fn side_normal(&self, side: &BoxSide) -> Point3<T> {
        let mut n = [T::zero(); 3];
        let outward = if side.at_max { T::one() } else { -T::one() };
        n[side.axis] = if self.kind == ObjectKind::Room {
            -outward
        } else {
            outward
        };
        n
    }

    fn face_at(&self, side: &BoxSide, p: Point3<T>) -> u32 {
        let a = (side.axis + 1) % 3;
        let b = (side.axis + 2) % 3;
        let cell = |axis: usize, cells: u32| {
            let span = self.max[axis] - self.min[axis];
            let x = (p[axis] - self.min[axis]) / span * T::lit(f64::from(cells));
            let i = x.floor().max(T::zero()).min(T::lit(f64::from(cells - 1)));
            (i.to_u32().unwrap_or(0), x - i)
        };
        let (i, fu) = cell(a, side.cells_u);
        let (j, fv) = cell(b, side.cells_v);
        let tri = u32::from(fu < fv);
        side.first_face + (j * side.cells_u + i) * 2 + tri
    }

    pub fn contains_face(&self, face: u32) -> bool {
        self.faces.contains(&face)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene<T> {
    pub mesh: TriangleMesh<T>,
    /// Material per mesh face.
    pub materials: Vec<Material<T>>,
    pub lights: Vec<PointLight<T>>,
    pub cameras: Vec<CameraView<T>>,
    pub objects: Vec<SceneObject<T>>,
}

/// Kind, min corner, max corner and material of one box.
pub type BoxSpec<T> = (ObjectKind, Point3<T>, Point3<T>, Material<T>);

impl<T: Real> SyntheticScene<T> {
    /// Assembles a scene from boxes; the first object must be the room.
    pub fn from_boxes(
        boxes: Vec<BoxSpec<T>>,
        lights: Vec<PointLight<T>>,
        cameras: Vec<CameraView<T>>,
    ) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut materials = Vec::new();
        let mut objects = Vec::new();
        for (kind, min, max, material) in boxes {
            if !(material.specular >= T::zero() && material.specular <= T::one()) {
                return Err(Error::invalid("material", "specular coefficient outside [0, 1]"));
            }
            if (0..3).any(|k| !(max[k] > min[k])) {
                return Err(Error::invalid("box", format!("empty extent {min:?}..{max:?}")));
            }
            let start = faces.len() as u32;
            let mut sides = Vec::new();
            for axis in 0..3 {
                for at_max in [false, true] {
                    // Furniture rests on the floor; its bottom is never seen.
                    if kind != ObjectKind::Room && axis == 2 && !at_max {
                        continue;
                    }
                    sides.push(tessellate_side(min, max, axis, at_max, &mut vertices, &mut faces));
                }
            }
            let end = faces.len() as u32;
            materials.resize(end as usize, material);
            objects.push(SceneObject {
                kind,
                min,
                max,
                material,
                sides,
                faces: start..end,
            });
        }
        if objects.first().map(|o| o.kind) != Some(ObjectKind::Room) {
            return Err(Error::invalid("scene", "first object must be the room"));
        }
        if lights.is_empty() {
            return Err(Error::invalid("scene", "needs at least one light"));
        }
        Ok(Self {
            mesh: TriangleMesh::new(vertices, faces)?,
            materials,
            lights,
            cameras,
            objects,
        })
    }

    pub fn object_of_face(&self, face: u32) -> Option<&SceneObject<T>> {
        self.objects.iter().find(|o| o.contains_face(face))
    }

    /// Faces belonging to objects of `kind`.
    pub fn faces_of_kind(&self, kind: ObjectKind) -> Vec<u32> {
        self.objects
            .iter()
            .filter(|o| o.kind == kind)
            .flat_map(|o| o.faces.clone())
            .collect()
    }

    /// Same scene with every specular coefficient set to zero.
    pub fn without_specular(&self) -> Self {
        let mut s = self.clone();
        for m in &mut s.materials {
            m.specular = T::zero();
        }
        for o in &mut s.objects {
            o.material.specular = T::zero();
        }
        s
    }
}

fn tessellate_side<T: Real>(
    min: Point3<T>,
    max: Point3<T>,
    axis: usize,
    at_max: bool,
    vertices: &mut Vec<Point3<T>>,
    faces: &mut Vec<[u32; 3]>,
) -> BoxSide {
    let a = (axis + 1) % 3;
    let b = (axis + 2) % 3;
    let cells = |k: usize| {
        ((max[k] - min[k]).to_f64_lossy() / CELL_SIZE)
            .ceil()
            .max(1.0) as u32
    };
    let (nu, nv) = (cells(a), cells(b));
    let plane = if at_max { max[axis] } else { min[axis] };
    let base = vertices.len() as u32;
    for j in 0..=nv {
        for i in 0..=nu {
            let mut p = [T::zero(); 3];
            p[axis] = plane;
            p[a] = min[a] + (max[a] - min[a]) * T::lit(f64::from(i)) / T::lit(f64::from(nu));
            p[b] = min[b] + (max[b] - min[b]) * T::lit(f64::from(j)) / T::lit(f64::from(nv));
            vertices.push(p);
        }
    }
    let first_face = faces.len() as u32;
    let at = |i: u32, j: u32| base + j * (nu + 1) + i;
    for j in 0..nv {
        for i in 0..nu {
            faces.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            faces.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    BoxSide {
        axis,
        at_max,
        cells_u: nu,
        cells_v: nv,
        first_face,
    }
}

fn overlaps<T: Real>(a: (&Point3<T>, &Point3<T>), b: (&Point3<T>, &Point3<T>), margin: T) -> bool {
    (0..2).all(|k| a.0[k] - margin < b.1[k] && b.0[k] - margin < a.1[k])
}

/// Deterministic scene from `seed` rendered at the default size.
pub fn build_scene<T: Real>(seed: u64, num_cameras: usize) -> Result<SyntheticScene<T>> {
    build_scene_sized(seed, num_cameras, DEFAULT_RENDER_SIZE, DEFAULT_RENDER_SIZE)
}

pub fn build_scene_sized<T: Real>(
    seed: u64,
    num_cameras: usize,
    width: u32,
    height: u32,
) -> Result<SyntheticScene<T>> {
    if num_cameras < 2 {
        return Err(Error::invalid(
            "synthetic scene",
            format!("{num_cameras} cameras, need at least 2"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = T::lit;
    let [rx, ry, rz] = ROOM_SIZE;
    let (cx, cy) = (rx / 2.0, ry / 2.0);
    let mut boxes: Vec<BoxSpec<T>> = Vec::new();

    let wall: f64 = rng.gen_range(0.3..0.45);
    boxes.push((
        ObjectKind::Room,
        [t(0.0), t(0.0), t(0.0)],
        [t(rx), t(ry), t(rz)],
        Material {
            albedo: [t(wall), t(wall * 0.95), t(wall * 0.9)],
            specular: T::zero(),
            shininess: T::one(),
        },
    ));

    // Glossy box near the middle of the room: every camera looks at it.
    let gw: f64 = rng.gen_range(0.7..1.0);
    let gd: f64 = rng.gen_range(0.7..1.0);
    let gh: f64 = rng.gen_range(0.35..0.6);
    let gx = cx + rng.gen_range(-0.2..0.2);
    let gy = cy + rng.gen_range(-0.2..0.2);
    let hue: [f64; 3] = [rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)];
    boxes.push((
        ObjectKind::Glossy,
        [t(gx - gw / 2.0), t(gy - gd / 2.0), T::zero()],
        [t(gx + gw / 2.0), t(gy + gd / 2.0), t(gh)],
        Material {
            albedo: hue.map(|c| t(0.012 * c)),
            specular: t(rng.gen_range(0.45..0.6)),
            shininess: t(rng.gen_range(30.0..60.0)),
        },
    ));

    // White diffuse box off-center, lit from above.
    let white_angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let white_r: f64 = rng.gen_range(0.9..1.1);
    let ww: f64 = rng.gen_range(0.5..0.7);
    let wh: f64 = rng.gen_range(0.5..0.9);
    let wx = cx + white_r * white_angle.cos();
    let wy = cy + white_r * white_angle.sin();
    let white_min = [t(wx - ww / 2.0), t(wy - ww / 2.0), T::zero()];
    let white_max = [t(wx + ww / 2.0), t(wy + ww / 2.0), t(wh)];
    boxes.push((
        ObjectKind::WhiteDiffuse,
        white_min,
        white_max,
        Material {
            albedo: [t(0.92); 3],
            specular: T::zero(),
            shininess: T::one(),
        },
    ));

    let furniture = rng.gen_range(1..=6);
    let mut attempts = 0;
    while boxes.len() < 2 + 1 + furniture && attempts < 200 {
        attempts += 1;
        let w: f64 = rng.gen_range(0.3..0.8);
        let d: f64 = rng.gen_range(0.3..0.8);
        let h: f64 = rng.gen_range(0.3..1.1);
        let x: f64 = rng.gen_range(0.1 + w / 2.0..rx - 0.1 - w / 2.0);
        let y: f64 = rng.gen_range(0.1 + d / 2.0..ry - 0.1 - d / 2.0);
        let min = [t(x - w / 2.0), t(y - d / 2.0), T::zero()];
        let max = [t(x + w / 2.0), t(y + d / 2.0), t(h)];
        let clear = boxes
            .iter()
            .skip(1)
            .all(|(_, bmin, bmax, _)| !overlaps((&min, &max), (bmin, bmax), t(0.1)));
        // Keep the inner ring free for cameras and sight lines.
        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        if !clear || r < 1.6 {
            continue;
        }
        let base: f64 = rng.gen_range(0.1..0.4);
        boxes.push((
            ObjectKind::Furniture,
            min,
            max,
            Material {
                albedo: [
                    t(base * rng.gen_range(0.7..1.0)),
                    t(base * rng.gen_range(0.7..1.0)),
                    t(base * rng.gen_range(0.7..1.0)),
                ],
                specular: T::zero(),
                shininess: T::one(),
            },
        ));
    }

    let light_count = rng.gen_range(1..=3);
    // The key light stays inside the white box footprint, so it lights the top only.
    let mut lights = vec![PointLight {
        position: [
            t(wx + rng.gen_range(-0.1..0.1)),
            t(wy + rng.gen_range(-0.1..0.1)),
            t(rng.gen_range(2.5..2.8)),
        ],
        color: [T::one(); 3],
        strength: t(rng.gen_range(4.5..5.5)),
    }];
    for _ in 1..light_count {
        lights.push(PointLight {
            position: [
                t(rng.gen_range(0.6..rx - 0.6)),
                t(rng.gen_range(0.6..ry - 0.6)),
                t(rng.gen_range(2.4..2.8)),
            ],
            color: [T::one(), t(rng.gen_range(0.9..1.0)), t(rng.gen_range(0.85..1.0))],
            strength: t(rng.gen_range(0.8..1.5)),
        });
    }

    // Both box tops should be in frame for every camera; jitter is redrawn until they are.
    let tops: Vec<Point3<T>> = boxes[1..3]
        .iter()
        .flat_map(|(_, min, max, _)| {
            [(min[0], min[1]), (min[0], max[1]), (max[0], min[1]), (max[0], max[1])]
                .map(|(x, y)| [x, y, max[2]])
        })
        .collect();
    let aim = [0.65 * gx + 0.35 * wx, 0.65 * gy + 0.35 * wy];
    let offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut cameras = Vec::with_capacity(num_cameras);
    for k in 0..num_cameras {
        let base = offset + std::f64::consts::TAU * k as f64 / num_cameras as f64;
        let mut cam = None;
        for _ in 0..64 {
            let angle = base + rng.gen_range(-0.15..0.15);
            let radius: f64 = rng.gen_range(1.5..1.7);
            let eye = [
                t(cx + radius * angle.cos()),
                t(cy + radius * angle.sin()),
                t(rng.gen_range(1.6..1.9)),
            ];
            let target = [
                t(aim[0] + rng.gen_range(-0.1..0.1)),
                t(aim[1] + rng.gen_range(-0.1..0.1)),
                t(gh * 0.5),
            ];
            let candidate = CameraView::look_at(
                eye,
                target,
                [T::zero(), T::zero(), T::one()],
                t(HORIZONTAL_FOV_DEG),
                width,
                height,
            )?;
            let margin = t(2.0);
            let framed = tops.iter().all(|&p| {
                project_vertex(p, &candidate).is_some_and(|s| {
                    s.row >= margin
                        && s.col >= margin
                        && s.row <= t(f64::from(height)) - margin
                        && s.col <= t(f64::from(width)) - margin
                })
            });
            cam = Some(candidate);
            if framed {
                break;
            }
        }
        cameras.push(cam.expect("at least one attempt"));
    }

    SyntheticScene::from_boxes(boxes, lights, cameras)
}

/// Rendered maps for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBundle<T> {
    pub image: RgbImage,
    /// 8-bit scaled L* of the specular term.
    pub specular_gt: Gray8Image,
    /// Relative luminance of the specular term before any clamping.
    pub specular_luminance: Vec<T>,
    /// Camera-space depth.
    pub depth: Vec<T>,
    pub normals: Vec<Point3<T>>,
    /// Mesh face hit by each pixel ray.
    pub face_ids: Vec<u32>,
}

#[derive(Clone, Copy, Debug)]
pub struct Hit<T> {
    pub t: T,
    pub object: usize,
    pub side: usize,
}

/// Slab test; returns (t_enter, t_exit, enter_axis, exit_axis).
fn slabs<T: Real>(
    origin: Point3<T>,
    dir: Point3<T>,
    min: Point3<T>,
    max: Point3<T>,
) -> Option<(T, T, usize, usize)> {
    let mut t_enter = T::neg_infinity();
    let mut t_exit = T::infinity();
    let (mut enter_axis, mut exit_axis) = (0, 0);
    for k in 0..3 {
        if dir[k] == T::zero() {
            if origin[k] < min[k] || origin[k] > max[k] {
                return None;
            }
            continue;
        }
        let inv = T::one() / dir[k];
        let (mut t0, mut t1) = ((min[k] - origin[k]) * inv, (max[k] - origin[k]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_enter {
            t_enter = t0;
            enter_axis = k;
        }
        if t1 < t_exit {
            t_exit = t1;
            exit_axis = k;
        }
    }
    (t_enter <= t_exit).then_some((t_enter, t_exit, enter_axis, exit_axis))
}

fn side_index(obj_sides: &[BoxSide], axis: usize, at_max: bool) -> Option<usize> {
    obj_sides
        .iter()
        .position(|s| s.axis == axis && s.at_max == at_max)
}

impl<T: Real> SyntheticScene<T> {
    /// Nearest surface along a ray, `t` measured in units of `dir`.
    pub fn cast(&self, origin: Point3<T>, dir: Point3<T>) -> Option<Hit<T>> {
        let mut best: Option<Hit<T>> = None;
        for (index, obj) in self.objects.iter().enumerate() {
            let Some((t_in, t_out, ax_in, ax_out)) = slabs(origin, dir, obj.min, obj.max) else {
                continue;
            };
            let (t, axis, at_max) = if obj.kind == ObjectKind::Room {
                (t_out, ax_out, dir[ax_out] > T::zero())
            } else {
                (t_in, ax_in, dir[ax_in] < T::zero())
            };
            if !(t > T::zero()) || best.as_ref().is_some_and(|b| b.t <= t) {
                continue;
            }
            if let Some(side) = side_index(&obj.sides, axis, at_max) {
                best = Some(Hit {
                    t,
                    object: index,
                    side,
                });
            }
        }
        best
    }

    fn occluded(&self, origin: Point3<T>, dir: Point3<T>, max_t: T) -> bool {
        self.objects
            .iter()
            .filter(|o| o.kind != ObjectKind::Room)
            .any(|o| {
                slabs(origin, dir, o.min, o.max)
                    .is_some_and(|(t_in, t_out, _, _)| t_out > T::zero() && t_in < max_t && t_in > T::zero())
            })
    }

    /// Linear diffuse and specular radiance at a surface point seen from `eye`.
    pub fn shade(
        &self,
        point: Point3<T>,
        normal: Point3<T>,
        eye: Point3<T>,
        material: &Material<T>,
    ) -> ([T; 3], [T; 3]) {
        let mut diffuse = [T::zero(); 3];
        let mut specular = [T::zero(); 3];
        let view = normalize(sub(eye, point));
        let lifted = add(point, scale(normal, T::lit(SHADOW_BIAS)));
        for light in &self.lights {
            let to_light = sub(light.position, point);
            let dist2 = dot(to_light, to_light);
            let l = normalize(to_light);
            let n_dot_l = dot(normal, l);
            if !(n_dot_l > T::zero()) {
                continue;
            }
            if self.occluded(lifted, to_light, T::one()) {
                continue;
            }
            let intensity = light.intensity();
            let h = normalize(add(l, view));
            let lobe = dot(normal, h).max(T::zero()).powf(material.shininess);
            for c in 0..3 {
                diffuse[c] = diffuse[c] + material.albedo[c] * intensity[c] * n_dot_l / dist2;
                specular[c] = specular[c] + material.specular * lobe * intensity[c];
            }
        }
        (diffuse, specular)
    }
}

/// Renders camera `cam_index` by casting one ray per pixel center.
pub fn render_direct<T: Real>(scene: &SyntheticScene<T>, cam_index: usize) -> Result<RenderBundle<T>> {
    let cam = scene.cameras.get(cam_index).ok_or_else(|| {
        Error::invalid(
            "camera index",
            format!("{cam_index} >= {} cameras", scene.cameras.len()),
        )
    })?;
    let (w, h) = (cam.width(), cam.height());
    let n = w as usize * h as usize;
    let eye = cam.center();
    let mut rgb = Vec::with_capacity(n * 3);
    let mut gt = Vec::with_capacity(n);
    let mut spec_y = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut face_ids = Vec::with_capacity(n);
    let half = T::lit(0.5);
    for row in 0..h {
        for col in 0..w {
            let dir = cam.ray_direction(T::lit(f64::from(row)) + half, T::lit(f64::from(col)) + half);
            let Some(hit) = scene.cast(eye, dir) else {
                rgb.extend([0, 0, 0]);
                gt.push(0);
                spec_y.push(T::zero());
                depth.push(T::zero());
                normals.push([T::zero(); 3]);
                face_ids.push(u32::MAX);
                continue;
            };
            let obj = &scene.objects[hit.object];
            let side = &obj.sides[hit.side];
            let point = add(eye, scale(dir, hit.t));
            let normal = obj.side_normal(side);
            let face = obj.face_at(side, point);
            let material = &scene.materials[face as usize];
            let (diffuse, specular) = scene.shade(point, normal, eye, material);
            for c in 0..3 {
                rgb.push(srgb_encode_u8((diffuse[c] + specular[c]).to_f64_lossy()));
            }
            let sy = relative_luminance(specular.map(|v| v.to_f64_lossy()));
            spec_y.push(T::lit(sy));
            gt.push(lightness_to_level(lightness_from_y(sy.clamp(0.0, 1.0))));
            depth.push(hit.t);
            normals.push(normal);
            face_ids.push(face);
        }
    }
    Ok(RenderBundle {
        image: RgbImage::new(w, h, rgb)?,
        specular_gt: Gray8Image::new(w, h, gt)?,
        specular_luminance: spec_y,
        depth,
        normals,
        face_ids,
    })
}

pub fn view_id(index: usize) -> String {
    format!("{index:03}")
}

pub fn light_info<T: Real>(scene: &SyntheticScene<T>) -> Vec<LightInfo> {
    scene
        .lights
        .iter()
        .map(|l| LightInfo {
            kind: LightType::Point,
            position: l.position.map(|v| v.to_f64_lossy()),
            orientation: [0.0, 0.0, -1.0],
            color: l.color.map(|v| v.to_f64_lossy()),
            strength: l.strength.to_f64_lossy(),
        })
        .collect()
}

/// Writes the scene and its renders in the scene directory layout (see [`crate::io`]).
pub fn write_scene<T: Real>(
    scene: &SyntheticScene<T>,
    renders: &[RenderBundle<T>],
    root: impl AsRef<Path>,
) -> Result<()> {
    let root = root.as_ref();
    for dir in [io::CAM_DIR, io::LIGHT_DIR, io::MESH_DIR, io::RENDER_DIR] {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    io::save_ply(
        &scene.mesh,
        root.join(io::MESH_DIR).join("scene.ply"),
        PlyEncoding::BinaryLittleEndian,
    )?;
    io::save_light_info(
        &light_info(scene),
        root.join(io::LIGHT_DIR).join(io::LIGHT_FILE),
    )?;
    let render_dir = root.join(io::RENDER_DIR);
    for (k, (cam, bundle)) in scene.cameras.iter().zip(renders).enumerate() {
        let id = view_id(k);
        io::save_camera(cam, root.join(io::CAM_DIR).join(io::camera_file_name(&id)))?;
        io::write_rgb_png(&bundle.image, render_dir.join(io::image_file_name("Image", &id)))?;
        io::write_gray_png(
            &bundle.specular_gt,
            render_dir.join(io::image_file_name("Specular", &id)),
        )?;
        let mm: Vec<u16> = bundle
            .depth
            .iter()
            .map(|d| (d.to_f64_lossy() * 1000.0).round().clamp(0.0, 65535.0) as u16)
            .collect();
        io::write_gray16_png(
            cam.width(),
            cam.height(),
            mm,
            render_dir.join(io::image_file_name("Depth", &id)),
        )?;
        let encoded: Vec<u8> = bundle
            .normals
            .iter()
            .flat_map(|n| n.map(|c| ((c.to_f64_lossy() + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8))
            .collect();
        io::write_rgb_png(
            &RgbImage::new(cam.width(), cam.height(), encoded)?,
            render_dir.join(io::image_file_name("Normal", &id)),
        )?;
    }
    Ok(())
}

/// Builds, renders and writes a scene in one go.
pub fn generate_scene_dir(
    seed: u64,
    num_cameras: usize,
    size: u32,
    root: impl AsRef<Path>,
) -> Result<SyntheticScene<f64>> {
    use rayon::prelude::*;
    let scene = build_scene_sized::<f64>(seed, num_cameras, size, size)?;
    let renders = (0..scene.cameras.len())
        .into_par_iter()
        .map(|k| render_direct(&scene, k))
        .collect::<Result<Vec<_>>>()?;
    write_scene(&scene, &renders, root)?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat4;

    #[test]
    fn same_seed_same_scene() {
        let a = build_scene::<f64>(3, 4).unwrap();
        let b = build_scene::<f64>(3, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_scene::<f64>(4, 4).unwrap());
    }

    #[test]
    fn camera_count_and_validation() {
        assert_eq!(build_scene::<f64>(1, 2).unwrap().cameras.len(), 2);
        assert!(build_scene::<f64>(1, 1).is_err());
    }

    #[test]
    fn scene_contents() {
        for seed in 0..20 {
            let s = build_scene::<f64>(seed, 3).unwrap();
            let count = |k| s.objects.iter().filter(|o| o.kind == k).count();
            assert_eq!(count(ObjectKind::WhiteDiffuse), 1);
            assert_eq!(count(ObjectKind::Glossy), 1);
            let boxes = s.objects.len() - 1;
            assert!((3..=8).contains(&boxes), "seed {seed}: {boxes} boxes");
            assert!((1..=3).contains(&s.lights.len()));
            assert_eq!(s.materials.len(), s.mesh.face_count());
            assert!(s.materials.iter().all(|m| (0.0..=1.0).contains(&m.specular)));
        }
    }

    #[test]
    fn seed_seven_golden() {
        let s = build_scene::<f64>(7, 4).unwrap();
        let glossy = s.faces_of_kind(ObjectKind::Glossy).len();
        let white = s.faces_of_kind(ObjectKind::WhiteDiffuse).len();
        let summary = (s.mesh.face_count(), s.objects.len(), s.lights.len(), glossy, white);
        assert_eq!(summary, GOLDEN_SEED_7);
    }

    const GOLDEN_SEED_7: (usize, usize, usize, usize, usize) = (4736, 7, 3, 148, 114);

    #[test]
    fn rays_hit_the_face_they_report() {
        let s = build_scene::<f64>(11, 2).unwrap();
        let r = render_direct(&s, 0).unwrap();
        let cam = &s.cameras[0];
        // Every reported face's plane contains the hit point.
        for (idx, &face) in r.face_ids.iter().enumerate().step_by(37) {
            let row = (idx / cam.width() as usize) as f64 + 0.5;
            let col = (idx % cam.width() as usize) as f64 + 0.5;
            let p = add(cam.center(), scale(cam.ray_direction(row, col), r.depth[idx]));
            let [a, b, c] = s.mesh.triangle(face as usize);
            let n = crate::geometry::cross(sub(b, a), sub(c, a));
            assert!(dot(n, sub(p, a)).abs() < 1e-9);
        }
    }

    #[test]
    fn no_specular_means_empty_groundtruth() {
        let s = build_scene::<f64>(5, 2).unwrap().without_specular();
        let r = render_direct(&s, 1).unwrap();
        assert!(r.specular_gt.data().iter().all(|&v| v == 0));
    }

    fn floor_fixture(ks: f64, shininess: f64) -> SyntheticScene<f64> {
        let dull = Material {
            albedo: [0.3; 3],
            specular: 0.0,
            shininess: 1.0,
        };
        let mut s = SyntheticScene::from_boxes(
            vec![(ObjectKind::Room, [0.0; 3], [4.0, 4.0, 3.0], dull)],
            vec![PointLight {
                position: [2.0, 2.0, 2.0],
                color: [1.0; 3],
                strength: 1.0,
            }],
            vec![
                CameraView::new(
                    Mat4::intrinsics(60.0, 60.0, 32.0, 32.0),
                    // Looking straight down from (2, 2, 2): camera z is world -z.
                    Mat4::rigid(
                        [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
                        [2.0, 2.0, 2.0],
                    ),
                    64,
                    64,
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let floor = &s.objects[0].sides.iter().find(|sd| sd.axis == 2 && !sd.at_max).copied().unwrap();
        let n = floor.cells_u * floor.cells_v * 2;
        for f in floor.first_face..floor.first_face + n {
            s.materials[f as usize].specular = ks;
            s.materials[f as usize].shininess = shininess;
        }
        s
    }

    #[test]
    fn blinn_phong_by_hand() {
        let s = floor_fixture(0.8, 20.0);
        let r = render_direct(&s, 0).unwrap();
        let cam = &s.cameras[0];
        for (row, col) in [(32u32, 32u32), (40, 20), (5, 60)] {
            let idx = row as usize * 64 + col as usize;
            // Floor point under the pixel center; camera and light share (2, 2, 2).
            let d = cam.ray_direction(f64::from(row) + 0.5, f64::from(col) + 0.5);
            let t = 2.0 / -d[2];
            let p = [2.0 + t * d[0], 2.0 + t * d[1], 0.0];
            let to_eye = normalize(sub([2.0, 2.0, 2.0], p));
            // Light and eye coincide, so h is the direction to the eye.
            let expected = 0.8 * to_eye[2].powf(20.0);
            assert!(
                (r.specular_luminance[idx] - expected).abs() < 1e-9,
                "pixel ({row},{col}): {} vs {expected}",
                r.specular_luminance[idx]
            );
        }
    }

    #[test]
    fn highlight_peaks_at_mirror_point_and_falls_off() {
        let s = floor_fixture(0.8, 20.0);
        let r = render_direct(&s, 0).unwrap();
        let y = |row: usize, col: usize| r.specular_luminance[row * 64 + col];
        // The mirror point projects to the principal point, between pixels 31 and 32.
        let mut prev = y(31, 31);
        for k in 1..30 {
            let v = y(31 - k, 31 - k);
            assert!(v < prev, "not decreasing at step {k}");
            prev = v;
        }
        let peak = r.specular_luminance.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, y(31, 31).max(y(32, 32)).max(y(31, 32)).max(y(32, 31)));
    }

    #[test]
    fn specular_only_brightens() {
        let s = build_scene::<f64>(9, 2).unwrap();
        let dull = s.without_specular();
        for k in 0..2 {
            let full = render_direct(&s, k).unwrap();
            let base = render_direct(&dull, k).unwrap();
            for i in 0..full.specular_luminance.len() {
                let a = crate::colorspace::srgb8_lightness(full.image.pixel((i / 128) as u32, (i % 128) as u32));
                let b = crate::colorspace::srgb8_lightness(base.image.pixel((i / 128) as u32, (i % 128) as u32));
                assert!(a >= b);
                if full.specular_luminance[i] == 0.0 {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let s = build_scene::<f64>(2, 2).unwrap();
        assert_eq!(render_direct(&s, 1).unwrap(), render_direct(&s, 1).unwrap());
        assert!(render_direct(&s, 2).is_err());
    }
}

//! On-disk formats: PLY meshes, camera matrices, light-info JSON, PNG maps
//! and the scene directory layout.
//!
//! Scene layout, relative to the scene root:
//!
//! ```text
//! Cam_Info/camera_<view>.txt          intrinsics (4x4) then camera-to-world pose (4x4), row-major
//! Light_info/lights.json              list of light objects
//! Mesh_info/<name>.ply                first .ply in name order
//! Rendering_info/Image_<view>.png     8-bit RGB render (defines the view set)
//! Rendering_info/Specular_<view>.png  specular groundtruth, optional
//! Rendering_info/Depth_<view>.png     16-bit depth in millimeters, optional
//! Rendering_info/Normal_<view>.png    8-bit encoded normals, optional
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;
use serde::{Deserialize, Serialize};

use crate::colorspace::{rgb_to_levels, Gray8Image, RgbImage};
use crate::detect_single::SpecularMask;
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Mat4, TriangleMesh};
use crate::scalar::Real;

pub const CAM_DIR: &str = "Cam_Info";
pub const LIGHT_DIR: &str = "Light_info";
pub const MESH_DIR: &str = "Mesh_info";
pub const RENDER_DIR: &str = "Rendering_info";
pub const LIGHT_FILE: &str = "lights.json";

pub fn image_file_name(kind: &str, view: &str) -> String {
    format!("{kind}_{view}.png")
}

pub fn camera_file_name(view: &str) -> String {
    format!("camera_{view}.txt")
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

pub fn load_ply<T: Real>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(&mut BufReader::new(file), path)
}

/// Parses a PLY stream; `origin` only labels errors.
pub fn read_ply<T: Real, R: Read>(reader: &mut R, origin: &Path) -> Result<TriangleMesh<T>> {
    let ply_err = |reason: String| Error::Ply {
        path: origin.to_path_buf(),
        reason,
    };
    let ply = Parser::<DefaultElement>::new()
        .read_ply(reader)
        .map_err(|e| ply_err(e.to_string()))?;

    for name in ply.header.elements.keys() {
        if name != "vertex" && name != "face" {
            log::warn!("{}: skipping unsupported PLY element '{name}'", origin.display());
        }
    }
    let vertex_rows = ply
        .payload
        .get("vertex")
        .ok_or_else(|| ply_err("no vertex element".into()))?;
    let mut vertices = Vec::with_capacity(vertex_rows.len());
    for (k, row) in vertex_rows.iter().enumerate() {
        let mut p = [T::zero(); 3];
        for (axis, key) in ["x", "y", "z"].iter().enumerate() {
            p[axis] = row
                .get(*key)
                .and_then(scalar_as_f64)
                .map(T::lit)
                .ok_or_else(|| ply_err(format!("vertex {k} lacks numeric '{key}'")))?;
        }
        vertices.push(p);
    }

    let mut faces = Vec::new();
    if let Some(face_rows) = ply.payload.get("face") {
        for (k, row) in face_rows.iter().enumerate() {
            let idx = row
                .get("vertex_indices")
                .or_else(|| row.get("vertex_index"))
                .and_then(list_as_indices)
                .ok_or_else(|| ply_err(format!("face {k} lacks an index list")))?;
            match idx.len() {
                3 => faces.push([idx[0], idx[1], idx[2]]),
                4 => {
                    faces.push([idx[0], idx[1], idx[2]]);
                    faces.push([idx[0], idx[2], idx[3]]);
                }
                n => return Err(ply_err(format!("face {k} has {n} vertices, only 3 or 4 supported"))),
            }
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| ply_err(e.to_string()))
}

fn scalar_as_f64(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => f64::from(v),
        Property::UChar(v) => f64::from(v),
        Property::Short(v) => f64::from(v),
        Property::UShort(v) => f64::from(v),
        Property::Int(v) => f64::from(v),
        Property::UInt(v) => f64::from(v),
        Property::Float(v) => f64::from(v),
        Property::Double(v) => v,
        _ => return None,
    })
}

fn list_as_indices(p: &Property) -> Option<Vec<u32>> {
    fn conv<I: Copy + TryInto<u32>>(v: &[I]) -> Option<Vec<u32>> {
        v.iter().map(|&x| x.try_into().ok()).collect()
    }
    match p {
        Property::ListChar(v) => conv(v),
        Property::ListUChar(v) => conv(v),
        Property::ListShort(v) => conv(v),
        Property::ListUShort(v) => conv(v),
        Property::ListInt(v) => conv(v),
        Property::ListUInt(v) => conv(v),
        _ => None,
    }
}

/// Writes `mesh`; vertices are stored as `double` for `f64` meshes and `float` otherwise.
pub fn save_ply<T: Real>(
    mesh: &TriangleMesh<T>,
    path: impl AsRef<Path>,
    encoding: PlyEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_ply(mesh, &mut out, encoding).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ply<T: Real, W: Write>(
    mesh: &TriangleMesh<T>,
    out: &mut W,
    encoding: PlyEncoding,
) -> std::io::Result<()> {
    let double = std::mem::size_of::<T>() == 8;
    if encoding == PlyEncoding::BinaryLittleEndian {
        return write_binary_ply(mesh, out, double);
    }
    let scalar = if double {
        ScalarType::Double
    } else {
        ScalarType::Float
    };
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::BinaryLittleEndian => Encoding::BinaryLittleEndian,
    };

    let mut vertex_def = ElementDef::new("vertex".to_string());
    for key in ["x", "y", "z"] {
        vertex_def.properties.add(PropertyDef::new(
            key.to_string(),
            PropertyType::Scalar(scalar.clone()),
        ));
    }
    ply.header.elements.add(vertex_def);
    let mut face_def = ElementDef::new("face".to_string());
    face_def.properties.add(PropertyDef::new(
        "vertex_indices".to_string(),
        PropertyType::List(ScalarType::UChar, ScalarType::UInt),
    ));
    ply.header.elements.add(face_def);

    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| {
            let mut e = DefaultElement::new();
            for (axis, key) in ["x", "y", "z"].iter().enumerate() {
                let value = if double {
                    Property::Double(v[axis].to_f64_lossy())
                } else {
                    Property::Float(v[axis].to_f32().unwrap_or(f32::NAN))
                };
                e.insert(key.to_string(), value);
            }
            e
        })
        .collect();
    let faces = mesh
        .faces()
        .iter()
        .map(|f| {
            let mut e = DefaultElement::new();
            e.insert("vertex_indices".to_string(), Property::ListUInt(f.to_vec()));
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), vertices);
    ply.payload.insert("face".to_string(), faces);
    ply.make_consistent()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{e:?}")))?;
    Writer::new().write_ply(out, &mut ply)?;
    Ok(())
}

// ply-rs 0.1.3 writes the element count as every binary list length, so the
// binary body is produced here.
fn write_binary_ply<T: Real, W: Write>(
    mesh: &TriangleMesh<T>,
    out: &mut W,
    double: bool,
) -> std::io::Result<()> {
    let ty = if double { "double" } else { "float" };
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property {ty} x\nproperty {ty} y\nproperty {ty} z\n\
         element face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.face_count()
    )?;
    for v in mesh.vertices() {
        for c in v {
            if double {
                out.write_all(&c.to_f64_lossy().to_le_bytes())?;
            } else {
                out.write_all(&c.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
            }
        }
    }
    for f in mesh.faces() {
        out.write_all(&[3])?;
        for i in f {
            out.write_all(&i.to_le_bytes())?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Cameras

/// Reads the two 4x4 matrices (intrinsics, camera-to-world) of a camera file.
pub fn read_camera_matrices<T: Real>(path: impl AsRef<Path>) -> Result<(Mat4<T>, Mat4<T>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingCamera(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let malformed = |reason: String| Error::MalformedCamera {
        path: path.to_path_buf(),
        reason,
    };
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| malformed(format!("'{tok}' is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != 32 {
        return Err(malformed(format!("{} values, expected 32", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(malformed("non-finite value".into()));
    }
    let mat = |offset: usize| {
        let mut m = [[T::zero(); 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = T::lit(values[offset + r * 4 + c]);
            }
        }
        Mat4(m)
    };
    Ok((mat(0), mat(16)))
}

pub fn load_camera<T: Real>(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
) -> Result<CameraView<T>> {
    let path = path.as_ref();
    let (k, pose) = read_camera_matrices(path)?;
    CameraView::new(k, pose, width, height).map_err(|e| Error::MalformedCamera {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_camera<T: Real>(cam: &CameraView<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for m in [cam.intrinsics(), cam.camera_to_world()] {
        for row in &m.0 {
            let cells: Vec<String> = row.iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Lights

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum LightType {
    Point,
    Sun,
    Spot,
    Area,
    Other(String),
}

impl From<String> for LightType {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "point" => Self::Point,
            "sun" => Self::Sun,
            "spot" => Self::Spot,
            "area" => Self::Area,
            _ => Self::Other(s),
        }
    }
}

impl From<LightType> for String {
    fn from(t: LightType) -> Self {
        match t {
            LightType::Point => "Point".into(),
            LightType::Sun => "Sun".into(),
            LightType::Spot => "Spot".into(),
            LightType::Area => "Area".into(),
            LightType::Other(s) => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightInfo {
    #[serde(rename = "type")]
    pub kind: LightType,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub orientation: [f64; 3],
    #[serde(default = "white")]
    pub color: [f64; 3],
    pub strength: f64,
}

fn white() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LightFile {
    List(Vec<LightInfo>),
    Wrapped { lights: Vec<LightInfo> },
}

pub fn load_light_info(path: impl AsRef<Path>) -> Result<Vec<LightInfo>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_light_info(&text, path)
}

pub fn parse_light_info(text: &str, origin: &Path) -> Result<Vec<LightInfo>> {
    let file: LightFile = serde_json::from_str(text).map_err(|e| Error::Json {
        path: origin.to_path_buf(),
        source: e,
    })?;
    let lights = match file {
        LightFile::List(l) | LightFile::Wrapped { lights: l } => l,
    };
    for (k, light) in lights.iter().enumerate() {
        if !(light.strength >= 0.0) {
            return Err(Error::LightInfo {
                path: origin.to_path_buf(),
                reason: format!("light {k} has negative strength {}", light.strength),
            });
        }
        if light.color.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::LightInfo {
                path: origin.to_path_buf(),
                reason: format!("light {k} has a negative color component"),
            });
        }
        if let LightType::Other(name) = &light.kind {
            log::warn!("{}: light {k} has unknown type '{name}'", origin.display());
        }
    }
    Ok(lights)
}

pub fn save_light_info(lights: &[LightInfo], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(lights).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// PNG

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => image_err(path)(other),
    })
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = open_image(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w, h, img.into_raw())
}

/// Reads an 8-bit single channel map. Color files are reduced to 8-bit scaled L*.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<Gray8Image> {
    let path = path.as_ref();
    match open_image(path)? {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Gray8Image::new(w, h, g.into_raw())
        }
        other => {
            let rgb = other.into_rgb8();
            let (w, h) = rgb.dimensions();
            Ok(rgb_to_levels(&RgbImage::new(w, h, rgb.into_raw())?))
        }
    }
}

pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(u32, u32)> {
    let path = path.as_ref();
    image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => image_err(path)(other),
    })
}

pub fn write_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width(), img.height(), img.data().to_vec())
            .expect("buffer length checked by RgbImage");
    buf.save(path).map_err(image_err(path))
}

pub fn write_gray_png(img: &Gray8Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(img.width(), img.height(), img.data().to_vec())
            .expect("buffer length checked by Gray8Image");
    buf.save(path).map_err(image_err(path))
}

pub fn write_gray16_png(width: u32, height: u32, data: Vec<u16>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(width, height, data)
        .ok_or_else(|| Error::invalid("16-bit image", "buffer does not match dimensions"))?;
    buf.save(path).map_err(image_err(path))
}

/// Masks are stored as 8-bit gray, 255 for set pixels.
pub fn write_mask_png(mask: &SpecularMask, path: impl AsRef<Path>) -> Result<()> {
    let g = Gray8Image::new(
        mask.width(),
        mask.height(),
        mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    )?;
    write_gray_png(&g, path)
}

/// Any nonzero level counts as set.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<SpecularMask> {
    let path = path.as_ref();
    let g = open_image(path)?.into_luma8();
    let (w, h) = g.dimensions();
    SpecularMask::new(w, h, g.into_raw().into_iter().map(|v| v != 0).collect())
}

// ---------------------------------------------------------------------------
// Scene manifest

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewEntry {
    pub id: String,
    pub image: PathBuf,
    pub camera: PathBuf,
    /// `None` when no groundtruth exists; such views are not evaluated.
    pub specular: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneManifest {
    pub root: PathBuf,
    pub mesh: PathBuf,
    pub lights: Option<PathBuf>,
    pub views: Vec<ViewEntry>,
}

impl SceneManifest {
    pub fn view(&self, id: &str) -> Option<&ViewEntry> {
        self.views.iter().find(|v| v.id == id)
    }

    pub fn evaluable_views(&self) -> impl Iterator<Item = &ViewEntry> {
        self.views.iter().filter(|v| v.specular.is_some())
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

/// Discovers views from `Rendering_info/Image_<view>.png`, ordered by view id.
pub fn load_scene(root: impl AsRef<Path>) -> Result<SceneManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "scene root is not a directory"),
        ));
    }
    let mesh = list_dir(&root.join(MESH_DIR))?
        .into_iter()
        .find(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")))
        .ok_or_else(|| Error::MissingMesh(root.to_path_buf()))?;

    let light_path = root.join(LIGHT_DIR).join(LIGHT_FILE);
    let lights = light_path.is_file().then_some(light_path);
    if lights.is_none() {
        log::warn!("{}: no light info", root.display());
    }

    let render = root.join(RENDER_DIR);
    let mut views = Vec::new();
    for path in list_dir(&render)? {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(id) = name
            .strip_prefix("Image_")
            .and_then(|rest| rest.strip_suffix(".png"))
        else {
            continue;
        };
        let camera = root.join(CAM_DIR).join(camera_file_name(id));
        if !camera.is_file() {
            return Err(Error::MissingCamera(camera));
        }
        let specular = render.join(image_file_name("Specular", id));
        let specular = if specular.is_file() {
            Some(specular)
        } else {
            log::warn!("view {id}: no specular groundtruth, evaluation disabled");
            None
        };
        views.push(ViewEntry {
            id: id.to_string(),
            image: path.clone(),
            camera,
            specular,
        });
    }
    views.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SceneManifest {
        root: root.to_path_buf(),
        mesh,
        lights,
        views,
    })
}

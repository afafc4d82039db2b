//! PLY meshes and point clouds, and 8-bit image files.

use std::io::{BufRead, Cursor, Read, Write};
use std::path::Path;

use crate::camera::Image8;
use crate::error::FormatError;
use crate::geometry::Vec3;
use crate::mesher::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

/// Contents of a PLY file restricted to what this crate uses: vertex
/// positions, triangle indices and any per-face scalar properties.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Vec3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// Per-face scalar properties by name, in file order.
    pub face_properties: Vec<(String, Vec<f64>)>,
}

fn header_err(msg: impl Into<String>) -> FormatError {
    FormatError::BadHeader(msg.into())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<(Encoding, Vec<Element>), FormatError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(header_err("missing ply magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(header_err("unterminated header"));
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => return Err(header_err(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| header_err(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err("property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| header_err(format!("bad type {ct}")))?;
                let it = Scalar::parse(it).ok_or_else(|| header_err(format!("bad type {it}")))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| header_err(format!("bad type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(header_err(format!("unexpected header line: {}", line.trim_end()))),
        }
    }
    Ok((encoding.ok_or_else(|| header_err("missing format line"))?, elements))
}

/// Pulls numbers from either encoding.
struct Values<'a, R: BufRead> {
    r: &'a mut R,
    encoding: Encoding,
    tokens: std::vec::IntoIter<String>,
    line: usize,
}

impl<R: BufRead> Values<'_, R> {
    fn next(&mut self, ty: Scalar) -> Result<f64, FormatError> {
        match self.encoding {
            Encoding::BinaryLe => {
                let mut buf = [0u8; 8];
                self.r.read_exact(&mut buf[..ty.size()])?;
                Ok(ty.decode(&buf))
            }
            Encoding::Ascii => loop {
                if let Some(t) = self.tokens.next() {
                    return t.parse().map_err(|_| FormatError::Parse { line: self.line, msg: format!("bad number {t}") });
                }
                let mut s = String::new();
                if self.r.read_line(&mut s)? == 0 {
                    return Err(FormatError::Parse { line: self.line, msg: "unexpected end of file".into() });
                }
                self.line += 1;
                self.tokens = s.split_whitespace().map(str::to_string).collect::<Vec<_>>().into_iter();
            },
        }
    }
}

pub fn read_ply<R: BufRead>(mut r: R) -> Result<PlyData, FormatError> {
    let (encoding, elements) = read_header(&mut r)?;
    let mut values = Values { r: &mut r, encoding, tokens: Vec::new().into_iter(), line: 0 };
    let mut out = PlyData::default();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_face {
            for p in &el.props {
                if let Property::Scalar(name, _) = p {
                    out.face_properties.push((name.clone(), Vec::with_capacity(el.count)));
                }
            }
        }
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut scalar_idx = 0;
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = values.next(*ty)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                        if is_face {
                            out.face_properties[scalar_idx].1.push(v);
                            scalar_idx += 1;
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = values.next(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(values.next(*it)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n != 3 {
                                return Err(FormatError::Parse { line: values.line, msg: format!("face with {n} vertices") });
                            }
                            out.faces.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
                        }
                    }
                }
            }
            if is_vertex {
                out.vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    Ok(out)
}

pub fn read_mesh_ply<R: BufRead>(r: R) -> Result<TriangleMesh<f64>, FormatError> {
    let data = read_ply(r)?;
    TriangleMesh::new(data.vertices, data.faces).map_err(|e| FormatError::BadHeader(e.to_string()))
}

pub fn read_points_ply<R: BufRead>(r: R) -> Result<Vec<Vec3<f64>>, FormatError> {
    Ok(read_ply(r)?.vertices)
}

/// Binary little-endian point cloud with `double` coordinates.
pub fn write_points_ply<W: Write>(mut w: W, points: &[Vec3<f64>]) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )?;
    let mut buf = Vec::with_capacity(points.len() * 24);
    for p in points {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Per-face class and display color written next to the triangle indices.
#[derive(Debug, Clone, Copy)]
pub struct FaceLabels<'a> {
    pub class: &'a [u32],
    pub color: &'a [[u8; 3]],
}

/// Binary little-endian triangle mesh with `double` positions, optionally
/// with per-face `class` and `red`/`green`/`blue` properties.
pub fn write_mesh_ply<W: Write>(mut w: W, mesh: &TriangleMesh<f64>, labels: Option<FaceLabels<'_>>) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\n",
        mesh.vertices().len(),
        mesh.face_count()
    )?;
    if labels.is_some() {
        write!(w, "property int class\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n")?;
    }
    writeln!(w, "end_header")?;
    let mut buf = Vec::with_capacity(mesh.vertices().len() * 24 + mesh.face_count() * 17);
    for p in mesh.vertices() {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for (f, tri) in mesh.faces().iter().enumerate() {
        buf.push(3);
        for &i in tri {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
        if let Some(l) = &labels {
            buf.extend_from_slice(&(l.class[f] as i32).to_le_bytes());
            buf.extend_from_slice(&l.color[f]);
        }
    }
    w.write_all(&buf)
}

/// Loads an 8-bit image as 3-channel RGB.
pub fn read_rgb_image(path: &Path) -> Result<Image8, FormatError> {
    let img = image::ImageReader::open(path)?.with_guessed_format()?.decode()?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Image8::from_vec(w as usize, h as usize, 3, img.into_raw())?)
}

/// Loads an 8-bit single-channel image of class ids. Color inputs are
/// rejected rather than converted, since luma of class ids is meaningless.
pub fn read_label_image(path: &Path) -> Result<Image8, FormatError> {
    let img = image::ImageReader::open(path)?.with_guessed_format()?.decode()?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Ok(Image8::from_vec(w as usize, h as usize, 1, g.into_raw())?)
        }
        other => Err(FormatError::BadHeader(format!("label image must be 8-bit grayscale, got {:?}", other.color()))),
    }
}

/// PNG bytes of a 1- or 3-channel image.
pub fn encode_png(image: &Image8) -> Result<Vec<u8>, FormatError> {
    let color = match image.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(FormatError::BadHeader(format!("cannot encode {c}-channel image"))),
    };
    let mut out = Cursor::new(Vec::new());
    image::ImageEncoder::write_image(
        image::codecs::png::PngEncoder::new(&mut out),
        image.data(),
        image.width() as u32,
        image.height() as u32,
        color,
    )?;
    Ok(out.into_inner())
}

pub fn decode_image<R: Read>(mut r: R) -> Result<Image8, FormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let img = image::load_from_memory(&bytes)?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Ok(Image8::from_vec(w as usize, h as usize, 1, g.into_raw())?)
        }
        other => {
            let rgb = other.into_rgb8();
            let (w, h) = rgb.dimensions();
            Ok(Image8::from_vec(w as usize, h as usize, 3, rgb.into_raw())?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriangleMesh<f64> {
        TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn mesh_round_trip() {
        let m = tetra();
        let mut buf = Vec::new();
        write_mesh_ply(&mut buf, &m, None).unwrap();
        assert_eq!(read_mesh_ply(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn labeled_mesh_round_trip() {
        let m = tetra();
        let class = [0, 3, 1, 2];
        let color = [[1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12]];
        let mut buf = Vec::new();
        write_mesh_ply(&mut buf, &m, Some(FaceLabels { class: &class, color: &color })).unwrap();
        let d = read_ply(buf.as_slice()).unwrap();
        assert_eq!(d.faces, m.faces());
        assert_eq!(d.face_properties[0], ("class".to_string(), vec![0.0, 3.0, 1.0, 2.0]));
        assert_eq!(d.face_properties[3].1, vec![3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn points_round_trip_exactly() {
        let pts = vec![Vec3::new(0.1, -2.5, 1e-7), Vec3::new(1.0 / 3.0, 7.0, -0.0)];
        let mut buf = Vec::new();
        write_points_ply(&mut buf, &pts).unwrap();
        assert_eq!(read_points_ply(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn ascii_with_float_and_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment hand written\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar intensity\nelement face 1\nproperty list uchar uint vertex_index\nend_header\n0 0 0 9\n1 0 0 9\n0 1 0 9\n3 0 1 2\n";
        let m = read_mesh_ply(text.as_bytes()).unwrap();
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.vertices()[1], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(read_ply("plx\n".as_bytes()).is_err());
        assert!(read_ply("ply\nformat binary_big_endian 1.0\nend_header\n".as_bytes()).is_err());
        let quad = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(read_ply(quad.as_bytes()).is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(read_ply(truncated.as_bytes()).is_err());
    }

    #[test]
    fn png_round_trip() {
        let mut img = Image8::new(5, 3, 3);
        img.set(2, 1, 0, 200);
        let bytes = encode_png(&img).unwrap();
        assert_eq!(decode_image(bytes.as_slice()).unwrap(), img);
        let gray = Image8::filled(4, 4, &[7]);
        assert_eq!(decode_image(encode_png(&gray).unwrap().as_slice()).unwrap(), gray);
    }
}

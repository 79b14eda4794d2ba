//! PLY / XYZ / OBJ readers and writers.
//!
//! PLY is accepted as `ascii` or `binary_little_endian` (big-endian too), with
//! any scalar property type; everything is widened to `f64` on load.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{ReliefError, Result};
use crate::mesh::ReliefMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match extension(path)?.as_str() {
            "ply" => Some(CloudFormat::Ply),
            "xyz" | "txt" | "pts" => Some(CloudFormat::Xyz),
            _ => None,
        }
    }

    /// Sniffs the format from leading bytes: PLY files start with `ply`.
    pub fn sniff(bytes: &[u8]) -> Self {
        if bytes.starts_with(b"ply") {
            CloudFormat::Ply
        } else {
            CloudFormat::Xyz
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match extension(path)?.as_str() {
            "ply" => Some(MeshFormat::Ply),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ply" => Some(MeshFormat::Ply),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn malformed(msg: impl Into<String>) -> ReliefError {
    ReliefError::MalformedFile(msg.into())
}

/// Loads a point cloud with normals.
pub fn load_cloud<R: Read>(source: R, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::Xyz => load_xyz(source),
        CloudFormat::Ply => {
            let ply = read_ply(source)?;
            let normals = ply.normals.ok_or(ReliefError::MissingNormals)?;
            PointCloud::new(ply.positions, normals)
        }
    }
}

fn load_xyz<R: Read>(source: R) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (lineno, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| malformed(format!("line {}: bad number {s:?}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        match cols.len() {
            3 => return Err(ReliefError::MissingNormals),
            n if n >= 6 => {
                points.push(Point3::new(cols[0], cols[1], cols[2]));
                normals.push(Vector3::new(cols[3], cols[4], cols[5]));
            }
            n => {
                return Err(malformed(format!(
                    "line {}: expected 6 columns, found {n}",
                    lineno + 1
                )))
            }
        }
    }
    PointCloud::new(points, normals)
}

/// Loads a triangle mesh (vertex normals are optional and recomputed-free).
pub fn load_mesh<R: Read>(source: R, format: MeshFormat) -> Result<ReliefMesh> {
    match format {
        MeshFormat::Ply => {
            let ply = read_ply(source)?;
            let n = ply.positions.len();
            let normals = ply.normals.unwrap_or_else(|| vec![Vector3::z(); n]);
            Ok(ReliefMesh::new(ply.positions, ply.faces, normals))
        }
        MeshFormat::Obj => load_obj(source),
    }
}

fn load_obj<R: Read>(source: R) -> Result<ReliefMesh> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let bad = || malformed(format!("obj line {}", lineno + 1));
        let num =
            |s: Option<&str>| -> Result<f64> { s.ok_or_else(bad)?.parse().map_err(|_| bad()) };
        match it.next() {
            Some("v") => vertices.push(Point3::new(
                num(it.next())?,
                num(it.next())?,
                num(it.next())?,
            )),
            Some("vn") => normals.push(Vector3::new(
                num(it.next())?,
                num(it.next())?,
                num(it.next())?,
            )),
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|tok| {
                        let v = tok.split('/').next().unwrap_or("");
                        v.parse::<i64>()
                            .ok()
                            .filter(|&i| i >= 1)
                            .map(|i| (i - 1) as u32)
                            .ok_or_else(bad)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad());
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if normals.len() != vertices.len() {
        normals = vec![Vector3::z(); vertices.len()];
    }
    check_faces(&faces, vertices.len())?;
    Ok(ReliefMesh::new(vertices, faces, normals))
}

fn check_faces(faces: &[[u32; 3]], nverts: usize) -> Result<()> {
    if let Some(f) = faces
        .iter()
        .find(|f| f.iter().any(|&i| i as usize >= nverts))
    {
        return Err(malformed(format!("face {f:?} references a missing vertex")));
    }
    Ok(())
}

/// Writes a mesh. PLY output is `binary_little_endian` with double precision.
pub fn save_mesh<W: Write>(mesh: &ReliefMesh, sink: W, format: MeshFormat) -> Result<()> {
    if mesh.vertices().len() < 3 || mesh.triangles().is_empty() {
        return Err(ReliefError::EmptyMesh);
    }
    let mut w = std::io::BufWriter::new(sink);
    match format {
        MeshFormat::Ply => {
            write!(
                w,
                "ply\nformat binary_little_endian 1.0\ncomment bas-relief mesh\n\
                 element vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
                 property double nx\nproperty double ny\nproperty double nz\n\
                 element face {}\nproperty list uchar int vertex_indices\nend_header\n",
                mesh.vertices().len(),
                mesh.triangles().len()
            )?;
            for (p, n) in mesh.vertices().iter().zip(mesh.normals()) {
                for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            for t in mesh.triangles() {
                w.write_all(&[3u8])?;
                for &i in t {
                    w.write_all(&(i as i32).to_le_bytes())?;
                }
            }
        }
        MeshFormat::Obj => {
            writeln!(w, "# bas-relief mesh")?;
            for p in mesh.vertices() {
                writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
            }
            for n in mesh.normals() {
                writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
            }
            for t in mesh.triangles() {
                let [a, b, c] = t.map(|i| i + 1);
                writeln!(w, "f {a}//{a} {b}//{b} {c}//{c}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a point cloud with normals as binary little-endian PLY.
pub fn save_cloud<W: Write>(cloud: &PointCloud, sink: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(sink);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nend_header\n",
        cloud.len()
    )?;
    for (p, n) in cloud.points().iter().zip(cloud.normals()) {
        for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

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
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
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
    LittleEndian,
    BigEndian,
}

struct PlyContents {
    positions: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    faces: Vec<[u32; 3]>,
}

fn read_ply<R: Read>(source: R) -> Result<PlyContents> {
    let mut reader = BufReader::new(source);
    let mut line = String::new();
    let next_line = |reader: &mut BufReader<R>, line: &mut String| -> Result<()> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(malformed("unexpected end of PLY header"));
        }
        Ok(())
    };
    next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(malformed("missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut reader, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _ver] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::LittleEndian,
                    "binary_big_endian" => Encoding::BigEndian,
                    other => return Err(malformed(format!("unknown PLY format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| malformed(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element"))?;
                let (Some(c), Some(i)) = (Scalar::parse(cnt), Scalar::parse(item)) else {
                    return Err(malformed(format!("bad list types {cnt} {item}")));
                };
                el.props.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| malformed(format!("bad type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            other => return Err(malformed(format!("unexpected header line {other:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed("missing format line"))?;
    let vertex = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| malformed("no vertex element"))?;
    let col = |n: &str| vertex.props.iter().position(|p| p.name() == n);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(malformed("vertex element lacks x/y/z"));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let mut body = BodyReader::new(reader, encoding);
    let mut positions = Vec::new();
    let mut normals = normal_cols.map(|_| Vec::new());
    let mut faces = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let mut row = vec![0.0f64; el.props.len()];
        for _ in 0..el.count {
            let mut poly: Vec<u32> = Vec::new();
            for (k, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => row[k] = body.scalar(*ty)?,
                    Property::List(name, cnt, item) => {
                        let n = body.scalar(*cnt)?;
                        if !(0.0..=1e6).contains(&n) {
                            return Err(malformed("bad list length"));
                        }
                        let take = is_face && (name == "vertex_indices" || name == "vertex_index");
                        for _ in 0..n as usize {
                            let v = body.scalar(*item)?;
                            if take {
                                if v < 0.0 {
                                    return Err(malformed("negative face index"));
                                }
                                poly.push(v as u32);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                positions.push(Point3::new(row[ix], row[iy], row[iz]));
                if let (Some(cols), Some(ns)) = (normal_cols, normals.as_mut()) {
                    ns.push(Vector3::new(row[cols[0]], row[cols[1]], row[cols[2]]));
                }
            } else if is_face && poly.len() >= 3 {
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
        }
    }
    check_faces(&faces, positions.len())?;
    Ok(PlyContents {
        positions,
        normals,
        faces,
    })
}

struct BodyReader<R: Read> {
    reader: BufReader<R>,
    encoding: Encoding,
    tokens: std::collections::VecDeque<String>,
}

impl<R: Read> BodyReader<R> {
    fn new(reader: BufReader<R>, encoding: Encoding) -> Self {
        Self {
            reader,
            encoding,
            tokens: Default::default(),
        }
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            Encoding::Ascii => {
                while self.tokens.is_empty() {
                    let mut line = String::new();
                    if self.reader.read_line(&mut line)? == 0 {
                        return Err(malformed("unexpected end of PLY body"));
                    }
                    self.tokens
                        .extend(line.split_whitespace().map(str::to_string));
                }
                let tok = self.tokens.pop_front().expect("non-empty");
                tok.parse::<f64>()
                    .map_err(|_| malformed(format!("bad number {tok:?}")))
            }
            enc => {
                let mut buf = [0u8; 8];
                let b = &mut buf[..ty.size()];
                self.reader.read_exact(b).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        malformed("truncated PLY body")
                    } else {
                        ReliefError::Io(e)
                    }
                })?;
                let le = enc == Encoding::LittleEndian;
                macro_rules! conv {
                    ($t:ty, $n:expr) => {{
                        let mut a = [0u8; $n];
                        a.copy_from_slice(&b[..$n]);
                        (if le {
                            <$t>::from_le_bytes(a)
                        } else {
                            <$t>::from_be_bytes(a)
                        }) as f64
                    }};
                }
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => conv!(i16, 2),
                    Scalar::U16 => conv!(u16, 2),
                    Scalar::I32 => conv!(i32, 4),
                    Scalar::U32 => conv!(u32, 4),
                    Scalar::F32 => conv!(f32, 4),
                    Scalar::F64 => conv!(f64, 8),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_four_points() {
        let src = "0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n1 1 0 0 0 1\n";
        let cloud = load_cloud(src.as_bytes(), CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 4);
        assert!(cloud.normals().iter().all(|n| *n == Vector3::z()));
    }

    #[test]
    fn xyz_without_normals() {
        let src = "0 0 0\n1 0 0\n0 1 0\n1 1 0\n";
        let err = load_cloud(src.as_bytes(), CloudFormat::Xyz).unwrap_err();
        assert_eq!(err.code(), "MissingNormals");
    }

    #[test]
    fn ascii_ply_renormalizes() {
        let src = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
                   property float z\nproperty float nx\nproperty float ny\nproperty float nz\n\
                   end_header\n0 0 0 0 0 2\n1 0 0 0 0 2\n0 1 0 0 0 2\n1 1 0 0 0 2\n";
        let cloud = load_cloud(src.as_bytes(), CloudFormat::Ply).unwrap();
        assert_eq!(cloud.normals()[0], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn ply_missing_nx() {
        let src = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
                   property float z\nproperty float ny\nproperty float nz\nend_header\n\
                   0 0 0 0 1\n1 0 0 0 1\n0 1 0 0 1\n1 1 0 0 1\n";
        let err = load_cloud(src.as_bytes(), CloudFormat::Ply).unwrap_err();
        assert_eq!(err.code(), "MissingNormals");
    }

    #[test]
    fn binary_float32_ply() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 4\n\
            property float x\nproperty float y\nproperty float z\nproperty float nx\n\
            property float ny\nproperty float nz\nproperty uchar red\nend_header\n"
            .to_vec();
        for (x, y) in [(0.0f32, 0.0f32), (1.0, 0.0), (0.0, 1.0), (1.5, 1.0)] {
            for v in [x, y, 0.25, 0.0, 0.0, 1.0] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.push(200);
        }
        let cloud = load_cloud(&bytes[..], CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 4);
        assert_eq!(cloud.points()[3], Point3::new(1.5, 1.0, 0.25));
    }

    #[test]
    fn truncated_binary_is_malformed() {
        let bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 4\n\
            property float x\nproperty float y\nproperty float z\nproperty float nx\n\
            property float ny\nproperty float nz\nend_header\n\x00\x00"
            .to_vec();
        let err = load_cloud(&bytes[..], CloudFormat::Ply).unwrap_err();
        assert_eq!(err.code(), "MalformedFile");
    }

    fn triangle() -> ReliefMesh {
        ReliefMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.1),
                Point3::new(1.0, 0.0, 0.2),
                Point3::new(0.0, 1.0, 1.0 / 3.0),
            ],
            vec![[0, 1, 2]],
            vec![Vector3::z(); 3],
        )
    }

    #[test]
    fn ply_mesh_header_and_round_trip() {
        let mesh = triangle();
        let mut buf = Vec::new();
        save_mesh(&mesh, &mut buf, MeshFormat::Ply).unwrap();
        let end = buf.windows(10).position(|w| w == b"end_header").unwrap();
        let header = String::from_utf8_lossy(&buf[..end]);
        assert!(header.contains("element face 1"));
        let back = load_mesh(&buf[..], MeshFormat::Ply).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let mesh = triangle();
        let mut buf = Vec::new();
        save_mesh(&mesh, &mut buf, MeshFormat::Obj).unwrap();
        let back = load_mesh(&buf[..], MeshFormat::Obj).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn empty_mesh_rejected() {
        let mut mesh = triangle();
        mesh = ReliefMesh::new(mesh.vertices().to_vec(), vec![], mesh.normals().to_vec());
        let err = save_mesh(&mesh, Vec::new(), MeshFormat::Ply).unwrap_err();
        assert_eq!(err.code(), "EmptyMesh");
    }
}

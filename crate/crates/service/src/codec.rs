//! Binary frame codec: `RFM1` header, then z values and normals as `f32`.

use bytes::{BufMut, Bytes, BytesMut};
use relief_core::{FrameResult, Vector3};

pub const MAGIC: u32 = 0x5246_4D31;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMessage {
    pub seq: u32,
    pub span: f32,
    pub z: Vec<f32>,
    /// `3 * z.len()` components, xyz per point.
    pub normals: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    Short(usize),
    BadMagic(u32),
    Length { expected: usize, found: usize },
}

impl std::fmt::Display for DecodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeError::Short(n) => write!(f, "frame of {n} bytes is shorter than its header"),
            DecodeError::BadMagic(m) => write!(f, "bad frame magic {m:#010x}"),
            DecodeError::Length { expected, found } => {
                write!(f, "frame length {found}, header implies {expected}")
            }
        }
    }
}

impl std::error::Error for DecodeError {}

impl FrameMessage {
    pub fn from_frame(frame: &FrameResult) -> Self {
        Self {
            seq: frame.seq as u32,
            span: frame.span as f32,
            z: frame.z.iter().map(|&v| v as f32).collect(),
            normals: flatten(&frame.normals),
        }
    }

    pub fn point_count(&self) -> usize {
        self.z.len()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 16 * self.z.len()
    }

    pub fn encode(&self) -> Bytes {
        assert_eq!(self.normals.len(), 3 * self.z.len());
        let mut b = BytesMut::with_capacity(self.encoded_len());
        b.put_u32_le(MAGIC);
        b.put_u32_le(self.seq);
        b.put_u32_le(self.z.len() as u32);
        b.put_f32_le(self.span);
        for &v in self.z.iter().chain(&self.normals) {
            b.put_f32_le(v);
        }
        b.freeze()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        if buf.len() < HEADER_LEN {
            return Err(DecodeError::Short(buf.len()));
        }
        let word = |i: usize| u32::from_le_bytes(buf[4 * i..4 * i + 4].try_into().unwrap());
        let magic = word(0);
        if magic != MAGIC {
            return Err(DecodeError::BadMagic(magic));
        }
        let n = word(2) as usize;
        let expected = HEADER_LEN + 16 * n;
        if buf.len() != expected {
            return Err(DecodeError::Length {
                expected,
                found: buf.len(),
            });
        }
        let floats: Vec<f32> = buf[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            seq: word(1),
            span: f32::from_bits(word(3)),
            z: floats[..n].to_vec(),
            normals: floats[n..].to_vec(),
        })
    }
}

fn flatten(normals: &[Vector3<f64>]) -> Vec<f32> {
    normals
        .iter()
        .flat_map(|n| [n.x as f32, n.y as f32, n.z as f32])
        .collect()
}

/// XY positions as interleaved little-endian `f32` pairs.
pub fn encode_xy(xy: &[[f64; 2]]) -> Bytes {
    let mut b = BytesMut::with_capacity(8 * xy.len());
    for p in xy {
        b.put_f32_le(p[0] as f32);
        b.put_f32_le(p[1] as f32);
    }
    b.freeze()
}

/// Triangle indices as little-endian `u32` triples.
pub fn encode_triangles(tris: &[[u32; 3]]) -> Bytes {
    let mut b = BytesMut::with_capacity(12 * tris.len());
    for t in tris {
        for &i in t {
            b.put_u32_le(i);
        }
    }
    b.freeze()
}

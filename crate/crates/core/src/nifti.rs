//! Single-file NIfTI-1 (`.nii` / `.nii.gz`) reading and writing.
//!
//! Supported voxel types are uint8, int16, int32 and float32. Files are
//! written little-endian with a 348-byte header, a zeroed 4-byte extension
//! flag and data at offset 352. Gzip is detected from the stream magic on
//! read and selected by a `.gz` suffix on write.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::volume::{diagonal_affine, ImageVolume, LabelVolume, Volume, Voxel};

pub const HEADER_SIZE: usize = 348;
pub const DEFAULT_VOX_OFFSET: usize = 352;

const INTENT_VECTOR: i16 = 1007;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const INTENT_CODE: usize = 68;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    UInt8,
    Int16,
    Int32,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::UInt8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::UInt8,
            4 => DataType::Int16,
            8 => DataType::Int32,
            16 => DataType::Float32,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn size(self) -> usize {
        match self {
            DataType::UInt8 => 1,
            DataType::Int16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
        }
    }

    pub fn is_integer(self) -> bool {
        self != DataType::Float32
    }

    fn range(self) -> (f64, f64) {
        match self {
            DataType::UInt8 => (0.0, u8::MAX as f64),
            DataType::Int16 => (i16::MIN as f64, i16::MAX as f64),
            DataType::Int32 => (i32::MIN as f64, i32::MAX as f64),
            DataType::Float32 => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// The subset of NIfTI-1 header fields this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
    pub big_endian: bool,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            intent_code: 0,
            datatype: DataType::Float32.code(),
            bitpix: 32,
            pixdim: [1.0; 8],
            vox_offset: DEFAULT_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            // millimetres + seconds
            xyzt_units: 2 | 8,
            qform_code: 0,
            sform_code: 1,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            magic: *b"n+1\0",
            big_endian: false,
        }
    }
}

impl NiftiHeader {
    pub fn parse(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_SIZE {
            return Err(Error::InvalidFormat(format!(
                "header is {} bytes, expected {HEADER_SIZE}",
                buf.len()
            )));
        }
        if LittleEndian::read_i32(&buf[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
            Ok(Self::parse_with::<LittleEndian>(buf, false))
        } else if BigEndian::read_i32(&buf[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
            Ok(Self::parse_with::<BigEndian>(buf, true))
        } else {
            Err(Error::InvalidFormat("sizeof_hdr is not 348; not a NIfTI-1 file".into()))
        }
    }

    fn parse_with<B: ByteOrder>(buf: &[u8], big_endian: bool) -> Self {
        let f32_at = |o: usize| B::read_f32(&buf[o..]);
        let i16_at = |o: usize| B::read_i16(&buf[o..]);
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(offsets::SROW_X + 16 * r + 4 * c);
            }
        }
        NiftiHeader {
            dim: std::array::from_fn(|i| i16_at(offsets::DIM + 2 * i)),
            intent_code: i16_at(offsets::INTENT_CODE),
            datatype: i16_at(offsets::DATATYPE),
            bitpix: i16_at(offsets::BITPIX),
            pixdim: std::array::from_fn(|i| f32_at(offsets::PIXDIM + 4 * i)),
            vox_offset: f32_at(offsets::VOX_OFFSET),
            scl_slope: f32_at(offsets::SCL_SLOPE),
            scl_inter: f32_at(offsets::SCL_INTER),
            xyzt_units: buf[offsets::XYZT_UNITS],
            qform_code: i16_at(offsets::QFORM_CODE),
            sform_code: i16_at(offsets::SFORM_CODE),
            quatern: std::array::from_fn(|i| f32_at(offsets::QUATERN_B + 4 * i)),
            qoffset: std::array::from_fn(|i| f32_at(offsets::QOFFSET_X + 4 * i)),
            srow,
            magic: buf[offsets::MAGIC..offsets::MAGIC + 4].try_into().unwrap(),
            big_endian,
        }
    }

    /// Little-endian 348-byte encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        type E = LittleEndian;
        let mut buf = vec![0u8; HEADER_SIZE];
        E::write_i32(&mut buf[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
        for (i, &d) in self.dim.iter().enumerate() {
            E::write_i16(&mut buf[offsets::DIM + 2 * i..], d);
        }
        E::write_i16(&mut buf[offsets::INTENT_CODE..], self.intent_code);
        E::write_i16(&mut buf[offsets::DATATYPE..], self.datatype);
        E::write_i16(&mut buf[offsets::BITPIX..], self.bitpix);
        for (i, &p) in self.pixdim.iter().enumerate() {
            E::write_f32(&mut buf[offsets::PIXDIM + 4 * i..], p);
        }
        E::write_f32(&mut buf[offsets::VOX_OFFSET..], self.vox_offset);
        E::write_f32(&mut buf[offsets::SCL_SLOPE..], self.scl_slope);
        E::write_f32(&mut buf[offsets::SCL_INTER..], self.scl_inter);
        buf[offsets::XYZT_UNITS] = self.xyzt_units;
        E::write_i16(&mut buf[offsets::QFORM_CODE..], self.qform_code);
        E::write_i16(&mut buf[offsets::SFORM_CODE..], self.sform_code);
        for i in 0..3 {
            E::write_f32(&mut buf[offsets::QUATERN_B + 4 * i..], self.quatern[i]);
            E::write_f32(&mut buf[offsets::QOFFSET_X + 4 * i..], self.qoffset[i]);
        }
        for (r, row) in self.srow.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                E::write_f32(&mut buf[offsets::SROW_X + 16 * r + 4 * c..], v);
            }
        }
        buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(&self.magic);
        buf
    }

    /// Spatial dims; any dimensions beyond the third must be singleton.
    pub fn spatial_dims(&self) -> Result<[usize; 3]> {
        let n = self.dim[0];
        if !(1..=7).contains(&n) {
            return Err(Error::InvalidFormat(format!("dim[0] = {n} is out of range")));
        }
        let extra_singleton = (4..=n as usize).all(|i| self.dim[i] == 1);
        if n < 3 || !extra_singleton {
            return Err(Error::InvalidFormat(format!(
                "expected a 3D volume, header has {n} dimensions ({:?})",
                &self.dim[1..=n as usize]
            )));
        }
        let dims = [self.dim[1], self.dim[2], self.dim[3]];
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::InvalidFormat(format!("non-positive dimension in {dims:?}")));
        }
        Ok(dims.map(|d| d as usize))
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|i| {
            let p = self.pixdim[i + 1].abs() as f64;
            if p > 0.0 && p.is_finite() {
                p
            } else {
                1.0
            }
        })
    }

    /// Voxel-to-world affine: sform, else qform, else the pixdim diagonal.
    pub fn affine(&self) -> Matrix4<f64> {
        if self.sform_code > 0 {
            let mut m = Matrix4::identity();
            for r in 0..3 {
                for c in 0..4 {
                    m[(r, c)] = self.srow[r][c] as f64;
                }
            }
            m
        } else if self.qform_code > 0 {
            self.qform_affine()
        } else {
            diagonal_affine(self.spacing())
        }
    }

    fn qform_affine(&self) -> Matrix4<f64> {
        let [b, c, d] = self.quatern.map(|v| v as f64);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let r = [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ];
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let s = self.spacing();
        let scale = [s[0], s[1], s[2] * qfac];
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = r[i][j] * scale[j];
            }
            m[(i, 3)] = self.qoffset[i] as f64;
        }
        m
    }

    fn has_identity_scaling(&self) -> bool {
        self.scl_slope == 0.0 || !self.scl_slope.is_finite() || (self.scl_slope == 1.0 && self.scl_inter == 0.0)
    }
}

/// A volume loaded without a caller-imposed voxel type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Image(ImageVolume),
    Labels(LabelVolume),
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Raw {
    header: NiftiHeader,
    dims: [usize; 3],
    datatype: DataType,
    values: Vec<f64>,
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Raw> {
    let truncated = |what: &str| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("truncated NIfTI file: {what}")),
        )
    };
    if bytes.len() < HEADER_SIZE {
        return Err(truncated("header"));
    }
    let header = NiftiHeader::parse(bytes)?;
    if &header.magic[..3] != b"n+1" {
        return Err(Error::InvalidFormat(
            "magic is not \"n+1\"; only single-file NIfTI-1 is supported".into(),
        ));
    }
    let dims = header.spatial_dims()?;
    let datatype = DataType::from_code(header.datatype)?;
    let offset = header.vox_offset.max(HEADER_SIZE as f32) as usize;
    let n: usize = dims.iter().product();
    let end = offset + n * datatype.size();
    if bytes.len() < end {
        return Err(truncated("voxel data"));
    }
    let data = &bytes[offset..end];
    let values = if header.big_endian {
        decode_values::<BigEndian>(data, datatype, n)
    } else {
        decode_values::<LittleEndian>(data, datatype, n)
    };
    Ok(Raw {
        header,
        dims,
        datatype,
        values,
    })
}

fn decode_values<B: ByteOrder>(data: &[u8], dt: DataType, n: usize) -> Vec<f64> {
    match dt {
        DataType::UInt8 => data.iter().map(|&v| v as f64).collect(),
        DataType::Int16 => (0..n).map(|i| B::read_i16(&data[2 * i..]) as f64).collect(),
        DataType::Int32 => (0..n).map(|i| B::read_i32(&data[4 * i..]) as f64).collect(),
        DataType::Float32 => (0..n).map(|i| B::read_f32(&data[4 * i..]) as f64).collect(),
    }
}

impl Raw {
    fn geometry(&self) -> ([usize; 3], [f64; 3], Matrix4<f64>) {
        (self.dims, self.header.spacing(), self.header.affine())
    }

    fn into_image(self) -> Result<ImageVolume> {
        let (dims, spacing, affine) = self.geometry();
        let (slope, inter) = (self.header.scl_slope as f64, self.header.scl_inter as f64);
        // Identity scaling is skipped so that stored values, signed zeros
        // included, come back bit for bit.
        let scaled = !self.header.has_identity_scaling();
        let data = self
            .values
            .into_iter()
            .map(|v| if scaled { (v * slope + inter) as f32 } else { v as f32 })
            .collect();
        Volume::new(data, dims, spacing, affine)
    }

    fn into_labels(self) -> Result<LabelVolume> {
        if !self.header.has_identity_scaling() {
            return Err(Error::InvalidFormat(
                "intensity-scaled data cannot be read as a label map".into(),
            ));
        }
        let (dims, spacing, affine) = self.geometry();
        let mut data = Vec::with_capacity(self.values.len());
        for v in self.values {
            if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                return Err(Error::InvalidFormat(format!("non-integer value {v} in a label map")));
            }
            data.push(v as i32);
        }
        Volume::new(data, dims, spacing, affine)
    }
}

/// Reads a volume, returning labels for unscaled integer data and an image
/// otherwise.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let raw = decode(path, &read_bytes(path)?)?;
    if raw.datatype.is_integer() && raw.header.has_identity_scaling() {
        Ok(AnyVolume::Labels(raw.into_labels()?))
    } else {
        Ok(AnyVolume::Image(raw.into_image()?))
    }
}

/// Reads any supported datatype as float intensities, applying
/// `scl_slope`/`scl_inter` when the slope is non-zero.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageVolume> {
    let path = path.as_ref();
    decode(path, &read_bytes(path)?)?.into_image()
}

/// Reads an integer label map. Float files are accepted when every value
/// is integral.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    decode(path, &read_bytes(path)?)?.into_labels()
}

fn header_for(dims: &[usize], spacing: [f64; 3], affine: &Matrix4<f64>, dt: DataType) -> Result<NiftiHeader> {
    let mut h = NiftiHeader {
        datatype: dt.code(),
        bitpix: (dt.size() * 8) as i16,
        ..NiftiHeader::default()
    };
    h.dim[0] = dims.len() as i16;
    for (i, &d) in dims.iter().enumerate() {
        h.dim[i + 1] = i16::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds NIfTI-1 limits")))?;
    }
    for (p, &s) in h.pixdim[1..4].iter_mut().zip(&spacing) {
        *p = s as f32;
    }
    for r in 0..3 {
        for c in 0..4 {
            h.srow[r][c] = affine[(r, c)] as f32;
        }
    }
    Ok(h)
}

fn encode<T: Voxel>(values: &[T], dt: DataType, quantise: bool) -> Result<Vec<u8>> {
    if dt.is_integer() && T::INTERPOLABLE && !quantise {
        return Err(Error::invalid(format!(
            "float data cannot be stored as {dt:?} without explicit quantisation"
        )));
    }
    let (lo, hi) = dt.range();
    let mut out = vec![0u8; values.len() * dt.size()];
    for (i, v) in values.iter().enumerate() {
        let mut x = v.to_f64();
        if dt.is_integer() {
            x = x.round();
        }
        if !(lo..=hi).contains(&x) {
            return Err(Error::invalid(format!("value {x} does not fit in {dt:?}")));
        }
        match dt {
            DataType::UInt8 => out[i] = x as u8,
            DataType::Int16 => LittleEndian::write_i16(&mut out[2 * i..], x as i16),
            DataType::Int32 => LittleEndian::write_i32(&mut out[4 * i..], x as i32),
            DataType::Float32 => {
                if !T::INTERPOLABLE && (x as f32) as f64 != x {
                    return Err(Error::invalid(format!("label {x} is not exactly representable in float32")));
                }
                LittleEndian::write_f32(&mut out[4 * i..], x as f32)
            }
        }
    }
    Ok(out)
}

fn write_file(path: &Path, header: &NiftiHeader, payload: &[u8]) -> Result<()> {
    let mut bytes = header.to_bytes();
    bytes.extend_from_slice(&[0u8; DEFAULT_VOX_OFFSET - HEADER_SIZE]);
    bytes.extend_from_slice(payload);
    let gz = path.extension().is_some_and(|e| e == "gz");
    let out = if gz {
        let mut enc = GzBuilder::new().mtime(0).write(Vec::new(), Compression::fast());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `v` as `datatype`. Float data is only written to integer types
/// when `quantise` is set (values are then rounded); out-of-range values
/// are always an error. No intensity scaling is applied.
pub fn write_nifti<T: Voxel>(v: &Volume<T>, path: impl AsRef<Path>, datatype: DataType, quantise: bool) -> Result<()> {
    let header = header_for(&v.dims(), v.spacing(), v.affine(), datatype)?;
    let payload = encode(v.data(), datatype, quantise)?;
    write_file(path.as_ref(), &header, &payload)
}

/// Writes a dense 3-vector field as a float32 5D NIfTI with the vector
/// intent (dims `nx, ny, nz, 1, 3`), component-major.
pub fn write_vector_field(
    vectors: &[[f64; 3]],
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: &Matrix4<f64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    if vectors.len() != dims.iter().product::<usize>() {
        return Err(Error::invalid("vector field length does not match dims"));
    }
    let mut header = header_for(&[dims[0], dims[1], dims[2], 1, 3], spacing, affine, DataType::Float32)?;
    header.intent_code = INTENT_VECTOR;
    let mut payload = Vec::with_capacity(vectors.len() * 12);
    for c in 0..3 {
        for v in vectors {
            payload.extend_from_slice(&(v[c] as f32).to_le_bytes());
        }
    }
    write_file(path.as_ref(), &header, &payload)
}

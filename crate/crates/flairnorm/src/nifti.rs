//! Bit-exact NIfTI-1 reader/writer for volumes and masks.
//!
//! Supports single-file `.nii` and gzip-compressed `.nii.gz` (detected by
//! magic-byte sniffing, so misnamed files still load), plus `.hdr`/`.img`
//! header pairs on read. Both endiannesses are read; written files are
//! always little-endian single-file with the voxel payload at byte 352.
//! qform/sform spatial transforms are ignored: the toolkit operates in
//! voxel space with spacing only.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::volume::{Mask, MaskKind, Volume, VolumeError};

const HEADER_SIZE: usize = 348;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a NIfTI-1 file: sizeof_hdr is {0}, expected 348")]
    InvalidHeaderSize(i32),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("bitpix {bitpix} inconsistent with datatype code {datatype}")]
    InconsistentBitpix { datatype: i16, bitpix: i16 },
    #[error("unsupported dimensionality dim[0] = {0}, expected 2 or 3")]
    UnsupportedDimensionality(i16),
    #[error("invalid extent {0} in header dim")]
    InvalidExtent(i16),
    #[error("non-positive voxel spacing {0} in header pixdim")]
    InvalidSpacing(f32),
    #[error("truncated voxel data: need {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("header-pair data file not found: {0}")]
    MissingDataFile(PathBuf),
    #[error("mask voxel {index} holds {value}, expected exactly 0 or 1")]
    NonBinaryMask { index: usize, value: f64 },
    #[error("datatype {datatype:?} cannot represent value {value} at index {index} without loss")]
    LossyDatatype {
        datatype: Datatype,
        index: usize,
        value: f64,
    },
    #[error("volume dims {0} exceed the NIfTI-1 i16 extent limit")]
    DimsTooLarge(usize),
    #[error(transparent)]
    InvalidVolume(#[from] VolumeError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NiftiError + '_ {
    move |source| NiftiError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Voxel datatypes supported on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn bitpix(self) -> i16 {
        match self {
            Datatype::Uint8 => 8,
            Datatype::Int16 => 16,
            Datatype::Int32 => 32,
            Datatype::Float32 => 32,
            Datatype::Float64 => 64,
        }
    }

    pub fn byte_size(self) -> usize {
        self.bitpix() as usize / 8
    }

    pub fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => Datatype::Uint8,
            4 => Datatype::Int16,
            8 => Datatype::Int32,
            16 => Datatype::Float32,
            64 => Datatype::Float64,
            _ => return None,
        })
    }
}

/// The NIfTI-1 header fields this toolkit reads and writes.
///
/// Unused fields (intent, qform/sform, display range, ...) are zeroed on
/// write and ignored on read.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    /// True when the file stores multi-byte values big-endian.
    pub big_endian: bool,
}

impl NiftiHeader {
    /// Volume dims implied by the header; 2D files get nz = 1.
    pub fn dims(&self) -> Result<(usize, usize, usize), NiftiError> {
        let nd = self.dim[0];
        if nd != 2 && nd != 3 {
            return Err(NiftiError::UnsupportedDimensionality(nd));
        }
        let take = |v: i16| -> Result<usize, NiftiError> {
            if v < 1 {
                Err(NiftiError::InvalidExtent(v))
            } else {
                Ok(v as usize)
            }
        };
        let nx = take(self.dim[1])?;
        let ny = take(self.dim[2])?;
        let nz = if nd == 3 { take(self.dim[3])? } else { 1 };
        Ok((nx, ny, nz))
    }

    /// Spacing in mm; a missing third axis on 2D files defaults to 1 mm.
    pub fn spacing(&self) -> Result<(f64, f64, f64), NiftiError> {
        let need = |v: f32| -> Result<f64, NiftiError> {
            if v > 0.0 {
                Ok(v as f64)
            } else {
                Err(NiftiError::InvalidSpacing(v))
            }
        };
        let sx = need(self.pixdim[1])?;
        let sy = need(self.pixdim[2])?;
        let sz = if self.dim[0] == 3 {
            need(self.pixdim[3])?
        } else if self.pixdim[3] > 0.0 {
            self.pixdim[3] as f64
        } else {
            1.0
        };
        Ok((sx, sy, sz))
    }

    pub fn datatype(&self) -> Result<Datatype, NiftiError> {
        let dt = Datatype::from_code(self.datatype)
            .ok_or(NiftiError::UnsupportedDatatype(self.datatype))?;
        if dt.bitpix() != self.bitpix {
            return Err(NiftiError::InconsistentBitpix {
                datatype: self.datatype,
                bitpix: self.bitpix,
            });
        }
        Ok(dt)
    }
}

// Field accessors over the raw 348 header bytes, endian-aware.
struct RawHeader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl<'a> RawHeader<'a> {
    fn i16_at(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.big_endian {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }

    fn i32_at(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.big_endian {
            i32::from_be_bytes(b)
        } else {
            i32::from_le_bytes(b)
        }
    }

    fn f32_at(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        if self.big_endian {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }
}

/// Read a file into memory, transparently gunzipping when the gzip magic
/// (0x1f 0x8b) is present.
fn read_bytes(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let raw = fs::read(path).map_err(io_err(path))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::TruncatedData {
            expected: HEADER_SIZE,
            actual: bytes.len(),
        });
    }
    // Endianness is detected through the mandatory sizeof_hdr constant.
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = match le {
        348 => false,
        _ if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 => true,
        _ => return Err(NiftiError::InvalidHeaderSize(le)),
    };
    let raw = RawHeader { bytes, big_endian };

    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[344..348]);
    if &magic != MAGIC_SINGLE && &magic != MAGIC_PAIR {
        return Err(NiftiError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = raw.i16_at(40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = raw.f32_at(76 + 4 * i);
    }

    Ok(NiftiHeader {
        sizeof_hdr: raw.i32_at(0),
        dim,
        datatype: raw.i16_at(70),
        bitpix: raw.i16_at(72),
        pixdim,
        vox_offset: raw.f32_at(108),
        scl_slope: raw.f32_at(112),
        scl_inter: raw.f32_at(116),
        magic,
        big_endian,
    })
}

/// Read just the header of a `.nii`/`.nii.gz`/`.hdr` file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader, NiftiError> {
    parse_header(&read_bytes(path.as_ref())?)
}

/// Locate the `.img` companion of a `.hdr` header-pair file.
fn pair_data_path(header_path: &Path) -> PathBuf {
    let name = header_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let img = if let Some(stem) = name.strip_suffix(".hdr.gz") {
        format!("{stem}.img.gz")
    } else if let Some(stem) = name.strip_suffix(".hdr") {
        format!("{stem}.img")
    } else {
        format!("{name}.img")
    };
    header_path.with_file_name(img)
}

fn decode_values(
    payload: &[u8],
    dt: Datatype,
    n: usize,
    big_endian: bool,
) -> Result<Vec<f64>, NiftiError> {
    let expected = n * dt.byte_size();
    if payload.len() < expected {
        return Err(NiftiError::TruncatedData {
            expected,
            actual: payload.len(),
        });
    }
    let mut out = Vec::with_capacity(n);
    macro_rules! decode {
        ($ty:ty, $size:expr) => {
            for chunk in payload[..expected].chunks_exact($size) {
                let arr: [u8; $size] = chunk.try_into().unwrap();
                let v = if big_endian {
                    <$ty>::from_be_bytes(arr)
                } else {
                    <$ty>::from_le_bytes(arr)
                };
                out.push(v as f64);
            }
        };
    }
    match dt {
        Datatype::Uint8 => {
            out.extend(payload[..expected].iter().map(|&b| b as f64));
        }
        Datatype::Int16 => decode!(i16, 2),
        Datatype::Int32 => decode!(i32, 4),
        Datatype::Float32 => decode!(f32, 4),
        Datatype::Float64 => decode!(f64, 8),
    }
    Ok(out)
}

fn read_raw(path: &Path) -> Result<(NiftiHeader, Vec<f64>), NiftiError> {
    let bytes = read_bytes(path)?;
    let header = parse_header(&bytes)?;
    let dt = header.datatype()?;
    let (nx, ny, nz) = header.dims()?;
    let n = nx * ny * nz;

    let data_bytes;
    let payload: &[u8] = if &header.magic == MAGIC_SINGLE {
        let offset = header.vox_offset.round().max(0.0) as usize;
        if bytes.len() < offset {
            return Err(NiftiError::TruncatedData {
                expected: offset,
                actual: bytes.len(),
            });
        }
        &bytes[offset..]
    } else {
        let img = pair_data_path(path);
        if !img.exists() {
            return Err(NiftiError::MissingDataFile(img));
        }
        data_bytes = read_bytes(&img)?;
        let offset = header.vox_offset.round().max(0.0) as usize;
        if data_bytes.len() < offset {
            return Err(NiftiError::TruncatedData {
                expected: offset,
                actual: data_bytes.len(),
            });
        }
        &data_bytes[offset..]
    };

    let mut values = decode_values(payload, dt, n, header.big_endian)?;
    let slope = header.scl_slope as f64;
    let inter = if header.scl_inter.is_finite() {
        header.scl_inter as f64
    } else {
        0.0
    };
    if slope.is_finite() && slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        for v in values.iter_mut() {
            *v = *v * slope + inter;
        }
    }
    Ok((header, values))
}

/// Load a scalar volume, applying the header's slope/intercept rescale.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume, NiftiError> {
    let path = path.as_ref();
    let (header, values) = read_raw(path)?;
    Ok(Volume::new(header.dims()?, header.spacing()?, values)?)
}

/// Load a binary mask, rejecting any voxel that is not exactly 0 or 1.
pub fn read_mask(path: impl AsRef<Path>, kind: MaskKind) -> Result<Mask, NiftiError> {
    Ok(read_mask_with_spacing(path, kind)?.0)
}

/// Load a mask together with the header spacing (masks carry no geometry).
pub fn read_mask_with_spacing(
    path: impl AsRef<Path>,
    kind: MaskKind,
) -> Result<(Mask, (f64, f64, f64)), NiftiError> {
    let path = path.as_ref();
    let (header, values) = read_raw(path)?;
    let mask = Mask::from_values(header.dims()?, kind, &values).map_err(|e| match e {
        VolumeError::NonBinaryValue { index, value } => NiftiError::NonBinaryMask { index, value },
        other => NiftiError::InvalidVolume(other),
    })?;
    Ok((mask, header.spacing()?))
}

fn encode_header(
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    dt: Datatype,
) -> Result<Vec<u8>, NiftiError> {
    for &d in &[dims.0, dims.1, dims.2] {
        if d > i16::MAX as usize {
            return Err(NiftiError::DimsTooLarge(d));
        }
    }
    let mut h = Vec::with_capacity(HEADER_SIZE + 4);
    h.write_i32::<LittleEndian>(348).unwrap(); // sizeof_hdr
    h.extend_from_slice(&[0u8; 10]); // data_type (unused)
    h.extend_from_slice(&[0u8; 18]); // db_name (unused)
    h.write_i32::<LittleEndian>(0).unwrap(); // extents
    h.write_i16::<LittleEndian>(0).unwrap(); // session_error
    h.push(0); // regular
    h.push(0); // dim_info
    let dim: [i16; 8] = [3, dims.0 as i16, dims.1 as i16, dims.2 as i16, 1, 1, 1, 1];
    for d in dim {
        h.write_i16::<LittleEndian>(d).unwrap();
    }
    for _ in 0..3 {
        h.write_f32::<LittleEndian>(0.0).unwrap(); // intent_p1..p3
    }
    h.write_i16::<LittleEndian>(0).unwrap(); // intent_code
    h.write_i16::<LittleEndian>(dt.code()).unwrap();
    h.write_i16::<LittleEndian>(dt.bitpix()).unwrap();
    h.write_i16::<LittleEndian>(0).unwrap(); // slice_start
    let pixdim: [f32; 8] = [
        1.0,
        spacing.0 as f32,
        spacing.1 as f32,
        spacing.2 as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for p in pixdim {
        h.write_f32::<LittleEndian>(p).unwrap();
    }
    h.write_f32::<LittleEndian>(352.0).unwrap(); // vox_offset
    h.write_f32::<LittleEndian>(1.0).unwrap(); // scl_slope
    h.write_f32::<LittleEndian>(0.0).unwrap(); // scl_inter
    h.write_i16::<LittleEndian>(0).unwrap(); // slice_end
    h.push(0); // slice_code
    h.push(2); // xyzt_units: millimetres
    for _ in 0..4 {
        h.write_f32::<LittleEndian>(0.0).unwrap(); // cal_max/min, slice_duration, toffset
    }
    h.write_i32::<LittleEndian>(0).unwrap(); // glmax
    h.write_i32::<LittleEndian>(0).unwrap(); // glmin
    h.extend_from_slice(&[0u8; 80]); // descrip
    h.extend_from_slice(&[0u8; 24]); // aux_file
    h.write_i16::<LittleEndian>(0).unwrap(); // qform_code
    h.write_i16::<LittleEndian>(0).unwrap(); // sform_code
    for _ in 0..6 {
        h.write_f32::<LittleEndian>(0.0).unwrap(); // quatern b,c,d,x,y,z
    }
    for row in [[1f32, 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 1., 0.]] {
        for v in row {
            h.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    h.extend_from_slice(&[0u8; 16]); // intent_name
    h.extend_from_slice(MAGIC_SINGLE);
    debug_assert_eq!(h.len(), HEADER_SIZE);
    h.extend_from_slice(&[0u8; 4]); // extension flag: none
    Ok(h)
}

fn encode_values(values: &[f64], dt: Datatype) -> Result<Vec<u8>, NiftiError> {
    let lossy = |index: usize, value: f64| NiftiError::LossyDatatype {
        datatype: dt,
        index,
        value,
    };
    let mut out = Vec::with_capacity(values.len() * dt.byte_size());
    match dt {
        Datatype::Uint8 => {
            for (i, &v) in values.iter().enumerate() {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(lossy(i, v));
                }
                out.push(v as u8);
            }
        }
        Datatype::Int16 => {
            for (i, &v) in values.iter().enumerate() {
                if v.fract() != 0.0 || v < i16::MIN as f64 || v > i16::MAX as f64 {
                    return Err(lossy(i, v));
                }
                out.write_i16::<LittleEndian>(v as i16).unwrap();
            }
        }
        Datatype::Int32 => {
            for (i, &v) in values.iter().enumerate() {
                if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                    return Err(lossy(i, v));
                }
                out.write_i32::<LittleEndian>(v as i32).unwrap();
            }
        }
        Datatype::Float32 => {
            for &v in values {
                out.write_f32::<LittleEndian>(v as f32).unwrap();
            }
        }
        Datatype::Float64 => {
            for &v in values {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), NiftiError> {
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    let file = fs::File::create(path).map_err(io_err(path))?;
    if gz {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes).map_err(io_err(path))?;
        enc.finish().map_err(io_err(path))?;
    } else {
        let mut file = file;
        file.write_all(bytes).map_err(io_err(path))?;
    }
    Ok(())
}

/// Write a volume as a single-file NIfTI-1 (`.nii`, or `.nii.gz` when the
/// path ends in `.gz`).
///
/// Integer datatypes refuse values they cannot represent exactly
/// ([`NiftiError::LossyDatatype`]); quantize explicitly before asking for
/// an integer datatype. Float32 rounds f64 values in the usual IEEE way.
pub fn write_volume(
    volume: &Volume,
    path: impl AsRef<Path>,
    datatype: Datatype,
) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let mut bytes = encode_header(volume.dims(), volume.spacing(), datatype)?;
    bytes.extend(encode_values(volume.voxels(), datatype)?);
    write_bytes(path, &bytes)
}

/// Write a mask as uint8 with unit spacing unless one is supplied.
pub fn write_mask(
    mask: &Mask,
    path: impl AsRef<Path>,
    spacing: (f64, f64, f64),
) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let mut bytes = encode_header(mask.dims(), spacing, Datatype::Uint8)?;
    bytes.extend(mask.bits().iter().map(|&b| b as u8));
    write_bytes(path, &bytes)
}

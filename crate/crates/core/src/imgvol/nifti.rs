//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reading and writing.
//!
//! Only the subset needed for structure maps and scalar images is handled:
//! 3D volumes of uint8, int16 or float32 voxels. Orientation beyond the
//! translation part of the affine is ignored.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{Geometry, IntensityVolume, LabelVolume, VALID_LABELS};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

/// Supported voxel encodings (NIfTI datatype codes 2, 4, 16).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataType {
    UInt8,
    Int16,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::UInt8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(DataType::UInt8),
            4 => Ok(DataType::Int16),
            16 => Ok(DataType::Float32),
            other => Err(Error::UnsupportedFormat(format!(
                "NIfTI datatype code {other} (supported: 2 uint8, 4 int16, 16 float32)"
            ))),
        }
    }

    pub fn bitpix(self) -> i16 {
        match self {
            DataType::UInt8 => 8,
            DataType::Int16 => 16,
            DataType::Float32 => 32,
        }
    }

    fn bytes(self) -> usize {
        self.bitpix() as usize / 8
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DataType::Float32)
    }
}

/// A volume loaded from disk: a structure map if the file is integer typed
/// with values in {0,1,2,4}, an intensity image otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Label(LabelVolume),
    Intensity(IntensityVolume),
}

impl Volume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            Volume::Label(v) => v.geometry(),
            Volume::Intensity(v) => v.geometry(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    buf: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.buf[off], self.buf[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.buf[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

struct Decoded {
    geom: Geometry,
    datatype: DataType,
    values: Vec<f64>,
    scaled: bool,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format {
            field: "sizeof_hdr",
            message: format!("file is {} bytes, shorter than a 348-byte header", bytes.len()),
        });
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let endian = if le == HEADER_SIZE as i32 {
        Endian::Little
    } else if be == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::Format {
            field: "sizeof_hdr",
            message: format!("expected 348, found {le}"),
        });
    };
    let h = HeaderReader { buf: bytes, endian };

    let magic = &bytes[344..348];
    if magic == MAGIC_PAIR {
        return Err(Error::UnsupportedFormat(
            "two-file NIfTI (.hdr/.img) is not supported".into(),
        ));
    }
    if magic != MAGIC_SINGLE {
        return Err(Error::Format {
            field: "magic",
            message: format!("expected \"n+1\\0\", found {magic:?}"),
        });
    }

    let ndim = h.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format {
            field: "dim",
            message: format!("dim[0] = {ndim} outside 1..=7"),
        });
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        if (a as i16) < ndim {
            let v = h.i16(42 + 2 * a);
            if v < 1 {
                return Err(Error::Format {
                    field: "dim",
                    message: format!("dim[{}] = {v} must be >= 1", a + 1),
                });
            }
            *d = v as usize;
        }
    }
    for a in 3..ndim as usize {
        let v = h.i16(42 + 2 * a);
        if v > 1 {
            return Err(Error::UnsupportedFormat(format!(
                "only 3D volumes are supported, dim[{}] = {v}",
                a + 1
            )));
        }
    }

    let datatype = DataType::from_code(h.i16(70))?;
    let bitpix = h.i16(72);
    if bitpix != datatype.bitpix() {
        return Err(Error::Format {
            field: "bitpix",
            message: format!("{bitpix} inconsistent with datatype {:?}", datatype),
        });
    }

    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        if (a as i16) < ndim {
            let v = h.f32(80 + 4 * a);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Format {
                    field: "pixdim",
                    message: format!("pixdim[{}] = {v} must be finite and > 0", a + 1),
                });
            }
            *s = v as f64;
        }
    }

    let vox_offset = h.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 && vox_offset.fract() == 0.0)
    {
        return Err(Error::Format {
            field: "vox_offset",
            message: format!("{vox_offset} is not a valid byte offset >= 348"),
        });
    }
    let vox_offset = vox_offset as usize;

    let slope = h.f32(112);
    let inter = h.f32(116);
    let scaled = slope.is_finite() && slope != 0.0 && (slope != 1.0 || inter != 0.0);

    let sform = h.i16(254);
    let origin = if sform > 0 {
        [h.f32(292) as f64, h.f32(308) as f64, h.f32(324) as f64]
    } else {
        [h.f32(268) as f64, h.f32(272) as f64, h.f32(276) as f64]
    };

    let geom = Geometry::new(dims, spacing, origin).map_err(|e| Error::Format {
        field: "qoffset",
        message: e.to_string(),
    })?;
    let n = geom.len();
    let need = vox_offset + n * datatype.bytes();
    if bytes.len() < need {
        return Err(Error::Format {
            field: "vox_offset",
            message: format!(
                "payload truncated: need {need} bytes, file has {}",
                bytes.len()
            ),
        });
    }
    let payload = &bytes[vox_offset..need];
    let mut values: Vec<f64> = match datatype {
        DataType::UInt8 => payload.iter().map(|&b| b as f64).collect(),
        DataType::Int16 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                (match endian {
                    Endian::Little => i16::from_le_bytes(b),
                    Endian::Big => i16::from_be_bytes(b),
                }) as f64
            })
            .collect(),
        DataType::Float32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b: [u8; 4] = c.try_into().unwrap();
                (match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                }) as f64
            })
            .collect(),
    };
    if scaled {
        for v in &mut values {
            *v = *v * slope as f64 + inter as f64;
        }
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite voxel value at index {i}")));
    }
    Ok(Decoded {
        geom,
        datatype,
        values,
        scaled,
    })
}

fn offending_labels(values: &[f64]) -> Vec<f64> {
    let mut bad: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&v| !(v.fract() == 0.0 && v >= 0.0 && v <= 4.0 && VALID_LABELS.contains(&(v as u8))))
        .collect();
    bad.sort_by(f64::total_cmp);
    bad.dedup();
    bad
}

fn to_labels(values: &[f64]) -> Vec<u8> {
    values.iter().map(|&v| v as u8).collect()
}

/// Decodes an in-memory NIfTI-1 image (gzip-compressed or raw).
pub fn decode_nifti(bytes: &[u8]) -> Result<Volume> {
    let raw = maybe_gunzip(bytes)?;
    let d = decode(&raw)?;
    if d.datatype.is_integer() && !d.scaled && offending_labels(&d.values).is_empty() {
        let labels = to_labels(&d.values);
        return Ok(Volume::Label(LabelVolume::new(d.geom, labels)?));
    }
    let dt = if d.scaled { DataType::Float32 } else { d.datatype };
    Ok(Volume::Intensity(IntensityVolume::with_datatype(
        d.geom, d.values, dt,
    )?))
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                field: "gzip",
                message: e.to_string(),
            })?;
        Ok(std::borrow::Cow::Owned(out))
    } else {
        Ok(std::borrow::Cow::Borrowed(bytes))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode_nifti(&read_bytes(path)?)
}

/// Reads a structure map. Any datatype is accepted as long as every voxel
/// holds one of {0, 1, 2, 4}.
pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let raw = maybe_gunzip(&bytes)?;
    let d = decode(&raw)?;
    let bad = offending_labels(&d.values);
    if !bad.is_empty() {
        return Err(Error::Validation(format!(
            "{}: labels outside {{0,1,2,4}}: {:?}",
            path.display(),
            bad.iter().take(16).collect::<Vec<_>>()
        )));
    }
    LabelVolume::new(d.geom, to_labels(&d.values))
}

pub fn read_intensity_volume(path: impl AsRef<Path>) -> Result<IntensityVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let raw = maybe_gunzip(&bytes)?;
    let d = decode(&raw)?;
    let dt = if d.scaled { DataType::Float32 } else { d.datatype };
    IntensityVolume::with_datatype(d.geom, d.values, dt)
}

fn header(geom: &Geometry, datatype: DataType) -> Result<Vec<u8>> {
    let mut h = vec![0u8; DEFAULT_VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_i32 = |h: &mut [u8], off: usize, v: i32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    for (a, &d) in geom.dims.iter().enumerate() {
        if d > i16::MAX as usize {
            return Err(Error::UnsupportedFormat(format!(
                "dimension {d} exceeds the NIfTI-1 limit of {}",
                i16::MAX
            )));
        }
        put_i16(&mut h, 42 + 2 * a, d as i16);
    }
    put_i32(&mut h, 0, HEADER_SIZE as i32);
    h[38] = b'r';
    put_i16(&mut h, 40, 3);
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, datatype.code());
    put_i16(&mut h, 72, datatype.bitpix());
    put_f32(&mut h, 76, 1.0); // qfac
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, geom.spacing[a] as f32);
    }
    put_f32(&mut h, 108, DEFAULT_VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // mm
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for a in 0..3 {
        put_f32(&mut h, 268 + 4 * a, geom.origin[a] as f32);
        // srow_x / srow_y / srow_z
        let row = 280 + 16 * a;
        put_f32(&mut h, row + 4 * a, geom.spacing[a] as f32);
        put_f32(&mut h, row + 12, geom.origin[a] as f32);
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);
    Ok(h)
}

/// Encodes a structure map as an uncompressed uint8 NIfTI-1 image.
pub fn encode_labels(vol: &LabelVolume) -> Result<Vec<u8>> {
    let mut out = header(vol.geometry(), DataType::UInt8)?;
    out.extend_from_slice(vol.data());
    Ok(out)
}

/// Encodes an intensity image using its recorded datatype.
pub fn encode_intensity(vol: &IntensityVolume) -> Result<Vec<u8>> {
    let dt = vol.datatype();
    let mut out = header(vol.geometry(), dt)?;
    out.reserve(vol.data().len() * dt.bytes());
    for &v in vol.data() {
        match dt {
            DataType::UInt8 => {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Validation(format!("{v} not representable as uint8")));
                }
                out.push(v as u8);
            }
            DataType::Int16 => {
                if !(i16::MIN as f64..=i16::MAX as f64).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Validation(format!("{v} not representable as int16")));
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
            DataType::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    let data = if gz {
        // flate2 leaves the gzip mtime at zero, so output is reproducible.
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

/// Writes a structure map; `.gz` paths are gzip-compressed.
pub fn write_label_volume(path: impl AsRef<Path>, vol: &LabelVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_labels(vol)?)
}

pub fn write_intensity_volume(path: impl AsRef<Path>, vol: &IntensityVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_intensity(vol)?)
}

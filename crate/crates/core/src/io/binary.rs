//! Little-endian binary containers for voxel grids (`OVOX`), labeled point
//! clouds (`OPCD`) and rasters (`ODPT`).
//!
//! Every decoder checks sizes against the bytes actually present before
//! allocating, rejects trailing bytes, and reports failures as
//! [`FormatError`] values.

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::geom::{ErpImage, LabeledPointCloud, RasterKind, Vec3};
use crate::grid::{CoordSys, GridSpec, Payload, PayloadKind, VoxelGrid};
use crate::scalar::Real;

pub const OVOX_MAGIC: [u8; 4] = *b"OVOX";
pub const OPCD_MAGIC: [u8; 4] = *b"OPCD";
pub const ODPT_MAGIC: [u8; 4] = *b"ODPT";
pub const FORMAT_VERSION: u32 = 1;

/// magic, version, coord_sys, dims, ranges, kind, channels.
pub const OVOX_HEADER_LEN: usize = 4 + 4 + 1 + 12 + 24 + 1 + 4;
pub const OPCD_HEADER_LEN: usize = 4 + 4 + 8;
pub const OPCD_RECORD_LEN: usize = 13;
pub const ODPT_HEADER_LEN: usize = 4 + 4 + 1 + 12;

/// Which container a byte stream holds, judged by its magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    VoxelGrid,
    PointCloud,
    Raster,
}

pub fn sniff(bytes: &[u8]) -> Option<FileKind> {
    match bytes.get(..4)? {
        m if m == OVOX_MAGIC => Some(FileKind::VoxelGrid),
        m if m == OPCD_MAGIC => Some(FileKind::PointCloud),
        m if m == ODPT_MAGIC => Some(FileKind::Raster),
        _ => None,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated {
                what,
                expected: self.pos as u64 + n as u64,
                actual: self.buf.len() as u64,
            }),
        }
    }

    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f32(&mut self, what: &'static str) -> std::result::Result<f32, FormatError> {
        Ok(f32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn header(&mut self, magic: [u8; 4]) -> std::result::Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found: found.to_vec(),
            });
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(FormatError::BadVersion { found: version });
        }
        Ok(())
    }

    /// Fails with `Truncated` unless `n` more bytes are present.
    fn require(&self, n: u64, what: &'static str) -> std::result::Result<(), FormatError> {
        let have = (self.buf.len() - self.pos) as u64;
        if n > have {
            return Err(FormatError::Truncated {
                what,
                expected: self.pos as u64 + n,
                actual: self.buf.len() as u64,
            });
        }
        Ok(())
    }

    fn finish(&self) -> std::result::Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(invalid(
                "payload",
                self.pos,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn invalid(field: &'static str, offset: usize, reason: impl Into<String>) -> FormatError {
    FormatError::InvalidField {
        field,
        offset,
        reason: reason.into(),
    }
}

/// Widens an `f32` through its shortest decimal form, so `25.6f32` becomes
/// `25.6` rather than `25.600000381…`.
pub fn f32_to_real<T: Real>(x: f32) -> T {
    T::lit(x.to_string().parse::<f64>().unwrap_or(x as f64))
}

/// `OVOX` encoding. Ranges are stored as `f32`.
pub fn encode_voxel_grid<T: Real>(grid: &VoxelGrid<T>) -> Vec<u8> {
    let spec = grid.spec();
    let payload = grid.payload();
    let body = match payload {
        Payload::Label(d) | Payload::Occupancy(d) => d.len(),
        Payload::Feature { data, .. } => data.len() * 4,
    };
    let mut out = Vec::with_capacity(OVOX_HEADER_LEN + body);
    out.extend_from_slice(&OVOX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(spec.coord_sys().code());
    for d in spec.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (lo, hi) in spec.ranges() {
        out.extend_from_slice(&lo.as_f32().to_le_bytes());
        out.extend_from_slice(&hi.as_f32().to_le_bytes());
    }
    out.push(payload.kind().code());
    out.extend_from_slice(&(payload.channels() as u32).to_le_bytes());
    match payload {
        Payload::Label(d) | Payload::Occupancy(d) => out.extend_from_slice(d),
        Payload::Feature { data, .. } => {
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

/// Decodes only the `OVOX` header.
pub fn decode_voxel_header<T: Real>(bytes: &[u8]) -> Result<(GridSpec<T>, PayloadKind, usize)> {
    let mut r = Reader::new(bytes);
    let (spec, kind, channels) = read_voxel_header(&mut r)?;
    Ok((spec, kind, channels))
}

fn read_voxel_header<T: Real>(
    r: &mut Reader,
) -> std::result::Result<(GridSpec<T>, PayloadKind, usize), FormatError> {
    r.header(OVOX_MAGIC)?;
    let cs_off = r.pos;
    let coord_sys = CoordSys::from_code(r.u8("coord_sys")?).ok_or_else(|| {
        invalid(
            "coord_sys",
            cs_off,
            "expected 0 (cuboid) or 1 (cylindrical)",
        )
    })?;
    let dims_off = r.pos;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.u32("dims")? as usize;
    }
    let ranges_off = r.pos;
    let mut ranges = [(T::zero(), T::zero()); 3];
    for range in &mut ranges {
        let lo = r.f32("ranges")?;
        let hi = r.f32("ranges")?;
        *range = (f32_to_real(lo), f32_to_real(hi));
    }
    let kind_off = r.pos;
    let kind = PayloadKind::from_code(r.u8("payload_kind")?)
        .ok_or_else(|| invalid("payload_kind", kind_off, "expected 0, 1 or 2"))?;
    let ch_off = r.pos;
    let channels = r.u32("channels")? as usize;
    match kind {
        PayloadKind::Feature if channels == 0 => {
            return Err(invalid(
                "channels",
                ch_off,
                "feature payloads need at least one channel",
            ))
        }
        PayloadKind::Label | PayloadKind::Occupancy if channels != 1 => {
            return Err(invalid(
                "channels",
                ch_off,
                format!("{channels} channels for a byte payload"),
            ))
        }
        _ => {}
    }
    if dims.contains(&0) {
        return Err(invalid(
            "dims",
            dims_off,
            format!("zero bin count in {dims:?}"),
        ));
    }
    if dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .is_none()
    {
        return Err(invalid("dims", dims_off, "voxel count overflows"));
    }
    let spec = GridSpec::new(coord_sys, dims, ranges)
        .map_err(|e| invalid("ranges", ranges_off, e.to_string()))?;
    Ok((spec, kind, channels))
}

pub fn decode_voxel_grid<T: Real>(bytes: &[u8]) -> Result<VoxelGrid<T>> {
    let mut r = Reader::new(bytes);
    let (spec, kind, channels) = read_voxel_header::<T>(&mut r)?;
    let values = (spec.voxel_count() as u64)
        .checked_mul(channels as u64)
        .ok_or_else(|| invalid("dims", 9, "payload size overflows"))?;
    let width = if kind == PayloadKind::Feature { 4 } else { 1 };
    let nbytes = values
        .checked_mul(width)
        .ok_or_else(|| invalid("dims", 9, "payload size overflows"))?;
    r.require(nbytes, "payload")?;
    let payload_off = r.pos;
    let raw = r.take(nbytes as usize, "payload")?;
    r.finish()?;
    let payload = match kind {
        PayloadKind::Label => Payload::Label(raw.to_vec()),
        PayloadKind::Occupancy => {
            if let Some(i) = raw.iter().position(|&b| b > 1) {
                return Err(invalid(
                    "payload",
                    payload_off + i,
                    format!("occupancy byte {}", raw[i]),
                )
                .into());
            }
            Payload::Occupancy(raw.to_vec())
        }
        PayloadKind::Feature => {
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if let Some(i) = data.iter().position(|x| !x.is_finite()) {
                return Err(
                    invalid("payload", payload_off + 4 * i, "non-finite feature value").into(),
                );
            }
            Payload::Feature { channels, data }
        }
    };
    VoxelGrid::new(spec, payload).map_err(|e| invalid("payload", payload_off, e.to_string()).into())
}

/// `OPCD` encoding; coordinates are stored as `f32`.
pub fn encode_point_cloud<T: Real>(cloud: &LabeledPointCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(OPCD_HEADER_LEN + cloud.len() * OPCD_RECORD_LEN);
    out.extend_from_slice(&OPCD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for (p, l) in cloud.iter() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&c.as_f32().to_le_bytes());
        }
        out.push(l);
    }
    out
}

pub fn decode_point_cloud<T: Real>(bytes: &[u8]) -> Result<LabeledPointCloud<T>> {
    let mut r = Reader::new(bytes);
    r.header(OPCD_MAGIC)?;
    let count = r.u64("count")?;
    let nbytes = count
        .checked_mul(OPCD_RECORD_LEN as u64)
        .ok_or_else(|| invalid("count", 8, format!("{count} points overflow the size")))?;
    r.require(nbytes, "points")?;
    let mut points = Vec::with_capacity(count as usize);
    let mut labels = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let off = r.pos;
        let (x, y, z) = (r.f32("points")?, r.f32("points")?, r.f32("points")?);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(invalid("points", off, "non-finite coordinate").into());
        }
        points.push(Vec3::new(
            T::lit(x as f64),
            T::lit(y as f64),
            T::lit(z as f64),
        ));
        labels.push(r.u8("points")?);
    }
    r.finish()?;
    LabeledPointCloud::new(points, labels)
}

/// `ODPT` encoding.
pub fn encode_raster(image: &ErpImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(ODPT_HEADER_LEN + image.data().len() * 4);
    out.extend_from_slice(&ODPT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(image.kind.code());
    for v in [image.width, image.height, image.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for x in image.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<ErpImage> {
    let mut r = Reader::new(bytes);
    r.header(ODPT_MAGIC)?;
    let kind_off = r.pos;
    let kind = RasterKind::from_code(r.u8("kind")?).ok_or_else(|| {
        invalid(
            "kind",
            kind_off,
            "expected 0 (depth), 1 (semantic) or 2 (feature)",
        )
    })?;
    let size_off = r.pos;
    let (w, h, c) = (r.u32("width")?, r.u32("height")?, r.u32("channels")?);
    if w == 0 || h == 0 || c == 0 {
        return Err(invalid("width", size_off, format!("zero dimension in {w}x{h}x{c}")).into());
    }
    if kind != RasterKind::Feature && c != 1 {
        return Err(invalid(
            "channels",
            size_off + 8,
            format!("{c} channels for a single-channel raster"),
        )
        .into());
    }
    let nbytes = (w as u64)
        .checked_mul(h as u64)
        .and_then(|n| n.checked_mul(c as u64))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| invalid("width", size_off, "payload size overflows"))?;
    r.require(nbytes, "payload")?;
    let payload_off = r.pos;
    let data: Vec<f32> = r
        .take(nbytes as usize, "payload")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    r.finish()?;
    ErpImage::new(w, h, c, kind, data)
        .map_err(|e| invalid("payload", payload_off, e.to_string()).into())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::Io)
}

pub fn read_voxel_grid<T: Real>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    decode_voxel_grid(&read_file(path.as_ref())?)
}

pub fn write_voxel_grid<T: Real>(path: impl AsRef<Path>, grid: &VoxelGrid<T>) -> Result<()> {
    Ok(fs::write(path, encode_voxel_grid(grid))?)
}

pub fn read_point_cloud<T: Real>(path: impl AsRef<Path>) -> Result<LabeledPointCloud<T>> {
    decode_point_cloud(&read_file(path.as_ref())?)
}

pub fn write_point_cloud<T: Real>(
    path: impl AsRef<Path>,
    cloud: &LabeledPointCloud<T>,
) -> Result<()> {
    Ok(fs::write(path, encode_point_cloud(cloud))?)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<ErpImage> {
    decode_raster(&read_file(path.as_ref())?)
}

pub fn write_raster(path: impl AsRef<Path>, image: &ErpImage) -> Result<()> {
    Ok(fs::write(path, encode_raster(image))?)
}

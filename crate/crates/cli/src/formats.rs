//! Bit-exact file formats: SFR1 rasters, Middlebury flow, and grayscale PFM.
//!
//! All payloads are 32-bit floats; readers widen to f64 exactly and writers
//! narrow with round-to-nearest, so a file round-trips bit-exactly and
//! f32-representable data survives a write/read cycle unchanged.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use se3flow_core::raster::{ChannelGrid, Grid};

/// Magic tag of the raster container.
pub const RASTER_MAGIC: [u8; 4] = *b"SFR1";
/// The only payload type the raster container defines: 32-bit float.
const RASTER_DTYPE_F32: u32 = 1;
/// Middlebury flow magic: the float 202021.25 in the file's byte order.
pub const FLOW_MAGIC: f32 = 202021.25;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn take_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        bail!("truncated header");
    }
    Ok(u32::from_le_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Writes a raster: magic, little-endian u32 height, width, channels, dtype
/// tag, then row-major little-endian f32 values with interleaved channels.
pub fn write_raster(path: &Path, grid: &ChannelGrid) -> Result<()> {
    let mut out = Vec::with_capacity(20 + grid.data().len() * 4);
    out.extend_from_slice(&RASTER_MAGIC);
    for dim in [grid.height(), grid.width(), grid.channels()] {
        out.extend_from_slice(&u32::try_from(dim).context("raster dimension exceeds u32")?.to_le_bytes());
    }
    out.extend_from_slice(&RASTER_DTYPE_F32.to_le_bytes());
    for v in grid.data() {
        push_f32(&mut out, *v);
    }
    write_file(path, &out)
}

/// Reads a raster written by [`write_raster`]; the payload length must match
/// the header dimensions exactly.
pub fn read_raster(path: &Path) -> Result<ChannelGrid> {
    let bytes = read_file(path)?;
    let context = || format!("raster {}", path.display());
    if bytes.len() < 20 || bytes[..4] != RASTER_MAGIC {
        bail!("{}: bad magic", context());
    }
    let height = take_u32(&bytes, 4).with_context(context)? as usize;
    let width = take_u32(&bytes, 8).with_context(context)? as usize;
    let channels = take_u32(&bytes, 12).with_context(context)? as usize;
    let dtype = take_u32(&bytes, 16).with_context(context)?;
    if dtype != RASTER_DTYPE_F32 {
        bail!("{}: unsupported dtype tag {dtype}", context());
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .with_context(|| format!("{}: dimensions overflow", context()))?;
    let payload = &bytes[20..];
    if payload.len() != count * 4 {
        bail!("{}: payload is {} bytes, expected {}", context(), payload.len(), count * 4);
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ChannelGrid::from_vec(width, height, channels, values)
        .map_err(|e| anyhow::anyhow!("{}: {e:?}", context()))
}

/// Writes a single-channel raster from a scalar grid.
pub fn write_scalar_raster(path: &Path, grid: &Grid<f64>) -> Result<()> {
    write_raster(path, &ChannelGrid::from_single(grid))
}

/// Writes a boolean mask as a single-channel raster of 0/1 values.
pub fn write_mask_raster(path: &Path, mask: &Grid<bool>) -> Result<()> {
    let mut grid = Grid::new(mask.width(), mask.height(), 0.0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            grid.set(x, y, f64::from(u8::from(mask.at(x, y))));
        }
    }
    write_scalar_raster(path, &grid)
}

/// Reads a single-channel raster back as a boolean mask (nonzero = true).
pub fn read_mask_raster(path: &Path) -> Result<Grid<bool>> {
    let grid = read_single_channel(path)?;
    let mut mask = Grid::new(grid.width(), grid.height(), false);
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            mask.set(x, y, grid.at(x, y) != 0.0);
        }
    }
    Ok(mask)
}

/// Writes integer labels as a single-channel raster; exact up to 2^24.
pub fn write_label_raster(path: &Path, labels: &Grid<u32>) -> Result<()> {
    let mut grid = Grid::new(labels.width(), labels.height(), 0.0);
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let label = labels.at(x, y);
            if label >= 1 << 24 {
                bail!("label {label} exceeds the exactly-representable range");
            }
            grid.set(x, y, f64::from(label));
        }
    }
    write_scalar_raster(path, &grid)
}

/// Reads labels written by [`write_label_raster`].
pub fn read_label_raster(path: &Path) -> Result<Grid<u32>> {
    let grid = read_single_channel(path)?;
    let mut labels = Grid::new(grid.width(), grid.height(), 0u32);
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let v = grid.at(x, y);
            if v < 0.0 || v.fract() != 0.0 || v >= f64::from(1u32 << 24) {
                bail!("{}: value {v} is not a label", path.display());
            }
            labels.set(x, y, v as u32);
        }
    }
    Ok(labels)
}

fn read_single_channel(path: &Path) -> Result<Grid<f64>> {
    let grid = read_raster(path)?;
    if grid.channels() != 1 {
        bail!("{}: expected 1 channel, found {}", path.display(), grid.channels());
    }
    Ok(Grid::from_vec(grid.width(), grid.height(), grid.data().to_vec())
        .expect("dimensions already validated"))
}

/// Writes a 2-channel flow raster in Middlebury layout: the magic float,
/// little-endian i32 width and height, then row-major (u, v) f32 pairs.
pub fn write_flow(path: &Path, flow2d: &ChannelGrid) -> Result<()> {
    if flow2d.channels() != 2 {
        bail!("flow files hold 2 channels, got {}", flow2d.channels());
    }
    let mut out = Vec::with_capacity(12 + flow2d.data().len() * 4);
    out.extend_from_slice(&FLOW_MAGIC.to_le_bytes());
    out.extend_from_slice(
        &i32::try_from(flow2d.width()).context("flow width exceeds i32")?.to_le_bytes(),
    );
    out.extend_from_slice(
        &i32::try_from(flow2d.height()).context("flow height exceeds i32")?.to_le_bytes(),
    );
    for v in flow2d.data() {
        push_f32(&mut out, *v);
    }
    write_file(path, &out)
}

/// Reads a Middlebury flow file into a 2-channel raster.
pub fn read_flow(path: &Path) -> Result<ChannelGrid> {
    let bytes = read_file(path)?;
    let context = || format!("flow {}", path.display());
    if bytes.len() < 12 {
        bail!("{}: truncated header", context());
    }
    let magic = f32::from_le_bytes(bytes[..4].try_into().unwrap());
    if magic != FLOW_MAGIC {
        bail!("{}: bad magic {magic}", context());
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        bail!("{}: invalid dimensions {width}x{height}", context());
    }
    let (width, height) = (width as usize, height as usize);
    let payload = &bytes[12..];
    if payload.len() != width * height * 2 * 4 {
        bail!(
            "{}: payload is {} bytes, expected {}",
            context(),
            payload.len(),
            width * height * 8
        );
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ChannelGrid::from_vec(width, height, 2, values)
        .map_err(|e| anyhow::anyhow!("{}: {e:?}", context()))
}

/// Writes a grayscale PFM: `Pf` header, dimensions, a negative scale marking
/// little-endian payloads, then f32 rows stored bottom-to-top.
pub fn write_pfm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", grid.width(), grid.height()).as_bytes());
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            push_f32(&mut out, grid.at(x, y));
        }
    }
    write_file(path, &out)
}

struct PfmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PfmCursor<'a> {
    /// Next whitespace-delimited ASCII token, consuming exactly one trailing
    /// whitespace byte; the binary payload starts right after it.
    fn token(&mut self) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            bail!("truncated header");
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos]).context("header token")?;
        self.pos += 1;
        Ok(token)
    }
}

/// Reads a grayscale PFM written by [`write_pfm`] or any conforming tool.
/// The color `PF` variant is rejected; the scale's sign picks the byte
/// order and its magnitude is ignored.
pub fn read_pfm(path: &Path) -> Result<Grid<f64>> {
    let bytes = read_file(path)?;
    let context = || format!("pfm {}", path.display());
    let mut cursor = PfmCursor { bytes: &bytes, pos: 0 };
    let magic = cursor.token().with_context(context)?;
    if magic == "PF" {
        bail!("{}: color PFM is not a depth map", context());
    }
    if magic != "Pf" {
        bail!("{}: bad magic {magic:?}", context());
    }
    let width: usize = cursor.token().with_context(context)?.parse().with_context(context)?;
    let height: usize = cursor.token().with_context(context)?.parse().with_context(context)?;
    let scale: f64 = cursor.token().with_context(context)?.parse().with_context(context)?;
    if scale == 0.0 || !scale.is_finite() {
        bail!("{}: invalid scale {scale}", context());
    }
    let little_endian = scale < 0.0;
    let payload = &bytes[cursor.pos..];
    if width == 0 || height == 0 || payload.len() != width * height * 4 {
        bail!(
            "{}: payload is {} bytes, expected {}",
            context(),
            payload.len(),
            width * height * 4
        );
    }
    let mut grid = Grid::new(width, height, 0.0);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (x, row) = (i % width, i / width);
        grid.set(x, height - 1 - row, f64::from(v));
    }
    Ok(grid)
}

//! Binary formats for unary tensors and superpixel maps, and PGM for images
//! and labelings.
//!
//! * Unary tensor: `QCRFUNRY`, `u32` height, width, labels (little-endian),
//!   then `h·w·k` `f32` values, row-major with the label fastest.
//! * Superpixel map: `QCRFSPIX`, `u32` height, width, then `h·w` `u32`
//!   indices row-major.
//! * Labelings: binary PGM (`P5`) with `maxval = k − 1`.

use std::fs;
use std::path::Path;

use qcrf::{GridImage, Labeling, SuperpixelPartition, UnaryCosts};

use crate::error::{CliError, Result};

pub const UNARY_MAGIC: &[u8; 8] = b"QCRFUNRY";
pub const SPIX_MAGIC: &[u8; 8] = b"QCRFSPIX";

/// Refuse headers claiming more elements than this.
const MAX_ELEMENTS: u64 = 1 << 32;

fn format_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(CliError::Format { offset, msg: msg.into() })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(self.bytes.len(), format!("truncated file while reading {what}"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.bytes.len() < 8 || &self.bytes[..8] != magic {
            return format_err(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic)));
        }
        self.pos = 8;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return format_err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

fn element_count(dims: &[u32], offset: usize) -> Result<usize> {
    let mut total: u64 = 1;
    for &d in dims {
        if d == 0 {
            return format_err(offset, "zero dimension");
        }
        total = total.saturating_mul(d as u64);
    }
    if total > MAX_ELEMENTS {
        return format_err(offset, format!("dimensions {dims:?} overflow"));
    }
    Ok(total as usize)
}

pub fn encode_unary(unary: &UnaryCosts) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * unary.as_slice().len());
    out.extend_from_slice(UNARY_MAGIC);
    for d in [unary.height(), unary.width(), unary.num_labels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &c in unary.as_slice() {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    out
}

pub fn decode_unary(bytes: &[u8]) -> Result<UnaryCosts> {
    let mut r = Reader::new(bytes);
    r.magic(UNARY_MAGIC)?;
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    let k = r.u32("label count")?;
    let count = element_count(&[h, w, k], 8)?;
    if k < 2 {
        return format_err(16, format!("label count {k} below 2"));
    }
    if (bytes.len() as u64) < 20 + 4 * count as u64 {
        return format_err(bytes.len(), "truncated file while reading unary costs");
    }
    let data = r.take(4 * count, "unary costs")?;
    let mut costs = Vec::with_capacity(count);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return format_err(20 + 4 * i, format!("non-finite cost {v}"));
        }
        costs.push(v as f64);
    }
    r.finish()?;
    Ok(UnaryCosts::new(w as usize, h as usize, k as usize, costs)?)
}

pub fn encode_superpixels(width: usize, height: usize, assignment: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * assignment.len());
    out.extend_from_slice(SPIX_MAGIC);
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    for &s in assignment {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out
}

/// Superpixel map as `(width, height, assignment)`.
pub fn decode_superpixels(bytes: &[u8]) -> Result<(usize, usize, Vec<usize>)> {
    let mut r = Reader::new(bytes);
    r.magic(SPIX_MAGIC)?;
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    let count = element_count(&[h, w], 8)?;
    if (bytes.len() as u64) < 16 + 4 * count as u64 {
        return format_err(bytes.len(), "truncated file while reading superpixel indices");
    }
    let data = r.take(4 * count, "superpixel indices")?;
    let assignment = data
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    r.finish()?;
    Ok((w as usize, h as usize, assignment))
}

/// Binary PGM with the given `maxval` (1..=65535).
pub fn encode_pgm(width: usize, height: usize, maxval: u16, values: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(values.iter().map(|&v| v as u8));
    } else {
        for &v in values {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

/// Parsed PGM: `(width, height, maxval, values)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, u16, Vec<u16>)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return format_err(0, "bad magic, expected binary PGM (P5)");
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return format_err(pos, "expected a header number");
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().or_else(|_| format_err(start, "header number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return format_err(pos, "expected whitespace after maxval");
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return format_err(3, "zero dimension");
    }
    if maxval == 0 || maxval > 65535 {
        return format_err(pos - 1, format!("maxval {maxval} out of range"));
    }
    let count = element_count(&[w as u32, h as u32], 3)?;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let data = &bytes[pos..];
    if data.len() < count * bpp {
        return format_err(bytes.len(), "truncated PGM raster");
    }
    if data.len() > count * bpp {
        return format_err(pos + count * bpp, "trailing bytes after PGM raster");
    }
    let values: Vec<u16> = if bpp == 1 {
        data.iter().map(|&b| b as u16).collect()
    } else {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(i) = values.iter().position(|&v| v as usize > maxval) {
        return format_err(pos + i * bpp, "sample exceeds maxval");
    }
    Ok((w, h, maxval as u16, values))
}

/// Labeling as PGM with `maxval = num_labels − 1`.
pub fn encode_labeling(width: usize, height: usize, labeling: &Labeling, num_labels: usize) -> Result<Vec<u8>> {
    if !(2..=256).contains(&num_labels) {
        return Err(CliError::Config(format!("PGM labelings need 2..=256 labels, got {num_labels}")));
    }
    if labeling.len() != width * height {
        return Err(CliError::Config("labeling size does not match the grid".into()));
    }
    let values: Vec<u16> = labeling.as_slice().iter().map(|&l| l as u16).collect();
    if values.iter().any(|&v| v as usize >= num_labels) {
        return Err(CliError::Config("label out of range for PGM maxval".into()));
    }
    Ok(encode_pgm(width, height, (num_labels - 1) as u16, &values))
}

/// `(width, height, maxval, labeling)`.
pub fn decode_labeling(bytes: &[u8]) -> Result<(usize, usize, u16, Labeling)> {
    let (w, h, maxval, values) = decode_pgm(bytes)?;
    Ok((w, h, maxval, Labeling::new(values.into_iter().map(usize::from).collect())))
}

/// Grayscale image; samples are rescaled to `[0, 255]`.
pub fn decode_image(bytes: &[u8]) -> Result<GridImage> {
    let (w, h, maxval, values) = decode_pgm(bytes)?;
    let scale = 255.0 / maxval as f64;
    Ok(GridImage::new(w, h, values.into_iter().map(|v| v as f64 * scale).collect())?)
}

pub fn encode_image(image: &GridImage) -> Vec<u8> {
    let values: Vec<u16> =
        image.intensities().iter().map(|&v| v.round().clamp(0.0, 255.0) as u16).collect();
    encode_pgm(image.width(), image.height(), 255, &values)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

pub fn load_unary(path: &Path) -> Result<UnaryCosts> {
    decode_unary(&read(path)?).map_err(|e| e.in_file(path))
}

pub fn store_unary(path: &Path, unary: &UnaryCosts) -> Result<()> {
    write(path, &encode_unary(unary))
}

/// Loads a superpixel map and computes its statistics over `image`.
pub fn load_partition(path: &Path, image: &GridImage) -> Result<SuperpixelPartition> {
    let (w, h, assignment) = decode_superpixels(&read(path)?).map_err(|e| e.in_file(path))?;
    if w != image.width() || h != image.height() {
        return Err(CliError::Config(format!(
            "superpixel map is {w}x{h}, image is {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(SuperpixelPartition::from_assignment(image, assignment)?)
}

pub fn store_partition(path: &Path, partition: &SuperpixelPartition) -> Result<()> {
    write(path, &encode_superpixels(partition.width(), partition.height(), partition.assignment()))
}

pub fn load_labeling(path: &Path) -> Result<(usize, usize, u16, Labeling)> {
    decode_labeling(&read(path)?).map_err(|e| e.in_file(path))
}

pub fn store_labeling(path: &Path, width: usize, height: usize, labeling: &Labeling, k: usize) -> Result<()> {
    write(path, &encode_labeling(width, height, labeling, k)?)
}

pub fn load_image(path: &Path) -> Result<GridImage> {
    decode_image(&read(path)?).map_err(|e| e.in_file(path))
}

pub fn store_image(path: &Path, image: &GridImage) -> Result<()> {
    write(path, &encode_image(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unary_bytes_round_trip() {
        let costs: Vec<f64> = (0..24).map(|i| (i as f32 * 0.37 - 3.0) as f64).collect();
        let u = UnaryCosts::new(4, 2, 3, costs).unwrap();
        let bytes = encode_unary(&u);
        assert_eq!(&bytes[..8], b"QCRFUNRY");
        assert_eq!(bytes.len(), 20 + 4 * 24);
        let back = decode_unary(&bytes).unwrap();
        assert_eq!(back, u);
        assert_eq!(encode_unary(&back), bytes);
    }

    #[test]
    fn corrupted_magic_reports_offset_zero() {
        let u = UnaryCosts::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let mut bytes = encode_unary(&u);
        bytes[3] = b'X';
        match decode_unary(&bytes) {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
        let spix = encode_superpixels(1, 1, &[0]);
        assert!(matches!(decode_unary(&spix), Err(CliError::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_and_overflow() {
        let u = UnaryCosts::new(2, 2, 2, vec![0.5; 8]).unwrap();
        let bytes = encode_unary(&u);
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_unary(cut), Err(CliError::Format { offset, .. }) if offset == cut.len()));
        let mut huge = bytes.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_unary(&huge), Err(CliError::Format { offset: 8, .. })));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode_unary(&trailing).is_err());
    }

    #[test]
    fn superpixel_map_round_trip() {
        let a = vec![0, 0, 1, 2, 2, 1];
        let bytes = encode_superpixels(3, 2, &a);
        assert_eq!(decode_superpixels(&bytes).unwrap(), (3, 2, a));
    }

    #[test]
    fn labeling_pgm_round_trip() {
        let labels = Labeling::new(vec![0, 4, 2, 3, 1, 0]);
        let bytes = encode_labeling(3, 2, &labels, 5).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n4\n"));
        let (w, h, maxval, back) = decode_labeling(&bytes).unwrap();
        assert_eq!((w, h, maxval), (3, 2, 4));
        assert_eq!(back, labels);
    }

    #[test]
    fn pgm_header_comments_and_wide_samples() {
        let mut bytes = b"P5 # comment\n2 1\n# another\n1000\n".to_vec();
        bytes.extend_from_slice(&[0x03, 0xE8, 0x00, 0x05]);
        let (w, h, maxval, v) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h, maxval, v), (2, 1, 1000, vec![1000, 5]));
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0"), Err(CliError::Format { offset: 0, .. })));
    }
}

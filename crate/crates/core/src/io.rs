//! Tensor files (MCT1) and grayscale frame sequences (binary PGM, optionally PNG).
//!
//! MCT1 layout: the bytes `MCT1`, one byte scalar kind (0 real64,
//! 1 complex128), dims `m n p` as u64 little-endian, then every entry in
//! storage order as little-endian f64 (re, im pairs for complex).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{McurError, Result};
use crate::tensor::{Complex64, Scalar, ScalarKind, Tensor3};

const MAGIC: &[u8; 4] = b"MCT1";
const HEADER_LEN: usize = 4 + 1 + 3 * 8;

/// A deserialized tensor of either scalar kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    Real(Tensor3<f64>),
    Complex(Tensor3<Complex64>),
}

impl AnyTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            AnyTensor::Real(t) => t.dims(),
            AnyTensor::Complex(t) => t.dims(),
        }
    }

    pub fn kind(&self) -> ScalarKind {
        match self {
            AnyTensor::Real(_) => ScalarKind::Real64,
            AnyTensor::Complex(_) => ScalarKind::Complex128,
        }
    }

    pub fn into_real(self) -> Result<Tensor3<f64>> {
        match self {
            AnyTensor::Real(t) => Ok(t),
            AnyTensor::Complex(_) => Err(McurError::Format("expected a real tensor, found complex".into())),
        }
    }
}

pub fn encode_mct<T: Scalar>(t: &Tensor3<T>) -> Vec<u8> {
    let (m, n, p) = t.dims();
    let width = match T::KIND {
        ScalarKind::Real64 => 8,
        ScalarKind::Complex128 => 16,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + width * t.data().len());
    out.extend_from_slice(MAGIC);
    out.push(match T::KIND {
        ScalarKind::Real64 => 0,
        ScalarKind::Complex128 => 1,
    });
    for d in [m, n, p] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.real().to_le_bytes());
        if T::KIND == ScalarKind::Complex128 {
            out.extend_from_slice(&v.imaginary().to_le_bytes());
        }
    }
    out
}

pub fn decode_mct(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(McurError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(McurError::Format("missing MCT1 magic".into()));
    }
    let kind = bytes[4];
    let dim = |i: usize| {
        let start = 5 + 8 * i;
        u64::from_le_bytes(bytes[start..start + 8].try_into().expect("8-byte field"))
    };
    let (m, n, p) = (dim(0), dim(1), dim(2));
    let width: u64 = match kind {
        0 => 8,
        1 => 16,
        other => return Err(McurError::Format(format!("unknown scalar kind {other}"))),
    };
    let payload = m
        .checked_mul(n)
        .and_then(|v| v.checked_mul(p))
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| McurError::Format(format!("dims ({m}, {n}, {p}) overflow")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != payload {
        return Err(McurError::Format(format!(
            "dims ({m}, {n}, {p}) need {payload} data bytes, found {}",
            body.len()
        )));
    }
    let dims = (m as usize, n as usize, p as usize);
    let floats = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    if kind == 0 {
        Ok(AnyTensor::Real(Tensor3::new(dims, floats.collect())?))
    } else {
        let parts: Vec<f64> = floats.collect();
        let data = parts.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        Ok(AnyTensor::Complex(Tensor3::new(dims, data)?))
    }
}

pub fn write_mct<T: Scalar>(path: impl AsRef<Path>, t: &Tensor3<T>) -> Result<()> {
    fs::write(path, encode_mct(t))?;
    Ok(())
}

pub fn read_mct(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| McurError::ingest(path, e.to_string()))?;
    decode_mct(&bytes).map_err(|e| McurError::ingest(path, e.to_string()))
}

/// How colour images are turned into gray levels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Grayscale {
    /// `0.299 R + 0.587 G + 0.114 B`.
    #[default]
    Luma,
    /// Colour input is an ingestion error.
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameFormat {
    Pgm,
    #[cfg(feature = "png")]
    Png,
}

impl FrameFormat {
    fn extension(self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            #[cfg(feature = "png")]
            FrameFormat::Png => "png",
        }
    }

    fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(FrameFormat::Pgm),
            #[cfg(feature = "png")]
            "png" => Some(FrameFormat::Png),
            _ => None,
        }
    }
}

/// Parses an 8-bit binary PGM (P5) into gray levels scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, String> {
    let mut pos = 0;
    let mut fields = [0usize; 3];
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (P5)".into());
    }
    pos += 2;
    for field in fields.iter_mut() {
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
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PGM header")?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed PGM header".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not an 8-bit depth"));
    }
    let pixels = &bytes[pos..];
    if pixels.len() < width * height {
        return Err(format!(
            "{width}x{height} image needs {} pixel bytes, found {}",
            width * height,
            pixels.len()
        ));
    }
    let scale = maxval as f64;
    Ok(DMatrix::from_fn(height, width, |i, j| pixels[i * width + j] as f64 / scale))
}

/// Encodes `[0, 1]` gray levels as an 8-bit P5 image. Returns the encoded
/// bytes and the number of values that had to be clamped.
pub fn encode_pgm(img: &DMatrix<f64>) -> (Vec<u8>, usize) {
    let (h, w) = img.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let mut clamped = 0;
    out.reserve(w * h);
    for i in 0..h {
        for j in 0..w {
            let (b, c) = to_byte(img[(i, j)]);
            clamped += c as usize;
            out.push(b);
        }
    }
    (out, clamped)
}

fn to_byte(v: f64) -> (u8, bool) {
    if v.is_nan() {
        return (0, true);
    }
    let clamped = v.clamp(0.0, 1.0);
    ((clamped * 255.0).round() as u8, clamped != v)
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8], policy: Grayscale) -> std::result::Result<DMatrix<f64>, String> {
    use image::{ColorType, DynamicImage};
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    if gray {
        let luma = DynamicImage::to_luma8(&img);
        return Ok(DMatrix::from_fn(h, w, |i, j| luma.get_pixel(j as u32, i as u32)[0] as f64 / 255.0));
    }
    if policy == Grayscale::Reject {
        return Err("colour image while grayscale input is required".into());
    }
    let rgb = img.to_rgb8();
    Ok(DMatrix::from_fn(h, w, |i, j| {
        let [r, g, b] = rgb.get_pixel(j as u32, i as u32).0;
        (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
    }))
}

#[cfg(feature = "png")]
fn encode_png(img: &DMatrix<f64>) -> std::result::Result<(Vec<u8>, usize), String> {
    let (h, w) = img.shape();
    let mut clamped = 0;
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let (b, c) = to_byte(img[(i, j)]);
            clamped += c as usize;
            buf.put_pixel(j as u32, i as u32, image::Luma([b]));
        }
    }
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    Ok((out.into_inner(), clamped))
}

/// Reads one grayscale image (PGM, or PNG with the `png` feature).
#[cfg_attr(not(feature = "png"), allow(unused_variables))]
pub fn load_image(path: impl AsRef<Path>, policy: Grayscale) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let format = FrameFormat::from_path(path).ok_or_else(|| McurError::ingest(path, "unsupported image format"))?;
    let bytes = fs::read(path).map_err(|e| McurError::ingest(path, e.to_string()))?;
    let decoded = match format {
        FrameFormat::Pgm => decode_pgm(&bytes),
        #[cfg(feature = "png")]
        FrameFormat::Png => decode_png(&bytes, policy),
    };
    decoded.map_err(|reason| McurError::ingest(path, reason))
}

/// Image files of a directory in lexicographic file-name order.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| McurError::ingest(dir, e.to_string()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| McurError::ingest(dir, e.to_string()))?.path();
        if path.is_file() && FrameFormat::from_path(&path).is_some() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads a frame directory as a `(height, width, frames)` tensor in `[0, 1]`.
pub fn load_frames(dir: impl AsRef<Path>, policy: Grayscale) -> Result<Tensor3<f64>> {
    let dir = dir.as_ref();
    let files = list_frames(dir)?;
    if files.is_empty() {
        return Err(McurError::ingest(dir, "no frames found"));
    }
    let frames = files
        .par_iter()
        .map(|f| load_image(f, policy))
        .collect::<Result<Vec<_>>>()?;
    let shape = frames[0].shape();
    for (f, img) in files.iter().zip(&frames) {
        if img.shape() != shape {
            return Err(McurError::ingest(
                f,
                format!("frame is {:?} but the first frame is {:?}", img.shape(), shape),
            ));
        }
    }
    Tensor3::from_slices(&frames)
}

/// Writes one file per frontal slice, named `frame_00000.<ext>` and so on.
/// Returns the number of clamped values.
pub fn save_frames(t: &Tensor3<f64>, dir: impl AsRef<Path>, format: FrameFormat) -> Result<usize> {
    let dir = dir.as_ref();
    let (m, n, p) = t.dims();
    if m * n * p == 0 {
        return Err(McurError::dims("cannot save an empty tensor as frames"));
    }
    fs::create_dir_all(dir)?;
    let width = p.to_string().len().max(5);
    (0..p)
        .into_par_iter()
        .map(|k| {
            let img = t.slice_view(k).into_owned();
            let (bytes, clamped) = match format {
                FrameFormat::Pgm => encode_pgm(&img),
                #[cfg(feature = "png")]
                FrameFormat::Png => encode_png(&img).map_err(McurError::Format)?,
            };
            let path = dir.join(format!("frame_{k:0width$}.{}", format.extension()));
            fs::write(&path, bytes)?;
            Ok(clamped)
        })
        .sum()
}

/// Reads an evaluation input: an MCT1 file, a frame directory, or a single image.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<Tensor3<f64>> {
    let path = path.as_ref();
    if path.is_dir() {
        return load_frames(path, Grayscale::Luma);
    }
    if FrameFormat::from_path(path).is_some() {
        let img = load_image(path, Grayscale::Luma)?;
        return Ok(Tensor3::broadcast(&img, 1));
    }
    read_mct(path)?.into_real().map_err(|e| McurError::ingest(path, e.to_string()))
}

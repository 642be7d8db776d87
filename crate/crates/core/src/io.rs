//! File formats: PFM images with JSON sidecars, profile CSVs, hashing helpers.
//!
//! PFM files are grayscale (`Pf`), little-endian (`-1.0` scale), 32-bit
//! floats, scanlines stored bottom row first. The sidecar of `name.pfm` is
//! `name.json`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::Profile;
use crate::scalar::Scalar;

fn pfm_error(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "PFM",
        reason: reason.into(),
    }
}

pub fn encode_pfm<T: Scalar>(img: &Image<T>) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in img.row(y) {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    // Three whitespace-separated header tokens after the magic, then a single
    // whitespace byte before the raster.
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(pfm_error("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| pfm_error("non-ASCII header"))?);
    }
    if pos >= bytes.len() {
        return Err(pfm_error("missing raster"));
    }
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(pfm_error("colour PFM (PF) is not supported")),
        other => return Err(pfm_error(format!("bad magic {other:?}"))),
    }
    let parse = |t: &str, what: &str| t.parse::<usize>().map_err(|_| pfm_error(format!("bad {what} {t:?}")));
    let w = parse(tokens[1], "width")?;
    let h = parse(tokens[2], "height")?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| pfm_error(format!("bad scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(pfm_error("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let raster = &bytes[pos..];
    if raster.len() != w * h * 4 {
        return Err(pfm_error(format!(
            "raster has {} bytes, expected {}",
            raster.len(),
            w * h * 4
        )));
    }
    let mut data = vec![T::zero(); w * h];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (x, row_from_bottom) = (i % w, i / w);
        data[(h - 1 - row_from_bottom) * w + x] = T::of(v as f64);
    }
    Image::new(w, h, data)
}

pub fn write_pfm<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    write_atomic(path, &encode_pfm(img))
}

pub fn read_pfm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    decode_pfm(&fs::read(path)?)
}

/// Metadata stored next to every PFM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    /// What the image holds, e.g. `frame`, `phase_gt`, `phase_wrapped`, `quality`, `height`.
    pub role: String,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrapped: Option<bool>,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    /// Phase shift applied to this frame, radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_hash: Option<String>,
}

pub fn sidecar_path(pfm: &Path) -> PathBuf {
    pfm.with_extension("json")
}

/// Writes `img` as PFM and `meta` as its sidecar.
pub fn write_image<T: Scalar>(path: &Path, img: &Image<T>, meta: &Sidecar) -> Result<()> {
    write_pfm(path, img)?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_sidecar(pfm: &Path) -> Result<Sidecar> {
    read_json(&sidecar_path(pfm))
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("{} has no file name", path.display()))))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON encoding of `value`.
pub fn spec_hash<V: Serialize>(value: &V) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable"))
}

/// Two-column CSV with a `# segment=k` line where segment `k` (1-based) begins, for `k >= 2`.
pub fn profile_to_csv<T: Scalar>(profile: &Profile<T>) -> String {
    let mut out = String::from("pixel_index,value\n");
    let mut next = profile.boundaries.iter().peekable();
    let mut segment = 1;
    for (i, v) in profile.values.iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            segment += 1;
            let _ = writeln!(out, "# segment={segment}");
        }
        let _ = writeln!(out, "{i},{}", v.as_f64());
    }
    out
}

pub fn profile_from_csv<T: Scalar>(text: &str) -> Result<Profile<T>> {
    let err = |reason: String| Error::Format {
        format: "profile CSV",
        reason,
    };
    let mut values = Vec::new();
    let mut boundaries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("pixel_index") {
            continue;
        }
        if line.starts_with("# segment=") {
            boundaries.push(values.len());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| err(format!("line {}: expected two columns", n + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| err(format!("line {}: bad index", n + 1)))?;
        if idx != values.len() {
            return Err(err(format!("line {}: index {idx} out of sequence", n + 1)));
        }
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| err(format!("line {}: bad value", n + 1)))?;
        values.push(T::of(v));
    }
    Ok(Profile { values, boundaries })
}

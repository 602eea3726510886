//! IDX image ingestion: parse, bilinear-resize, standardize, and store as a
//! flat f64 matrix that sweeps can draw input rows from.
//!
//! The on-disk dataset format is deliberately minimal: a single JSON header
//! line (`{"format":"rflab-matrix-v1","rows":R,"cols":C,...}`) followed by
//! exactly R·C little-endian f64 values in row-major order.

use crate::{Error, Result};
use ndarray::Array2;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;
const FORMAT: &str = "rflab-matrix-v1";

/// Raw images parsed out of an IDX file, one row per image (u8 pixels).
#[derive(Debug)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32_be(r: &mut impl std::io::Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::DatasetFormat(format!("truncated IDX header ({what})")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image file (magic 0x00000803, big-endian dims).
pub fn parse_idx_images(path: &Path) -> Result<IdxImages> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let magic = read_u32_be(&mut r, "magic")?;
    if magic != MAGIC_IMAGES {
        return Err(Error::DatasetFormat(format!(
            "bad IDX image magic {magic:#010x} (want {MAGIC_IMAGES:#010x}) in {}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r, "count")? as usize;
    let rows = read_u32_be(&mut r, "rows")? as usize;
    let cols = read_u32_be(&mut r, "cols")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels).map_err(|_| {
        Error::DatasetFormat(format!(
            "IDX image payload shorter than {count}×{rows}×{cols} in {}",
            path.display()
        ))
    })?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Parse an IDX label file (magic 0x00000801). Only the count participates
/// in consistency checks; the labels themselves are unused because sweeps
/// keep the synthetic linear teacher on ingested inputs.
pub fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let magic = read_u32_be(&mut r, "magic")?;
    if magic != MAGIC_LABELS {
        return Err(Error::DatasetFormat(format!(
            "bad IDX label magic {magic:#010x} (want {MAGIC_LABELS:#010x}) in {}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut r, "count")? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels).map_err(|_| {
        Error::DatasetFormat(format!(
            "IDX label payload shorter than {count} in {}",
            path.display()
        ))
    })?;
    Ok(labels)
}

/// Bilinear resize of one grayscale image (align_corners = false: the
/// source coordinate of destination pixel i is (i + ½)·scale − ½, clamped).
pub fn bilinear_resize(src: &[f64], sh: usize, sw: usize, th: usize, tw: usize) -> Vec<f64> {
    let mut out = vec![0.0; th * tw];
    let sy = sh as f64 / th as f64;
    let sx = sw as f64 / tw as f64;
    for i in 0..th {
        let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for j in 0..tw {
            let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            let bot = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            out[i * tw + j] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Summary of one ingestion run.
#[derive(Debug)]
pub struct IngestReport {
    pub rows: usize,
    pub cols: usize,
    /// Global pixel mean before standardization.
    pub mean: f64,
    /// Global pixel standard deviation before standardization.
    pub std: f64,
}

/// Convert an IDX image/label pair into a standardized dataset matrix:
/// resize each image to `side`×`side`, flatten to a row of D = side² f64
/// values, then standardize globally (one mean and one standard deviation
/// across every pixel of every image).
pub fn ingest(images: &Path, labels: &Path, side: usize, out: &Path) -> Result<IngestReport> {
    if side == 0 {
        return Err(Error::Config("target side must be positive".into()));
    }
    let imgs = parse_idx_images(images)?;
    let lbls = parse_idx_labels(labels)?;
    if lbls.len() != imgs.count {
        return Err(Error::DatasetFormat(format!(
            "image/label count mismatch: {} images vs {} labels",
            imgs.count,
            lbls.len()
        )));
    }
    if imgs.count == 0 {
        return Err(Error::DatasetFormat("IDX file holds zero images".into()));
    }
    let d = side * side;
    let mut matrix = Array2::<f64>::zeros((imgs.count, d));
    let per = imgs.rows * imgs.cols;
    let mut buf = vec![0.0f64; per];
    for (k, mut row) in matrix.rows_mut().into_iter().enumerate() {
        for (dst, &px) in buf.iter_mut().zip(&imgs.pixels[k * per..(k + 1) * per]) {
            *dst = px as f64 / 255.0;
        }
        let resized = bilinear_resize(&buf, imgs.rows, imgs.cols, side, side);
        for (dst, v) in row.iter_mut().zip(resized) {
            *dst = v;
        }
    }
    // Global standardization: one affine map for the whole tensor, so the
    // relative structure between pixels/images is untouched.
    let n_tot = (imgs.count * d) as f64;
    let mean = matrix.sum() / n_tot;
    let var = matrix.mapv(|v| (v - mean) * (v - mean)).sum() / n_tot;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::DatasetFormat(
            "dataset has zero variance after resize; cannot standardize".into(),
        ));
    }
    matrix.mapv_inplace(|v| (v - mean) / std);
    write_matrix(out, &matrix, images)?;
    Ok(IngestReport {
        rows: imgs.count,
        cols: d,
        mean,
        std,
    })
}

/// Write a dataset matrix (JSON header line + row-major little-endian f64).
pub fn write_matrix(path: &Path, m: &Array2<f64>, source: &Path) -> Result<()> {
    let header = serde_json::json!({
        "format": FORMAT,
        "rows": m.nrows(),
        "cols": m.ncols(),
        "source": source.display().to_string(),
    });
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(|e| Error::io(path.display(), e))?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path.display(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display(), e))?;
    Ok(())
}

/// Read a dataset matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    loop {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)
            .map_err(|_| Error::DatasetFormat("dataset header line unterminated".into()))?;
        if b[0] == b'\n' {
            break;
        }
        header.push(b[0]);
        if header.len() > 1 << 16 {
            return Err(Error::DatasetFormat("dataset header too long".into()));
        }
    }
    let header: serde_json::Value = serde_json::from_slice(&header)
        .map_err(|e| Error::DatasetFormat(format!("dataset header not JSON: {e}")))?;
    if header["format"].as_str() != Some(FORMAT) {
        return Err(Error::DatasetFormat(format!(
            "unrecognized dataset format {:?} in {}",
            header["format"],
            path.display()
        )));
    }
    let rows = header["rows"].as_u64().unwrap_or(0) as usize;
    let cols = header["cols"].as_u64().unwrap_or(0) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::DatasetFormat("dataset header lacks rows/cols".into()));
    }
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes).map_err(|_| {
        Error::DatasetFormat(format!(
            "dataset payload shorter than {rows}×{cols} f64 in {}",
            path.display()
        ))
    })?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::DatasetFormat(format!("dataset shape error: {e}")))
}

//! On-disk formats.
//!
//! Frames are numbered RGB PNG files. Label maps are indexed PNGs using the
//! usual VOC palette, so they open in the same viewers as public benchmark
//! annotations. Flow fields and probability maps use small little-endian
//! binary containers:
//!
//! ```text
//! magic (4 bytes) | width u32 | height u32 | payload f32...
//! ```
//!
//! with magic `VSFL` and `(dx, dy)` pairs for flow, `VSPM` and one value per
//! pixel for probabilities. All writers go through a temporary file and a
//! rename so that an interrupted run never leaves a truncated output behind.

use std::fs;
use std::io::{BufReader, Cursor, Write};
use std::path::{Path, PathBuf};

use image::ImageEncoder;

use crate::error::{Error, Result};
use crate::grid::{FlowField, Frame, Grid, LabelMap, ProbMap, VideoSequence};

pub const FLOW_MAGIC: &[u8; 4] = b"VSFL";
pub const PROB_MAGIC: &[u8; 4] = b"VSPM";

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to `path` via a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Files in `dir` named `<number>.<ext>`, sorted by number and required to
/// form a contiguous run.
pub fn numbered_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) {
            found.push((n, path));
        }
    }
    found.sort();
    let Some(&(first, _)) = found.first() else {
        return Err(format_err(dir, format!("no numbered .{ext} files")));
    };
    for (i, (n, path)) in found.iter().enumerate() {
        if *n != first + i {
            if *n == first + i - 1 {
                return Err(format_err(path, "duplicate frame number"));
            }
            return Err(Error::SequenceGap {
                dir: dir.to_path_buf(),
                missing: first + i,
            });
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Frame::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
}

pub fn save_frame(path: &Path, frame: &Frame) -> Result<()> {
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(
            &frame.to_rgb8(),
            frame.width() as u32,
            frame.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    write_atomic(path, &buf)
}

/// Loads every numbered PNG in `dir` as one sequence.
pub fn load_sequence(dir: &Path) -> Result<VideoSequence> {
    let files = numbered_files(dir, "png")?;
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for path in &files {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            if first.dims() != frame.dims() {
                return Err(format_err(
                    path,
                    format!("frame is {:?} but the sequence is {:?}", frame.dims(), first.dims()),
                ));
            }
        }
        frames.push(frame);
    }
    VideoSequence::new(frames)
}

pub fn save_sequence(dir: &Path, frames: &[Frame]) -> Result<()> {
    ensure_dir(dir)?;
    for (t, f) in frames.iter().enumerate() {
        save_frame(&dir.join(format!("{t:05}.png")), f)?;
    }
    Ok(())
}

/// Color of `label` in the VOC palette.
pub fn palette_color(label: u8) -> [u8; 3] {
    let mut rgb = [0u8; 3];
    let mut c = label;
    for j in 0..8 {
        for (ch, v) in rgb.iter_mut().enumerate() {
            *v |= ((c >> ch) & 1) << (7 - j);
        }
        c >>= 3;
    }
    rgb
}

fn unpack_indices(row: &[u8], width: usize, depth: u8) -> impl Iterator<Item = u8> + '_ {
    let per_byte = 8 / depth as usize;
    let mask = ((1u16 << depth) - 1) as u8;
    (0..width).map(move |x| {
        let byte = row[x / per_byte];
        let shift = 8 - depth as usize * (x % per_byte + 1);
        (byte >> shift) & mask
    })
}

/// Reads a label map from an indexed, 8-bit grayscale, or palette-colored RGB PNG.
pub fn load_mask(path: &Path) -> Result<LabelMap> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let png_err = |e: png::DecodingError| format_err(path, e.to_string());
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let depth = info.bit_depth as u8;
    let rows = buf.chunks(info.line_size).take(h);
    let labels: Vec<u8> = match (info.color_type, depth) {
        (png::ColorType::Indexed, 1 | 2 | 4 | 8) | (png::ColorType::Grayscale, 8) => {
            rows.flat_map(|r| unpack_indices(r, w, depth)).collect()
        }
        (png::ColorType::Rgb, 8) => {
            let mut out = Vec::with_capacity(w * h);
            for px in rows.flat_map(|r| r[..3 * w].chunks(3)) {
                let label = (0..=u8::MAX)
                    .find(|&l| palette_color(l) == px)
                    .ok_or_else(|| format_err(path, format!("color {px:?} is not in the label palette")))?;
                out.push(label);
            }
            out
        }
        (ct, d) => {
            return Err(format_err(path, format!("unsupported mask format {ct:?} at {d} bits")));
        }
    };
    Grid::from_vec(w, h, labels)
}

/// Writes an 8-bit indexed PNG whose palette has `max_label + 1` entries.
pub fn save_mask(path: &Path, labels: &LabelMap) -> Result<()> {
    let palette: Vec<u8> = (0..=labels.max_label()).flat_map(palette_color).collect();
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, labels.width() as u32, labels.height() as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette);
        let png_err = |e: png::EncodingError| format_err(path, e.to_string());
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(labels.data()).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    write_atomic(path, &buf)
}

pub fn load_masks(dir: &Path) -> Result<Vec<LabelMap>> {
    numbered_files(dir, "png")?.iter().map(|p| load_mask(p)).collect()
}

pub fn save_masks(dir: &Path, labels: &[LabelMap]) -> Result<()> {
    ensure_dir(dir)?;
    for (t, l) in labels.iter().enumerate() {
        save_mask(&dir.join(format!("{t:05}.png")), l)?;
    }
    Ok(())
}

/// Frames with each labelled pixel blended half-way toward its palette color.
pub fn save_overlays(dir: &Path, frames: &[Frame], labels: &[LabelMap]) -> Result<()> {
    ensure_dir(dir)?;
    for (t, (frame, lab)) in frames.iter().zip(labels).enumerate() {
        lab.ensure_dims(frame.dims())?;
        let mut out = frame.clone();
        for (px, &l) in out.data_mut().iter_mut().zip(lab.data()) {
            if l > 0 {
                let c = palette_color(l);
                for ch in 0..3 {
                    px[ch] = 0.5 * px[ch] + 0.5 * c[ch] as f32 / 255.0;
                }
            }
        }
        save_frame(&dir.join(format!("{t:05}.png")), &out)?;
    }
    Ok(())
}

fn encode_floats(magic: &[u8; 4], width: usize, height: usize, values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * width * height);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn decode_floats(path: &Path, magic: &[u8; 4], per_pixel: usize) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(format_err(path, format!("missing {} header", String::from_utf8_lossy(magic))));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4 * per_pixel))
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    if bytes.len() - 12 != expected {
        return Err(format_err(
            path,
            format!("payload is {} bytes, expected {expected} for {w}x{h}", bytes.len() - 12),
        ));
    }
    let mut cursor = Cursor::new(&bytes[12..]);
    let mut values = Vec::with_capacity(w * h * per_pixel);
    let mut word = [0u8; 4];
    while std::io::Read::read_exact(&mut cursor, &mut word).is_ok() {
        values.push(f32::from_le_bytes(word));
    }
    Ok((w, h, values))
}

pub fn save_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = encode_floats(FLOW_MAGIC, flow.width(), flow.height(), flow.data().iter().flatten().copied());
    write_atomic(path, &bytes)
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let (w, h, v) = decode_floats(path, FLOW_MAGIC, 2)?;
    Grid::from_vec(w, h, v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

pub fn save_prob(path: &Path, prob: &ProbMap) -> Result<()> {
    let bytes = encode_floats(PROB_MAGIC, prob.width(), prob.height(), prob.data().iter().copied());
    write_atomic(path, &bytes)
}

pub fn load_prob(path: &Path) -> Result<ProbMap> {
    let (w, h, v) = decode_floats(path, PROB_MAGIC, 1)?;
    let map = Grid::from_vec(w, h, v)?;
    if !map.is_valid_probability() {
        return Err(format_err(path, "values outside [0, 1]"));
    }
    Ok(map)
}

//! Slice and label file I/O: binary PGM (P5) and 8-bit PNG.
//!
//! Label maps are stored as P5 PGM holding the class index per pixel. A
//! colour PNG render of a label map is available for inspection.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};

/// Raw 8-bit gray raster as read from disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("truncated PGM header".into()));
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut line = Vec::new();
                r.read_until(b'\n', &mut line)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            c => tok.push(c as char),
        }
    }
}

pub fn read_pgm<R: Read>(reader: R) -> Result<Gray8> {
    let mut r = BufReader::new(reader);
    if pgm_token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        pgm_token(&mut r)?
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PGM supported (maxval {maxval})")));
    }
    let mut pixels = vec![0u8; width * height];
    r.read_exact(&mut pixels)
        .map_err(|_| Error::Format("truncated PGM raster".into()))?;
    Ok(Gray8 {
        width,
        height,
        pixels,
    })
}

pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Gray8> {
    let img = image::open(path).map_err(|e| Error::Format(e.to_string()))?;
    let gray = img.into_luma8();
    Ok(Gray8 {
        width: gray.width() as usize,
        height: gray.height() as usize,
        pixels: gray.into_raw(),
    })
}

#[cfg(feature = "png")]
fn write_png(path: &Path, width: usize, height: usize, bytes: Vec<u8>, rgb: bool) -> Result<()> {
    let (w, h) = (width as u32, height as u32);
    let res = if rgb {
        image::RgbImage::from_raw(w, h, bytes).map(|i| i.save(path))
    } else {
        image::GrayImage::from_raw(w, h, bytes).map(|i| i.save(path))
    };
    match res {
        Some(r) => r.map_err(|e| Error::Format(e.to_string())),
        None => Err(Error::ShapeMismatch("raster size".into())),
    }
}

#[cfg(not(feature = "png"))]
fn read_png(_: &Path) -> Result<Gray8> {
    Err(Error::Format("PNG support not compiled in".into()))
}

#[cfg(not(feature = "png"))]
fn write_png(_: &Path, _: usize, _: usize, _: Vec<u8>, _: bool) -> Result<()> {
    Err(Error::Format("PNG support not compiled in".into()))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn read_gray8(path: &Path) -> Result<Gray8> {
    if is_png(path) {
        read_png(path)
    } else {
        read_pgm(fs::File::open(path)?)
    }
}

fn write_gray8(path: &Path, width: usize, height: usize, bytes: Vec<u8>) -> Result<()> {
    if is_png(path) {
        write_png(path, width, height, bytes, false)
    } else {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        write_pgm(&mut f, width, height, &bytes)?;
        f.flush()?;
        Ok(())
    }
}

/// Reads a PGM or PNG slice (chosen by extension).
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let g = read_gray8(path)?;
    GrayImage::from_u8(g.width, g.height, &g.pixels)
}

/// Writes a slice, quantizing to 8 bits (round half away from zero).
pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    write_gray8(path, img.width(), img.height(), img.to_u8())
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let g = read_gray8(path)?;
    LabelMap::from_vec(g.width, g.height, g.pixels)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    write_gray8(path, labels.width(), labels.height(), labels.as_slice().to_vec())
}

/// Colour render: background black, pore I red, pore II green, crust blue.
pub fn write_labels_rgb(path: &Path, labels: &LabelMap) -> Result<()> {
    write_png(path, labels.width(), labels.height(), labels.to_rgb(), true)
}

/// Canonical slice file name, `slice_0000.pgm` style.
pub fn slice_name(index: usize, ext: &str) -> String {
    format!("slice_{index:04}.{ext}")
}

/// Slice files (`.pgm`/`.png`) of a directory in lexicographic order.
pub fn list_slices(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Resolves `dir/sub` when it exists, otherwise `dir` itself. Lets commands
/// accept either a bare slice directory or an image/label pair directory.
pub fn resolve_subdir(dir: &Path, sub: &str) -> PathBuf {
    let nested = dir.join(sub);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

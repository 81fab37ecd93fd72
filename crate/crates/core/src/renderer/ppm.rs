//! Binary 8-bit portable pixmap (P6) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Maps a `3×H×W` image in [−1, 1] to interleaved RGB bytes.
pub fn image_to_bytes(image: &Tensor<f32>) -> Result<(usize, usize, Vec<u8>)> {
    let &[3, h, w] = image.shape() else {
        return Err(Error::Shape(format!("expected 3×H×W image, got {:?}", image.shape())));
    };
    let data = image.data();
    let mut bytes = Vec::with_capacity(3 * h * w);
    for p in 0..h * w {
        for ch in 0..3 {
            let v = (data[ch * h * w + p].clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0;
            bytes.push(v.round() as u8);
        }
    }
    Ok((w, h, bytes))
}

pub fn encode_ppm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (w, h, pixels) = image_to_bytes(image)?;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

pub fn write_ppm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
}

/// Parses a P6 file into a `3×H×W` image; byte 0 maps to −1 and maxval to +1.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated pixmap header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(Error::Format("not a binary pixmap (missing P6 magic)".into()));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse().map_err(|_| Error::Format(format!("bad pixmap {what} {t:?}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported pixmap maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let body = &bytes[(pos + 1).min(bytes.len())..];
    if body.len() < 3 * w * h {
        return Err(Error::Format(format!("pixmap raster truncated: {} of {} bytes", body.len(), 3 * w * h)));
    }
    let mut data = vec![0.0f32; 3 * w * h];
    for p in 0..w * h {
        for ch in 0..3 {
            data[ch * w * h + p] = body[3 * p + ch] as f32 / maxval as f32 * 2.0 - 1.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

pub fn read_ppm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

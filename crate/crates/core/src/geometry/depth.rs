//! Depth rasters and the PFM (portable float map) format.
//!
//! A raster stores one float per pixel; a pixel is valid when its value is
//! finite and strictly positive, matching the PFM convention of encoding
//! missing depth as zero. Rows are stored top-down in memory; PFM files
//! store them bottom-up, and the reader/writer convert.

use std::io::{Read, Write};

use super::GeometryError;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthRaster {
    /// `values` is row-major, top row first, `width * height` long.
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != width * height {
            return Err(GeometryError::Pfm(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(DepthRaster { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        let v = self.get(x, y);
        v.is_finite() && v > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite() && **v > 0.0).count()
    }

    /// Sample at a sub-pixel location (pixel centers at integer coordinates).
    /// Bilinear over the four surrounding pixels when all are valid; else the
    /// nearest valid pixel within `fallback_radius` px; else `None`.
    pub fn sample(&self, u: f64, v: f64, fallback_radius: f64) -> Option<f64> {
        if !(u.is_finite() && v.is_finite()) {
            return None;
        }
        if let Some(d) = self.sample_bilinear(u, v) {
            return Some(d);
        }
        self.nearest_valid(u, v, fallback_radius)
    }

    fn sample_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        if u < 0.0 || v < 0.0 || u > (self.width - 1) as f64 || v > (self.height - 1) as f64 {
            return None;
        }
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            if !self.is_valid(x, y) {
                return None;
            }
        }
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let bot = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }

    fn nearest_valid(&self, u: f64, v: f64, radius: f64) -> Option<f64> {
        if radius <= 0.0 {
            return None;
        }
        let r2 = radius * radius;
        let x_lo = ((u - radius).ceil().max(0.0)) as isize;
        let x_hi = ((u + radius).floor()).min((self.width - 1) as f64) as isize;
        let y_lo = ((v - radius).ceil().max(0.0)) as isize;
        let y_hi = ((v + radius).floor()).min((self.height - 1) as f64) as isize;
        let mut best: Option<(f64, f64)> = None; // (dist2, value)
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if x < 0 || y < 0 {
                    continue;
                }
                let (xu, yu) = (x as usize, y as usize);
                if !self.is_valid(xu, yu) {
                    continue;
                }
                let d2 = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                if d2 <= r2 && best.map_or(true, |(b, _)| d2 < b) {
                    best = Some((d2, self.get(xu, yu) as f64));
                }
            }
        }
        best.map(|(_, v)| v)
    }
}

/// Read a one-channel PFM. Only grayscale (`Pf`) rasters are accepted; the
/// scale line's sign selects the byte order.
pub fn read_pfm(reader: &mut impl Read) -> Result<DepthRaster, GeometryError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String, GeometryError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(GeometryError::Pfm(format!("truncated header: missing {what}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(GeometryError::Pfm("color PFM is not supported".into())),
        other => return Err(GeometryError::Pfm(format!("bad magic `{other}`"))),
    }
    let width: usize = token("width")?
        .parse()
        .map_err(|_| GeometryError::Pfm("bad width".into()))?;
    let height: usize = token("height")?
        .parse()
        .map_err(|_| GeometryError::Pfm("bad height".into()))?;
    let scale: f64 = token("scale")?
        .parse()
        .map_err(|_| GeometryError::Pfm("bad scale".into()))?;
    if scale == 0.0 {
        return Err(GeometryError::Pfm("scale must be nonzero".into()));
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(GeometryError::Pfm("missing header terminator".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| GeometryError::Pfm("raster too large".into()))?;
    if bytes.len() - pos < need {
        return Err(GeometryError::Pfm(format!(
            "raster truncated: need {need} bytes, have {}",
            bytes.len() - pos
        )));
    }
    let mut values = vec![0f32; width * height];
    for file_row in 0..height {
        let mem_row = height - 1 - file_row; // PFM rows run bottom-up
        for x in 0..width {
            let off = pos + (file_row * width + x) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            values[mem_row * width + x] =
                if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        }
    }
    DepthRaster::new(width, height, values)
}

/// Write a one-channel little-endian PFM.
pub fn write_pfm(raster: &DepthRaster, writer: &mut impl Write) -> Result<(), GeometryError> {
    write!(writer, "Pf\n{} {}\n-1.0\n", raster.width, raster.height)?;
    for file_row in 0..raster.height {
        let mem_row = raster.height - 1 - file_row;
        for x in 0..raster.width {
            writer.write_all(&raster.get(x, mem_row).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Frame-indexed raster lookup, so pipelines can stream from a directory or
/// serve prebuilt rasters from memory.
pub trait DepthSource {
    /// `Ok(None)` when no raster exists for the frame.
    fn depth(&mut self, frame: usize) -> Result<Option<DepthRaster>, GeometryError>;
}

/// In-memory source keyed by frame.
#[derive(Debug, Default)]
pub struct MapDepthSource {
    pub rasters: std::collections::BTreeMap<usize, DepthRaster>,
}

impl DepthSource for MapDepthSource {
    fn depth(&mut self, frame: usize) -> Result<Option<DepthRaster>, GeometryError> {
        Ok(self.rasters.get(&frame).cloned())
    }
}

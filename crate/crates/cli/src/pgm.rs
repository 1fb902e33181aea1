//! Binary PGM rendering of probability rasters.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use isingmap::Raster;

/// Gray level of a probability: `round(p * 255)`, so 0.5 maps to 128.
pub fn gray(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Writes `raster` as `P5` with maxval 255, top row first, plus a
/// `<path>.meta` file with the map origin and resolution.
pub fn write_pgm(raster: &Raster, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{} {}\n255\n", raster.width, raster.height)
        .and_then(|_| {
            let pixels: Vec<u8> = raster.values.iter().map(|&p| gray(p)).collect();
            out.write_all(&pixels)
        })
        .and_then(|_| out.flush())
        .with_context(|| format!("cannot write {}", path.display()))?;

    let meta = sidecar_path(path);
    let text = format!(
        "origin_x={}\norigin_y={}\nresolution={}\nwidth={}\nheight={}\n",
        raster.origin.x, raster.origin.y, raster.resolution, raster.width, raster.height
    );
    std::fs::write(&meta, text).with_context(|| format!("cannot write {}", meta.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_levels() {
        assert_eq!(gray(0.5), 128);
        assert_eq!(gray(1.0), 255);
        assert_eq!(gray(0.0), 0);
    }
}

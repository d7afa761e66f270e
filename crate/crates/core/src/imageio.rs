//! Image and raw-data export: binary PGM, lossless PNG, little-endian f32
//! dumps, diverging-colormap gradient images, and overlay renders. All
//! writes are atomic (temp file in the target directory, then rename), so
//! interrupted runs leave no partial artifacts.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::raster_forward::SilhouetteImage;

/// Writes bytes atomically: temp file in the destination directory, then
/// rename over the target path.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut builder = tempfile::Builder::new();
    builder.prefix(".tmp-");
    let file = match dir {
        Some(dir) => builder.tempfile_in(dir)?,
        None => builder.tempfile_in(".")?,
    };
    std::io::Write::write_all(&mut file.as_file(), bytes)?;
    file.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        file.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    file.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_byte(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM (P5, maxval 255). Intensities are clamped to [0, 1] and
/// rounded to 8 bits; use the f32 dump for bit-exact values.
pub fn write_pgm(path: impl AsRef<Path>, img: &SilhouetteImage) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.data.iter().map(|&v| to_byte(v)));
    atomic_write(path, &bytes)
}

/// Lossless 8-bit grayscale PNG of a silhouette image.
pub fn write_png_gray(path: impl AsRef<Path>, img: &SilhouetteImage) -> Result<()> {
    let gray = GrayImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        image::Luma([to_byte(img.get(y as usize, x as usize))])
    });
    let mut buf = Cursor::new(Vec::new());
    gray.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::ImageEncode(e.to_string()))?;
    atomic_write(path, buf.get_ref())
}

/// Raw float dump: little-endian 32-bit, row-major. The bit-exact exchange
/// format between `gen-data` and the fitting commands.
pub fn write_f32_dump(path: impl AsRef<Path>, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Reads a raw f32 dump back as f64 values.
pub fn read_f32_dump(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "f32 dump has {} bytes, not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Signed gradient map as a diverging-colormap PNG: blue for negative, red
/// for positive, white at zero, normalized to a symmetric range.
pub fn write_gradient_png(
    path: impl AsRef<Path>,
    grid: &[f64],
    height: usize,
    width: usize,
) -> Result<()> {
    if grid.len() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient values for a {height}x{width} image",
            grid.len()
        )));
    }
    let max_abs = grid.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let scale = if max_abs > 0.0 { 1.0 / max_abs } else { 0.0 };
    let rgb = RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let t = grid[y as usize * width + x as usize] * scale;
        let (r, g, b) = if t >= 0.0 {
            (1.0, 1.0 - t, 1.0 - t)
        } else {
            (1.0 + t, 1.0 + t, 1.0)
        };
        image::Rgb([to_byte(r), to_byte(g), to_byte(b)])
    });
    let mut buf = Cursor::new(Vec::new());
    rgb.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::ImageEncode(e.to_string()))?;
    atomic_write(path, buf.get_ref())
}

/// Overlay PNG for qualitative inspection: current render in red, target
/// silhouette in green (coincidence shows yellow).
pub fn write_overlay_png(
    path: impl AsRef<Path>,
    render: &SilhouetteImage,
    target: &SilhouetteImage,
) -> Result<()> {
    if render.height != target.height || render.width != target.width {
        return Err(Error::DimensionMismatch(format!(
            "render {}x{} vs target {}x{}",
            render.height, render.width, target.height, target.width
        )));
    }
    let rgb = RgbImage::from_fn(render.width as u32, render.height as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        image::Rgb([to_byte(render.get(i, j)), to_byte(target.get(i, j)), 0])
    });
    let mut buf = Cursor::new(Vec::new());
    rgb.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::ImageEncode(e.to_string()))?;
    atomic_write(path, buf.get_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_payload() {
        let img = SilhouetteImage {
            height: 2,
            width: 3,
            data: vec![0.0, 0.5, 1.0, 0.25, 0.75, 1.0],
            p0: 0.0,
            p1: 1.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.pgm");
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 128, 255, 64, 191, 255]);
    }

    #[test]
    fn f32_dump_round_trip() {
        let data = vec![0.0, 0.125, 1.0, -3.5, 0.7];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        write_f32_dump(&path, &data).unwrap();
        let back = read_f32_dump(&path).unwrap();
        assert_eq!(back.len(), data.len());
        for (a, b) in data.iter().zip(&back) {
            assert!((*a as f32 as f64 - *b).abs() == 0.0);
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("file.bin");
        atomic_write(&path, b"payload").unwrap();
        atomic_write(&path, b"payload2").unwrap();
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
        assert_eq!(std::fs::read(&path).unwrap(), b"payload2");
    }

    #[test]
    fn gradient_png_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grad.png");
        write_gradient_png(&path, &[-1.0, 0.0, 0.5, 1.0], 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}

//! Minimal raster rendering of scene states.
//!
//! Remote vision backends require an image payload per frame, but synthetic
//! trajectories are pure point geometry. This module renders each step as a
//! small top-down PNG: one colored square per entity (hue keyed to the entity
//! name, brightness to height) and white markers for the gripper contact
//! points, filled when the gripper is closed. The images carry the full
//! planar state, so a vision model sees real per-frame signal rather than a
//! placeholder.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use rover_core::scene::EnvState;

/// Output image side length in pixels.
const SIZE: u32 = 96;

/// Scene bounds projected onto the image. Catalog scenes live in roughly
/// x ∈ [0, 1.1], y ∈ [-0.75, 0.75] meters even after per-video shifts; the
/// margins keep every entity on screen.
const X_RANGE: (f64, f64) = (-0.4, 1.5);
const Y_RANGE: (f64, f64) = (-1.1, 1.1);
/// Height range mapped to brightness.
const Z_RANGE: (f64, f64) = (-0.2, 0.9);

fn to_pixel(x: f64, y: f64) -> (i64, i64) {
    let fx = (x - X_RANGE.0) / (X_RANGE.1 - X_RANGE.0);
    let fy = (y - Y_RANGE.0) / (Y_RANGE.1 - Y_RANGE.0);
    let px = (fx * f64::from(SIZE - 1)).round() as i64;
    let py = (fy * f64::from(SIZE - 1)).round() as i64;
    (px, py)
}

/// Deterministic saturated color for an entity name.
fn entity_color(name: &str) -> [u8; 3] {
    let digest = Sha256::digest(name.as_bytes());
    // Keep each channel away from black so entities stay visible on the
    // dark background regardless of the hash.
    [
        64 + (digest[0] % 192),
        64 + (digest[1] % 192),
        64 + (digest[2] % 192),
    ]
}

fn put_square(buf: &mut [u8], cx: i64, cy: i64, half: i64, color: [u8; 3]) {
    for dy in -half..=half {
        for dx in -half..=half {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= i64::from(SIZE) || y >= i64::from(SIZE) {
                continue;
            }
            let idx = 3 * (y as usize * SIZE as usize + x as usize);
            buf[idx..idx + 3].copy_from_slice(&color);
        }
    }
}

fn scale_brightness(color: [u8; 3], z: f64) -> [u8; 3] {
    let f = ((z - Z_RANGE.0) / (Z_RANGE.1 - Z_RANGE.0)).clamp(0.2, 1.0);
    color.map(|c| (f64::from(c) * f).round() as u8)
}

/// Render one environment state as an RGB PNG.
pub fn render_state(state: &EnvState) -> Result<Vec<u8>> {
    let mut buf = vec![12u8; (SIZE * SIZE * 3) as usize];
    for (name, pos) in &state.entities {
        let (px, py) = to_pixel(pos[0], pos[1]);
        put_square(&mut buf, px, py, 2, scale_brightness(entity_color(name), pos[2]));
    }
    let contact_half = if state.gripper_closed { 2 } else { 1 };
    for contact in &state.contacts {
        let (px, py) = to_pixel(contact[0], contact[1]);
        put_square(&mut buf, px, py, contact_half, [255, 255, 255]);
    }

    let mut png = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut png, SIZE, SIZE);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().context("PNG header")?;
        writer.write_image_data(&buf).context("PNG image data")?;
    }
    Ok(png)
}

//! Shot-ID marker overlay and frame preparation.

use image::{imageops, Rgb, RgbImage};

/// Prepared frame width in pixels.
pub const FRAME_WIDTH: u32 = 147;
/// Prepared frame height in pixels.
pub const FRAME_HEIGHT: u32 = 63;

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const PADDING: u32 = 1;
const SPACING: u32 = 1;

// 5x7 dot-matrix digits, one byte per row, bit 4 is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

/// Pixel rectangle `(width, height)` of the marker box, anchored at (0, 0).
pub fn marker_box(shot_id: usize) -> (u32, u32) {
    let digits = shot_id.to_string().len() as u32;
    (
        2 * PADDING + digits * GLYPH_W + (digits - 1) * SPACING,
        2 * PADDING + GLYPH_H,
    )
}

/// Resizes to 147x63 (no-op when already that size).
pub fn resize_frame(img: &RgbImage) -> RgbImage {
    if img.dimensions() == (FRAME_WIDTH, FRAME_HEIGHT) {
        return img.clone();
    }
    imageops::resize(img, FRAME_WIDTH, FRAME_HEIGHT, imageops::FilterType::Triangle)
}

/// Resizes and stamps the decimal shot id, white on black, at the top-left.
pub fn annotate_frame(img: &RgbImage, shot_id: usize) -> RgbImage {
    let mut out = resize_frame(img);
    draw_marker(&mut out, shot_id);
    out
}

fn draw_marker(img: &mut RgbImage, shot_id: usize) {
    let (box_w, box_h) = marker_box(shot_id);
    let (w, h) = img.dimensions();
    let black = Rgb([0, 0, 0]);
    let white = Rgb([255, 255, 255]);
    for y in 0..box_h.min(h) {
        for x in 0..box_w.min(w) {
            img.put_pixel(x, y, black);
        }
    }
    for (k, ch) in shot_id.to_string().bytes().enumerate() {
        let glyph = &DIGITS[(ch - b'0') as usize];
        let x0 = PADDING + k as u32 * (GLYPH_W + SPACING);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (0x10 >> col) != 0 {
                    let (x, y) = (x0 + col, PADDING + row as u32);
                    if x < w && y < h {
                        img.put_pixel(x, y, white);
                    }
                }
            }
        }
    }
}

/// Reads the marker back out of an annotated frame. Test helper for glyph
/// legibility; returns `None` if the box does not hold clean digits.
pub fn read_marker(img: &RgbImage, digits: usize) -> Option<usize> {
    let mut value = 0usize;
    for k in 0..digits as u32 {
        let x0 = PADDING + k * (GLYPH_W + SPACING);
        let mut rows = [0u8; 7];
        for (row, slot) in rows.iter_mut().enumerate() {
            for col in 0..GLYPH_W {
                let px = img.get_pixel_checked(x0 + col, PADDING + row as u32)?;
                match px.0 {
                    [255, 255, 255] => *slot |= 0x10 >> col,
                    [0, 0, 0] => {}
                    _ => return None,
                }
            }
        }
        let d = DIGITS.iter().position(|g| *g == rows)?;
        value = value * 10 + d;
    }
    Some(value)
}

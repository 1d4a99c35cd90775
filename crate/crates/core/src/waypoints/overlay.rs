//! Label rasterization (red disk, white 5×7 glyph at 2× scale) and the
//! matching detector used by non-privileged policies.

use crate::sensors::RgbImage;

pub const LABEL_RADIUS: i64 = 12;
pub const LABEL_RED: [u8; 3] = [255, 0, 0];
pub const LABEL_WHITE: [u8; 3] = [255, 255, 255];
const GLYPH_SCALE: i64 = 2;
const GLYPH_W: i64 = 5 * GLYPH_SCALE;
const GLYPH_H: i64 = 7 * GLYPH_SCALE;

/// 5×7 uppercase glyphs; bit 4 is the leftmost column.
const FONT: [[u8; 7]; 26] = [
    [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
    [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
    [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
    [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
    [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
    [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
    [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
    [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
    [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
    [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
    [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
    [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
    [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
    [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
    [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
    [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
    [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
    [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
    [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
    [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
    [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
    [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
];

fn glyph_on(letter: char, gx: i64, gy: i64) -> bool {
    let row = FONT[(letter as u8 - b'A') as usize][(gy / GLYPH_SCALE) as usize];
    row & (0x10 >> (gx / GLYPH_SCALE)) != 0
}

/// Where the disk for a label at `(row, col)` is drawn: the position clamped
/// so the whole disk fits inside the image.
pub fn overlay_center(img: &RgbImage, row: usize, col: usize) -> (i64, i64) {
    let cx = (col as i64).clamp(LABEL_RADIUS, img.width as i64 - 1 - LABEL_RADIUS);
    let cy = (row as i64).clamp(LABEL_RADIUS, img.height as i64 - 1 - LABEL_RADIUS);
    (cx, cy)
}

/// Draw one label disk with its glyph centered on `(cx, cy)`.
pub fn draw_label(img: &mut RgbImage, cx: i64, cy: i64, letter: char) {
    assert!(letter.is_ascii_uppercase());
    let r2 = LABEL_RADIUS * LABEL_RADIUS;
    for dy in -LABEL_RADIUS..=LABEL_RADIUS {
        for dx in -LABEL_RADIUS..=LABEL_RADIUS {
            if dx * dx + dy * dy <= r2 {
                img.put_clipped(cx + dx, cy + dy, LABEL_RED);
            }
        }
    }
    let (x0, y0) = (cx - GLYPH_W / 2, cy - GLYPH_H / 2);
    for gy in 0..GLYPH_H {
        for gx in 0..GLYPH_W {
            if glyph_on(letter, gx, gy) {
                img.put_clipped(x0 + gx, y0 + gy, LABEL_WHITE);
            }
        }
    }
}

/// A label found in an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedLabel {
    pub letter: char,
    pub row: usize,
    pub col: usize,
}

fn components(img: &RgbImage, mask: &[bool], reach: i64) -> Vec<Vec<(i64, i64)>> {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(k) = stack.pop() {
            let (x, y) = ((k as i64) % w, (k as i64) / w);
            comp.push((x, y));
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let nk = (ny * w + nx) as usize;
                    if mask[nk] && !seen[nk] {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn bbox(comp: &[(i64, i64)]) -> (i64, i64, i64, i64) {
    comp.iter()
        .fold((i64::MAX, i64::MAX, i64::MIN, i64::MIN), |b, &(x, y)| {
            (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y))
        })
}

/// Best-matching letter for a glyph whose top-left is near `(x0, y0)`.
fn read_glyph(img: &RgbImage, x0: i64, y0: i64) -> Option<(char, f64)> {
    let white = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < img.width
            && (y as usize) < img.height
            && img.get(x as usize, y as usize) == LABEL_WHITE
    };
    let mut best: Option<(char, f64)> = None;
    for oy in -1..=1 {
        for ox in -1..=1 {
            for (i, _) in FONT.iter().enumerate() {
                let letter = (b'A' + i as u8) as char;
                let mut agree = 0;
                for gy in 0..GLYPH_H {
                    for gx in 0..GLYPH_W {
                        if glyph_on(letter, gx, gy) == white(x0 + ox + gx, y0 + oy + gy) {
                            agree += 1;
                        }
                    }
                }
                let score = agree as f64 / (GLYPH_W * GLYPH_H) as f64;
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((letter, score));
                }
            }
        }
    }
    best
}

/// Locate overlaid labels: pure-white glyph strokes grouped by proximity,
/// kept when they sit inside a pure-red disk, read by template matching.
pub fn detect_labels(img: &RgbImage) -> Vec<DetectedLabel> {
    let n = img.width * img.height;
    let mut white = vec![false; n];
    for y in 0..img.height {
        for x in 0..img.width {
            white[y * img.width + x] = img.get(x, y) == LABEL_WHITE;
        }
    }
    let red_at = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < img.width
            && (y as usize) < img.height
            && img.get(x as usize, y as usize) == LABEL_RED
    };
    let mut found = Vec::new();
    for comp in components(img, &white, 2) {
        let (x0, y0, x1, y1) = bbox(&comp);
        if x1 - x0 >= GLYPH_W + 2 || y1 - y0 >= GLYPH_H + 2 {
            continue;
        }
        let cx = (x0 + x1 + 1) / 2;
        let cy = (y0 + y1 + 1) / 2;
        // Disk pixels just outside the glyph box on both sides.
        let ring = [
            (cx - GLYPH_W / 2 - 2, cy),
            (cx + GLYPH_W / 2 + 1, cy),
            (cx, cy - GLYPH_H / 2 - 2),
            (cx, cy + GLYPH_H / 2 + 1),
        ];
        if ring.iter().filter(|&&(x, y)| red_at(x, y)).count() < 3 {
            continue;
        }
        // The glyph box may be narrower than the full cell for letters with
        // blank edge columns, so anchor on the disk center instead.
        let (dcx, dcy) = disk_center(img, cx, cy);
        if let Some((letter, score)) = read_glyph(img, dcx - GLYPH_W / 2, dcy - GLYPH_H / 2) {
            if score >= 0.9 {
                found.push(DetectedLabel {
                    letter,
                    row: dcy as usize,
                    col: dcx as usize,
                });
            }
        }
    }
    found.sort_by_key(|d| d.letter);
    found.dedup_by_key(|d| d.letter);
    found
}

/// Center of the red disk around a glyph, from the red run lengths through
/// `(cx, cy)`; falls back to the guess when the disk is occluded.
fn disk_center(img: &RgbImage, cx: i64, cy: i64) -> (i64, i64) {
    let label_px = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < img.width
            && (y as usize) < img.height
            && matches!(img.get(x as usize, y as usize), LABEL_RED | LABEL_WHITE)
    };
    let extent = |dx: i64, dy: i64| {
        let mut k = 0;
        while k <= 2 * LABEL_RADIUS && label_px(cx + dx * (k + 1), cy + dy * (k + 1)) {
            k += 1;
        }
        k
    };
    let (l, r) = (extent(-1, 0), extent(1, 0));
    let (u, d) = (extent(0, -1), extent(0, 1));
    let mut x = cx;
    let mut y = cy;
    if l + r == 2 * LABEL_RADIUS {
        x = cx + (r - l) / 2;
    }
    if u + d == 2 * LABEL_RADIUS {
        y = cy + (d - u) / 2;
    }
    (x, y)
}

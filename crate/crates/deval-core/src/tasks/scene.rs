//! Synthetic traffic-style scenes: triangular glyphs facing left (pure blue)
//! or right (pure red) on a white canvas, counted from the raster alone.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenError, TaskError};
use crate::b64;

pub const SCENE_WIDTH: u32 = 96;
pub const SCENE_HEIGHT: u32 = 64;

pub const WHITE: [u8; 3] = [255, 255, 255];
/// Left-facing glyphs render in pure blue.
pub const BLUE: [u8; 3] = [0, 0, 255];
/// Right-facing glyphs render in pure red.
pub const RED: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facing {
    Left,
    Right,
}

/// Ground-truth placement of one glyph (bounding box in pixels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glyph {
    pub facing: Facing,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// An RGB8 raster plus the glyph list it was rendered from. Counting
/// operates on the raster only; the glyph list is generation ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB8, `width * height * 3` bytes.
    #[serde(with = "b64")]
    pub pixels: Vec<u8>,
    pub glyphs: Vec<Glyph>,
}

impl SceneImage {
    pub fn blank(width: u32, height: u32) -> Self {
        SceneImage {
            width,
            height,
            pixels: WHITE.repeat((width * height) as usize),
            glyphs: Vec::new(),
        }
    }

    fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let at = ((y * self.width + x) * 3) as usize;
        [self.pixels[at], self.pixels[at + 1], self.pixels[at + 2]]
    }

    fn set_pixel(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let at = ((y * self.width + x) * 3) as usize;
        self.pixels[at..at + 3].copy_from_slice(&color);
    }
}

/// Whether a left-facing triangle with the given box size covers (dx, dy).
/// The apex sits at the left edge, the base fills the right edge, and the
/// covered span grows linearly in between; right-facing mirrors this exactly.
fn left_covers(dx: u32, dy: u32, w: u32, h: u32) -> bool {
    let spread = (2 * i64::from(dy) + 1 - i64::from(h)).abs();
    spread * i64::from(w) <= (i64::from(dx) + 1) * i64::from(h)
}

fn draw_glyph(img: &mut SceneImage, glyph: Glyph) {
    let color = match glyph.facing {
        Facing::Left => BLUE,
        Facing::Right => RED,
    };
    for dy in 0..glyph.h {
        for dx in 0..glyph.w {
            let covered = match glyph.facing {
                Facing::Left => left_covers(dx, dy, glyph.w, glyph.h),
                Facing::Right => left_covers(glyph.w - 1 - dx, dy, glyph.w, glyph.h),
            };
            if covered {
                img.set_pixel(glyph.x + dx, glyph.y + dy, color);
            }
        }
    }
}

/// Render a scene with the requested facing counts. Boxes are placed with at
/// least one pixel of clearance so glyphs never merge into one component;
/// placement retries are bounded and failure is a generation error.
pub fn render_scene(left: u32, right: u32, rng: &mut ChaCha8Rng) -> Result<SceneImage, GenError> {
    const ATTEMPTS: u32 = 200;
    let mut img = SceneImage::blank(SCENE_WIDTH, SCENE_HEIGHT);
    let mut placed: Vec<Glyph> = Vec::new();
    let facings = std::iter::repeat(Facing::Left)
        .take(left as usize)
        .chain(std::iter::repeat(Facing::Right).take(right as usize));
    for facing in facings {
        let mut positioned = None;
        for _ in 0..ATTEMPTS {
            let w = rng.gen_range(12..=18);
            let h = rng.gen_range(8..=12);
            let x = rng.gen_range(0..=SCENE_WIDTH - w);
            let y = rng.gen_range(0..=SCENE_HEIGHT - h);
            let candidate = Glyph { facing, x, y, w, h };
            let clear = placed.iter().all(|g| {
                // Require a one-pixel gap between boxes.
                candidate.x + candidate.w + 1 <= g.x
                    || g.x + g.w + 1 <= candidate.x
                    || candidate.y + candidate.h + 1 <= g.y
                    || g.y + g.h + 1 <= candidate.y
            });
            if clear {
                positioned = Some(candidate);
                break;
            }
        }
        let glyph =
            positioned.ok_or(GenError::Placement { left, right, attempts: ATTEMPTS })?;
        draw_glyph(&mut img, glyph);
        placed.push(glyph);
    }
    img.glyphs = placed;
    Ok(img)
}

/// Count 4-connected components of pure blue and pure red in the raster:
/// (left-facing, right-facing). Anti-aliasing-free rendering makes exact
/// color matching sound.
pub fn count_glyphs(img: &SceneImage) -> (u32, u32) {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut visited = vec![false; w * h];
    let mut counts = (0u32, 0u32);
    for y in 0..h {
        for x in 0..w {
            if visited[y * w + x] {
                continue;
            }
            let color = img.pixel(x as u32, y as u32);
            if color != BLUE && color != RED {
                continue;
            }
            // Flood this component.
            let mut stack = vec![(x, y)];
            visited[y * w + x] = true;
            while let Some((cx, cy)) = stack.pop() {
                let mut push = |nx: usize, ny: usize, visited: &mut Vec<bool>| {
                    if !visited[ny * w + nx] && img.pixel(nx as u32, ny as u32) == color {
                        visited[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                };
                if cx > 0 {
                    push(cx - 1, cy, &mut visited);
                }
                if cx + 1 < w {
                    push(cx + 1, cy, &mut visited);
                }
                if cy > 0 {
                    push(cx, cy - 1, &mut visited);
                }
                if cy + 1 < h {
                    push(cx, cy + 1, &mut visited);
                }
            }
            if color == BLUE {
                counts.0 += 1;
            } else {
                counts.1 += 1;
            }
        }
    }
    counts
}

/// Mirror the raster left-right and swap the red and blue channels, so every
/// glyph keeps a valid facing color; ground-truth facings flip with it.
pub fn transform_flip_horizontal(img: &SceneImage) -> SceneImage {
    let mut out = SceneImage::blank(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let [r, g, b] = img.pixel(img.width - 1 - x, y);
            out.set_pixel(x, y, [b, g, r]);
        }
    }
    out.glyphs = img
        .glyphs
        .iter()
        .map(|g| Glyph {
            facing: match g.facing {
                Facing::Left => Facing::Right,
                Facing::Right => Facing::Left,
            },
            x: img.width - g.x - g.w,
            y: g.y,
            w: g.w,
            h: g.h,
        })
        .collect();
    out
}

/// Under a horizontal flip the facing counts swap.
pub fn relate_swapped_counts(y1: (u32, u32), y2: (u32, u32)) -> bool {
    y2.0 == y1.1 && y2.1 == y1.0
}

/// Stack the image on top of a copy of itself.
pub fn transform_concat_vertical(img: &SceneImage) -> SceneImage {
    let mut pixels = img.pixels.clone();
    pixels.extend_from_slice(&img.pixels);
    let mut glyphs = img.glyphs.clone();
    glyphs.extend(img.glyphs.iter().map(|g| Glyph { y: g.y + img.height, ..*g }));
    SceneImage { width: img.width, height: img.height * 2, pixels, glyphs }
}

/// Under vertical self-concatenation both counts double.
pub fn relate_doubled_counts(y1: (u32, u32), y2: (u32, u32)) -> bool {
    y2.0 == 2 * y1.0 && y2.1 == 2 * y1.1
}

/// Serialize as binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &SceneImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Parse a binary PPM (P6, maxval 255). The glyph list is not part of the
/// wire format and comes back empty.
pub fn decode_ppm(bytes: &[u8]) -> Result<SceneImage, TaskError> {
    let bad = |detail: &str| TaskError::BadImage(detail.to_string());
    let mut at = 0usize;
    let mut token = || -> Result<String, TaskError> {
        while at < bytes.len() {
            match bytes[at] {
                b' ' | b'\t' | b'\r' | b'\n' => at += 1,
                b'#' => {
                    while at < bytes.len() && bytes[at] != b'\n' {
                        at += 1;
                    }
                }
                _ => break,
            }
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..at]).into_owned())
    };
    if token()? != "P6" {
        return Err(bad("not a P6 file"));
    }
    let width: u32 = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: u32 = token()?.parse().map_err(|_| bad("bad height"))?;
    if token()? != "255" {
        return Err(bad("maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if at >= bytes.len() || !bytes[at].is_ascii_whitespace() {
        return Err(bad("missing header terminator"));
    }
    at += 1;
    let expected = (width as usize) * (height as usize) * 3;
    let pixels = bytes[at..].to_vec();
    if pixels.len() != expected {
        return Err(TaskError::BadImage(format!(
            "payload holds {} bytes, expected {expected}",
            pixels.len()
        )));
    }
    Ok(SceneImage { width, height, pixels, glyphs: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rendering_matches_requested_counts() {
        for seed in 0..30u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let left = seed as u32 % 4;
            let right = (seed as u32 / 4) % 4;
            let img = render_scene(left, right, &mut rng).unwrap();
            assert_eq!(count_glyphs(&img), (left, right), "seed {seed}");
            assert_eq!(img.glyphs.len(), (left + right) as usize);
        }
    }

    #[test]
    fn rendering_is_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(render_scene(2, 1, &mut a).unwrap(), render_scene(2, 1, &mut b).unwrap());
    }

    #[test]
    fn blank_scene_counts_zero() {
        let img = SceneImage::blank(SCENE_WIDTH, SCENE_HEIGHT);
        assert_eq!(count_glyphs(&img), (0, 0));
    }

    #[test]
    fn flip_swaps_counts_and_facings() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = render_scene(1, 2, &mut rng).unwrap();
        let flipped = transform_flip_horizontal(&img);
        assert_eq!(count_glyphs(&flipped), (2, 1));
        assert!(relate_swapped_counts(count_glyphs(&img), count_glyphs(&flipped)));
        // Double flip restores the original raster and ground truth.
        assert_eq!(transform_flip_horizontal(&flipped), img);
    }

    #[test]
    fn flip_preserves_the_color_palette() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = render_scene(2, 2, &mut rng).unwrap();
        let flipped = transform_flip_horizontal(&img);
        for y in 0..flipped.height {
            for x in 0..flipped.width {
                let c = flipped.pixel(x, y);
                assert!(c == WHITE || c == BLUE || c == RED, "unexpected color {c:?}");
            }
        }
    }

    #[test]
    fn concat_doubles_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = render_scene(1, 2, &mut rng).unwrap();
        let doubled = transform_concat_vertical(&img);
        assert_eq!(doubled.height, img.height * 2);
        assert_eq!(count_glyphs(&doubled), (2, 4));
        assert!(relate_doubled_counts((1, 2), (2, 4)));
        assert!(!relate_doubled_counts((1, 2), (2, 3)));
    }

    #[test]
    fn ppm_round_trips_and_rejects_damage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = render_scene(2, 1, &mut rng).unwrap();
        let bytes = encode_ppm(&img);
        let decoded = decode_ppm(&bytes).unwrap();
        assert_eq!(decoded.pixels, img.pixels);
        assert_eq!(count_glyphs(&decoded), (2, 1));

        assert!(decode_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_ppm(b"P5\n1 1\n255\n   ").is_err());
        let wrong_maxval = b"P6\n1 1\n127\n\x00\x00\x00";
        assert!(decode_ppm(wrong_maxval).is_err());
    }

    #[test]
    fn components_with_a_shared_color_stay_separate() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let img = render_scene(3, 0, &mut rng).unwrap();
        assert_eq!(count_glyphs(&img), (3, 0));
    }
}

//! Procedurally generated imagery for self-tests and demos.
//!
//! Six texture families with strongly different co-occurrence, gradient and
//! blockiness signatures. `Smooth` stands in for camera-like content; the
//! other five are distinct synthetic-texture stand-ins. Rendering is a pure
//! function of (family, seed, size).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageops::{round_u8, RgbBuffer};

/// Texture families, one camera-like and five synthetic stand-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureFamily {
    /// Low-frequency shaded gradients with faint grain.
    Smooth,
    /// Per-pixel uniform noise.
    Grain,
    /// Two-level single-pixel vertical stripes.
    Stripes,
    /// Constant 8x8 blocks at random levels.
    Blocks,
    /// Heavily blurred noise.
    SoftNoise,
    /// Single-pixel two-level checkerboard.
    Checker,
}

impl TextureFamily {
    pub const ALL: [TextureFamily; 6] = [
        TextureFamily::Smooth,
        TextureFamily::Grain,
        TextureFamily::Stripes,
        TextureFamily::Blocks,
        TextureFamily::SoftNoise,
        TextureFamily::Checker,
    ];

    /// Stable lowercase name, used as a class label in test datasets.
    pub fn name(self) -> &'static str {
        match self {
            TextureFamily::Smooth => "smooth",
            TextureFamily::Grain => "grain",
            TextureFamily::Stripes => "stripes",
            TextureFamily::Blocks => "blocks",
            TextureFamily::SoftNoise => "softnoise",
            TextureFamily::Checker => "checker",
        }
    }
}

fn family_rng(family: TextureFamily, seed: u64) -> ChaCha8Rng {
    let tag = TextureFamily::ALL.iter().position(|&f| f == family).unwrap() as u64;
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[24..32].copy_from_slice(b"SID_FIX1");
    ChaCha8Rng::from_seed(key)
}

/// Render one image of the given family. Same arguments, same bytes.
pub fn render(family: TextureFamily, seed: u64, width: u32, height: u32) -> RgbBuffer {
    let mut rng = family_rng(family, seed);
    match family {
        TextureFamily::Smooth => smooth(&mut rng, width, height),
        TextureFamily::Grain => grain(&mut rng, width, height),
        TextureFamily::Stripes => stripes(&mut rng, width, height),
        TextureFamily::Blocks => blocks(&mut rng, width, height),
        TextureFamily::SoftNoise => soft_noise(&mut rng, width, height),
        TextureFamily::Checker => checker(&mut rng, width, height),
    }
}

/// Camera-like stand-in: smooth shading plus faint grain, mild per-channel
/// tint. Useful wherever a "natural photo" fixture is needed.
pub fn natural(seed: u64, width: u32, height: u32) -> RgbBuffer {
    let mut rng = family_rng(TextureFamily::Smooth, seed ^ 0x6e61_7475_7261_6c21);
    smooth(&mut rng, width, height)
}

fn smooth(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    // Two low-frequency plane waves per channel; periods of 60..220 px keep
    // neighbor deltas around one grey level.
    let mut waves = [[0.0f64; 6]; 3];
    for chan in &mut waves {
        for k in 0..2 {
            chan[k * 3] = rng.gen_range(-0.9..0.9) * std::f64::consts::TAU / rng.gen_range(60.0..220.0);
            chan[k * 3 + 1] =
                rng.gen_range(-0.9..0.9) * std::f64::consts::TAU / rng.gen_range(60.0..220.0);
            chan[k * 3 + 2] = rng.gen_range(0.0..std::f64::consts::TAU);
        }
    }
    let base: [f64; 3] = [
        rng.gen_range(100.0..160.0),
        rng.gen_range(100.0..160.0),
        rng.gen_range(100.0..160.0),
    ];
    let mut img = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let wv = waves[c];
                let v = base[c]
                    + 35.0 * (wv[0] * x as f64 + wv[1] * y as f64 + wv[2]).sin()
                    + 20.0 * (wv[3] * x as f64 + wv[4] * y as f64 + wv[5]).sin()
                    + rng.gen_range(-1.5..1.5);
                rgb[c] = round_u8(v);
            }
            img.set_pixel(x, y, rgb);
        }
    }
    img
}

fn grain(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    let mut img = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v: u8 = rng.gen();
            img.set_pixel(x, y, [v, v, v]);
        }
    }
    img
}

fn stripes(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    let dark = rng.gen_range(30u8..70);
    let light = rng.gen_range(180u8..230);
    let mut img = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let base = if x % 2 == 0 { dark } else { light };
            let v = round_u8(base as f64 + rng.gen_range(-4.0..4.0));
            img.set_pixel(x, y, [v, v, v]);
        }
    }
    img
}

fn blocks(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
    let levels: Vec<u8> = (0..bw as usize * bh as usize)
        .map(|_| rng.gen_range(20u8..=235))
        .collect();
    let mut img = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = levels[(y / 8) as usize * bw as usize + (x / 8) as usize];
            img.set_pixel(x, y, [v, v, v]);
        }
    }
    img
}

fn soft_noise(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    let raw = grain(rng, w, h);
    crate::alterations::gaussian_blur(&raw, 1.5)
}

fn checker(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbBuffer {
    let dark = rng.gen_range(40u8..80);
    let light = rng.gen_range(170u8..220);
    let mut img = RgbBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let base = if (x + y) % 2 == 0 { dark } else { light };
            let v = round_u8(base as f64 + rng.gen_range(-3.0..3.0));
            img.set_pixel(x, y, [v, v, v]);
        }
    }
    img
}

//! Seeded synthetic corpus: grayscale frames with a black border around a
//! noisy mid-gray field holding one bright shape in one quadrant.
//!
//! Images are generated in pairs that share a caption and differ in shape
//! size and position jitter.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uucap_core::text::{write_manifest, ManifestRow};

pub const WIDTH: u32 = 192;
pub const HEIGHT: u32 = 144;
pub const SHAPES: [&str; 4] = ["circle", "square", "triangle", "ring"];
pub const MANIFEST_NAME: &str = "manifest.csv";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scene {
    pub shape: usize,
    pub upper: bool,
    pub left: bool,
}

impl Scene {
    pub fn caption(&self) -> String {
        let v = if self.upper { "upper" } else { "lower" };
        let h = if self.left { "left" } else { "right" };
        format!("Bright {} in the {v}-{h} quadrant.", SHAPES[self.shape])
    }

    fn contains(&self, dx: f64, dy: f64, r: f64) -> bool {
        let d = (dx * dx + dy * dy).sqrt();
        match SHAPES[self.shape] {
            "circle" => d <= r,
            "square" => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
            "triangle" => dy.abs() <= r && dx.abs() <= (dy + r) / 2.0,
            _ => d <= r && d >= 0.55 * r,
        }
    }
}

/// One generated frame.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub filename: String,
    pub caption: String,
    pub scene: Scene,
    pub pixels: image::GrayImage,
}

fn render(scene: Scene, rng: &mut ChaCha8Rng) -> image::GrayImage {
    let (w, h) = (WIDTH as usize, HEIGHT as usize);
    let left = rng.random_range(8..24);
    let right = rng.random_range(8..24);
    let top = rng.random_range(6..18);
    let bottom = rng.random_range(6..18);
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let (iw, ih) = ((x1 - x0) as f64, (y1 - y0) as f64);
    let r = iw.min(ih) * rng.random_range(0.14..0.2);
    let cx = x0 as f64 + iw * if scene.left { 0.27 } else { 0.73 } + rng.random_range(-4.0..4.0);
    let cy = y0 as f64 + ih * if scene.upper { 0.27 } else { 0.73 } + rng.random_range(-4.0..4.0);
    let brightness: u8 = rng.random_range(225..=255);
    let mut img = image::GrayImage::new(WIDTH, HEIGHT);
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let v = if scene.contains(dx, dy, r) {
                brightness
            } else {
                rng.random_range(50..=90)
            };
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img
}

/// Generates `n >= 2` images deterministically from `seed`.
pub fn generate_images(n: usize, seed: u64) -> anyhow::Result<Vec<SyntheticImage>> {
    anyhow::ensure!(n >= 2, "synthetic corpus needs at least 2 images, got {n}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes: Vec<Scene> = (0..16)
        .map(|k| Scene {
            shape: k % 4,
            upper: (k / 4) % 2 == 0,
            left: k / 8 == 0,
        })
        .collect();
    scenes.shuffle(&mut rng);
    let pixel_seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    Ok((0..n)
        .map(|i| {
            let scene = scenes[(i / 2) % scenes.len()];
            let mut img_rng = ChaCha8Rng::seed_from_u64(pixel_seeds[i]);
            SyntheticImage {
                filename: format!("synth_{i:03}.png"),
                caption: scene.caption(),
                scene,
                pixels: render(scene, &mut img_rng),
            }
        })
        .collect())
}

/// Writes `out/images/*.png` and `out/manifest.csv`.
pub fn generate_synthetic_corpus(n: usize, seed: u64, out: &Path) -> anyhow::Result<Vec<ManifestRow>> {
    let images = generate_images(n, seed)?;
    let image_dir = out.join(IMAGE_DIR);
    std::fs::create_dir_all(&image_dir)?;
    let mut rows = Vec::with_capacity(images.len());
    for img in images {
        img.pixels.save(image_dir.join(&img.filename))?;
        rows.push(ManifestRow {
            filename: img.filename,
            caption: img.caption,
        });
    }
    write_manifest(&out.join(MANIFEST_NAME), &rows)?;
    Ok(rows)
}

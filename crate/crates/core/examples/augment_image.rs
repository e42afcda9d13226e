//! Random affine plus blur on a drawn test image, saved as a sample grid.
//!
//! cargo run --example augment_image -- /tmp/augmented.png

use osda::plots::write_image_grid;
use osda::strategies::{augment_image, AugmentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> osda::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "augmented.png".into());
    let (c, h, w) = (3, 32, 32);
    // a red square with a green bar
    let mut img = vec![0.0; c * h * w];
    for y in 8..24 {
        for x in 8..24 {
            img[y * w + x] = 1.0;
        }
        img[h * w + y * w + 26] = 1.0;
    }
    let cfg = AugmentConfig {
        rotation_range: 30.0,
        blur_sigma: 0.8,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let augmented: Vec<Vec<f64>> = (0..8).map(|_| augment_image(&img, (c, h, w), &cfg, &mut rng)).collect();
    let pristine = vec![img; 1];
    write_image_grid(&[("pristine", &pristine), ("augmented", &augmented)], (c, h, w), 8, &out)?;
    println!("wrote {out}");
    Ok(())
}

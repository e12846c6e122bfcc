//! Small synthetic FashionMNIST-shaped data for fast protocol tests.

#![allow(dead_code)]

use std::path::Path;

use dhgf::bench::Fashion;
use dhgf::idx;
use dhgf_core::data::Dataset;
use dhgf_core::Rng;

/// Ten classes of 4x4 images: a class-specific bright pixel plus noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let mut features = Vec::with_capacity(n * 16);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 10;
        for p in 0..16 {
            let base = if p == c { 0.9 } else { 0.1 };
            features.push((base + 0.1 * rng.uniform()) as f32);
        }
        labels.push(c as u8);
    }
    Dataset::new("synthetic", features, labels, 16, 10).unwrap()
}

pub fn fashion() -> Fashion {
    Fashion {
        train: synthetic(400, 1),
        test: synthetic(200, 2),
    }
}

/// Writes the synthetic sets under the standard FashionMNIST file names.
pub fn write_dir(dir: &Path) {
    let f = fashion();
    idx::write_idx(
        &f.train,
        &dir.join(idx::TRAIN_IMAGES),
        &dir.join(idx::TRAIN_LABELS),
        [4, 4],
    )
    .unwrap();
    idx::write_idx(
        &f.test,
        &dir.join(idx::TEST_IMAGES),
        &dir.join(idx::TEST_LABELS),
        [4, 4],
    )
    .unwrap();
}

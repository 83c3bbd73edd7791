//! Planted-rule datasets with the structure of the published model: a
//! vertebra is positive when its anterior ratio is at most 0.91, or when it
//! is above that but its central reference ratio is at most 0.81.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::Result;
use crate::features::{RATIO_A0_P, REF_RATIO_C};
use crate::rules::{PUBLISHED_A0_P_THRESHOLD, PUBLISHED_REF_C_THRESHOLD};

pub const NOISE_FEATURES: [&str; 3] = ["noise_a", "noise_b", "noise_c"];

/// `noisy` carries the training labels; `clean` the planted truth.
#[derive(Debug, Clone)]
pub struct PlantedData {
    pub noisy: Dataset,
    pub clean: Dataset,
}

pub fn planted_label(ratio_a0_p: f64, ref_c: f64) -> bool {
    ratio_a0_p <= PUBLISHED_A0_P_THRESHOLD || ref_c <= PUBLISHED_REF_C_THRESHOLD
}

/// Two informative features, `ratio_P_A0 ~ U(0.7, 1.1)` and
/// `ref_C ~ U(0.6, 1.1)`, three uninformative `U(0.5, 1.5)` columns, and
/// each label flipped with probability `label_noise`.
pub fn planted_dataset(n: usize, label_noise: f64, seed: u64) -> Result<PlantedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> =
        [RATIO_A0_P, REF_RATIO_C].iter().chain(NOISE_FEATURES.iter()).map(|s| s.to_string()).collect();
    let mut cols = vec![Vec::with_capacity(n); names.len()];
    let mut clean = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.gen_range(0.7..1.1);
        let x2: f64 = rng.gen_range(0.6..1.1);
        cols[0].push(x1);
        cols[1].push(x2);
        for c in cols.iter_mut().skip(2) {
            c.push(rng.gen_range(0.5..1.5));
        }
        let y = planted_label(x1, x2);
        clean.push(y);
        noisy.push(if rng.gen::<f64>() < label_noise { !y } else { y });
    }
    Ok(PlantedData {
        noisy: Dataset::new(names.clone(), cols.clone(), noisy)?,
        clean: Dataset::new(names, cols, clean)?,
    })
}

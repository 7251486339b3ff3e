//! Uncompressed run-length codec for binary masks.
//!
//! Runs are row-major and alternate zeros/ones, starting with a (possibly
//! empty) run of zeros. The runs sum to `width * height`.

use thiserror::Error;

use super::Bitmask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("rle length mismatch: runs sum to {got}, mask has {expected} pixels")]
    LengthMismatch { expected: u64, got: u64 },
}

pub fn encode(mask: &Bitmask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for i in 0..mask.len() {
        let v = mask.get_index(i);
        if v != current {
            runs.push(run);
            run = 0;
            current = v;
        }
        run += 1;
    }
    runs.push(run);
    runs
}

pub fn decode(runs: &[u32], width: u32, height: u32) -> Result<Bitmask, RleError> {
    let expected = width as u64 * height as u64;
    let got: u64 = runs.iter().map(|&r| r as u64).sum();
    if got != expected {
        return Err(RleError::LengthMismatch { expected, got });
    }
    let mut mask = Bitmask::new(width, height);
    let mut pos = 0usize;
    for (i, &run) in runs.iter().enumerate() {
        if i % 2 == 1 {
            for p in pos..pos + run as usize {
                mask.set_index(p, true);
            }
        }
        pos += run as usize;
    }
    Ok(mask)
}

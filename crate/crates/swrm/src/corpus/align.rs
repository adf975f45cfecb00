//! Frame-to-token pseudo-alignment: map an unaligned feature sequence of n
//! frames onto the transcript's n_l token positions by mean-pooling
//! contiguous, non-overlapping frame groups.
//!
//! The base group size is ⌊n/n_l⌋ and the n mod n_l leftover frames are
//! appended to the final group so no frames are dropped. When there are
//! fewer frames than tokens, frames are first repeated by nearest-neighbor
//! upsampling, which makes the operation total.

/// Panics if `features` is empty, ragged, or `target_len` is zero; callers
/// go through dataset validation first.
pub fn pseudo_align(features: &[Vec<f64>], target_len: usize) -> Vec<Vec<f64>> {
    assert!(!features.is_empty(), "pseudo_align: no frames");
    assert!(target_len >= 1, "pseudo_align: zero target length");
    let dim = features[0].len();
    assert!(
        features.iter().all(|row| row.len() == dim),
        "pseudo_align: ragged feature matrix"
    );

    let n = features.len();
    let upsampled: Vec<&Vec<f64>> = if n < target_len {
        (0..target_len)
            .map(|t| &features[t * n / target_len])
            .collect()
    } else {
        features.iter().collect()
    };

    let n = upsampled.len();
    let base = n / target_len;
    let mut out = Vec::with_capacity(target_len);
    for group in 0..target_len {
        let start = group * base;
        let end = if group + 1 == target_len {
            n
        } else {
            start + base
        };
        let mut mean = vec![0.0; dim];
        for row in &upsampled[start..end] {
            for (acc, v) in mean.iter_mut().zip(row.iter()) {
                *acc += v;
            }
        }
        let count = (end - start) as f64;
        for acc in mean.iter_mut() {
            *acc /= count;
        }
        out.push(mean);
    }
    out
}

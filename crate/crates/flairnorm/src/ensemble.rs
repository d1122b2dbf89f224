//! Pixel-wise majority-vote fusion of binary lesion masks.

use thiserror::Error;

use crate::volume::{Mask, MaskKind};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("majority vote needs at least 2 masks, got {0}")]
    TooFewMasks(usize),
    #[error("mask {index} has dims {got:?}, expected {expected:?}")]
    DimsMismatch {
        index: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
}

/// Fuse predictions by strict per-voxel majority: a voxel is foreground
/// iff more than half the inputs mark it. With an even number of inputs
/// an exact tie resolves to background, favouring specificity.
pub fn majority_vote(masks: &[Mask]) -> Result<Mask, EnsembleError> {
    if masks.len() < 2 {
        return Err(EnsembleError::TooFewMasks(masks.len()));
    }
    let dims = masks[0].dims();
    for (index, m) in masks.iter().enumerate().skip(1) {
        if m.dims() != dims {
            return Err(EnsembleError::DimsMismatch {
                index,
                expected: dims,
                got: m.dims(),
            });
        }
    }
    let n = masks.len();
    let len = dims.0 * dims.1 * dims.2;
    let mut bits = vec![false; len];
    for (idx, out) in bits.iter_mut().enumerate() {
        let votes = masks.iter().filter(|m| m.bits()[idx]).count();
        *out = 2 * votes > n;
    }
    Ok(Mask::new(dims, MaskKind::Wml, bits).expect("dims validated above"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), p: f64) -> Mask {
        let n = dims.0 * dims.1 * dims.2;
        let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        Mask::new(dims, MaskKind::Wml, bits).unwrap()
    }

    #[test]
    fn identical_inputs_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let m = random_mask(&mut rng, (4, 4, 4), 0.4);
        let fused = majority_vote(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(fused.bits(), m.bits());
    }

    #[test]
    fn three_of_five_wins_two_loses() {
        let dims = (2, 1, 1);
        let on = Mask::new(dims, MaskKind::Wml, vec![true, true]).unwrap();
        let off = Mask::new(dims, MaskKind::Wml, vec![false, false]).unwrap();
        let mixed = Mask::new(dims, MaskKind::Wml, vec![true, false]).unwrap();
        // voxel 0: set in 3 of 5 -> 1; voxel 1: set in 2 of 5 -> 0
        let fused =
            majority_vote(&[on.clone(), on.clone(), mixed, off.clone(), off.clone()]).unwrap();
        assert_eq!(fused.bits(), &[true, false]);
    }

    #[test]
    fn even_tie_resolves_to_background() {
        let dims = (1, 1, 1);
        let on = Mask::new(dims, MaskKind::Wml, vec![true]).unwrap();
        let off = Mask::new(dims, MaskKind::Wml, vec![false]).unwrap();
        let fused = majority_vote(&[on, off]).unwrap();
        assert_eq!(fused.bits(), &[false]);
    }

    #[test]
    fn matches_counting_oracle_on_random_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..50 {
            let dims = (8, 8, 8);
            let stack: Vec<Mask> = (0..5).map(|_| random_mask(&mut rng, dims, 0.5)).collect();
            let fused = majority_vote(&stack).unwrap();
            for idx in 0..512 {
                let votes = stack.iter().filter(|m| m.bits()[idx]).count();
                assert_eq!(fused.bits()[idx], votes >= 3);
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let dims = (6, 6, 6);
        let stack: Vec<Mask> = (0..5).map(|_| random_mask(&mut rng, dims, 0.3)).collect();
        let fused = majority_vote(&stack).unwrap();
        let mut reordered = stack.clone();
        reordered.reverse();
        reordered.swap(0, 2);
        assert_eq!(majority_vote(&reordered).unwrap().bits(), fused.bits());
    }

    #[test]
    fn monotone_in_each_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let dims = (4, 4, 4);
        let stack: Vec<Mask> = (0..5).map(|_| random_mask(&mut rng, dims, 0.4)).collect();
        let fused = majority_vote(&stack).unwrap();
        // flip one 0 -> 1 in the first mask; no output voxel may flip 1 -> 0
        let mut bits = stack[0].bits().to_vec();
        let zero_at = bits.iter().position(|&b| !b).unwrap();
        bits[zero_at] = true;
        let mut grown = stack.clone();
        grown[0] = Mask::new(dims, MaskKind::Wml, bits).unwrap();
        let refused = majority_vote(&grown).unwrap();
        for idx in 0..64 {
            assert!(!fused.bits()[idx] || refused.bits()[idx]);
        }
    }

    #[test]
    fn too_few_masks_and_dims_mismatch() {
        let m = Mask::new((2, 2, 1), MaskKind::Wml, vec![false; 4]).unwrap();
        assert_eq!(
            majority_vote(std::slice::from_ref(&m)),
            Err(EnsembleError::TooFewMasks(1))
        );
        let other = Mask::new((2, 2, 2), MaskKind::Wml, vec![false; 8]).unwrap();
        assert!(matches!(
            majority_vote(&[m, other]),
            Err(EnsembleError::DimsMismatch { index: 1, .. })
        ));
    }
}

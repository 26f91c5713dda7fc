use super::types::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::RngState;

/// Stratified train/dev/test assignment.
///
/// Each class is shuffled independently and cut at `round(r_train · n_c)` and
/// `round(r_dev · n_c)`; the test split receives the remainder.
pub fn split(
    dataset: EmbeddingDataset,
    ratios: (f64, f64, f64),
    rng: &mut RngState,
) -> Result<EmbeddingDataset> {
    let (rt, rd, rs) = ratios;
    if [rt, rd, rs].iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(invalid_arg!("split ratios must be positive, got {ratios:?}"));
    }
    if (rt + rd + rs - 1.0).abs() > 1e-9 {
        return Err(invalid_arg!("split ratios sum to {}, not 1", rt + rd + rs));
    }
    let mut by_class = vec![Vec::new(); dataset.num_classes()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut tags = vec![SplitTag::Train; dataset.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n < 3 {
            return Err(CueError::Validation(format!(
                "class {class} has {n} samples, fewer than the 3 splits"
            )));
        }
        rng.shuffle(members);
        let n_train = ((rt * n as f64).round() as usize).min(n);
        let n_dev = ((rd * n as f64).round() as usize).min(n - n_train);
        for (pos, &i) in members.iter().enumerate() {
            tags[i] = if pos < n_train {
                SplitTag::Train
            } else if pos < n_train + n_dev {
                SplitTag::Dev
            } else {
                SplitTag::Test
            };
        }
    }
    dataset.with_splits(tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    fn balanced(n_per_class: usize, k: usize) -> EmbeddingDataset {
        let n = n_per_class * k;
        let x = DenseMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let y = (0..n).map(|i| i % k).collect();
        EmbeddingDataset::new(x, y, k, None, None).unwrap()
    }

    fn counts(ds: &EmbeddingDataset) -> [usize; 3] {
        [SplitTag::Train, SplitTag::Dev, SplitTag::Test].map(|t| ds.split_indices(t).len())
    }

    #[test]
    fn hundred_samples_split_eighty_ten_ten() {
        let ds = split(balanced(50, 2), (0.8, 0.1, 0.1), &mut RngState::new(0)).unwrap();
        assert_eq!(counts(&ds), [80, 10, 10]);
    }

    #[test]
    fn stratified_per_class() {
        let ds = split(balanced(30, 3), (0.5, 0.2, 0.3), &mut RngState::new(4)).unwrap();
        for c in 0..3 {
            let of = |t| {
                ds.split_indices(t)
                    .into_iter()
                    .filter(|&i| ds.label(i) == c)
                    .count() as f64
            };
            assert!((of(SplitTag::Train) - 15.0).abs() <= 1.0);
            assert!((of(SplitTag::Dev) - 6.0).abs() <= 1.0);
            assert!((of(SplitTag::Test) - 9.0).abs() <= 1.0);
        }
    }

    #[test]
    fn same_seed_same_split() {
        let a = split(balanced(20, 2), (0.6, 0.2, 0.2), &mut RngState::new(9)).unwrap();
        let b = split(balanced(20, 2), (0.6, 0.2, 0.2), &mut RngState::new(9)).unwrap();
        assert_eq!(a.splits(), b.splits());
    }

    #[test]
    fn tiny_class_is_rejected() {
        let x = DenseMatrix::zeros(5, 2);
        let ds = EmbeddingDataset::new(x, vec![0, 0, 0, 1, 1], 2, None, None).unwrap();
        let err = split(ds, (0.6, 0.2, 0.2), &mut RngState::new(0)).unwrap_err();
        assert_eq!(err.category(), "validation");
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert!(split(balanced(10, 2), (0.5, 0.5, 0.5), &mut RngState::new(0)).is_err());
        assert!(split(balanced(10, 2), (1.0, 0.0, 0.0), &mut RngState::new(0)).is_err());
    }
}

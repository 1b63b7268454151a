use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};

/// Disjoint train/test index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `round(n * train_fraction)` indices train.
pub fn shuffle_split(n: usize, seed: u64, train_fraction: f64) -> Result<DatasetSplit> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::config(format!(
            "train fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Rng::new(seed).substream(Stream::Split));
    let cut = ((n as f64) * train_fraction).round() as usize;
    let test = order.split_off(cut.min(n));
    Ok(DatasetSplit {
        train: order,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_rounding() {
        let s = shuffle_split(39, 1, 3.0 / 3.9).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (30, 9));
        assert!(shuffle_split(5, 1, 1.5).is_err());
    }

    #[test]
    fn seeded() {
        assert_eq!(
            shuffle_split(50, 3, 0.5).unwrap(),
            shuffle_split(50, 3, 0.5).unwrap()
        );
        assert_ne!(
            shuffle_split(50, 3, 0.5).unwrap(),
            shuffle_split(50, 4, 0.5).unwrap()
        );
    }
}

//! Seeded splits stratified on the private label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{input, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Private classes too small to appear in every split, kept in train.
    pub train_only_classes: Vec<usize>,
    /// Samples not assigned to any split.
    pub remainder: usize,
}

/// Splits `data` into `(train, val, test)` of exactly the requested sizes.
///
/// Within each private class the samples are shuffled and given evenly
/// spaced quantile positions; all samples are then ordered by quantile and
/// cut into consecutive segments, so every split receives a proportional
/// share of each class. Classes smaller than the number of non-empty splits
/// go to train only. Each split is finally shuffled.
pub fn split(data: &Dataset, sizes: (usize, usize, usize), seed: u64) -> Result<Splits> {
    let (a, b, c) = sizes;
    let n = data.len();
    if a + b + c > n {
        return Err(input(format!("split sizes {sizes:?} exceed the {n} available samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = [a, b, c].iter().filter(|&&s| s > 0).count();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_private];
    for (i, &z) in data.z.iter().enumerate() {
        by_class[z].push(i);
    }
    let mut forced = Vec::new();
    let mut train_only_classes = Vec::new();
    let mut ranked: Vec<(f64, u64, usize)> = Vec::with_capacity(n);
    for (cls, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        if members.is_empty() {
            continue;
        }
        if members.len() < parts {
            log::warn!(
                "private class {cls} has {} samples for {parts} splits; kept in train only",
                members.len()
            );
            train_only_classes.push(cls);
            forced.extend_from_slice(members);
            continue;
        }
        let k = members.len() as f64;
        for (j, &idx) in members.iter().enumerate() {
            ranked.push(((j as f64 + 0.5) / k, rng.random(), idx));
        }
    }
    if forced.len() > a {
        return Err(input(format!(
            "{} samples of under-populated classes do not fit a train split of {a}",
            forced.len()
        )));
    }
    ranked.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    let pool: Vec<usize> = ranked.into_iter().map(|r| r.2).collect();

    let mut train_idx = forced;
    let take_train = a - train_idx.len();
    train_idx.extend_from_slice(&pool[..take_train]);
    let mut val_idx = pool[take_train..take_train + b].to_vec();
    let mut test_idx = pool[take_train + b..take_train + b + c].to_vec();
    for v in [&mut train_idx, &mut val_idx, &mut test_idx] {
        v.shuffle(&mut rng);
    }
    Ok(Splits {
        train: data.subset(&train_idx),
        val: data.subset(&val_idx),
        test: data.subset(&test_idx),
        train_only_classes,
        remainder: n - a - b - c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn toy(n: usize, classes: usize) -> Dataset {
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let z: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % classes).collect();
        Dataset::new(x, vec![0; n], z, 1, classes).unwrap()
    }

    fn ids(d: &Dataset) -> Vec<usize> {
        d.x.as_slice().iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn disjoint_exact_and_stratified() {
        let d = toy(7494, 30);
        let s = split(&d, (5494, 1000, 1000), 11).unwrap();
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len(), s.remainder),
            (5494, 1000, 1000, 0)
        );
        let mut all: Vec<usize> = [ids(&s.train), ids(&s.val), ids(&s.test)].concat();
        all.sort_unstable();
        assert_eq!(all, (0..7494).collect::<Vec<_>>());
        for part in [&s.train, &s.val, &s.test] {
            assert!(part.p_hat_z().unwrap().probs.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn seeded() {
        let d = toy(200, 5);
        assert_eq!(
            split(&d, (100, 50, 30), 3).unwrap(),
            split(&d, (100, 50, 30), 3).unwrap()
        );
        assert_ne!(
            split(&d, (100, 50, 30), 3).unwrap(),
            split(&d, (100, 50, 30), 4).unwrap()
        );
    }

    #[test]
    fn tiny_class_stays_in_train() {
        let mut d = toy(60, 3);
        d.z[0] = 3;
        d.z[1] = 3;
        d.n_private = 4;
        let s = split(&d, (40, 10, 10), 0).unwrap();
        assert_eq!(s.train_only_classes, vec![3]);
        assert_eq!(s.train.z.iter().filter(|&&z| z == 3).count(), 2);
        assert_eq!(s.train.len(), 40);
    }

    #[test]
    fn oversized_request() {
        assert!(split(&toy(10, 2), (5, 5, 1), 0).is_err());
    }
}

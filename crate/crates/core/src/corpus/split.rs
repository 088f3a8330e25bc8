use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::document::Document;
use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios(r));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Floor each share of `n`, then hand the leftover items one at a time to the
/// shares with the largest fractional parts (earlier shares win ties).
pub fn split_sizes(n: usize, ratios: SplitRatios) -> Result<[usize; 3]> {
    ratios.validate()?;
    let quotas = ratios.as_array().map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffle with `seed` and cut into train/val/test by [`split_sizes`].
pub fn split<T: Clone>(corpus: &[T], ratios: SplitRatios, seed: u64) -> Result<Split<T>> {
    if corpus.len() < 3 {
        return Err(CorpusError::TooSmall(corpus.len()));
    }
    let [n_train, n_val, _] = split_sizes(corpus.len(), ratios)?;
    let idx = shuffled_indices(corpus.len(), seed);
    let pick = |r: &[usize]| r.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&idx[..n_train]),
        val: pick(&idx[n_train..n_train + n_val]),
        test: pick(&idx[n_train + n_val..]),
    })
}

/// Split every subject cluster separately and concatenate the parts, so each
/// cluster keeps the requested ratios. Unlabeled documents form their own
/// cluster. Clusters are visited in label order.
pub fn stratified_split(corpus: &[Document], ratios: SplitRatios, seed: u64) -> Result<Split<Document>> {
    ratios.validate()?;
    let mut clusters: BTreeMap<Option<&str>, Vec<Document>> = BTreeMap::new();
    for d in corpus {
        clusters.entry(d.subject.as_deref()).or_default().push(d.clone());
    }
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (k, docs) in clusters.into_values().enumerate() {
        let [n_train, n_val, _] = split_sizes(docs.len(), ratios)?;
        let idx = shuffled_indices(docs.len(), seed.wrapping_add(k as u64));
        for (pos, &i) in idx.iter().enumerate() {
            let bucket = if pos < n_train {
                &mut out.train
            } else if pos < n_train + n_val {
                &mut out.val
            } else {
                &mut out.test
            };
            bucket.push(docs[i].clone());
        }
    }
    Ok(out)
}

/// `k` near-equal folds; pair `i` is (every fold but `i`, fold `i`).
pub fn kfold_partitions<T: Clone>(corpus: &[T], k: usize, seed: u64) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    let n = corpus.len();
    if k < 2 || k > n {
        return Err(CorpusError::BadFolds { k, n });
    }
    let idx = shuffled_indices(n, seed);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        bounds.push(bounds[f] + size);
    }
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let test = idx[lo..hi].iter().map(|&i| corpus[i].clone()).collect();
            let train = idx[..lo]
                .iter()
                .chain(&idx[hi..])
                .map(|&i| corpus[i].clone())
                .collect();
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ten_documents_split_eight_one_one() {
        let c: Vec<usize> = (0..10).collect();
        let s = split(&c, SplitRatios::default(), 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn remainder_goes_to_largest_fraction() {
        assert_eq!(split_sizes(10142, SplitRatios::default()).unwrap(), [8114, 1014, 1014]);
        assert_eq!(split_sizes(11, SplitRatios::default()).unwrap(), [9, 1, 1]);
        assert_eq!(split_sizes(19, SplitRatios::default()).unwrap(), [15, 2, 2]);
    }

    #[test]
    fn same_seed_same_partition() {
        let c: Vec<usize> = (0..100).collect();
        assert_eq!(
            split(&c, SplitRatios::default(), 3).unwrap(),
            split(&c, SplitRatios::default(), 3).unwrap()
        );
        assert_ne!(
            split(&c, SplitRatios::default(), 3).unwrap().train,
            split(&c, SplitRatios::default(), 4).unwrap().train
        );
    }

    #[test]
    fn split_is_a_partition() {
        let c: Vec<usize> = (0..57).collect();
        let s = split(&c, SplitRatios::default(), 11).unwrap();
        let all: HashSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        assert_eq!(all.len(), 57);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 57);
    }

    #[test]
    fn bad_inputs() {
        let c: Vec<usize> = (0..2).collect();
        assert!(matches!(split(&c, SplitRatios::default(), 0), Err(CorpusError::TooSmall(2))));
        let bad = SplitRatios { train: 0.7, val: 0.1, test: 0.1 };
        assert!(matches!(split_sizes(10, bad), Err(CorpusError::BadRatios(_))));
        assert!(kfold_partitions(&c, 3, 0).is_err());
        assert!(kfold_partitions(&c, 1, 0).is_err());
    }

    #[test]
    fn five_folds_of_ten() {
        let c: Vec<usize> = (0..10).collect();
        let folds = kfold_partitions(&c, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = HashSet::new();
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            for t in test {
                assert!(seen.insert(*t), "test folds overlap");
                assert!(!train.contains(t));
            }
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let c: Vec<usize> = (0..10142).collect();
        let sizes: Vec<usize> = kfold_partitions(&c, 5, 9).unwrap().iter().map(|(_, t)| t.len()).collect();
        assert_eq!(sizes, [2029, 2029, 2028, 2028, 2028]);
    }

    #[test]
    fn stratified_split_keeps_every_cluster_represented() {
        let docs: Vec<Document> = (0..40)
            .map(|i| Document {
                id: format!("d{i}"),
                abstract_text: "a".into(),
                introduction: None,
                conclusion: None,
                highlights: "h".into(),
                subject: Some(["x", "y", "z", "w"][i % 4].into()),
            })
            .collect();
        let s = stratified_split(&docs, SplitRatios::default(), 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (32, 4, 4));
        let test_subjects: HashSet<_> = s.test.iter().map(|d| d.subject.clone()).collect();
        assert_eq!(test_subjects.len(), 4);
    }
}

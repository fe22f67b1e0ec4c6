use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, LabelField, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by: Option<LabelField>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 0,
            stratify_by: None,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction,
            seed,
            stratify_by: None,
        }
    }

    pub fn stratified(mut self, field: LabelField) -> Self {
        self.stratify_by = Some(field);
        self
    }

    /// `floor(fraction * n)`. The epsilon absorbs products such as
    /// `0.7 * 90 = 62.999…` that land one ulp under an integer.
    pub fn train_size(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 1e-9).floor() as usize
    }
}

/// Record positions on each side of a split, both sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn compute(ds: &Dataset, spec: &SplitSpec) -> Result<Partition> {
        if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
            return Err(CorpusError::BadFraction(spec.train_fraction));
        }
        let n = ds.len();
        if n == 0 {
            return Err(CorpusError::EmptyDataset);
        }
        let n_train = spec.train_size(n);
        if n_train == 0 || n_train == n {
            return Err(CorpusError::DegenerateSplit {
                train: n_train,
                test: n - n_train,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut train = match spec.stratify_by {
            None => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                order.truncate(n_train);
                order
            }
            Some(field) => stratified_train(ds, field, n_train, &mut rng),
        };
        train.sort_unstable();
        let mut in_train = vec![false; n];
        for &i in &train {
            in_train[i] = true;
        }
        let test = (0..n).filter(|&i| !in_train[i]).collect();
        Ok(Partition { train, test })
    }

    pub fn apply(&self, ds: &Dataset) -> (Dataset, Dataset) {
        (ds.subset(&self.train), ds.subset(&self.test))
    }
}

/// Per-class quotas by largest remainder so the total is exactly `n_train`
/// and each class is within one record of its proportional share.
fn stratified_train(ds: &Dataset, field: LabelField, n_train: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes(field)];
    for i in 0..ds.len() {
        members[ds.label_id(i, field)].push(i);
    }
    let n = ds.len() as f64;
    let exact: Vec<f64> = members
        .iter()
        .map(|m| n_train as f64 * m.len() as f64 / n)
        .collect();
    let mut quota: Vec<usize> = exact
        .iter()
        .zip(&members)
        .map(|(e, m)| ((e + 1e-9).floor() as usize).min(m.len()))
        .collect();
    let mut remaining = n_train - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - quota[a] as f64;
        let fb = exact[b] - quota[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quota[c] < members[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    for (m, q) in members.iter_mut().zip(quota) {
        m.shuffle(rng);
        train.extend_from_slice(&m[..q]);
    }
    train
}

/// Seeded train/test split; `|train| = floor(train_fraction * N)`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    Ok(Partition::compute(ds, spec)?.apply(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AspectLabel, Comment, Label, LanguageTag, Manifest, PolarityLabel};
    use proptest::prelude::*;

    fn dataset(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| Comment {
                text: format!("comment {i}"),
                aspect: AspectLabel::ALL[i % 4],
                polarity: PolarityLabel::ALL[i % 3],
                language: LanguageTag::Hausa,
            })
            .collect();
        Dataset::new(records, Manifest::default())
    }

    #[test]
    fn seventy_percent_of_590() {
        let p = Partition::compute(&dataset(590), &SplitSpec::new(0.7, 1)).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (413, 177));
    }

    #[test]
    fn floor_survives_rounding_noise() {
        // 0.7 * 90 evaluates to 62.99999999999999 in f64
        assert_eq!(SplitSpec::new(0.7, 0).train_size(90), 63);
        assert_eq!(SplitSpec::new(0.7, 0).train_size(10), 7);
        assert_eq!(SplitSpec::new(0.7, 0).train_size(3), 2);
    }

    #[test]
    fn same_seed_same_partition() {
        let ds = dataset(10);
        let a = Partition::compute(&ds, &SplitSpec::new(0.7, 42)).unwrap();
        let b = Partition::compute(&ds, &SplitSpec::new(0.7, 42)).unwrap();
        assert_eq!(a, b);
        let c = Partition::compute(&ds, &SplitSpec::new(0.7, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_splits_rejected() {
        assert!(matches!(
            Partition::compute(&dataset(1), &SplitSpec::new(0.7, 0)),
            Err(CorpusError::DegenerateSplit { train: 0, test: 1 })
        ));
        assert!(matches!(
            Partition::compute(&dataset(5), &SplitSpec::new(0.1, 0)),
            Err(CorpusError::DegenerateSplit { .. })
        ));
        assert!(matches!(
            Partition::compute(&dataset(10), &SplitSpec::new(1.0, 0)),
            Err(CorpusError::BadFraction(_))
        ));
    }

    #[test]
    fn stratified_forty_sixty() {
        let records = (0..100)
            .map(|i| Comment {
                text: format!("c{i}"),
                aspect: if i % 5 < 2 { AspectLabel::Person } else { AspectLabel::Movie },
                polarity: PolarityLabel::Neutral,
                language: LanguageTag::Hausa,
            })
            .collect();
        let ds = Dataset::new(records, Manifest::default());
        let spec = SplitSpec::new(0.7, 5).stratified(LabelField::Aspect);
        let (train, test) = split(&ds, &spec).unwrap();
        // brute-force count over the generated partition
        let person = train.records.iter().filter(|c| c.aspect == AspectLabel::Person).count();
        let movie = train.records.iter().filter(|c| c.aspect == AspectLabel::Movie).count();
        assert_eq!((person, movie), (28, 42));
        assert_eq!(test.len(), 30);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..300, seed in any::<u64>(), frac in 0.05f64..0.95, strat in any::<bool>()) {
            let ds = dataset(n);
            let mut spec = SplitSpec::new(frac, seed);
            if strat {
                spec = spec.stratified(LabelField::Polarity);
            }
            let n_train = spec.train_size(n);
            prop_assume!(n_train > 0 && n_train < n);
            let p = Partition::compute(&ds, &spec).unwrap();
            prop_assert_eq!(p.train.len(), n_train);
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if strat {
                for class in 0..3 {
                    let total = (0..n).filter(|&i| ds.label_id(i, LabelField::Polarity) == class).count();
                    let got = p.train.iter().filter(|&&i| ds.label_id(i, LabelField::Polarity) == class).count();
                    let share = n_train as f64 * total as f64 / n as f64;
                    prop_assert!((got as f64 - share).abs() < 1.0 + 1e-9);
                }
            }
        }
    }
}

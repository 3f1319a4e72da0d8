use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, DatasetSplit, NliPair, SplitName};
use crate::error::{Error, Result};

/// Assigns whole premise groups to train/dev/test so that no premise string
/// appears in two splits. Group counts are `round(n * ratio)` for train and
/// dev; test takes the rest.
pub fn split_by_premise(pairs: &[NliPair], ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut keys: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<&NliPair>> = HashMap::new();
    for p in pairs {
        let key = p.premise_text();
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            keys.push(key);
        }
        entry.push(p);
    }
    let n = keys.len();
    if n < SplitName::ALL.len() {
        return Err(Error::invalid(format!("{n} distinct premises cannot fill three splits")));
    }
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_dev = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let bounds = [0, n_train, n_train + n_dev, n];

    let mut splits = SplitName::ALL.iter().enumerate().map(|(i, &name)| {
        let pairs = keys[bounds[i]..bounds[i + 1]].iter().flat_map(|k| groups[k].iter().map(|&p| p.clone())).collect();
        DatasetSplit::new(name, pairs)
    });
    Ok(Dataset {
        train: splits.next().expect("train"),
        dev: splits.next().expect("dev"),
        test: splits.next().expect("test"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Label;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn pairs(premises: usize, per: usize) -> Vec<NliPair> {
        (0..premises)
            .flat_map(|i| {
                (0..per).map(move |j| {
                    NliPair::new(format!("{i}-{j}"), vec![format!("p{i}")], vec![format!("h{j}")], Label::Neutral).unwrap()
                })
            })
            .collect()
    }

    fn groups(s: &DatasetSplit) -> HashSet<String> {
        s.pairs.iter().map(|p| p.premise_text()).collect()
    }

    #[test]
    fn ten_groups_eight_one_one() {
        let d = split_by_premise(&pairs(10, 3), [0.8, 0.1, 0.1], 0).unwrap();
        assert_eq!((groups(&d.train).len(), groups(&d.dev).len(), groups(&d.test).len()), (8, 1, 1));
        assert_eq!(d.train.len(), 24);
    }

    #[test]
    fn deterministic() {
        let p = pairs(30, 2);
        assert_eq!(split_by_premise(&p, [0.6, 0.2, 0.2], 4).unwrap(), split_by_premise(&p, [0.6, 0.2, 0.2], 4).unwrap());
    }

    #[test]
    fn errors() {
        assert!(split_by_premise(&pairs(2, 3), [0.8, 0.1, 0.1], 0).is_err());
        assert!(split_by_premise(&pairs(5, 1), [0.8, 0.1, 0.2], 0).is_err());
    }

    proptest! {
        #[test]
        fn premise_sets_disjoint(ids in proptest::collection::vec(0usize..25, 3..80), seed in any::<u64>()) {
            let ps: Vec<NliPair> = ids.iter().enumerate().map(|(k, &i)| {
                NliPair::new(format!("{k}"), vec![format!("p{i}")], vec!["h".into()], Label::Entailment).unwrap()
            }).collect();
            let distinct: HashSet<usize> = ids.iter().copied().collect();
            prop_assume!(distinct.len() >= 3);
            let d = split_by_premise(&ps, [0.7, 0.15, 0.15], seed).unwrap();
            let (a, b, c) = (groups(&d.train), groups(&d.dev), groups(&d.test));
            prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
            prop_assert_eq!(d.train.len() + d.dev.len() + d.test.len(), ps.len());
        }
    }
}

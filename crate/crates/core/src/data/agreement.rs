use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Cohen's kappa between two raters. Works on any label type; the
/// chance-agreement term uses the product of the two raters' marginals.
///
/// Computed from integer counts, so the result is exactly symmetric and
/// invariant under renaming categories.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("label sequences differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("kappa of empty label sequences"));
    }
    let mut marg: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    let mut agree = 0u128;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        agree += u128::from(x == y);
    }
    let n = a.len() as u128;
    let chance: u128 = marg.values().map(|&(ca, cb)| ca * cb).sum();
    kappa_from_counts(agree, chance, n)
}

/// Kappa from a square confusion matrix of counts (rows: rater A).
pub fn kappa_from_confusion(matrix: &[Vec<u64>]) -> Result<f64> {
    let k = matrix.len();
    if matrix.iter().any(|r| r.len() != k) {
        return Err(Error::invalid("confusion matrix must be square"));
    }
    let n: u128 = matrix.iter().flatten().map(|&c| u128::from(c)).sum();
    if n == 0 {
        return Err(Error::invalid("kappa of an empty confusion matrix"));
    }
    let agree: u128 = (0..k).map(|i| u128::from(matrix[i][i])).sum();
    let chance: u128 = (0..k)
        .map(|i| {
            let row: u128 = matrix[i].iter().map(|&c| u128::from(c)).sum();
            let col: u128 = matrix.iter().map(|r| u128::from(r[i])).sum();
            row * col
        })
        .sum();
    kappa_from_counts(agree, chance, n)
}

// p_o = agree / n, p_e = chance / n^2
fn kappa_from_counts(agree: u128, chance: u128, n: u128) -> Result<f64> {
    let nn = n * n;
    if chance == nn {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(Error::invalid("kappa undefined: expected agreement is 1 but observed agreement is not"))
        };
    }
    let num = (agree * n) as f64 - chance as f64;
    Ok(num / (nn - chance) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_one() {
        assert_eq!(cohens_kappa(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&["x", "x"], &["x", "x"]).unwrap(), 1.0);
    }

    #[test]
    fn confusion_example() {
        let m = vec![vec![20, 5, 0], vec![10, 15, 5], vec![0, 5, 40]];
        // p_o = 0.75, p_e = (25*30 + 30*25 + 45*45) / 100^2
        let p_o = 0.75;
        let p_e = (25.0 * 30.0 + 30.0 * 25.0 + 45.0 * 45.0) / 10000.0;
        let oracle = (p_o - p_e) / (1.0 - p_e);
        let k = kappa_from_confusion(&m).unwrap();
        assert!((k - oracle).abs() < 1e-12);
        assert!((k - 0.6139).abs() < 1e-4);

        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    a.push(i);
                    b.push(j);
                }
            }
        }
        assert!((cohens_kappa(&a, &b).unwrap() - k).abs() < 1e-15);
    }

    #[test]
    fn random_labels_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
        assert!(cohens_kappa(&a, &b).unwrap().abs() < 0.05);
    }

    #[test]
    fn errors() {
        assert!(cohens_kappa::<u8>(&[], &[]).is_err());
        assert!(cohens_kappa(&[1], &[1, 2]).is_err());
        // every label the same for both raters: p_e = 1, p_o = 1
        assert_eq!(cohens_kappa(&[2, 2], &[2, 2]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_relabel_invariant(pairs in proptest::collection::vec((0u8..3, 0u8..3), 1..60), perm in Just([2u8, 0, 1])) {
            let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let k_ab = cohens_kappa(&a, &b);
            let k_ba = cohens_kappa(&b, &a);
            match (&k_ab, &k_ba) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric definedness"),
            }
            let pa: Vec<u8> = a.iter().map(|&x| perm[x as usize]).collect();
            let pb: Vec<u8> = b.iter().map(|&x| perm[x as usize]).collect();
            if let Ok(k) = k_ab {
                prop_assert_eq!(cohens_kappa(&pa, &pb).unwrap(), k);
                prop_assert_eq!(k == 1.0, a == b);
            }
        }
    }
}

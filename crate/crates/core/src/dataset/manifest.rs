use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random subset holding `fraction` of the ids, kept in input order.
pub fn low_resource_manifest(ids: &[String], fraction: f64, seed: u64) -> Vec<String> {
    let keep = ((ids.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| ids[i].clone()).collect()
}

/// Splits ids into `k` disjoint folds of near-equal size.
pub fn fold_manifest(ids: &[String], k: usize, seed: u64) -> Vec<Vec<String>> {
    assert!(k > 0, "need at least one fold");
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (n, i) in order.into_iter().enumerate() {
        folds[n % k].push(i);
    }
    folds
        .into_iter()
        .map(|mut f| {
            f.sort_unstable();
            f.into_iter().map(|i| ids[i].clone()).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn subsample_is_seeded_and_sized() {
        let a = low_resource_manifest(&ids(100), 0.1, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, low_resource_manifest(&ids(100), 0.1, 3));
        assert_ne!(a, low_resource_manifest(&ids(100), 0.1, 4));
    }

    #[test]
    fn folds_partition_ids() {
        let folds = fold_manifest(&ids(23), 5, 1);
        assert_eq!(folds.len(), 5);
        let mut all: Vec<String> = folds.iter().flatten().cloned().collect();
        all.sort();
        let mut want = ids(23);
        want.sort();
        assert_eq!(all, want);
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
    }
}

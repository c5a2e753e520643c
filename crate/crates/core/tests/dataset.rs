mod common;

use common::{stratification_violations, synthetic_catalog};
use composer_id::dataset::{
    batch_indices, read_manifest, read_split, segment, stratified_split, write_manifest, write_split, Subset,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn composers_with_seven_or_more_pieces_are_fully_stratified() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let counts: Vec<usize> = (0..60).map(|_| rng.gen_range(7..=40)).collect();
    let catalog = synthetic_catalog(&counts);
    for seed in 0..5 {
        let split = stratified_split(&catalog, seed);
        let (missing, fractions, unassigned) = stratification_violations(&catalog, &split);
        assert!(missing.is_empty(), "{missing:?}");
        assert!(fractions.is_empty(), "{fractions:?}");
        assert!(unassigned.is_empty(), "{unassigned:?}");
    }
}

#[test]
fn small_composers_still_reach_every_subset() {
    let catalog = synthetic_catalog(&[3, 4, 5, 6]);
    let split = stratified_split(&catalog, 9);
    let (missing, fractions, _) = stratification_violations(&catalog, &split);
    assert!(missing.is_empty());
    // 1/3, 2/4, 3/5, 4/6: every composer in all three subsets leaves too few for training
    let shares: Vec<f64> = fractions.iter().map(|f| f.1).collect();
    assert_eq!(shares, vec![4.0 / 6.0, 3.0 / 5.0, 2.0 / 4.0, 1.0 / 3.0]);
}

#[test]
fn split_ignores_catalog_order() {
    let catalog = synthetic_catalog(&[12, 9, 30]);
    let mut reversed: Vec<_> = catalog.pieces().to_vec();
    reversed.reverse();
    let other = composer_id::dataset::Catalog::new(reversed).unwrap();
    let a = stratified_split(&catalog, 3);
    let b = stratified_split(&other, 3);
    for p in catalog.pieces() {
        assert_eq!(a.get(&p.source_id), b.get(&p.source_id));
    }
}

#[test]
fn adding_a_composer_leaves_others_unchanged() {
    let a = stratified_split(&synthetic_catalog(&[12, 9]), 4);
    let b = stratified_split(&synthetic_catalog(&[12, 9, 20]), 4);
    for (id, s) in a.entries() {
        assert_eq!(b.get(id), Some(*s));
    }
}

#[test]
fn manifest_and_split_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = synthetic_catalog(&[5, 11, 2]);
    let manifest = dir.path().join("manifest.tsv");
    write_manifest(&manifest, &catalog).unwrap();
    assert_eq!(read_manifest(&manifest).unwrap(), catalog);
    let split = stratified_split(&catalog, 0);
    let path = dir.path().join("split.tsv");
    write_split(&path, &split).unwrap();
    assert_eq!(read_split(&path).unwrap(), split);
    assert_eq!(split.ids(Subset::Test).count() + split.ids(Subset::Validation).count() + split.ids(Subset::Train).count(), 18);

    std::fs::write(&path, "a\ttrain\nb\tholdout\n").unwrap();
    assert!(read_split(&path).is_err());
    std::fs::write(&path, "a\ttrain\na\ttest\n").unwrap();
    assert!(read_split(&path).is_err());
    std::fs::write(&manifest, "x\tC\tlong\n").unwrap();
    assert!(read_manifest(&manifest).is_err());
}

#[test]
fn labels_rank_composers_by_piece_count() {
    let catalog = synthetic_catalog(&[3, 10, 10, 7]);
    let names: Vec<&str> = catalog.composers().iter().map(String::as_str).collect();
    assert_eq!(names, ["Composer 001", "Composer 002", "Composer 003", "Composer 000"]);
    let top = catalog.select_top_k(2).unwrap();
    assert_eq!(top.pieces().len(), 20);
    assert_eq!(top.label("Composer 002"), Some(1));
    assert!(catalog.select_top_k(5).is_err());
}

proptest! {
    #[test]
    fn segments_tile_without_overlap(duration in 0.0f64..400.0) {
        let starts = segment(duration, 30.0);
        for w in starts.windows(2) {
            prop_assert!((w[1] - w[0] - 30.0).abs() < 1e-9);
        }
        if let Some(&last) = starts.last() {
            prop_assert!(last < duration);
            // uncovered remainder is below the tail threshold
            prop_assert!(duration - (last + 30.0) < 15.0);
        } else {
            prop_assert!(duration < 5.0);
        }
        prop_assert_eq!(starts.len() as u64, {
            let full = (duration / 30.0).floor();
            let tail = duration - full * 30.0;
            if full == 0.0 { (duration >= 5.0) as u64 } else { full as u64 + (tail >= 15.0) as u64 }
        });
    }

    #[test]
    fn batches_partition_the_indices(len in 0usize..200, bs in 1usize..40, seed in any::<u64>(), epoch in 0u64..50) {
        let batches = batch_indices(len, bs, seed, epoch);
        let mut all: Vec<usize> = batches.concat();
        prop_assert!(batches.iter().all(|b| b.len() <= bs && !b.is_empty()));
        prop_assert!(batches.iter().rev().skip(1).all(|b| b.len() == bs));
        all.sort_unstable();
        prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
    }
}

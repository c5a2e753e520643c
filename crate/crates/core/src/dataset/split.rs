use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::catalog::Catalog;
use super::fnv1a;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Train => "train",
            Subset::Validation => "validation",
            Subset::Test => "test",
        })
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "validation" => Ok(Subset::Validation),
            "test" => Ok(Subset::Test),
            other => Err(Error::Data(format!("unknown subset {other:?}"))),
        }
    }
}

/// Piece-level subset membership, in catalog order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitAssignment {
    entries: Vec<(String, Subset)>,
    index: BTreeMap<String, usize>,
}

impl SplitAssignment {
    pub fn from_entries(entries: Vec<(String, Subset)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, (id, _)) in entries.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Data(format!("source_id {id:?} assigned twice")));
            }
        }
        Ok(SplitAssignment { entries, index })
    }

    pub fn get(&self, source_id: &str) -> Option<Subset> {
        self.index.get(source_id).map(|&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, Subset)] {
        &self.entries
    }

    pub fn ids(&self, subset: Subset) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |(_, s)| *s == subset).map(|(id, _)| id.as_str())
    }
}

/// Largest-remainder apportionment of `n` over 8:1:1, with at least one
/// validation and one test piece once `n >= 3`.
pub(crate) fn split_counts(n: usize) -> [usize; 3] {
    let shares = [0.8, 0.1, 0.1];
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: [usize; 3] = [raw[0].floor() as usize, raw[1].floor() as usize, raw[2].floor() as usize];
    let mut order = [0usize, 1, 2];
    // stable sort keeps train, validation, test priority on equal remainders
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    if n >= 3 {
        for i in 1..3 {
            if counts[i] == 0 {
                counts[i] = 1;
                counts[0] -= 1;
            }
        }
    }
    counts
}

/// Per composer: sort pieces by id, shuffle with a generator seeded from
/// `(seed, composer)`, then deal train/validation/test by [`split_counts`].
pub fn stratified_split(catalog: &Catalog, seed: u64) -> SplitAssignment {
    let mut subset_of: BTreeMap<&str, Subset> = BTreeMap::new();
    for composer in catalog.composers() {
        let mut ids: Vec<&str> = catalog
            .pieces()
            .iter()
            .filter(|p| &p.composer == composer)
            .map(|p| p.source_id.as_str())
            .collect();
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ fnv1a(composer.as_bytes()));
        ids.shuffle(&mut rng);
        let [train, val, _] = split_counts(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let subset = if i < train {
                Subset::Train
            } else if i < train + val {
                Subset::Validation
            } else {
                Subset::Test
            };
            subset_of.insert(id, subset);
        }
    }
    let entries = catalog
        .pieces()
        .iter()
        .map(|p| (p.source_id.clone(), subset_of[p.source_id.as_str()]))
        .collect();
    SplitAssignment::from_entries(entries).expect("catalog ids are unique")
}

/// `source_id<TAB>{train|validation|test}` lines.
pub fn write_split(path: &Path, split: &SplitAssignment) -> Result<()> {
    let mut out = String::new();
    for (id, s) in split.entries() {
        writeln!(out, "{id}\t{s}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, subset) = line
            .split_once('\t')
            .ok_or_else(|| Error::Data(format!("{}:{}: expected source_id<TAB>subset", path.display(), i + 1)))?;
        entries.push((id.to_string(), subset.parse()?));
    }
    SplitAssignment::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CatalogEntry;

    fn catalog(counts: &[(&str, usize)]) -> Catalog {
        let mut pieces = Vec::new();
        for &(c, n) in counts {
            for i in 0..n {
                pieces.push(CatalogEntry {
                    source_id: format!("{c}-{i:03}"),
                    composer: c.to_string(),
                    duration: 60.0,
                });
            }
        }
        Catalog::new(pieces).unwrap()
    }

    #[test]
    fn counts_follow_eight_one_one() {
        assert_eq!(split_counts(10), [8, 1, 1]);
        assert_eq!(split_counts(3), [1, 1, 1]);
        assert_eq!(split_counts(20), [16, 2, 2]);
        assert_eq!(split_counts(1), [1, 0, 0]);
        assert_eq!(split_counts(2), [2, 0, 0]);
        for n in 0..200 {
            assert_eq!(split_counts(n).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let cat = catalog(&[("A", 30), ("B", 12), ("C", 3)]);
        let a = stratified_split(&cat, 1);
        assert_eq!(a, stratified_split(&cat, 1));
        assert_ne!(a, stratified_split(&cat, 2));
        for (composer, n) in [("A", 30), ("B", 12), ("C", 3)] {
            let ids: Vec<_> = cat.pieces().iter().filter(|p| p.composer == composer).collect();
            let train = ids.iter().filter(|p| a.get(&p.source_id) == Some(Subset::Train)).count();
            assert_eq!(train, split_counts(n)[0]);
        }
    }

    #[test]
    fn split_file_round_trip() {
        let cat = catalog(&[("A", 5)]);
        let split = stratified_split(&cat, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        write_split(&path, &split).unwrap();
        assert_eq!(read_split(&path).unwrap(), split);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.ends_with("\ttrain") || l.ends_with("\tvalidation") || l.ends_with("\ttest")));
    }
}

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub source_id: String,
    pub composer: String,
    pub duration: f64,
}

/// Pieces plus a composer → label mapping ordered by descending piece count
/// (ties lexicographic).
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    pieces: Vec<CatalogEntry>,
    composers: Vec<String>,
}

impl Catalog {
    pub fn new(pieces: Vec<CatalogEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pieces {
            if !seen.insert(p.source_id.as_str()) {
                return Err(Error::Data(format!("duplicate source_id {:?}", p.source_id)));
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &pieces {
            *counts.entry(&p.composer).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let composers = ranked.into_iter().map(|(c, _)| c.to_string()).collect();
        Ok(Catalog { pieces, composers })
    }

    pub fn pieces(&self) -> &[CatalogEntry] {
        &self.pieces
    }

    /// Composer names in label order.
    pub fn composers(&self) -> &[String] {
        &self.composers
    }

    pub fn label(&self, composer: &str) -> Option<usize> {
        self.composers.iter().position(|c| c == composer)
    }

    pub fn piece_count(&self, composer: &str) -> usize {
        self.pieces.iter().filter(|p| p.composer == composer).count()
    }

    /// Keeps the `k` composers with the most pieces and relabels them 0..k.
    pub fn select_top_k(&self, k: usize) -> Result<Catalog> {
        if k > self.composers.len() {
            return Err(Error::InvalidArgument(format!(
                "requested top {k} composers but the catalog has {}",
                self.composers.len()
            )));
        }
        let keep: HashSet<&str> = self.composers[..k].iter().map(String::as_str).collect();
        Catalog::new(self.pieces.iter().filter(|p| keep.contains(p.composer.as_str())).cloned().collect())
    }
}

/// Tab-separated `source_id<TAB>composer<TAB>duration_seconds` lines.
pub fn write_manifest(path: &Path, catalog: &Catalog) -> Result<()> {
    let mut out = String::new();
    for p in catalog.pieces() {
        writeln!(out, "{}\t{}\t{}", p.source_id, p.composer, p.duration).expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pieces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [source_id, composer, duration] = fields[..] else {
            return Err(Error::Data(format!("{}:{}: expected 3 tab-separated fields", path.display(), i + 1)));
        };
        let duration: f64 = duration
            .parse()
            .map_err(|_| Error::Data(format!("{}:{}: bad duration {duration:?}", path.display(), i + 1)))?;
        pieces.push(CatalogEntry {
            source_id: source_id.to_string(),
            composer: composer.to_string(),
            duration,
        });
    }
    Catalog::new(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn catalog(counts: &[(&str, usize)]) -> Catalog {
        let mut pieces = Vec::new();
        for &(c, n) in counts {
            for i in 0..n {
                pieces.push(CatalogEntry {
                    source_id: format!("{c}-{i}"),
                    composer: c.to_string(),
                    duration: 60.0,
                });
            }
        }
        Catalog::new(pieces).unwrap()
    }

    #[test]
    fn top_k_drops_small_composers() {
        let cat = catalog(&[("C", 1), ("A", 5), ("B", 3)]);
        let top = cat.select_top_k(2).unwrap();
        assert_eq!(top.composers(), &["A", "B"]);
        assert_eq!(top.pieces().len(), 8);
        assert!(top.pieces().iter().all(|p| p.composer != "C"));
    }

    #[test]
    fn top_k_all_is_identity() {
        let cat = catalog(&[("A", 5), ("B", 3), ("C", 1)]);
        assert_eq!(cat.select_top_k(3).unwrap(), cat);
    }

    #[test]
    fn ties_break_lexicographically() {
        let cat = catalog(&[("B", 3), ("A", 3)]);
        assert_eq!(cat.select_top_k(1).unwrap().composers(), &["A"]);
    }

    #[test]
    fn too_many_requested() {
        assert!(catalog(&[("A", 1)]).select_top_k(2).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = CatalogEntry {
            source_id: "x".into(),
            composer: "A".into(),
            duration: 1.0,
        };
        let err = Catalog::new(vec![e.clone(), e]).unwrap_err();
        assert!(err.to_string().contains("\"x\""));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let cat = catalog(&[("Chopin, Frédéric", 2), ("Bach, Johann Sebastian", 1)]);
        write_manifest(&path, &cat).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), cat);
    }
}

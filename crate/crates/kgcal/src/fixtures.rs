//! Synthetic datasets with a known ground truth.
//!
//! Entities sit at integer positions on a line. Relation `r` holds between
//! `s` and `o` exactly when `|o − s − offset_r| ≤ width`, so every triple of
//! the universe has a known truth value and the closed-world assumption is
//! exact. All true triples are distributed over train, validation and test;
//! the labeled splits get one false triple per positive.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kgcal_core::{LabeledTriple, Triple};

use crate::error::{KgcalError, Result};
use crate::ingest::{write_tsv, DuplicatePolicy, SplitPaths, TsvFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub entities: usize,
    pub offsets: Vec<i64>,
    pub width: i64,
    pub valid_positives: usize,
    pub test_positives: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    /// About 2,500 true triples: ~2,000 train and 250 each for validation
    /// and test.
    fn default() -> Self {
        Self {
            entities: 300,
            offsets: vec![5, 17, 40],
            width: 1,
            valid_positives: 250,
            test_positives: 250,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub spec: PlantedSpec,
    pub train: Vec<Triple>,
    pub valid: Vec<LabeledTriple>,
    pub test: Vec<LabeledTriple>,
}

impl PlantedSpec {
    pub fn is_true(&self, t: &Triple) -> bool {
        let Some(&offset) = self.offsets.get(t.predicate) else {
            return false;
        };
        (t.object as i64 - t.subject as i64 - offset).abs() <= self.width
    }

    fn universe(&self) -> Vec<Triple> {
        let n = self.entities as i64;
        let mut out = Vec::new();
        for (r, &offset) in self.offsets.iter().enumerate() {
            for s in 0..n {
                for o in (s + offset - self.width)..=(s + offset + self.width) {
                    if (0..n).contains(&o) {
                        out.push(Triple::new(s as usize, r, o as usize));
                    }
                }
            }
        }
        out
    }

    pub fn generate(&self) -> Result<PlantedDataset> {
        if self.entities < 2 || self.offsets.is_empty() {
            return Err(KgcalError::config("planted graph needs ≥ 2 entities and ≥ 1 relation"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut truth = self.universe();
        let held_out = self.valid_positives + self.test_positives;
        if truth.len() <= held_out {
            return Err(KgcalError::config(format!(
                "only {} true triples, cannot hold out {held_out}",
                truth.len()
            )));
        }
        truth.shuffle(&mut rng);
        let test_pos = truth.split_off(truth.len() - self.test_positives);
        let valid_pos = truth.split_off(truth.len() - self.valid_positives);
        let train = truth;

        let mut used = HashSet::new();
        let mut with_negatives = |positives: Vec<Triple>| {
            let mut split = Vec::with_capacity(2 * positives.len());
            for t in positives {
                split.push(LabeledTriple::new(t, true));
                let negative = loop {
                    let e = rng.gen_range(0..self.entities);
                    let c = if rng.gen_bool(0.5) {
                        Triple::new(e, t.predicate, t.object)
                    } else {
                        Triple::new(t.subject, t.predicate, e)
                    };
                    if !self.is_true(&c) && used.insert(c) {
                        break c;
                    }
                };
                split.push(LabeledTriple::new(negative, false));
            }
            split
        };
        let valid = with_negatives(valid_pos);
        let test = with_negatives(test_pos);
        Ok(PlantedDataset {
            spec: self.clone(),
            train,
            valid,
            test,
        })
    }
}

pub fn entity_label(id: usize) -> String {
    format!("e{id:04}")
}

pub fn relation_label(spec: &PlantedSpec, id: usize) -> String {
    format!("offset_{}", spec.offsets[id])
}

impl PlantedDataset {
    /// Writes `train.tsv` (positive) and labeled `valid.tsv` / `test.tsv`.
    pub fn write(&self, dir: &Path) -> Result<SplitPaths> {
        std::fs::create_dir_all(dir).map_err(|e| KgcalError::io(dir, e))?;
        let paths = SplitPaths {
            train: dir.join("train.tsv"),
            valid: dir.join("valid.tsv"),
            test: dir.join("test.tsv"),
            format: TsvFormat::Labeled,
            duplicates: DuplicatePolicy::Reject,
        };
        let labels = |t: &Triple| {
            (
                entity_label(t.subject),
                relation_label(&self.spec, t.predicate),
                entity_label(t.object),
            )
        };
        let train: Vec<_> = self.train.iter().map(labels).collect();
        write_tsv(&paths.train, train.iter().map(|(s, p, o)| (s.as_str(), p.as_str(), o.as_str(), None)))?;
        for (path, split) in [(&paths.valid, &self.valid), (&paths.test, &self.test)] {
            let rows: Vec<_> = split.iter().map(|lt| (labels(&lt.triple), lt.label)).collect();
            write_tsv(
                path,
                rows.iter()
                    .map(|((s, p, o), l)| (s.as_str(), p.as_str(), o.as_str(), Some(*l))),
            )?;
        }
        Ok(paths)
    }
}

/// Writes the default planted dataset under `dir` and returns its paths.
pub fn write_default_planted(dir: impl Into<PathBuf>) -> Result<SplitPaths> {
    PlantedSpec::default().generate()?.write(&dir.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fixture_has_desk_scale() {
        let data = PlantedSpec::default().generate().unwrap();
        assert!((1900..2200).contains(&data.train.len()), "{}", data.train.len());
        assert_eq!(data.valid.len(), 500);
        assert_eq!(data.test.len(), 500);
    }

    #[test]
    fn labels_agree_with_the_planted_rule() {
        let spec = PlantedSpec::default();
        let data = spec.generate().unwrap();
        assert!(data.train.iter().all(|t| spec.is_true(t)));
        for lt in data.valid.iter().chain(&data.test) {
            assert_eq!(spec.is_true(&lt.triple), lt.label);
        }
    }

    #[test]
    fn splits_are_disjoint() {
        let data = PlantedSpec::default().generate().unwrap();
        let mut seen = HashSet::new();
        for t in data.train.iter().chain(data.valid.iter().chain(&data.test).map(|lt| &lt.triple)) {
            assert!(seen.insert(*t));
        }
    }
}

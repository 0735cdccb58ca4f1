//! Integer-encoded triples, label dictionaries, dataset splits and the
//! known-positive filter used by filtered ranking.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::error::{Error, Result};

/// A `(subject, predicate, object)` triple over dense entity and relation ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triple {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
}

impl Triple {
    pub const fn new(subject: usize, predicate: usize, object: usize) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

impl From<(usize, usize, usize)> for Triple {
    fn from((s, p, o): (usize, usize, usize)) -> Self {
        Triple::new(s, p, o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledTriple {
    pub triple: Triple,
    /// `true` for a positive (true) triple.
    pub label: bool,
}

impl LabeledTriple {
    pub const fn new(triple: Triple, label: bool) -> Self {
        Self { triple, label }
    }
}

/// Bijective mapping between string labels and dense ids, assigned in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dict = Self::new();
        for label in labels {
            let label = label.into();
            if dict.ids.contains_key(&label) {
                return Err(Error::Graph(format!("duplicate dictionary label {label:?}")));
            }
            dict.insert(label);
        }
        Ok(dict)
    }

    /// Returns the id of `label`, assigning the next free id if it is new.
    pub fn get_or_insert(&mut self, label: &str) -> usize {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        self.insert(label.to_owned())
    }

    fn insert(&mut self, label: String) -> usize {
        let id = self.labels.len();
        self.ids.insert(label.clone(), id);
        self.labels.push(label);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    /// Labels in id order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Dictionary,
    pub relations: Dictionary,
    pub triples: Vec<Triple>,
}

impl KnowledgeGraph {
    pub fn new(entities: Dictionary, relations: Dictionary, triples: Vec<Triple>) -> Result<Self> {
        let graph = Self {
            entities,
            relations,
            triples,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn check_ids(&self, t: &Triple) -> Result<()> {
        check_triple_ids(t, self.num_entities(), self.num_relations())
    }

    /// Checks id ranges and rejects duplicate triples.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.triples.len());
        for (i, t) in self.triples.iter().enumerate() {
            self.check_ids(t)?;
            if !seen.insert(*t) {
                return Err(Error::Graph(format!("duplicate triple {t:?} at position {i}")));
            }
        }
        Ok(())
    }

    /// Decodes a triple back to its string labels.
    pub fn decode(&self, t: &Triple) -> Option<(&str, &str, &str)> {
        Some((
            self.entities.label(t.subject)?,
            self.relations.label(t.predicate)?,
            self.entities.label(t.object)?,
        ))
    }
}

pub(crate) fn check_triple_ids(t: &Triple, num_entities: usize, num_relations: usize) -> Result<()> {
    if t.subject >= num_entities {
        return Err(Error::Index {
            what: "entity",
            index: t.subject,
            size: num_entities,
        });
    }
    if t.object >= num_entities {
        return Err(Error::Index {
            what: "entity",
            index: t.object,
            size: num_entities,
        });
    }
    if t.predicate >= num_relations {
        return Err(Error::Index {
            what: "relation",
            index: t.predicate,
            size: num_relations,
        });
    }
    Ok(())
}

/// Training graph plus labeled validation and test splits sharing the
/// training dictionaries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: KnowledgeGraph,
    pub validation: Vec<LabeledTriple>,
    pub test: Vec<LabeledTriple>,
}

impl DatasetSplits {
    pub fn new(
        train: KnowledgeGraph,
        validation: Vec<LabeledTriple>,
        test: Vec<LabeledTriple>,
    ) -> Result<Self> {
        let splits = Self {
            train,
            validation,
            test,
        };
        splits.validate()?;
        Ok(splits)
    }

    /// Checks that every id resolves and the three splits are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let train: HashSet<Triple> = self.train.triples.iter().copied().collect();
        let mut valid = HashSet::with_capacity(self.validation.len());
        for lt in &self.validation {
            self.train.check_ids(&lt.triple)?;
            if train.contains(&lt.triple) {
                return Err(Error::Graph(format!(
                    "validation triple {:?} also occurs in train",
                    lt.triple
                )));
            }
            valid.insert(lt.triple);
        }
        for lt in &self.test {
            self.train.check_ids(&lt.triple)?;
            if train.contains(&lt.triple) || valid.contains(&lt.triple) {
                return Err(Error::Graph(format!(
                    "test triple {:?} also occurs in train or validation",
                    lt.triple
                )));
            }
        }
        Ok(())
    }

    /// Positive triples of the validation split.
    pub fn validation_positives(&self) -> Vec<Triple> {
        positives(&self.validation)
    }

    pub fn test_positives(&self) -> Vec<Triple> {
        positives(&self.test)
    }
}

pub fn positives(split: &[LabeledTriple]) -> Vec<Triple> {
    split.iter().filter(|lt| lt.label).map(|lt| lt.triple).collect()
}

/// Set of triples known to be true: train plus the positive halves of the
/// validation and test splits.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    known: HashSet<Triple>,
}

impl FilterIndex {
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        Self {
            known: triples.into_iter().collect(),
        }
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.known.contains(t)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        self.known.insert(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.known.iter()
    }
}

pub fn build_filter_index(splits: &DatasetSplits) -> FilterIndex {
    let known = splits
        .train
        .triples
        .iter()
        .copied()
        .chain(positives(&splits.validation))
        .chain(positives(&splits.test));
    FilterIndex::from_triples(known)
}

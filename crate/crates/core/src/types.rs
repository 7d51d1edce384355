//! Domain values shared by every stage of a run.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One unlabeled pool item.
///
/// The simulation ground truth, when present, is deliberately not reachable
/// through this type's public surface. Only the scripted and noisy oracles and
/// [`crate::evaluation::ground_truth`] can read it, so scorers, strategies and
/// the trainer cannot peek.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPoint {
    id: String,
    text: String,
    hidden_label: Option<bool>,
}

impl DataPoint {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub(crate) fn hidden_label(&self) -> Option<bool> {
        self.hidden_label
    }

    pub fn has_hidden_label(&self) -> bool {
        self.hidden_label.is_some()
    }
}

/// A raw dataset row as read from a dataset file or produced by the
/// synthetic generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("duplicate point id {0:?}")]
    DuplicateId(String),
    #[error("point {0:?} has empty text")]
    EmptyText(String),
    #[error("record at position {0} has an empty id")]
    EmptyId(usize),
}

/// The unlabeled dataset. Iteration order is ingestion order.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    points: Vec<DataPoint>,
    index: BTreeMap<String, usize>,
}

impl Pool {
    /// Ingests records in order, rejecting duplicate ids and empty texts.
    pub fn from_records<I>(records: I) -> Result<Self, PoolError>
    where
        I: IntoIterator<Item = Record>,
    {
        let records = records.into_iter();
        let mut pool = Pool {
            points: Vec::with_capacity(records.size_hint().0),
            index: BTreeMap::new(),
        };
        for (position, record) in records.enumerate() {
            if record.id.is_empty() {
                return Err(PoolError::EmptyId(position));
            }
            if record.text.is_empty() {
                return Err(PoolError::EmptyText(record.id));
            }
            if pool.index.contains_key(&record.id) {
                return Err(PoolError::DuplicateId(record.id));
            }
            pool.index.insert(record.id.clone(), pool.points.len());
            pool.points.push(DataPoint {
                id: record.id,
                text: record.text,
                hidden_label: record.label,
            });
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataPoint> {
        self.points.iter()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&DataPoint> {
        self.position(id).map(|i| &self.points[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

/// Binary label, `true` meaning the point belongs to the category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub bool);

impl Label {
    pub const POSITIVE: Label = Label(true);
    pub const NEGATIVE: Label = Label(false);

    pub fn is_positive(self) -> bool {
        self.0
    }

    pub fn as_target(self) -> f64 {
        if self.0 {
            1.0
        } else {
            0.0
        }
    }
}

impl From<bool> for Label {
    fn from(value: bool) -> Self {
        Label(value)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 { "positive" } else { "negative" })
    }
}

/// Milliseconds since the Unix epoch. Informational only: determinism checks
/// never look at it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

/// Source of annotation timestamps.
pub trait Clock {
    fn now(&self) -> Timestamp;
}

/// A clock stuck at one instant; used wherever byte-identical output matters.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> Timestamp {
        (**self).now()
    }
}

/// An oracle's label for one point, committed to the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub point_id: String,
    pub label: Label,
    pub oracle_id: String,
    /// 0 for cold-start annotations, `t` for loop iteration `t`.
    pub iteration: u32,
    pub created_at: Timestamp,
}

/// A point paired with a positive-class probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub point_id: String,
    pub p_positive: f64,
}

impl ScoredPoint {
    /// Panics if `p_positive` is outside `[0, 1]` or NaN.
    pub fn new(point_id: impl Into<String>, p_positive: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&p_positive),
            "probability {p_positive} outside [0, 1]"
        );
        ScoredPoint {
            point_id: point_id.into(),
            p_positive,
        }
    }

    /// `max(p, 1 - p)`.
    pub fn confidence(&self) -> f64 {
        self.p_positive.max(1.0 - self.p_positive)
    }
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CLASS_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must be in [0,1] and sum to 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub path: PathBuf,
    pub class: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub classes: Vec<String>,
    /// Sorted by path.
    pub records: Vec<Record>,
    pub seed: u64,
}

/// `⌊x + 0.5⌋` for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per class, in class order: shuffle with one seeded generator, take
/// `round(test·n)` for test, `round(val·n)` for validation, and the rest for
/// training.
pub fn stratified_split(
    classes: &[String],
    records: &[(PathBuf, usize)],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetIndex> {
    ratios.validate()?;
    let mut by_class: Vec<Vec<&PathBuf>> = vec![Vec::new(); classes.len()];
    for (path, class) in records {
        by_class
            .get_mut(*class)
            .ok_or(Error::LabelOutOfRange {
                label: *class,
                classes: classes.len(),
            })?
            .push(path);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records.len());
    for (class, paths) in by_class.iter_mut().enumerate() {
        let n = paths.len();
        if n < MIN_CLASS_SIZE {
            return Err(Error::ClassTooSmall {
                class: classes[class].clone(),
                count: n,
                min: MIN_CLASS_SIZE,
            });
        }
        paths.sort();
        paths.shuffle(&mut rng);
        let n_test = round_half_up(ratios.test * n as f64);
        let n_val = round_half_up(ratios.val * n as f64);
        for (i, path) in paths.iter().enumerate() {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            out.push(Record {
                path: (*path).clone(),
                class,
                split,
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetIndex {
        classes: classes.to_vec(),
        records: out,
        seed,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    path: PathBuf,
    class: String,
    split: Split,
}

impl DatasetIndex {
    pub fn split(&self, split: Split) -> Vec<(PathBuf, usize)> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| (r.path.clone(), r.class))
            .collect()
    }

    /// `[train, val, test]` sizes for one class.
    pub fn class_counts(&self, class: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for r in self.records.iter().filter(|r| r.class == class) {
            c[r.split as usize] += 1;
        }
        c
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(SplitRow {
                path: r.path.clone(),
                class: self.classes[r.class].clone(),
                split: r.split,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a `splits.csv`. Classes are the sorted distinct names present.
    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let rows = rd.deserialize().collect::<std::result::Result<Vec<SplitRow>, _>>()?;
        let classes: Vec<String> = rows
            .iter()
            .map(|r| r.class.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut records: Vec<Record> = rows
            .into_iter()
            .map(|r| Record {
                class: classes.binary_search(&r.class).expect("class collected above"),
                path: r.path,
                split: r.split,
            })
            .collect();
        records.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(DatasetIndex { classes, records, seed })
    }
}

//! Labeled corpora laid out as `<root>/<class>/<image>` and the random
//! train/test protocol run over them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::is_image_file;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub class_id: usize,
}

/// Class names in lexicographic order and every image, grouped by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    classes: Vec<String>,
    items: Vec<DatasetItem>,
}

impl DatasetIndex {
    /// Builds an index from explicit items. Class ids must be contiguous.
    pub fn new(classes: Vec<String>, items: Vec<DatasetItem>) -> Result<Self> {
        if let Some(item) = items.iter().find(|i| i.class_id >= classes.len()) {
            return Err(Error::Dataset(format!(
                "{} has class id {} but only {} classes exist",
                item.path.display(),
                item.class_id,
                classes.len()
            )));
        }
        for (id, name) in classes.iter().enumerate() {
            if !items.iter().any(|i| i.class_id == id) {
                return Err(Error::Dataset(format!("class {name:?} has zero images")));
            }
        }
        Ok(Self { classes, items })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.class_id).collect()
    }

    /// Item ids belonging to `class_id`, in index order.
    pub fn class_members(&self, class_id: usize) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.class_id == class_id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes.len()];
        for item in &self.items {
            sizes[item.class_id] += 1;
        }
        sizes
    }

    /// Restriction of the index to `ids`, keeping class names and ids.
    pub fn subset(&self, ids: &[usize]) -> Vec<DatasetItem> {
        ids.iter().map(|&i| self.items[i].clone()).collect()
    }
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        entries.push(entry.path());
    }
    entries.sort();
    Ok(entries)
}

/// Indexes `<root>/<class>/<image>`: one class per subdirectory, classes
/// and items sorted, hidden entries and non-image files skipped.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::MissingFile {
            path: root.to_path_buf(),
        });
    }
    let mut classes = Vec::new();
    let mut items = Vec::new();
    for class_dir in read_dir_sorted(root)? {
        if is_hidden(&class_dir) || !class_dir.is_dir() {
            continue;
        }
        let name = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Dataset(format!("non-UTF-8 class name {}", class_dir.display())))?
            .to_string();
        let class_id = classes.len();
        let before = items.len();
        for path in read_dir_sorted(&class_dir)? {
            if is_hidden(&path) || !path.is_file() || !is_image_file(&path) {
                continue;
            }
            items.push(DatasetItem { path, class_id });
        }
        if items.len() == before {
            return Err(Error::Dataset(format!("class {name:?} has zero images")));
        }
        classes.push(name);
    }
    if classes.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no class directories",
            root.display()
        )));
    }
    Ok(DatasetIndex { classes, items })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repetition {
    /// Sorted item ids used for training.
    pub train: Vec<usize>,
    /// Sorted item ids used for testing.
    pub test: Vec<usize>,
}

/// Independent random train/test partitions of one index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub repetitions: Vec<Repetition>,
    pub n_train_per_class: usize,
    pub seed: u64,
}

/// Seed of repetition `rep` for a base seed.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

/// Draws `n_reps` partitions, each taking `n_train` random items per class
/// for training and leaving the rest for testing. Repetition `r` is seeded
/// with `seed + r`, so any repetition can be regenerated on its own.
pub fn make_splits(index: &DatasetIndex, n_train: usize, n_reps: usize, seed: u64) -> Result<SplitSet> {
    let sizes = index.class_sizes();
    if let Some((c, &size)) = sizes.iter().enumerate().find(|(_, &s)| n_train >= s) {
        return Err(Error::InvalidArgument(format!(
            "n_train = {n_train} but class {:?} has only {size} images",
            index.classes[c]
        )));
    }
    let members: Vec<Vec<usize>> = (0..index.num_classes())
        .map(|c| index.class_members(c))
        .collect();
    let repetitions = (0..n_reps)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(seed, r));
            let mut in_train = vec![false; index.len()];
            for class in &members {
                let mut ids = class.clone();
                ids.shuffle(&mut rng);
                for &id in &ids[..n_train] {
                    in_train[id] = true;
                }
            }
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..index.len()).partition(|&i| in_train[i]);
            Repetition { train, test }
        })
        .collect();
    Ok(SplitSet {
        repetitions,
        n_train_per_class: n_train,
        seed,
    })
}

impl SplitSet {
    /// Text export, one line per item: `rep,item_id,train|test`.
    pub fn to_split_file(&self) -> String {
        let mut out = String::new();
        for (r, rep) in self.repetitions.iter().enumerate() {
            let mut rows: Vec<(usize, &str)> = rep
                .train
                .iter()
                .map(|&i| (i, "train"))
                .chain(rep.test.iter().map(|&i| (i, "test")))
                .collect();
            rows.sort();
            for (id, part) in rows {
                let _ = writeln!(out, "{r},{id},{part}");
            }
        }
        out
    }

    pub fn write_split_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_split_file()).map_err(|e| Error::io(path, e))
    }
}

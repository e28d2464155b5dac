//! On-disk datasets and the data directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use otxai_core::data::{self, Dataset};
use otxai_core::Rng;

use crate::error::{Error, Result};
use crate::idx::load_idx;

/// Stream id of the generator used to synthesize or split datasets.
pub const DATA_STREAM: u64 = 0xda7a;

pub const DATA_DIR_ENV: &str = "OTNN_DATA_DIR";

/// `$OTNN_DATA_DIR`, else `./data` when present, else the `data` directory
/// of the source checkout this binary was built from.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let local = PathBuf::from("data");
    if local.is_dir() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

type Split = Arc<(Dataset, Dataset)>;

fn cache() -> &'static Mutex<HashMap<PathBuf, Split>> {
    static CACHE: OnceLock<Mutex<HashMap<PathBuf, Split>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Dataset(format!(
            "{} not found; run scripts/fetch_datasets.py or set {DATA_DIR_ENV}",
            path.display()
        )))
    }
}

/// FashionMNIST train and test splits from `<dir>/fashion`.
pub fn fashion_mnist(dir: &Path) -> Result<Split> {
    let root = dir.join("fashion");
    if let Some(hit) = cache().lock().expect("dataset cache").get(&root) {
        return Ok(hit.clone());
    }
    let file = |name: &str| require(root.join(name));
    let train = load_idx(
        &file("train-images-idx3-ubyte.gz")?,
        &file("train-labels-idx1-ubyte.gz")?,
        "fashion_mnist-train",
    )?;
    let test = load_idx(
        &file("t10k-images-idx3-ubyte.gz")?,
        &file("t10k-labels-idx1-ubyte.gz")?,
        "fashion_mnist-test",
    )?;
    let split = Arc::new((train, test));
    cache().lock().expect("dataset cache").insert(root, split.clone());
    Ok(split)
}

/// MNIST test images from `<dir>/mnist`.
pub fn mnist_test(dir: &Path) -> Result<Dataset> {
    let root = dir.join("mnist");
    load_idx(
        &require(root.join("t10k-images-idx3-ubyte.gz"))?,
        &require(root.join("t10k-labels-idx1-ubyte.gz"))?,
        "mnist-test",
    )
}

/// BlockMNIST images from MNIST digits 0 and 1, shuffled and split.
pub fn block_mnist_split(dir: &Path, test_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Usage(format!("test_fraction {test_fraction} outside (0, 1)")));
    }
    let all = data::block_mnist(&mnist_test(dir)?, rng)?;
    let mut idx: Vec<usize> = (0..all.len()).collect();
    rng.shuffle(&mut idx);
    let n_test = ((all.len() as f64) * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test);
    Ok((all.select(train)?, all.select(test)?))
}

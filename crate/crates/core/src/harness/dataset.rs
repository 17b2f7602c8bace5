//! Labeled dataset ingestion and export.
//!
//! Two on-disk forms are supported:
//!
//! * `idx` — the classic quartet in one directory: `train-images-idx3-ubyte`,
//!   `train-labels-idx1-ubyte`, `t10k-images-idx3-ubyte`,
//!   `t10k-labels-idx1-ubyte` (big-endian headers, u8 payloads).
//! * `png-tree` — `<root>/{train,test}/<class>/<name>.png` with one
//!   subdirectory per class.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Idx,
    PngTree,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idx" => Ok(DatasetFormat::Idx),
            "png-tree" => Ok(DatasetFormat::PngTree),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format {other:?}, expected idx or png-tree"
            ))),
        }
    }
}

/// A labeled, shape-validated image set with a train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_classes: usize,
    pub train: Vec<(Image, usize)>,
    pub test: Vec<(Image, usize)>,
}

impl Dataset {
    pub fn new(train: Vec<(Image, usize)>, test: Vec<(Image, usize)>) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::Dataset("train and test splits must be non-empty".into()));
        }
        let shape = train[0].0.shape();
        let mut max_label = 0;
        for (image, label) in train.iter().chain(&test) {
            if image.shape() != shape {
                return Err(Error::Dataset(format!(
                    "mixed image shapes: {:?} and {:?}",
                    shape,
                    image.shape()
                )));
            }
            max_label = max_label.max(*label);
        }
        Ok(Self {
            num_classes: max_label + 1,
            train,
            test,
        })
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.train[0].0.shape()
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::Idx => load_idx(path),
        DatasetFormat::PngTree => load_png_tree(path),
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], off: usize, what: &str) -> Result<u32> {
    let slice = bytes
        .get(off..off + 4)
        .ok_or_else(|| Error::Dataset(format!("{what}: header truncated")))?;
    Ok(u32::from_be_bytes(slice.try_into().expect("4 bytes")))
}

fn read_idx_images(path: &Path) -> Result<Vec<Image>> {
    let name = path.display();
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Dataset(format!(
            "{name}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = be_u32(&bytes, 4, "images")? as usize;
    let rows = be_u32(&bytes, 8, "images")? as usize;
    let cols = be_u32(&bytes, 12, "images")? as usize;
    let expect = 16 + count * rows * cols;
    if bytes.len() != expect {
        return Err(Error::Dataset(format!(
            "{name}: declares {count} images of {rows}x{cols} ({expect} bytes) but holds {}",
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        images.push(Image::from_u8(rows, cols, 1, &bytes[start..start + rows * cols])?);
    }
    Ok(images)
}

fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let name = path.display();
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Dataset(format!(
            "{name}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let count = be_u32(&bytes, 4, "labels")? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::Dataset(format!(
            "{name}: declares {count} labels but holds {}",
            bytes.len() - 8
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

fn load_idx(dir: &Path) -> Result<Dataset> {
    let pair = |images: &str, labels: &str| -> Result<Vec<(Image, usize)>> {
        let images = read_idx_images(&dir.join(images))?;
        let labels = read_idx_labels(&dir.join(labels))?;
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(images.into_iter().zip(labels).collect())
    };
    let train = pair("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let test = pair("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    Dataset::new(train, test)
}

pub fn save_idx(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let write_pair = |samples: &[(Image, usize)], images: &str, labels: &str| -> Result<()> {
        let (h, w, c) = samples[0].0.shape();
        if c != 1 {
            return Err(Error::Dataset("idx export supports single-channel images".into()));
        }
        let mut img_bytes = Vec::with_capacity(16 + samples.len() * h * w);
        img_bytes.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        img_bytes.extend((samples.len() as u32).to_be_bytes());
        img_bytes.extend((h as u32).to_be_bytes());
        img_bytes.extend((w as u32).to_be_bytes());
        let mut lab_bytes = Vec::with_capacity(8 + samples.len());
        lab_bytes.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lab_bytes.extend((samples.len() as u32).to_be_bytes());
        for (image, label) in samples {
            img_bytes.extend(image.to_u8()?);
            lab_bytes.push(*label as u8);
        }
        fs::write(dir.join(images), img_bytes)?;
        fs::write(dir.join(labels), lab_bytes)?;
        Ok(())
    };
    write_pair(&dataset.train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    write_pair(&dataset.test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    Ok(())
}

/// Class directory names sorted numerically when they all parse as integers,
/// lexicographically otherwise; sorted position defines the class id.
fn sorted_class_dirs(split_dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(split_dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    if dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no class subdirectories",
            split_dir.display()
        )));
    }
    if dirs.iter().all(|(name, _)| name.parse::<usize>().is_ok()) {
        dirs.sort_by_key(|(name, _)| name.parse::<usize>().expect("checked"));
    } else {
        dirs.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(dirs)
}

fn load_png_split(split_dir: &Path) -> Result<Vec<(Image, usize)>> {
    let mut out = Vec::new();
    for (label, (_, class_dir)) in sorted_class_dirs(split_dir)?.into_iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(&class_dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "png"))
            .collect();
        files.sort();
        for file in files {
            out.push((Image::load_png(&file)?, label));
        }
    }
    Ok(out)
}

fn load_png_tree(root: &Path) -> Result<Dataset> {
    let train = load_png_split(&root.join("train"))?;
    let test = load_png_split(&root.join("test"))?;
    Dataset::new(train, test)
}

pub fn save_png_tree(dataset: &Dataset, root: &Path) -> Result<()> {
    for (split, samples) in [("train", &dataset.train), ("test", &dataset.test)] {
        let mut counters = vec![0usize; dataset.num_classes];
        for (image, label) in samples.iter() {
            let dir = root.join(split).join(label.to_string());
            fs::create_dir_all(&dir)?;
            image.save_png(&dir.join(format!("{:05}.png", counters[*label])))?;
            counters[*label] += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::generate_synthetic_dataset;

    fn tiny() -> Dataset {
        generate_synthetic_dataset(3, 4, 2, 16, 16)
    }

    #[test]
    fn idx_round_trip_is_pixel_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_idx(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::Idx).unwrap();
        assert_eq!(back.num_classes, ds.num_classes);
        assert_eq!(back.train.len(), ds.train.len());
        for ((a, la), (b, lb)) in ds.train.iter().zip(&back.train) {
            assert_eq!(a, b);
            assert_eq!(la, lb);
        }
    }

    #[test]
    fn png_tree_round_trip_and_class_inference() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_png_tree(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::PngTree).unwrap();
        assert_eq!(back.num_classes, 10);
        assert_eq!(back.train.len(), ds.train.len());
        assert_eq!(back.test.len(), ds.test.len());
        let find = |set: &[(Image, usize)], label: usize| -> Vec<Image> {
            set.iter().filter(|(_, l)| *l == label).map(|(i, _)| i.clone()).collect()
        };
        for label in 0..10 {
            assert_eq!(find(&ds.train, label), find(&back.train, label));
        }
    }

    #[test]
    fn declared_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_idx(&ds, dir.path()).unwrap();
        // chop one image off the training file while keeping the header
        let img_path = dir.path().join("train-images-idx3-ubyte");
        let bytes = fs::read(&img_path).unwrap();
        fs::write(&img_path, &bytes[..bytes.len() - 16 * 16]).unwrap();
        match load_dataset(dir.path(), DatasetFormat::Idx) {
            Err(Error::Dataset(msg)) => assert!(msg.contains("declares"), "{msg}"),
            other => panic!("expected count error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_idx(&ds, dir.path()).unwrap();
        let lab_path = dir.path().join("train-labels-idx1-ubyte");
        let mut bytes = fs::read(&lab_path).unwrap();
        bytes[3] = 0x42;
        fs::write(&lab_path, bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetFormat::Idx),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn label_image_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_idx(&ds, dir.path()).unwrap();
        let lab_path = dir.path().join("train-labels-idx1-ubyte");
        let mut bytes = fs::read(&lab_path).unwrap();
        bytes.pop();
        let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) - 1;
        bytes[4..8].copy_from_slice(&n.to_be_bytes());
        fs::write(&lab_path, bytes).unwrap();
        match load_dataset(dir.path(), DatasetFormat::Idx) {
            Err(Error::Dataset(msg)) => assert!(msg.contains("labels"), "{msg}"),
            other => panic!("expected mismatch error, got {other:?}"),
        }
    }
}

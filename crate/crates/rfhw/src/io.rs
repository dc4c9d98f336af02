//! Persistence and ingestion: the binary forest file, human-readable
//! memory-image listings, and IDX dataset reading.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::tree::TreeMemoryImage;

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

/// A labeled dataset of 8-bit feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<u8>,
    labels: Vec<u8>,
    num_features: usize,
    num_classes: u16,
}

impl Dataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, num_features: usize) -> Result<Self> {
        if labels.is_empty() || num_features == 0 {
            return Err(Error::EmptyDataset);
        }
        if !images.len().is_multiple_of(num_features) {
            return Err(Error::RaggedDataset {
                got: images.len(),
                num_features,
            });
        }
        let n = images.len() / num_features;
        if n != labels.len() {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        let num_classes = u16::from(*labels.iter().max().unwrap()) + 1;
        Ok(Self {
            images,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Smallest class count covering every label present.
    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn row(&self, sample: usize) -> &[u8] {
        &self.images[sample * self.num_features..(sample + 1) * self.num_features]
    }

    #[inline]
    pub fn feature(&self, sample: u32, coord: u16) -> u8 {
        self.images[sample as usize * self.num_features + coord as usize]
    }

    #[inline]
    pub fn label(&self, sample: u32) -> u8 {
        self.labels[sample as usize]
    }
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset,
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Load an IDX image/label file pair into a dataset, flattening each
/// rows x cols image into one row-major feature vector.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    let img = fs::read(image_path)?;
    let magic = read_be_u32(&img, 0, image_path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::IdxBadMagic {
            path: image_path.to_path_buf(),
            expected: IDX_IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = read_be_u32(&img, 4, image_path)? as usize;
    let rows = read_be_u32(&img, 8, image_path)? as usize;
    let cols = read_be_u32(&img, 12, image_path)? as usize;
    let expected = 16 + n * rows * cols;
    if img.len() < expected {
        return Err(Error::Truncated {
            path: image_path.to_path_buf(),
            offset: img.len(),
            expected,
            found: img.len(),
        });
    }
    if img.len() > expected {
        return Err(Error::TrailingBytes {
            path: image_path.to_path_buf(),
            offset: expected,
            extra: img.len() - expected,
        });
    }

    let lab = fs::read(label_path)?;
    let magic = read_be_u32(&lab, 0, label_path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::IdxBadMagic {
            path: label_path.to_path_buf(),
            expected: IDX_LABEL_MAGIC,
            found: magic,
        });
    }
    let n_labels = read_be_u32(&lab, 4, label_path)? as usize;
    let expected = 8 + n_labels;
    if lab.len() < expected {
        return Err(Error::Truncated {
            path: label_path.to_path_buf(),
            offset: lab.len(),
            expected,
            found: lab.len(),
        });
    }
    if lab.len() > expected {
        return Err(Error::TrailingBytes {
            path: label_path.to_path_buf(),
            offset: expected,
            extra: lab.len() - expected,
        });
    }
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    Dataset::new(img[16..].to_vec(), lab[8..].to_vec(), rows * cols)
}

// ---------------------------------------------------------------------------
// binary forest file
// ---------------------------------------------------------------------------

const FOREST_MAGIC: [u8; 4] = *b"RFHW";
const FOREST_VERSION: u8 = 1;

/// Serialize a forest: magic, version, {T, K, p, l} as 32-bit little
/// endian, then per tree the coordinate entries (16-bit) and value entries
/// (8-bit) in address order.
pub fn save_forest(forest: &ForestModel, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(forest_file_size(forest.num_trees(), forest.levels()));
    out.extend_from_slice(&FOREST_MAGIC);
    out.push(FOREST_VERSION);
    out.extend_from_slice(&(forest.num_trees() as u32).to_le_bytes());
    out.extend_from_slice(&u32::from(forest.num_classes()).to_le_bytes());
    out.extend_from_slice(&forest.num_features().to_le_bytes());
    out.extend_from_slice(&forest.levels().to_le_bytes());
    for tree in forest.trees() {
        for &coord in tree.coord_entries() {
            out.extend_from_slice(&coord.to_le_bytes());
        }
        out.extend_from_slice(tree.value_entries());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Exact byte size of a forest file with the given shape.
pub fn forest_file_size(num_trees: usize, levels: u32) -> usize {
    let coord_bytes = ((1usize << levels) - 1) * 2;
    let value_bytes = (1usize << (levels + 1)) - 1;
    21 + num_trees * (coord_bytes + value_bytes)
}

pub fn load_forest(path: &Path) -> Result<ForestModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < 5 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected: 21,
            found: bytes.len(),
        });
    }
    if bytes[0..4] != FOREST_MAGIC {
        return Err(Error::ForestBadMagic {
            path: path.to_path_buf(),
            found: bytes[0..4].try_into().unwrap(),
        });
    }
    if bytes[4] != FOREST_VERSION {
        return Err(Error::ForestBadVersion {
            path: path.to_path_buf(),
            expected: FOREST_VERSION,
            found: bytes[4],
        });
    }
    let read_le_u32 = |offset: usize| -> Result<u32> {
        let end = offset + 4;
        if bytes.len() < end {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                offset,
                expected: end,
                found: bytes.len(),
            });
        }
        Ok(u32::from_le_bytes(bytes[offset..end].try_into().unwrap()))
    };
    let num_trees = read_le_u32(5)? as usize;
    let num_classes = read_le_u32(9)?;
    let num_features = read_le_u32(13)?;
    let levels = read_le_u32(17)?;
    if num_classes == 0 || num_classes > u32::from(u16::MAX) {
        return Err(Error::BadHeaderField {
            path: path.to_path_buf(),
            field: "classes",
            value: u64::from(num_classes),
            offset: 9,
        });
    }
    if levels == 0 || levels > 24 {
        return Err(Error::BadHeaderField {
            path: path.to_path_buf(),
            field: "levels",
            value: u64::from(levels),
            offset: 17,
        });
    }
    let expected = forest_file_size(num_trees, levels);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            path: path.to_path_buf(),
            offset: expected,
            extra: bytes.len() - expected,
        });
    }

    let coord_count = (1usize << levels) - 1;
    let value_count = (1usize << (levels + 1)) - 1;
    let mut offset = 21;
    let mut trees = Vec::with_capacity(num_trees);
    for _ in 0..num_trees {
        let mut coords = Vec::with_capacity(coord_count);
        for _ in 0..coord_count {
            coords.push(u16::from_le_bytes(bytes[offset..offset + 2].try_into().unwrap()));
            offset += 2;
        }
        let values = bytes[offset..offset + value_count].to_vec();
        offset += value_count;
        trees.push(TreeMemoryImage::from_raw(
            levels,
            num_features,
            num_classes as u16,
            coords,
            values,
        )?);
    }
    ForestModel::new(trees, String::new())
}

// ---------------------------------------------------------------------------
// human-readable memory images
// ---------------------------------------------------------------------------

/// Write one listing per tree plus a shape file into `dir`.
///
/// Each listing carries one line per address: the hexadecimal address, the
/// coordinate entry (or `--` at leaf addresses, which have none), and the
/// value entry.
pub fn export_mem(forest: &ForestModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = format!(
        "trees {}\nclasses {}\nfeatures {}\nlevels {}\nmetadata {}\n",
        forest.num_trees(),
        forest.num_classes(),
        forest.num_features(),
        forest.levels(),
        forest.metadata()
    );
    fs::write(dir.join("meta.txt"), meta)?;
    for (i, tree) in forest.trees().iter().enumerate() {
        let mut out = String::new();
        let leaf_base = 1u32 << tree.levels();
        for addr in 1..leaf_base {
            out.push_str(&format!(
                "{addr:04x} {:04x} {:02x}\n",
                tree.coord_at(addr),
                tree.value_at(addr)
            ));
        }
        for addr in leaf_base..(1 << (tree.levels() + 1)) {
            out.push_str(&format!("{addr:04x} -- {:02x}\n", tree.value_at(addr)));
        }
        let mut file = fs::File::create(dir.join(format!("tree_{i:04}.mem")))?;
        file.write_all(out.as_bytes())?;
    }
    Ok(())
}

fn meta_value<'a>(lines: &'a [&str], key: &'static str, path: &Path) -> Result<&'a str> {
    for line in lines {
        if let Some(rest) = line.strip_prefix(key) {
            if rest.is_empty() {
                return Ok("");
            }
            if let Some(value) = rest.strip_prefix(' ') {
                return Ok(value);
            }
        }
    }
    Err(Error::BadMeta {
        path: path.to_path_buf(),
        key,
    })
}

fn meta_number(lines: &[&str], key: &'static str, path: &Path) -> Result<u64> {
    meta_value(lines, key, path)?
        .trim()
        .parse()
        .map_err(|_| Error::BadMeta {
            path: path.to_path_buf(),
            key,
        })
}

/// Read back a directory written by [`export_mem`].
pub fn import_mem(dir: &Path) -> Result<ForestModel> {
    let meta_path = dir.join("meta.txt");
    let meta = fs::read_to_string(&meta_path)?;
    let lines: Vec<&str> = meta.lines().collect();
    let num_trees = meta_number(&lines, "trees", &meta_path)? as usize;
    let num_classes = meta_number(&lines, "classes", &meta_path)? as u16;
    let num_features = meta_number(&lines, "features", &meta_path)? as u32;
    let levels = meta_number(&lines, "levels", &meta_path)? as u32;
    let metadata = meta_value(&lines, "metadata", &meta_path)?.to_string();

    let mut trees = Vec::with_capacity(num_trees);
    for i in 0..num_trees {
        let path = dir.join(format!("tree_{i:04}.mem"));
        trees.push(parse_mem_listing(&path, levels, num_features, num_classes)?);
    }
    ForestModel::new(trees, metadata)
}

fn parse_mem_listing(
    path: &Path,
    levels: u32,
    num_features: u32,
    num_classes: u16,
) -> Result<TreeMemoryImage> {
    let text = fs::read_to_string(path)?;
    let leaf_base = 1u32 << levels;
    let mut coords = Vec::with_capacity(leaf_base as usize - 1);
    let mut values = Vec::with_capacity(2 * leaf_base as usize - 1);
    let mut expected_addr = 1u32;
    for (lineno, line) in text.lines().enumerate() {
        let line_number = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MemLine {
                path: path.to_path_buf(),
                line: line_number,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let addr = u32::from_str_radix(fields[0], 16).map_err(|_| Error::MemLine {
            path: path.to_path_buf(),
            line: line_number,
            reason: format!("bad address '{}'", fields[0]),
        })?;
        if addr != expected_addr {
            return Err(Error::AddressGap {
                path: path.to_path_buf(),
                line: line_number,
                expected: expected_addr,
                found: addr,
            });
        }
        let value = u8::from_str_radix(fields[2], 16).map_err(|_| Error::MemLine {
            path: path.to_path_buf(),
            line: line_number,
            reason: format!("bad value entry '{}'", fields[2]),
        })?;
        if addr < leaf_base {
            let coord = u16::from_str_radix(fields[1], 16).map_err(|_| Error::MemLine {
                path: path.to_path_buf(),
                line: line_number,
                reason: format!("bad coordinate entry '{}'", fields[1]),
            })?;
            coords.push(coord);
        } else if fields[1] != "--" {
            return Err(Error::MemLine {
                path: path.to_path_buf(),
                line: line_number,
                reason: format!("leaf address carries a coordinate entry '{}'", fields[1]),
            });
        }
        values.push(value);
        expected_addr += 1;
    }
    if expected_addr != 1 << (levels + 1) {
        return Err(Error::AddressGap {
            path: path.to_path_buf(),
            line: text.lines().count() + 1,
            expected: expected_addr,
            found: 1 << (levels + 1),
        });
    }
    TreeMemoryImage::from_raw(levels, num_features, num_classes, coords, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{FeatureVector, LogicalTree, TreeNode};
    use std::path::PathBuf;

    fn toy_forest() -> ForestModel {
        let t1 = LogicalTree::new(TreeNode::Split {
            coord: 0,
            value: 100,
            le: Box::new(TreeNode::Leaf { label: 1 }),
            gt: Box::new(TreeNode::Leaf { label: 2 }),
        });
        let t2 = LogicalTree::new(TreeNode::Leaf { label: 2 });
        let trees = vec![
            TreeMemoryImage::from_logical(&t1, 2, 3, 4).unwrap(),
            TreeMemoryImage::from_logical(&t2, 2, 3, 4).unwrap(),
        ];
        ForestModel::new(trees, "toy".to_string()).unwrap()
    }

    fn write_idx_pair(dir: &Path, images: &[Vec<u8>], labels: &[u8]) -> (PathBuf, PathBuf) {
        let rows = 2u32;
        let cols = (images[0].len() / 2) as u32;
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&rows.to_be_bytes());
        img.extend_from_slice(&cols.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn forest_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let forest = toy_forest();
        let path = dir.path().join("toy.rfhw");
        save_forest(&forest, &path).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len() as usize,
            forest_file_size(2, 2)
        );
        let loaded = load_forest(&path).unwrap();
        assert_eq!(loaded, forest);
        // re-serialization is byte-identical
        let path2 = dir.path().join("toy2.rfhw");
        save_forest(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn forest_file_size_matches_layout() {
        // header 21 bytes, per tree (2^l - 1) coordinates at 2 bytes and
        // 2^(l+1) - 1 value bytes
        assert_eq!(forest_file_size(40, 14), 21 + 40 * (((1 << 14) - 1) * 2 + ((1 << 15) - 1)));
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.rfhw");
        save_forest(&toy_forest(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_forest(&path), Err(Error::ForestBadMagic { .. })));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long.rfhw");
        save_forest(&toy_forest(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.push(0);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_forest(&path), Err(Error::TrailingBytes { extra: 1, .. })));
    }

    #[test]
    fn truncated_forest_names_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.rfhw");
        save_forest(&toy_forest(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let full = bytes.len();
        fs::write(&path, &bytes[..full - 3]).unwrap();
        match load_forest(&path) {
            Err(Error::Truncated { expected, found, .. }) => {
                assert_eq!(expected, full);
                assert_eq!(found, full - 3);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn mem_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let forest = toy_forest();
        export_mem(&forest, dir.path()).unwrap();
        let loaded = import_mem(dir.path()).unwrap();
        assert_eq!(loaded, forest);
        assert_eq!(loaded.metadata(), "toy");
    }

    #[test]
    fn constant_tree_export_has_uniform_leaf_lines() {
        let dir = tempfile::tempdir().unwrap();
        let tree = LogicalTree::new(TreeNode::Leaf { label: 5 });
        let trees = vec![
            TreeMemoryImage::from_logical(&tree, 2, 1, 8).unwrap(),
            TreeMemoryImage::from_logical(&tree, 2, 1, 8).unwrap(),
        ];
        let forest = ForestModel::new(trees, String::new()).unwrap();
        export_mem(&forest, dir.path()).unwrap();
        let listing = fs::read_to_string(dir.path().join("tree_0000.mem")).unwrap();
        let leaf_lines: Vec<&str> = listing.lines().skip(3).collect();
        assert_eq!(leaf_lines.len(), 4);
        for line in leaf_lines {
            assert!(line.ends_with("-- 05"));
        }
    }

    #[test]
    fn hand_written_one_level_image_loads_and_classifies() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("meta.txt"),
            "trees 2\nclasses 10\nfeatures 1\nlevels 1\nmetadata \n",
        )
        .unwrap();
        // comparison true (x[0] <= 0x80) selects the odd child
        let listing = "0001 0000 80\n0002 -- 07\n0003 -- 04\n";
        fs::write(dir.path().join("tree_0000.mem"), listing).unwrap();
        fs::write(dir.path().join("tree_0001.mem"), listing).unwrap();
        let forest = import_mem(dir.path()).unwrap();
        let (label, _) = forest.trees()[0].infer(&FeatureVector::new(vec![100])).unwrap();
        assert_eq!(label, 4);
        let (label, _) = forest.trees()[0].infer(&FeatureVector::new(vec![200])).unwrap();
        assert_eq!(label, 7);
    }

    #[test]
    fn mem_import_detects_address_gap() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("meta.txt"),
            "trees 2\nclasses 10\nfeatures 1\nlevels 1\nmetadata \n",
        )
        .unwrap();
        let good = "0001 0000 80\n0002 -- 07\n0003 -- 04\n";
        let gapped = "0001 0000 80\n0003 -- 04\n";
        fs::write(dir.path().join("tree_0000.mem"), gapped).unwrap();
        fs::write(dir.path().join("tree_0001.mem"), good).unwrap();
        assert!(matches!(
            import_mem(dir.path()),
            Err(Error::AddressGap { expected: 2, found: 3, .. })
        ));
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let images = vec![vec![0u8, 10, 20, 30], vec![40u8, 50, 60, 70]];
        let labels = vec![1u8, 0];
        let (ip, lp) = write_idx_pair(dir.path(), &images, &labels);
        let data = load_idx(&ip, &lp).unwrap();
        assert_eq!(data.num_samples(), 2);
        assert_eq!(data.num_features(), 4);
        assert_eq!(data.row(1), &[40, 50, 60, 70]);
        assert_eq!(data.label(0), 1);

        // truncation names expected vs actual byte counts
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 2]).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::Truncated { expected, found, .. }) => {
                assert_eq!(expected, 16 + 8);
                assert_eq!(found, 16 + 6);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }

        // magic mismatch
        let mut bytes = fs::read(&lp).unwrap();
        bytes[3] = 0x99;
        fs::write(&lp, &bytes).unwrap();
        fs::write(&ip, {
            let mut b = Vec::new();
            b.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
            b.extend_from_slice(&1u32.to_be_bytes());
            b.extend_from_slice(&2u32.to_be_bytes());
            b.extend_from_slice(&2u32.to_be_bytes());
            b.extend_from_slice(&[1, 2, 3, 4]);
            b
        })
        .unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::IdxBadMagic { .. })));
    }

    #[test]
    fn idx_count_disagreement_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let images = vec![vec![0u8, 10, 20, 30], vec![40u8, 50, 60, 70]];
        let labels = vec![1u8, 0, 1];
        let (ip, lp) = write_idx_pair(dir.path(), &images, &labels);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
    }
}

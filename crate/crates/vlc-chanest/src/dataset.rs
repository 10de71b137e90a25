//! Dataset persistence: one binary file per record plus a text index.
//!
//! A dataset directory contains `NNNNNN.vlch` files (clean channel images)
//! and an `index.txt` that lists every record id, its file, and the full
//! scene geometry as flat `key=value` pairs. The binary files carry pixels;
//! the index carries provenance, so a loaded record is as complete as a
//! generated one.
//!
//! Record file layout, all little-endian: magic `VLCH`, u32 format version,
//! u32 rows, u32 cols, rows×cols f32 pixels (row-major), f64 norm_min,
//! f64 norm_scale.
//!
//! Pixels are stored in f32: storage halves and the quantization (≤ 6e-8 on
//! the unit scale) is far below every noise level of interest. Writing is
//! deterministic, so identical records always produce byte-identical files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::config::{scene_from_config, scene_to_config, FlatConfig};
use crate::error::{Error, Result};
use crate::imaging::ChannelImage;
use crate::training::DatasetRecord;

const RECORD_MAGIC: &[u8; 4] = b"VLCH";
const RECORD_VERSION: u32 = 1;
const INDEX_NAME: &str = "index.txt";

/// Upper bound on pixels per record; a header implying more is corrupt.
const MAX_PIXELS: usize = 1 << 24;

fn record_file_name(id: u64) -> String {
    format!("{id:06}.vlch")
}

fn write_record_file(path: &Path, image: &ChannelImage) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(RECORD_MAGIC)?;
    writer.write_all(&RECORD_VERSION.to_le_bytes())?;
    writer.write_all(&(image.rows() as u32).to_le_bytes())?;
    writer.write_all(&(image.cols() as u32).to_le_bytes())?;
    for p in image.pixels() {
        writer.write_all(&(*p as f32).to_le_bytes())?;
    }
    writer.write_all(&image.norm_min().to_le_bytes())?;
    writer.write_all(&image.norm_scale().to_le_bytes())?;
    writer.flush()?;
    Ok(())
}

fn read_record_file(path: &Path) -> Result<ChannelImage> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_bytes(&mut reader, &mut magic, path)?;
    if &magic != RECORD_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a channel record file: magic {magic:?} != {RECORD_MAGIC:?}",
            path.display()
        )));
    }
    let version = read_u32(&mut reader, path)?;
    if version != RECORD_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported record version {version}, expected {RECORD_VERSION}",
            path.display()
        )));
    }
    let rows = read_u32(&mut reader, path)? as usize;
    let cols = read_u32(&mut reader, path)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > MAX_PIXELS {
        return Err(Error::Format(format!(
            "{}: implausible image dimensions {rows}×{cols}",
            path.display()
        )));
    }
    let mut pixels = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 4];
    for _ in 0..rows * cols {
        read_bytes(&mut reader, &mut buf, path)?;
        pixels.push(f32::from_le_bytes(buf) as f64);
    }
    let mut buf8 = [0u8; 8];
    read_bytes(&mut reader, &mut buf8, path)?;
    let norm_min = f64::from_le_bytes(buf8);
    read_bytes(&mut reader, &mut buf8, path)?;
    let norm_scale = f64::from_le_bytes(buf8);
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Format(format!("{}: trailing data", path.display())));
    }
    ChannelImage::from_parts(rows, cols, pixels, norm_min, norm_scale)
}

fn read_bytes<R: Read>(reader: &mut R, buf: &mut [u8], path: &Path) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format(format!("{}: record file is truncated", path.display()))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(reader: &mut R, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_bytes(reader, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}

// ---------------------------------------------------------------------------
// Directory-level save and load
// ---------------------------------------------------------------------------

/// Write every record plus the index into `dir` (created if needed).
/// Existing files of the same names are overwritten.
pub fn save_dataset(records: &[DatasetRecord], dir: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("refusing to save an empty dataset".into()));
    }
    check_unique_ids(records)?;
    std::fs::create_dir_all(dir)?;
    let mut index = String::new();
    index.push_str("# channel dataset index\n");
    index.push_str("# format: id=<u64> file=<name> <scene key=value pairs>\n");
    for record in records {
        record.validate()?;
        let name = record_file_name(record.id);
        write_record_file(&dir.join(&name), &record.clean_image)?;
        index.push_str(&format!("id={} file={}", record.id, name));
        for (key, value) in pairs_of(&scene_to_config(&record.scene)) {
            index.push_str(&format!(" {key}={value}"));
        }
        index.push('\n');
    }
    std::fs::write(dir.join(INDEX_NAME), index)?;
    Ok(())
}

fn pairs_of(cfg: &FlatConfig) -> Vec<(String, String)> {
    cfg.keys()
        .map(|k| (k.to_string(), cfg.get(k).unwrap().to_string()))
        .collect()
}

/// Read a dataset directory back, in index order. Every record is
/// re-validated: scene invariants, pixel range, and scene/image shape
/// agreement.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetRecord>> {
    let index_path = dir.join(INDEX_NAME);
    let text = std::fs::read_to_string(&index_path).map_err(|e| {
        if e.kind() == ErrorKind::NotFound {
            Error::Format(format!("{}: dataset index not found", index_path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, file, scene_cfg) = parse_index_line(line).map_err(|e| {
            Error::Format(format!("{}: line {}: {e}", index_path.display(), lineno + 1))
        })?;
        if !seen.insert(id) {
            return Err(Error::Protocol(format!("dataset contains record id {id} twice")));
        }
        let scene = scene_from_config(&scene_cfg)?;
        let clean_image = read_record_file(&dir.join(&file))?;
        let record = DatasetRecord { id, clean_image, scene };
        record.validate()?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Format(format!("{}: index lists no records", index_path.display())));
    }
    Ok(records)
}

fn parse_index_line(line: &str) -> Result<(u64, PathBuf, FlatConfig)> {
    let mut id = None;
    let mut file = None;
    let mut cfg = FlatConfig::new();
    for token in line.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("token `{token}` is not key=value")))?;
        match key {
            "id" => {
                id = Some(value.parse::<u64>().map_err(|_| {
                    Error::Format(format!("record id `{value}` is not an integer"))
                })?);
            }
            "file" => file = Some(PathBuf::from(value)),
            _ => cfg.set(key, value),
        }
    }
    let id = id.ok_or_else(|| Error::Format("missing id".into()))?;
    let file = file.ok_or_else(|| Error::Format("missing file".into()))?;
    Ok((id, file, cfg))
}

fn check_unique_ids(records: &[DatasetRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for record in records {
        if !seen.insert(record.id) {
            return Err(Error::Protocol(format!(
                "dataset contains record id {} twice",
                record.id
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

/// Deterministic 80/20 split by record id: records are ordered by id and the
/// leading 80% (rounded down, at least one on each side) become the training
/// set. Downstream consumers all derive their splits from this one function,
/// which is what makes train/test disjointness checkable by id sets.
pub fn split_dataset(
    mut records: Vec<DatasetRecord>,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    check_unique_ids(&records)?;
    if records.len() < 2 {
        return Err(Error::Config(format!(
            "cannot split {} record(s) into train and test sets",
            records.len()
        )));
    }
    records.sort_by_key(|r| r.id);
    let train_len = ((records.len() * 4) / 5).max(1);
    let test = records.split_off(train_len);
    Ok((records, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{GridSpec, VlcScene};
    use crate::training::{generate_dataset, SceneRandomization};
    use tempfile::tempdir;

    fn small_scene() -> VlcScene {
        VlcScene::with_grids(
            GridSpec { count_x: 6, count_y: 6, spacing_m: 0.4, plane_height_m: 3.0 },
            GridSpec { count_x: 6, count_y: 6, spacing_m: 0.1, plane_height_m: 1.0 },
        )
    }

    fn small_dataset(count: usize, seed: u64) -> Vec<DatasetRecord> {
        generate_dataset(&small_scene(), count, seed, &SceneRandomization::default()).unwrap()
    }

    #[test]
    fn save_load_round_trip_preserves_records_to_storage_precision() {
        let dir = tempdir().unwrap();
        let records = small_dataset(5, 11);
        save_dataset(&records, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), records.len());
        for (a, b) in loaded.iter().zip(&records) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.scene, b.scene);
            assert_eq!(a.clean_image.norm_min(), b.clean_image.norm_min());
            assert_eq!(a.clean_image.norm_scale(), b.clean_image.norm_scale());
            for (pa, pb) in a.clean_image.pixels().iter().zip(b.clean_image.pixels()) {
                assert!((pa - pb).abs() <= 1e-7, "pixel drifted by {}", (pa - pb).abs());
            }
        }
    }

    #[test]
    fn resaving_loaded_records_is_byte_identical() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let records = small_dataset(3, 12);
        save_dataset(&records, dir_a.path()).unwrap();
        let loaded = load_dataset(dir_a.path()).unwrap();
        save_dataset(&loaded, dir_b.path()).unwrap();
        for entry in std::fs::read_dir(dir_a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
        }
    }

    #[test]
    fn identical_generation_writes_identical_bytes() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        save_dataset(&small_dataset(3, 7), dir_a.path()).unwrap();
        save_dataset(&small_dataset(3, 7), dir_b.path()).unwrap();
        for entry in std::fs::read_dir(dir_a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
        }
    }

    #[test]
    fn duplicate_ids_are_rejected_on_save() {
        let dir = tempdir().unwrap();
        let mut records = small_dataset(2, 13);
        records[1].id = records[0].id;
        assert!(matches!(
            save_dataset(&records, dir.path()),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn corrupt_record_files_are_rejected() {
        let dir = tempdir().unwrap();
        save_dataset(&small_dataset(2, 14), dir.path()).unwrap();
        let path = dir.path().join(record_file_name(0));
        let bytes = std::fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn missing_index_is_reported_as_format_error() {
        let dir = tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(format!("{err}").contains("index"), "{err}");
    }

    #[test]
    fn tampered_index_geometry_fails_shape_validation() {
        let dir = tempdir().unwrap();
        save_dataset(&small_dataset(2, 15), dir.path()).unwrap();
        let index = dir.path().join(INDEX_NAME);
        let text = std::fs::read_to_string(&index).unwrap();
        std::fs::write(&index, text.replace("led_count_x=6", "led_count_x=4")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn split_takes_leading_ids_for_training() {
        let records = small_dataset(10, 16);
        let (train, test) = split_dataset(records).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        let max_train = train.iter().map(|r| r.id).max().unwrap();
        let min_test = test.iter().map(|r| r.id).min().unwrap();
        assert!(max_train < min_test);
    }

    #[test]
    fn split_orders_by_id_not_input_order() {
        let mut records = small_dataset(5, 17);
        records.reverse();
        let (train, test) = split_dataset(records).unwrap();
        assert_eq!(train.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(test.iter().map(|r| r.id).collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn tiny_datasets_cannot_be_split() {
        let records = small_dataset(1, 18);
        assert!(matches!(split_dataset(records), Err(Error::Config(_))));
    }
}

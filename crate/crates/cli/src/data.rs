//! Loading gait cycles from sensor CSVs and cycle archives.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bpnet::gait::{extract_cycles, read_archive, read_csv, GaitCycle, SensorStream};
use bpnet::{Error, Result};

pub const ARCHIVE_EXT: &str = "bin";

fn is_data_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("csv") | Some(ARCHIVE_EXT))
}

/// The `.csv` and `.bin` files under `path` (or `path` itself), sorted.
pub fn data_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && is_data_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no .csv or .{ARCHIVE_EXT} files", path.display())));
    }
    Ok(files)
}

pub fn read_streams(path: &Path) -> Result<Vec<SensorStream>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(f)).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Every cycle found under `path`. CSV streams are segmented here and need
/// a user column unless `default_user` is given; cycle indices continue
/// per user across files.
pub fn load_cycles(path: &Path, default_user: Option<u32>) -> Result<Vec<GaitCycle>> {
    let mut cycles = Vec::new();
    let mut next_index: BTreeMap<u32, u32> = BTreeMap::new();
    for file in data_files(path)? {
        if file.extension().and_then(|e| e.to_str()) == Some(ARCHIVE_EXT) {
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            cycles.extend(read_archive(&bytes)?.cycles);
            continue;
        }
        for stream in read_streams(&file)? {
            let user = stream.user_id.or(default_user).ok_or_else(|| {
                Error::Data(format!("{}: no user column; pass a user id", file.display()))
            })?;
            let first = next_index.entry(user).or_insert(0);
            let (_, found) = extract_cycles(&stream, user, *first).map_err(|e| match e {
                Error::NoGait(m) => Error::NoGait(format!("{} (user {user}): {m}", file.display())),
                e => e,
            })?;
            *first += found.len() as u32;
            cycles.extend(found);
        }
    }
    Ok(cycles)
}

/// Cycles of one user, ordered by id.
pub fn user_cycles(cycles: &[GaitCycle], user: u32) -> Vec<GaitCycle> {
    let mut out: Vec<GaitCycle> = cycles.iter().filter(|c| c.user_id == user).cloned().collect();
    out.sort_by_key(|c| c.id);
    out
}

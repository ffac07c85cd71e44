//! Atomic file output and dataset loading.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use skelmap::skeleton::{parse_sample_name, parse_skeleton_file, SampleMeta, SkeletonSequence};
use skelmap::toy::LabeledSequence;

/// Extension of skeleton files written and read by the CLI.
pub const SKELETON_EXT: &str = "skeleton";

/// Writes `bytes` to a temp file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes).and_then(|_| tmp.flush()).with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Sample name taken from a file stem.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Parses a skeleton file; the metadata comes from the file name when it
/// follows the sample naming scheme.
pub fn load_sequence(path: &Path) -> Result<SkeletonSequence> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seq = parse_skeleton_file(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    seq.meta = parse_sample_name(&stem(path)).ok();
    Ok(seq)
}

/// Skeleton files of a directory, sorted by name.
pub fn skeleton_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == SKELETON_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .{SKELETON_EXT} files in {}", dir.display());
    }
    Ok(files)
}

/// Sample metadata from the names of a directory's skeleton files.
pub fn dataset_names(dir: &Path) -> Result<Vec<SampleMeta>> {
    skeleton_files(dir)?
        .iter()
        .map(|p| parse_sample_name(&stem(p)).with_context(|| format!("file {}", p.display())))
        .collect()
}

/// A labeled dataset: every skeleton file in `dir`, labeled `action − 1`.
pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledSequence>> {
    skeleton_files(dir)?
        .iter()
        .map(|p| {
            let sequence = load_sequence(p)?;
            let meta = sequence.meta.with_context(|| format!("{} is not named like S001C001P001R001A001", p.display()))?;
            Ok(LabeledSequence { label: meta.action_id as usize - 1, sequence })
        })
        .collect()
}

/// Names in an ID list file, one per line.
pub fn read_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn list_text<'a>(names: impl IntoIterator<Item = &'a SampleMeta>) -> String {
    names.into_iter().map(|m| format!("{m}\n")).collect()
}

//! Deterministic gzip tar archives for task payloads, task results and whole
//! directories. Entries are sorted, timestamps and ownership are zeroed, so
//! identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::pss::{check_relative_path, TaskSpec};
use crate::worker::{ExecStatus, TaskExecutionResult};

const MANIFEST: &str = "manifest.json";
const RESULT_META: &str = "result.json";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("archive has no {0}")]
    MissingManifest(&'static str),
    #[error("unsafe path in archive: {0}")]
    UnsafePath(String),
    #[error("destination {0} is not empty")]
    DestNotEmpty(PathBuf),
}

/// Execution instructions shipped with a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_id: String,
    pub attempt: u32,
    pub compile_cmd: String,
    pub exec_cmd: String,
    pub priority: u8,
    pub timeout_s: u64,
    pub task_file: String,
    pub input_files: Vec<String>,
}

struct Entry {
    path: String,
    data: Vec<u8>,
    mode: u32,
}

fn file_mode(meta: &std::fs::Metadata) -> u32 {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        if meta.permissions().mode() & 0o111 != 0 {
            return 0o755;
        }
    }
    let _ = meta;
    0o644
}

fn read_file(base: &Path, rel: &str) -> Result<(Vec<u8>, u32), ArchiveError> {
    let path = base.join(rel);
    let meta = std::fs::metadata(&path).map_err(|_| ArchiveError::FileNotFound(rel.to_string()))?;
    if !meta.is_file() {
        return Err(ArchiveError::FileNotFound(rel.to_string()));
    }
    Ok((std::fs::read(&path)?, file_mode(&meta)))
}

fn build(mut entries: Vec<Entry>) -> Result<Vec<u8>, ArchiveError> {
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let gz = GzEncoder::new(Vec::new(), Compression::default());
    let mut tar = tar::Builder::new(gz);
    tar.mode(tar::HeaderMode::Deterministic);
    for e in &entries {
        let mut header = tar::Header::new_gnu();
        header.set_size(e.data.len() as u64);
        header.set_mode(e.mode);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        tar.append_data(&mut header, &e.path, e.data.as_slice())?;
    }
    Ok(tar.into_inner()?.finish()?)
}

fn corrupt(e: io::Error) -> ArchiveError {
    ArchiveError::CorruptArchive(e.to_string())
}

/// Reads every regular-file entry, rejecting absolute, `..` and link entries.
fn read_entries(bytes: &[u8]) -> Result<Vec<Entry>, ArchiveError> {
    let mut archive = tar::Archive::new(GzDecoder::new(bytes));
    let mut out = Vec::new();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let raw = String::from_utf8(entry.path_bytes().into_owned())
            .map_err(|_| ArchiveError::CorruptArchive("non UTF-8 entry name".into()))?;
        let path = raw.trim_end_matches('/').to_string();
        check_relative_path(&path).map_err(|_| ArchiveError::UnsafePath(raw.clone()))?;
        match entry.header().entry_type() {
            tar::EntryType::Directory => continue,
            tar::EntryType::Regular | tar::EntryType::Continuous => {}
            other => return Err(ArchiveError::UnsafePath(format!("{raw} ({other:?} entry)"))),
        }
        let mode = entry.header().mode().unwrap_or(0o644) & 0o755;
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(corrupt)?;
        out.push(Entry { path, data, mode });
    }
    // Drain the rest of the gzip stream so truncation past the tar end is caught.
    io::copy(&mut archive.into_inner(), &mut io::sink()).map_err(corrupt)?;
    Ok(out)
}

fn write_entry(dest: &Path, rel: &str, data: &[u8], mode: u32) -> Result<(), ArchiveError> {
    let path = dest.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(&path)?;
    f.write_all(data)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(mode))?;
    }
    let _ = mode;
    Ok(())
}

fn prepare_dest(dest: &Path) -> Result<(), ArchiveError> {
    std::fs::create_dir_all(dest)?;
    if std::fs::read_dir(dest)?.next().is_some() {
        return Err(ArchiveError::DestNotEmpty(dest.to_path_buf()));
    }
    Ok(())
}

/// Packs `manifest.json`, `task/<task_file>` and `inputs/<input>` entries.
pub fn pack_task_archive(task: &TaskSpec, attempt: u32, base_dir: &Path) -> Result<Vec<u8>, ArchiveError> {
    let manifest = TaskManifest {
        task_id: task.id.clone(),
        attempt,
        compile_cmd: task.compile_cmd.clone(),
        exec_cmd: task.exec_cmd.clone(),
        priority: task.priority,
        timeout_s: task.timeout_s,
        task_file: task.task_file.clone(),
        input_files: task.input_files.clone(),
    };
    let mut entries = vec![Entry {
        path: MANIFEST.into(),
        data: serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        mode: 0o644,
    }];
    let (data, mode) = read_file(base_dir, &task.task_file)?;
    entries.push(Entry { path: format!("task/{}", task.task_file), data, mode });
    for input in &task.input_files {
        let (data, mode) = read_file(base_dir, input)?;
        entries.push(Entry { path: format!("inputs/{input}"), data, mode });
    }
    build(entries)
}

/// Extracts a task archive into the empty directory `dest`. The task file
/// and inputs land at their original relative paths so commands run with
/// `dest` as working directory see the submitter's layout.
pub fn unpack_task_archive(bytes: &[u8], dest: &Path) -> Result<TaskManifest, ArchiveError> {
    let entries = read_entries(bytes)?;
    let manifest_entry = entries.iter().find(|e| e.path == MANIFEST).ok_or(ArchiveError::MissingManifest(MANIFEST))?;
    let manifest: TaskManifest = serde_json::from_slice(&manifest_entry.data)
        .map_err(|e| ArchiveError::CorruptArchive(format!("manifest: {e}")))?;
    prepare_dest(dest)?;
    for e in &entries {
        let rel = if e.path == MANIFEST {
            continue;
        } else if let Some(rel) = e.path.strip_prefix("task/") {
            rel
        } else if let Some(rel) = e.path.strip_prefix("inputs/") {
            rel
        } else {
            return Err(ArchiveError::CorruptArchive(format!("unexpected entry {}", e.path)));
        };
        write_entry(dest, rel, &e.data, e.mode)?;
    }
    Ok(manifest)
}

#[derive(Serialize, Deserialize)]
struct ResultMeta {
    task_id: String,
    attempt: u32,
    status: ExecStatus,
    exit_code: Option<i32>,
    wall_s: f64,
    cpu_s: f64,
}

/// Packs `result.json`, `stdout`, `stderr` and `out/<file>` entries.
pub fn pack_result_archive(result: &TaskExecutionResult) -> Result<Vec<u8>, ArchiveError> {
    let meta = ResultMeta {
        task_id: result.task_id.clone(),
        attempt: result.attempt,
        status: result.status,
        exit_code: result.exit_code,
        wall_s: result.wall_s,
        cpu_s: result.cpu_s,
    };
    let mut entries = vec![
        Entry {
            path: RESULT_META.into(),
            data: serde_json::to_vec_pretty(&meta).expect("meta serializes"),
            mode: 0o644,
        },
        Entry { path: "stdout".into(), data: result.stdout.clone(), mode: 0o644 },
        Entry { path: "stderr".into(), data: result.stderr.clone(), mode: 0o644 },
    ];
    for (rel, data) in &result.out_files {
        check_relative_path(rel).map_err(|_| ArchiveError::UnsafePath(rel.clone()))?;
        entries.push(Entry { path: format!("out/{rel}"), data: data.clone(), mode: 0o644 });
    }
    build(entries)
}

pub fn unpack_result_archive(bytes: &[u8]) -> Result<TaskExecutionResult, ArchiveError> {
    let entries = read_entries(bytes)?;
    let meta = entries.iter().find(|e| e.path == RESULT_META).ok_or(ArchiveError::MissingManifest(RESULT_META))?;
    let meta: ResultMeta =
        serde_json::from_slice(&meta.data).map_err(|e| ArchiveError::CorruptArchive(format!("result.json: {e}")))?;
    let mut result = TaskExecutionResult {
        task_id: meta.task_id,
        attempt: meta.attempt,
        status: meta.status,
        exit_code: meta.exit_code,
        wall_s: meta.wall_s,
        cpu_s: meta.cpu_s,
        stdout: Vec::new(),
        stderr: Vec::new(),
        out_files: BTreeMap::new(),
    };
    for e in entries {
        match e.path.as_str() {
            RESULT_META => {}
            "stdout" => result.stdout = e.data,
            "stderr" => result.stderr = e.data,
            p => match p.strip_prefix("out/") {
                Some(rel) => {
                    result.out_files.insert(rel.to_string(), e.data);
                }
                None => return Err(ArchiveError::CorruptArchive(format!("unexpected entry {p}"))),
            },
        }
    }
    Ok(result)
}

fn collect_dir(root: &Path, rel: &str, out: &mut Vec<Entry>) -> Result<(), ArchiveError> {
    let dir = if rel.is_empty() { root.to_path_buf() } else { root.join(rel) };
    for item in std::fs::read_dir(&dir)? {
        let item = item?;
        let name = item
            .file_name()
            .into_string()
            .map_err(|n| ArchiveError::CorruptArchive(format!("non UTF-8 file name {}", n.to_string_lossy())))?;
        let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        let ft = item.file_type()?;
        if ft.is_dir() {
            collect_dir(root, &child, out)?;
        } else if ft.is_file() {
            let (data, mode) = read_file(root, &child)?;
            out.push(Entry { path: child, data, mode });
        }
    }
    Ok(())
}

/// Packs every regular file below `dir` (symlinks are skipped).
pub fn pack_dir_archive(dir: &Path) -> Result<Vec<u8>, ArchiveError> {
    let mut entries = Vec::new();
    collect_dir(dir, "", &mut entries)?;
    build(entries)
}

/// Extracts an archive made by [`pack_dir_archive`] into `dest`, returning
/// the relative paths written.
pub fn unpack_dir_archive(bytes: &[u8], dest: &Path) -> Result<Vec<String>, ArchiveError> {
    let entries = read_entries(bytes)?;
    std::fs::create_dir_all(dest)?;
    let mut written = Vec::with_capacity(entries.len());
    for e in entries {
        write_entry(dest, &e.path, &e.data, e.mode)?;
        written.push(e.path);
    }
    Ok(written)
}

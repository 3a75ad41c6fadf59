//! On-disk project directory: `project.json` plus a copy of the export.
//!
//! Every write goes to a temp file in the same directory, is fsynced and
//! then renamed over the target, so a crash leaves either the old or the
//! new file and never a torn one.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::config::ProjectConfig;
use crate::error::{AnnotationError, IngestError};
use crate::extract::AnnotationSet;
use crate::ingest::parse_export;
use crate::prioritize::RatingSheet;
use crate::project::{sha256_hex, Baseline, ExportRef, Project, ProjectFile, PROJECT_VERSION};

pub const PROJECT_FILE: &str = "project.json";
pub const EXPORT_FILE: &str = "export.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{} already holds a project", .0.display())]
    AlreadyExists(PathBuf),
    #[error("{}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("project file version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("export {path} changed on disk (sha256 {actual}, project expects {expected})")]
    ExportChanged { path: String, expected: String, actual: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    atomic_write_with(path, bytes, || Ok(()))
}

/// Like [`atomic_write`], calling `before_rename` once the temp file is
/// durable. An error from the hook aborts the write and leaves `path` as it was.
pub fn atomic_write_with(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> io::Result<()>,
) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        drop(f);
        before_rename()?;
        fs::rename(&tmp, path)?;
        sync_dir(dir)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[cfg(unix)]
fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

#[cfg(not(unix))]
fn sync_dir(_: &Path) -> io::Result<()> {
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    dir: PathBuf,
}

impl ProjectStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ProjectStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn project_path(&self) -> PathBuf {
        self.dir.join(PROJECT_FILE)
    }

    pub fn exists(&self) -> bool {
        self.project_path().exists()
    }

    /// Creates a project from raw export bytes. Nothing is written unless the
    /// export and annotations validate.
    pub fn init(
        &self,
        export_bytes: &[u8],
        config: ProjectConfig,
        annotations: AnnotationSet,
        ratings: RatingSheet,
    ) -> Result<Project, StoreError> {
        if self.exists() {
            return Err(StoreError::AlreadyExists(self.dir.clone()));
        }
        let export = parse_export(export_bytes)?.export;
        annotations.validate(&export)?;
        ratings.check_dimensions(&config.weights).map_err(|e| StoreError::Corrupt {
            path: self.dir.join("ratings"),
            message: e.to_string(),
        })?;
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let export_path = self.dir.join(EXPORT_FILE);
        atomic_write(&export_path, export_bytes).map_err(io_err(&export_path))?;
        let file = ProjectFile::new(
            ExportRef { path: EXPORT_FILE.into(), sha256: sha256_hex(export_bytes) },
            Baseline { config, annotations, ratings },
        );
        let project = Project::new(file, export);
        self.save(&project)?;
        Ok(project)
    }

    pub fn load(&self) -> Result<Project, StoreError> {
        let path = self.project_path();
        let raw = fs::read(&path).map_err(io_err(&path))?;
        let corrupt = |message: String| StoreError::Corrupt { path: path.clone(), message };
        let value: serde_json::Value = serde_json::from_slice(&raw).map_err(|e| corrupt(e.to_string()))?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != u64::from(PROJECT_VERSION) {
            return Err(StoreError::Version { found, expected: PROJECT_VERSION });
        }
        let file: ProjectFile = serde_path_to_error::deserialize(value).map_err(|e| corrupt(e.to_string()))?;

        let export_path = self.dir.join(&file.export.path);
        let bytes = fs::read(&export_path).map_err(io_err(&export_path))?;
        let actual = sha256_hex(&bytes);
        if actual != file.export.sha256 {
            return Err(StoreError::ExportChanged {
                path: file.export.path.clone(),
                expected: file.export.sha256.clone(),
                actual,
            });
        }
        let export = parse_export(&bytes)?.export;
        file.annotations.validate(&export)?;
        Ok(Project::new(file, export))
    }

    pub fn save(&self, project: &Project) -> Result<(), StoreError> {
        self.save_with(project, || Ok(()))
    }

    pub fn save_with(&self, project: &Project, before_rename: impl FnOnce() -> io::Result<()>) -> Result<(), StoreError> {
        let path = self.project_path();
        atomic_write_with(&path, project.file.to_json().as_bytes(), before_rename).map_err(io_err(&path))
    }
}

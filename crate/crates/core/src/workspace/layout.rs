use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{Sandbox, Workspace, WorkspaceError, WorkspaceState};
use std::sync::Arc;

/// Names of the fixed top-level directories, in creation order.
pub const SUBDIRS: [&str; 10] = [
    "src",
    "build",
    "dict",
    "corpus",
    "harnesses",
    "campaigns",
    "coverage",
    "crashes",
    "reports",
    "logs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subdir {
    Src,
    Build,
    Dict,
    Corpus,
    Harnesses,
    Campaigns,
    Coverage,
    Crashes,
    Reports,
    Logs,
}

impl Subdir {
    pub const ALL: [Subdir; 10] = [
        Subdir::Src,
        Subdir::Build,
        Subdir::Dict,
        Subdir::Corpus,
        Subdir::Harnesses,
        Subdir::Campaigns,
        Subdir::Coverage,
        Subdir::Crashes,
        Subdir::Reports,
        Subdir::Logs,
    ];

    pub fn name(self) -> &'static str {
        SUBDIRS[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Subdir> {
        Subdir::ALL.iter().copied().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceLayout {
    root: PathBuf,
}

impl WorkspaceLayout {
    /// Wraps an existing root. The root is canonicalized and all ten subdirs must exist.
    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        let root = fs::canonicalize(root)
            .map_err(|e| WorkspaceError::io(format!("opening workspace {}", root.display()), e))?;
        for name in SUBDIRS {
            let dir = root.join(name);
            if !dir.is_dir() {
                return Err(WorkspaceError::NotAWorkspace(dir));
            }
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, subdir: Subdir) -> PathBuf {
        self.root.join(subdir.name())
    }

    pub fn subdirs(&self) -> impl Iterator<Item = (Subdir, PathBuf)> + '_ {
        Subdir::ALL.iter().map(move |s| (*s, self.dir(*s)))
    }

    pub fn state_file(&self) -> PathBuf {
        self.dir(Subdir::Reports).join("state.json")
    }

    /// Renders `path` relative to the root when it lies inside it.
    pub fn relative(&self, path: &Path) -> String {
        match path.strip_prefix(&self.root) {
            Ok(rel) if rel.as_os_str().is_empty() => ".".to_string(),
            Ok(rel) => rel.to_string_lossy().into_owned(),
            Err(_) => path.to_string_lossy().into_owned(),
        }
    }
}

/// Creates a fresh workspace at `root` and copies the target library into `src/`.
pub fn init_workspace(target_source: &Path, root: &Path) -> Result<Workspace, WorkspaceError> {
    let unreadable = |reason: String| WorkspaceError::SourceUnreadable {
        path: target_source.to_path_buf(),
        reason,
    };
    let meta = fs::metadata(target_source).map_err(|e| unreadable(e.to_string()))?;
    if !meta.is_dir() {
        return Err(unreadable("not a directory".into()));
    }
    fs::read_dir(target_source).map_err(|e| unreadable(e.to_string()))?;

    if root.exists() {
        let mut entries = fs::read_dir(root)
            .map_err(|e| WorkspaceError::io(format!("reading {}", root.display()), e))?;
        if entries.next().is_some() {
            return Err(WorkspaceError::RootNotEmpty(root.to_path_buf()));
        }
    } else {
        fs::create_dir_all(root)
            .map_err(|e| WorkspaceError::io(format!("creating {}", root.display()), e))?;
    }
    for name in SUBDIRS {
        let dir = root.join(name);
        fs::create_dir(&dir)
            .map_err(|e| WorkspaceError::io(format!("creating {}", dir.display()), e))?;
    }
    copy_tree(target_source, &root.join("src"))?;

    let layout = WorkspaceLayout::open(root)?;
    let ws = Workspace {
        sandbox: Arc::new(Sandbox::new(layout)),
        state: WorkspaceState::new(),
    };
    ws.save_state()?;
    Ok(ws)
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), WorkspaceError> {
    for entry in WalkDir::new(from).follow_links(true).sort_by_file_name() {
        let entry = entry.map_err(|e| WorkspaceError::SourceUnreadable {
            path: e.path().unwrap_or(from).to_path_buf(),
            reason: e.to_string(),
        })?;
        let rel = entry.path().strip_prefix(from).expect("walk stays under its root");
        if rel.as_os_str().is_empty() {
            continue;
        }
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest)
                .map_err(|e| WorkspaceError::io(format!("creating {}", dest.display()), e))?;
        } else {
            fs::copy(entry.path(), &dest).map_err(|e| {
                WorkspaceError::io(format!("copying {}", entry.path().display()), e)
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::Phase;

    fn toy_source(dir: &Path) -> PathBuf {
        let src = dir.join("toy");
        fs::create_dir_all(src.join("include")).unwrap();
        fs::write(src.join("toy.c"), "int toy(void) { return 1; }\n").unwrap();
        fs::write(src.join("include/toy.h"), "int toy(void);\n").unwrap();
        src
    }

    #[test]
    fn init_creates_all_subdirs_and_copies_source() {
        let tmp = tempfile::tempdir().unwrap();
        let src = toy_source(tmp.path());
        let ws = init_workspace(&src, &tmp.path().join("ws")).unwrap();
        assert_eq!(ws.layout().subdirs().count(), 10);
        for (_, dir) in ws.layout().subdirs() {
            assert!(dir.is_dir());
            assert!(dir.starts_with(ws.root()) && dir != ws.root());
        }
        assert!(ws.root().join("src/include/toy.h").is_file());
        assert_eq!(ws.state.phase, Phase::Setup);
        assert!(ws.state.completed_steps.is_empty());
        assert!(ws.layout().state_file().is_file());
    }

    #[test]
    fn init_accepts_existing_empty_root() {
        let tmp = tempfile::tempdir().unwrap();
        let src = toy_source(tmp.path());
        let root = tmp.path().join("empty");
        fs::create_dir(&root).unwrap();
        assert!(init_workspace(&src, &root).is_ok());
    }

    #[test]
    fn init_refuses_non_empty_root() {
        let tmp = tempfile::tempdir().unwrap();
        let src = toy_source(tmp.path());
        let root = tmp.path().join("busy");
        fs::create_dir(&root).unwrap();
        fs::write(root.join("keep.txt"), "mine").unwrap();
        let err = init_workspace(&src, &root).unwrap_err();
        assert!(err.to_string().contains("workspace root not empty"));
        assert_eq!(fs::read_to_string(root.join("keep.txt")).unwrap(), "mine");
    }

    #[test]
    fn init_names_missing_source() {
        let tmp = tempfile::tempdir().unwrap();
        let missing = tmp.path().join("nope");
        let err = init_workspace(&missing, &tmp.path().join("ws")).unwrap_err();
        assert!(matches!(err, WorkspaceError::SourceUnreadable { .. }));
        assert!(err.to_string().contains(&missing.display().to_string()));
    }

    #[test]
    fn subdir_names_round_trip() {
        for s in Subdir::ALL {
            assert_eq!(Subdir::from_name(s.name()), Some(s));
        }
        assert_eq!(Subdir::from_name("tmp"), None);
    }
}

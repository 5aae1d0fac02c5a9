use serde::{Deserialize, Serialize};

use super::{CrashArtifact, Frame};
use crate::util::sha256_hex;

/// Number of top frames that form the dedup key.
pub const KEY_FRAMES: usize = 5;

/// The (function, file) pairs a crash is grouped by: the top in-project
/// frames, or the top frames overall when none are in the project.
pub fn key_frames(frames: &[Frame]) -> Vec<(&str, &str)> {
    let project: Vec<&Frame> = frames.iter().filter(|f| f.in_project).collect();
    let chosen: Vec<&Frame> = if project.is_empty() {
        frames.iter().collect()
    } else {
        project
    };
    chosen
        .into_iter()
        .take(KEY_FRAMES)
        .map(|f| (f.function.as_str(), f.file.as_str()))
        .collect()
}

pub fn group_key(frames: &[Frame]) -> String {
    let mut text = String::new();
    for (function, file) in key_frames(frames) {
        text.push_str(function);
        text.push('\u{1f}');
        text.push_str(file);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashGroup {
    pub group_key: String,
    pub members: Vec<CrashArtifact>,
    pub representative: usize,
}

impl CrashGroup {
    pub fn representative(&self) -> &CrashArtifact {
        &self.members[self.representative]
    }

    /// Short form of the key used in file names.
    pub fn short_key(&self) -> &str {
        &self.group_key[..12.min(self.group_key.len())]
    }
}

/// Partitions crashes by stack key, in order of first appearance. The first
/// member of each group represents it.
pub fn dedup_crashes(artifacts: Vec<CrashArtifact>) -> Vec<CrashGroup> {
    let mut groups: Vec<CrashGroup> = Vec::new();
    for a in artifacts {
        let key = group_key(&a.frames);
        match groups.iter_mut().find(|g| g.group_key == key) {
            Some(g) => g.members.push(a),
            None => groups.push(CrashGroup {
                group_key: key,
                members: vec![a],
                representative: 0,
            }),
        }
    }
    groups
}

//! The neutral coverage export.
//!
//! ```json
//! { "records": [
//!     { "file": "codec/decode.c", "function": "codec_decode", "is_public_api": true,
//!       "entry_hits": 12,
//!       "branches": [ { "id": "41:7:T", "hits": 12 }, { "id": "41:7:F", "hits": 0 } ] }
//! ] }
//! ```
//!
//! `file` is relative to the library source root. `entry_hits` is optional;
//! when absent a function counts as reached if any of its branches was hit.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CoverageError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: String,
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionRecord {
    pub file: String,
    pub function: String,
    pub is_public_api: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_hits: Option<u64>,
    #[serde(default)]
    pub branches: Vec<BranchRecord>,
}

impl FunctionRecord {
    pub fn reached(&self) -> bool {
        match self.entry_hits {
            Some(h) => h > 0,
            None => self.branches.iter().any(|b| b.hits > 0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageExport {
    #[serde(default)]
    pub records: Vec<FunctionRecord>,
}

impl CoverageExport {
    pub fn load(path: &Path) -> Result<Self, CoverageError> {
        let text = std::fs::read_to_string(path).map_err(|source| CoverageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CoverageError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let export: CoverageExport =
            serde_json::from_str(text).map_err(|e| CoverageError::Schema {
                locus: format!("line {} column {}", e.line(), e.column()),
                reason: e.to_string(),
            })?;
        export.check()?;
        Ok(export)
    }

    fn check(&self) -> Result<(), CoverageError> {
        let mut seen = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let locus = format!("records[{i}]");
            if r.file.trim().is_empty() {
                return Err(CoverageError::Schema {
                    locus,
                    reason: "empty `file`".into(),
                });
            }
            if r.function.trim().is_empty() {
                return Err(CoverageError::Schema {
                    locus,
                    reason: "empty `function`".into(),
                });
            }
            if !seen.insert((r.file.as_str(), r.function.as_str())) {
                return Err(CoverageError::Schema {
                    locus,
                    reason: format!("duplicate record for {}:{}", r.file, r.function),
                });
            }
            let mut ids = BTreeSet::new();
            for (j, b) in r.branches.iter().enumerate() {
                if !ids.insert(b.id.as_str()) {
                    return Err(CoverageError::Schema {
                        locus: format!("records[{i}].branches[{j}]"),
                        reason: format!("duplicate branch id `{}`", b.id),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_record() {
        let e = CoverageExport::parse(
            r#"{"records":[{"file":"a.c","function":"f","is_public_api":true,
                "branches":[{"id":"1","hits":0},{"id":"2","hits":3}]}]}"#,
        )
        .unwrap();
        assert_eq!(e.records.len(), 1);
        assert!(e.records[0].reached());
    }

    #[test]
    fn empty_document_is_empty_export() {
        assert!(CoverageExport::parse("  \n").unwrap().records.is_empty());
        assert!(CoverageExport::parse("{}").unwrap().records.is_empty());
    }

    #[test]
    fn schema_errors_carry_locus() {
        let err = CoverageExport::parse(r#"{"records":[{"file":"a.c","function":"f"}]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(err.contains("is_public_api"), "{err}");

        let err = CoverageExport::parse(
            r#"{"records":[{"file":"a.c","function":"f","is_public_api":false,
                "branches":[{"id":"x","hits":1},{"id":"x","hits":2}]}]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("records[0].branches[1]"), "{err}");

        let err = CoverageExport::parse(
            r#"{"records":[{"file":"a.c","function":"f","is_public_api":false,"branches":[{"id":"x","hits":-1}]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CoverageError::Schema { .. }));
    }

    #[test]
    fn entry_hits_override_branch_evidence() {
        let r = FunctionRecord {
            file: "a.c".into(),
            function: "f".into(),
            is_public_api: true,
            entry_hits: Some(4),
            branches: vec![],
        };
        assert!(r.reached());
    }
}

//! Public API extraction from header prototypes.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::util::glob_files;

fn strip_comments(text: &str) -> String {
    static BLOCK: OnceLock<Regex> = OnceLock::new();
    static LINE: OnceLock<Regex> = OnceLock::new();
    let block = BLOCK.get_or_init(|| Regex::new(r"(?s)/\*.*?\*/").unwrap());
    let line = LINE.get_or_init(|| Regex::new(r"//[^\n]*").unwrap());
    line.replace_all(&block.replace_all(text, " "), "").into_owned()
}

/// Names of functions declared (not defined) in one header's text, in order.
pub fn declared_functions(text: &str) -> Vec<String> {
    static PROTO: OnceLock<Regex> = OnceLock::new();
    let proto = PROTO.get_or_init(|| {
        Regex::new(r"^[A-Za-z_][\w\s\*]*?[\s\*]([A-Za-z_]\w*)\s*\(").unwrap()
    });
    let text = strip_comments(text);
    // drop preprocessor lines, honouring backslash continuations
    let mut body = String::new();
    let mut in_directive = false;
    for line in text.lines() {
        let t = line.trim_start();
        if in_directive || t.starts_with('#') {
            in_directive = t.ends_with('\\');
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    let body = body.replace("extern \"C\"", " ");
    let mut out = Vec::new();
    for stmt in body.split([';', '{', '}']) {
        let stmt = stmt.split_whitespace().collect::<Vec<_>>().join(" ");
        if stmt.is_empty() || stmt.starts_with("typedef") || stmt.starts_with("static") {
            continue;
        }
        if let Some(c) = proto.captures(&stmt) {
            let name = c[1].to_string();
            if !out.contains(&name) {
                out.push(name);
            }
        }
    }
    out
}

/// `(name, header path)` for every prototype in headers under `root` matching
/// `include_glob`. Header paths are relative to `root`.
pub fn scan_public_api(root: &Path, include_glob: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for rel in glob_files(root, include_glob) {
        let Ok(text) = std::fs::read_to_string(root.join(&rel)) else {
            continue;
        };
        for name in declared_functions(&text) {
            out.push((name, rel.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_prototypes_and_skips_noise() {
        let h = r#"
#ifndef T_H
#define T_H
#define MAX(a, b) ((a) > (b) ? (a) : \
    (b))
#ifdef __cplusplus
extern "C" {
#endif
typedef struct cfg cfg_t;
typedef int (*cb_t)(int);
/* cfg_hidden(void); */
cfg_t *cfg_new(void);
void cfg_free(cfg_t *c);
int
cfg_parse(cfg_t *c,
          const char *text, size_t len); // trailing
static inline int cfg_inline(int x) { return x; }
const char *cfg_get(const cfg_t *c, const char *key);
extern int cfg_version;
#ifdef __cplusplus
}
#endif
#endif
"#;
        assert_eq!(
            declared_functions(h),
            vec!["cfg_new", "cfg_free", "cfg_parse", "cfg_get"]
        );
    }

    #[test]
    fn scans_matching_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("include")).unwrap();
        std::fs::write(dir.path().join("include/a.h"), "int a_run(void);\n").unwrap();
        std::fs::write(dir.path().join("internal.h"), "int hidden(void);\n").unwrap();
        let got = scan_public_api(dir.path(), "include/**/*.h");
        assert_eq!(got, vec![("a_run".to_string(), "include/a.h".to_string())]);
    }
}

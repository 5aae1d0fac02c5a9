//! Greedy harness minimization over the statements of the fuzz entry point.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinimizeError {
    #[error("harness has no LLVMFuzzerTestOneInput body")]
    NoEntryPoint,
    #[error("original harness does not reproduce the crash")]
    NotReproducible,
}

/// A harness split around the top-level statements of its entry function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarnessUnits {
    prefix: String,
    units: Vec<String>,
    suffix: String,
}

impl HarnessUnits {
    pub fn parse(source: &str) -> Result<Self, MinimizeError> {
        let entry = source.find("LLVMFuzzerTestOneInput").ok_or(MinimizeError::NoEntryPoint)?;
        let open = entry + source[entry..].find('{').ok_or(MinimizeError::NoEntryPoint)?;
        let bytes = source.as_bytes();
        let mut units = Vec::new();
        let mut depth = 0i32;
        let mut start = open + 1;
        let mut i = open + 1;
        let mut close = None;
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                b'"' | b'\'' => {
                    i += 1;
                    while i < bytes.len() && bytes[i] != c {
                        if bytes[i] == b'\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                }
                b'/' if bytes.get(i + 1) == Some(&b'/') => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                }
                b'/' if bytes.get(i + 1) == Some(&b'*') => {
                    i += 2;
                    while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                        i += 1;
                    }
                    i += 1;
                }
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' => depth -= 1,
                b'}' => {
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                    depth -= 1;
                    if depth == 0 {
                        let rest = source[i + 1..].trim_start();
                        let stmt = source[start..i + 1].trim_start();
                        let continues = rest.starts_with("else")
                            || rest.starts_with(';')
                            || (stmt.starts_with("do") && rest.starts_with("while"));
                        if !continues {
                            units.push(source[start..i + 1].to_string());
                            start = i + 1;
                        }
                    }
                }
                b';' if depth == 0 => {
                    units.push(source[start..i + 1].to_string());
                    start = i + 1;
                }
                _ => {}
            }
            i += 1;
        }
        let close = close.ok_or(MinimizeError::NoEntryPoint)?;
        let trailing = &source[start..close];
        Ok(Self {
            prefix: source[..open + 1].to_string(),
            units,
            suffix: trailing.to_string() + &source[close..],
        })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// A unit that may be deleted: anything but a `return`.
    pub fn removable(&self, i: usize) -> bool {
        let t = strip_leading_comments(&self.units[i]);
        !(t.starts_with("return") && !t[6..].starts_with(|c: char| c.is_alphanumeric() || c == '_'))
    }

    pub fn removable_count(&self) -> usize {
        (0..self.units.len()).filter(|&i| self.removable(i)).count()
    }

    /// Source text keeping only the units whose index is in `keep`.
    pub fn render(&self, keep: &[bool]) -> String {
        let mut out = self.prefix.clone();
        for (u, k) in self.units.iter().zip(keep) {
            if *k {
                out.push_str(u);
            }
        }
        out.push_str(&self.suffix);
        out
    }
}

fn strip_leading_comments(s: &str) -> &str {
    let mut t = s.trim_start();
    loop {
        if let Some(r) = t.strip_prefix("//") {
            t = r.split_once('\n').map(|x| x.1).unwrap_or("").trim_start();
        } else if let Some(r) = t.strip_prefix("/*") {
            t = r.split_once("*/").map(|x| x.1).unwrap_or("").trim_start();
        } else {
            return t;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minimized {
    pub source: String,
    /// Which entry-point statements survived, by original index.
    pub kept: Vec<bool>,
    pub removed: usize,
}

/// Deletes one removable statement at a time, keeping a deletion only when the
/// crash still reproduces, until no single deletion does.
pub fn minimize_harness(
    source: &str,
    reproduce: &mut dyn FnMut(&str) -> bool,
) -> Result<Minimized, MinimizeError> {
    let h = HarnessUnits::parse(source)?;
    if !reproduce(source) {
        return Err(MinimizeError::NotReproducible);
    }
    let mut keep = vec![true; h.units().len()];
    loop {
        let mut changed = false;
        for i in 0..keep.len() {
            if !keep[i] || !h.removable(i) {
                continue;
            }
            keep[i] = false;
            if reproduce(&h.render(&keep)) {
                changed = true;
            } else {
                keep[i] = true;
            }
        }
        if !changed {
            break;
        }
    }
    let removed = keep.iter().filter(|k| !**k).count();
    Ok(Minimized {
        source: h.render(&keep),
        kept: keep,
        removed,
    })
}

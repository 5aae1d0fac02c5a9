use std::collections::BTreeMap;

use super::ToolFailure;

/// Typed access to a tool call's string arguments.
#[derive(Debug, Clone, Copy)]
pub struct Args<'a>(pub &'a BTreeMap<String, String>);

impl<'a> Args<'a> {
    pub fn req(&self, name: &str) -> Result<&'a str, ToolFailure> {
        self.0
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| ToolFailure::bad_args(format!("missing required argument `{name}`")))
    }

    pub fn opt(&self, name: &str) -> Option<&'a str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn opt_num<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, ToolFailure> {
        match self.opt(name) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| ToolFailure::bad_args(format!("argument `{name}` must be a number, got `{v}`"))),
        }
    }

    pub fn req_num<T: std::str::FromStr>(&self, name: &str) -> Result<T, ToolFailure> {
        self.req(name)?;
        Ok(self.opt_num(name)?.expect("present"))
    }

    /// Comma- or newline-separated list; empty when absent.
    pub fn list(&self, name: &str) -> Vec<String> {
        self.opt(name)
            .map(|v| {
                v.split([',', '\n'])
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Newline-separated entries, kept verbatim apart from trimming.
    pub fn lines(&self, name: &str) -> Vec<String> {
        self.opt(name)
            .map(|v| {
                v.lines()
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }
}

//! Line-oriented `key = value` text files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat; the
//! order of entries is preserved.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        self.entries.push((key, value.to_string()));
        self
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require<T: FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::format(path, format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::format(path, format!("cannot parse `{key}` = `{raw}`")))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(path, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_render_roundtrip() {
        let mut kv = KeyValues::new();
        kv.push("seed", 42).push("file", "a.lbmf").push("file", "b.lbmf");
        let parsed = KeyValues::parse(&kv.render(), Path::new("m")).unwrap();
        assert_eq!(parsed, kv);
        assert_eq!(parsed.get_all("file").collect::<Vec<_>>(), ["a.lbmf", "b.lbmf"]);
        assert_eq!(parsed.require::<u64>("seed", Path::new("m")).unwrap(), 42);
    }

    #[test]
    fn comments_and_errors() {
        let kv = KeyValues::parse("# hi\n\n a = 1 \n", Path::new("m")).unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert!(KeyValues::parse("nonsense\n", Path::new("m")).is_err());
        assert!(kv.require::<u32>("b", Path::new("m")).is_err());
    }
}

//! CWE knowledge base: id, short name, definition, and related-CWE aliases.
//!
//! A snapshot of the catalog entries relevant to the task corpus ships with
//! the crate as `data/cwe_kb.json`; reproducibility is preferred over
//! freshness, so nothing is fetched at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_KB: &str = include_str!("../../data/cwe_kb.json");

/// One catalog entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CweInfo {
    pub cwe_id: u32,
    /// Short display name, e.g. "SQL Injection".
    pub name: String,
    /// One-paragraph description of the weakness.
    pub definition: String,
    /// Related CWE ids (parent/child/equivalent in the hierarchy).
    #[serde(default)]
    pub aliases: Vec<u32>,
}

/// Indexed knowledge base.
#[derive(Debug, Clone)]
pub struct CweKb {
    entries: BTreeMap<u32, CweInfo>,
}

impl CweKb {
    /// The knowledge base bundled with the crate.
    pub fn bundled() -> &'static CweKb {
        static KB: OnceLock<CweKb> = OnceLock::new();
        KB.get_or_init(|| CweKb::from_json(BUNDLED_KB).expect("bundled CWE data is valid"))
    }

    pub fn from_json(text: &str) -> Result<CweKb> {
        let entries: Vec<CweInfo> =
            serde_json::from_str(text).map_err(|e| Error::JsonParse(e.to_string()))?;
        let mut map = BTreeMap::new();
        for info in entries {
            if info.definition.trim().is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "CWE-{} has an empty definition",
                    info.cwe_id
                )));
            }
            if map.insert(info.cwe_id, info.clone()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "CWE-{} appears twice in the knowledge base",
                    info.cwe_id
                )));
            }
        }
        Ok(CweKb { entries: map })
    }

    pub fn load(path: &Path) -> Result<CweKb> {
        if !path.exists() {
            return Err(Error::PathNotFound(path.to_path_buf()));
        }
        CweKb::from_json(&std::fs::read_to_string(path)?)
    }

    /// Look up a CWE entry by id.
    pub fn lookup(&self, cwe_id: u32) -> Result<&CweInfo> {
        self.entries.get(&cwe_id).ok_or(Error::UnknownCwe(cwe_id))
    }

    pub fn contains(&self, cwe_id: u32) -> bool {
        self.entries.contains_key(&cwe_id)
    }

    /// The alias set of `cwe_id`: declared aliases plus every entry that
    /// declares `cwe_id` as one of its aliases. Does not include the id itself.
    pub fn aliases(&self, cwe_id: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        if let Some(info) = self.entries.get(&cwe_id) {
            out.extend(info.aliases.iter().copied());
        }
        for (id, info) in &self.entries {
            if info.aliases.contains(&cwe_id) {
                out.insert(*id);
            }
        }
        out.remove(&cwe_id);
        out
    }

    /// `cwe_id` itself plus its alias set.
    pub fn alias_closure(&self, cwe_id: u32) -> BTreeSet<u32> {
        let mut out = self.aliases(cwe_id);
        out.insert(cwe_id);
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CweInfo> {
        self.entries.values()
    }
}

/// Look up a CWE in the knowledge base.
pub fn lookup_cwe(cwe_id: u32, kb: &CweKb) -> Result<&CweInfo> {
    kb.lookup(cwe_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_sql_injection() {
        let kb = CweKb::bundled();
        let info = lookup_cwe(89, kb).unwrap();
        assert_eq!(info.name, "SQL Injection");
        assert!(!info.definition.is_empty());
    }

    #[test]
    fn lookup_zero_is_unknown() {
        let kb = CweKb::bundled();
        assert!(matches!(lookup_cwe(0, kb), Err(Error::UnknownCwe(0))));
    }

    #[test]
    fn hardcoded_credentials_alias_password() {
        let kb = CweKb::bundled();
        let info = lookup_cwe(798, kb).unwrap();
        assert!(info.aliases.contains(&259));
        // symmetric view
        assert!(kb.aliases(259).contains(&798));
    }

    #[test]
    fn alias_closure_contains_self() {
        let kb = CweKb::bundled();
        let closure = kb.alias_closure(327);
        assert!(closure.contains(&327));
        assert!(closure.contains(&328));
    }

    #[test]
    fn unknown_cwe_has_empty_alias_set() {
        let kb = CweKb::bundled();
        assert!(kb.aliases(999_999).is_empty());
    }

    /// Reads the shipped data file directly, independent of the loader, so
    /// the alias table itself is what's checked.
    #[test]
    fn shipped_data_file_declares_credential_aliases() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cwe_kb.json");
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let entry = raw
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["cwe_id"] == 798)
            .expect("CWE-798 is in the shipped file");
        let aliases: Vec<u64> = entry["aliases"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        assert!(aliases.contains(&259));
        // every definition in the file is non-empty prose
        for entry in raw.as_array().unwrap() {
            assert!(!entry["definition"].as_str().unwrap().trim().is_empty());
        }
    }
}

//! Design spaces described in TOML.
//!
//! ```toml
//! preset = "synthetic-36"
//! caches = ["small", "medium", "large"]
//! threads = [8]
//! limit = 100000000
//! perms = "all"                 # or [0, 17, 719], or { sample = 80, seed = 3 }
//!
//! [[layer]]
//! id = "mine"
//! dims = "256,32,28,28,3,3"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::cache::CacheConfig;
use crate::error::{Error, Result};
use crate::trace::{Sparsity, DEFAULT_BODY_COST};

use super::{presets, DesignSpace, NamedLayer, PermSelection};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PermSpec {
    Named(String),
    List(Vec<usize>),
    Sample { sample: usize, seed: Option<u64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    id: String,
    dims: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CacheEntry {
    Preset(String),
    Full(CacheConfig),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    preset: Option<String>,
    #[serde(default)]
    layer: Vec<LayerEntry>,
    #[serde(default)]
    caches: Vec<CacheEntry>,
    #[serde(default)]
    threads: Vec<usize>,
    limit: Option<u64>,
    perms: Option<PermSpec>,
    partial_sums: Option<bool>,
    body_cost: Option<u32>,
    sparsity: Option<Sparsity>,
}

impl SpaceFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("design space: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Builds and validates the space.
    pub fn into_space(self, seed: u64) -> Result<DesignSpace> {
        let space = self.build(seed)?;
        space.validate()?;
        Ok(space)
    }

    /// Builds the space without validating it, so callers can add layers or
    /// override axes first. `seed` fills in random-replacement and sampling
    /// seeds the file leaves unset. Missing axes default to the reference
    /// hierarchy and one thread.
    pub fn build(self, seed: u64) -> Result<DesignSpace> {
        let mut layers = match &self.preset {
            Some(name) => presets::preset(name)?,
            None => Vec::new(),
        };
        for entry in self.layer {
            layers.push(NamedLayer::new(&entry.id, entry.dims.parse()?));
        }
        let mut configs = Vec::new();
        for c in self.caches {
            configs.push(match c {
                CacheEntry::Preset(name) => CacheConfig::preset(&name, seed)?,
                CacheEntry::Full(cfg) => cfg,
            });
        }
        if configs.is_empty() {
            configs.push(CacheConfig::loki(seed));
        }
        let threads = if self.threads.is_empty() { vec![1] } else { self.threads };
        let perms = match self.perms {
            None => PermSelection::All,
            Some(PermSpec::Named(s)) if s == "all" => PermSelection::All,
            Some(PermSpec::Named(s)) => {
                return Err(Error::Parse(format!(
                    "perms: expected \"all\", a list or a sample table, got `{s}`"
                )))
            }
            Some(PermSpec::List(v)) => PermSelection::List(v),
            Some(PermSpec::Sample { sample, seed: s }) => PermSelection::Sample {
                size: sample,
                seed: s.unwrap_or(seed),
            },
        };
        Ok(DesignSpace {
            layers,
            perms,
            configs,
            thread_counts: threads,
            instr_limit: self.limit,
            partial_sums: self.partial_sums.unwrap_or(true),
            body_cost: self.body_cost.unwrap_or(DEFAULT_BODY_COST),
            sparsity: self.sparsity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_example() {
        let text = r#"
preset = "synthetic-36"
caches = ["small", "medium", "large"]
threads = [8]
limit = 100000000
perms = { sample = 80, seed = 3 }

[[layer]]
id = "mine"
dims = "256,32,28,28,3,3"
"#;
        let space = SpaceFile::parse(text).unwrap().into_space(1).unwrap();
        assert_eq!(space.layers.len(), 37);
        assert_eq!(space.configs.len(), 3);
        assert_eq!(space.run_count().unwrap(), 37 * 3 * 80);
        assert_eq!(space.instr_limit, Some(100_000_000));
    }

    #[test]
    fn defaults_and_explicit_lists() {
        let text = "perms = [0, 3]\n[[layer]]\nid = \"x\"\ndims = \"2,2,3,3,1,1\"\n";
        let space = SpaceFile::parse(text).unwrap().into_space(9).unwrap();
        assert_eq!(space.configs[0].id, "loki");
        assert_eq!(space.thread_counts, vec![1]);
        assert_eq!(space.perms, PermSelection::List(vec![0, 3]));
    }

    #[test]
    fn rejects_unknown_keys_and_presets() {
        assert!(SpaceFile::parse("colour = 3").is_err());
        assert!(SpaceFile::parse("preset = \"vgg\"").unwrap().into_space(1).is_err());
        assert!(SpaceFile::parse("perms = \"some\"\npreset = \"squeezenet\"")
            .unwrap()
            .into_space(1)
            .is_err());
        // no layers at all
        assert!(SpaceFile::parse("").unwrap().into_space(1).is_err());
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::ScoreNode;
use crate::error::{Error, Result};

/// Weight overrides keyed by dot-path node id.
///
/// The file is JSON. Nested objects are flattened into dot-paths, and a
/// `"weight"` key inside an object sets the weight of that object's own path:
///
/// ```json
/// { "sustainability": { "carbon_intensity": { "weight": 0.5, "client": 0.5, "server": 0.5 } } }
/// ```
///
/// is equivalent to
///
/// ```json
/// { "sustainability.carbon_intensity": 0.5,
///   "sustainability.carbon_intensity.client": 0.5,
///   "sustainability.carbon_intensity.server": 0.5 }
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightConfig {
    pub weights: BTreeMap<String, f64>,
}

impl WeightConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "weight config".into(),
            source,
        })?;
        let Value::Object(_) = value else {
            return Err(Error::invalid("weights", "top level must be a JSON object"));
        };
        let mut weights = BTreeMap::new();
        flatten("", &value, &mut weights)?;
        Ok(WeightConfig { weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Drops entries whose id has no dot, i.e. pillar weights under the root.
    pub fn without_pillar_weights(&self) -> Self {
        WeightConfig {
            weights: self
                .weights
                .iter()
                .filter(|(k, _)| k.contains('.'))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    /// Overwrites node weights in `tree`, then re-validates it.
    pub fn apply_to(&self, tree: &mut ScoreNode) -> Result<()> {
        for (id, weight) in &self.weights {
            let node = tree
                .find_mut(id)
                .ok_or_else(|| Error::invalid(format!("weights.{id}"), "unknown node id"))?;
            node.weight = *weight;
        }
        tree.validate()
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, f64>) -> Result<()> {
    match value {
        Value::Object(map) => {
            for (key, child) in map {
                if key == "weight" {
                    if prefix.is_empty() {
                        return Err(Error::invalid("weights", "`weight` needs an enclosing node"));
                    }
                    insert(prefix, child, out)?;
                } else {
                    let path = if prefix.is_empty() {
                        key.clone()
                    } else {
                        format!("{prefix}.{key}")
                    };
                    flatten(&path, child, out)?;
                }
            }
            Ok(())
        }
        _ => insert(prefix, value, out),
    }
}

fn insert(path: &str, value: &Value, out: &mut BTreeMap<String, f64>) -> Result<()> {
    let w = value
        .as_f64()
        .ok_or_else(|| Error::invalid(format!("weights.{path}"), "weight must be a number"))?;
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::invalid(format!("weights.{path}"), format!("{w} must be non-negative")));
    }
    if out.insert(path.to_string(), w).is_some() {
        return Err(Error::invalid(format!("weights.{path}"), "given more than once"));
    }
    Ok(())
}

//! Loading experiment configurations and applying `key=value` overrides.

use std::path::Path;

use lookahes_core::runner::ExperimentConfig;
use toml::Value;

use crate::CliError;

/// Read a TOML configuration, or the `config` field of a previous run's
/// `summary.json`.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = doc
            .get("config")
            .ok_or_else(|| CliError::Config(format!("{}: no `config` field", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_value(cfg.clone()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return finish(cfg);
    }
    let doc: Value = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    from_value(doc)
}

pub fn from_value(doc: Value) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    finish(cfg)
}

fn finish(cfg: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Parse an override value as a TOML literal, falling back to a bare
/// string (`ei`, `spotlight`).
pub fn parse_literal(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Set `table.key.sub = value` in a configuration document, creating
/// intermediate tables.
pub fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a table")))?;
        node = table.entry(part.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| CliError::Config(format!("{key}: parent is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A sweep axis: `key=v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for GridAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, values) = s.split_once('=').ok_or_else(|| format!("expected key=v1,v2,..., got {s:?}"))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if key.trim().is_empty() || values.is_empty() {
            return Err(format!("expected key=v1,v2,..., got {s:?}"));
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Cartesian product of the axes, as lists of `(key, value)` overrides.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        assert_eq!(parse_literal("3"), Value::Integer(3));
        assert_eq!(parse_literal("0.5"), Value::Float(0.5));
        assert_eq!(parse_literal("ei"), Value::String("ei".into()));
        assert_eq!(parse_literal("true"), Value::Boolean(true));
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let mut doc: Value = toml::from_str("[acquisition]\nkind = \"ei\"\n").unwrap();
        set_path(&mut doc, "acquisition.horizon", parse_literal("5")).unwrap();
        set_path(&mut doc, "cost.kind", parse_literal("spotlight")).unwrap();
        let cfg = from_value(doc).unwrap();
        assert_eq!(cfg.acquisition.horizon, 5);
        assert_eq!(cfg.cost.kind, lookahes_core::CostKind::Spotlight);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc: Value = toml::from_str("[acquisition]\nhorizn = 5\n").unwrap();
        let err = from_value(doc).unwrap_err().to_string();
        assert!(err.contains("horizn"), "{err}");
    }

    #[test]
    fn grid_product() {
        let axes: Vec<GridAxis> = ["a.b=1,2", "c.d=x,y,z"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(grid_cells(&axes).len(), 6);
        assert_eq!(grid_cells(&[]).len(), 1);
    }
}

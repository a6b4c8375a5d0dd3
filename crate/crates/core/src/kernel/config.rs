//! Declarative module configuration.
//!
//! ```xml
//! <tms>
//!   <module id="congestion" factory="congestion">
//!     <param key="penalty_factor" value="2.0"/>
//!   </module>
//!   <module id="route_advisor" factory="route_advisor">
//!     <depends>congestion</depends>
//!   </module>
//! </tms>
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::depgraph::{self, CycleError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpec {
    pub module_id: String,
    pub factory_id: String,
    /// Modules that initialize and execute before this one.
    pub dependencies: Vec<String>,
    pub params: BTreeMap<String, String>,
}

impl ModuleSpec {
    pub fn new(module_id: impl Into<String>, factory_id: impl Into<String>) -> Self {
        ModuleSpec {
            module_id: module_id.into(),
            factory_id: factory_id.into(),
            dependencies: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn depends_on(mut self, module_id: impl Into<String>) -> Self {
        self.dependencies.push(module_id.into());
        self
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed module configuration: {0}")]
    Parse(String),
    #[error("module id {0} is declared more than once")]
    DuplicateModuleId(String),
    #[error("module {module} depends on undeclared module {dependency}")]
    UnknownDependency { module: String, dependency: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_module_config(path: impl AsRef<Path>) -> Result<Vec<ModuleSpec>, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_module_config(&text)
}

/// Parses and validates a configuration document. Specs come back in file
/// order.
pub fn parse_module_config(text: &str) -> Result<Vec<ModuleSpec>, ConfigError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "tms" {
        return Err(ConfigError::Parse(format!(
            "root element must be <tms>, found <{}>",
            root.tag_name().name()
        )));
    }
    let mut specs = Vec::new();
    for node in root.children().filter(|n| n.is_element()) {
        if node.tag_name().name() != "module" {
            return Err(ConfigError::Parse(format!("unexpected <{}> in <tms>", node.tag_name().name())));
        }
        let attr = |name: &str| -> Result<String, ConfigError> {
            match node.attribute(name).map(str::trim) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(ConfigError::Parse(format!("<module> is missing a non-empty {name} attribute"))),
            }
        };
        let mut spec = ModuleSpec::new(attr("id")?, attr("factory")?);
        for child in node.children().filter(|n| n.is_element()) {
            match child.tag_name().name() {
                "depends" => {
                    let dep = child.text().unwrap_or("").trim();
                    if dep.is_empty() {
                        return Err(ConfigError::Parse(format!("empty <depends> in module {}", spec.module_id)));
                    }
                    if spec.dependencies.iter().any(|d| d == dep) {
                        return Err(ConfigError::Parse(format!(
                            "module {} lists dependency {dep} twice",
                            spec.module_id
                        )));
                    }
                    spec.dependencies.push(dep.to_string());
                }
                "param" => {
                    let key = child
                        .attribute("key")
                        .filter(|k| !k.is_empty())
                        .ok_or_else(|| ConfigError::Parse(format!("<param> without key in module {}", spec.module_id)))?;
                    let value = child.attribute("value").unwrap_or("");
                    spec.params.insert(key.to_string(), value.to_string());
                }
                other => {
                    return Err(ConfigError::Parse(format!(
                        "unexpected <{other}> in module {}",
                        spec.module_id
                    )))
                }
            }
        }
        specs.push(spec);
    }
    validate_specs(&specs)?;
    Ok(specs)
}

/// Checks id uniqueness and that every dependency is declared.
pub fn validate_specs(specs: &[ModuleSpec]) -> Result<(), ConfigError> {
    let mut ids = HashSet::new();
    for s in specs {
        if !ids.insert(s.module_id.as_str()) {
            return Err(ConfigError::DuplicateModuleId(s.module_id.clone()));
        }
    }
    for s in specs {
        if let Some(d) = s.dependencies.iter().find(|d| !ids.contains(d.as_str())) {
            return Err(ConfigError::UnknownDependency {
                module: s.module_id.clone(),
                dependency: d.clone(),
            });
        }
    }
    Ok(())
}

/// Initialization and execution order of `specs`.
pub fn topological_module_order(specs: &[ModuleSpec]) -> Result<Vec<String>, CycleError> {
    depgraph::topological_order(
        specs
            .iter()
            .map(|s| (s.module_id.as_str(), s.dependencies.iter().map(String::as_str))),
    )
}

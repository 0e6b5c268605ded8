//! JSON model files.
//!
//! ```json
//! {"n_sites": 2, "epsilon": [-0.85, 0.0],
//!  "hoppings": [{"i": 1, "j": 2, "t": 1.0}],
//!  "leads": [{"site": 2, "coupling": 1.0, "label": "L"},
//!            {"site": 2, "coupling": 1.0, "label": "R"}]}
//! ```
//!
//! Sites are 1-based. An optional `dot_matrix` (row-major, `n_sites` rows)
//! replaces `epsilon` and `hoppings`.

use std::path::Path;

use resonance_core::model::{Hopping, LeadSpec};
use resonance_core::{ModelDescription, OpenLatticeModel};
use serde::{Deserialize, Serialize};

use crate::error::{KitError, KitResult};

/// One hopping entry.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HoppingEntry {
    /// First site.
    pub i: usize,
    /// Second site.
    pub j: usize,
    /// Hopping; the matrix element is `-t`.
    pub t: f64,
}

/// One lead entry.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LeadEntry {
    /// Dot site.
    pub site: usize,
    /// Coupling.
    pub coupling: f64,
    /// Label.
    pub label: String,
}

/// File layout.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Number of dot sites.
    pub n_sites: usize,
    /// On-site energies.
    #[serde(default)]
    pub epsilon: Vec<f64>,
    /// Hoppings, once per pair.
    #[serde(default)]
    pub hoppings: Vec<HoppingEntry>,
    /// Leads.
    pub leads: Vec<LeadEntry>,
    /// Full dot matrix, overrides `epsilon`/`hoppings`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dot_matrix: Option<Vec<Vec<f64>>>,
}

impl From<&ModelFile> for ModelDescription {
    fn from(f: &ModelFile) -> Self {
        ModelDescription {
            n_sites: f.n_sites,
            epsilon: f.epsilon.clone(),
            hoppings: f.hoppings.iter().map(|h| Hopping { i: h.i, j: h.j, t: h.t }).collect(),
            leads: f
                .leads
                .iter()
                .map(|l| LeadSpec { site: l.site, coupling: l.coupling, label: l.label.clone() })
                .collect(),
            dot_matrix: f.dot_matrix.clone(),
        }
    }
}

impl From<&ModelDescription> for ModelFile {
    fn from(d: &ModelDescription) -> Self {
        ModelFile {
            n_sites: d.n_sites,
            epsilon: d.epsilon.clone(),
            hoppings: d.hoppings.iter().map(|h| HoppingEntry { i: h.i, j: h.j, t: h.t }).collect(),
            leads: d
                .leads
                .iter()
                .map(|l| LeadEntry { site: l.site, coupling: l.coupling, label: l.label.clone() })
                .collect(),
            dot_matrix: d.dot_matrix.clone(),
        }
    }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> KitResult<OpenLatticeModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    Ok(OpenLatticeModel::from_description(&ModelDescription::from(&file))?)
}

/// Reads and validates a model file.
pub fn load_model(path: &Path) -> KitResult<OpenLatticeModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| KitError::Input(format!("cannot read model file {}: {e}", path.display())))?;
    parse_model(&text)
}

/// Pretty JSON for a model.
pub fn model_to_json(model: &OpenLatticeModel) -> String {
    let f = ModelFile::from(&model.to_description());
    serde_json::to_string_pretty(&f).expect("model serializes")
}

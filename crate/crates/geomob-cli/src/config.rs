//! Pipeline configuration: one JSON document, one section per stage.
//!
//! Unknown keys anywhere are rejected so typos fail fast. Every section is
//! optional and falls back to its stage's defaults. A `--seed` on the
//! command line re-derives every stage seed from the global one; otherwise
//! the per-stage seeds in the file apply verbatim.

use geomob::align::AlignConfig;
use geomob::distill::DistillConfig;
use geomob::hexgrid::GridConfig;
use geomob::lightgcn::NormMode;
use geomob::line::LineConfig;
use geomob::probe::ProbeConfig;
use geomob::rng::derive_seed;
use geomob::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSection {
    pub layers: usize,
    pub norm_mode: NormMode,
}

impl Default for GcnSection {
    fn default() -> Self {
        GcnSection { layers: 2, norm_mode: NormMode::Symmetric }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Topk,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub ratio: f64,
    pub mode: SampleMode,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { ratio: 0.10, mode: SampleMode::Topk, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub grid: GridConfig,
    pub synth: SynthConfig,
    pub sample: SampleSection,
    pub line: LineConfig,
    pub lightgcn: GcnSection,
    pub align: AlignConfig,
    pub probe: ProbeConfig,
    pub distill: DistillConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))
            }
        }
    }

    /// Re-derive every stage seed from one global seed.
    pub fn apply_global_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = derive_seed(seed, 0x01);
        self.sample.seed = derive_seed(seed, 0x02);
        self.line.seed = derive_seed(seed, 0x03);
        self.align.seed = derive_seed(seed, 0x04);
        self.probe.seed = derive_seed(seed, 0x05);
        self.distill.seed = derive_seed(seed, 0x06);
    }
}

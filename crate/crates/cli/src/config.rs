//! Run configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use qdpurify::analysis::AnalysisSettings;
use qdpurify::sweeper::{DarkPolicy, GateEdge};
use qdpurify::{DetectionChain, EmitterModel, ModulationWaveform, PulseTrainConfig};
use serde::{Deserialize, Serialize};

/// Bad invocation or configuration. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub emitter: EmitterModel,
    pub train: PulseTrainConfig,
    pub chain: DetectionChain,
    pub waveform: ModulationWaveform,
    pub analysis: AnalysisSettings,
    /// Output directory; `--out` takes precedence.
    pub output: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub sample: SampleRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// Gate offsets at the train's power.
    Offset {
        edge: GateEdge,
        offsets: Vec<f64>,
        #[serde(default)]
        dark: DarkPolicy,
    },
    /// Excitation powers with the configured waveform.
    Power {
        powers: Vec<f64>,
        #[serde(default)]
        dark: DarkPolicy,
    },
}

/// Time grid for `waveform sample`, ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleRange {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for SampleRange {
    fn default() -> Self {
        Self { start: 0.0, end: 1000.0, step: 1.0 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> qdpurify::Result<()> {
        self.emitter.validate()?;
        self.train.validate()?;
        self.chain.validate()?;
        self.waveform.validate()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// 1-based line of a dotted key path, matching each segment after the previous one.
fn locate(text: &str, field: &str) -> Option<usize> {
    let mut pos = 0;
    for seg in field.split('.') {
        pos += text[pos..].find(&format!("\"{seg}\""))?;
    }
    Some(text[..pos].matches('\n').count() + 1)
}

pub fn parse(text: &str, origin: &str) -> Result<RunConfig, UsageError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let full = inner.to_string();
        let msg = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m);
        let path = e.path().to_string();
        let at = if path == "." { String::new() } else { format!(" {path}:") };
        UsageError(format!("{origin}:{}:{}:{at} {msg}", inner.line(), inner.column()))
    })?;
    cfg.validate().map_err(|e| match &e {
        qdpurify::Error::InvalidConfig { field, .. } => match locate(text, field) {
            Some(line) => UsageError(format!("{origin}:{line}: {e}")),
            None => UsageError(format!("{origin}: {e}")),
        },
        _ => UsageError(format!("{origin}: {e}")),
    })?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, UsageError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(parse("{}", "c").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_path_and_line() {
        let e = parse("{\n  \"chain\": {\n    \"efficency\": 0.1\n  }\n}", "c.json").unwrap_err();
        assert!(e.0.starts_with("c.json:3:"), "{}", e.0);
        assert!(e.0.contains("chain.efficency"), "{}", e.0);
    }

    #[test]
    fn bad_waveform_kind_is_reported() {
        let e = parse("{\"waveform\": {\"kind\": \"triangle\"}}", "c.json").unwrap_err();
        assert!(e.0.contains("waveform"), "{}", e.0);
        assert!(e.0.contains("triangle"), "{}", e.0);
    }

    #[test]
    fn semantic_error_is_line_anchored() {
        let e = parse("{\n\"chain\": {\n\"efficiency\": 2.0}}", "c.json").unwrap_err();
        assert!(e.0.starts_with("c.json:3:"), "{}", e.0);
        assert!(e.0.contains("chain.efficiency"), "{}", e.0);
    }

    #[test]
    fn sweep_section_round_trips() {
        let text =
            r#"{"sweep": {"kind": "offset", "edge": {"kind": "smoothed", "rise_time": 50}, "offsets": [16, 30]}}"#;
        let cfg = parse(text, "c").unwrap();
        let back = parse(&cfg.to_json_line(), "c").unwrap();
        assert_eq!(cfg, back);
    }
}

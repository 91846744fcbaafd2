//! JSON run configuration. Command-line flags override every field.

use std::path::{Path, PathBuf};

use occbench::augment::AugmentParams;
use occbench::occlusion::{OccluderConfig, OccluderKind, Split};
use occbench::sweep::ReferencePredictor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Default output root when neither `--out` nor `output_dir` is given; each
/// command writes to a subdirectory named after itself.
pub const OUT_DIR_ENV: &str = "OCCBENCH_OUT_DIR";

pub const DEFAULT_CROP_SIZE: u32 = 256;
pub const DEFAULT_COVERAGE: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub crop_size: Option<u32>,
    pub coverage: Option<f64>,
    /// Single occlusion for `occlude` and `augment`.
    pub kind: Option<OccluderKind>,
    pub degree: Option<f64>,
    pub occlusion_probability: Option<f64>,
    pub augment: Option<AugmentParams>,
    pub kinds: Option<Vec<OccluderKind>>,
    pub degrees: Option<Vec<f64>>,
    pub include_root: Option<bool>,
    pub object_split: Option<Split>,
    pub occluders: Option<OccluderConfig>,
    pub samples_per_cell: Option<usize>,
    pub predictors: Vec<PredictorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: ReferencePredictor,
}

impl PredictorEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.spec.default_label())
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut cfg.manifest);
        fix(&mut cfg.library);
        fix(&mut cfg.output_dir);
        for p in &mut cfg.predictors {
            if let ReferencePredictor::NnBaseline { train_manifest } = &mut p.spec {
                if train_manifest.is_relative() {
                    *train_manifest = base.join(&*train_manifest);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// `flag`, else `config`, else a validation error naming the flag.
pub fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> CliResult<T> {
    flag.or(config).ok_or_else(|| CliError::Validation(format!("--{name} is required (flag or config)")))
}

pub fn existing(path: PathBuf, what: &str) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Validation(format!("{what} {} does not exist", path.display())))
    }
}

pub fn output_dir(flag: Option<PathBuf>, config: Option<PathBuf>, command: &str) -> CliResult<PathBuf> {
    let dir = flag
        .or(config)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|root| PathBuf::from(root).join(command)))
        .ok_or_else(|| CliError::Validation(format!("--out is required (or set {OUT_DIR_ENV})")))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

/// Parses `[label=]oracle`, `noisy_oracle:SIGMA`, `occlusion_mock:BASE,SENS[,RADIUS]`
/// or `nn_baseline:TRAIN_MANIFEST`.
pub fn parse_predictor(text: &str) -> Result<PredictorEntry, String> {
    let (label, spec) = match text.split_once('=') {
        Some((l, s)) => (Some(l.trim().to_string()), s.trim()),
        None => (None, text.trim()),
    };
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> Result<Vec<f64>, String> {
        args.split(',')
            .filter(|a| !a.is_empty())
            .map(|a| a.trim().parse::<f64>().map_err(|e| format!("{a:?}: {e}")))
            .collect()
    };
    let spec = match name.replace('-', "_").as_str() {
        "oracle" => ReferencePredictor::Oracle,
        "noisy_oracle" => match nums()?[..] {
            [sigma_mm] => ReferencePredictor::NoisyOracle { sigma_mm },
            _ => return Err("noisy_oracle takes one argument, SIGMA_MM".into()),
        },
        "occlusion_mock" => match nums()?[..] {
            [base_mm, sensitivity_mm] => ReferencePredictor::OcclusionMock { base_mm, sensitivity_mm, radius_px: None },
            [base_mm, sensitivity_mm, r] => ReferencePredictor::OcclusionMock { base_mm, sensitivity_mm, radius_px: Some(r) },
            _ => return Err("occlusion_mock takes BASE_MM,SENSITIVITY_MM[,RADIUS_PX]".into()),
        },
        "nn_baseline" if !args.is_empty() => ReferencePredictor::NnBaseline { train_manifest: PathBuf::from(args) },
        "nn_baseline" => return Err("nn_baseline needs a training manifest: nn_baseline:PATH".into()),
        other => return Err(format!("unknown predictor {other:?}")),
    };
    Ok(PredictorEntry { label, spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictor_flags_parse() {
        assert_eq!(parse_predictor("oracle").unwrap().spec, ReferencePredictor::Oracle);
        let p = parse_predictor("no aug=occlusion_mock:40,200").unwrap();
        assert_eq!(p.label(), "no aug");
        assert_eq!(p.spec, ReferencePredictor::OcclusionMock { base_mm: 40.0, sensitivity_mm: 200.0, radius_px: None });
        assert_eq!(parse_predictor("noisy-oracle:10").unwrap().label(), "noisy_oracle_10");
        assert!(parse_predictor("noisy_oracle").is_err());
        assert!(parse_predictor("nn_baseline").is_err());
        assert!(parse_predictor("resnet").is_err());
    }

    #[test]
    fn config_predictors_take_optional_labels() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"seed": 3, "predictors": [
                {"type": "oracle"},
                {"label": "A", "type": "occlusion_mock", "base_mm": 40, "sensitivity_mm": 200}
            ]}"#,
        )
        .unwrap();
        assert_eq!(cfg.predictors[0].label(), "oracle");
        assert_eq!(cfg.predictors[1].label(), "A");
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
    }
}

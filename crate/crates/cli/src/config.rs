//! Run configuration: a flat `key = value` file merged with command-line
//! flags (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fasctrack::architecture::{Aggregation, PipelineConfig, PostProcessConfig};
use fasctrack::ingest::DEFAULT_DECODER;
use fasctrack::{Calibration, MaskTemplate};
use thiserror::Error;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "FASCTRACK_CONFIG";

/// Every key accepted in a config file.
pub const KEYS: &[&str] = &[
    "image",
    "video",
    "apo_model",
    "fasc_model",
    "masks_from",
    "mm_per_px",
    "mm_per_px_x",
    "mm_per_px_y",
    "apo_min_length",
    "fasc_min_length",
    "threshold",
    "slope_bound",
    "thickness_band",
    "aggregate",
    "gap_fill",
    "overlays",
    "out",
    "workers",
    "fps",
    "decoder",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("missing calibration: pass --mm-per-px (or both --mm-per-px-x and --mm-per-px-y)")]
    MissingCalibration,
    #[error("{0}")]
    Other(String),
    #[error("{path}:{line}: {message}")]
    File {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Raw key/value settings before validation.
pub type Settings = BTreeMap<String, String>;

/// Parse `key = value` lines. Blank lines and `#` comments are ignored;
/// dashes in keys are accepted as underscores.
pub fn parse_config_text(text: &str, path: &Path) -> Result<Settings, ConfigError> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let file_err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| file_err(format!("expected key=value, got `{line}`")))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(file_err(format!("unknown key `{key}`")));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Other(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text, path)
}

/// File settings overridden by flag settings.
pub fn merge(file: Settings, flags: Settings) -> Settings {
    let mut merged = file;
    merged.extend(flags);
    merged
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Image(PathBuf),
    /// A directory of numbered frames, or a video file for the decoder.
    Video(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Models { aponeurosis: PathBuf, fascicle: PathBuf },
    Masks(MaskTemplate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSpec,
    pub backend: BackendSpec,
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    pub overlays: Option<PathBuf>,
    pub workers: usize,
    pub fps: Option<f64>,
    pub decoder: String,
}

fn parse<T: std::str::FromStr>(settings: &Settings, key: &str) -> Result<Option<T>, ConfigError> {
    settings
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| invalid(key, format!("cannot parse `{v}`")))
        })
        .transpose()
}

fn positive_f64(settings: &Settings, key: &str) -> Result<Option<f64>, ConfigError> {
    match parse::<f64>(settings, key)? {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(invalid(key, format!("must be positive, got {v}"))),
        other => Ok(other),
    }
}

fn positive_usize(settings: &Settings, key: &str) -> Result<Option<usize>, ConfigError> {
    let Some(raw) = settings.get(key) else {
        return Ok(None);
    };
    let v: i64 = raw
        .parse()
        .map_err(|_| invalid(key, format!("cannot parse `{raw}` as an integer")))?;
    if v <= 0 {
        return Err(invalid(key, format!("must be positive, got {v}")));
    }
    Ok(Some(v as usize))
}

/// `masks_from` is a template if it contains a placeholder, otherwise a
/// directory laid out as `masks_<class>/<stem>.png`.
pub fn mask_template(spec: &str) -> MaskTemplate {
    if spec.contains('{') {
        MaskTemplate::new(spec)
    } else {
        MaskTemplate::for_directory(Path::new(spec))
    }
}

/// Validate merged settings into a run configuration.
pub fn build_run_config(settings: &Settings) -> Result<RunConfig, ConfigError> {
    let input = match (settings.get("image"), settings.get("video")) {
        (Some(i), None) => InputSpec::Image(PathBuf::from(i)),
        (None, Some(v)) => InputSpec::Video(PathBuf::from(v)),
        (Some(_), Some(_)) => return Err(ConfigError::Other("give either --image or --video, not both".into())),
        (None, None) => return Err(ConfigError::Other("no input: pass --image or --video".into())),
    };

    let backend = match (settings.get("apo_model"), settings.get("fasc_model"), settings.get("masks_from")) {
        (Some(a), Some(f), None) => BackendSpec::Models {
            aponeurosis: PathBuf::from(a),
            fascicle: PathBuf::from(f),
        },
        (None, None, Some(m)) => BackendSpec::Masks(mask_template(m)),
        (None, None, None) => {
            return Err(ConfigError::Other(
                "no segmentation source: pass --apo-model and --fasc-model, or --masks-from".into(),
            ))
        }
        (_, _, Some(_)) => {
            return Err(ConfigError::Other(
                "give either model files or --masks-from, not both".into(),
            ))
        }
        (Some(_), None, None) => return Err(invalid("fasc_model", "required with --apo-model")),
        (None, Some(_), None) => return Err(invalid("apo_model", "required with --fasc-model")),
    };

    let iso = positive_f64(settings, "mm_per_px")?;
    let cal_x = positive_f64(settings, "mm_per_px_x")?.or(iso);
    let cal_y = positive_f64(settings, "mm_per_px_y")?.or(iso);
    let calibration = match (cal_x, cal_y) {
        (Some(x), Some(y)) => Calibration::new(x, y).map_err(|e| invalid("mm_per_px", e.to_string()))?,
        _ => return Err(ConfigError::MissingCalibration),
    };

    let mut post = PostProcessConfig::default();
    if let Some(v) = positive_usize(settings, "apo_min_length")? {
        post.apo_min_length_px = v;
    }
    if let Some(v) = positive_usize(settings, "fasc_min_length")? {
        post.fascicle_min_length_px = v;
    }
    if let Some(v) = positive_f64(settings, "slope_bound")? {
        post.slope_bound = v;
    }
    if let Some(v) = positive_f64(settings, "thickness_band")? {
        if v > 1.0 {
            return Err(invalid("thickness_band", format!("must be at most 1, got {v}")));
        }
        post.thickness_band_fraction = v;
    }

    let aggregation = match settings.get("aggregate").map(String::as_str) {
        None => match input {
            InputSpec::Image(_) => Aggregation::Median,
            InputSpec::Video(_) => Aggregation::Mean,
        },
        Some("median") => Aggregation::Median,
        Some("mean") => Aggregation::Mean,
        Some(other) => return Err(invalid("aggregate", format!("expected median or mean, got `{other}`"))),
    };

    let gap_fill = match settings.get("gap_fill").map(String::as_str) {
        None | Some("off") => None,
        Some(_) => positive_usize(settings, "gap_fill")?,
    };

    let threshold = match parse::<f32>(settings, "threshold")? {
        Some(t) if !(t > 0.0 && t < 1.0) => return Err(invalid("threshold", format!("must lie in (0, 1), got {t}"))),
        Some(t) => t,
        None => 0.5,
    };

    let workers = match positive_usize(settings, "workers")? {
        Some(w) => w,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };

    Ok(RunConfig {
        input,
        backend,
        pipeline: PipelineConfig {
            calibration,
            post,
            binarize_threshold: threshold,
            aggregation,
            gap_fill,
        },
        out: settings
            .get("out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("results.csv")),
        overlays: settings.get("overlays").map(PathBuf::from),
        workers,
        fps: positive_f64(settings, "fps")?,
        decoder: settings
            .get("decoder")
            .cloned()
            .unwrap_or_else(|| DEFAULT_DECODER.to_string()),
    })
}

/// Merge the config file (explicit path, else `$FASCTRACK_CONFIG`) with flag
/// settings and validate.
pub fn load_config(config_path: Option<&Path>, flags: Settings) -> Result<RunConfig, ConfigError> {
    let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let file = match config_path.map(Path::to_path_buf).or(env_path) {
        Some(p) => read_config_file(&p)?,
        None => Settings::new(),
    };
    build_run_config(&merge(file, flags))
}

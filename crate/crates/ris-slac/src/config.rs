//! Run configuration: a strict TOML schema and its translation into
//! experiment settings.

use serde::{Deserialize, Serialize};

use crate::estimation::{CodebookSizes, SparseConfig, TrainingConfig};
use crate::experiments::{CeBenchmarkConfig, EstimatorKind, LinkModel, TradeoffConfig, TradeoffPolicy, UnfoldedSettings};
use crate::geometry::{ArrayKind, ArraySpec, Wavelength};
use crate::Point3;

/// A configuration problem tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrays: Option<ArraysSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSection>,
    pub frame: FrameSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<EstimatorsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// σ² per receive antenna before combining, against unit-gain paths.
    PerAntenna,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub carrier_hz: f64,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_noise_convention")]
    pub noise_convention: NoiseConvention,
}

fn default_noise_convention() -> NoiseConvention {
    NoiseConvention::PerAntenna
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysSection {
    pub bs: ArrayEntry,
    pub ms: ArrayEntry,
    pub ris: ArrayEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub kind: ArrayKind,
    /// [n] for a ULA, [n_first, n_second] for a UPA.
    pub counts: Vec<usize>,
    #[serde(default = "half")]
    pub spacing_wavelengths: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// NLoS paths on the direct BS–MS link.
    #[serde(default)]
    pub direct_paths: usize,
    /// No LoS on the direct link.
    #[serde(default)]
    pub blocked_los: bool,
    /// NLoS paths on each RIS link beyond its LoS path.
    #[serde(default)]
    pub ris_link_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub t_c: usize,
    pub t_p: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsSection {
    pub enabled: Vec<String>,
    #[serde(default = "default_oversampling")]
    pub codebook_oversampling: usize,
    /// Per-estimator pilot budgets replacing `frame.t_p`.
    #[serde(default)]
    pub t_p: std::collections::BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_codebook: Option<BeamCodebookEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<SparseEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unfold: Option<UnfoldEntry>,
}

fn default_oversampling() -> usize {
    SparseConfig::default().oversampling
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamCodebookEntry {
    pub bs: usize,
    pub ms: usize,
    pub ris: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_reduction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnfoldEntry {
    pub depth: usize,
    pub train: TrainEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainEntry {
    pub samples: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Training samples used for each gradient; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSection {
    pub policies: Vec<TradeoffPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_sigma_m: Option<f64>,
    #[serde(default = "default_dither")]
    pub dither_rad: f64,
    /// Elements per side of the square RIS.
    pub ris_sizes: Vec<usize>,
    #[serde(default = "default_focus_radius")]
    pub focus_radius_m: f64,
    #[serde(default = "default_element_snr")]
    pub element_snr_db: f64,
    #[serde(default = "default_min_range")]
    pub min_range_m: f64,
    #[serde(default = "default_spacing_wl")]
    pub ris_spacing_wavelengths: f64,
    #[serde(default = "default_bs")]
    pub bs_position: [f64; 3],
    #[serde(default = "default_user")]
    pub user_position: [f64; 3],
    #[serde(default)]
    pub ris_position: [f64; 3],
}

fn default_dither() -> f64 {
    TradeoffConfig::reference().dither_rad
}
fn default_focus_radius() -> f64 {
    TradeoffConfig::reference().focus_radius_m
}
fn default_element_snr() -> f64 {
    TradeoffConfig::reference().element_snr_db
}
fn default_min_range() -> f64 {
    TradeoffConfig::reference().min_range_m
}
fn default_spacing_wl() -> f64 {
    0.5
}
fn default_bs() -> [f64; 3] {
    TradeoffConfig::reference().bs.into()
}
fn default_user() -> [f64; 3] {
    TradeoffConfig::reference().user.into()
}

/// Parses TOML, naming the first offending key on failure.
pub fn parse_config(text: &str) -> CResult<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("<document>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::new(if key == "." { "<root>".to_string() } else { key }, e.into_inner().message().to_string())
    })
}

fn positive(key: &str, v: f64) -> CResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn wavelength(&self) -> CResult<Wavelength> {
        positive("system.carrier_hz", self.system.carrier_hz)?;
        Wavelength::from_carrier(self.system.carrier_hz).map_err(|e| ConfigError::new("system.carrier_hz", e.to_string()))
    }

    fn validate_frame(&self) -> CResult<()> {
        let f = &self.frame;
        if f.t_c == 0 {
            return Err(ConfigError::new("frame.t_c", "must be at least 1"));
        }
        if f.trials == 0 {
            return Err(ConfigError::new("frame.trials", "must be at least 1"));
        }
        if let Some(&t) = f.t_p.iter().find(|&&t| t > f.t_c) {
            return Err(ConfigError::new("frame.t_p", format!("{t} exceeds frame.t_c = {}", f.t_c)));
        }
        Ok(())
    }

    fn array(entry: &ArrayEntry, key: &str, wl: &Wavelength) -> CResult<ArraySpec> {
        let spacing = positive(&format!("arrays.{key}.spacing_wavelengths"), entry.spacing_wavelengths)? * wl.lambda();
        let counts_key = format!("arrays.{key}.counts");
        let spec = match (entry.kind, entry.counts.as_slice()) {
            (ArrayKind::Ula, [n]) | (ArrayKind::Ula, [n, 1]) => ArraySpec::ula(*n, spacing),
            (ArrayKind::Upa, [a, b]) => ArraySpec::upa(*a, *b, spacing),
            _ => return Err(ConfigError::new(counts_key, "a ULA takes [n], a UPA takes [n_first, n_second]")),
        }
        .map_err(|e| ConfigError::new(counts_key, e.to_string()))?;
        Ok(match entry.position {
            Some(p) => spec.with_reference(Point3::from(p)),
            None => spec,
        })
    }

    /// Benchmark settings for the `cebench` command.
    pub fn ce_benchmark(&self) -> CResult<CeBenchmarkConfig> {
        self.validate_frame()?;
        let wl = self.wavelength()?;
        let arrays = self.arrays.as_ref().ok_or_else(|| ConfigError::new("arrays", "section required by cebench"))?;
        let est = self
            .estimators
            .as_ref()
            .ok_or_else(|| ConfigError::new("estimators", "section required by cebench"))?;
        let channel = self.channel.clone().unwrap_or(ChannelSection {
            direct_paths: 0,
            blocked_los: false,
            ris_link_paths: 0,
        });
        if self.system.snr_db.is_empty() {
            return Err(ConfigError::new("system.snr_db", "at least one SNR is required"));
        }
        if let Some(v) = self.system.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(ConfigError::new("system.snr_db", format!("{v} is not finite")));
        }
        if est.enabled.is_empty() {
            return Err(ConfigError::new("estimators.enabled", "no estimator enabled"));
        }
        let mut kinds = Vec::new();
        for name in &est.enabled {
            let k = EstimatorKind::from_name(name).ok_or_else(|| ConfigError::new("estimators.enabled", format!("unknown estimator `{name}`")))?;
            if kinds.contains(&k) {
                return Err(ConfigError::new("estimators.enabled", format!("`{name}` listed twice")));
            }
            kinds.push(k);
        }
        for name in est.t_p.keys() {
            match EstimatorKind::from_name(name) {
                Some(k) if kinds.contains(&k) => {}
                _ => return Err(ConfigError::new(format!("estimators.t_p.{name}"), "not an enabled estimator")),
            }
        }
        let mut series = Vec::new();
        for k in kinds {
            if k == EstimatorKind::FullCsi {
                series.push((k, 0));
                continue;
            }
            let (key, list) = match est.t_p.get(k.name()) {
                Some(l) => (format!("estimators.t_p.{}", k.name()), l),
                None => ("frame.t_p".to_string(), &self.frame.t_p),
            };
            if list.is_empty() {
                return Err(ConfigError::new(key, format!("no pilot budget for `{}`", k.name())));
            }
            for &t in list {
                if t == 0 || t > self.frame.t_c {
                    return Err(ConfigError::new(key, format!("{t} outside 1..={}", self.frame.t_c)));
                }
                series.push((k, t));
            }
        }
        if est.codebook_oversampling == 0 {
            return Err(ConfigError::new("estimators.codebook_oversampling", "must be at least 1"));
        }
        let mut sparse = SparseConfig {
            oversampling: est.codebook_oversampling,
            ..Default::default()
        };
        if let Some(s) = est.sparse {
            if let Some(v) = s.max_paths {
                sparse.max_paths = v;
            }
            if let Some(v) = s.detection_factor {
                sparse.detection_factor = positive("estimators.sparse.detection_factor", v)?;
            }
            if let Some(v) = s.min_reduction {
                sparse.min_reduction = positive("estimators.sparse.min_reduction", v)?;
            }
            if let Some(v) = s.newton_sweeps {
                sparse.newton_sweeps = v;
            }
        }
        let cb = est.beam_codebook.unwrap_or(BeamCodebookEntry { bs: 4, ms: 8, ris: 8 });
        if cb.bs == 0 || cb.ms == 0 || cb.ris == 0 {
            return Err(ConfigError::new("estimators.beam_codebook", "sizes must be positive"));
        }
        let mut unfolded = UnfoldedSettings::default();
        if let Some(u) = est.unfold {
            if u.train.samples == 0 {
                return Err(ConfigError::new("estimators.unfold.train.samples", "must be at least 1"));
            }
            if u.train.gradient_samples == Some(0) {
                return Err(ConfigError::new("estimators.unfold.train.gradient_samples", "must be at least 1"));
            }
            unfolded = UnfoldedSettings {
                depth: u.depth,
                samples: u.train.samples,
                training: TrainingConfig {
                    epochs: u.train.epochs,
                    learning_rate: positive("estimators.unfold.train.lr", u.train.lr)?,
                    gradient_samples: u.train.gradient_samples,
                    ..Default::default()
                },
            };
        }
        Ok(CeBenchmarkConfig {
            bs: Self::array(&arrays.bs, "bs", &wl)?,
            ms: Self::array(&arrays.ms, "ms", &wl)?,
            ris: Self::array(&arrays.ris, "ris", &wl)?,
            wavelength: wl,
            links: LinkModel {
                direct_los: !channel.blocked_los,
                direct_nlos: channel.direct_paths,
                ris_nlos: channel.ris_link_paths,
            },
            snr_db: self.system.snr_db.clone(),
            t_c: self.frame.t_c,
            trials: self.frame.trials,
            seed: self.frame.seed,
            series,
            sparse,
            codebooks: CodebookSizes {
                bs: cb.bs,
                ms: cb.ms,
                ris: cb.ris,
            },
            unfolded,
        })
    }

    /// Sweep settings for the `tradeoff` command.
    pub fn tradeoff(&self) -> CResult<TradeoffConfig> {
        self.validate_frame()?;
        let wl = self.wavelength()?;
        let t = self
            .tradeoff
            .as_ref()
            .ok_or_else(|| ConfigError::new("tradeoff", "section required by tradeoff"))?;
        if t.policies.is_empty() {
            return Err(ConfigError::new("tradeoff.policies", "no policy listed"));
        }
        if t.policies.contains(&TradeoffPolicy::Directional) && t.prior_sigma_m.is_none() {
            return Err(ConfigError::new("tradeoff.prior_sigma_m", "required by the directional policy"));
        }
        if let Some(s) = t.prior_sigma_m {
            positive("tradeoff.prior_sigma_m", s)?;
        }
        if t.ris_sizes.is_empty() || t.ris_sizes.contains(&0) {
            return Err(ConfigError::new("tradeoff.ris_sizes", "sizes must be non-empty and positive"));
        }
        if !(t.dither_rad >= 0.0 && t.dither_rad.is_finite()) {
            return Err(ConfigError::new("tradeoff.dither_rad", "must be non-negative"));
        }
        if !(t.focus_radius_m >= 0.0 && t.focus_radius_m.is_finite()) {
            return Err(ConfigError::new("tradeoff.focus_radius_m", "must be non-negative"));
        }
        if !t.element_snr_db.is_finite() {
            return Err(ConfigError::new("tradeoff.element_snr_db", "must be finite"));
        }
        positive("tradeoff.min_range_m", t.min_range_m)?;
        let tp = &self.frame.t_p;
        if tp.is_empty() || tp[0] == 0 || tp.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::new("frame.t_p", "must be a strictly ascending list of positive budgets"));
        }
        Ok(TradeoffConfig {
            bs: Point3::from(t.bs_position),
            user: Point3::from(t.user_position),
            ris_center: Point3::from(t.ris_position),
            wavelength: wl,
            ris_sides: t.ris_sizes.clone(),
            ris_spacing: positive("tradeoff.ris_spacing_wavelengths", t.ris_spacing_wavelengths)? * wl.lambda(),
            t_c: self.frame.t_c,
            t_p: tp.clone(),
            trials: self.frame.trials,
            seed: self.frame.seed,
            policies: t.policies.clone(),
            prior_sigma_m: t.prior_sigma_m,
            focus_radius_m: t.focus_radius_m,
            dither_rad: t.dither_rad,
            element_snr_db: t.element_snr_db,
            min_range_m: t.min_range_m,
        })
    }
}

//! Experiment configuration: a TOML file with one table per concern.
//!
//! Every field has a default, so an empty file describes the cosine-drift
//! experiment. Parsed values are validated before any sampling starts, and
//! errors point at the offending line when the key appears in the file.

use std::fmt;
use std::path::PathBuf;

use nsrbm::baseline::{step_for_trials, Scheme, TABLE_STEP_CONSTANT};
use nsrbm::model::{normalize, reverse_spec, CoefFn, CoefficientSpec, EnvelopeParams, NormalizedModel, PiecewiseLinear, Tolerances};
use nsrbm::rbm::{Alg2Config, Algorithm, BetaRule};
use nsrbm::tdbm::{DeltaPolicy, TdbmParams, ThetaPolicy};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, ConfigError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmChoice {
    Alg1,
    #[default]
    Alg2,
    /// Cell-averaged drift with exact cell maxima.
    Baseline,
    /// Grid values only.
    NaiveEuler,
}

impl AlgorithmChoice {
    pub fn exact(self) -> Option<Algorithm> {
        match self {
            AlgorithmChoice::Alg1 => Some(Algorithm::Alg1),
            AlgorithmChoice::Alg2 => Some(Algorithm::Alg2),
            _ => None,
        }
    }

    pub fn scheme(self) -> Option<Scheme> {
        match self {
            AlgorithmChoice::Baseline => Some(Scheme::CellMax),
            AlgorithmChoice::NaiveEuler => Some(Scheme::NaiveEuler),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Constant,
    #[default]
    Cosine,
    /// Drift and variance given explicitly, each a number or a list of knots.
    User,
}

/// A coefficient in a user model: a constant or piecewise-linear knots.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum CoefValue {
    Constant(f64),
    Knots(Vec<[f64; 2]>),
}

/// A number, or a keyword standing for infinity / automatic choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn value(self) -> f64 {
        match self {
            Horizon::Finite(t) => t,
            Horizon::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrWord {
    Number(f64),
    Word(String),
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(de)? {
            NumberOrWord::Number(t) if t.is_infinite() && t > 0.0 => Ok(Horizon::Infinite),
            NumberOrWord::Number(t) => Ok(Horizon::Finite(t)),
            NumberOrWord::Word(w) if matches!(w.as_str(), "inf" | "infinity") => Ok(Horizon::Infinite),
            NumberOrWord::Word(w) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{w}\""))),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(t) => s.serialize_f64(*t),
            Horizon::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(de)? {
            NumberOrWord::Number(v) => Ok(AutoOr::Value(v)),
            NumberOrWord::Word(w) if w == "auto" => Ok(AutoOr::Auto),
            NumberOrWord::Word(w) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{w}\""))),
        }
    }
}

impl Serialize for AutoOr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaRuleChoice {
    #[default]
    Standard,
    Improved,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub mu: Option<CoefValue>,
    pub sigma2: Option<CoefValue>,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    pub phase: Option<f64>,
    pub offset: Option<f64>,
    /// Extend knot lists with their end slopes instead of holding end values.
    pub extend: bool,
    pub d: Option<f64>,
    pub gamma_bar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t: Horizon,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub algorithm: AlgorithmChoice,
    pub x0: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t: Horizon::Infinite,
            trials: 1000,
            seed: 1,
            workers: 1,
            algorithm: AlgorithmChoice::Alg2,
            x0: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Alg2Section {
    pub c: f64,
    pub epsilon: f64,
    pub beta_rule: BetaRuleChoice,
}

impl Default for Alg2Section {
    fn default() -> Self {
        let d = Alg2Config::default();
        Self {
            c: d.c,
            epsilon: d.epsilon,
            beta_rule: BetaRuleChoice::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdbmSection {
    pub theta: AutoOr,
    pub delta: AutoOr,
}

impl Default for TdbmSection {
    fn default() -> Self {
        Self {
            theta: AutoOr::Auto,
            delta: AutoOr::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Step size; `auto` pairs it with the trial count.
    pub delta: AutoOr,
    /// Horizon used for `t = inf`.
    pub horizon: f64,
    pub step_constant: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            delta: AutoOr::Auto,
            horizon: 35.0,
            step_constant: TABLE_STEP_CONSTANT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub deltas: Vec<f64>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            deltas: vec![0.5, 0.0625, 1.0 / 1024.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarmupSection {
    pub epsilon_tv: f64,
}

impl Default for WarmupSection {
    fn default() -> Self {
        Self { epsilon_tv: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    /// Trials per estimate for the exact arm, one budget level each.
    pub exact_trials: Vec<usize>,
    /// Trials per estimate for the baseline arm; the step follows from the trial count.
    pub baseline_trials: Vec<usize>,
    /// Independent estimates per level.
    pub replications: usize,
    /// True value of `E[M]`; computed by a long exact run and cached when absent.
    pub reference: Option<f64>,
    pub reference_trials: usize,
    /// Cost of one proposed segment in baseline cell units.
    pub segment_cost: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            exact_trials: vec![25, 50, 100, 200, 400],
            baseline_trials: vec![25, 50, 100, 200, 400],
            replications: 100,
            reference: None,
            reference_trials: 500_000,
            segment_cost: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// The whole file, with defaults for anything missing.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub run: RunSection,
    pub alg2: Alg2Section,
    pub tdbm: TdbmSection,
    pub baseline: BaselineSection,
    pub compare: CompareSection,
    pub warmup: WarmupSection,
    pub convergence: ConvergenceSection,
    pub output: OutputSection,
}

/// Overrides given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub algorithm: Option<AlgorithmChoice>,
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// The configuration with every default filled in, echoed into outputs.
    pub file: ConfigFile,
    pub spec: CoefficientSpec,
    pub envelope_override: Option<EnvelopeParams>,
    pub alg2: Alg2Config,
}

impl Experiment {
    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut file: ConfigFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            ConfigError::new(line, "", e.message().to_string())
        })?;
        if let Some(seed) = overrides.seed {
            file.run.seed = seed;
        }
        if let Some(workers) = overrides.workers {
            file.run.workers = workers;
        }
        if let Some(out) = &overrides.out {
            file.output.dir = out.clone();
        }
        if let Some(alg) = overrides.algorithm {
            file.run.algorithm = alg;
        }
        let locate = |section: &str, key: &str, message: String| {
            ConfigError::new(find_key_line(text, section, key), &format!("{section}.{key}"), message)
        };
        validate(&mut file, &locate)?;
        let spec = build_spec(&mut file.model, &locate)?;
        let envelope_override = match (file.model.d, file.model.gamma_bar) {
            (None, None) => None,
            (Some(d), Some(g)) => {
                Some(EnvelopeParams::new(d, g).map_err(|e| locate("model", "d", e.to_string()))?)
            }
            (None, Some(_)) => return Err(locate("model", "gamma_bar", "give d together with gamma_bar".into()).into()),
            (Some(_), None) => return Err(locate("model", "d", "give gamma_bar together with d".into()).into()),
        };
        let alg2 = Alg2Config {
            c: file.alg2.c,
            epsilon: file.alg2.epsilon,
            beta_rule: match file.alg2.beta_rule {
                BetaRuleChoice::Standard => BetaRule::Standard,
                BetaRuleChoice::Improved => BetaRule::Improved,
            },
            tdbm: TdbmParams {
                theta: match file.tdbm.theta {
                    AutoOr::Auto => ThetaPolicy::Auto,
                    AutoOr::Value(v) => ThetaPolicy::Fixed(v),
                },
                delta: match file.tdbm.delta {
                    AutoOr::Auto => DeltaPolicy::Auto,
                    AutoOr::Value(v) => DeltaPolicy::Fixed(v),
                },
            },
        };
        alg2.validate().map_err(|e| locate("alg2", "c", e.to_string()))?;
        Ok(Self { file, spec, envelope_override, alg2 })
    }

    pub fn t(&self) -> f64 {
        self.file.run.t.value()
    }

    /// The time-reversed, normalized model whose triplet gives the state at `t`.
    pub fn reversed_model(&self) -> Result<NormalizedModel, CliError> {
        let model = normalize(&reverse_spec(&self.spec, self.t())?, Tolerances::default())?;
        Ok(match self.envelope_override {
            Some(env) => model.with_envelope(env),
            None => model,
        })
    }

    /// Step for a baseline run of `trials` paths.
    pub fn baseline_delta(&self, trials: usize) -> f64 {
        match self.file.baseline.delta {
            AutoOr::Value(d) => d,
            AutoOr::Auto => step_for_trials(trials, self.file.baseline.step_constant),
        }
    }

    /// Horizon of a baseline path on the normalized clock.
    pub fn baseline_horizon(&self, model: &NormalizedModel) -> f64 {
        if self.t().is_finite() {
            model.lambda(self.t())
        } else {
            self.file.baseline.horizon
        }
    }
}

type Locate<'a> = dyn Fn(&str, &str, String) -> ConfigError + 'a;

fn positive(value: f64) -> bool {
    value.is_finite() && value > 0.0
}

fn validate(file: &mut ConfigFile, locate: &Locate) -> Result<(), ConfigError> {
    let run = &file.run;
    if let Horizon::Finite(t) = run.t {
        if !positive(t) {
            return Err(locate("run", "t", format!("must be > 0 or \"inf\", got {t}")));
        }
    }
    if run.trials < 2 {
        return Err(locate("run", "trials", format!("need at least 2, got {}", run.trials)));
    }
    if run.workers == 0 {
        return Err(locate("run", "workers", "must be at least 1".into()));
    }
    if !(run.x0.is_finite() && run.x0 >= 0.0) {
        return Err(locate("run", "x0", format!("must be finite and >= 0, got {}", run.x0)));
    }
    if !(file.alg2.c.is_finite() && file.alg2.c > 1.0) {
        return Err(locate("alg2", "c", format!("must be finite and > 1, got {}", file.alg2.c)));
    }
    if !positive(file.alg2.epsilon) {
        return Err(locate("alg2", "epsilon", format!("must be > 0, got {}", file.alg2.epsilon)));
    }
    for (key, v) in [("theta", file.tdbm.theta), ("delta", file.tdbm.delta)] {
        if let AutoOr::Value(x) = v {
            if !positive(x) {
                return Err(locate("tdbm", key, format!("must be > 0 or \"auto\", got {x}")));
            }
        }
    }
    let b = &file.baseline;
    if let AutoOr::Value(x) = b.delta {
        if !positive(x) {
            return Err(locate("baseline", "delta", format!("must be > 0 or \"auto\", got {x}")));
        }
    }
    if !positive(b.horizon) {
        return Err(locate("baseline", "horizon", format!("must be > 0, got {}", b.horizon)));
    }
    if !positive(b.step_constant) {
        return Err(locate("baseline", "step_constant", format!("must be > 0, got {}", b.step_constant)));
    }
    if file.compare.deltas.is_empty() || file.compare.deltas.iter().any(|&d| !positive(d)) {
        return Err(locate("compare", "deltas", "need a nonempty list of positive steps".into()));
    }
    let eps = file.warmup.epsilon_tv;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(locate("warmup", "epsilon_tv", format!("must lie in (0, 1), got {eps}")));
    }
    let c = &file.convergence;
    for (key, levels) in [("exact_trials", &c.exact_trials), ("baseline_trials", &c.baseline_trials)] {
        if levels.len() < 3 || levels.contains(&0) {
            return Err(locate("convergence", key, "need at least 3 positive trial counts".into()));
        }
    }
    if c.replications < 2 {
        return Err(locate("convergence", "replications", format!("need at least 2, got {}", c.replications)));
    }
    if c.reference.is_some_and(|r| !r.is_finite()) {
        return Err(locate("convergence", "reference", "must be finite".into()));
    }
    if c.reference_trials < 2 {
        return Err(locate("convergence", "reference_trials", "need at least 2".into()));
    }
    if !positive(c.segment_cost) {
        return Err(locate("convergence", "segment_cost", format!("must be > 0, got {}", c.segment_cost)));
    }
    Ok(())
}

fn coef(value: &CoefValue, extend: bool, key: &str, locate: &Locate) -> Result<CoefFn, ConfigError> {
    match value {
        CoefValue::Constant(c) => Ok(CoefFn::Constant(*c)),
        CoefValue::Knots(k) => PiecewiseLinear::new(k.iter().map(|p| (p[0], p[1])).collect(), extend)
            .map(CoefFn::PiecewiseLinear)
            .map_err(|e| locate("model", key, e.to_string())),
    }
}

fn constant_only(value: &Option<CoefValue>, default: f64, key: &str, kind: &str, locate: &Locate) -> Result<f64, ConfigError> {
    match value {
        None => Ok(default),
        Some(CoefValue::Constant(c)) => Ok(*c),
        Some(CoefValue::Knots(_)) => Err(locate("model", key, format!("knots need kind = \"user\", not \"{kind}\""))),
    }
}

/// Builds the coefficient spec and fills the defaults back into `model` so the
/// echoed configuration is complete.
fn build_spec(model: &mut ModelSection, locate: &Locate) -> Result<CoefficientSpec, ConfigError> {
    let spec_error = |e: nsrbm::Error| {
        let key = match &e {
            nsrbm::Error::InvalidParameter { name, .. } => name.to_string(),
            _ => "kind".to_string(),
        };
        locate("model", &key, e.to_string())
    };
    match model.kind {
        ModelKind::Constant => {
            let mu = constant_only(&model.mu, -1.0, "mu", "constant", locate)?;
            let s2 = constant_only(&model.sigma2, 1.0, "sigma2", "constant", locate)?;
            model.mu = Some(CoefValue::Constant(mu));
            model.sigma2 = Some(CoefValue::Constant(s2));
            CoefficientSpec::constant(mu, s2).map_err(spec_error)
        }
        ModelKind::Cosine => {
            if model.mu.is_some() {
                return Err(locate("model", "mu", "cosine drift is set by amplitude, frequency, phase and offset".into()));
            }
            let s2 = constant_only(&model.sigma2, 1.0, "sigma2", "cosine", locate)?;
            let amplitude = *model.amplitude.get_or_insert(1.0);
            let frequency = *model.frequency.get_or_insert(1.0);
            let phase = *model.phase.get_or_insert(0.0);
            let offset = *model.offset.get_or_insert(-0.5);
            model.sigma2 = Some(CoefValue::Constant(s2));
            CoefficientSpec::new(CoefFn::cosine(amplitude, frequency, phase, offset), CoefFn::Constant(s2)).map_err(spec_error)
        }
        ModelKind::User => {
            let mu = model.mu.as_ref().ok_or_else(|| locate("model", "mu", "required for kind = \"user\"".into()))?;
            let s2 = model
                .sigma2
                .as_ref()
                .ok_or_else(|| locate("model", "sigma2", "required for kind = \"user\"".into()))?;
            let mu = coef(mu, model.extend, "mu", locate)?;
            let s2 = coef(s2, model.extend, "sigma2", locate)?;
            CoefficientSpec::new(mu, s2).map_err(spec_error)
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// the key is absent.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header.get_or_insert(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

impl fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmChoice::Alg1 => "alg1",
            AlgorithmChoice::Alg2 => "alg2",
            AlgorithmChoice::Baseline => "baseline",
            AlgorithmChoice::NaiveEuler => "naive-euler",
        })
    }
}

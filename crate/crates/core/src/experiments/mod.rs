//! The experiment catalog. Each experiment draws its samples, compares them
//! with the closed-form predictions, and returns a CSV table plus a report
//! with one pass/fail outcome per rule.

mod diffusion;
mod growth;
mod laws;
mod network;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::activations::Activation;
use crate::error::{precondition, Error, Result};
use crate::export::CsvTable;
use crate::numerics::RngStream;
use crate::stats::{KsResult, MonteCarloSummary};
use crate::theory::TheoryPrediction;

/// Which published form of a prediction to quote as the headline value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Main,
    Appendix,
    AsStated,
    Reconciled,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Main => "main",
            Variant::Appendix => "appendix",
            Variant::AsStated => "as-stated",
            Variant::Reconciled => "reconciled",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "main" => Ok(Variant::Main),
            "appendix" => Ok(Variant::Appendix),
            "as-stated" => Ok(Variant::AsStated),
            "reconciled" => Ok(Variant::Reconciled),
            other => Err(Error::Precondition(format!(
                "unknown variant {other:?} (expected main, appendix, as-stated or reconciled)"
            ))),
        }
    }
}

/// Fully resolved parameters of a run. List-valued fields are swept or
/// paired as each experiment documents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub input_dim: usize,
    pub samples: Vec<usize>,
    pub steps: Vec<usize>,
    pub seed: u64,
    #[serde(serialize_with = "serialize_display")]
    pub activation: Activation,
    pub variant: Variant,
    /// Number of individual paths written to the CSV, where applicable.
    pub exported_paths: usize,
}

fn serialize_display<S: serde::Serializer>(a: &Activation, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(a)
}

impl Params {
    fn base() -> Self {
        Params {
            widths: vec![1],
            depths: vec![100],
            input_dim: 1,
            samples: vec![5000],
            steps: vec![1000],
            seed: 0,
            activation: Activation::Relu,
            variant: Variant::Main,
            exported_paths: 0,
        }
    }

    /// The `i`-th entry of a list, repeating the last one.
    fn nth(list: &[usize], i: usize) -> usize {
        list[i.min(list.len() - 1)]
    }

    pub fn samples_for(&self, i: usize) -> usize {
        Self::nth(&self.samples, i)
    }

    pub fn depth_for(&self, i: usize) -> usize {
        Self::nth(&self.depths, i)
    }

    fn root_stream(&self, experiment: &str) -> RngStream {
        RngStream::new(self.seed).child(experiment, 0)
    }
}

/// Command-line or config-file overrides of an experiment's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub widths: Option<Vec<usize>>,
    pub depths: Option<Vec<usize>>,
    pub input_dim: Option<usize>,
    pub samples: Option<Vec<usize>>,
    pub steps: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub activation: Option<Activation>,
    pub variant: Option<Variant>,
    pub exported_paths: Option<usize>,
}

impl Overrides {
    /// Fills unset fields from `other`.
    pub fn or(self, other: Overrides) -> Overrides {
        Overrides {
            widths: self.widths.or(other.widths),
            depths: self.depths.or(other.depths),
            input_dim: self.input_dim.or(other.input_dim),
            samples: self.samples.or(other.samples),
            steps: self.steps.or(other.steps),
            seed: self.seed.or(other.seed),
            activation: self.activation.or(other.activation),
            variant: self.variant.or(other.variant),
            exported_paths: self.exported_paths.or(other.exported_paths),
        }
    }

    fn apply(self, mut p: Params) -> Params {
        if let Some(v) = self.widths {
            p.widths = v;
        }
        if let Some(v) = self.depths {
            p.depths = v;
        }
        if let Some(v) = self.input_dim {
            p.input_dim = v;
        }
        if let Some(v) = self.samples {
            p.samples = v;
        }
        if let Some(v) = self.steps {
            p.steps = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.activation {
            p.activation = v;
        }
        if let Some(v) = self.variant {
            p.variant = v;
        }
        if let Some(v) = self.exported_paths {
            p.exported_paths = v;
        }
        p
    }
}

/// A named experiment plus overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub overrides: Overrides,
}

impl ExperimentSpec {
    pub fn new(name: &str) -> Self {
        ExperimentSpec { name: name.to_owned(), overrides: Overrides::default() }
    }

    pub fn with(mut self, overrides: Overrides) -> Self {
        self.overrides = overrides;
        self
    }

    /// Looks up the experiment and validates the merged parameters.
    pub fn resolve(&self) -> Result<(&'static CatalogEntry, Params)> {
        let entry = find(&self.name)?;
        let params = self.overrides.clone().apply((entry.defaults)());
        validate_common(&params)?;
        (entry.validate)(&params)?;
        Ok((entry, params))
    }
}

fn validate_common(p: &Params) -> Result<()> {
    for (name, list) in [("width", &p.widths), ("depth", &p.depths), ("samples", &p.samples), ("steps", &p.steps)] {
        precondition(!list.is_empty(), || format!("{name} list is empty"))?;
    }
    precondition(p.widths.iter().all(|&n| n >= 1), || "widths must be >= 1".into())?;
    precondition(p.input_dim >= 1, || "input dimension must be >= 1".into())?;
    precondition(p.steps.iter().all(|&s| s >= 1), || "steps must be >= 1".into())
}

pub(crate) fn require_activation(p: &Params, ok: impl Fn(&Activation) -> bool, what: &str) -> Result<()> {
    precondition(ok(&p.activation), || format!("activation {} is not supported here; {what}", p.activation))
}

pub(crate) fn require_variant(p: &Params, allowed: &[Variant]) -> Result<()> {
    precondition(allowed.contains(&p.variant), || {
        let names: Vec<String> = allowed.iter().map(|v| v.to_string()).collect();
        format!("variant {} is not valid here (expected one of {})", p.variant, names.join(", "))
    })
}

pub(crate) fn require_min_samples(p: &Params, min: usize) -> Result<()> {
    precondition(p.samples.iter().all(|&s| s >= min), || format!("need at least {min} samples"))
}

pub(crate) fn require_positive_depths(p: &Params) -> Result<()> {
    precondition(p.depths.iter().all(|&l| l >= 1), || "depths must be >= 1".into())
}

/// One row of the catalog.
pub struct CatalogEntry {
    pub name: &'static str,
    /// What the experiment checks.
    pub claim: &'static str,
    defaults: fn() -> Params,
    validate: fn(&Params) -> Result<()>,
    run: fn(&Params, &mut Recorder) -> Result<()>,
}

impl CatalogEntry {
    pub fn defaults(&self) -> Params {
        (self.defaults)()
    }
}

impl fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CatalogEntry").field("name", &self.name).finish()
    }
}

pub fn catalog() -> &'static [CatalogEntry] {
    &CATALOG
}

fn find(name: &str) -> Result<&'static CatalogEntry> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Precondition(format!("unknown experiment {name:?}; see `list`")))
}

static CATALOG: [CatalogEntry; 12] = [
    CatalogEntry {
        name: "gbm-hist",
        claim: "width-one ReLU ResNet: log Y_L is N(-1/2, 1), the law of geometric Brownian motion at t=1",
        defaults: laws::gbm_defaults,
        validate: laws::gbm_validate,
        run: laws::gbm_run,
    },
    CatalogEntry {
        name: "ou-hist",
        claim: "erfi-based activation: g(Y_L) follows an Ornstein-Uhlenbeck marginal; fits the mean decay rate",
        defaults: laws::ou_defaults,
        validate: laws::ou_validate,
        run: laws::ou_run,
    },
    CatalogEntry {
        name: "collapse-prob",
        claim: "ReLU collapse probability: 2^-n at initialisation, decreasing towards it as depth grows",
        defaults: network::collapse_defaults,
        validate: network::collapse_validate,
        run: network::collapse_run,
    },
    CatalogEntry {
        name: "quasi-gbm-hist",
        claim: "ReLU post-activation norm is quasi-log-normal: mean log growth ((1-2^-n)^-1/4 - 1/n), variance bound",
        defaults: growth::quasi_defaults,
        validate: growth::relu_growth_validate,
        run: growth::quasi_run,
    },
    CatalogEntry {
        name: "log-growth-paths",
        claim: "paths of log(|phi(Y_l)|/|phi(Y_0)|) against their linear theoretical mean",
        defaults: growth::paths_defaults,
        validate: growth::paths_validate,
        run: growth::paths_run,
    },
    CatalogEntry {
        name: "correlation-paths",
        claim: "correlation between the pre-activations of two inputs stays non-degenerate with depth",
        defaults: network::correlation_defaults,
        validate: network::correlation_validate,
        run: network::correlation_run,
    },
    CatalogEntry {
        name: "gradient-norms",
        claim: "1/sqrt(L) block scaling keeps gradient norms bounded; without it they explode",
        defaults: network::gradient_defaults,
        validate: network::gradient_validate,
        run: network::gradient_run,
    },
    CatalogEntry {
        name: "regime-change",
        claim: "sign of the ReLU mean log growth flips from negative to positive between widths 3 and 4",
        defaults: growth::regime_defaults,
        validate: growth::relu_growth_validate,
        run: growth::regime_run,
    },
    CatalogEntry {
        name: "limit-order",
        claim: "large width then depth versus depth then width: norm ratio e^(t/4) and variance growth",
        defaults: growth::limit_defaults,
        validate: growth::limit_validate,
        run: growth::limit_run,
    },
    CatalogEntry {
        name: "identity-norm",
        claim: "identity activation: mean log(|Y_L|/|Y_0|) equals 1/2 - 1/n",
        defaults: growth::identity_defaults,
        validate: growth::identity_validate,
        run: growth::identity_run,
    },
    CatalogEntry {
        name: "euler-order",
        claim: "Euler scheme for the limiting SDE converges with strong order 1/2",
        defaults: diffusion::euler_defaults,
        validate: diffusion::euler_validate,
        run: diffusion::euler_run,
    },
    CatalogEntry {
        name: "mckean-variance",
        claim: "mean-field limit: coordinate variance |x|^2 e^(t/2) / d",
        defaults: diffusion::mckean_defaults,
        validate: diffusion::mckean_validate,
        run: diffusion::mckean_run,
    },
];

/// A scalar estimate with its prediction and uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub prediction: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub ks: Option<KsResult>,
    /// Retained samples.
    pub n: usize,
    pub n_excluded: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
    pub source: String,
}

/// Everything an experiment reports besides its CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub parameters: Params,
    pub measurements: Vec<Measurement>,
    pub predictions: Vec<TheoryPrediction>,
    pub rules: Vec<RuleOutcome>,
    pub passed: bool,
    /// Unix time of the run; the only field that varies between reruns.
    pub generated_at: Option<u64>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Unsupported(e.to_string()))
    }

    pub fn rule(&self, name: &str) -> Option<&RuleOutcome> {
        self.rules.iter().find(|r| r.rule == name)
    }
}

pub struct ExperimentOutput {
    pub report: Report,
    pub csv: CsvTable,
}

/// Collects results while an experiment runs.
pub(crate) struct Recorder {
    seed: u64,
    measurements: Vec<Measurement>,
    predictions: Vec<TheoryPrediction>,
    rules: Vec<RuleOutcome>,
    csv: CsvTable,
}

impl Recorder {
    pub(crate) fn table(&mut self, columns: &[&str]) {
        self.csv.columns = columns.iter().map(|c| (*c).to_owned()).collect();
    }

    pub(crate) fn row(&mut self, row: Vec<crate::export::Cell>) {
        self.csv.push(row);
    }

    pub(crate) fn predict(&mut self, p: TheoryPrediction) {
        self.predictions.push(p);
    }

    pub(crate) fn measure(&mut self, m: Measurement) {
        self.measurements.push(m);
    }

    pub(crate) fn summary(&mut self, label: impl Into<String>, prediction: Option<f64>, s: &MonteCarloSummary, ks: Option<KsResult>) {
        let m = Measurement {
            label: label.into(),
            prediction,
            estimate: s.mean,
            stderr: s.stderr,
            ks,
            n: s.n_retained(),
            n_excluded: s.n_excluded,
            seed: self.seed,
        };
        self.measurements.push(m);
    }

    pub(crate) fn rule(&mut self, rule: impl Into<String>, passed: bool, detail: impl Into<String>, source: &str) {
        self.rules.push(RuleOutcome { rule: rule.into(), passed, detail: detail.into(), source: source.to_owned() });
    }
}

/// Runs an experiment. Parameters are validated before any sampling.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let (entry, params) = spec.resolve()?;
    let mut rec = Recorder {
        seed: params.seed,
        measurements: Vec::new(),
        predictions: Vec::new(),
        rules: Vec::new(),
        csv: CsvTable::new(entry.name, &[]),
    };
    (entry.run)(&params, &mut rec)?;
    let passed = rec.rules.iter().all(|r| r.passed);
    let report = Report {
        experiment: entry.name.to_owned(),
        seed: params.seed,
        parameters: params,
        measurements: rec.measurements,
        predictions: rec.predictions,
        rules: rec.rules,
        passed,
        generated_at: None,
    };
    Ok(ExperimentOutput { report, csv: rec.csv })
}

/// `|estimate - target| <= k stderr`.
pub(crate) fn within(estimate: f64, stderr: f64, target: f64, k: f64) -> bool {
    (estimate - target).abs() <= k * stderr
}

/// Maps a domain error (e.g. the erfi range being exceeded) to `None` so
/// the sample can be excluded and counted.
pub(crate) fn excluding_domain<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Domain { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_are_unique() {
        let mut names: Vec<&str> = catalog().iter().map(|e| e.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 12);
        assert!(catalog().iter().all(|e| !e.claim.is_empty()));
    }

    #[test]
    fn every_default_validates() {
        for e in catalog() {
            ExperimentSpec::new(e.name).resolve().unwrap_or_else(|err| panic!("{}: {err}", e.name));
        }
    }

    #[test]
    fn unknown_experiment_is_an_error() {
        assert!(ExperimentSpec::new("nope").resolve().is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("as-stated".parse::<Variant>().unwrap(), Variant::AsStated);
        assert_eq!("as_stated".parse::<Variant>().unwrap(), Variant::AsStated);
        assert!("other".parse::<Variant>().is_err());
    }

    #[test]
    fn overrides_merge_prefers_self() {
        let a = Overrides { seed: Some(1), ..Default::default() };
        let b = Overrides { seed: Some(2), input_dim: Some(3), ..Default::default() };
        let m = a.or(b);
        assert_eq!((m.seed, m.input_dim), (Some(1), Some(3)));
    }

    #[test]
    fn invalid_combinations_rejected_before_sampling() {
        let smooth = Overrides { activation: Some(Activation::Tanh), ..Default::default() };
        assert!(ExperimentSpec::new("collapse-prob").with(smooth.clone()).resolve().is_err());
        assert!(ExperimentSpec::new("gbm-hist").with(Overrides { widths: Some(vec![2]), ..Default::default() }).resolve().is_err());
        assert!(ExperimentSpec::new("quasi-gbm-hist").with(Overrides { variant: Some(Variant::Reconciled), ..Default::default() }).resolve().is_err());
        assert!(ExperimentSpec::new("ou-hist").with(smooth).resolve().is_err());
    }
}

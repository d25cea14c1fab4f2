//! The JSON problem description and its translation into a model, a utility
//! and a design space.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use acedesign::models::{
    load_posterior_samples, BetaDrsCompartmental, Compartmental, HierarchicalPrior, Logistic, Model, NormalLocation,
    PoissonToy,
};
use acedesign::utilities::{Nsel, NselLd50, PseudoA, PseudoD, Sig};
use acedesign::{AceConfig, CoordinateDomain, Design, DesignSpace, Marginal, Utility};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

fn default_output_dir() -> PathBuf {
    PathBuf::from("ace_output")
}

fn default_runs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub version: u32,
    pub model: ModelConfig,
    pub utility: UtilityKind,
    #[serde(default)]
    pub ace: AceConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    Sig,
    Nsel,
    PseudoD,
    PseudoA,
    NselLd50,
}

impl UtilityKind {
    pub fn needs_fisher(self) -> bool {
        matches!(self, Self::PseudoD | Self::PseudoA)
    }
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Sig => "sig",
            Self::Nsel => "nsel",
            Self::PseudoD => "pseudo_d",
            Self::PseudoA => "pseudo_a",
            Self::NselLd50 => "nsel_ld50",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub groups: usize,
    pub group_size: usize,
    #[serde(default)]
    pub limits: Option<Vec<f64>>,
    #[serde(default)]
    pub fisher_draws: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    PoissonToy {
        #[serde(default = "default_runs")]
        runs: usize,
        #[serde(default)]
        prior: Option<Marginal>,
    },
    NormalLocation {
        #[serde(default = "default_runs")]
        runs: usize,
        #[serde(default)]
        prior: Option<Marginal>,
        #[serde(default)]
        noise_var: Option<f64>,
    },
    Compartmental {
        /// Number of sampling times.
        runs: usize,
        #[serde(default = "default_true")]
        constrained: bool,
        /// Restrict the times to scaled Beta quantiles; the design becomes
        /// the two shape parameters.
        #[serde(default)]
        drs: bool,
    },
    Logistic {
        /// Ignored in favour of `groups * group_size` when hierarchical.
        #[serde(default)]
        runs: Option<usize>,
        #[serde(default)]
        prior_beta: Option<Vec<Marginal>>,
        #[serde(default)]
        hierarchical: Option<HierarchyConfig>,
        /// Replace every coefficient prior by a point mass at its mean.
        #[serde(default)]
        point_prior: bool,
    },
    DoseResponse {
        /// Follow-up group count `n0`.
        runs: usize,
        /// Posterior-sample CSV; relative paths resolve against the config file.
        posterior: PathBuf,
    },
}

impl ModelConfig {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::PoissonToy { .. } => "poisson_toy",
            Self::NormalLocation { .. } => "normal_location",
            Self::Compartmental { drs: true, .. } => "compartmental_drs",
            Self::Compartmental { .. } => "compartmental",
            Self::Logistic { .. } => "logistic",
            Self::DoseResponse { .. } => "dose_response",
        }
    }
}

/// A configuration resolved into runnable pieces.
pub struct Problem {
    pub config: ProblemConfig,
    /// Absent for the posterior-driven dose-response problem.
    pub model: Option<Arc<dyn Model<f64>>>,
    pub utility: Box<dyn Utility<f64>>,
    pub space: DesignSpace<f64>,
    pub runs: usize,
}

impl Problem {
    pub fn variables(&self) -> usize {
        self.space.variables()
    }

    pub fn model_name(&self) -> String {
        match &self.model {
            Some(m) => m.name().to_string(),
            None => self.config.model.type_name().to_string(),
        }
    }

    /// Checks a design read from disk against this problem.
    pub fn check_design(&self, design: &Design<f64>, label: &str) -> Result<(), CliError> {
        if design.runs() != self.runs || design.variables() != self.variables() {
            return Err(CliError::Config(format!(
                "{label} is {}x{} but the problem needs {}x{}",
                design.runs(),
                design.variables(),
                self.runs,
                self.variables()
            )));
        }
        if !self.space.admits(design) {
            return Err(CliError::Config(format!("{label} lies outside the design space")));
        }
        Ok(())
    }

    /// The compact one-line JSON echoed into design metadata. Where the files
    /// went is not part of the problem, so `output_dir` is left out.
    pub fn compact_config(&self) -> String {
        let mut v = serde_json::to_value(&self.config).unwrap_or_default();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        v.to_string()
    }
}

pub fn load(path: &Path) -> Result<Problem, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &base)
}

pub fn parse(text: &str, base_dir: &Path) -> Result<Problem, CliError> {
    let mut config: ProblemConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if config.version != CONFIG_VERSION {
        return Err(CliError::Config(format!(
            "config version {} is not supported (expected {CONFIG_VERSION})",
            config.version
        )));
    }
    if let ModelConfig::DoseResponse { posterior, .. } = &mut config.model {
        if posterior.is_relative() {
            *posterior = base_dir.join(&*posterior);
        }
    }
    build(config)
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn validate_marginal(m: &Marginal) -> Result<(), CliError> {
    m.validate().map_err(|e| config_err(format!("invalid prior: {e}")))
}

fn build(mut config: ProblemConfig) -> Result<Problem, CliError> {
    let kind = config.utility;
    let (model, runs): (Arc<dyn Model<f64>>, usize) = match &config.model {
        ModelConfig::DoseResponse { runs, posterior } => {
            if kind != UtilityKind::NselLd50 {
                return Err(config_err(format!("dose_response supports only nsel_ld50, not {kind}")));
            }
            let post = load_posterior_samples::<f64>(posterior).map_err(|e| config_err(e.to_string()))?;
            let space = DesignSpace::new(vec![CoordinateDomain::interval(-1.0, 1.0).expect("valid")]);
            config.ace.validate().map_err(|e| config_err(e.to_string()))?;
            return Ok(Problem {
                utility: Box::new(NselLd50 { posterior: Arc::new(post) }),
                model: None,
                space,
                runs: *runs,
                config,
            });
        }
        ModelConfig::PoissonToy { runs, prior } => {
            let mut m = PoissonToy::default();
            if let Some(p) = prior {
                validate_marginal(p)?;
                m.prior = *p;
            }
            (Arc::new(m), *runs)
        }
        ModelConfig::NormalLocation { runs, prior, noise_var } => {
            let mut m = NormalLocation::standard();
            if let Some(p) = prior {
                validate_marginal(p)?;
                m.prior = *p;
            }
            if let Some(s) = noise_var {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(config_err("noise_var must be positive"));
                }
                m.noise_var = *s;
            }
            (Arc::new(m), *runs)
        }
        ModelConfig::Compartmental { runs, constrained, drs } => {
            if *drs {
                // One run of two shape parameters; point exchange has no meaning here.
                if config.ace.phase2_enabled {
                    log::info!("disabling point exchange for the Beta DRS design");
                    config.ace.phase2_enabled = false;
                }
                (Arc::new(BetaDrsCompartmental::new(*runs)), 1)
            } else if *constrained {
                (Arc::new(Compartmental::constrained()), *runs)
            } else {
                (Arc::new(Compartmental::default()), *runs)
            }
        }
        ModelConfig::Logistic { runs, prior_beta, hierarchical, point_prior } => {
            let mut m = Logistic::default();
            if let Some(pb) = prior_beta {
                if pb.len() < 2 {
                    return Err(config_err("prior_beta needs an intercept and at least one slope"));
                }
                for p in pb {
                    validate_marginal(p)?;
                }
                m.prior_beta = pb.clone();
            }
            let n = match hierarchical {
                Some(h) => {
                    if h.groups == 0 || h.group_size == 0 {
                        return Err(config_err("groups and group_size must be positive"));
                    }
                    let mut hp = HierarchicalPrior::standard(h.groups, h.group_size);
                    if let Some(l) = &h.limits {
                        if l.len() != m.prior_beta.len() || l.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                            return Err(config_err("limits needs one positive value per coefficient"));
                        }
                        hp.limits = l.clone();
                    } else if hp.limits.len() != m.prior_beta.len() {
                        return Err(config_err("custom prior_beta with a hierarchy needs explicit limits"));
                    }
                    if let Some(d) = h.fisher_draws {
                        hp.fisher_draws = d;
                    }
                    let n = h.groups * h.group_size;
                    if runs.is_some_and(|r| r != n) {
                        return Err(config_err(format!("runs must equal groups * group_size = {n}")));
                    }
                    m.hierarchical = Some(hp);
                    n
                }
                None => runs.ok_or_else(|| config_err("logistic needs runs"))?,
            };
            if *point_prior {
                m = m.at_prior_means();
            }
            (Arc::new(m), n)
        }
    };
    if runs == 0 {
        return Err(config_err("runs must be positive"));
    }
    if kind == UtilityKind::NselLd50 {
        return Err(config_err(format!("nsel_ld50 needs a dose_response model, not {}", config.model.type_name())));
    }
    if kind.needs_fisher() && !model.provides_fisher_information() {
        return Err(config_err(format!("{kind} needs Fisher information, which {} does not provide", model.name())));
    }
    config.ace.validate().map_err(|e| config_err(e.to_string()))?;
    let utility: Box<dyn Utility<f64>> = match kind {
        UtilityKind::Sig => Box::new(Sig { model: model.clone() }),
        UtilityKind::Nsel => Box::new(Nsel { model: model.clone() }),
        UtilityKind::PseudoD => Box::new(PseudoD { model: model.clone() }),
        UtilityKind::PseudoA => Box::new(PseudoA { model: model.clone() }),
        UtilityKind::NselLd50 => unreachable!("handled above"),
    };
    let space = model.design_space();
    Ok(Problem { config, model: Some(model), utility, space, runs })
}

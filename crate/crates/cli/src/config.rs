//! Run configuration: a JSON file merged with command-line overrides.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ronmf::{ColumnConstraint, ConstraintSpec, HInit, HyperParams, OutlierBox};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ConstraintKind {
    UnitBall,
    Nonneg,
    Simplex,
    ElasticNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BoxKind {
    Signed,
    Nonneg,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    Uniform01,
}

/// Every tunable, all optional. A value given on the command line wins over
/// the same key in the config file; anything left unset takes the canonical default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Outlier penalty weight (default 1/sqrt(F)).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Latent dimension (default 49).
    #[arg(long)]
    pub k: Option<usize>,
    /// Mini-batch size (default 1).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Sets both PGD step factors (default 0.7).
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub kappa_bar: Option<f64>,
    #[arg(long)]
    pub kappa_tilde: Option<f64>,
    /// Sets all three ADMM penalties (default 1).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long)]
    pub rho3: Option<f64>,
    /// Outlier magnitude bound M (default 1).
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub outlier_box: Option<BoxKind>,
    #[arg(long)]
    pub constraint: Option<ConstraintKind>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long)]
    pub eps_encode: Option<f64>,
    #[arg(long)]
    pub max_iter_encode: Option<usize>,
    #[arg(long)]
    pub eps_dict: Option<f64>,
    #[arg(long)]
    pub max_iter_dict: Option<usize>,
    #[arg(long)]
    pub nu1: Option<f64>,
    #[arg(long)]
    pub nu2: Option<f64>,
    #[arg(long)]
    pub lambda_h_l1: Option<f64>,
    #[arg(long)]
    pub h_init: Option<InitKind>,
    /// Stream each column this many times (default 1).
    #[arg(long)]
    pub replicate: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shuffle: Option<bool>,
    /// Scale every streamed column to unit maximum.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Outer-iteration cap for the batch solvers (default 500).
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Relative objective tolerance for the batch solvers (default 1e-3).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! merge_fields {
    ($base:expr, $top:expr, $($f:ident),* $(,)?) => {
        Overrides { $($f: $top.$f.or($base.$f),)* }
    };
}

impl Overrides {
    /// `top` wins wherever it sets a value.
    pub fn merged_with(&self, top: &Overrides) -> Overrides {
        merge_fields!(
            self, top, lambda, k, tau, kappa, kappa_bar, kappa_tilde, rho, rho1, rho2, rho3, m, outlier_box,
            constraint, gamma1, gamma2, eps_encode, max_iter_encode, eps_dict, max_iter_dict, nu1, nu2, lambda_h_l1,
            h_init, replicate, shuffle, normalize, max_outer, tol, seed,
        )
    }

    fn known_keys() -> BTreeSet<String> {
        match serde_json::to_value(Overrides::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => BTreeSet::new(),
        }
    }

    /// Parses a JSON config. Unknown keys are reported all at once.
    pub fn from_json(text: &str) -> Result<Overrides> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| anyhow::anyhow!("malformed config JSON: {e}"))?;
        let obj = value
            .as_object()
            .context("config must be a JSON object")?;
        let known = Self::known_keys();
        let unknown: Vec<&str> = obj
            .keys()
            .filter(|k| !known.contains(k.as_str()))
            .map(|k| k.as_str())
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        serde_json::from_value(value).context("invalid config value")
    }

    pub fn load(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Config file (if any) overridden by flags.
    pub fn resolve_sources(file: Option<&Path>, flags: &Overrides) -> Result<Overrides> {
        let base = match file {
            Some(p) => Self::load(p)?,
            None => Overrides::default(),
        };
        Ok(base.merged_with(flags))
    }

    /// Fills in canonical defaults for data dimension `f` and validates.
    pub fn hyper_params(&self, f: usize) -> Result<HyperParams> {
        let canon = HyperParams::canonical(f);
        let kappa = self.kappa;
        let rho = self.rho;
        let m = self.m.unwrap_or(1.0);
        let outlier = match self.outlier_box.unwrap_or(BoxKind::Signed) {
            BoxKind::Signed => OutlierBox::SignedBox { m },
            BoxKind::Nonneg => OutlierBox::NonnegBox { m },
            BoxKind::Unbounded => OutlierBox::Unbounded,
        };
        let column = match self.constraint.unwrap_or(ConstraintKind::UnitBall) {
            ConstraintKind::UnitBall => ColumnConstraint::UnitNonnegL2Ball,
            ConstraintKind::Nonneg => ColumnConstraint::NonnegOrthant,
            ConstraintKind::Simplex => ColumnConstraint::ProbabilitySimplex,
            ConstraintKind::ElasticNet => ColumnConstraint::ElasticNetBall {
                gamma1: self.gamma1.unwrap_or(1.0),
                gamma2: self.gamma2.unwrap_or(0.0),
            },
        };
        let params = HyperParams {
            lambda: self.lambda.unwrap_or(canon.lambda),
            k: self.k.unwrap_or(canon.k),
            tau: self.tau.unwrap_or(canon.tau),
            kappa_bar: self.kappa_bar.or(kappa).unwrap_or(canon.kappa_bar),
            kappa_tilde: self.kappa_tilde.or(kappa).unwrap_or(canon.kappa_tilde),
            rho1: self.rho1.or(rho).unwrap_or(canon.rho1),
            rho2: self.rho2.or(rho).unwrap_or(canon.rho2),
            rho3: self.rho3.or(rho).unwrap_or(canon.rho3),
            eps_encode: self.eps_encode.unwrap_or(canon.eps_encode),
            max_iter_encode: self.max_iter_encode.unwrap_or(canon.max_iter_encode),
            eps_dict: self.eps_dict.unwrap_or(canon.eps_dict),
            max_iter_dict: self.max_iter_dict.unwrap_or(canon.max_iter_dict),
            nu1: self.nu1.unwrap_or(0.0),
            nu2: self.nu2.unwrap_or(0.0),
            lambda_h_l1: self.lambda_h_l1.unwrap_or(0.0),
            constraint: ConstraintSpec { column, outlier },
            seed: self.seed.unwrap_or(0),
        };
        params.validate().context("invalid configuration")?;
        Ok(params)
    }

    pub fn h_init(&self) -> HInit {
        match self.h_init.unwrap_or(InitKind::Zeros) {
            InitKind::Zeros => HInit::Zeros,
            InitKind::Uniform01 => HInit::Uniform01,
        }
    }

    pub fn replicate(&self) -> Result<usize> {
        match self.replicate.unwrap_or(1) {
            0 => bail!("invalid configuration: replicate must be >= 1"),
            p => Ok(p),
        }
    }

    pub fn batch_config(&self, record_wall_clock: bool) -> Result<ronmf::BatchConfig> {
        let max_outer = self.max_outer.unwrap_or(500);
        let tol = self.tol.unwrap_or(1e-3);
        if max_outer == 0 {
            bail!("invalid configuration: max_outer must be >= 1");
        }
        if !(tol > 0.0 && tol.is_finite()) {
            bail!("invalid configuration: tol must be finite and > 0, got {tol}");
        }
        Ok(ronmf::BatchConfig {
            max_outer,
            tol,
            record_wall_clock,
        })
    }
}

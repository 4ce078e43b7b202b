use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use drgd_core::bench::ReportFormat;
use drgd_core::datagen::Family;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "drgd-bench", version, about = "Generate QP datasets, compare splitting solvers, train and evaluate warm-start networks")]
pub struct Cli {
    /// TOML file supplying defaults for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "DRGD_OUT_DIR", default_value = "drgd-out")]
    pub out: PathBuf,
    /// Report format.
    #[arg(long, global = true)]
    pub format: Option<ReportFormat>,
    /// Worker threads for instance-level parallel work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a problem family and write it as a bundle into the output directory.
    Generate(GenerateArgs),
    /// Solve every instance to high accuracy and store the solutions as labels.
    Label(LabelArgs),
    /// Assign instances to train, validation and test sets.
    Split(SplitArgs),
    /// Compare plain splitting against its gradient-step variant.
    Compare(CompareArgs),
    /// Train a warm-start network.
    Train(TrainArgs),
    /// Measure the warm-start gain of a trained network on the test split.
    Eval(EvalArgs),
    /// Train and evaluate one network per layer count.
    Ablate(AblateArgs),
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"))).collect()
}

/// `usize` lists are written `1,2,5` on the command line and as arrays or
/// strings in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum List {
    Items(Vec<usize>),
    Text(String),
}

impl List {
    pub fn values(&self) -> Result<Vec<usize>, String> {
        match self {
            List::Items(v) => Ok(v.clone()),
            List::Text(s) => parse_list(s),
        }
    }
}

fn list(s: &str) -> Result<List, String> {
    parse_list(s).map(List::Items)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct GenerateArgs {
    #[arg(long)]
    pub family: Option<Family>,
    /// Number of variables (QP families).
    #[arg(long, conflicts_with = "k")]
    pub n: Option<usize>,
    /// Number of factors (portfolio).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half-width of the multiplicative perturbation (qp_perturbed).
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Inequality slack at the feasibility witness.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Label every instance after generation.
    #[arg(long)]
    pub label: bool,
    /// Label accuracy.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Train, validation and test sizes, e.g. `40,8,20`.
    #[arg(long, value_parser = list)]
    pub split: Option<List>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct LabelArgs {
    /// Bundle directory; defaults to the output directory.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct SplitArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Train, validation and test sizes, e.g. `40,8,20`.
    #[arg(long, value_parser = list)]
    pub sizes: Option<List>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct SolverArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Also write per-iteration residuals.
    #[arg(long)]
    pub history: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct CompareArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Gradient steps per iteration for the multi-step table, e.g. `1,2,5,10`.
    #[arg(long, value_parser = list)]
    pub steps: Option<List>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct NetArgs {
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub eta_prior: Option<f64>,
    /// Gradient steps inside each layer.
    #[arg(long)]
    pub unroll: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning rate to switch to once validation loss stalls.
    #[arg(long)]
    pub fallback_lr: Option<f64>,
    /// Epochs without improvement before switching to `--fallback-lr`.
    #[arg(long)]
    pub fallback_after: Option<usize>,
    /// Initialization: `algorithm` (perturbed solver copy) or `random`.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetArgs,
    /// Where to write the best parameters; defaults to `<out>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Defaults to `<out>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct AblateArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Layer counts to try, e.g. `1,2,4`.
    #[arg(long, value_parser = list)]
    pub layers: Option<List>,
    #[command(flatten)]
    #[serde(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
}

/// Settings shared by every command that a config file may also supply.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", default)]
pub struct GlobalFile {
    pub format: Option<ReportFormat>,
    pub jobs: Option<usize>,
}

/// Overlays the flags actually given on top of the config file.
///
/// Unset options and `false` switches leave the file's value in place.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Option<&toml::Table>) -> Result<T, String> {
    let mut base = match file {
        Some(t) => serde_json::to_value(t).map_err(|e| e.to_string())?,
        None => serde_json::Value::Object(Default::default()),
    };
    let over = serde_json::to_value(cli).map_err(|e| e.to_string())?;
    let (Some(base_map), serde_json::Value::Object(over_map)) = (base.as_object_mut(), over) else {
        return Err("config file must be a table".into());
    };
    for (k, v) in over_map {
        if !(v.is_null() || v == serde_json::Value::Bool(false)) {
            base_map.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| format!("config: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: toml::Table = toml::from_str("lr = 0.001\nembed = 16\nlayers = 2\nhistory = true").unwrap();
        let cli = TrainArgs { layers: Some(4), ..Default::default() };
        let m = merge(&cli, Some(&file)).unwrap();
        assert_eq!(m.layers, Some(4));
        assert_eq!(m.net.lr, Some(0.001));
        assert_eq!(m.net.embed, Some(16));
        let e = merge(&EvalArgs::default(), Some(&file)).unwrap();
        assert!(e.solver.history);
    }

    #[test]
    fn list_forms() {
        let file: toml::Table = toml::from_str("steps = [1, 2]").unwrap();
        let m = merge(&CompareArgs::default(), Some(&file)).unwrap();
        assert_eq!(m.steps.unwrap().values().unwrap(), vec![1, 2]);
        let file: toml::Table = toml::from_str("steps = \"1,5\"").unwrap();
        let m = merge(&CompareArgs::default(), Some(&file)).unwrap();
        assert_eq!(m.steps.unwrap().values().unwrap(), vec![1, 5]);
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn bad_type_in_file() {
        let file: toml::Table = toml::from_str("lr = \"fast\"").unwrap();
        assert!(merge(&TrainArgs::default(), Some(&file)).is_err());
    }
}

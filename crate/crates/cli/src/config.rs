//! Run configuration: an optional TOML file overlaid by command-line flags.
//!
//! ```toml
//! workers = 8
//!
//! [metric]
//! kind = "otsim"
//! ot_epsilon = 0.05
//!
//! [synth]
//! n_items = 200
//! words_per_item = [3, 8]
//! ```
//!
//! Tables may be partial; missing keys take library defaults, and any flag
//! given on the command line wins over the file.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use speechsim::{MetricKind, MetricSpec, SynthConfig};

use crate::error::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub metric: Option<MetricSpec>,
    pub synth: Option<SynthConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// seqsim, avgsim, dtwsim or otsim
    #[arg(long)]
    pub metric: Option<MetricKind>,
    /// Entropic regularization for Sinkhorn
    #[arg(long)]
    pub ot_epsilon: Option<f64>,
    #[arg(long)]
    pub ot_max_iter: Option<usize>,
    /// Marginal violation at which Sinkhorn stops
    #[arg(long)]
    pub ot_tol: Option<f64>,
    /// Use the exact transport solver when both lengths are at most this
    #[arg(long)]
    pub ot_exact_threshold: Option<usize>,
}

impl MetricArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<MetricSpec, Failure> {
        let mut spec = file.metric.unwrap_or_default();
        if let Some(k) = self.metric {
            spec.kind = k;
        }
        if let Some(v) = self.ot_epsilon {
            spec.ot_epsilon = v;
        }
        if let Some(v) = self.ot_max_iter {
            spec.ot_max_iter = v;
        }
        if let Some(v) = self.ot_tol {
            spec.ot_marginal_tol = v;
        }
        if let Some(v) = self.ot_exact_threshold {
            spec.ot_exact_threshold = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Worker count: flag or environment first, then the file, then all cores.
pub fn resolve_workers(flag: Option<usize>, file: &FileConfig) -> Result<usize, Failure> {
    let n = flag.or(file.workers).unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, std::num::NonZeroUsize::get)
    });
    if n == 0 {
        return Err(Failure::usage("workers must be at least 1"));
    }
    Ok(n)
}

/// Header embedded in every output file. The worker count is left out on
/// purpose: it never changes results, and leaving it out keeps reports
/// byte-identical across machines.
#[derive(Debug, Serialize)]
pub struct Provenance<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a T,
}

impl<'a, T: Serialize> Provenance<'a, T> {
    pub fn new(command: &'static str, config: &'a T) -> Self {
        Provenance {
            tool: "speechsim",
            version: speechsim::VERSION,
            command,
            config,
        }
    }

    pub fn value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    /// Single-line form for CSV and Markdown comments.
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("{} {} {}", self.tool, self.version, self.command),
            format!("config: {}", serde_json::to_string(self.config).expect("run config serializes")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_flags() -> MetricArgs {
        MetricArgs {
            metric: None,
            ot_epsilon: None,
            ot_max_iter: None,
            ot_tol: None,
            ot_exact_threshold: None,
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("workers = 3\n[metric]\nkind = \"otsim\"\not_epsilon = 0.1\n").unwrap();
        let spec = no_flags().resolve(&file).unwrap();
        assert_eq!(spec.kind, MetricKind::OtSim);
        assert_eq!(spec.ot_epsilon, 0.1);
        assert_eq!(spec.ot_max_iter, MetricSpec::default().ot_max_iter);
        let flags = MetricArgs {
            metric: Some(MetricKind::DtwSim),
            ot_epsilon: Some(0.2),
            ..no_flags()
        };
        let spec = flags.resolve(&file).unwrap();
        assert_eq!((spec.kind, spec.ot_epsilon), (MetricKind::DtwSim, 0.2));
        assert_eq!(resolve_workers(None, &file).unwrap(), 3);
        assert_eq!(resolve_workers(Some(5), &file).unwrap(), 5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<FileConfig>("wrkers = 3").is_err());
        let bad = MetricArgs {
            ot_epsilon: Some(-1.0),
            ..no_flags()
        };
        assert_eq!(bad.resolve(&FileConfig::default()).unwrap_err().code, 2);
        assert!(resolve_workers(Some(0), &FileConfig::default()).is_err());
    }
}

use std::path::Path;

use echoloop::experiment::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::args::Overrides;
use crate::error::CliResult;

pub fn load(path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            echoloop::Error::MissingArtifact(format!("config file {}", path.display()))
        } else {
            echoloop::Error::from(e)
        }
    })?;
    Ok(serde_json::from_str(&text).map_err(echoloop::Error::from)?)
}

/// Applies command-line overrides; a seed override reseeds every stage.
pub fn apply(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        cfg.dataset.synth.seed = seed;
        cfg.hyper.seed = seed;
        cfg.eval.seed = seed;
        cfg.satisfaction.seed = seed;
        cfg.satisfaction.interests.seed = seed;
        cfg.satisfaction.hyper.seed = seed;
    }
    if let Some(n) = o.ctf_n {
        cfg.counterfactual.n = n;
        cfg.satisfaction.counterfactual.n = n;
    }
    if let Some(a) = o.alpha {
        cfg.counterfactual.alpha = a;
        cfg.satisfaction.counterfactual.alpha = a;
    }
    if let Some(e) = o.epochs {
        cfg.hyper.epochs = e;
        cfg.satisfaction.hyper.epochs = e;
    }
    if let Some(k) = o.k {
        cfg.eval.k = k;
    }
}

/// Hex SHA-256 of the canonical JSON form of the effective configuration.
pub fn hash(cfg: &ExperimentConfig) -> CliResult<String> {
    let bytes = serde_json::to_vec(cfg).map_err(echoloop::Error::from)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn seeds(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "dataset": cfg.dataset.synth.seed,
        "training": cfg.hyper.seed,
        "evaluation": cfg.eval.seed,
        "satisfaction": cfg.satisfaction.seed,
        "interest_matrix": cfg.satisfaction.interests.seed,
    })
}

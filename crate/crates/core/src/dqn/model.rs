use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Adam, LayerData, Params, QNetwork};
use super::train::TrainConfig;
use super::{split_seed, DqnError};
use crate::actions::ActionType;
use crate::features::feature_len;
use crate::instance::ProblemInstance;

pub const MODEL_FORMAT: &str = "crowdroute-model";
pub const MODEL_VERSION: u32 = 1;

/// A Q-network together with the size class and configuration it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: QNetwork,
    pub adam: Option<Adam>,
    pub n_requests: usize,
    pub n_crowdsourcees: usize,
    pub config: TrainConfig,
}

impl TrainedModel {
    /// Randomly initialized network for `cfg`, as training would start it.
    pub fn untrained(cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 1));
        let mut sizes = vec![cfg.feature_len()];
        sizes.extend(&cfg.hidden);
        sizes.push(ActionType::COUNT);
        Self {
            net: QNetwork::new(&sizes, &mut rng),
            adam: None,
            n_requests: cfg.n_requests,
            n_crowdsourcees: cfg.n_crowdsourcees,
            config: cfg.clone(),
        }
    }

    pub fn check_profile(&self, instance: &ProblemInstance) -> Result<(), DqnError> {
        if instance.n_requests() != self.n_requests || instance.n_crowdsourcees() != self.n_crowdsourcees {
            return Err(DqnError::Profile(format!(
                "model was trained for {} requests and {} crowdsourcees, instance has {} and {}",
                self.n_requests,
                self.n_crowdsourcees,
                instance.n_requests(),
                instance.n_crowdsourcees()
            )));
        }
        Ok(())
    }

    /// Stable hash of the training configuration.
    pub fn config_fingerprint(&self) -> String {
        fingerprint(&self.config)
    }
}

fn fingerprint(cfg: &TrainConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Serialize, Deserialize)]
struct ProfileData {
    n_requests: usize,
    n_crowdsourcees: usize,
    feature_len: usize,
}

#[derive(Serialize, Deserialize)]
struct AdamData {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<LayerData>,
    v: Vec<LayerData>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    profile: ProfileData,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerData>,
    adam: Option<AdamData>,
    config_fingerprint: String,
    config: TrainConfig,
}

pub fn model_to_json(model: &TrainedModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        profile: ProfileData {
            n_requests: model.n_requests,
            n_crowdsourcees: model.n_crowdsourcees,
            feature_len: feature_len(model.n_requests, model.n_crowdsourcees),
        },
        layer_sizes: model.net.sizes(),
        layers: model.net.to_data(),
        adam: model.adam.as_ref().map(|a| AdamData {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            step: a.step,
            m: a.m.to_data(),
            v: a.v.to_data(),
        }),
        config_fingerprint: model.config_fingerprint(),
        config: model.config.clone(),
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<TrainedModel, DqnError> {
    #[derive(Deserialize)]
    struct Header {
        format: Option<String>,
        version: Option<u32>,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| DqnError::Parse(e.to_string()))?;
    if header.format.as_deref() != Some(MODEL_FORMAT) {
        return Err(DqnError::Parse(format!("not a {MODEL_FORMAT} file")));
    }
    if header.version != Some(MODEL_VERSION) {
        return Err(DqnError::Parse(format!("unsupported model version {:?}", header.version)));
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| DqnError::Parse(e.to_string()))?;
    let net = QNetwork::from_data(&file.layers)?;
    if net.sizes() != file.layer_sizes {
        return Err(DqnError::Parse("layer_sizes disagree with the stored layers".into()));
    }
    let expected = feature_len(file.profile.n_requests, file.profile.n_crowdsourcees);
    if file.profile.feature_len != expected || net.input_len() != expected {
        return Err(DqnError::Parse("profile feature length disagrees with the network input".into()));
    }
    if net.output_len() != ActionType::COUNT {
        return Err(DqnError::Parse(format!("network must have {} outputs", ActionType::COUNT)));
    }
    let adam = match file.adam {
        Some(a) => {
            let m = Params::from_data(&a.m)?;
            let v = Params::from_data(&a.v)?;
            Some(Adam { learning_rate: a.learning_rate, beta1: a.beta1, beta2: a.beta2, eps: a.eps, step: a.step, m, v })
        }
        None => None,
    };
    if fingerprint(&file.config) != file.config_fingerprint {
        return Err(DqnError::Parse("config fingerprint mismatch".into()));
    }
    Ok(TrainedModel {
        net,
        adam,
        n_requests: file.profile.n_requests,
        n_crowdsourcees: file.profile.n_crowdsourcees,
        config: file.config,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), DqnError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model))
        .map_err(|source| DqnError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, DqnError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DqnError::Io { path: path.display().to_string(), source })?;
    model_from_json(&text)
}

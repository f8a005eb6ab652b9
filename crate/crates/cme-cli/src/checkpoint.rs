//! Binary model checkpoints: a fixed magic, a JSON header describing the
//! payload, then little-endian f64 arrays in declared order. Loading rebuilds
//! the exact model (classical fits are re-derived from the stored training
//! data, which is deterministic).

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cme_core::agent::{DqnModel, TrainedPolicy, ZDistributionModel};
use cme_core::baselines::{ClassicalCMEModel, DeepFeatureModel};
use cme_core::data::{LabeledDataset, Standardizer};
use cme_core::estimator::{CMEmbedding, CmeModel, LocationGrid};
use cme_core::kernels::{GaussianDensityKernel, KernelFamily};
use cme_core::Mat;
use cme_core::net::{HeadMode, WeightNetwork};

use crate::runs::write_atomic;
use crate::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"CMEB";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: BTreeMap<String, serde_json::Value>,
    arrays: Vec<ArrayInfo>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, serde_json::Value>,
    arrays: Vec<(String, usize, usize, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: BTreeMap::new(),
            arrays: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: serde_json::Value) {
        self.meta.insert(key.to_string(), value);
    }

    pub fn put_array(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        assert_eq!(rows * cols, data.len(), "array shape mismatch");
        self.arrays.push((name.to_string(), rows, cols, data));
    }

    pub fn put_vec(&mut self, name: &str, data: Vec<f64>) {
        let len = data.len();
        self.put_array(name, 1, len, data);
    }

    pub fn get_array(&self, name: &str) -> CliResult<(usize, usize, &[f64])> {
        self.arrays
            .iter()
            .find(|(n, _, _, _)| n == name)
            .map(|(_, r, c, d)| (*r, *c, d.as_slice()))
            .ok_or_else(|| CliError::config(format!("checkpoint is missing array {name:?}")))
    }

    pub fn get_vec(&self, name: &str) -> CliResult<&[f64]> {
        let (_, _, data) = self.get_array(name)?;
        Ok(data)
    }

    pub fn get_mat(&self, name: &str) -> CliResult<Mat> {
        let (rows, cols, data) = self.get_array(name)?;
        Ok(Mat::from_vec(rows, cols, data.to_vec()))
    }

    fn meta_value(&self, key: &str) -> CliResult<&serde_json::Value> {
        self.meta
            .get(key)
            .ok_or_else(|| CliError::config(format!("checkpoint is missing meta key {key:?}")))
    }

    pub fn meta_str(&self, key: &str) -> CliResult<String> {
        self.meta_value(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| CliError::config(format!("checkpoint meta {key:?} is not a string")))
    }

    pub fn meta_f64(&self, key: &str) -> CliResult<f64> {
        self.meta_value(key)?
            .as_f64()
            .ok_or_else(|| CliError::config(format!("checkpoint meta {key:?} is not a number")))
    }

    pub fn meta_usize(&self, key: &str) -> CliResult<usize> {
        self.meta_value(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| CliError::config(format!("checkpoint meta {key:?} is not an integer")))
    }

    pub fn meta_usize_vec(&self, key: &str) -> CliResult<Vec<usize>> {
        let arr = self
            .meta_value(key)?
            .as_array()
            .ok_or_else(|| CliError::config(format!("checkpoint meta {key:?} is not a list")))?;
        arr.iter()
            .map(|v| {
                v.as_u64().map(|u| u as usize).ok_or_else(|| {
                    CliError::config(format!("checkpoint meta {key:?} has a non-integer entry"))
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, rows, cols, _)| ArrayInfo {
                    name: name.clone(),
                    rows: *rows,
                    cols: *cols,
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| CliError::config(format!("encoding checkpoint header: {e}")))?;
        let payload: usize = self.arrays.iter().map(|(_, _, _, d)| d.len() * 8).sum();
        let mut bytes = Vec::with_capacity(16 + header_bytes.len() + payload);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header_bytes);
        for (_, _, _, data) in &self.arrays {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let display = path.display();
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::io(format!("reading checkpoint {display}"), e))?;
        let bad = |what: &str| CliError::config(format!("checkpoint {display}: {what}"));
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a model checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body_start = 16 + header_len;
        if bytes.len() < body_start {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..body_start])
            .map_err(|e| bad(&format!("malformed header: {e}")))?;

        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut offset = body_start;
        for info in &header.arrays {
            let count = info.rows * info.cols;
            let end = offset + count * 8;
            if bytes.len() < end {
                return Err(bad(&format!("truncated payload for array {:?}", info.name)));
            }
            let mut data = Vec::with_capacity(count);
            for chunk in bytes[offset..end].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            arrays.push((info.name.clone(), info.rows, info.cols, data));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after declared arrays"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }
}

/// Rebuilds a network at stored sizes, then overwrites the random
/// initialization with the stored parameters.
fn rebuild_net(
    sizes: &[usize],
    head: HeadMode,
    spectral: &[usize],
    params: &[f64],
) -> CliResult<WeightNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = WeightNetwork::new(sizes, head, spectral, &mut rng).map_err(CliError::from_core)?;
    net.set_param_vector(params).map_err(CliError::from_core)?;
    Ok(net)
}

fn sizes_json(sizes: &[usize]) -> serde_json::Value {
    serde_json::Value::Array(
        sizes
            .iter()
            .map(|&v| serde_json::Value::from(v as u64))
            .collect(),
    )
}

/// A trained density model plus the standardizer that maps raw data into the
/// space the model was fit in.
pub enum DensityArtifact {
    Proposal(CmeModel),
    /// The model caches post-activation features only, so the standardized
    /// training inputs ride along for checkpointing.
    DeepFeature {
        model: DeepFeatureModel,
        train_x: Mat,
    },
    Classical {
        model: ClassicalCMEModel,
        output_sigma: f64,
    },
}

pub struct DensityBundle {
    pub method: String,
    pub artifact: DensityArtifact,
    pub standardizer: Standardizer,
}

impl DensityBundle {
    /// Embedding of p(y | x) for a raw-space input; the embedding lives in
    /// standardized output space.
    pub fn embed_raw(&self, x_raw: &[f64]) -> CliResult<CMEmbedding> {
        let x = self.standardizer.standardize_x(x_raw);
        let emb = match &self.artifact {
            DensityArtifact::Proposal(model) => model.embed(&x),
            DensityArtifact::DeepFeature { model, .. } => model.embed(&x),
            DensityArtifact::Classical {
                model,
                output_sigma,
            } => GaussianDensityKernel::new(*output_sigma, 1)
                .and_then(|k| model.embed(&x, &k)),
        };
        emb.map_err(CliError::from_core)
    }

    /// Herds `n` representative samples from p(y | x) and maps them back to
    /// raw output space.
    pub fn sample_raw(&self, x_raw: &[f64], n: usize) -> CliResult<Vec<f64>> {
        let emb = self.embed_raw(x_raw)?;
        let std_samples = cme_core::estimator::herd_samples(&emb, n).map_err(CliError::from_core)?;
        Ok(self.standardizer.destandardize_y_slice(&std_samples))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut ck = Checkpoint::new("density");
        ck.set_meta("method", serde_json::Value::from(self.method.clone()));
        ck.set_meta(
            "y_mean",
            serde_json::Value::from(self.standardizer.y_mean()),
        );
        ck.set_meta("y_std", serde_json::Value::from(self.standardizer.y_std()));
        ck.put_vec("x_mean", self.standardizer.x_mean().to_vec());
        ck.put_vec("x_std", self.standardizer.x_std().to_vec());

        match &self.artifact {
            DensityArtifact::Proposal(model) => {
                ck.set_meta("artifact", serde_json::Value::from("proposal"));
                ck.set_meta("layer_sizes", sizes_json(model.net().layer_sizes()));
                ck.set_meta(
                    "spectral_layers",
                    sizes_json(model.net().spectral_layers()),
                );
                ck.set_meta("sigma", serde_json::Value::from(model.sigma()));
                ck.put_vec("params", model.net().param_vector());
                ck.put_vec("grid", model.grid().points().to_vec());
            }
            DensityArtifact::DeepFeature { model, train_x } => {
                ck.set_meta("artifact", serde_json::Value::from("deep_feature"));
                ck.set_meta("layer_sizes", sizes_json(model.net().layer_sizes()));
                ck.set_meta("lambda", serde_json::Value::from(model.lambda()));
                ck.set_meta("sigma", serde_json::Value::from(model.kernel().sigma()));
                ck.put_vec("params", model.net().param_vector());
                ck.put_array("train_x", train_x.rows(), train_x.cols(), train_x.data().to_vec());
                ck.put_vec("train_y", model.train_outputs().to_vec());
            }
            DensityArtifact::Classical {
                model,
                output_sigma,
            } => {
                ck.set_meta("artifact", serde_json::Value::from("classical"));
                ck.set_meta("lambda", serde_json::Value::from(model.lambda()));
                ck.set_meta("output_sigma", serde_json::Value::from(*output_sigma));
                let x = model.train_inputs();
                ck.put_array("train_x", x.rows(), x.cols(), x.data().to_vec());
                ck.put_vec("train_y", model.train_outputs().to_vec());
            }
        }
        ck.save(path)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.kind != "density" {
            return Err(CliError::config(format!(
                "{}: expected a density checkpoint, found kind {:?}",
                path.display(),
                ck.kind
            )));
        }
        let standardizer = Standardizer::from_parts(
            ck.get_vec("x_mean")?.to_vec(),
            ck.get_vec("x_std")?.to_vec(),
            ck.meta_f64("y_mean")?,
            ck.meta_f64("y_std")?,
        )
        .map_err(CliError::from_core)?;
        let method = ck.meta_str("method")?;

        let artifact = match ck.meta_str("artifact")?.as_str() {
            "proposal" => {
                let sizes = ck.meta_usize_vec("layer_sizes")?;
                let spectral = ck.meta_usize_vec("spectral_layers")?;
                let net = rebuild_net(&sizes, HeadMode::Linear, &spectral, ck.get_vec("params")?)?;
                let grid =
                    LocationGrid::new(ck.get_vec("grid")?.to_vec()).map_err(CliError::from_core)?;
                let model = CmeModel::from_parts(net, grid, ck.meta_f64("sigma")?)
                    .map_err(CliError::from_core)?;
                DensityArtifact::Proposal(model)
            }
            "deep_feature" => {
                let sizes = ck.meta_usize_vec("layer_sizes")?;
                let net = rebuild_net(&sizes, HeadMode::Linear, &[], ck.get_vec("params")?)?;
                let kernel = GaussianDensityKernel::new(ck.meta_f64("sigma")?, 1)
                    .map_err(CliError::from_core)?;
                let train_x = ck.get_mat("train_x")?;
                let model = DeepFeatureModel::from_parts(
                    net,
                    ck.meta_f64("lambda")?,
                    kernel,
                    &train_x,
                    ck.get_vec("train_y")?,
                )
                .map_err(CliError::from_core)?;
                DensityArtifact::DeepFeature { model, train_x }
            }
            "classical" => {
                let dataset =
                    LabeledDataset::new(ck.get_mat("train_x")?, ck.get_vec("train_y")?.to_vec())
                        .map_err(CliError::from_core)?;
                let model = ClassicalCMEModel::fit(&dataset, ck.meta_f64("lambda")?)
                    .map_err(CliError::from_core)?;
                DensityArtifact::Classical {
                    model,
                    output_sigma: ck.meta_f64("output_sigma")?,
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "{}: unknown density artifact {other:?}",
                    path.display()
                )))
            }
        };
        Ok(Self {
            method,
            artifact,
            standardizer,
        })
    }
}

/// Saves a trained control policy with enough structure to rebuild it.
pub fn save_policy(
    path: &Path,
    policy: &TrainedPolicy,
    env_id: &str,
    loss_mode: &str,
) -> CliResult<()> {
    let mut ck;
    match policy {
        TrainedPolicy::Distributional(model) => {
            ck = Checkpoint::new("rl_z");
            ck.set_meta("layer_sizes", sizes_json(model.net().layer_sizes()));
            ck.set_meta(
                "num_actions",
                serde_json::Value::from(model.num_actions() as u64),
            );
            ck.put_vec("params", model.net().param_vector());
            ck.put_vec("atoms", model.atoms().to_vec());
            ck.put_vec("sigmas", model.kernel_family().sigmas());
        }
        TrainedPolicy::Expectation(model) => {
            ck = Checkpoint::new("rl_dqn");
            ck.set_meta("layer_sizes", sizes_json(model.net().layer_sizes()));
            ck.set_meta(
                "num_actions",
                serde_json::Value::from(model.num_actions() as u64),
            );
            ck.put_vec("params", model.net().param_vector());
        }
    }
    ck.set_meta("env", serde_json::Value::from(env_id));
    ck.set_meta("loss_mode", serde_json::Value::from(loss_mode));
    ck.save(path)
}

pub fn load_policy(path: &Path) -> CliResult<(TrainedPolicy, String)> {
    let ck = Checkpoint::load(path)?;
    let env = ck.meta_str("env")?;
    let sizes = ck.meta_usize_vec("layer_sizes")?;
    if sizes.len() < 2 {
        return Err(CliError::config(format!(
            "{}: layer_sizes needs input and output entries",
            path.display()
        )));
    }
    let hidden = &sizes[1..sizes.len() - 1];
    let num_actions = ck.meta_usize("num_actions")?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let policy = match ck.kind.as_str() {
        "rl_z" => {
            let family = KernelFamily::new(ck.get_vec("sigmas")?, 1).map_err(CliError::from_core)?;
            let mut model = ZDistributionModel::new(
                sizes[0],
                num_actions,
                hidden,
                ck.get_vec("atoms")?.to_vec(),
                family,
                &mut rng,
            )
            .map_err(CliError::from_core)?;
            model
                .set_params(ck.get_vec("params")?)
                .map_err(CliError::from_core)?;
            TrainedPolicy::Distributional(model)
        }
        "rl_dqn" => {
            let mut model = DqnModel::new(sizes[0], num_actions, hidden, &mut rng)
                .map_err(CliError::from_core)?;
            model
                .set_params(ck.get_vec("params")?)
                .map_err(CliError::from_core)?;
            TrainedPolicy::Expectation(model)
        }
        other => {
            return Err(CliError::config(format!(
                "{}: expected a policy checkpoint, found kind {other:?}",
                path.display()
            )))
        }
    };
    Ok((policy, env))
}

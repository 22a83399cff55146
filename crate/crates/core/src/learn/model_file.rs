//! Model files: one JSON header line, then every parameter as little-endian f64.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnnRegressor, Mlp, MlpRegressor, MoeModel, Predictor, Standardizer, TargetShape};
use crate::error::{Error, Result};

const MAGIC: &str = "topowarm-model/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(MlpRegressor),
    Knn(KnnRegressor),
    Moe(MoeModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Mlp(_) => "mlp",
            Model::Knn(_) => "knn",
            Model::Moe(_) => "moe",
        }
    }

    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            Model::Mlp(m) => m,
            Model::Knn(m) => m,
            Model::Moe(m) => m,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RegressorHeader {
    sizes: Vec<usize>,
    input_norm: Standardizer,
    target_norm: Standardizer,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Body {
    Mlp {
        net: RegressorHeader,
    },
    Knn {
        k: usize,
        samples: usize,
        input_dim: usize,
    },
    Moe {
        k: usize,
        experts: Vec<RegressorHeader>,
        gating_sizes: Vec<usize>,
        gating_norm: Standardizer,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    shape: TargetShape,
    params: usize,
    #[serde(flatten)]
    body: Body,
}

fn regressor_header(m: &MlpRegressor) -> RegressorHeader {
    RegressorHeader {
        sizes: m.net.sizes.clone(),
        input_norm: m.input_norm.clone(),
        target_norm: m.target_norm.clone(),
    }
}

fn split_header(model: &Model) -> (Header, Vec<f64>) {
    let (shape, body, blob) = match model {
        Model::Mlp(m) => (m.shape, Body::Mlp { net: regressor_header(m) }, m.net.params()),
        Model::Knn(m) => {
            let blob = m.inputs.iter().chain(&m.targets).flatten().copied().collect();
            let body = Body::Knn {
                k: m.k,
                samples: m.inputs.len(),
                input_dim: m.inputs[0].len(),
            };
            (m.shape, body, blob)
        }
        Model::Moe(m) => {
            let mut blob: Vec<f64> = m.experts.iter().flat_map(|e| e.net.params()).collect();
            blob.extend(m.gating.params());
            let body = Body::Moe {
                k: m.k(),
                experts: m.experts.iter().map(regressor_header).collect(),
                gating_sizes: m.gating.sizes.clone(),
                gating_norm: m.gating_norm.clone(),
            };
            (m.experts[0].shape, body, blob)
        }
    };
    let header = Header {
        format: MAGIC.into(),
        shape,
        params: blob.len(),
        body,
    };
    (header, blob)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    let (header, blob) = split_header(model);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(b"\n")?;
    for v in blob {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn take<'a>(blob: &mut &'a [f64], n: usize) -> Result<&'a [f64]> {
    if blob.len() < n {
        return Err(Error::Format("parameter blob too short".into()));
    }
    let (head, tail) = blob.split_at(n);
    *blob = tail;
    Ok(head)
}

fn regressor(h: RegressorHeader, shape: TargetShape, blob: &mut &[f64]) -> Result<MlpRegressor> {
    let n = super::param_count(&h.sizes);
    let net = Mlp::from_params(&h.sizes, take(blob, n)?)?;
    if h.input_norm.dim() != net.input_dim() || h.target_norm.dim() != net.output_dim() || shape.len() != net.output_dim() {
        return Err(Error::Format("normalization does not match the network".into()));
    }
    Ok(MlpRegressor {
        net,
        input_norm: h.input_norm,
        target_norm: h.target_norm,
        shape,
    })
}

pub fn read_model(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.format != MAGIC {
        return Err(Error::Format(format!("{}: unknown format {:?}", path.display(), header.format)));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.params {
        return Err(Error::Format(format!(
            "{}: expected {} parameters, found {} bytes",
            path.display(),
            header.params,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut blob = values.as_slice();
    let shape = header.shape;
    let model = match header.body {
        Body::Mlp { net } => Model::Mlp(regressor(net, shape, &mut blob)?),
        Body::Knn { k, samples, input_dim } => {
            let inputs = take(&mut blob, samples * input_dim)?.chunks(input_dim.max(1)).map(<[f64]>::to_vec).collect();
            let targets = take(&mut blob, samples * shape.len())?.chunks(shape.len().max(1)).map(<[f64]>::to_vec).collect();
            Model::Knn(KnnRegressor::new(inputs, targets, k, shape)?)
        }
        Body::Moe {
            k,
            experts,
            gating_sizes,
            gating_norm,
        } => {
            if experts.len() != k || gating_sizes.last() != Some(&k) {
                return Err(Error::Format("expert count does not match k".into()));
            }
            let experts = experts
                .into_iter()
                .map(|h| regressor(h, shape, &mut blob))
                .collect::<Result<Vec<_>>>()?;
            let gating = Mlp::from_params(&gating_sizes, take(&mut blob, super::param_count(&gating_sizes))?)?;
            Model::Moe(MoeModel {
                experts,
                gating,
                gating_norm,
            })
        }
    };
    if !blob.is_empty() {
        return Err(Error::Format("trailing parameters".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{train_moe, Dataset, MoeArch, Splits, TrainOptions};

    fn small_data() -> Dataset {
        let shape = TargetShape {
            horizon: 2,
            state_dim: 2,
            control_dim: 1,
        };
        let inputs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0 - 1.5, (i % 3) as f64]).collect();
        let targets: Vec<Vec<f64>> = inputs.iter().map(|x| vec![x[0], -x[0], x[1], 0.5 * x[0], x[0] * x[1]]).collect();
        let labels = inputs.iter().map(|x| usize::from(x[0] > 0.0)).collect();
        Dataset::new(inputs, targets, shape, Splits::random(30, 0.2, 0.0, 1).unwrap())
            .unwrap()
            .with_labels(labels)
            .unwrap()
    }

    #[test]
    fn every_model_kind_round_trips_bit_exactly() {
        let data = small_data();
        let opts = TrainOptions {
            epochs: 20,
            ..TrainOptions::default()
        };
        let moe = train_moe(&data, MoeArch { expert_hidden: 5, gating_hidden: 3 }, &opts).unwrap();
        let (mlp, _) = crate::learn::train_mlp_regressor(&data, &data.splits.train, &data.splits.validation, 6, &opts).unwrap();
        let knn = KnnRegressor::new(data.inputs.clone(), data.targets.clone(), 3, data.shape).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for model in [Model::Moe(moe), Model::Mlp(mlp), Model::Knn(knn)] {
            let path = dir.path().join(format!("{}.model", model.kind()));
            write_model(&path, &model).unwrap();
            let back = read_model(&path).unwrap();
            assert_eq!(back, model);
            let q = [0.3, 1.0];
            assert_eq!(back.predictor().predict(&q).unwrap(), model.predictor().predict(&q).unwrap());
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let data = small_data();
        let knn = Model::Knn(KnnRegressor::new(data.inputs.clone(), data.targets.clone(), 1, data.shape).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("knn.model");
        write_model(&path, &knn).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_model(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"{\"format\":\"other\"}\n").unwrap();
        assert!(read_model(&path).is_err());
    }
}

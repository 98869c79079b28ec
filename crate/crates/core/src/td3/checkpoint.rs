use std::path::Path;

use serde::Deserialize;

use super::mlp::{Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::scenario::f17;

/// A saved policy network and the optimizer step it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub optimizer_step: u64,
}

#[derive(Deserialize)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointRecord {
    layer_dims: Vec<usize>,
    activation: OutputActivation,
    optimizer_step: u64,
    layers: Vec<LayerRecord>,
}

fn float_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| f17(x)).collect();
    format!("[{}]", items.join(","))
}

/// JSON text of a checkpoint. Weights are nested `[in][out]`.
pub fn checkpoint_json(net: &Mlp, optimizer_step: u64) -> String {
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    let activation = match net.output_activation() {
        OutputActivation::Tanh => "tanh",
        OutputActivation::Identity => "identity",
    };
    let mut layers = Vec::with_capacity(net.n_layers());
    for l in 0..net.n_layers() {
        let (w, b) = net.layer(l);
        let fan_out = b.len();
        let rows: Vec<String> = w.chunks_exact(fan_out).map(float_list).collect();
        layers.push(format!(
            "{{\"weights\":[{}],\"bias\":{}}}",
            rows.join(","),
            float_list(b)
        ));
    }
    format!(
        "{{\"layer_dims\":[{}],\"activation\":\"{activation}\",\"optimizer_step\":{optimizer_step},\"layers\":[{}]}}\n",
        dims.join(","),
        layers.join(",")
    )
}

pub fn save_checkpoint(path: &Path, net: &Mlp, optimizer_step: u64) -> Result<()> {
    std::fs::write(path, checkpoint_json(net, optimizer_step)).map_err(|e| Error::io(path, e))
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::CorruptRecord {
        line: 1,
        reason: reason.into(),
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let rec: CheckpointRecord = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if rec.layer_dims.len() < 2 || rec.layers.len() != rec.layer_dims.len() - 1 {
        return Err(corrupt("layer count does not match layer_dims"));
    }
    let mut params = Vec::new();
    for (l, layer) in rec.layers.iter().enumerate() {
        let (fan_in, fan_out) = (rec.layer_dims[l], rec.layer_dims[l + 1]);
        if layer.weights.len() != fan_in
            || layer.weights.iter().any(|row| row.len() != fan_out)
            || layer.bias.len() != fan_out
        {
            return Err(corrupt(format!("layer {l} does not have shape {fan_in}x{fan_out}")));
        }
        for row in &layer.weights {
            params.extend_from_slice(row);
        }
        params.extend_from_slice(&layer.bias);
    }
    let net = Mlp::from_params(&rec.layer_dims, rec.activation, params)?;
    Ok(Checkpoint {
        net,
        optimizer_step: rec.optimizer_step,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = crate::SimRng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let back = parse_checkpoint(&checkpoint_json(&net, 42)).unwrap();
        assert_eq!(back.optimizer_step, 42);
        assert_eq!(back.net, net);
        let x = [0.3, -0.1, 0.7, 0.0, 1.2];
        assert_eq!(back.net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn layout_is_in_by_out() {
        let net = Mlp::from_params(&[2, 3], OutputActivation::Identity, (0..9).map(f64::from).collect()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&checkpoint_json(&net, 0)).unwrap();
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 2);
        assert_eq!(v["layers"][0]["weights"][1][0].as_f64(), Some(3.0));
        assert_eq!(v["layers"][0]["bias"][2].as_f64(), Some(8.0));
    }

    #[test]
    fn malformed_shapes_rejected() {
        let text = r#"{"layer_dims":[2,1],"activation":"tanh","optimizer_step":0,
            "layers":[{"weights":[[1.0],[2.0],[3.0]],"bias":[0.0]}]}"#;
        assert!(matches!(parse_checkpoint(text), Err(Error::CorruptRecord { .. })));
        assert!(parse_checkpoint("{").is_err());
    }
}

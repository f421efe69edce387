//! Adapter for externally trained models serialized as ONNX graphs.
//!
//! The model must map a `1x3x224x224` float tensor to one output (passed
//! through a sigmoid) or two (passed through a softmax, taking component 1
//! as the positive class). Preprocessing normalization comes from metadata
//! stored either inside the file's metadata properties or in an adjacent
//! `<model>.json` sidecar, under the keys `channel_mean`, `channel_std`,
//! and `output_arity`. The sidecar wins when both are present.

use std::collections::HashMap;
use std::path::Path;

use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, ImageRgb};

use super::QualityScorer;

const INPUT_SIDE: u32 = 224;

/// Preprocessing and output-shape contract shipped with a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMetadata {
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
    pub output_arity: usize,
}

impl ModelMetadata {
    fn validate(&self) -> Result<()> {
        for v in self.channel_mean.iter().chain(&self.channel_std) {
            if !v.is_finite() {
                return Err(Error::Model(
                    "metadata contains non-finite normalization values".to_string(),
                ));
            }
        }
        if self.channel_std.iter().any(|s| *s <= 0.0) {
            return Err(Error::Model(
                "channel_std entries must be positive".to_string(),
            ));
        }
        if self.output_arity != 1 && self.output_arity != 2 {
            return Err(Error::Model(format!(
                "output_arity must be 1 or 2, got {}",
                self.output_arity
            )));
        }
        Ok(())
    }
}

#[derive(serde::Deserialize)]
struct MetadataDoc {
    channel_mean: Vec<f64>,
    channel_std: Vec<f64>,
    output_arity: usize,
}

impl MetadataDoc {
    fn into_metadata(self) -> Result<ModelMetadata> {
        let triple = |name: &str, v: Vec<f64>| -> Result<[f64; 3]> {
            <[f64; 3]>::try_from(v).map_err(|v| {
                Error::Model(format!("{name} must hold exactly 3 values, got {}", v.len()))
            })
        };
        let meta = ModelMetadata {
            channel_mean: triple("channel_mean", self.channel_mean)?,
            channel_std: triple("channel_std", self.channel_std)?,
            output_arity: self.output_arity,
        };
        meta.validate()?;
        Ok(meta)
    }
}

fn metadata_from_json(text: &str) -> Result<ModelMetadata> {
    let doc: MetadataDoc = serde_json::from_str(text)
        .map_err(|e| Error::Model(format!("malformed metadata document: {e}")))?;
    doc.into_metadata()
}

/// Each embedded property value is itself a JSON fragment, e.g.
/// `channel_mean = "[0.5, 0.5, 0.5]"`.
fn metadata_from_props(props: &HashMap<String, String>) -> Result<ModelMetadata> {
    let field = |key: &str| -> Result<&String> {
        props
            .get(key)
            .ok_or_else(|| Error::Model(format!("model metadata is missing key {key:?}")))
    };
    let vec3 = |key: &str| -> Result<Vec<f64>> {
        serde_json::from_str(field(key)?)
            .map_err(|e| Error::Model(format!("metadata key {key:?} is not a number array: {e}")))
    };
    let doc = MetadataDoc {
        channel_mean: vec3("channel_mean")?,
        channel_std: vec3("channel_std")?,
        output_arity: field("output_arity")?
            .trim()
            .parse()
            .map_err(|e| Error::Model(format!("metadata key \"output_arity\": {e}")))?,
    };
    doc.into_metadata()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_positive(negative: f64, positive: f64) -> f64 {
    let m = negative.max(positive);
    let en = (negative - m).exp();
    let ep = (positive - m).exp();
    ep / (en + ep)
}

type Plan = TypedSimplePlan<TypedModel>;

/// A loaded ONNX model with its preprocessing metadata.
///
/// The Debug form shows the metadata only; the compiled plan has no
/// useful printable state.
pub struct OnnxScorer {
    plan: Plan,
    metadata: ModelMetadata,
}

impl std::fmt::Debug for OnnxScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxScorer")
            .field("metadata", &self.metadata)
            .finish_non_exhaustive()
    }
}

impl OnnxScorer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let context = |e: TractError| Error::Model(format!("{}: {e:#}", path.display()));
        let proto = tract_onnx::onnx()
            .proto_model_for_path(path)
            .map_err(context)?;
        let metadata = Self::resolve_metadata(path, &proto)?;
        let plan = tract_onnx::onnx()
            .model_for_proto_model(&proto)
            .and_then(|m| {
                m.with_input_fact(
                    0,
                    f32::fact([1, 3, INPUT_SIDE as usize, INPUT_SIDE as usize]).into(),
                )
            })
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(context)?;
        if let Some(dims) = plan
            .model()
            .output_fact(0)
            .ok()
            .and_then(|f| f.shape.as_concrete())
        {
            let volume: usize = dims.iter().product();
            if volume != metadata.output_arity {
                return Err(Error::Model(format!(
                    "{}: model emits {volume} values but metadata declares output_arity {}",
                    path.display(),
                    metadata.output_arity
                )));
            }
        }
        Ok(Self { plan, metadata })
    }

    fn resolve_metadata(path: &Path, proto: &tract_onnx::pb::ModelProto) -> Result<ModelMetadata> {
        let sidecar = path.with_extension("json");
        if sidecar.is_file() {
            let text = std::fs::read_to_string(&sidecar)
                .map_err(|source| Error::io(&sidecar, source))?;
            return metadata_from_json(&text)
                .map_err(|e| Error::Model(format!("{}: {e}", sidecar.display())));
        }
        if proto.metadata_props.is_empty() {
            return Err(Error::Model(format!(
                "{}: no embedded metadata and no sidecar at {}",
                path.display(),
                sidecar.display()
            )));
        }
        let props: HashMap<String, String> = proto
            .metadata_props
            .iter()
            .map(|p| (p.key.clone(), p.value.clone()))
            .collect();
        metadata_from_props(&props).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }

    pub fn metadata(&self) -> ModelMetadata {
        self.metadata
    }

    /// Resize to the network's input side, scale channels to [0,1], and
    /// standardize with the stored per-channel statistics, in CHW order.
    fn preprocess(&self, img: &ImageRgb) -> Result<Tensor> {
        let resized = resize_bilinear(img, INPUT_SIDE, INPUT_SIDE)?;
        let side = INPUT_SIDE as usize;
        let mut data = vec![0.0f32; 3 * side * side];
        for (i, px) in resized.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                data[c * side * side + i] =
                    ((v - self.metadata.channel_mean[c]) / self.metadata.channel_std[c]) as f32;
            }
        }
        Tensor::from_shape(&[1, 3, side, side], &data)
            .map_err(|e| Error::Model(format!("building input tensor: {e:#}")))
    }
}

impl QualityScorer for OnnxScorer {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        let input = self.preprocess(img)?;
        let outputs = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| Error::Model(format!("inference failed: {e:#}")))?;
        let values = outputs[0]
            .as_slice::<f32>()
            .map_err(|e| Error::Model(format!("output tensor is not f32: {e:#}")))?;
        if values.len() != self.metadata.output_arity {
            return Err(Error::Model(format!(
                "model emitted {} values but metadata declares output_arity {}",
                values.len(),
                self.metadata.output_arity
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("model emitted non-finite values".to_string()));
        }
        let probability = match values {
            [raw] => sigmoid(*raw as f64),
            [neg, pos] => softmax_positive(*neg as f64, *pos as f64),
            _ => unreachable!("arity checked above"),
        };
        Ok(probability.clamp(0.0, 1.0))
    }
}

//! `SSTM` checkpoints: magic, u32 LE version, u32 LE length + JSON metadata, then LE f64 values.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sstam_core::saliency::{SaliencyNet, SaliencyNetConfig};
use sstam_core::spatial::{SpatialDetector, SpatialDetectorConfig};
use sstam_core::synth::PeaKind;
use sstam_core::temporal::{TemporalDetector, TemporalDetectorConfig};
use sstam_core::ParamStore;

use crate::error::{malformed, Error, Result};

pub const MAGIC: &[u8; 4] = b"SSTM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PeaKind>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub params: Vec<ParamMeta>,
}

/// A network that can be rebuilt from its configuration and refilled from flat values.
pub trait Checkpointable: Sized {
    const MODEL: &'static str;
    type Config: Serialize + DeserializeOwned;

    fn kind(&self) -> Option<PeaKind>;
    fn config(&self) -> &Self::Config;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn rebuild(config: Self::Config, kind: Option<PeaKind>) -> Result<Self>;
}

impl Checkpointable for SaliencyNet {
    const MODEL: &'static str = "saliency";
    type Config = SaliencyNetConfig;

    fn kind(&self) -> Option<PeaKind> {
        None
    }
    fn config(&self) -> &SaliencyNetConfig {
        SaliencyNet::config(self)
    }
    fn store(&self) -> &ParamStore {
        self.params()
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
    fn rebuild(config: SaliencyNetConfig, _: Option<PeaKind>) -> Result<Self> {
        Ok(SaliencyNet::new(config, 0)?)
    }
}

fn need_kind(kind: Option<PeaKind>, model: &str) -> Result<PeaKind> {
    kind.ok_or_else(|| {
        malformed(
            "checkpoint metadata",
            format!("{model} checkpoint without a kind"),
        )
    })
}

impl Checkpointable for SpatialDetector {
    const MODEL: &'static str = "spatial";
    type Config = SpatialDetectorConfig;

    fn kind(&self) -> Option<PeaKind> {
        Some(SpatialDetector::kind(self))
    }
    fn config(&self) -> &SpatialDetectorConfig {
        SpatialDetector::config(self)
    }
    fn store(&self) -> &ParamStore {
        self.params()
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
    fn rebuild(config: SpatialDetectorConfig, kind: Option<PeaKind>) -> Result<Self> {
        Ok(SpatialDetector::new(
            need_kind(kind, Self::MODEL)?,
            config,
            0,
        )?)
    }
}

impl Checkpointable for TemporalDetector {
    const MODEL: &'static str = "temporal";
    type Config = TemporalDetectorConfig;

    fn kind(&self) -> Option<PeaKind> {
        Some(TemporalDetector::kind(self))
    }
    fn config(&self) -> &TemporalDetectorConfig {
        TemporalDetector::config(self)
    }
    fn store(&self) -> &ParamStore {
        self.params()
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
    fn rebuild(config: TemporalDetectorConfig, kind: Option<PeaKind>) -> Result<Self> {
        Ok(TemporalDetector::new(
            need_kind(kind, Self::MODEL)?,
            config,
            0,
        )?)
    }
}

pub fn encode<M: Checkpointable>(model: &M, seed: u64) -> Result<Vec<u8>> {
    let store = model.store();
    let meta = CheckpointMeta {
        model: M::MODEL.to_string(),
        kind: model.kind(),
        config: serde_json::to_value(model.config())?,
        seed,
        params: store
            .layout()
            .into_iter()
            .map(|(name, shape)| ParamMeta { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let values = store.flat_values();
    let mut out = Vec::with_capacity(12 + json.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(json.len())
            .map_err(|_| malformed("checkpoint metadata", "too large"))?
            .to_le_bytes(),
    );
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Splits a checkpoint into its metadata and parameter values.
pub fn decode_raw(bytes: &[u8]) -> Result<(CheckpointMeta, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(malformed("checkpoint", "missing SSTM magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(malformed(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(malformed("checkpoint", "metadata block truncated"));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&body[..len])?;
    let raw = &body[len..];
    if raw.len() % 8 != 0 {
        return Err(malformed(
            "checkpoint",
            format!("{} value bytes is not a multiple of 8", raw.len()),
        ));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, values))
}

pub fn decode<M: Checkpointable>(bytes: &[u8]) -> Result<(M, CheckpointMeta)> {
    let (meta, values) = decode_raw(bytes)?;
    if meta.model != M::MODEL {
        return Err(Error::WrongModel {
            expected: M::MODEL.to_string(),
            found: meta.model,
        });
    }
    let config: M::Config = serde_json::from_value(meta.config.clone())?;
    let mut model = M::rebuild(config, meta.kind)?;
    let layout: Vec<(String, Vec<usize>)> = meta
        .params
        .iter()
        .map(|p| (p.name.clone(), p.shape.clone()))
        .collect();
    if model.store().layout() != layout {
        return Err(malformed(
            "checkpoint",
            "parameter layout does not match the architecture in its config",
        ));
    }
    model.store_mut().load_flat(&values)?;
    Ok((model, meta))
}

/// Decodes a detector and checks that it was trained for `kind`.
pub fn decode_kind<M: Checkpointable>(bytes: &[u8], kind: PeaKind) -> Result<M> {
    let (model, meta) = decode::<M>(bytes)?;
    if meta.kind != Some(kind) {
        let found = meta
            .kind
            .map_or("unknown".to_string(), |k| k.name().to_string());
        return Err(Error::WrongModel {
            expected: format!("{} {}", kind.name(), M::MODEL),
            found: format!("{found} {}", meta.model),
        });
    }
    Ok(model)
}

pub fn save<M: Checkpointable>(
    path: impl AsRef<std::path::Path>,
    model: &M,
    seed: u64,
) -> Result<()> {
    crate::error::write_file(path, &encode(model, seed)?)
}

pub fn load<M: Checkpointable>(path: impl AsRef<std::path::Path>) -> Result<M> {
    Ok(decode::<M>(&crate::error::read_file(path)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sstam_core::Tensor;

    fn small_spatial() -> SpatialDetector {
        SpatialDetector::new(
            PeaKind::Blurring,
            SpatialDetectorConfig {
                patch_side: 16,
                ..Default::default()
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn spatial_round_trip() {
        let det = small_spatial();
        let bytes = encode(&det, 9).unwrap();
        assert_eq!(&bytes[..4], b"SSTM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        let (back, meta) = decode::<SpatialDetector>(&bytes).unwrap();
        assert_eq!(meta.seed, 9);
        assert_eq!(meta.kind, Some(PeaKind::Blurring));
        let x = Tensor::full(&[3, 16, 16], 0.4);
        assert_eq!(det.probability(&x).unwrap(), back.probability(&x).unwrap());
        assert_eq!(encode(&back, 9).unwrap(), bytes);
    }

    #[test]
    fn kind_and_model_mismatch() {
        let bytes = encode(&small_spatial(), 1).unwrap();
        assert!(matches!(
            decode_kind::<SpatialDetector>(&bytes, PeaKind::Ringing),
            Err(Error::WrongModel { .. })
        ));
        assert!(decode_kind::<SpatialDetector>(&bytes, PeaKind::Blurring).is_ok());
        assert!(matches!(
            decode::<TemporalDetector>(&bytes),
            Err(Error::WrongModel { .. })
        ));
        assert!(decode::<SpatialDetector>(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode::<SpatialDetector>(b"SSTN\x01\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let bytes = encode(&small_spatial(), 1).unwrap();
        let (mut meta, values) = decode_raw(&bytes).unwrap();
        meta.params[0].name = "renamed".into();
        let json = serde_json::to_vec(&meta).unwrap();
        let mut forged = b"SSTM\x01\0\0\0".to_vec();
        forged.extend_from_slice(&(json.len() as u32).to_le_bytes());
        forged.extend_from_slice(&json);
        forged.extend(values.iter().flat_map(|v| v.to_le_bytes()));
        assert!(matches!(
            decode::<SpatialDetector>(&forged),
            Err(Error::Malformed { .. })
        ));
    }
}

//! Model parameter files.
//!
//! A file holds one training stage: `{"schema", "stage", ..., "heads": {name: head}}`
//! where each head lists its layers as `{shape, values, bias, activation}`
//! (row-major values) and carries its output transform tag.

use crate::encoder::{MlpHead, RiskHeads};
use crate::error::{Error, Result};
use crate::predictor::PredictorModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Predictor,
    Planner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    pub stage: Stage,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv: Option<bool>,
    pub heads: BTreeMap<String, MlpHead>,
}

impl ModelFile {
    pub fn from_predictor(model: &PredictorModel) -> Self {
        ModelFile {
            schema: MODEL_SCHEMA,
            stage: Stage::Predictor,
            horizon: model.horizon,
            modals: Some(model.modals),
            tv: None,
            heads: BTreeMap::from([("predictor".to_string(), model.mlp.clone())]),
        }
    }

    pub fn from_heads(heads: &RiskHeads) -> Self {
        ModelFile {
            schema: MODEL_SCHEMA,
            stage: Stage::Planner,
            horizon: heads.horizon,
            modals: None,
            tv: Some(heads.tv),
            heads: heads
                .heads()
                .into_iter()
                .map(|(n, h)| (n.to_string(), h.clone()))
                .collect(),
        }
    }

    fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::invariant(
                "schema",
                format!("unsupported model schema {}", self.schema),
            ));
        }
        if self.stage != stage {
            return Err(Error::invariant(
                "stage",
                format!("expected {stage:?} parameters, found {:?}", self.stage),
            ));
        }
        Ok(())
    }

    fn take(&mut self, name: &str) -> Result<MlpHead> {
        self.heads.remove(name).ok_or_else(|| Error::Shape {
            head: name.to_string(),
            detail: "missing from model file".into(),
        })
    }

    pub fn into_predictor(mut self) -> Result<PredictorModel> {
        self.expect_stage(Stage::Predictor)?;
        let model = PredictorModel {
            modals: self.modals.ok_or_else(|| Error::invariant("modals", "missing"))?,
            horizon: self.horizon,
            mlp: self.take("predictor")?,
        };
        model.check()?;
        Ok(model)
    }

    pub fn into_heads(mut self) -> Result<RiskHeads> {
        self.expect_stage(Stage::Planner)?;
        let tv = self.tv.ok_or_else(|| Error::invariant("tv", "missing"))?;
        let heads = RiskHeads {
            tv,
            horizon: self.horizon,
            beta: self.take("beta")?,
            lambda: self.take("lambda")?,
            w_smooth: self.take("w_smooth")?,
            w_d: self.take("w_d")?,
            v_bar: self.take("v_bar")?,
        };
        heads.check(tv)?;
        Ok(heads)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model file serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_predictor(path: impl AsRef<Path>) -> Result<PredictorModel> {
    ModelFile::load(path)?.into_predictor()
}

pub fn load_heads(path: impl AsRef<Path>) -> Result<RiskHeads> {
    ModelFile::load(path)?.into_heads()
}

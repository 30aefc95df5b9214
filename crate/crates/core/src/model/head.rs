use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cfa::{CfaParams, QanParams};
use crate::csca::{init_linear, CscaParams, SeParams};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::rng;

pub const CSCA_W_L: &str = "csca.w_l";
pub const CSCA_W_G: &str = "csca.w_g";
pub const CSCA_W_1: &str = "csca.w_1";
pub const SE_W_L: &str = "se.w_l";
pub const SE_W_1: &str = "se.w_1";
pub const SE_VIDEO_W_L: &str = "se_video.w_l";
pub const SE_VIDEO_W_1: &str = "se_video.w_1";
pub const FC: &str = "fc";
pub const CFA_W_2: &str = "cfa.w_2";
pub const QAN_V: &str = "qan.v";
pub const CLASSIFIER: &str = "classifier";

/// Architecture and optimizer settings. Serialized with flat keys; `C` and
/// `T` keep their conventional capitalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    #[serde(rename = "C")]
    pub channels: usize,
    pub d: usize,
    pub r1: usize,
    pub r2: usize,
    /// Frames sampled per training sequence.
    #[serde(rename = "T")]
    pub frames: usize,
    pub margin: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Identities per batch (P).
    pub batch_ids: usize,
    /// Sequences per identity in a batch (K).
    pub batch_seqs: usize,
}

impl Default for Hyper {
    /// Desk scale: small dims and the shortened 200/60 schedule.
    fn default() -> Self {
        Self {
            channels: 64,
            d: 16,
            r1: 4,
            r2: 2,
            frames: 8,
            margin: 0.25,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 200,
            lr_decay_every: 60,
            lr_decay_factor: 0.1,
            batch_ids: 4,
            batch_seqs: 4,
        }
    }
}

impl Hyper {
    /// Full-size dims and the original 350-epoch schedule.
    pub fn paper() -> Self {
        Self {
            channels: 2048,
            d: 512,
            epochs: 350,
            lr_decay_every: 100,
            ..Self::default()
        }
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = if self.lr_decay_every == 0 { 0 } else { epoch / self.lr_decay_every };
        self.lr * self.lr_decay_factor.powi(drops as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.d == 0 {
            return fail("C and d must be positive".into());
        }
        if self.r1 == 0 || self.channels % self.r1 != 0 {
            return fail(format!("r1 = {} must divide C = {}", self.r1, self.channels));
        }
        if self.r2 == 0 || self.d % self.r2 != 0 {
            return fail(format!("r2 = {} must divide d = {}", self.r2, self.d));
        }
        if self.frames < 2 || self.frames % 2 != 0 {
            return fail(format!("T = {} must be even and at least 2", self.frames));
        }
        if self.batch_ids < 2 || self.batch_seqs < 2 {
            return fail(format!(
                "batches need at least 2 identities × 2 sequences, got {} × {}",
                self.batch_ids, self.batch_seqs
            ));
        }
        for (name, v) in [
            ("margin", self.margin),
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lr_decay_factor", self.lr_decay_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Where channel attention happens before GAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelAttention {
    None,
    Csca,
    SeFrame,
    SeVideo,
    CscaV,
}

/// How frame features become a video feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    /// Temporal average pooling.
    Mean,
    Cfa,
    CfaV,
    Qan,
}

/// The compared head variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Csca,
    Cfa,
    CsaNet,
    SeFrame,
    SeVideo,
    CscaV,
    CfaV,
    Qan,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Baseline,
        Method::Csca,
        Method::Cfa,
        Method::CsaNet,
        Method::SeFrame,
        Method::SeVideo,
        Method::CscaV,
        Method::CfaV,
        Method::Qan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Csca => "csca",
            Method::Cfa => "cfa",
            Method::CsaNet => "csa_net",
            Method::SeFrame => "se_frame",
            Method::SeVideo => "se_video",
            Method::CscaV => "csca_v",
            Method::CfaV => "cfa_v",
            Method::Qan => "qan",
        }
    }

    pub fn attention(self) -> ChannelAttention {
        match self {
            Method::Csca | Method::CsaNet => ChannelAttention::Csca,
            Method::SeFrame => ChannelAttention::SeFrame,
            Method::SeVideo => ChannelAttention::SeVideo,
            Method::CscaV => ChannelAttention::CscaV,
            Method::Baseline | Method::Cfa | Method::CfaV | Method::Qan => ChannelAttention::None,
        }
    }

    pub fn aggregation(self) -> Aggregation {
        match self {
            Method::Cfa | Method::CsaNet => Aggregation::Cfa,
            Method::CfaV => Aggregation::CfaV,
            Method::Qan => Aggregation::Qan,
            _ => Aggregation::Mean,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Trainable head: the parameters of one method variant plus its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub hyper: Hyper,
    pub method: Method,
    pub store: ParamStore,
}

impl HeadParams {
    /// Fresh parameters. Each group draws from its own named stream, so
    /// variants that share a group (every method has `fc` and `classifier`)
    /// start from identical values for the same seed.
    pub fn init(hyper: Hyper, method: Method, classes: usize, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if classes < 2 {
            return Err(Error::Config(format!("classifier needs at least 2 classes, got {classes}")));
        }
        let (c, d) = (hyper.channels, hyper.d);
        let stream = |group: &str| rng::stream(seed, &format!("init/{group}"));
        let mut store = ParamStore::new();
        match method.attention() {
            ChannelAttention::None => {}
            ChannelAttention::Csca => {
                let p = CscaParams::init(c, hyper.r1, &mut stream("csca"))?;
                store.insert(CSCA_W_L, p.w_l);
                store.insert(CSCA_W_G, p.w_g);
                store.insert(CSCA_W_1, p.w_1);
            }
            ChannelAttention::SeFrame | ChannelAttention::SeVideo => {
                let p = SeParams::init(c, hyper.r1, &mut stream("se"))?;
                store.insert(SE_W_L, p.w_l);
                store.insert(SE_W_1, p.w_1);
            }
            ChannelAttention::CscaV => {
                let p = SeParams::init(c, hyper.r1, &mut stream("se"))?;
                store.insert(SE_W_L, p.w_l);
                store.insert(SE_W_1, p.w_1);
                let v = SeParams::init(c, hyper.r1, &mut stream("se_video"))?;
                store.insert(SE_VIDEO_W_L, v.w_l);
                store.insert(SE_VIDEO_W_1, v.w_1);
            }
        }
        store.insert(FC, init_linear(d, c, &mut stream("fc")));
        match method.aggregation() {
            Aggregation::Mean => {}
            Aggregation::Cfa | Aggregation::CfaV => {
                store.insert(CFA_W_2, CfaParams::init(d, hyper.r2, &mut stream("cfa"))?.w_2);
            }
            Aggregation::Qan => store.insert(QAN_V, QanParams::init(d, &mut stream("qan")).v),
        }
        store.insert(CLASSIFIER, init_linear(classes, d, &mut stream("classifier")));
        let head = Self { hyper, method, store };
        head.check()?;
        Ok(head)
    }

    /// Verifies that the store holds exactly the groups `method` needs, with
    /// shapes consistent with `hyper`.
    pub fn check(&self) -> Result<()> {
        let (c, d) = (self.hyper.channels, self.hyper.d);
        let hidden = c / self.hyper.r1.max(1);
        let mut expected: Vec<(&str, Vec<usize>)> = Vec::new();
        match self.method.attention() {
            ChannelAttention::None => {}
            ChannelAttention::Csca => {
                expected.push((CSCA_W_L, vec![hidden, c]));
                expected.push((CSCA_W_G, vec![hidden, c]));
                expected.push((CSCA_W_1, vec![c, hidden]));
            }
            ChannelAttention::SeFrame | ChannelAttention::SeVideo => {
                expected.push((SE_W_L, vec![hidden, c]));
                expected.push((SE_W_1, vec![c, hidden]));
            }
            ChannelAttention::CscaV => {
                expected.push((SE_W_L, vec![hidden, c]));
                expected.push((SE_W_1, vec![c, hidden]));
                expected.push((SE_VIDEO_W_L, vec![hidden, c]));
                expected.push((SE_VIDEO_W_1, vec![c, hidden]));
            }
        }
        expected.push((FC, vec![d, c]));
        match self.method.aggregation() {
            Aggregation::Mean => {}
            Aggregation::Cfa | Aggregation::CfaV => expected.push((CFA_W_2, vec![d / self.hyper.r2.max(1), d])),
            Aggregation::Qan => expected.push((QAN_V, vec![d])),
        }
        let classes = self.classes()?;
        expected.push((CLASSIFIER, vec![classes, d]));

        for (name, shape) in &expected {
            let t = self.store.require(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::dim("head parameter", shape, t.shape()));
            }
        }
        if let Some(extra) = self.store.names().find(|n| !expected.iter().any(|(e, _)| e == n)) {
            return Err(Error::Config(format!(
                "parameter `{extra}` does not belong to method {}",
                self.method
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> Result<usize> {
        Ok(self.store.require(CLASSIFIER)?.shape()[0])
    }

    pub fn fc(&self) -> Result<&Tensor> {
        self.store.require(FC)
    }

    pub fn csca(&self) -> Result<CscaParams> {
        CscaParams::new(
            self.store.require(CSCA_W_L)?.clone(),
            self.store.require(CSCA_W_G)?.clone(),
            self.store.require(CSCA_W_1)?.clone(),
        )
    }

    pub fn se(&self) -> Result<SeParams> {
        SeParams::new(self.store.require(SE_W_L)?.clone(), self.store.require(SE_W_1)?.clone())
    }

    pub fn se_video(&self) -> Result<SeParams> {
        SeParams::new(
            self.store.require(SE_VIDEO_W_L)?.clone(),
            self.store.require(SE_VIDEO_W_1)?.clone(),
        )
    }

    pub fn cfa(&self) -> Result<CfaParams> {
        CfaParams::new(self.store.require(CFA_W_2)?.clone())
    }

    pub fn qan(&self) -> Result<QanParams> {
        Ok(QanParams {
            v: self.store.require(QAN_V)?.clone(),
        })
    }
}

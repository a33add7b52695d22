//! `key = value` run configuration with namespaced keys (`net.d_h`, `train.lr`, `data.manifest`).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cmvqa::model::{QSource, Variant};
use cmvqa::train::TrainConfig;
use cmvqa::NetworkConfig;

use crate::Failure;

pub const KEYS: &[&str] = &[
    "net.d_q",
    "net.d_h",
    "net.d_z",
    "net.d_x",
    "net.d_v",
    "net.regions",
    "net.question_vocab",
    "net.answer_vocab",
    "net.max_answer_len",
    "net.lambda_lang",
    "net.lambda_epi",
    "net.q_source",
    "net.variant",
    "net.seed",
    "train.lr",
    "train.momentum",
    "train.clip",
    "train.iterations",
    "train.batch_size",
    "train.seed",
    "train.checkpoint_every",
    "data.manifest",
    "data.features",
    "data.taxonomy",
    "data.validation",
    "data.checkpoint",
    "data.out",
    "data.min_count",
    "toy.regions",
    "toy.train",
    "toy.test",
    "toy.questions_per_image",
    "toy.noise",
    "toy.positional",
    "toy.seed",
    "gradcheck.epsilon",
    "gradcheck.length",
    "gradcheck.seed",
    "gradcheck.max_entries",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self, Failure> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("{source}:{}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Failure::usage(format!("{source}:{}: {}", i + 1, e.message)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        if !KEYS.contains(&key) {
            return Err(Failure::usage(format!("unknown configuration key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply(&mut self, overrides: &[String]) -> Result<(), Failure> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("override `{o}` is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Failure::usage(format!("invalid value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Failure::usage(format!("missing required setting `{key}`")))
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, Failure> {
        self.get::<PathBuf>(key)
    }

    /// A path that must already exist.
    pub fn existing_path(&self, key: &str) -> Result<PathBuf, Failure> {
        let p: PathBuf = self.require(key)?;
        if !p.exists() {
            return Err(Failure::data(format!("`{key}`: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Network hyperparameters on top of the data-determined sizes.
    pub fn network(
        &self,
        d_x: usize,
        d_v: usize,
        regions: usize,
        question_vocab: usize,
        answer_vocab: usize,
    ) -> Result<NetworkConfig, Failure> {
        let base = NetworkConfig::new(d_x, d_v, regions, question_vocab, answer_vocab);
        let variant: Variant = self.get_or("net.variant", Variant::Full)?;
        let mut cfg = NetworkConfig {
            d_q: self.get_or("net.d_q", base.d_q)?,
            d_h: self.get_or("net.d_h", base.d_h)?,
            d_z: self.get_or("net.d_z", base.d_z)?,
            max_answer_len: self.get_or("net.max_answer_len", base.max_answer_len)?,
            q_source: self.get_or::<QSource>("net.q_source", base.q_source)?,
            ..base
        }
        .with_variant(variant);
        if variant == Variant::Full {
            cfg.lambda_lang = self.get_or("net.lambda_lang", cfg.lambda_lang)?;
            cfg.lambda_epi = self.get_or("net.lambda_epi", cfg.lambda_epi)?;
        } else if self.values.contains_key("net.lambda_lang") || self.values.contains_key("net.lambda_epi") {
            cfg.lambda_lang = self.get_or("net.lambda_lang", 0.0)?;
            cfg.lambda_epi = self.get_or("net.lambda_epi", 0.0)?;
        }
        cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn training(&self) -> Result<TrainConfig, Failure> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            lr: self.get_or("train.lr", d.lr)?,
            momentum: self.get_or("train.momentum", d.momentum)?,
            clip: self.get_or("train.clip", d.clip)?,
            iterations: self.get_or("train.iterations", d.iterations)?,
            batch_size: self.get_or("train.batch_size", d.batch_size)?,
            seed: self.get_or("train.seed", d.seed)?,
            checkpoint_every: self.get_or("train.checkpoint_every", d.checkpoint_every)?,
        };
        cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(cfg)
    }
}

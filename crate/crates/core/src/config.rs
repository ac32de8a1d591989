//! Run configuration.
//!
//! A flat `key = value` text file; `#` starts a comment. Unknown keys and
//! malformed values are rejected with the offending line number.
//!
//! ```text
//! rho_reid = 0.7
//! rho_occ = 0.3
//! flow = block_matching     # block_matching | zero | oracle
//! refiner = color_model     # color_model | identity | oracle
//! proposals = ncc           # ncc | oracle
//! descriptor = histogram
//! reid = true
//! max_iterations = 50
//! oracle_spec = scene.json  # needed by the oracle backends
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::engine::{Backends, EngineConfig};
use crate::error::{Error, Result};
use crate::flow::{BlockMatchingFlow, ZeroFlow};
use crate::propagation::{ColorModelRefiner, IdentityRefiner};
use crate::reid::{HistogramDescriptor, NccProposals};
use crate::synth::{self, OracleFlow, OracleProposals, OracleRefiner, SyntheticScene, SyntheticSpec};

macro_rules! backend_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!(
                        "unknown {} `{s}`, expected one of: {}",
                        stringify!($name),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }
    };
}

backend_enum!(FlowBackend { BlockMatching => "block_matching", Zero => "zero", Oracle => "oracle" });
backend_enum!(RefinerBackend { ColorModel => "color_model", Identity => "identity", Oracle => "oracle" });
backend_enum!(ProposalBackend { Ncc => "ncc", Oracle => "oracle" });
backend_enum!(DescriptorBackend { Histogram => "histogram" });

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub flow: FlowBackend,
    pub refiner: RefinerBackend,
    pub proposals: ProposalBackend,
    pub descriptor: DescriptorBackend,
    pub block_matching: BlockMatchingFlow,
    pub ncc: NccProposals,
    /// Scene description for the oracle backends.
    pub oracle_spec: Option<PathBuf>,
    pub oracle_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            flow: FlowBackend::BlockMatching,
            refiner: RefinerBackend::ColorModel,
            proposals: ProposalBackend::Ncc,
            descriptor: DescriptorBackend::Histogram,
            block_matching: BlockMatchingFlow::default(),
            ncc: NccProposals::default(),
            oracle_spec: None,
            oracle_seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| format!("bad value `{value}`: {e}"))
}

impl RunConfig {
    /// Sets one key. `line` is only used for error reporting.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let r: std::result::Result<(), String> = (|| {
            match key {
                "rho_reid" => self.engine.gate.rho_reid = parse_value(value)?,
                "rho_occ" => self.engine.gate.rho_occ = parse_value(value)?,
                "patch_size" => self.engine.propagation.patch_size = parse_value(value)?,
                "context_factor" => self.engine.propagation.context_factor = parse_value(value)?,
                "reid" => self.engine.reid_enabled = parse_value(value)?,
                "max_iterations" => self.engine.max_iterations = Some(parse_value(value)?),
                "flow" => self.flow = value.parse()?,
                "refiner" => self.refiner = value.parse()?,
                "proposals" => self.proposals = value.parse()?,
                "descriptor" => self.descriptor = value.parse()?,
                "block_window" => self.block_matching.window = parse_value(value)?,
                "block_radius" => self.block_matching.radius = parse_value(value)?,
                "ncc_threshold" => self.ncc.threshold = parse_value(value)?,
                "max_proposals" => self.ncc.max_proposals = parse_value(value)?,
                "oracle_spec" => self.oracle_spec = Some(PathBuf::from(value)),
                "oracle_seed" => self.oracle_seed = parse_value(value)?,
                _ => return Err(format!("unknown key `{key}`")),
            }
            Ok(())
        })();
        r.map_err(|message| Error::Config { line, message })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            cfg.set(key.trim(), value.trim(), i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `oracle_spec` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(spec), Some(dir)) = (&cfg.oracle_spec, path.parent()) {
            if spec.is_relative() {
                cfg.oracle_spec = Some(dir.join(spec));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if self.block_matching.window == 0 {
            return Err(Error::InvalidInput("block_window must be positive".into()));
        }
        if self.ncc.max_proposals == 0 {
            return Err(Error::InvalidInput("max_proposals must be positive".into()));
        }
        Ok(())
    }

    pub fn uses_oracle(&self) -> bool {
        self.flow == FlowBackend::Oracle
            || self.refiner == RefinerBackend::Oracle
            || self.proposals == ProposalBackend::Oracle
    }

    /// Renders the scene named by `oracle_spec`, if any.
    pub fn oracle_scene(&self) -> Result<Option<Arc<SyntheticScene>>> {
        let Some(path) = &self.oracle_spec else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec = serde_json::from_str(&text)?;
        Ok(Some(Arc::new(synth::generate(&spec, self.oracle_seed)?)))
    }

    pub fn backends(&self, scene: Option<Arc<SyntheticScene>>) -> Result<Backends> {
        let scene = || {
            scene
                .clone()
                .ok_or_else(|| Error::InvalidInput("oracle backends need `oracle_spec`".into()))
        };
        let mut b = Backends::default();
        b.flow = match self.flow {
            FlowBackend::BlockMatching => Box::new(self.block_matching),
            FlowBackend::Zero => Box::new(ZeroFlow),
            FlowBackend::Oracle => Box::new(OracleFlow::new(scene()?)),
        };
        b.refiner = match self.refiner {
            RefinerBackend::ColorModel => Box::new(ColorModelRefiner::default()),
            RefinerBackend::Identity => Box::new(IdentityRefiner),
            RefinerBackend::Oracle => Box::new(OracleRefiner::new(scene()?)),
        };
        b.proposals = match self.proposals {
            ProposalBackend::Ncc => Box::new(self.ncc.clone()),
            ProposalBackend::Oracle => Box::new(OracleProposals::new(scene()?)),
        };
        b.descriptor = match self.descriptor {
            DescriptorBackend::Histogram => Box::new(HistogramDescriptor),
        };
        Ok(b)
    }
}

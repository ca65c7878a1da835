use serde::{Deserialize, Serialize};

/// The independently seeded sources of run-to-run randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceId {
    ParamInit,
    DataShuffle,
    DataAugment,
    StochasticReg,
    #[serde(rename = "lowlevel_noise")]
    LowLevelNoise,
}

impl SourceId {
    pub const ALL: [SourceId; 5] = [
        SourceId::ParamInit,
        SourceId::DataShuffle,
        SourceId::DataAugment,
        SourceId::StochasticReg,
        SourceId::LowLevelNoise,
    ];

    /// Stream-derivation tag.
    pub fn tag(self) -> u32 {
        self as u32
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceId::ParamInit => "param_init",
            SourceId::DataShuffle => "data_shuffle",
            SourceId::DataAugment => "data_augment",
            SourceId::StochasticReg => "stochastic_reg",
            SourceId::LowLevelNoise => "lowlevel_noise",
        }
    }
}

/// Stream tag for the bit-flip probe, distinct from every [`SourceId`].
pub const BITFLIP_TAG: u32 = 5;

/// Low-level noise cannot be "seeded" in real kernel libraries, only turned
/// on or off, so its off state is a distinguished value rather than a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSeed {
    Deterministic,
    Seeded(u64),
}

impl NoiseSeed {
    pub fn seed(self) -> Option<u64> {
        match self {
            NoiseSeed::Deterministic => None,
            NoiseSeed::Seeded(s) => Some(s),
        }
    }
}

/// One seed per source for a single training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedVector {
    pub param_init: u64,
    pub data_shuffle: u64,
    pub data_augment: u64,
    pub stochastic_reg: u64,
    pub lowlevel_noise: NoiseSeed,
}

impl SeedVector {
    /// Every seedable source at `seed`, low-level noise off.
    pub fn fixed(seed: u64) -> Self {
        Self {
            param_init: seed,
            data_shuffle: seed,
            data_augment: seed,
            stochastic_reg: seed,
            lowlevel_noise: NoiseSeed::Deterministic,
        }
    }

    /// `None` for low-level noise in its deterministic state.
    pub fn get(&self, source: SourceId) -> Option<u64> {
        match source {
            SourceId::ParamInit => Some(self.param_init),
            SourceId::DataShuffle => Some(self.data_shuffle),
            SourceId::DataAugment => Some(self.data_augment),
            SourceId::StochasticReg => Some(self.stochastic_reg),
            SourceId::LowLevelNoise => self.lowlevel_noise.seed(),
        }
    }

    /// Sets a source's seed; for low-level noise this also enables it.
    pub fn set(&mut self, source: SourceId, seed: u64) {
        match source {
            SourceId::ParamInit => self.param_init = seed,
            SourceId::DataShuffle => self.data_shuffle = seed,
            SourceId::DataAugment => self.data_augment = seed,
            SourceId::StochasticReg => self.stochastic_reg = seed,
            SourceId::LowLevelNoise => self.lowlevel_noise = NoiseSeed::Seeded(seed),
        }
    }

    pub fn with(mut self, source: SourceId, seed: u64) -> Self {
        self.set(source, seed);
        self
    }

    /// Sources on which two vectors differ.
    pub fn differing_sources(&self, other: &SeedVector) -> Vec<SourceId> {
        SourceId::ALL
            .into_iter()
            .filter(|&s| self.get(s) != other.get(s))
            .collect()
    }
}

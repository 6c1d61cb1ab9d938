//! Named sub-seeds derived from one master seed.
//!
//! Every random stream in a run (training data, weight init, restarts) gets
//! its own seed `derive(master, label)`, so reruns of one stage reproduce
//! exactly without replaying the others.

/// Offset between a training-data seed and its test-data seed.
pub const TEST_SEED_OFFSET: u64 = 0x5EED_7E57_0000_0001;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ splitmix64(label_hash(label)))
}

/// Seed of the independent test set that pairs with training seed `train`.
pub fn test_seed(train: u64) -> u64 {
    train.wrapping_add(TEST_SEED_OFFSET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan { master }
    }

    pub fn data(&self) -> u64 {
        derive(self.master, "data")
    }

    pub fn test(&self) -> u64 {
        test_seed(self.data())
    }

    pub fn init(&self, model: &str) -> u64 {
        derive(self.master, &format!("init/{model}"))
    }

    pub fn restarts(&self, model: &str) -> u64 {
        derive(self.master, &format!("restart/{model}"))
    }
}

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine, Tensor};
use crate::rng;

/// How identity prototypes are drawn.
///
/// Channels are split into groups of `group_size`; each identity excites
/// `active_groups` of them with positive magnitudes and leaves the rest at
/// zero, which mimics post-ReLU backbone activations where a pedestrian lights
/// up a few part-level patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    /// Upper bound on |cosine| between any two prototypes.
    pub cap: f64,
    /// Channels per group; `0` picks `C/16` clamped to 1..=4.
    pub group_size: usize,
    /// Groups excited per identity; `0` picks a quarter of the groups (at least 1).
    pub active_groups: usize,
    /// Rejection attempts per identity before giving up.
    pub max_attempts: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            cap: 0.5,
            group_size: 0,
            active_groups: 0,
            max_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityBank {
    pub prototypes: Vec<Tensor>,
    pub seed: u64,
    pub cap: f64,
}

impl IdentityBank {
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototype(&self, id: usize) -> Result<&Tensor> {
        self.prototypes
            .get(id)
            .ok_or_else(|| Error::Config(format!("identity {id} not in bank of {}", self.len())))
    }
}

pub fn make_identity_bank(num_ids: usize, channels: usize, seed: u64) -> Result<IdentityBank> {
    make_identity_bank_with(num_ids, channels, seed, &BankConfig::default())
}

pub fn make_identity_bank_with(
    num_ids: usize,
    channels: usize,
    seed: u64,
    config: &BankConfig,
) -> Result<IdentityBank> {
    if num_ids < 2 {
        return Err(Error::Config(format!("identity bank needs at least 2 identities, got {num_ids}")));
    }
    if channels == 0 {
        return Err(Error::Config("identity bank needs at least one channel".into()));
    }
    let group_size = match config.group_size {
        0 => (channels / 16).clamp(1, 4),
        g => g,
    };
    if channels % group_size != 0 {
        return Err(Error::Config(format!(
            "group size {group_size} does not divide {channels} channels"
        )));
    }
    let groups = channels / group_size;
    let active = match config.active_groups {
        0 => (groups / 4).max(1),
        a => a,
    };
    if active > groups {
        return Err(Error::Config(format!("{active} active groups out of only {groups}")));
    }

    let mut r = rng::stream(seed, "identity-bank");
    let mut prototypes: Vec<Tensor> = Vec::with_capacity(num_ids);
    for id in 0..num_ids {
        let mut accepted = None;
        for _ in 0..config.max_attempts {
            let candidate = draw_prototype(&mut r, groups, group_size, active);
            let separable = prototypes
                .iter()
                .all(|p| cosine(p, &candidate).map(|c| c.abs() <= config.cap).unwrap_or(false));
            if separable {
                accepted = Some(candidate);
                break;
            }
        }
        let proto = accepted.ok_or_else(|| {
            Error::Config(format!(
                "could not place identity {id} under cosine cap {} after {} attempts",
                config.cap, config.max_attempts
            ))
        })?;
        prototypes.push(proto);
    }
    Ok(IdentityBank {
        prototypes,
        seed,
        cap: config.cap,
    })
}

fn draw_prototype(r: &mut impl Rng, groups: usize, group_size: usize, active: usize) -> Tensor {
    let mut data = vec![0.0; groups * group_size];
    for g in sample(r, groups, active) {
        for v in &mut data[g * group_size..(g + 1) * group_size] {
            *v = r.random_range(0.5..1.5);
        }
    }
    let v = Tensor::vector(data);
    let n = v.norm();
    v.scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_small_prototypes() {
        let bank = make_identity_bank(2, 4, 3).unwrap();
        assert_eq!(bank.len(), 2);
        for p in &bank.prototypes {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        assert!(cosine(&bank.prototypes[0], &bank.prototypes[1]).unwrap().abs() <= 0.5);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_identity_bank(5, 16, 9).unwrap(), make_identity_bank(5, 16, 9).unwrap());
        assert_ne!(make_identity_bank(5, 16, 9).unwrap(), make_identity_bank(5, 16, 10).unwrap());
    }

    #[test]
    fn thirty_identities_respect_cap() {
        let bank = make_identity_bank(30, 64, 1).unwrap();
        let mut pairs = 0;
        for i in 0..30 {
            for j in (i + 1)..30 {
                assert!(cosine(&bank.prototypes[i], &bank.prototypes[j]).unwrap() <= 0.5);
                pairs += 1;
            }
        }
        assert_eq!(pairs, 435);
    }

    #[test]
    fn impossible_cap_is_a_config_error() {
        let config = BankConfig {
            cap: 0.1,
            max_attempts: 50,
            ..BankConfig::default()
        };
        // one channel: every prototype is the same unit vector
        assert!(matches!(
            make_identity_bank_with(3, 1, 0, &config),
            Err(Error::Config(_))
        ));
        assert!(make_identity_bank(1, 8, 0).is_err());
    }
}

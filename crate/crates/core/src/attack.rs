//! Fault and spoofing injection schedules.
//!
//! A schedule is a list of half-open step windows `[start, end)`, each
//! carrying a set of target robots and the constant offset applied to each.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockvec::{BlockLayout, BlockVec};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPhase {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub targets: Vec<usize>,
    /// One offset per target, padded with zeros to the robot's block dimension.
    pub offsets: Vec<Vec<f64>>,
}

impl AttackPhase {
    pub fn contains(&self, k: usize) -> bool {
        self.start <= k && k < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSchedule {
    pub phases: Vec<AttackPhase>,
}

impl AttackSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(phases: Vec<AttackPhase>) -> Result<Self> {
        let s = Self { phases };
        s.validate_structure()?;
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sched: Self = serde_json::from_str(s)?;
        sched.validate_structure()?;
        Ok(sched)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    fn validate_structure(&self) -> Result<()> {
        for (p, ph) in self.phases.iter().enumerate() {
            if ph.start >= ph.end {
                return Err(Error::Config(format!(
                    "attack phase {p}: start {} must be < end {}",
                    ph.start, ph.end
                )));
            }
            if ph.targets.is_empty() {
                return Err(Error::Config(format!("attack phase {p}: no targets")));
            }
            if ph.offsets.len() != ph.targets.len() {
                return Err(Error::Config(format!(
                    "attack phase {p}: {} targets but {} offsets",
                    ph.targets.len(),
                    ph.offsets.len()
                )));
            }
            let mut seen = ph.targets.clone();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("attack phase {p}: repeated target")));
            }
            if ph.offsets.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("attack phase {p}: non-finite offset")));
            }
        }
        for (a, pa) in self.phases.iter().enumerate() {
            for (b, pb) in self.phases.iter().enumerate().skip(a + 1) {
                if pa.start >= pb.end || pb.start >= pa.end {
                    continue;
                }
                for (ta, oa) in pa.targets.iter().zip(&pa.offsets) {
                    for (tb, ob) in pb.targets.iter().zip(&pb.offsets) {
                        if ta == tb && oa != ob {
                            return Err(Error::Config(format!(
                                "attack phases {a} and {b} overlap on robot {ta} with different offsets"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Full validation against a swarm layout; returns sparsity warnings.
    pub fn validate(&self, layout: &BlockLayout) -> Result<Vec<String>> {
        self.validate_structure()?;
        let n = layout.num_blocks();
        for (p, ph) in self.phases.iter().enumerate() {
            for (t, o) in ph.targets.iter().zip(&ph.offsets) {
                if *t >= n {
                    return Err(Error::Config(format!(
                        "attack phase {p}: target {t} out of range for {n} robots"
                    )));
                }
                if o.len() > layout.block_dim(*t) {
                    return Err(Error::Config(format!(
                        "attack phase {p}: offset for robot {t} has {} components, block has {}",
                        o.len(),
                        layout.block_dim(*t)
                    )));
                }
            }
        }
        let warnings = self.sparsity_warnings(n);
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }

    /// Phases whose target count is not below half the swarm.
    pub fn sparsity_warnings(&self, n: usize) -> Vec<String> {
        self.phases
            .iter()
            .enumerate()
            .filter(|(_, ph)| 2 * ph.targets.len() >= n)
            .map(|(p, ph)| {
                format!(
                    "attack phase {p} targets {} of {n} robots; reconstruction assumes few compromised robots",
                    ph.targets.len()
                )
            })
            .collect()
    }

    /// Targets (ascending) and stacked offsets active at step `k`.
    pub fn active_faults(&self, k: usize, layout: &BlockLayout) -> Result<(Vec<usize>, BlockVec)> {
        let mut active: BTreeMap<usize, &[f64]> = BTreeMap::new();
        for ph in self.phases.iter().filter(|ph| ph.contains(k)) {
            for (t, o) in ph.targets.iter().zip(&ph.offsets) {
                active.insert(*t, o);
            }
        }
        let mut f = BlockVec::zeros(layout.clone());
        for (&t, o) in &active {
            if t >= layout.num_blocks() {
                return Err(Error::Index {
                    what: "attack target",
                    index: t,
                    len: layout.num_blocks(),
                });
            }
            let block = f.block_mut(t);
            if o.len() > block.len() {
                return Err(Error::Shape(format!(
                    "offset for robot {t} has {} components, block has {}",
                    o.len(),
                    block.len()
                )));
            }
            block[..o.len()].copy_from_slice(o);
        }
        Ok((active.into_keys().collect(), f))
    }

    /// Largest stacked offset norm over the schedule.
    pub fn peak_norm(&self, layout: &BlockLayout) -> Result<f64> {
        let mut peak: f64 = 0.0;
        for ph in &self.phases {
            peak = peak.max(self.active_faults(ph.start, layout)?.1.norm2());
        }
        Ok(peak)
    }

    /// Last step touched by any phase (exclusive).
    pub fn horizon(&self) -> usize {
        self.phases.iter().map(|p| p.end).max().unwrap_or(0)
    }

    /// Random schedule: for each `(start, end, count)` window, `count` robots
    /// drawn without replacement (disjoint across windows when `disjoint`)
    /// get offsets of length `magnitude` in a random horizontal direction.
    pub fn random(
        n: usize,
        dim: usize,
        windows: &[(usize, usize, usize)],
        magnitude: f64,
        disjoint: bool,
        seed: u64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("dimension", "horizontal offsets need at least 2 components"));
        }
        let total: usize = windows.iter().map(|w| w.2).sum();
        if disjoint && total > n {
            return Err(Error::Config(format!("{total} disjoint targets requested from {n} robots")));
        }
        let mut trng = stream(seed, Purpose::AttackTargets, 0);
        let mut orng = stream(seed, Purpose::AttackOffsets, 0);
        let mut pool: Vec<usize> = (0..n).collect();
        pool.shuffle(&mut trng);
        let mut next = 0;
        let mut phases = Vec::with_capacity(windows.len());
        for &(start, end, count) in windows {
            if count > n {
                return Err(Error::Config(format!("{count} targets requested from {n} robots")));
            }
            let mut targets: Vec<usize> = if disjoint {
                let t = pool[next..next + count].to_vec();
                next += count;
                t
            } else {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut trng);
                p.truncate(count);
                p
            };
            targets.sort_unstable();
            let offsets = targets
                .iter()
                .map(|_| {
                    let th = orng.gen::<f64>() * std::f64::consts::TAU;
                    let mut o = vec![0.0; dim];
                    o[0] = magnitude * th.cos();
                    o[1] = magnitude * th.sin();
                    o
                })
                .collect();
            phases.push(AttackPhase {
                start,
                end,
                targets,
                offsets,
            });
        }
        Self::new(phases)
    }
}

//! Binary subspace masks and the empirical lens distribution over them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Tolerance on the total probability of a lens distribution.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Diagonal of a 0/1 projection matrix. Never all-zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SubspaceMask {
    bits: Vec<u8>,
}

impl SubspaceMask {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return input("mask must have at least one coordinate");
        }
        if bits.iter().any(|&b| b > 1) {
            return input("mask bits must be 0 or 1");
        }
        if bits.iter().all(|&b| b == 0) {
            return input("mask must select at least one feature");
        }
        Ok(Self { bits })
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        Self::new(bits.iter().map(|&b| u8::from(b)).collect())
    }

    pub fn full(width: usize) -> Self {
        Self {
            bits: vec![1; width.max(1)],
        }
    }

    /// Mask selecting exactly `features` out of `width`.
    pub fn from_support(width: usize, features: &[usize]) -> Result<Self> {
        let mut bits = vec![0; width];
        for &f in features {
            if f >= width {
                return input(format!("feature {f} out of range for width {width}"));
            }
            bits[f] = 1;
        }
        Self::new(bits)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.bits.iter().all(|&b| b == 1)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

impl fmt::Display for SubspaceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for SubspaceMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => input(format!("invalid mask character {other:?}")),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }
}

impl TryFrom<String> for SubspaceMask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SubspaceMask> for String {
    fn from(m: SubspaceMask) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensEntry {
    pub mask: SubspaceMask,
    pub probability: f64,
    /// Number of draws that produced this mask.
    pub count: usize,
}

/// Deduplicated masks with empirical probabilities, sorted by mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensDistribution {
    entries: Vec<LensEntry>,
    sample_count: usize,
}

impl LensDistribution {
    /// Builds the distribution from raw draws. The result does not depend on
    /// the order of `draws`.
    pub fn from_draws<I: IntoIterator<Item = SubspaceMask>>(draws: I) -> Result<Self> {
        let mut counts: BTreeMap<SubspaceMask, usize> = BTreeMap::new();
        for m in draws {
            *counts.entry(m).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: BTreeMap<SubspaceMask, usize>) -> Result<Self> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return input("lens distribution needs at least one draw");
        }
        let entries = counts
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(mask, count)| LensEntry {
                probability: count as f64 / total as f64,
                mask,
                count,
            })
            .collect();
        Self::validated(entries, total)
    }

    /// Builds the distribution from explicit `(mask, probability)` pairs.
    pub fn from_weights(weights: Vec<(SubspaceMask, f64)>) -> Result<Self> {
        let mut entries: Vec<LensEntry> = weights
            .into_iter()
            .map(|(mask, probability)| LensEntry {
                mask,
                probability,
                count: 0,
            })
            .collect();
        entries.sort_by(|a, b| a.mask.cmp(&b.mask));
        Self::validated(entries, 0)
    }

    fn validated(entries: Vec<LensEntry>, sample_count: usize) -> Result<Self> {
        let Some(first) = entries.first() else {
            return input("lens distribution is empty");
        };
        let width = first.mask.width();
        if entries.iter().any(|e| e.mask.width() != width) {
            return input("lens masks have differing widths");
        }
        if entries.windows(2).any(|w| w[0].mask == w[1].mask) {
            return input("lens masks must be distinct");
        }
        if entries
            .iter()
            .any(|e| !(e.probability > 0.0 && e.probability <= 1.0))
        {
            return input("lens probabilities must lie in (0, 1]");
        }
        let total: f64 = entries.iter().map(|e| e.probability).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return input(format!("lens probabilities sum to {total}, not 1"));
        }
        Ok(Self {
            entries,
            sample_count,
        })
    }

    pub fn entries(&self) -> &[LensEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn width(&self) -> usize {
        self.entries[0].mask.width()
    }

    pub fn probability_of(&self, mask: &SubspaceMask) -> f64 {
        self.entries
            .iter()
            .find(|e| &e.mask == mask)
            .map_or(0.0, |e| e.probability)
    }

    /// Sampled frequency of the identity (all-ones) mask.
    pub fn identity_frequency(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.mask.is_identity())
            .fold(0.0, |acc, e| acc + e.probability)
    }

    /// Draws one mask according to the entry probabilities.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &SubspaceMask {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for e in &self.entries {
            acc += e.probability;
            if u < acc {
                return &e.mask;
            }
        }
        &self.entries[self.entries.len() - 1].mask
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mask", "probability", "count"])?;
        for e in &self.entries {
            w.write_record([
                e.mask.to_string(),
                e.probability.to_string(),
                e.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            mask: String,
            probability: f64,
            count: usize,
        }
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        let mut total = 0;
        for row in r.deserialize() {
            let row: Row = row?;
            total += row.count;
            entries.push(LensEntry {
                mask: row.mask.parse()?,
                probability: row.probability,
                count: row.count,
            });
        }
        entries.sort_by(|a, b| a.mask.cmp(&b.mask));
        Self::validated(entries, total)
    }
}

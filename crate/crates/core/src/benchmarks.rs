//! Seeded synthetic tasks: long-dependency prefix classification and 1-D
//! function fitting.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TargetFn;
use crate::math::Rng;
use crate::training::Sample;

/// Where non-prefix symbols are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseAlphabet {
    /// All `A` symbols, including the class symbols.
    #[default]
    Shared,
    /// Only symbols `num_classes..A`.
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefixTaskSpec {
    pub seq_len: usize,
    pub prefix_len: usize,
    pub num_classes: usize,
    pub alphabet: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub noise: NoiseAlphabet,
}

impl PrefixTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::arg("need at least 2 classes"));
        }
        if self.alphabet < self.num_classes {
            return Err(Error::arg(format!(
                "alphabet size {} is smaller than the number of classes {}",
                self.alphabet, self.num_classes
            )));
        }
        if self.noise == NoiseAlphabet::Disjoint && self.alphabet == self.num_classes {
            return Err(Error::arg("disjoint noise needs alphabet > num_classes"));
        }
        if self.prefix_len == 0 || self.seq_len <= self.prefix_len {
            return Err(Error::arg(format!(
                "need 1 ≤ prefix_len < T, got prefix_len {} and T {}",
                self.prefix_len, self.seq_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seq_len: usize,
    pub alphabet: usize,
    pub prefix_len: usize,
    pub num_classes: usize,
    pub noise: NoiseAlphabet,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub label: usize,
    pub symbols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub meta: DatasetMeta,
    pub records: Vec<SequenceRecord>,
}

/// Train and test splits with independent noise streams.
pub fn gen_prefix_task(spec: &PrefixTaskSpec, seed: u64) -> Result<(SequenceDataset, SequenceDataset)> {
    spec.validate()?;
    let mut root = Rng::seed(seed);
    let mut train_rng = root.fork();
    let mut test_rng = root.fork();
    let train = gen_split(spec, spec.n_train, seed, Split::Train, &mut train_rng);
    let test = gen_split(spec, spec.n_test, seed, Split::Test, &mut test_rng);
    Ok((train, test))
}

fn gen_split(spec: &PrefixTaskSpec, n: usize, seed: u64, split: Split, rng: &mut Rng) -> SequenceDataset {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.num_classes).collect();
    rng.shuffle(&mut labels);
    let noise_lo = match spec.noise {
        NoiseAlphabet::Shared => 0,
        NoiseAlphabet::Disjoint => spec.num_classes,
    };
    let records = labels
        .into_iter()
        .map(|label| {
            let mut symbols = vec![label; spec.prefix_len];
            symbols.extend((spec.prefix_len..spec.seq_len).map(|_| noise_lo + rng.index(spec.alphabet - noise_lo)));
            SequenceRecord { label, symbols }
        })
        .collect();
    SequenceDataset {
        meta: DatasetMeta {
            seq_len: spec.seq_len,
            alphabet: spec.alphabet,
            prefix_len: spec.prefix_len,
            num_classes: spec.num_classes,
            noise: spec.noise,
            seed,
            split,
        },
        records,
    }
}

/// The label implied by a sequence's prefix, or `None` if the prefix is
/// not a constant class symbol.
pub fn prefix_label(meta: &DatasetMeta, symbols: &[usize]) -> Option<usize> {
    let first = *symbols.first()?;
    let prefix = symbols.get(..meta.prefix_len)?;
    (first < meta.num_classes && prefix.iter().all(|s| *s == first)).then_some(first)
}

pub fn one_hot(symbol: usize, alphabet: usize) -> Vec<f64> {
    let mut v = vec![0.0; alphabet];
    v[symbol] = 1.0;
    v
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One-hot inputs of width `A`.
    pub fn to_samples(&self) -> Vec<Sample> {
        self.records
            .iter()
            .map(|r| Sample {
                inputs: r.symbols.iter().map(|s| one_hot(*s, self.meta.alphabet)).collect(),
                label: r.label,
            })
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.meta.num_classes];
        for r in &self.records {
            c[r.label] += 1;
        }
        c
    }

    /// One `{"label":..,"symbols":[..]}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads records and checks them against `meta`.
    pub fn read_jsonl<R: BufRead>(meta: DatasetMeta, r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::arg(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SequenceRecord =
                serde_json::from_str(&line).map_err(|e| Error::arg(format!("line {}: {e}", i + 1)))?;
            if rec.symbols.len() != meta.seq_len {
                return Err(Error::arg(format!(
                    "line {}: sequence length {} differs from T = {}",
                    i + 1,
                    rec.symbols.len(),
                    meta.seq_len
                )));
            }
            if rec.label >= meta.num_classes || rec.symbols.iter().any(|s| *s >= meta.alphabet) {
                return Err(Error::arg(format!("line {}: label or symbol out of range", i + 1)));
            }
            records.push(rec);
        }
        Ok(SequenceDataset { meta, records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittingDataset {
    pub function: TargetFn,
    pub range: (f64, f64),
    pub seed: u64,
    pub pairs: Vec<(f64, f64)>,
}

/// `n` inputs uniform in `range` with exact targets.
pub fn gen_fitting_task(function: TargetFn, range: (f64, f64), n: usize, seed: u64) -> Result<FittingDataset> {
    if n < 2 {
        return Err(Error::arg("fitting task needs n ≥ 2"));
    }
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::arg(format!("invalid range [{lo}, {hi}]")));
    }
    let mut rng = Rng::seed(seed);
    let pairs = (0..n)
        .map(|_| {
            let x = rng.uniform(lo, hi);
            (x, function.eval(x))
        })
        .collect();
    Ok(FittingDataset {
        function,
        range,
        seed,
        pairs,
    })
}

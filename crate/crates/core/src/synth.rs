//! Synthetic multi-domain parallel corpora with controlled noise.
//!
//! The generator builds a small world where the whole pipeline's story is
//! checkable end to end: each domain gets its own disjoint vocabulary and a
//! fixed one-to-one source→target token mapping, so a clean pair is a
//! perfect "translation" a model can actually learn. A chosen fraction of
//! the training pairs is then corrupted by permuting targets among the
//! corrupted pairs — target-side marginals stay intact, the alignment
//! breaks — which is exactly the kind of damage a translation-model quality
//! feature can see and a source-side language-model feature cannot.
//!
//! Alongside the noisy training mix the generator emits, per domain: clean
//! trusted seed pairs (for model adaptation), clean validation pairs, and
//! monolingual source text (for language-model features), plus a pooled
//! cross-domain monolingual corpus for the base language model. Everything
//! derives from one seed; the same configuration always reproduces the same
//! corpus, byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Shape of the generated world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Master seed; every stream below derives from it.
    pub seed: u64,
    /// Domain names (sorted and deduplicated internally; used in file
    /// names, so keep them path-safe).
    pub domains: Vec<String>,
    /// Source-vocabulary size per domain (targets mirror it).
    pub vocab_per_domain: usize,
    /// Training pairs contributed by each domain.
    pub train_per_domain: usize,
    /// Fraction of the pooled training set to corrupt, in `[0, 1)`.
    pub noise_fraction: f64,
    /// Clean trusted pairs per domain.
    pub seed_pairs_per_domain: usize,
    /// Clean validation pairs per domain.
    pub validation_per_domain: usize,
    /// Monolingual source sentences per domain.
    pub monolingual_per_domain: usize,
    /// Sentence length bounds, inclusive.
    pub min_len: usize,
    /// Longest sentence generated.
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            seed: 0,
            domains: vec!["legal".into(), "medical".into()],
            vocab_per_domain: 60,
            train_per_domain: 300,
            noise_fraction: 0.25,
            seed_pairs_per_domain: 40,
            validation_per_domain: 60,
            monolingual_per_domain: 200,
            min_len: 3,
            max_len: 8,
        }
    }
}

/// Ground-truth annotation for one training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairLabel {
    /// Domain the pair's source came from.
    pub domain: String,
    /// True when the target was replaced by another pair's target.
    pub noisy: bool,
}

/// A generated world: noisy training mix plus clean per-domain resources.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// Pooled training pairs, domain-shuffled; ids equal positions.
    pub train: Vec<SentencePair>,
    /// Ground truth aligned with `train` by position.
    pub labels: Vec<PairLabel>,
    /// Clean trusted pairs per domain.
    pub seeds: BTreeMap<String, Vec<SentencePair>>,
    /// Clean held-out pairs per domain.
    pub validation: BTreeMap<String, Vec<SentencePair>>,
    /// Monolingual source sentences per domain.
    pub monolingual: BTreeMap<String, Vec<String>>,
    /// Pooled cross-domain monolingual source text.
    pub base_monolingual: Vec<String>,
}

struct DomainVocab {
    source: Vec<String>,
    target: Vec<String>,
}

impl DomainVocab {
    fn new(domain: &str, size: usize) -> DomainVocab {
        DomainVocab {
            source: (0..size).map(|k| format!("{domain}s{k}")).collect(),
            target: (0..size).map(|k| format!("{domain}t{k}")).collect(),
        }
    }

    /// A random sentence as (source tokens, aligned target tokens).
    fn sentence(
        &self,
        rng: &mut ChaCha8Rng,
        min_len: usize,
        max_len: usize,
    ) -> (Vec<String>, Vec<String>) {
        let len = rng.random_range(min_len..=max_len);
        let mut src = Vec::with_capacity(len);
        let mut tgt = Vec::with_capacity(len);
        for _ in 0..len {
            let k = rng.random_range(0..self.source.len());
            src.push(self.source[k].clone());
            tgt.push(self.target[k].clone());
        }
        (src, tgt)
    }
}

fn pair_from_tokens(id: u64, src: &[String], tgt: &[String]) -> SentencePair {
    SentencePair::from_text(id, &src.join(" "), &tgt.join(" "))
        .expect("generated sentences are never empty")
}

/// Generate a world from the configuration.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    validate(config)?;
    let mut domains = config.domains.clone();
    domains.sort();

    let vocabs: BTreeMap<String, DomainVocab> = domains
        .iter()
        .map(|d| (d.clone(), DomainVocab::new(d, config.vocab_per_domain)))
        .collect();

    // Training pool: per-domain clean pairs, then one global shuffle so the
    // file interleaves domains.
    let mut pool: Vec<(String, Vec<String>, Vec<String>)> = Vec::new();
    for d in &domains {
        let mut rng = seeded_rng(config.seed, &format!("train:{d}"));
        let vocab = &vocabs[d];
        for _ in 0..config.train_per_domain {
            let (src, tgt) = vocab.sentence(&mut rng, config.min_len, config.max_len);
            pool.push((d.clone(), src, tgt));
        }
    }
    let mut shuffle_rng = seeded_rng(config.seed, "train-shuffle");
    for i in (1..pool.len()).rev() {
        let j = shuffle_rng.random_range(0..=i);
        pool.swap(i, j);
    }

    // Corrupt a fraction: pick positions by partial Fisher-Yates, then
    // rotate the targets among the picked pairs in pick order, so every
    // corrupted pair carries some other pair's target.
    let n = pool.len();
    let n_noisy = (config.noise_fraction * n as f64).floor() as usize;
    let mut noisy = vec![false; n];
    if n_noisy >= 2 {
        let mut rng = seeded_rng(config.seed, "noise");
        let mut positions: Vec<usize> = (0..n).collect();
        for i in 0..n_noisy {
            let j = rng.random_range(i..positions.len());
            positions.swap(i, j);
        }
        let picked = &positions[..n_noisy];
        let first_target = pool[picked[0]].2.clone();
        for w in 0..n_noisy - 1 {
            pool[picked[w]].2 = pool[picked[w + 1]].2.clone();
        }
        pool[picked[n_noisy - 1]].2 = first_target;
        for &p in picked {
            noisy[p] = true;
        }
    }

    let train: Vec<SentencePair> = pool
        .iter()
        .enumerate()
        .map(|(i, (_, src, tgt))| pair_from_tokens(i as u64, src, tgt))
        .collect();
    let labels: Vec<PairLabel> = pool
        .iter()
        .zip(&noisy)
        .map(|((d, _, _), &noisy)| PairLabel {
            domain: d.clone(),
            noisy,
        })
        .collect();

    // Clean per-domain resources, each from its own derived stream.
    let mut seeds = BTreeMap::new();
    let mut validation = BTreeMap::new();
    let mut monolingual = BTreeMap::new();
    for d in &domains {
        let vocab = &vocabs[d];
        let clean_set = |tag: &str, count: usize| -> Vec<SentencePair> {
            let mut rng = seeded_rng(config.seed, &format!("{tag}:{d}"));
            (0..count)
                .map(|i| {
                    let (src, tgt) = vocab.sentence(&mut rng, config.min_len, config.max_len);
                    pair_from_tokens(i as u64, &src, &tgt)
                })
                .collect()
        };
        seeds.insert(d.clone(), clean_set("seed", config.seed_pairs_per_domain));
        validation.insert(d.clone(), clean_set("valid", config.validation_per_domain));

        let mut rng = seeded_rng(config.seed, &format!("mono:{d}"));
        let sentences: Vec<String> = (0..config.monolingual_per_domain)
            .map(|_| {
                vocab
                    .sentence(&mut rng, config.min_len, config.max_len)
                    .0
                    .join(" ")
            })
            .collect();
        monolingual.insert(d.clone(), sentences);
    }
    let base_monolingual: Vec<String> = domains
        .iter()
        .flat_map(|d| monolingual[d].iter().cloned())
        .collect();

    Ok(SynthCorpus {
        train,
        labels,
        seeds,
        validation,
        monolingual,
        base_monolingual,
    })
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.domains.is_empty() {
        return Err(Error::invalid("at least one domain is required"));
    }
    let mut sorted = config.domains.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != config.domains.len() {
        return Err(Error::invalid("domain names must be unique"));
    }
    for d in &config.domains {
        if d.is_empty()
            || d.chars()
                .any(|c| c.is_whitespace() || c == '/' || c == '\\' || c == '.')
        {
            return Err(Error::invalid(format!(
                "domain name '{d}' must be non-empty and path-safe"
            )));
        }
    }
    if config.vocab_per_domain == 0
        || config.train_per_domain == 0
        || config.seed_pairs_per_domain == 0
        || config.validation_per_domain == 0
        || config.monolingual_per_domain == 0
    {
        return Err(Error::invalid("all corpus sizes must be positive"));
    }
    if !(0.0..1.0).contains(&config.noise_fraction) {
        return Err(Error::invalid(format!(
            "noise fraction must lie in [0, 1), got {}",
            config.noise_fraction
        )));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::invalid(format!(
            "bad sentence length range [{}, {}]",
            config.min_len, config.max_len
        )));
    }
    Ok(())
}

fn write_pairs(path: &Path, pairs: &[SentencePair]) -> Result<()> {
    let shown = path.display().to_string();
    let mut out = Vec::new();
    for p in pairs {
        writeln!(out, "{}\t{}", p.source_text(), p.target_text())
            .expect("writing to memory cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(shown, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let shown = path.display().to_string();
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(shown, e))
}

impl SynthCorpus {
    /// Write the world as the file layout the command-line tools consume:
    ///
    /// ```text
    /// dir/
    ///   train.tsv              source \t target (ids = line order)
    ///   labels.tsv             id \t domain \t clean|noisy
    ///   ratings.tsv            id \t rating (1 clean, 0 corrupted)
    ///   seeds/<domain>.tsv
    ///   validation/<domain>.tsv
    ///   mono/base.txt          one sentence per line
    ///   mono/<domain>.txt
    /// ```
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["seeds", "validation", "mono"] {
            std::fs::create_dir_all(dir.join(sub))
                .map_err(|e| Error::io(dir.join(sub).display().to_string(), e))?;
        }
        write_pairs(&dir.join("train.tsv"), &self.train)?;

        let labels_path = dir.join("labels.tsv");
        let mut out = Vec::new();
        for (p, l) in self.train.iter().zip(&self.labels) {
            writeln!(
                out,
                "{}\t{}\t{}",
                p.id,
                l.domain,
                if l.noisy { "noisy" } else { "clean" }
            )
            .expect("writing to memory cannot fail");
        }
        std::fs::write(&labels_path, out)
            .map_err(|e| Error::io(labels_path.display().to_string(), e))?;

        let rating_lines: Vec<String> = self
            .train
            .iter()
            .zip(self.ratings())
            .map(|(p, r)| format!("{}\t{r}", p.id))
            .collect();
        write_lines(&dir.join("ratings.tsv"), &rating_lines)?;

        for (d, pairs) in &self.seeds {
            write_pairs(&dir.join("seeds").join(format!("{d}.tsv")), pairs)?;
        }
        for (d, pairs) in &self.validation {
            write_pairs(&dir.join("validation").join(format!("{d}.tsv")), pairs)?;
        }
        for (d, lines) in &self.monolingual {
            write_lines(&dir.join("mono").join(format!("{d}.txt")), lines)?;
        }
        write_lines(&dir.join("mono").join("base.txt"), &self.base_monolingual)
    }

    /// Ground-truth quality ratings aligned with `train`: `1` for clean
    /// pairs, `0` for corrupted ones.
    pub fn ratings(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|l| if l.noisy { 0.0 } else { 1.0 })
            .collect()
    }

    /// Domain labels aligned with `train`.
    pub fn domain_labels(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.domain.clone()).collect()
    }
}

/// Read a labels file written by [`SynthCorpus::write_to`] back into
/// position-aligned labels for the given training pairs.
pub fn read_labels(path: impl AsRef<Path>, pairs: &[SentencePair]) -> Result<Vec<PairLabel>> {
    let shown = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&shown, e))?;
    let mut by_id: BTreeMap<u64, PairLabel> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (id, domain, flag) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(domain), Some(flag), None) => (id, domain, flag),
            _ => {
                return Err(Error::Parse {
                    path: shown,
                    line: i + 1,
                    message: "expected id<TAB>domain<TAB>clean|noisy".into(),
                })
            }
        };
        let id: u64 = id.parse().map_err(|_| Error::Parse {
            path: shown.clone(),
            line: i + 1,
            message: format!("bad id '{id}'"),
        })?;
        let noisy = match flag {
            "clean" => false,
            "noisy" => true,
            other => {
                return Err(Error::Parse {
                    path: shown,
                    line: i + 1,
                    message: format!("bad flag '{other}' (expected clean or noisy)"),
                })
            }
        };
        if by_id
            .insert(
                id,
                PairLabel {
                    domain: domain.to_string(),
                    noisy,
                },
            )
            .is_some()
        {
            return Err(Error::DuplicateId {
                feature: "labels".into(),
                id,
            });
        }
    }
    pairs
        .iter()
        .map(|p| {
            by_id.get(&p.id).cloned().ok_or_else(|| Error::UnknownId {
                feature: "labels".into(),
                id: p.id,
            })
        })
        .collect()
}

//! Sectioned key=value run configuration with strict parsing: unknown keys
//! and malformed values are rejected with their line number, so a typo can
//! never silently weaken an attack parameter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::attacks::{AttackConfig, AttackKind, Targeting};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// IDX file pair under the data dir.
    Idx { images: String, labels: String },
    /// Procedural digit corpus.
    Digits { per_class: usize, noise: f64 },
    /// Gaussian blobs.
    Blobs { classes: usize, per_class: usize, dim: usize, spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    pub train_n: usize,
    pub test_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMethod {
    Knn,
    ZScore,
    EnsembleKnn,
    EnsembleZ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSection {
    pub method: DetectorMethod,
    pub k: usize,
    pub h: f64,
    pub vote_k: usize,
    /// Defense column for single-cost detectors.
    pub defense: String,
    /// How many benign / per-corpus adversarial examples to fingerprint.
    pub benign_n: usize,
    pub adv_n: usize,
    /// Fraction of fingerprints used for fitting; the rest is held out.
    pub ref_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub kappas: Vec<f64>,
    pub l2_cap: f64,
    pub inputs: usize,
    pub use_ae: bool,
    pub ae_bottleneck: usize,
    pub ae_target_fpr: f64,
    pub ae_epochs: usize,
    pub use_at: bool,
    pub at_epsilon: f64,
    pub at_alpha: f64,
    pub at_steps: usize,
    pub at_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub data_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub data: DataSection,
    /// Generation attacks in file order, with per-attack corpus sizes.
    pub attacks: Vec<(AttackConfig, usize)>,
    /// Defense attacks in file order; this order defines fingerprint
    /// columns everywhere downstream.
    pub defenses: Vec<AttackConfig>,
    pub detector: DetectorSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 42;
        RunConfig {
            seed,
            out_dir: PathBuf::from("out"),
            workers: 4,
            data_dir: None,
            model: ModelSection {
                hidden: vec![512, 256],
                train: TrainConfig {
                    learning_rate: 0.1,
                    epochs: 30,
                    batch_size: 32,
                    seed,
                    weight_init_scale: 1.0,
                },
            },
            data: DataSection {
                source: DataSource::Digits { per_class: 1600, noise: 0.02 },
                train_n: 12000,
                test_n: 3000,
            },
            attacks: default_generation_attacks(seed),
            defenses: default_defenses(seed),
            detector: DetectorSection {
                method: DetectorMethod::ZScore,
                k: 100,
                h: -1.281552,
                vote_k: 2,
                defense: "bim".to_string(),
                benign_n: 400,
                adv_n: 200,
                ref_fraction: 0.5,
            },
            sweep: SweepSection {
                kappas: vec![0.0, 2.0, 4.0, 6.0, 8.0],
                l2_cap: 8.4,
                inputs: 50,
                use_ae: true,
                ae_bottleneck: 32,
                ae_target_fpr: 0.01,
                ae_epochs: 10,
                use_at: false,
                at_epsilon: 0.3,
                at_alpha: 0.1,
                at_steps: 7,
                at_epochs: 4,
            },
        }
    }
}

pub fn default_generation_attacks(seed: u64) -> Vec<(AttackConfig, usize)> {
    let mk = |kind| AttackConfig { seed, ..AttackConfig::defaults_for(kind) };
    vec![
        (mk(AttackKind::Fgsm), 200),
        (mk(AttackKind::BimLinf), 200),
        (mk(AttackKind::Jsma), 200),
        (mk(AttackKind::CwL2), 200),
    ]
}

pub fn default_defenses(seed: u64) -> Vec<AttackConfig> {
    let mk = |kind| AttackConfig { seed, ..AttackConfig::defaults_for(kind) };
    vec![
        mk(AttackKind::BimLinf),
        mk(AttackKind::BimL2),
        mk(AttackKind::Jsma),
        mk(AttackKind::Dba),
    ]
}

fn attack_kind_by_name(name: &str) -> Option<AttackKind> {
    match name {
        "fgsm" => Some(AttackKind::Fgsm),
        "bim" => Some(AttackKind::BimLinf),
        "bim2" => Some(AttackKind::BimL2),
        "jsma" => Some(AttackKind::Jsma),
        "dba" => Some(AttackKind::Dba),
        "cw" => Some(AttackKind::CwL2),
        _ => None,
    }
}

/// One parsed `key = value` with its source line.
struct Entry {
    line: usize,
    value: String,
    used: std::cell::Cell<bool>,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    sections.insert(String::new(), Section { line: 0, entries: BTreeMap::new() });
    let mut current = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(Error::config_at(lineno, "unterminated section header"));
            };
            let name = name.trim().to_ascii_lowercase();
            if name.is_empty() {
                return Err(Error::config_at(lineno, "empty section name"));
            }
            if sections.contains_key(&name) {
                return Err(Error::config_at(lineno, format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Section { line: lineno, entries: BTreeMap::new() });
            current = name;
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::config_at(lineno, format!("expected key = value, got '{line}'")));
        };
        let key = line[..eq].trim().to_ascii_lowercase();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(Error::config_at(lineno, "empty key"));
        }
        let section = sections.get_mut(&current).expect("current section exists");
        if section.entries.contains_key(&key) {
            return Err(Error::config_at(lineno, format!("duplicate key '{key}'")));
        }
        section.entries.insert(key, Entry { line: lineno, value, used: std::cell::Cell::new(false) });
    }
    Ok(sections)
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key);
        if let Some(e) = e {
            e.used.set(true);
        }
        e
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| Error::config_at(e.line, format!("key '{key}': expected {what}, got '{}'", e.value))),
        }
    }

    fn unused_key(&self) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(_, e)| !e.used.get())
            .map(|(k, e)| (k.as_str(), e.line))
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, what: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::config_at(line, format!("expected {what} list, got '{s}'")))
        })
        .collect()
}

fn apply_attack_keys(section: &Section, cfg: &mut AttackConfig, count: Option<&mut usize>) -> Result<()> {
    if let Some(v) = section.parse::<f64>("epsilon", "a real")? {
        cfg.epsilon = v;
    }
    if let Some(v) = section.parse::<f64>("alpha", "a real")? {
        cfg.alpha = v;
    }
    if let Some(v) = section.parse::<usize>("max_iter", "an integer")? {
        cfg.max_iter = v;
    }
    if let Some(v) = section.parse::<f64>("theta", "a real")? {
        cfg.theta = v;
    }
    if let Some(v) = section.parse::<f64>("gamma", "a real")? {
        cfg.gamma = v;
    }
    if let Some(v) = section.parse::<f64>("mse_threshold", "a real")? {
        cfg.mse_threshold = v;
    }
    if let Some(v) = section.parse::<f64>("kappa", "a real")? {
        cfg.kappa = v;
    }
    if let Some(v) = section.parse::<f64>("c", "a real")? {
        cfg.c = v;
    }
    if let Some(v) = section.parse::<usize>("target_rank", "an integer")? {
        cfg.targeting = Targeting::TargetRank(v);
    }
    if let Some(v) = section.parse::<usize>("target_class", "an integer")? {
        cfg.targeting = Targeting::TargetClass(v);
    }
    if let Some(e) = section.get("norm") {
        cfg.norm = match e.value.as_str() {
            "linf" => crate::attacks::Norm::Linf,
            "l2" => crate::attacks::Norm::L2,
            other => return Err(Error::config_at(e.line, format!("unknown norm '{other}'"))),
        };
    }
    if let Some(count) = count {
        if let Some(v) = section.parse::<usize>("count", "an integer")? {
            *count = v;
        }
    }
    Ok(())
}

/// Parses a config file into a fully validated [`RunConfig`], filling
/// defaults for everything the file leaves unset.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let sections = parse_sections(text)?;
    let mut cfg = RunConfig::default();

    let global = &sections[""];
    if let Some(v) = global.parse::<u64>("seed", "an unsigned integer")? {
        cfg.seed = v;
    }
    if let Some(e) = global.get("out_dir") {
        cfg.out_dir = PathBuf::from(&e.value);
    }
    if let Some(v) = global.parse::<usize>("workers", "an integer")? {
        cfg.workers = v.max(1);
    }
    if let Some(e) = global.get("data_dir") {
        cfg.data_dir = Some(PathBuf::from(&e.value));
    }

    if let Some(section) = sections.get("model") {
        if let Some(e) = section.get("hidden") {
            cfg.model.hidden = parse_list(&e.value, e.line, "an integer")?;
        }
        if let Some(v) = section.parse::<f64>("learning_rate", "a real")? {
            cfg.model.train.learning_rate = v;
        }
        if let Some(v) = section.parse::<usize>("epochs", "an integer")? {
            cfg.model.train.epochs = v;
        }
        if let Some(v) = section.parse::<usize>("batch_size", "an integer")? {
            cfg.model.train.batch_size = v;
        }
        if let Some(v) = section.parse::<f64>("weight_init_scale", "a real")? {
            cfg.model.train.weight_init_scale = v;
        }
    }

    if let Some(section) = sections.get("data") {
        if let Some(e) = section.get("source") {
            cfg.data.source = match e.value.as_str() {
                "digits" => DataSource::Digits {
                    per_class: section.parse::<usize>("per_class", "an integer")?.unwrap_or(1600),
                    noise: section.parse::<f64>("noise", "a real")?.unwrap_or(0.02),
                },
                "blobs" => DataSource::Blobs {
                    classes: section.parse::<usize>("classes", "an integer")?.unwrap_or(10),
                    per_class: section.parse::<usize>("per_class", "an integer")?.unwrap_or(200),
                    dim: section.parse::<usize>("dim", "an integer")?.unwrap_or(16),
                    spread: section.parse::<f64>("spread", "a real")?.unwrap_or(0.08),
                },
                "idx" => {
                    let images = section
                        .get("images")
                        .ok_or_else(|| Error::config_at(e.line, "idx source needs an 'images' path"))?
                        .value
                        .clone();
                    let labels = section
                        .get("labels")
                        .ok_or_else(|| Error::config_at(e.line, "idx source needs a 'labels' path"))?
                        .value
                        .clone();
                    DataSource::Idx { images, labels }
                }
                other => return Err(Error::config_at(e.line, format!("unknown data source '{other}'"))),
            };
        } else {
            // keys for the default digits source remain adjustable
            if let Some(v) = section.parse::<usize>("per_class", "an integer")? {
                if let DataSource::Digits { per_class, .. } = &mut cfg.data.source {
                    *per_class = v;
                }
            }
            if let Some(v) = section.parse::<f64>("noise", "a real")? {
                if let DataSource::Digits { noise, .. } = &mut cfg.data.source {
                    *noise = v;
                }
            }
        }
        if let Some(v) = section.parse::<usize>("train_n", "an integer")? {
            cfg.data.train_n = v;
        }
        if let Some(v) = section.parse::<usize>("test_n", "an integer")? {
            cfg.data.test_n = v;
        }
    }

    // explicit attack/defense sections replace the default sets, in file order
    let mut attack_sections: Vec<(&String, &Section)> = sections
        .iter()
        .filter(|(name, _)| name.starts_with("attack."))
        .collect();
    attack_sections.sort_by_key(|(_, s)| s.line);
    if !attack_sections.is_empty() {
        cfg.attacks.clear();
        for (name, section) in attack_sections {
            let short = &name["attack.".len()..];
            let kind = attack_kind_by_name(short)
                .ok_or_else(|| Error::config_at(section.line, format!("unknown attack '{short}'")))?;
            let mut attack = AttackConfig { seed: cfg.seed, ..AttackConfig::defaults_for(kind) };
            let mut count = 200;
            apply_attack_keys(section, &mut attack, Some(&mut count))?;
            attack.validate().map_err(|e| Error::config_at(section.line, e.to_string()))?;
            cfg.attacks.push((attack, count));
        }
    }

    let mut defense_sections: Vec<(&String, &Section)> = sections
        .iter()
        .filter(|(name, _)| name.starts_with("defense."))
        .collect();
    defense_sections.sort_by_key(|(_, s)| s.line);
    if !defense_sections.is_empty() {
        cfg.defenses.clear();
        for (name, section) in defense_sections {
            let short = &name["defense.".len()..];
            let kind = attack_kind_by_name(short)
                .ok_or_else(|| Error::config_at(section.line, format!("unknown defense '{short}'")))?;
            if !kind.usable_as_defense() {
                return Err(Error::config_at(
                    section.line,
                    format!("{short} is a one-step attack and cannot serve as a defense"),
                ));
            }
            let mut defense = AttackConfig { seed: cfg.seed, ..AttackConfig::defaults_for(kind) };
            apply_attack_keys(section, &mut defense, None)?;
            defense.validate().map_err(|e| Error::config_at(section.line, e.to_string()))?;
            cfg.defenses.push(defense);
        }
    }

    if let Some(section) = sections.get("detector") {
        if let Some(e) = section.get("method") {
            cfg.detector.method = match e.value.as_str() {
                "knn" => DetectorMethod::Knn,
                "zscore" => DetectorMethod::ZScore,
                "ensemble-knn" => DetectorMethod::EnsembleKnn,
                "ensemble-z" => DetectorMethod::EnsembleZ,
                other => return Err(Error::config_at(e.line, format!("unknown detector method '{other}'"))),
            };
        }
        if let Some(v) = section.parse::<usize>("k", "an integer")? {
            cfg.detector.k = v;
        }
        if let Some(v) = section.parse::<f64>("h", "a real")? {
            cfg.detector.h = v;
        }
        if let Some(v) = section.parse::<usize>("vote_k", "an integer")? {
            cfg.detector.vote_k = v;
        }
        if let Some(e) = section.get("defense") {
            cfg.detector.defense = e.value.clone();
        }
        if let Some(v) = section.parse::<usize>("benign_n", "an integer")? {
            cfg.detector.benign_n = v;
        }
        if let Some(v) = section.parse::<usize>("adv_n", "an integer")? {
            cfg.detector.adv_n = v;
        }
        if let Some(v) = section.parse::<f64>("ref_fraction", "a real")? {
            if !(0.0..1.0).contains(&v) || v == 0.0 {
                return Err(Error::config("ref_fraction must lie in (0, 1)"));
            }
            cfg.detector.ref_fraction = v;
        }
    }

    if let Some(section) = sections.get("sweep") {
        if let Some(e) = section.get("kappas") {
            cfg.sweep.kappas = parse_list(&e.value, e.line, "a real")?;
        }
        if let Some(v) = section.parse::<f64>("l2_cap", "a real")? {
            cfg.sweep.l2_cap = v;
        }
        if let Some(v) = section.parse::<usize>("inputs", "an integer")? {
            cfg.sweep.inputs = v;
        }
        if let Some(v) = section.parse::<bool>("use_ae", "a boolean")? {
            cfg.sweep.use_ae = v;
        }
        if let Some(v) = section.parse::<usize>("ae_bottleneck", "an integer")? {
            cfg.sweep.ae_bottleneck = v;
        }
        if let Some(v) = section.parse::<f64>("ae_target_fpr", "a real")? {
            cfg.sweep.ae_target_fpr = v;
        }
        if let Some(v) = section.parse::<usize>("ae_epochs", "an integer")? {
            cfg.sweep.ae_epochs = v;
        }
        if let Some(v) = section.parse::<bool>("use_at", "a boolean")? {
            cfg.sweep.use_at = v;
        }
        if let Some(v) = section.parse::<f64>("at_epsilon", "a real")? {
            cfg.sweep.at_epsilon = v;
        }
        if let Some(v) = section.parse::<f64>("at_alpha", "a real")? {
            cfg.sweep.at_alpha = v;
        }
        if let Some(v) = section.parse::<usize>("at_steps", "an integer")? {
            cfg.sweep.at_steps = v;
        }
        if let Some(v) = section.parse::<usize>("at_epochs", "an integer")? {
            cfg.sweep.at_epochs = v;
        }
    }

    // strict parsing: every key must have been consumed, every section known
    const KNOWN: [&str; 5] = ["", "model", "data", "detector", "sweep"];
    for (name, section) in &sections {
        let known = KNOWN.contains(&name.as_str())
            || name.starts_with("attack.")
            || name.starts_with("defense.");
        if !known {
            return Err(Error::config_at(section.line, format!("unknown section [{name}]")));
        }
        if let Some((key, line)) = section.unused_key() {
            return Err(Error::config_at(line, format!("unknown key '{key}'")));
        }
    }

    // propagate the global seed into training and attack seeds
    cfg.model.train.seed = cfg.seed;
    for (attack, _) in &mut cfg.attacks {
        attack.seed = cfg.seed;
    }
    for defense in &mut cfg.defenses {
        defense.seed = cfg.seed;
    }
    cfg.model.train.validate()?;
    if cfg.detector.vote_k > cfg.defenses.len() {
        return Err(Error::config(format!(
            "vote_k = {} exceeds the {} configured defenses",
            cfg.detector.vote_k,
            cfg.defenses.len()
        )));
    }
    if !cfg.defenses.iter().any(|d| d.kind.name() == cfg.detector.defense) {
        return Err(Error::config(format!(
            "detector defense '{}' is not among the configured defenses",
            cfg.detector.defense
        )));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn defense_names(&self) -> Vec<String> {
        self.defenses.iter().map(|d| d.kind.name().to_string()).collect()
    }

    pub fn defense_index(&self, name: &str) -> Option<usize> {
        self.defenses.iter().position(|d| d.kind.name() == name)
    }
}

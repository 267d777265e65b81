//! Pipeline commands behind the CLI: train, attack, fingerprint,
//! fit-detector, detect, evaluate, sweep. Every command writes its
//! artifacts under the configured output directory and records them in a
//! manifest with checksums; a rerun with the same config and seed produces
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{run_attack, AttackConfig, AttackOutcome};
use crate::config::{DataSource, DetectorMethod, RunConfig};
use crate::data::{load_idx, load_idx_images, synthetic_blobs, synthetic_digits, write_idx, Dataset, Example};
use crate::detectors::{
    evaluate, knn_fit, zscore_fit, DetectionReport, EnsembleZ, KnnDetector, Verdict, ZScoreDetector,
};
use crate::error::{Error, Result};
use crate::fingerprint::{
    fingerprint_batch, fingerprint_one, load_fingerprints, write_fingerprints, Fingerprint, Origin,
};
use crate::hardening::{
    ae_fit_threshold, kappa_sweep, pgd_adversarial_train, train_autoencoder, AeDetector,
    CostDetector, SweepResult,
};
use crate::nn::{load_model, predict_label, save_model, Model};
use crate::tensor::Tensor;

pub const MODEL_FILE: &str = "model.a2dm";
pub const TEST_IMAGES: &str = "test.images.idx";
pub const TEST_LABELS: &str = "test.labels.idx";
pub const FINGERPRINTS_FILE: &str = "fingerprints.csv";
pub const DETECTOR_FILE: &str = "detector.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Tracks artifacts written by a command and maintains the manifest.
struct Workspace {
    out_dir: PathBuf,
    config_hash: String,
    seed: u64,
    artifacts: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config_sha256: String,
    seed: u64,
    artifacts: BTreeMap<String, String>,
}

impl Workspace {
    fn open(cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out_dir)?;
        let config_hash = hex_digest(format!("{cfg:?}").as_bytes());
        let manifest_path = cfg.out_dir.join(MANIFEST_FILE);
        let artifacts = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path)?;
            serde_json::from_str::<Manifest>(&text)
                .map(|m| m.artifacts)
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        Ok(Workspace { out_dir: cfg.out_dir.clone(), config_hash, seed: cfg.seed, artifacts })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn require(&self, name: &str, hint: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact(format!("{name} not found; run `{hint}` first")));
        }
        Ok(p)
    }

    /// Hashes an artifact already written to disk and records it.
    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.artifacts.insert(name.to_string(), hex_digest(&bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::format(format!("serializing {name}: {e}")))?;
        fs::write(self.path(name), text)?;
        self.record(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)?;
        self.record(name)
    }

    fn finish(&self) -> Result<()> {
        let manifest = Manifest {
            config_sha256: self.config_hash.clone(),
            seed: self.seed,
            artifacts: self.artifacts.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(format!("serializing manifest: {e}")))?;
        fs::write(self.path(MANIFEST_FILE), text)?;
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        write!(s, "{b:02x}").expect("writing to a string cannot fail");
    }
    s
}

/// Builds the configured dataset. The data dir for IDX sources resolves
/// from the config, the `A2D_DATA_DIR` environment variable, or the
/// current directory, in that order.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data.source {
        DataSource::Digits { per_class, noise } => synthetic_digits(*per_class, *noise, cfg.seed),
        DataSource::Blobs { classes, per_class, dim, spread } => {
            synthetic_blobs(*classes, *per_class, *dim, *spread, cfg.seed)
        }
        DataSource::Idx { images, labels } => {
            let dir = cfg
                .data_dir
                .clone()
                .or_else(|| std::env::var_os("A2D_DATA_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            load_idx(&dir.join(images), &dir.join(labels))
        }
    }
}

fn split_dataset(cfg: &RunConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    let (train_n, test_n) = (cfg.data.train_n.min(data.len()), cfg.data.test_n);
    let train_n = train_n.min(data.len().saturating_sub(test_n));
    data.split(train_n, test_n.min(data.len() - train_n), cfg.seed)
}

fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for ex in data.examples() {
        if predict_label(model, &ex.pixels)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[derive(Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs: usize,
    pub train_examples: usize,
    pub test_examples: usize,
}

/// `train`: builds the dataset, trains the classifier, and persists the
/// model plus the held-out test split.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let mut ws = Workspace::open(cfg)?;
    let data = build_dataset(cfg)?;
    let (train, test) = split_dataset(cfg, &data)?;
    let input_dim = train.input_dim().ok_or_else(|| Error::Data("empty training split".into()))?;

    let model = Model::new_mlp(
        input_dim,
        &cfg.model.hidden,
        train.num_classes(),
        cfg.seed,
        cfg.model.train.weight_init_scale,
    )?;
    let (model, history) = crate::nn::train(model, &train, &cfg.model.train)?;

    save_model(&model, &ws.path(MODEL_FILE))?;
    ws.record(MODEL_FILE)?;

    let mut csv = String::from("epoch,loss,accuracy\n");
    for (i, e) in history.iter().enumerate() {
        writeln!(csv, "{},{},{}", i + 1, e.loss, e.accuracy).expect("string write");
    }
    ws.write_text("train_history.csv", &csv)?;

    write_idx(&test, &ws.path(TEST_IMAGES), &ws.path(TEST_LABELS))?;
    ws.record(TEST_IMAGES)?;
    ws.record(TEST_LABELS)?;

    let report = TrainReport {
        train_accuracy: history.last().map(|e| e.accuracy).unwrap_or(0.0),
        test_accuracy: accuracy(&model, &test)?,
        epochs: history.len(),
        train_examples: train.len(),
        test_examples: test.len(),
    };
    ws.write_json("train_report.json", &report)?;
    ws.finish()?;
    Ok(report)
}

/// Sidecar record for one attacked example; the full-precision adversarial
/// tensor travels inside the outcome so downstream stages are not limited
/// by the 8-bit IDX quantization.
#[derive(Serialize, Deserialize)]
pub struct AdvRecord {
    pub source_index: usize,
    pub label: usize,
    pub outcome: AttackOutcome,
}

#[derive(Serialize, Deserialize)]
pub struct AdvCorpus {
    pub attack: String,
    pub attempts: usize,
    pub successes: usize,
    pub records: Vec<AdvRecord>,
}

fn load_test_split(ws: &Workspace) -> Result<Dataset> {
    let images = ws.require(TEST_IMAGES, "train")?;
    let labels = ws.require(TEST_LABELS, "train")?;
    load_idx(&images, &labels)
}

fn corpus_file(name: &str) -> String {
    format!("adv_{name}.outcomes.json")
}

/// `attack`: crafts adversarial corpora over correctly-classified test
/// examples for every configured generation attack.
pub fn cmd_attack(cfg: &RunConfig) -> Result<Vec<AdvCorpus>> {
    let mut ws = Workspace::open(cfg)?;
    let model = load_model(&ws.require(MODEL_FILE, "train")?)?;
    let test = load_test_split(&ws)?;
    let pool: Vec<Tensor> = test.examples().iter().take(64).map(|e| e.pixels.clone()).collect();

    let mut corpora = Vec::new();
    for (attack, count) in &cfg.attacks {
        let name = attack.kind.name();
        let mut records = Vec::new();
        let mut attempts = 0;
        let mut successes = 0;
        for (idx, ex) in test.examples().iter().enumerate() {
            if successes >= *count {
                break;
            }
            if predict_label(&model, &ex.pixels)? != ex.label {
                continue;
            }
            attempts += 1;
            let cfg_i = AttackConfig {
                seed: attack.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..attack.clone()
            };
            let outcome = run_attack(&model, &ex.pixels, &cfg_i, Some(ex.label), &pool)?;
            if outcome.success {
                successes += 1;
            }
            records.push(AdvRecord { source_index: idx, label: ex.label, outcome });
        }

        // IDX interchange copy of the successful examples (8-bit quantized)
        let adv_examples: Vec<Example> = records
            .iter()
            .filter_map(|r| {
                r.outcome.adversarial.as_ref().map(|t| {
                    let quantized: Vec<f64> =
                        t.data().iter().map(|&v| (v * 255.0).round() / 255.0).collect();
                    Example::new(
                        Tensor::new(vec![t.len()], quantized).expect("quantized pixels are finite"),
                        r.label,
                    )
                    .expect("quantized pixels stay in range")
                })
            })
            .collect();
        if !adv_examples.is_empty() {
            let adv_set = Dataset::new(adv_examples, test.num_classes(), format!("adv-{name}"))?;
            let img = format!("adv_{name}.images.idx");
            let lbl = format!("adv_{name}.labels.idx");
            write_idx(&adv_set, &ws.path(&img), &ws.path(&lbl))?;
            ws.record(&img)?;
            ws.record(&lbl)?;
        }

        let corpus = AdvCorpus { attack: name.to_string(), attempts, successes, records };
        ws.write_json(&corpus_file(name), &corpus)?;
        corpora.push(corpus);
    }
    ws.finish()?;
    Ok(corpora)
}

/// Loads a generated corpus sidecar and returns the successful adversarial
/// tensors in generation order.
pub fn load_adv_corpus(out_dir: &Path, attack_name: &str) -> Result<Vec<Tensor>> {
    let path = out_dir.join(corpus_file(attack_name));
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "adversarial corpus for '{attack_name}' not found; run `attack` first"
        )));
    }
    let text = fs::read_to_string(path)?;
    let corpus: AdvCorpus =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("corpus sidecar: {e}")))?;
    Ok(corpus
        .records
        .into_iter()
        .filter_map(|r| r.outcome.adversarial)
        .collect())
}

/// `fingerprint`: runs the configured defense attacks over benign test
/// examples and every generated adversarial corpus, writing one CSV.
pub fn cmd_fingerprint(cfg: &RunConfig) -> Result<Vec<Fingerprint>> {
    let mut ws = Workspace::open(cfg)?;
    let model = load_model(&ws.require(MODEL_FILE, "train")?)?;
    let test = load_test_split(&ws)?;
    let pool: Vec<Tensor> = test.examples().iter().take(64).map(|e| e.pixels.clone()).collect();

    let benign: Vec<Tensor> = test
        .examples()
        .iter()
        .take(cfg.detector.benign_n)
        .map(|e| e.pixels.clone())
        .collect();
    let mut inputs: Vec<(usize, Origin, Tensor)> = benign
        .into_iter()
        .enumerate()
        .map(|(i, t)| (i, Origin::Benign, t))
        .collect();
    for (ci, (attack, _)) in cfg.attacks.iter().enumerate() {
        let name = attack.kind.name();
        let tensors = load_adv_corpus(&cfg.out_dir, name)?;
        let base = (ci + 1) * 1_000_000;
        for (i, t) in tensors.into_iter().take(cfg.detector.adv_n).enumerate() {
            inputs.push((base + i, Origin::Adv(name.to_string()), t));
        }
    }

    let borrowed: Vec<(usize, Origin, &Tensor)> =
        inputs.iter().map(|(id, o, t)| (*id, o.clone(), t)).collect();
    let (fps, _total) = fingerprint_batch(&model, &borrowed, &cfg.defenses, cfg.workers, &pool)?;
    write_fingerprints(&ws.path(FINGERPRINTS_FILE), &fps)?;
    ws.record(FINGERPRINTS_FILE)?;
    ws.finish()?;
    Ok(fps)
}

/// Serialized fitted detector plus everything needed to evaluate it on
/// held-out fingerprints.
#[derive(Serialize, Deserialize)]
pub enum FittedDetector {
    Knn {
        detector: KnnDetector,
        /// Fingerprint column for single-defense detectors; all columns
        /// when absent.
        cost_index: Option<usize>,
        defense_names: Vec<String>,
        fit_ids: Vec<usize>,
    },
    ZScore {
        detector: ZScoreDetector,
        cost_index: usize,
        defense_names: Vec<String>,
        fit_ids: Vec<usize>,
    },
    EnsembleZ {
        ensemble: EnsembleZ,
        defense_names: Vec<String>,
        fit_ids: Vec<usize>,
    },
}

impl FittedDetector {
    pub fn fit_ids(&self) -> &[usize] {
        match self {
            FittedDetector::Knn { fit_ids, .. } => fit_ids,
            FittedDetector::ZScore { fit_ids, .. } => fit_ids,
            FittedDetector::EnsembleZ { fit_ids, .. } => fit_ids,
        }
    }

    pub fn name(&self) -> String {
        match self {
            FittedDetector::Knn { cost_index: Some(_), defense_names, .. } => {
                format!("knn-{}", defense_names.first().cloned().unwrap_or_default())
            }
            FittedDetector::Knn { cost_index: None, .. } => "knn-ensemble".to_string(),
            FittedDetector::ZScore { defense_names, .. } => {
                format!("zscore-{}", defense_names.first().cloned().unwrap_or_default())
            }
            FittedDetector::EnsembleZ { .. } => "zscore-ensemble".to_string(),
        }
    }

    /// Verdict plus a benign-ness score for one fingerprint.
    pub fn classify(&self, fp: &Fingerprint) -> Result<(Verdict, f64)> {
        match self {
            FittedDetector::Knn { detector, cost_index, .. } => {
                let costs = match cost_index {
                    Some(i) => vec![fp.costs[*i] as f64],
                    None => fp.cost_vector(),
                };
                Ok((detector.classify(&costs)?, detector.benign_share(&costs)?))
            }
            FittedDetector::ZScore { detector, cost_index, .. } => {
                let cost = fp.costs[*cost_index] as f64;
                Ok((detector.classify(cost), detector.z(cost)))
            }
            FittedDetector::EnsembleZ { ensemble, .. } => {
                let costs = fp.cost_vector();
                Ok((ensemble.classify(&costs)?, ensemble.min_z(&costs)?))
            }
        }
    }
}

/// Deterministic fit/held-out split of fingerprints, stratified by origin.
pub fn split_fingerprints(
    fps: &[Fingerprint],
    ref_fraction: f64,
    seed: u64,
) -> (Vec<Fingerprint>, Vec<Fingerprint>) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut groups: BTreeMap<String, Vec<&Fingerprint>> = BTreeMap::new();
    for fp in fps {
        let key = match &fp.origin {
            Origin::Benign => "benign".to_string(),
            Origin::Adv(a) => format!("adv:{a}"),
        };
        groups.entry(key).or_default().push(fp);
    }
    let mut fit = Vec::new();
    let mut held = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for (_, group) in groups {
        let mut order: Vec<usize> = (0..group.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let take = ((group.len() as f64) * ref_fraction).floor() as usize;
        for (pos, &gi) in order.iter().enumerate() {
            if pos < take {
                fit.push(group[gi].clone());
            } else {
                held.push(group[gi].clone());
            }
        }
    }
    fit.sort_by_key(|f| f.example_id);
    held.sort_by_key(|f| f.example_id);
    (fit, held)
}

/// `fit-detector`: fits the configured detector on a deterministic portion
/// of the fingerprints and serializes it.
pub fn cmd_fit_detector(cfg: &RunConfig) -> Result<FittedDetector> {
    let mut ws = Workspace::open(cfg)?;
    let fps = load_fingerprints(&ws.require(FINGERPRINTS_FILE, "fingerprint")?)?;
    let detector = fit_detector_from(cfg, &fps)?;
    ws.write_json(DETECTOR_FILE, &detector)?;
    ws.finish()?;
    Ok(detector)
}

pub fn fit_detector_from(cfg: &RunConfig, fps: &[Fingerprint]) -> Result<FittedDetector> {
    let (fit, _) = split_fingerprints(fps, cfg.detector.ref_fraction, cfg.seed);
    if fit.is_empty() {
        return Err(Error::Fit("no fingerprints available for fitting".into()));
    }
    let defense_names = cfg.defense_names();
    let fit_ids: Vec<usize> = fit.iter().map(|f| f.example_id).collect();
    let col = cfg
        .defense_index(&cfg.detector.defense)
        .ok_or_else(|| Error::config(format!("unknown defense '{}'", cfg.detector.defense)))?;

    let benign_costs = |index: usize| -> Vec<usize> {
        fit.iter()
            .filter(|f| f.origin.is_benign())
            .map(|f| f.costs[index])
            .collect()
    };

    Ok(match cfg.detector.method {
        DetectorMethod::Knn => {
            let sliced: Vec<Fingerprint> = fit
                .iter()
                .map(|f| Fingerprint {
                    example_id: f.example_id,
                    origin: f.origin.clone(),
                    costs: vec![f.costs[col]],
                    queries: f.queries,
                })
                .collect();
            FittedDetector::Knn {
                detector: knn_fit(&sliced, cfg.detector.k)?,
                cost_index: Some(col),
                defense_names: vec![cfg.detector.defense.clone()],
                fit_ids,
            }
        }
        DetectorMethod::EnsembleKnn => FittedDetector::Knn {
            detector: knn_fit(&fit, cfg.detector.k)?,
            cost_index: None,
            defense_names,
            fit_ids,
        },
        DetectorMethod::ZScore => FittedDetector::ZScore {
            detector: zscore_fit(&benign_costs(col), cfg.detector.h)?,
            cost_index: col,
            defense_names: vec![cfg.detector.defense.clone()],
            fit_ids,
        },
        DetectorMethod::EnsembleZ => {
            let members = (0..cfg.defenses.len())
                .map(|i| zscore_fit(&benign_costs(i), cfg.detector.h))
                .collect::<Result<Vec<_>>>()?;
            FittedDetector::EnsembleZ {
                ensemble: EnsembleZ::new(members, cfg.detector.vote_k)?,
                defense_names,
                fit_ids,
            }
        }
    })
}

pub fn load_detector(out_dir: &Path) -> Result<FittedDetector> {
    let path = out_dir.join(DETECTOR_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(
            "detector.json not found; run `fit-detector` first".into(),
        ));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("detector file: {e}")))
}

/// `evaluate`: scores the fitted detector on the held-out fingerprints.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<DetectionReport> {
    let mut ws = Workspace::open(cfg)?;
    let fps = load_fingerprints(&ws.require(FINGERPRINTS_FILE, "fingerprint")?)?;
    let detector = load_detector(&cfg.out_dir)?;
    let fit_ids: std::collections::BTreeSet<usize> = detector.fit_ids().iter().copied().collect();
    let held: Vec<Fingerprint> =
        fps.into_iter().filter(|f| !fit_ids.contains(&f.example_id)).collect();

    let report = evaluate(&detector.name(), |fp| detector.classify(fp), &held)?;
    ws.write_json("report.json", &report)?;

    let mut csv = String::from(
        "detector,accuracy_benign,accuracy_adv,auroc,fpr,tpr,mean_queries_benign,mean_queries_adv,tp,fp,tn,fn\n",
    );
    writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        report.detector,
        report.accuracy_benign,
        report.accuracy_adv,
        report.auroc,
        report.fpr,
        report.tpr,
        report.mean_queries_benign,
        report.mean_queries_adv,
        report.true_positives,
        report.false_positives,
        report.true_negatives,
        report.false_negatives
    )
    .expect("string write");
    ws.write_text("report.csv", &csv)?;
    ws.finish()?;
    Ok(report)
}

/// `detect`: fingerprints one image and prints a single-line verdict with
/// per-defense costs (and z-scores for Z-score detectors).
pub fn cmd_detect(cfg: &RunConfig, image_path: &Path) -> Result<String> {
    let ws = Workspace::open(cfg)?;
    let model = load_model(&ws.require(MODEL_FILE, "train")?)?;
    let detector = load_detector(&cfg.out_dir)?;
    let images = load_idx_images(image_path)?;
    let x = images
        .first()
        .ok_or_else(|| Error::Data("image file contains no images".into()))?;

    let fp = fingerprint_one(&model, 0, Origin::Benign, x, &cfg.defenses, &[])?;
    let (verdict, _) = detector.classify(&fp)?;

    let names = cfg.defense_names();
    let costs: Vec<String> = names
        .iter()
        .zip(&fp.costs)
        .map(|(n, c)| format!("{n}:{c}"))
        .collect();
    let mut line = format!(
        "verdict={} costs=[{}]",
        match verdict {
            Verdict::Benign => "benign",
            Verdict::Adversarial => "adversarial",
        },
        costs.join(",")
    );
    match &detector {
        FittedDetector::ZScore { detector: z, cost_index, .. } => {
            let zv = z.z(fp.costs[*cost_index] as f64);
            line.push_str(&format!(" z=[{}:{:.4}]", names[*cost_index], zv));
        }
        FittedDetector::EnsembleZ { ensemble, .. } => {
            let zs: Vec<String> = ensemble
                .members
                .iter()
                .zip(names.iter().zip(&fp.costs))
                .map(|(m, (n, &c))| format!("{n}:{:.4}", m.z(c as f64)))
                .collect();
            line.push_str(&format!(" z=[{}]", zs.join(",")));
        }
        FittedDetector::Knn { detector: k, cost_index, .. } => {
            let costs = match cost_index {
                Some(i) => vec![fp.costs[*i] as f64],
                None => fp.cost_vector(),
            };
            line.push_str(&format!(" benign_share={:.4}", k.benign_share(&costs)?));
        }
    }
    Ok(line)
}

#[derive(Serialize, Deserialize)]
pub struct SweepArtifacts {
    pub result: SweepResult,
    pub ae_tau: Option<f64>,
    pub target_model: String,
}

/// `sweep`: adaptive C&W confidence sweep against the configured defenses
/// (cost detector from `fit-detector`, optional autoencoder, optional
/// PGD-trained target model).
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let mut ws = Workspace::open(cfg)?;
    let plain_model = load_model(&ws.require(MODEL_FILE, "train")?)?;
    let test = load_test_split(&ws)?;

    // target model: plain or adversarially trained
    let (target_model, target_name) = if cfg.sweep.use_at {
        let data = build_dataset(cfg)?;
        let (train, _) = split_dataset(cfg, &data)?;
        let input_dim = train.input_dim().expect("nonempty training split");
        let init = Model::new_mlp(
            input_dim,
            &cfg.model.hidden,
            train.num_classes(),
            cfg.seed,
            cfg.model.train.weight_init_scale,
        )?;
        let pgd = AttackConfig {
            epsilon: cfg.sweep.at_epsilon,
            alpha: cfg.sweep.at_alpha,
            max_iter: cfg.sweep.at_steps,
            seed: cfg.seed,
            ..AttackConfig::defaults_for(crate::attacks::AttackKind::BimLinf)
        };
        let mut at_cfg = cfg.model.train.clone();
        at_cfg.epochs = cfg.sweep.at_epochs;
        let (at_model, _) = pgd_adversarial_train(init, &train, &pgd, &at_cfg)?;
        save_model(&at_model, &ws.path("at_model.a2dm"))?;
        ws.record("at_model.a2dm")?;
        (at_model, "adversarially-trained".to_string())
    } else {
        (plain_model, "plain".to_string())
    };

    // cost detector: refit on the target model's benign costs (benign-only,
    // so this needs no adversarial corpus)
    let col = cfg
        .defense_index(&cfg.detector.defense)
        .ok_or_else(|| Error::config(format!("unknown defense '{}'", cfg.detector.defense)))?;
    let defense = cfg.defenses[col].clone();
    let benign_for_fit: Vec<(usize, Origin, &Tensor)> = test
        .examples()
        .iter()
        .take(cfg.detector.benign_n.max(30))
        .enumerate()
        .map(|(i, e)| (i, Origin::Benign, &e.pixels))
        .collect();
    let (benign_fps, _) = fingerprint_batch(
        &target_model,
        &benign_for_fit,
        std::slice::from_ref(&defense),
        cfg.workers,
        &[],
    )?;
    let benign_costs: Vec<usize> = benign_fps.iter().map(|f| f.costs[0]).collect();
    let zdet = zscore_fit(&benign_costs, cfg.detector.h)?;
    let cost_detector = CostDetector::Single { detector: &zdet, defense: &defense };

    // autoencoder detector trained on benign training data
    let ae_detector: Option<AeDetector> = if cfg.sweep.use_ae {
        let data = build_dataset(cfg)?;
        let (train, _) = split_dataset(cfg, &data)?;
        let mut ae_cfg = cfg.model.train.clone();
        ae_cfg.epochs = cfg.sweep.ae_epochs;
        let (ae, _) = train_autoencoder(&train, cfg.sweep.ae_bottleneck, &ae_cfg)?;
        let det = ae_fit_threshold(ae, &train, cfg.sweep.ae_target_fpr)?;
        save_model(&det.autoencoder, &ws.path("ae.a2dm"))?;
        ws.record("ae.a2dm")?;
        Some(det)
    } else {
        None
    };

    // sweep inputs: correctly classified test examples
    let mut inputs: Vec<(usize, &Tensor)> = Vec::new();
    for (i, ex) in test.examples().iter().enumerate() {
        if inputs.len() >= cfg.sweep.inputs {
            break;
        }
        if predict_label(&target_model, &ex.pixels)? == ex.label {
            inputs.push((i, &ex.pixels));
        }
    }
    if inputs.is_empty() {
        return Err(Error::Data("no correctly classified sweep inputs".into()));
    }

    let cw = cfg
        .attacks
        .iter()
        .find(|(a, _)| a.kind == crate::attacks::AttackKind::CwL2)
        .map(|(a, _)| a.clone())
        .unwrap_or_else(|| AttackConfig {
            seed: cfg.seed,
            ..AttackConfig::defaults_for(crate::attacks::AttackKind::CwL2)
        });

    let result = kappa_sweep(
        &target_model,
        &inputs,
        &cfg.sweep.kappas,
        Some(&cost_detector),
        ae_detector.as_ref(),
        &cw,
        cfg.sweep.l2_cap,
        cfg.workers,
    )?;

    let mut csv = String::from(
        "kappa,attempts,successes,asr_without_defense,detection_rate_a2d,detection_rate_ae,detection_rate_combined,residual_asr,mean_l2_distortion,mean_defense_cost\n",
    );
    for row in &result.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            row.kappa,
            row.attempts,
            row.successes,
            row.asr_without_defense,
            row.detection_rate_a2d,
            row.detection_rate_ae,
            row.detection_rate_combined,
            row.residual_asr,
            row.mean_l2_distortion,
            row.mean_defense_cost
        )
        .expect("string write");
    }
    ws.write_text("sweep.csv", &csv)?;
    ws.write_json(
        "sweep.json",
        &SweepArtifacts {
            result: result.clone(),
            ae_tau: ae_detector.as_ref().map(|d| d.tau),
            target_model: target_name,
        },
    )?;
    ws.finish()?;
    Ok(result)
}

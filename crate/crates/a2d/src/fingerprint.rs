//! Attack-cost fingerprints: one cost per configured defense attack, in a
//! fixed order, plus population statistics over fingerprint groups.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Benign,
    Adv(String),
}

impl Origin {
    pub fn is_benign(&self) -> bool {
        matches!(self, Origin::Benign)
    }

    fn to_field(&self) -> String {
        match self {
            Origin::Benign => "benign".to_string(),
            Origin::Adv(name) => format!("adv:{name}"),
        }
    }

    fn from_field(s: &str) -> Result<Self> {
        if s == "benign" {
            Ok(Origin::Benign)
        } else if let Some(name) = s.strip_prefix("adv:") {
            Ok(Origin::Adv(name.to_string()))
        } else {
            Err(Error::format(format!("unknown origin field '{s}'")))
        }
    }
}

/// Per-example vector of attack costs across the configured defense
/// attacks. Failed attacks are censored at that defense's `max_iter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub example_id: usize,
    pub origin: Origin,
    pub costs: Vec<usize>,
    pub queries: usize,
}

impl Fingerprint {
    pub fn cost_vector(&self) -> Vec<f64> {
        self.costs.iter().map(|&c| c as f64).collect()
    }
}

fn check_defenses(defenses: &[AttackConfig]) -> Result<()> {
    if defenses.is_empty() {
        return Err(Error::config("at least one defense attack is required"));
    }
    for cfg in defenses {
        cfg.validate()?;
        if !cfg.kind.usable_as_defense() {
            return Err(Error::config(format!(
                "{} is a one-step attack and cannot serve as a defense",
                cfg.kind.name()
            )));
        }
    }
    Ok(())
}

/// Stable per-example seed derivation so batch results do not depend on
/// worker count or execution order.
fn derive_seed(base: u64, example_id: usize) -> u64 {
    base ^ (example_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fingerprints one input: runs every defense attack against the model's
/// own prediction (no ground truth is assumed) and records iteration costs
/// in the configured order.
pub fn fingerprint_one(
    model: &Model,
    example_id: usize,
    origin: Origin,
    x: &Tensor,
    defenses: &[AttackConfig],
    pool: &[Tensor],
) -> Result<Fingerprint> {
    check_defenses(defenses)?;
    let mut costs = Vec::with_capacity(defenses.len());
    let mut queries = 0;
    for cfg in defenses {
        let cfg = AttackConfig { seed: derive_seed(cfg.seed, example_id), ..cfg.clone() };
        let outcome = run_attack(model, x, &cfg, None, pool)?;
        costs.push(if outcome.success { outcome.iterations } else { cfg.max_iter });
        queries += outcome.queries;
    }
    Ok(Fingerprint { example_id, origin, costs, queries })
}

/// Fingerprints a batch in parallel. Results are merged in input order and
/// are identical for any worker count.
pub fn fingerprint_batch(
    model: &Model,
    inputs: &[(usize, Origin, &Tensor)],
    defenses: &[AttackConfig],
    workers: usize,
    pool: &[Tensor],
) -> Result<(Vec<Fingerprint>, usize)> {
    check_defenses(defenses)?;
    if inputs.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let threads = workers.max(1);
    let run = || -> Result<Vec<Fingerprint>> {
        inputs
            .par_iter()
            .map(|(id, origin, x)| fingerprint_one(model, *id, origin.clone(), x, defenses, pool))
            .collect()
    };
    let fps = if threads == 1 {
        inputs
            .iter()
            .map(|(id, origin, x)| fingerprint_one(model, *id, origin.clone(), x, defenses, pool))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool_builder = rayon::ThreadPoolBuilder::new().num_threads(threads);
        match pool_builder.build() {
            Ok(tp) => tp.install(run)?,
            Err(_) => run()?,
        }
    };
    let total = fps.iter().map(|f| f.queries).sum();
    Ok((fps, total))
}

fn mean_vector(fps: &[&Fingerprint]) -> Vec<f64> {
    let dim = fps[0].costs.len();
    let mut mean = vec![0.0; dim];
    for fp in fps {
        for (m, &c) in mean.iter_mut().zip(&fp.costs) {
            *m += c as f64;
        }
    }
    for m in &mut mean {
        *m /= fps.len() as f64;
    }
    mean
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-cost distance between named fingerprint groups: entry `(i, j)`
/// is the Euclidean distance between the groups' mean cost vectors. The
/// diagonal instead measures internal spread via a seeded random halving of
/// the group (distance between the two half-means; zero for singletons).
pub fn set_distance_matrix(
    groups: &[(String, Vec<Fingerprint>)],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if groups.len() < 2 {
        return Err(Error::Data("set distance needs at least two groups".into()));
    }
    let dim = groups
        .first()
        .and_then(|(_, g)| g.first())
        .map(|f| f.costs.len());
    for (name, group) in groups {
        if group.is_empty() {
            return Err(Error::Data(format!("group '{name}' is empty")));
        }
        if group.iter().any(|f| Some(f.costs.len()) != dim) {
            return Err(Error::dimension(format!("group '{name}' has mixed cost arity")));
        }
    }

    let n = groups.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let means: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, g)| mean_vector(&g.iter().collect::<Vec<_>>()))
        .collect();

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            matrix[i][j] = euclidean(&means[i], &means[j]);
        }
    }
    for (i, (_, group)) in groups.iter().enumerate() {
        if group.len() < 2 {
            continue;
        }
        let mut order: Vec<usize> = (0..group.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        for k in (1..order.len()).rev() {
            let j = rng.gen_range(0..=k);
            order.swap(k, j);
        }
        let half = group.len() / 2;
        let first: Vec<&Fingerprint> = order[..half].iter().map(|&k| &group[k]).collect();
        let second: Vec<&Fingerprint> = order[half..].iter().map(|&k| &group[k]).collect();
        matrix[i][i] = euclidean(&mean_vector(&first), &mean_vector(&second));
    }
    Ok(matrix)
}

/// Writes fingerprints as CSV: `example_id,origin,cost_1..cost_n,queries`.
pub fn write_fingerprints(path: &Path, fps: &[Fingerprint]) -> Result<()> {
    let arity = fps.first().map_or(0, |f| f.costs.len());
    if fps.iter().any(|f| f.costs.len() != arity) {
        return Err(Error::dimension("fingerprints have mixed cost arity"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let cost_cols: Vec<String> = (1..=arity).map(|i| format!("cost_{i}")).collect();
    writeln!(w, "example_id,origin,{},queries", cost_cols.join(","))?;
    for fp in fps {
        let costs: Vec<String> = fp.costs.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{},{},{}", fp.example_id, fp.origin.to_field(), costs.join(","), fp.queries)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads fingerprints back from [`write_fingerprints`] output.
pub fn load_fingerprints(path: &Path) -> Result<Vec<Fingerprint>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty fingerprint file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "example_id" || cols[1] != "origin" || *cols.last().unwrap() != "queries" {
        return Err(Error::format(format!("unexpected fingerprint header '{header}'")));
    }
    let arity = cols.len() - 3;
    let mut fps = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != arity + 3 {
            return Err(Error::format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                arity + 3,
                fields.len()
            )));
        }
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::format(format!("line {}: bad integer '{s}'", lineno + 2)))
        };
        fps.push(Fingerprint {
            example_id: parse_usize(fields[0])?,
            origin: Origin::from_field(fields[1])?,
            costs: fields[2..2 + arity]
                .iter()
                .map(|s| parse_usize(s))
                .collect::<Result<Vec<_>>>()?,
            queries: parse_usize(fields[arity + 2])?,
        });
    }
    Ok(fps)
}

//! Verification harness.
//!
//! Exact exhaustive checks at toy parameters (no-read uniformity, keygen
//! uniformity and sampler equivalence, pairwise key independence), exact and
//! Monte Carlo no-write experiments against the distance bound, message
//! recovery experiments, and the baseline contrasts.
//!
//! Exact checks compare integer tallies, so "equal" really means equal.
//! Every report embeds its experiment id and root seed and is replayable
//! from them; reports serialize to one JSON object per line.

use std::collections::HashMap;

use rand::rngs::mock::StepRng;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::adversary::{
    naive_collusion_attack, naive_matrix_scheme, otp_reverse_attack, otp_reverse_decode,
    otp_scheme, AttackStrategy, KeyView, SeedSource,
};
use crate::error::{AceError, Result};
use crate::gf::{derive_rng, Field};
use crate::matrix::{all_matrices, full_rank_matrices, Matrix};
use crate::pair::{
    enumerate_keyspace, pair_sanitize, KeygenSeed, KeygenVariant, PairCiphertext, PairKeys,
    PairParams,
};
use crate::policy::{policy_keygen_material, PartyId, Policy};

/// Trials per Monte Carlo work unit; each unit draws from its own derived stream.
const CHUNK: u64 = 4096;

/// Synthetic replicates behind a Monte Carlo bias estimate.
const CALIBRATION_REPLICATES: usize = 8;

const LOWER_BOUND_NOTE: &str =
    "strategies form a finite battery; measured distances are lower bounds on the worst case";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Montecarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

impl Verdict {
    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }
}

/// Statistical distance `1/2 sum |p(x) - u(x)|` between two distributions
/// listed over the same universe.
pub fn sd(p: &[f64], u: &[f64]) -> Result<f64> {
    if p.len() != u.len() {
        return Err(AceError::DomainError(format!(
            "universes differ in size ({} vs {})",
            p.len(),
            u.len()
        )));
    }
    for (name, d) in [("p", p), ("u", u)] {
        if d.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(AceError::DomainError(format!(
                "{name} has a negative or non-finite mass"
            )));
        }
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AceError::DomainError(format!(
                "{name} sums to {total}, not 1"
            )));
        }
    }
    let d = 0.5 * p.iter().zip(u).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// One statistical-distance experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdReport {
    pub id: String,
    pub q: u32,
    #[serde(rename = "L")]
    pub msg_len: usize,
    #[serde(rename = "N")]
    pub ct_len: usize,
    pub edges: usize,
    pub leakers: Vec<PartyId>,
    pub listeners: Vec<PartyId>,
    pub strategy: Option<String>,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub sd_estimate: f64,
    pub stderr: Option<f64>,
    pub bound_epsilon: f64,
    pub tight_epsilon: Option<f64>,
    pub calibration_bias: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl SdReport {
    fn exact(id: impl Into<String>, params: &PairParams, edges: usize, sd_estimate: f64) -> Self {
        SdReport {
            id: id.into(),
            q: params.q(),
            msg_len: params.msg_len(),
            ct_len: params.ct_len(),
            edges,
            leakers: Vec::new(),
            listeners: Vec::new(),
            strategy: None,
            mode: Mode::Exact,
            seed: None,
            trials: None,
            sd_estimate,
            stderr: None,
            bound_epsilon: 0.0,
            tight_epsilon: None,
            calibration_bias: 0.0,
            verdict: Verdict::Pass,
            note: None,
        }
    }
}

/// One message-recovery experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub id: String,
    pub scheme: String,
    pub q: u32,
    #[serde(rename = "L")]
    pub msg_len: usize,
    #[serde(rename = "N")]
    pub ct_len: usize,
    pub edges: usize,
    pub leakers: Vec<PartyId>,
    pub listeners: Vec<PartyId>,
    pub strategy: String,
    pub seed: u64,
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub stderr: f64,
    pub max_prior: f64,
    pub bound_epsilon: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

/// A family of chi-square goodness-of-fit tests against exact expectations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub id: String,
    pub q: u32,
    #[serde(rename = "L")]
    pub msg_len: usize,
    #[serde(rename = "N")]
    pub ct_len: usize,
    pub edges: usize,
    pub seed: u64,
    pub samples: u64,
    pub tests: usize,
    pub max_statistic: f64,
    pub min_p_value: f64,
    pub alpha: f64,
    pub verdict: Verdict,
}

/// Any report, tagged by kind for line-delimited output.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Sd(SdReport),
    Recovery(RecoveryReport),
    Chisquare(ChiSquareReport),
}

impl Record {
    pub fn verdict(&self) -> Verdict {
        match self {
            Record::Sd(r) => r.verdict,
            Record::Recovery(r) => r.verdict,
            Record::Chisquare(r) => r.verdict,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

impl From<SdReport> for Record {
    fn from(r: SdReport) -> Self {
        Record::Sd(r)
    }
}

impl From<RecoveryReport> for Record {
    fn from(r: RecoveryReport) -> Self {
        Record::Recovery(r)
    }
}

impl From<ChiSquareReport> for Record {
    fn from(r: ChiSquareReport) -> Self {
        Record::Chisquare(r)
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Base-`q` index of a column vector, first entry least significant.
fn vector_index(v: &Matrix) -> u128 {
    let q = v.field().modulus() as u128;
    v.data()
        .iter()
        .rev()
        .fold(0u128, |acc, &x| acc * q + x as u128)
}

fn check_feasible(size: u128, cap: u128) -> Result<()> {
    if size > cap {
        return Err(AceError::FeasibilityError { size, cap });
    }
    Ok(())
}

/// Exact distance between grouped counts and `Unif(support) x p_group`:
/// returns `(numerator, denominator)` with `sd = numerator / denominator`.
fn grouped_uniform_sd<K>(groups: &HashMap<K, HashMap<u128, u64>>, support: u128) -> (u128, u128) {
    let mut total = 0u128;
    let mut num = 0u128;
    for cells in groups.values() {
        let group_total: u128 = cells.values().map(|&n| n as u128).sum();
        total += group_total;
        for &n in cells.values() {
            num += (n as u128 * support).abs_diff(group_total);
        }
        num += (support - cells.len() as u128) * group_total;
    }
    (num, 2 * total * support)
}

fn ratio(num: u128, den: u128) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn merge_groups<K: std::hash::Hash + Eq>(
    mut a: HashMap<K, HashMap<u128, u64>>,
    b: HashMap<K, HashMap<u128, u64>>,
) -> HashMap<K, HashMap<u128, u64>> {
    for (k, cells) in b {
        let slot = a.entry(k).or_default();
        for (c, n) in cells {
            *slot.entry(c).or_default() += n;
        }
    }
    a
}

fn merge_counts<K: std::hash::Hash + Eq>(
    mut a: HashMap<K, u64>,
    b: HashMap<K, u64>,
) -> HashMap<K, u64> {
    for (k, n) in b {
        *a.entry(k).or_default() += n;
    }
    a
}

fn nonzero_messages(params: &PairParams) -> Vec<Matrix> {
    all_matrices(params.field(), params.msg_len(), 1)
        .filter(|m| !m.is_zero())
        .collect()
}

// ---------------------------------------------------------------------------
// No-read
// ---------------------------------------------------------------------------

/// For every `(K_R, m)` cell of the keyspace, the law of `c = K_E m` must be
/// exactly uniform over nonzero vectors. Reports the largest cell deviation.
pub fn check_no_read_exact(params: &PairParams, cap: u128) -> Result<SdReport> {
    let size = params.keyspace_size();
    check_feasible(size.saturating_mul(params.message_space_size()), cap)?;
    let keyspace = enumerate_keyspace(params, cap)?;
    let messages = nonzero_messages(params);
    let universe = (params.q() as u128).pow(params.ct_len() as u32);
    if universe > 1 << 24 {
        return Err(AceError::FeasibilityError {
            size: universe,
            cap: 1 << 24,
        });
    }
    let support = universe - 1;

    // (max numerator/denominator over cells, exact flag)
    let worst = (0..keyspace.cell_count())
        .into_par_iter()
        .map(|cell| {
            let mut counts = vec![vec![0u64; universe as usize]; messages.len()];
            let mut total = 0u128;
            for keys in keyspace.cell(cell) {
                total += 1;
                for (mi, m) in messages.iter().enumerate() {
                    let c = keys.enc_key.mul_unchecked(m);
                    counts[mi][vector_index(&c) as usize] += 1;
                }
            }
            let mut worst = 0f64;
            let mut exact = true;
            for per_m in &counts {
                let mut num = per_m[0] as u128 * support;
                for &n in &per_m[1..] {
                    num += (n as u128 * support).abs_diff(total);
                }
                exact &= num == 0;
                worst = worst.max(ratio(num, 2 * total * support));
            }
            (worst, exact)
        })
        .reduce(|| (0.0, true), |a, b| (a.0.max(b.0), a.1 && b.1));

    let mut report = SdReport::exact("noread", params, 1, worst.0);
    report.verdict = if worst.1 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    report.note = Some(format!(
        "{} (K_R, m) cells over {} keyspace elements",
        keyspace.cell_count() * messages.len(),
        keyspace.len()
    ));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Keygen distribution
// ---------------------------------------------------------------------------

/// How the alternative samplers choose their `Z` block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ZMode {
    /// Every invertible `Z`.
    Enumerated,
    /// One fixed invertible `Z`.
    Fixed(Matrix),
}

impl ZMode {
    fn label(&self) -> &'static str {
        match self {
            ZMode::Enumerated => "z-enumerated",
            ZMode::Fixed(_) => "z-fixed",
        }
    }
}

/// Multiplicity of each key triple over the full seed space of a sampler.
#[derive(Clone, Debug)]
pub struct KeygenTally {
    pub variant: KeygenVariant,
    pub seeds: u64,
    pub counts: HashMap<PairKeys, u64>,
}

/// Seed-space size of a sampler.
pub fn seed_space_size(params: &PairParams, variant: KeygenVariant, z: &ZMode) -> u128 {
    let (q, l, n) = (params.q() as u64, params.msg_len(), params.ct_len());
    let gl = crate::matrix::count_full_rank(q, n, n);
    let free = (q as u128).saturating_pow((l * (n - l)) as u32);
    let zs = match (variant, z) {
        (KeygenVariant::Standard, _) | (_, ZMode::Fixed(_)) => 1,
        (_, ZMode::Enumerated) => crate::matrix::count_full_rank(q, n - l, n - l),
    };
    gl.saturating_mul(gl)
        .saturating_mul(free)
        .saturating_mul(zs)
}

/// Runs a sampler over every seed and tallies the keys it produces.
pub fn keygen_tally(
    params: &PairParams,
    variant: KeygenVariant,
    z: &ZMode,
    cap: u128,
) -> Result<KeygenTally> {
    check_feasible(seed_space_size(params, variant, z), cap)?;
    let (l, n, field) = (params.msg_len(), params.ct_len(), params.field());
    let gl = full_rank_matrices(field, n, n);
    let zs = match z {
        ZMode::Enumerated => full_rank_matrices(field, n - l, n - l),
        ZMode::Fixed(m) => {
            if m.rows() != n - l || m.cols() != n - l || !m.is_full_rank() {
                return Err(AceError::InvalidArgument(
                    "fixed Z must be an invertible (N-L) x (N-L) matrix".into(),
                ));
            }
            vec![m.clone()]
        }
    };
    let uppers: Vec<Matrix> = all_matrices(field, l, n - l).collect();
    let lowers: Vec<Matrix> = all_matrices(field, n - l, l).collect();

    let counts = (0..gl.len())
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<PairKeys, u64>, ie| {
            let s_e = &gl[ie];
            let mut add = |seed: KeygenSeed| {
                let keys = seed
                    .derive_keys(params)
                    .expect("seed matrices are invertible");
                *acc.entry(keys).or_default() += 1;
            };
            for other in &gl {
                match variant {
                    KeygenVariant::Standard => {
                        for t in &uppers {
                            add(KeygenSeed::Standard {
                                s_e: s_e.clone(),
                                s_d: other.clone(),
                                t: t.clone(),
                            });
                        }
                    }
                    KeygenVariant::Alt => {
                        for t in &uppers {
                            for zm in &zs {
                                add(KeygenSeed::Alt {
                                    s_e: s_e.clone(),
                                    s_f: other.clone(),
                                    t: t.clone(),
                                    z: zm.clone(),
                                });
                            }
                        }
                    }
                    KeygenVariant::Alt2 => {
                        for u in &lowers {
                            for zm in &zs {
                                add(KeygenSeed::Alt2 {
                                    s_e: s_e.clone(),
                                    s_g: other.clone(),
                                    u: u.clone(),
                                    z: zm.clone(),
                                });
                            }
                        }
                    }
                }
            }
            acc
        })
        .reduce(HashMap::new, merge_counts);
    let seeds = counts.values().sum();
    Ok(KeygenTally {
        variant,
        seeds,
        counts,
    })
}

/// Distance of a sampler's induced law from the uniform law on the keyspace;
/// passes only when every keyspace element has the same multiplicity.
pub fn check_keygen_uniform(
    params: &PairParams,
    variant: KeygenVariant,
    z: &ZMode,
    cap: u128,
) -> Result<SdReport> {
    let tally = keygen_tally(params, variant, z, cap)?;
    let size = params.keyspace_size();
    let total = tally.seeds as u128;
    let mut num = (size - tally.counts.len() as u128) * total;
    for &n in tally.counts.values() {
        num += (n as u128 * size).abs_diff(total);
    }
    let label = if variant == KeygenVariant::Standard {
        "keygen-uniform/standard".to_string()
    } else {
        format!("keygen-uniform/{}/{}", variant.name(), z.label())
    };
    let mut report = SdReport::exact(label, params, 1, ratio(num, 2 * total * size));
    report.verdict = if num == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let multiplicities: std::collections::BTreeSet<u64> = tally.counts.values().copied().collect();
    report.note = Some(format!(
        "{} seeds, {} distinct triples of {}, multiplicities {:?}",
        tally.seeds,
        tally.counts.len(),
        size,
        multiplicities
    ));
    Ok(report)
}

/// Exact distance between the laws induced by two samplers.
pub fn check_keygen_equivalence(
    params: &PairParams,
    a: (KeygenVariant, &ZMode),
    b: (KeygenVariant, &ZMode),
    cap: u128,
) -> Result<SdReport> {
    let ta = keygen_tally(params, a.0, a.1, cap)?;
    let tb = keygen_tally(params, b.0, b.1, cap)?;
    let (na, nb) = (ta.seeds as u128, tb.seeds as u128);
    let mut num = 0u128;
    for (k, &ca) in &ta.counts {
        let cb = tb.counts.get(k).copied().unwrap_or(0);
        num += (ca as u128 * nb).abs_diff(cb as u128 * na);
    }
    for (k, &cb) in &tb.counts {
        if !ta.counts.contains_key(k) {
            num += cb as u128 * na;
        }
    }
    let id = format!(
        "keygen-equiv/{}:{}/{}:{}",
        a.0.name(),
        a.1.label(),
        b.0.name(),
        b.1.label()
    );
    let mut report = SdReport::exact(id, params, 1, ratio(num, 2 * na * nb));
    report.verdict = if num == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

/// Pairwise independence of `(K_R, K_E, K_D)` under the standard sampler:
/// every joint count times the seed total must equal the product of marginals.
/// Reports the largest joint-versus-product distance over the three pairs.
pub fn check_pairwise_independence(params: &PairParams, cap: u128) -> Result<SdReport> {
    let tally = keygen_tally(params, KeygenVariant::Standard, &ZMode::Enumerated, cap)?;
    let total = tally.seeds as u128;
    let project = |k: &PairKeys, which: usize| -> Matrix {
        match which {
            0 => k.san_key.clone(),
            1 => k.enc_key.clone(),
            _ => k.dec_key.clone(),
        }
    };
    let mut worst = 0f64;
    let mut exact = true;
    for (x, y) in [(0, 1), (0, 2), (1, 2)] {
        let mut mx: HashMap<Matrix, u128> = HashMap::new();
        let mut my: HashMap<Matrix, u128> = HashMap::new();
        let mut joint: HashMap<(Matrix, Matrix), u128> = HashMap::new();
        for (k, &n) in &tally.counts {
            let (a, b) = (project(k, x), project(k, y));
            *mx.entry(a.clone()).or_default() += n as u128;
            *my.entry(b.clone()).or_default() += n as u128;
            *joint.entry((a, b)).or_default() += n as u128;
        }
        let mut num = 0u128;
        for (a, &ca) in &mx {
            for (b, &cb) in &my {
                let j = joint.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
                num += (j * total).abs_diff(ca * cb);
            }
        }
        exact &= num == 0;
        worst = worst.max(ratio(num, 2 * total * total));
    }
    let mut report = SdReport::exact("keygen-independence", params, 1, worst);
    report.verdict = if exact { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

/// Chi-square goodness of fit of sampled cross-edge key pairs against the
/// exact product law. For every pair of edges and each of `K_E`, `K_D` and
/// the first column of `K_R` (each exactly uniform over nonzero vectors),
/// the joint of the two edges' values must match the uniform product.
pub fn check_cross_edge_independence(
    policy: &Policy,
    params: &PairParams,
    samples: u64,
    seed: u64,
    alpha: f64,
) -> Result<ChiSquareReport> {
    let m = policy.edge_count();
    if m < 2 {
        return Err(AceError::InvalidArgument("need at least two edges".into()));
    }
    let l = params.msg_len();
    // Each statistic is a length-N vector; K_D contributes its first row.
    let categories = params.ciphertext_space_size();
    if l != 1 || categories > 1 << 12 {
        return Err(AceError::InvalidArgument(
            "cross-edge check runs with L = 1 and at most 4096 nonzero vectors".into(),
        ));
    }
    let stats_of = |k: &PairKeys| -> [usize; 3] {
        let n = params.ct_len();
        let r0 = k.san_key.submatrix(0, 0, n, 1).expect("column");
        [
            vector_index(&k.enc_key) as usize - 1,
            vector_index(&k.dec_key.transpose()) as usize - 1,
            vector_index(&r0) as usize - 1,
        ]
    };
    let c = categories as usize;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let chunks = samples.div_ceil(CHUNK);
    let tables = (0..chunks)
        .into_par_iter()
        .map(|chunk| -> Result<Vec<Vec<u64>>> {
            let mut rng = derive_rng(seed, chunk);
            let mut tables = vec![vec![0u64; c * c]; pairs.len() * 3];
            let n_here = CHUNK.min(samples - chunk * CHUNK);
            for _ in 0..n_here {
                let material =
                    policy_keygen_material(policy, params, KeygenVariant::Standard, &mut rng)?;
                let stats: Vec<[usize; 3]> = material.edge_keys.iter().map(stats_of).collect();
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    for s in 0..3 {
                        tables[p * 3 + s][stats[i][s] * c + stats[j][s]] += 1;
                    }
                }
            }
            Ok(tables)
        })
        .try_reduce(
            || vec![vec![0u64; c * c]; pairs.len() * 3],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
                Ok(a)
            },
        )?;
    let expected = samples as f64 / (c * c) as f64;
    let dist = ChiSquared::new((c * c - 1) as f64).expect("positive degrees of freedom");
    let mut max_statistic = 0f64;
    let mut min_p = 1f64;
    for table in &tables {
        let stat: f64 = table
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        max_statistic = max_statistic.max(stat);
        min_p = min_p.min(dist.sf(stat));
    }
    let per_test = alpha / tables.len() as f64;
    Ok(ChiSquareReport {
        id: "cross-edge-independence".into(),
        q: params.q(),
        msg_len: l,
        ct_len: params.ct_len(),
        edges: m,
        seed,
        samples,
        tests: tables.len(),
        max_statistic,
        min_p_value: min_p,
        alpha,
        verdict: if min_p >= per_test {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}

// ---------------------------------------------------------------------------
// No-write
// ---------------------------------------------------------------------------

/// One no-write experiment: a strategy against a policy instance.
#[derive(Clone, Debug)]
pub struct NoWriteConfig {
    pub policy: Policy,
    pub params: PairParams,
    pub strategy: AttackStrategy,
    pub mode: Mode,
    /// Monte Carlo sample count; ignored in exact mode.
    pub trials: u64,
    pub seed: u64,
    pub cap: u128,
}

/// Sampler used for experiments: seed-aware strategies get a sampler whose
/// seeds determine the keys they see (the `S_F` route when no leaker
/// encrypts, the `S_G` route otherwise).
pub fn experiment_variant(policy: &Policy, strategy: &AttackStrategy) -> KeygenVariant {
    if !strategy.kind.uses_seeds() {
        KeygenVariant::Standard
    } else if policy
        .edges()
        .iter()
        .any(|e| strategy.leakers.contains(&e.from))
    {
        KeygenVariant::Alt2
    } else {
        KeygenVariant::Alt
    }
}

fn revalidate(policy: &Policy, strategy: &AttackStrategy) -> Result<()> {
    AttackStrategy::new(
        strategy.kind,
        strategy.leakers.clone(),
        strategy.listeners.clone(),
        policy,
    )
    .map(|_| ())
}

/// Sanitizes every slot and packs the result into one index.
fn sanitized_index(keys: &[PairKeys], slots: &[Matrix], radix: u128) -> u128 {
    keys.iter().zip(slots).fold(0u128, |acc, (k, c)| {
        let out = k.san_key.mul_unchecked(c);
        acc * radix + vector_index(&out)
    })
}

/// Distance between the joint law of (sanitized forgery, listener keys) and
/// `Unif(C') x p_{K_B}`.
///
/// Exact mode walks the keyspace (or its power, one factor per edge) and
/// conditions on the full listener key. Monte Carlo mode samples keygens,
/// conditions on a fingerprint of the listener key (which can only lower
/// the distance), and subtracts the plug-in bias measured on synthetic
/// uniform data of the same shape.
pub fn estimate_no_write(cfg: &NoWriteConfig) -> Result<SdReport> {
    revalidate(&cfg.policy, &cfg.strategy)?;
    let params = &cfg.params;
    let m = cfg.policy.edge_count();
    let radix = (params.q() as u128)
        .checked_pow(params.ct_len() as u32)
        .ok_or_else(|| AceError::DomainError("ciphertext space too large to index".into()))?;
    radix
        .checked_pow(m as u32)
        .ok_or_else(|| AceError::DomainError("joint ciphertext space too large to index".into()))?;
    let support = (radix - 1).pow(m as u32);
    let epsilon = params.policy_epsilon(m);
    let mut report = SdReport {
        id: format!("nowrite/{}", cfg.strategy.id()),
        q: params.q(),
        msg_len: params.msg_len(),
        ct_len: params.ct_len(),
        edges: m,
        leakers: cfg.strategy.leakers.clone(),
        listeners: cfg.strategy.listeners.clone(),
        strategy: Some(cfg.strategy.id().to_string()),
        mode: cfg.mode,
        seed: Some(cfg.seed),
        trials: None,
        sd_estimate: 0.0,
        stderr: None,
        bound_epsilon: epsilon,
        tight_epsilon: Some(1.25 / 2.0 * epsilon),
        calibration_bias: 0.0,
        verdict: Verdict::Pass,
        note: None,
    };

    match cfg.mode {
        Mode::Exact => {
            let (num, den, elements) = no_write_exact(cfg, radix, support)?;
            report.sd_estimate = ratio(num, den).clamp(0.0, 1.0);
            report.trials = Some(elements);
            report.verdict = if epsilon >= 1.0 {
                Verdict::Vacuous
            } else if report.sd_estimate <= epsilon {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            report.note = Some(format!(
                "{LOWER_BOUND_NOTE}; conditioned on the full listener key"
            ));
        }
        Mode::Montecarlo => {
            if cfg.trials == 0 {
                return Err(AceError::InvalidArgument("trials must be positive".into()));
            }
            let raw = no_write_sampled(cfg, radix)?;
            let groups = params.q() as u128;
            let mut cal_rng = derive_rng(cfg.seed, u64::MAX - 1);
            let reps: Vec<f64> = (0..CALIBRATION_REPLICATES)
                .map(|_| plug_in_uniform_sd(groups, support, cfg.trials, &mut cal_rng))
                .collect();
            let bias = mean(&reps);
            let stderr = std_dev(&reps);
            report.trials = Some(cfg.trials);
            report.calibration_bias = bias;
            report.sd_estimate = (raw - bias).clamp(0.0, 1.0);
            report.stderr = Some(stderr);
            report.verdict = if epsilon >= 1.0 {
                Verdict::Vacuous
            } else if report.sd_estimate <= epsilon + 3.0 * stderr {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            report.note = Some(format!(
                "{LOWER_BOUND_NOTE}; conditioned on a fingerprint of the listener key, which can only lower the distance; raw plug-in {raw:.6}"
            ));
        }
    }
    Ok(report)
}

fn strategy_slots(
    cfg: &NoWriteConfig,
    keys: &[PairKeys],
    seeds: SeedSource<'_>,
    bit: Option<u8>,
    rng: &mut dyn RngCore,
) -> Vec<Matrix> {
    let leaker = KeyView::for_parties(&cfg.policy, &cfg.params, keys, &cfg.strategy.leakers, seeds);
    cfg.strategy.encode(&leaker, bit, rng)
}

fn no_write_exact(cfg: &NoWriteConfig, radix: u128, support: u128) -> Result<(u128, u128, u64)> {
    let params = &cfg.params;
    let m = cfg.policy.edge_count();
    let k = params.keyspace_size();
    let total = k.checked_pow(m as u32).ok_or(AceError::FeasibilityError {
        size: u128::MAX,
        cap: cfg.cap,
    })?;
    check_feasible(total, cfg.cap)?;
    let keyspace = enumerate_keyspace(params, cfg.cap)?;
    let seeds = if cfg.strategy.kind.uses_seeds() {
        SeedSource::Canonical
    } else {
        SeedSource::None
    };

    let evaluate = |keys: &[PairKeys], acc: &mut HashMap<Vec<u32>, HashMap<u128, u64>>| {
        let slots = if cfg.strategy.kind.is_randomized() {
            let view =
                KeyView::for_parties(&cfg.policy, params, keys, &cfg.strategy.leakers, seeds);
            let mut rng = view.derived_rng(cfg.seed);
            cfg.strategy.encode(&view, None, &mut rng)
        } else {
            strategy_slots(cfg, keys, seeds, None, &mut StepRng::new(0, 0))
        };
        let c = sanitized_index(keys, &slots, radix);
        let listener = KeyView::for_parties(
            &cfg.policy,
            params,
            keys,
            &cfg.strategy.listeners,
            SeedSource::None,
        );
        *acc.entry(listener.key_entries())
            .or_default()
            .entry(c)
            .or_default() += 1;
    };

    let groups = if m == 1 {
        (0..keyspace.cell_count())
            .into_par_iter()
            .fold(HashMap::new, |mut acc, cell| {
                for keys in keyspace.cell(cell) {
                    evaluate(std::slice::from_ref(&keys), &mut acc);
                }
                acc
            })
            .reduce(HashMap::new, merge_groups)
    } else {
        let elements: Vec<PairKeys> = keyspace.iter().collect();
        let base = elements.len();
        (0..base)
            .into_par_iter()
            .fold(HashMap::new, |mut acc, first| {
                let mut digits = vec![0usize; m];
                digits[0] = first;
                loop {
                    let keys: Vec<PairKeys> = digits.iter().map(|&d| elements[d].clone()).collect();
                    evaluate(&keys, &mut acc);
                    // odometer over the remaining edges
                    let mut pos = m - 1;
                    loop {
                        if pos == 0 {
                            return acc;
                        }
                        digits[pos] += 1;
                        if digits[pos] < base {
                            break;
                        }
                        digits[pos] = 0;
                        pos -= 1;
                    }
                }
            })
            .reduce(HashMap::new, merge_groups)
    };
    let (num, den) = grouped_uniform_sd(&groups, support);
    Ok((num, den, total as u64))
}

fn no_write_sampled(cfg: &NoWriteConfig, radix: u128) -> Result<f64> {
    let params = &cfg.params;
    let support = (radix - 1).pow(cfg.policy.edge_count() as u32);
    let variant = experiment_variant(&cfg.policy, &cfg.strategy);
    let chunks = cfg.trials.div_ceil(CHUNK);
    let groups = (0..chunks)
        .into_par_iter()
        .map(|chunk| -> Result<HashMap<u32, HashMap<u128, u64>>> {
            let mut rng = derive_rng(cfg.seed, chunk);
            let mut acc: HashMap<u32, HashMap<u128, u64>> = HashMap::new();
            for _ in 0..CHUNK.min(cfg.trials - chunk * CHUNK) {
                let material = policy_keygen_material(&cfg.policy, params, variant, &mut rng)?;
                let keys = &material.edge_keys;
                let slots = strategy_slots(
                    cfg,
                    keys,
                    SeedSource::Sampled(&material.seeds),
                    None,
                    &mut rng,
                );
                let c = sanitized_index(keys, &slots, radix);
                let listener = KeyView::for_parties(
                    &cfg.policy,
                    params,
                    keys,
                    &cfg.strategy.listeners,
                    SeedSource::None,
                );
                *acc.entry(listener.fingerprint())
                    .or_default()
                    .entry(c)
                    .or_default() += 1;
            }
            Ok(acc)
        })
        .try_reduce(HashMap::new, |a, b| Ok(merge_groups(a, b)))?;
    let (num, den) = grouped_uniform_sd(&groups, support);
    Ok(ratio(num, den))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Plug-in distance of `trials` draws from `Unif(groups) x Unif(support)`
/// against `Unif(support) x` (empirical group law).
fn plug_in_uniform_sd<R: Rng + ?Sized>(
    groups: u128,
    support: u128,
    trials: u64,
    rng: &mut R,
) -> f64 {
    let mut acc: HashMap<u128, HashMap<u128, u64>> = HashMap::new();
    for _ in 0..trials {
        let g = rng.gen_range(0..groups);
        let c = rng.gen_range(0..support);
        *acc.entry(g).or_default().entry(c).or_default() += 1;
    }
    let (num, den) = grouped_uniform_sd(&acc, support);
    ratio(num, den)
}

/// Mean plug-in distance of `trials` truly uniform draws over `support`
/// cells: the positive bias a Monte Carlo estimate of that shape carries.
pub fn calibrate_sd_estimator<R: Rng + ?Sized>(support: u128, trials: u64, rng: &mut R) -> f64 {
    let reps: Vec<f64> = (0..CALIBRATION_REPLICATES)
        .map(|_| plug_in_uniform_sd(1, support, trials, rng))
        .collect();
    mean(&reps)
}

// ---------------------------------------------------------------------------
// Message recovery
// ---------------------------------------------------------------------------

/// One recovery experiment: a leaker embeds a bit drawn with `P(1) = p_one`,
/// the listener guesses it from the sanitized ciphertext.
#[derive(Clone, Debug)]
pub struct RecoveryConfig {
    pub policy: Policy,
    pub params: PairParams,
    pub strategy: AttackStrategy,
    pub p_one: f64,
    pub trials: u64,
    pub seed: u64,
}

fn binomial_stderr(rate: f64, trials: u64) -> f64 {
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

/// Empirical `P(guess = bit)` against `max p_M + epsilon`, with a 3-sigma margin.
pub fn message_recovery_experiment(cfg: &RecoveryConfig) -> Result<RecoveryReport> {
    revalidate(&cfg.policy, &cfg.strategy)?;
    if !cfg.strategy.kind.is_bit_encoder() {
        return Err(AceError::InvalidStrategy(format!(
            "{} does not embed a message",
            cfg.strategy.id()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.p_one) || cfg.trials == 0 {
        return Err(AceError::InvalidArgument(
            "need p_one in [0, 1] and trials > 0".into(),
        ));
    }
    let params = &cfg.params;
    let variant = experiment_variant(&cfg.policy, &cfg.strategy);
    let chunks = cfg.trials.div_ceil(CHUNK);
    let successes = (0..chunks)
        .into_par_iter()
        .map(|chunk| -> Result<u64> {
            let mut rng = derive_rng(cfg.seed, chunk);
            let mut hits = 0u64;
            for _ in 0..CHUNK.min(cfg.trials - chunk * CHUNK) {
                let material = policy_keygen_material(&cfg.policy, params, variant, &mut rng)?;
                let keys = &material.edge_keys;
                let bit = u8::from(rng.gen_bool(cfg.p_one));
                let leaker = KeyView::for_parties(
                    &cfg.policy,
                    params,
                    keys,
                    &cfg.strategy.leakers,
                    SeedSource::Sampled(&material.seeds),
                );
                let slots = cfg.strategy.encode(&leaker, Some(bit), &mut rng);
                let sanitized = keys
                    .iter()
                    .zip(slots)
                    .map(|(k, c)| {
                        Ok(pair_sanitize(&k.san_key, &PairCiphertext::new(c)?)?.into_vector())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let listener = KeyView::for_parties(
                    &cfg.policy,
                    params,
                    keys,
                    &cfg.strategy.listeners,
                    SeedSource::None,
                );
                hits += u64::from(cfg.strategy.decode(&listener, &sanitized) == bit);
            }
            Ok(hits)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let max_prior = cfg.p_one.max(1.0 - cfg.p_one);
    Ok(recovery_report(
        &format!("recovery/{}", cfg.strategy.id()),
        params,
        cfg.policy.edge_count(),
        &cfg.strategy,
        (cfg.seed, cfg.trials, successes),
        max_prior,
    ))
}

/// Builds a recovery report from raw counts `(seed, trials, successes)`;
/// also used by experiments that sanitize over the network.
pub fn recovery_report(
    id: &str,
    params: &PairParams,
    edges: usize,
    strategy: &AttackStrategy,
    (seed, trials, successes): (u64, u64, u64),
    max_prior: f64,
) -> RecoveryReport {
    let rate = successes as f64 / trials as f64;
    let stderr = binomial_stderr(rate, trials);
    let epsilon = params.policy_epsilon(edges);
    let limit = max_prior + epsilon;
    RecoveryReport {
        id: id.into(),
        scheme: if edges == 1 { "pair" } else { "policy" }.into(),
        q: params.q(),
        msg_len: params.msg_len(),
        ct_len: params.ct_len(),
        edges,
        leakers: strategy.leakers.clone(),
        listeners: strategy.listeners.clone(),
        strategy: strategy.id().into(),
        seed,
        trials,
        successes,
        rate,
        stderr,
        max_prior,
        bound_epsilon: epsilon,
        verdict: if limit >= 1.0 {
            Verdict::Vacuous
        } else if rate <= limit + 3.0 * stderr {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        note: Some(LOWER_BOUND_NOTE.into()),
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Otp,
    NaiveMatrix,
}

/// Runs a baseline's designated attack; the baseline is broken as expected
/// (verdict pass) only when every trial recovers the forged message.
pub fn baseline_recovery(
    kind: BaselineKind,
    field: Field,
    len: usize,
    trials: u64,
    seed: u64,
) -> Result<RecoveryReport> {
    if len == 0 || trials == 0 {
        return Err(AceError::InvalidArgument(
            "need len > 0 and trials > 0".into(),
        ));
    }
    let mut rng = derive_rng(seed, 0);
    let mut successes = 0u64;
    for _ in 0..trials {
        let ok = match kind {
            BaselineKind::Otp => {
                let scheme = otp_scheme(len, &mut rng);
                let forged: Vec<bool> = (0..len).map(|_| rng.gen()).collect();
                let c = otp_reverse_attack(&scheme.receiver, &forged);
                otp_reverse_decode(&scheme.sender, &scheme.sanitize(&c)) == forged
            }
            BaselineKind::NaiveMatrix => {
                let scheme = naive_matrix_scheme(field, len, &mut rng)?;
                let forged = Matrix::sample_nonzero_vector(&mut rng, len, field);
                let c = naive_collusion_attack(&scheme.enc_key, &scheme.dec_key, &forged)?;
                scheme.sanitize(&c)? == forged
            }
        };
        successes += u64::from(ok);
    }
    let rate = successes as f64 / trials as f64;
    let (id, q) = match kind {
        BaselineKind::Otp => ("baseline/otp-reverse", 2),
        BaselineKind::NaiveMatrix => ("baseline/naive-collusion", field.modulus()),
    };
    Ok(RecoveryReport {
        id: id.into(),
        scheme: match kind {
            BaselineKind::Otp => "otp",
            BaselineKind::NaiveMatrix => "naive_matrix",
        }
        .into(),
        q,
        msg_len: len,
        ct_len: len,
        edges: 1,
        leakers: vec![2],
        listeners: vec![1],
        strategy: match kind {
            BaselineKind::Otp => "otp_reverse",
            BaselineKind::NaiveMatrix => "naive_collusion",
        }
        .into(),
        seed,
        trials,
        successes,
        rate,
        stderr: binomial_stderr(rate, trials),
        max_prior: 0.0,
        bound_epsilon: 1.0,
        verdict: if successes == trials {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        note: Some(
            "insecure baseline: pass means the attack recovered every forged message".into(),
        ),
    })
}

/// Exact distance of the naive collusion output from uniform over every
/// key pair, for a fixed forgery. The output is the forgery itself, so the
/// distance is `1 - 1/(q^L - 1)`, the largest any point mass can reach.
pub fn baseline_naive_sd_exact(
    field: Field,
    len: usize,
    forged: &Matrix,
    cap: u128,
) -> Result<SdReport> {
    let gl = crate::matrix::count_full_rank(field.modulus() as u64, len, len);
    check_feasible(gl.saturating_mul(gl), cap)?;
    let keys = full_rank_matrices(field, len, len);
    let mut counts: HashMap<(), HashMap<u128, u64>> = HashMap::new();
    for enc in &keys {
        for dec in &keys {
            let san = dec.inverse()?.mul(&enc.inverse()?)?;
            let c = naive_collusion_attack(enc, dec, forged)?;
            let out = san.mul(&c)?;
            *counts
                .entry(())
                .or_default()
                .entry(vector_index(&out))
                .or_default() += 1;
        }
    }
    let support = (field.modulus() as u128).pow(len as u32) - 1;
    let (num, den) = grouped_uniform_sd(&counts, support);
    let sd = ratio(num, den);
    Ok(SdReport {
        id: "baseline/naive-collusion-sd".into(),
        q: field.modulus(),
        msg_len: len,
        ct_len: len,
        edges: 1,
        leakers: vec![1, 2],
        listeners: vec![],
        strategy: Some("naive_collusion".into()),
        mode: Mode::Exact,
        seed: None,
        trials: Some(gl as u64 * gl as u64),
        sd_estimate: sd,
        stderr: None,
        bound_epsilon: 1.0,
        tight_epsilon: None,
        calibration_bias: 0.0,
        verdict: if num * support == den * (support - 1) {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        note: Some("insecure baseline: pass means the output is a point mass".into()),
    })
}

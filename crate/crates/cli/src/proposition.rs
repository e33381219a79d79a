//! Brute-force check of the AdaFlood minimizer argument on tiny problems.
//!
//! The model family is a free lookup table over `num_inputs` discrete
//! inputs, so the empirical risk minimizer reaches zero training loss. Each
//! input carries `samples_per_input` samples whose clean label is
//! `input % num_classes`; `round(noise_rate * N)` of them get a different
//! label. The Bayes predictor `f*` keeps the clean label. With
//! `theta_i = loss(y_i, f*(x_i))` we confirm, for the 0-1 loss in exact
//! rational arithmetic over every table:
//!
//! - the ERM table has zero loss and AdaFlood value `2 L(f*)`;
//! - `f*` has AdaFlood value `L(f*)`, no larger than the ERM table's;
//! - every AdaFlood minimizer matches `theta` sample by sample;
//! - doubled levels give the ratio 4/3, halved levels give equality.
//!
//! An optional cross-entropy section repeats the value checks in floating
//! point, with `f*` the noise posterior and the minimizer found by search.

use std::collections::BTreeMap;

use floodlib_core::rng::rng_for;
use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

type Q = Ratio<i64>;

const NOISE_STREAM: u64 = 0x9e0;
const CE_TOL: f64 = 1e-12;
const SEARCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropositionConfig {
    pub num_inputs: usize,
    pub num_classes: usize,
    pub samples_per_input: usize,
    /// Fraction of samples whose label is replaced by another class.
    pub noise_rate: f64,
    pub cross_entropy: bool,
    /// Upper bound on `num_classes ^ num_inputs` tables to enumerate.
    pub max_tables: u64,
}

impl Default for PropositionConfig {
    fn default() -> Self {
        Self {
            num_inputs: 8,
            num_classes: 2,
            samples_per_input: 1,
            noise_rate: 0.25,
            cross_entropy: true,
            max_tables: 1 << 22,
        }
    }
}

pub const MAX_INPUTS: usize = 12;

impl PropositionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(1..=MAX_INPUTS).contains(&self.num_inputs) {
            return bad(format!("proposition.num_inputs must lie in 1..={MAX_INPUTS}"));
        }
        if self.num_classes < 2 {
            return bad("proposition.num_classes must be at least 2".into());
        }
        if self.samples_per_input == 0 {
            return bad("proposition.samples_per_input must be positive".into());
        }
        if !self.noise_rate.is_finite() {
            return bad("proposition.noise_rate must be finite".into());
        }
        match self.table_count() {
            Some(n) if n <= self.max_tables => Ok(()),
            _ => bad(format!(
                "{}^{} lookup tables exceed proposition.max_tables = {}",
                self.num_classes, self.num_inputs, self.max_tables
            )),
        }
    }

    fn table_count(&self) -> Option<u64> {
        (self.num_classes as u64).checked_pow(self.num_inputs as u32)
    }
}

/// An exact value with its decimal rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exact {
    pub exact: String,
    pub value: f64,
}

impl From<Q> for Exact {
    fn from(q: Q) -> Self {
        Self {
            exact: q.to_string(),
            value: *q.numer() as f64 / *q.denom() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_owned(),
        passed,
        detail,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneReport {
    pub tables_enumerated: u64,
    pub bayes_risk: Exact,
    pub erm_risk: Exact,
    pub adaflood_erm: Exact,
    pub adaflood_bayes: Exact,
    pub adaflood_min: Exact,
    pub minimizers: u64,
    pub minimizers_off_theta: u64,
    pub doubled_adaflood_erm: Exact,
    pub doubled_adaflood_bayes: Exact,
    pub doubled_ratio: Exact,
    pub halved_adaflood_erm: Exact,
    pub halved_adaflood_bayes: Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyReport {
    pub bayes_risk: f64,
    pub adaflood_erm: f64,
    pub adaflood_bayes: f64,
    pub adaflood_searched: f64,
    pub max_searched_gap: f64,
    pub doubled_ratio: f64,
    pub halved_adaflood_erm: f64,
    pub halved_adaflood_bayes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub seed: u64,
    pub n_samples: usize,
    /// Input index and observed label of every sample.
    pub inputs: Vec<usize>,
    pub labels: Vec<usize>,
    pub noisy_samples: Vec<usize>,
    pub zero_one: ZeroOneReport,
    pub cross_entropy: Option<CrossEntropyReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

struct Problem {
    k: usize,
    m: usize,
    inputs: Vec<usize>,
    labels: Vec<usize>,
    noisy: Vec<usize>,
}

impl Problem {
    fn clean(&self, input: usize) -> usize {
        input % self.k
    }

    fn build(cfg: &PropositionConfig, seed: u64) -> Result<Self> {
        let k = cfg.num_classes;
        let m = cfg.num_inputs;
        let n = m * cfg.samples_per_input;
        let max_rate = (k - 1) as f64 / k as f64;
        if !(cfg.noise_rate > 0.0 && cfg.noise_rate < max_rate) {
            return Err(CliError::Premise(format!(
                "noise_rate must lie in (0, {max_rate}) so the clean label stays the Bayes choice and the Bayes error is positive"
            )));
        }
        let flips = (cfg.noise_rate * n as f64).round() as usize;
        if flips == 0 {
            return Err(CliError::Premise(format!(
                "noise_rate {} flips no label among {n} samples, so the Bayes error is zero",
                cfg.noise_rate
            )));
        }
        let inputs: Vec<usize> = (0..n).map(|i| i / cfg.samples_per_input).collect();
        let mut labels: Vec<usize> = inputs.iter().map(|&j| j % k).collect();
        let mut rng = rng_for(seed, NOISE_STREAM);
        let mut noisy = rand::seq::index::sample(&mut rng, n, flips).into_vec();
        noisy.sort_unstable();
        for &i in &noisy {
            labels[i] = (labels[i] + rng.random_range(1..k)) % k;
        }
        let p = Self {
            k,
            m,
            inputs,
            labels,
            noisy,
        };
        for j in 0..m {
            let mut seen = p.samples_of(j).map(|i| p.labels[i]);
            let first = seen.next();
            if seen.any(|y| Some(y) != first) {
                return Err(CliError::Premise(format!(
                    "input {j} carries conflicting labels, so no lookup table reaches zero training loss"
                )));
            }
        }
        Ok(p)
    }

    fn samples_of(&self, input: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.inputs.len()).filter(move |&i| self.inputs[i] == input)
    }

    fn n(&self) -> i64 {
        self.labels.len() as i64
    }
}

fn decode(mut code: u64, k: usize, m: usize, out: &mut [usize]) {
    for slot in out.iter_mut().take(m) {
        *slot = (code % k as u64) as usize;
        code /= k as u64;
    }
}

/// `sum_i |l_i - t_i| + t_i` on integer-scaled losses.
fn ada_sum(losses: &[i64], theta: &[i64]) -> i64 {
    losses.iter().zip(theta).map(|(l, t)| (l - t).abs() + t).sum()
}

fn zero_one(p: &Problem, cfg: &PropositionConfig, checks: &mut Vec<Check>) -> Result<ZeroOneReport> {
    let n = p.n();
    let bayes: Vec<usize> = (0..p.m).map(|j| p.clean(j)).collect();
    let losses_of = |table: &[usize]| -> Vec<i64> {
        p.inputs
            .iter()
            .zip(&p.labels)
            .map(|(&j, &y)| i64::from(table[j] != y))
            .collect()
    };
    let theta = losses_of(&bayes);
    // scaled by 2 so halved levels stay integral
    let theta2: Vec<i64> = theta.iter().map(|t| 2 * t).collect();
    let doubled2: Vec<i64> = theta.iter().map(|t| 4 * t).collect();
    let halved2: Vec<i64> = theta.clone();
    let l_star = Q::new(theta.iter().sum(), n);

    let total = cfg.table_count().expect("validated");
    let mut table = vec![0usize; p.m];
    let mut min_risk = i64::MAX;
    let mut erm_ada: Vec<i64> = Vec::new();
    let mut min_ada = i64::MAX;
    let mut minimizers = 0u64;
    let mut off_theta = 0u64;
    let mut erm_doubled = None;
    let mut erm_halved = None;
    for code in 0..total {
        decode(code, p.k, p.m, &mut table);
        let l = losses_of(&table);
        let risk: i64 = l.iter().sum();
        let l2: Vec<i64> = l.iter().map(|v| 2 * v).collect();
        let ada = ada_sum(&l2, &theta2);
        if risk < min_risk {
            min_risk = risk;
            erm_ada.clear();
        }
        if risk == min_risk {
            erm_ada.push(ada);
            erm_doubled = Some(ada_sum(&l2, &doubled2));
            erm_halved = Some(ada_sum(&l2, &halved2));
        }
        if ada < min_ada {
            min_ada = ada;
            minimizers = 0;
            off_theta = 0;
        }
        if ada == min_ada {
            minimizers += 1;
            if l != theta {
                off_theta += 1;
            }
        }
    }
    if min_risk != 0 {
        return Err(CliError::Premise(
            "no lookup table reaches zero training loss".into(),
        ));
    }
    let q2 = |v: i64| Q::new(v, 2 * n);
    let erm_value = q2(erm_ada[0]);
    let bayes_l2: Vec<i64> = theta.iter().map(|t| 2 * t).collect();
    let ada_bayes = q2(ada_sum(&bayes_l2, &theta2));
    let d_erm = q2(erm_doubled.expect("erm found"));
    let d_bayes = q2(ada_sum(&bayes_l2, &doubled2));
    let h_erm = q2(erm_halved.expect("erm found"));
    let h_bayes = q2(ada_sum(&bayes_l2, &halved2));
    let ratio = d_erm / d_bayes;
    let two = Q::from_integer(2);

    checks.push(check(
        "zero_one.erm_zero_loss",
        min_risk == 0,
        format!("min training loss {}", Q::new(min_risk, n)),
    ));
    checks.push(check(
        "zero_one.erm_adaflood_is_twice_bayes",
        erm_ada.iter().all(|&a| q2(a) == two * l_star),
        format!("AdaFlood(ERM) = {erm_value}, 2 L(f*) = {}", two * l_star),
    ));
    checks.push(check(
        "zero_one.bayes_adaflood_equals_bayes_risk",
        ada_bayes == l_star && ada_bayes <= erm_value,
        format!("AdaFlood(f*) = {ada_bayes}, L(f*) = {l_star}, AdaFlood(ERM) = {erm_value}"),
    ));
    checks.push(check(
        "zero_one.minimizers_match_theta",
        off_theta == 0 && q2(min_ada) == l_star,
        format!(
            "{minimizers} minimizers with value {}, {off_theta} off theta",
            q2(min_ada)
        ),
    ));
    checks.push(check(
        "zero_one.doubled_theta_ratio_four_thirds",
        ratio == Q::new(4, 3),
        format!("{d_erm} / {d_bayes} = {ratio}"),
    ));
    checks.push(check(
        "zero_one.halved_theta_equal",
        h_erm == h_bayes,
        format!("{h_erm} vs {h_bayes}"),
    ));

    Ok(ZeroOneReport {
        tables_enumerated: total,
        bayes_risk: l_star.into(),
        erm_risk: Q::new(min_risk, n).into(),
        adaflood_erm: erm_value.into(),
        adaflood_bayes: ada_bayes.into(),
        adaflood_min: q2(min_ada).into(),
        minimizers,
        minimizers_off_theta: off_theta,
        doubled_adaflood_erm: d_erm.into(),
        doubled_adaflood_bayes: d_bayes.into(),
        doubled_ratio: ratio.into(),
        halved_adaflood_erm: h_erm.into(),
        halved_adaflood_bayes: h_bayes.into(),
    })
}

fn ada_mean(losses: &[f64], theta: &[f64]) -> f64 {
    losses
        .iter()
        .zip(theta)
        .map(|(l, t)| (l - t).abs() + t)
        .sum::<f64>()
        / losses.len() as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Minimizes a unimodal function on `[lo, hi]` by ternary search.
fn ternary(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > 1e-15 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    (lo + hi) / 2.0
}

fn cross_entropy(p: &Problem, rate: f64, checks: &mut Vec<Check>) -> CrossEntropyReport {
    let k = p.k as f64;
    let posterior = |j: usize, y: usize| {
        if y == p.clean(j) {
            1.0 - rate
        } else {
            rate / (k - 1.0)
        }
    };
    let theta: Vec<f64> = p
        .inputs
        .iter()
        .zip(&p.labels)
        .map(|(&j, &y)| -posterior(j, y).ln())
        .collect();
    let l_star = theta.iter().sum::<f64>() / theta.len() as f64;
    let zeros = vec![0.0; theta.len()];
    let ada_erm = ada_mean(&zeros, &theta);
    let ada_bayes = ada_mean(&theta, &theta);

    // every sample on an input shares its label, so each input's AdaFlood
    // term depends only on the probability given to that label
    let mut searched = vec![0.0; theta.len()];
    for j in 0..p.m {
        let rows: Vec<usize> = p.samples_of(j).collect();
        let cost = |q: f64| rows.iter().map(|&i| (-q.ln() - theta[i]).abs()).sum::<f64>();
        let q = ternary(f64::MIN_POSITIVE, 1.0, cost);
        for &i in &rows {
            searched[i] = -q.ln();
        }
    }
    let ada_searched = ada_mean(&searched, &theta);
    let gap = searched
        .iter()
        .zip(&theta)
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max);

    let doubled: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
    let halved: Vec<f64> = theta.iter().map(|t| t / 2.0).collect();
    let ratio = ada_mean(&zeros, &doubled) / ada_mean(&theta, &doubled);
    let h_erm = ada_mean(&zeros, &halved);
    let h_bayes = ada_mean(&theta, &halved);

    checks.push(check(
        "cross_entropy.erm_adaflood_is_twice_bayes",
        close(ada_erm, 2.0 * l_star),
        format!("{ada_erm} vs {}", 2.0 * l_star),
    ));
    checks.push(check(
        "cross_entropy.bayes_adaflood_equals_bayes_risk",
        close(ada_bayes, l_star) && ada_bayes <= ada_erm,
        format!("{ada_bayes} vs {l_star}"),
    ));
    checks.push(check(
        "cross_entropy.searched_minimizer_matches_theta",
        gap <= SEARCH_TOL && (ada_searched - l_star).abs() <= SEARCH_TOL,
        format!("max |loss - theta| = {gap:e}, AdaFlood = {ada_searched}"),
    ));
    checks.push(check(
        "cross_entropy.doubled_theta_ratio_four_thirds",
        close(ratio, 4.0 / 3.0),
        format!("{ratio}"),
    ));
    checks.push(check(
        "cross_entropy.halved_theta_equal",
        close(h_erm, h_bayes),
        format!("{h_erm} vs {h_bayes}"),
    ));

    CrossEntropyReport {
        bayes_risk: l_star,
        adaflood_erm: ada_erm,
        adaflood_bayes: ada_bayes,
        adaflood_searched: ada_searched,
        max_searched_gap: gap,
        doubled_ratio: ratio,
        halved_adaflood_erm: h_erm,
        halved_adaflood_bayes: h_bayes,
    }
}

/// Builds the noisy instance for `seed` and runs every check. Failed checks
/// are reported, not raised; premise violations are errors.
pub fn run_check(cfg: &PropositionConfig, seed: u64) -> Result<PropositionReport> {
    cfg.validate()?;
    let p = Problem::build(cfg, seed)?;
    let mut checks = Vec::new();
    let zo = zero_one(&p, cfg, &mut checks)?;
    let ce = cfg
        .cross_entropy
        .then(|| cross_entropy(&p, cfg.noise_rate, &mut checks));
    let passed = checks.iter().all(|c| c.passed);
    Ok(PropositionReport {
        seed,
        n_samples: p.labels.len(),
        inputs: p.inputs.clone(),
        labels: p.labels.clone(),
        noisy_samples: p.noisy.clone(),
        zero_one: zo,
        cross_entropy: ce,
        checks,
        passed,
    })
}

/// Failed checks by seed.
pub fn failures(reports: &[PropositionReport]) -> BTreeMap<u64, Vec<String>> {
    reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            (
                r.seed,
                r.checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.clone())
                    .collect(),
            )
        })
        .collect()
}

//! Output uncertainty, its quantizer, and the conditional statistics that
//! drive the augmentation policies.
//!
//! Index conventions: options are numbered as in the profile (descending
//! ratio); a "last" index equal to the option count stands for "nothing
//! transmitted yet".

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{short_hex, CompressionProfile};

const ROW_TOLERANCE: f64 = 1e-9;

/// Shannon entropy (natural log) of a normalized model output.
pub fn uncertainty(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    if let Some(x) = probs.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {x} is not a probability")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
    }
    Ok(-probs.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

/// Uniform quantizer over `[0, u_max]`; values past either end are clamped.
pub fn quantize(u: f64, levels: usize, u_max: f64) -> usize {
    debug_assert!(levels >= 1 && u_max > 0.0);
    let step = u_max / levels as f64;
    let level = (u / step).floor();
    if level.is_nan() || level < 0.0 {
        0
    } else {
        (level as usize).min(levels - 1)
    }
}

/// One inference result on one compressed copy of a validation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub sample: String,
    pub option: usize,
    pub probs: Vec<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputLog {
    pub records: Vec<OutputRecord>,
}

impl OutputLog {
    /// Parses `sample,option,n,x_1,...,x_n,correct` lines. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 4 {
                return Err(err(format!("expected at least 4 fields, found {}", fields.len())));
            }
            let option = fields[1].parse::<usize>().map_err(|e| err(format!("option: {e}")))?;
            let n = fields[2].parse::<usize>().map_err(|e| err(format!("n: {e}")))?;
            if fields.len() != n + 4 {
                return Err(err(format!("expected {} fields for n = {n}, found {}", n + 4, fields.len())));
            }
            let probs = fields[3..3 + n]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| err(format!("probability `{f}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let correct = match fields[n + 3] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(err(format!("correctness flag `{other}`"))),
            };
            uncertainty(&probs).map_err(|e| err(e.to_string()))?;
            records.push(OutputRecord { sample: fields[0].to_string(), option, probs, correct });
        }
        Ok(Self { records })
    }
}

/// Conditional statistics of inference outcomes across compression options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTables {
    options: usize,
    levels: usize,
    u_max: f64,
    /// `P_a(r, f | last)`, shape `[options + 1][options][2]`.
    p_a: Vec<f64>,
    /// `P_U(r, u' | last, u)`, shape `[options + 1][levels][options][levels]`.
    p_u: Vec<f64>,
    /// `ρ(r | last, u, u')`, same shape as `p_u`.
    acc_joint: Vec<f64>,
    /// `ρ(r | u)`, shape `[options][levels]`.
    acc_marg: Vec<f64>,
}

impl ConditionalTables {
    /// Assembles tables from row-major parts and validates them.
    pub fn from_parts(
        options: usize,
        levels: usize,
        u_max: f64,
        p_a: Vec<f64>,
        p_u: Vec<f64>,
        acc_joint: Vec<f64>,
        acc_marg: Vec<f64>,
    ) -> Result<Self> {
        let t = Self { options, levels, u_max, p_a, p_u, acc_joint, acc_marg };
        validate_tables(&t)?;
        Ok(t)
    }

    pub fn options(&self) -> usize {
        self.options
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    fn last_index(&self, last: Option<usize>) -> usize {
        last.unwrap_or(self.options)
    }

    /// Probability that a transmission at `option` is correct (`correct = true`)
    /// or wrong, given the previous transmission `last` was wrong.
    pub fn p_a(&self, option: usize, correct: bool, last: Option<usize>) -> f64 {
        self.p_a[(self.last_index(last) * self.options + option) * 2 + correct as usize]
    }

    fn ju(&self, last: Option<usize>, level: usize, option: usize, next_level: usize) -> usize {
        ((self.last_index(last) * self.levels + level) * self.options + option) * self.levels + next_level
    }

    /// Probability of observing uncertainty level `next_level` at `option`.
    pub fn p_u(&self, option: usize, next_level: usize, last: Option<usize>, level: usize) -> f64 {
        self.p_u[self.ju(last, level, option, next_level)]
    }

    /// Accuracy at `option` given the previous result and the new level.
    pub fn acc_joint(&self, option: usize, last: Option<usize>, level: usize, next_level: usize) -> f64 {
        self.acc_joint[self.ju(last, level, option, next_level)]
    }

    /// Accuracy of a result at `option` observed with uncertainty `level`;
    /// zero when nothing was transmitted.
    pub fn acc_marg(&self, option: Option<usize>, level: usize) -> f64 {
        option.map_or(0.0, |o| self.acc_marg[o * self.levels + level])
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.options as u64).to_le_bytes());
        h.update((self.levels as u64).to_le_bytes());
        for v in [&self.p_a, &self.p_u, &self.acc_joint, &self.acc_marg] {
            for x in v.iter() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        short_hex(&h.finalize())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("table file: {e}")))?;
        validate_tables(&t)?;
        Ok(t)
    }
}

/// Checks shapes, row sums and probability ranges; reports the first violation.
pub fn validate_tables(t: &ConditionalTables) -> Result<()> {
    let (n, u) = (t.options, t.levels);
    if n == 0 || u == 0 {
        return Err(Error::InvalidConditionalTable("options and levels must be positive".into()));
    }
    if !(t.u_max > 0.0) {
        return Err(Error::InvalidConditionalTable(format!("u_max {} must be positive", t.u_max)));
    }
    let shapes = [
        ("p_a", t.p_a.len(), (n + 1) * n * 2),
        ("p_u", t.p_u.len(), (n + 1) * u * n * u),
        ("acc_joint", t.acc_joint.len(), (n + 1) * u * n * u),
        ("acc_marg", t.acc_marg.len(), n * u),
    ];
    for (table, found, expected) in shapes {
        if found != expected {
            return Err(Error::ShapeMismatch { table, expected, found });
        }
    }
    let range = |table: &'static str, values: &[f64], dims: &[usize]| -> Result<()> {
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::RangeViolation { table, index: unravel(pos, dims), value: values[pos] });
        }
        Ok(())
    };
    range("p_a", &t.p_a, &[n + 1, n, 2])?;
    range("p_u", &t.p_u, &[n + 1, u, n, u])?;
    range("acc_joint", &t.acc_joint, &[n + 1, u, n, u])?;
    range("acc_marg", &t.acc_marg, &[n, u])?;
    for (row, chunk) in t.p_a.chunks(2).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::RowSumViolation { table: "p_a", row: unravel(row, &[n + 1, n]), sum });
        }
    }
    for (row, chunk) in t.p_u.chunks(u).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::RowSumViolation { table: "p_u", row: unravel(row, &[n + 1, u, n]), sum });
        }
    }
    Ok(())
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for (slot, &d) in idx.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    idx
}

fn smoothed(hits: f64, total: f64, outcomes: f64, alpha: f64) -> Option<f64> {
    (total > 0.0).then(|| (hits + alpha) / (total + outcomes * alpha))
}

/// Empirical tables from a validation log, with additive smoothing `alpha`.
///
/// A conditioning row with no observations falls back to the corresponding
/// unconditional row.
pub fn build_tables(log: &OutputLog, options: usize, levels: usize, alpha: f64) -> Result<ConditionalTables> {
    if levels == 0 {
        return Err(Error::InvalidParameter { name: "levels", reason: "must be at least 1".into() });
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter { name: "smoothing", reason: format!("{alpha} is negative") });
    }
    let classes = log.records.first().map(|r| r.probs.len()).unwrap_or(0);
    if classes < 2 {
        return Err(Error::InvalidDistribution("outputs need at least two classes".into()));
    }
    if let Some(r) = log.records.iter().find(|r| r.probs.len() != classes) {
        return Err(Error::InvalidDistribution(format!("sample {} has {} classes, expected {classes}", r.sample, r.probs.len())));
    }
    let u_max = (classes as f64).ln();

    // sample -> per option (correct, level)
    let mut joined: BTreeMap<&str, Vec<Option<(bool, usize)>>> = BTreeMap::new();
    for r in &log.records {
        if r.option >= options {
            return Err(Error::UnjoinableSamples(format!("sample {} uses unknown option {}", r.sample, r.option)));
        }
        let slot = &mut joined.entry(&r.sample).or_insert_with(|| vec![None; options])[r.option];
        if slot.is_some() {
            return Err(Error::UnjoinableSamples(format!("sample {} has two results for option {}", r.sample, r.option)));
        }
        *slot = Some((r.correct, quantize(uncertainty(&r.probs)?, levels, u_max)));
    }
    for o in 0..options {
        if !joined.values().any(|v| v[o].is_some()) {
            return Err(Error::MissingOption(o));
        }
    }
    let samples: Vec<Vec<(bool, usize)>> = joined
        .into_iter()
        .map(|(id, v)| {
            v.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::UnjoinableSamples(format!("sample {id} lacks some options")))
        })
        .collect::<Result<_>>()?;

    let (n, u) = (options, levels);
    let total = samples.len() as f64;
    let count = |pred: &dyn Fn(&[(bool, usize)]) -> bool| samples.iter().filter(|s| pred(s)).count() as f64;

    let acc_overall: Vec<f64> =
        (0..n).map(|r| smoothed(count(&|s| s[r].0), total, 2.0, alpha).unwrap()).collect();
    // ρ(r | own level)
    let acc_level: Vec<f64> = (0..n)
        .flat_map(|r| {
            let acc = &acc_overall;
            let count = &count;
            (0..u).map(move |l| {
                let at = count(&|s| s[r].1 == l);
                smoothed(count(&|s| s[r].1 == l && s[r].0), at, 2.0, alpha).unwrap_or(acc[r])
            })
        })
        .collect();
    let level_dist: Vec<f64> = (0..n)
        .flat_map(|r| {
            let count = &count;
            (0..u).map(move |l| smoothed(count(&|s| s[r].1 == l), total, u as f64, alpha).unwrap())
        })
        .collect();

    let mut p_a = vec![0.0; (n + 1) * n * 2];
    for last in 0..=n {
        for r in 0..n {
            let correct = if last == n {
                acc_overall[r]
            } else {
                let wrong = count(&|s| !s[last].0);
                smoothed(count(&|s| !s[last].0 && s[r].0), wrong, 2.0, alpha).unwrap_or(acc_overall[r])
            };
            p_a[(last * n + r) * 2] = 1.0 - correct;
            p_a[(last * n + r) * 2 + 1] = correct;
        }
    }

    let mut p_u = vec![0.0; (n + 1) * u * n * u];
    let mut acc_joint = vec![0.0; (n + 1) * u * n * u];
    for last in 0..=n {
        for l in 0..u {
            for r in 0..n {
                for l2 in 0..u {
                    let idx = ((last * u + l) * n + r) * u + l2;
                    if last == n {
                        p_u[idx] = level_dist[r * u + l2];
                        acc_joint[idx] = acc_level[r * u + l2];
                        continue;
                    }
                    let given = count(&|s| s[last].1 == l);
                    p_u[idx] = smoothed(count(&|s| s[last].1 == l && s[r].1 == l2), given, u as f64, alpha)
                        .unwrap_or(level_dist[r * u + l2]);
                    let both = count(&|s| s[last].1 == l && s[r].1 == l2);
                    acc_joint[idx] = smoothed(count(&|s| s[last].1 == l && s[r].1 == l2 && s[r].0), both, 2.0, alpha)
                        .unwrap_or(acc_level[r * u + l2]);
                }
            }
        }
    }
    ConditionalTables::from_parts(n, u, u_max, p_a, p_u, acc_joint, acc_level)
}

/// Synthetic tables whose marginal accuracies equal the profile's.
///
/// Correctness across options is a mixture of a comonotone coupling (weight
/// `correlation`) and independence. Each option's uncertainty level depends
/// only on its own correctness: correct results skew to low levels, wrong ones
/// to high levels, with seeded jitter on the level weights. Outputs are
/// assumed to have ten classes.
pub fn synth_tables(profile: &CompressionProfile, levels: usize, correlation: f64, seed: u64) -> Result<ConditionalTables> {
    if levels == 0 {
        return Err(Error::InvalidParameter { name: "levels", reason: "must be at least 1".into() });
    }
    if !(0.0..=1.0).contains(&correlation) {
        return Err(Error::InvalidParameter { name: "correlation", reason: format!("{correlation} is outside [0, 1]") });
    }
    let n = profile.len();
    let u = levels;
    let rho: Vec<f64> = profile.options().iter().map(|o| o.accuracy).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut level_weights = |skew_low: bool| -> Vec<f64> {
        let w: Vec<f64> = (0..u)
            .map(|l| {
                let pos = if skew_low { l } else { u - 1 - l } as f64;
                (-3.0 * pos / u as f64).exp() * rng.gen_range(0.5..1.5)
            })
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    };
    let like_correct: Vec<Vec<f64>> = (0..n).map(|_| level_weights(true)).collect();
    let like_wrong: Vec<Vec<f64>> = (0..n).map(|_| level_weights(false)).collect();

    // P(C_r = 1 | C_last = c)
    let cond = |r: usize, last: usize, c: bool| -> f64 {
        let both = correlation * rho[r].min(rho[last]) + (1.0 - correlation) * rho[r] * rho[last];
        if c {
            if rho[last] > 0.0 { both / rho[last] } else { rho[r] }
        } else if rho[last] < 1.0 {
            ((rho[r] - both) / (1.0 - rho[last])).clamp(0.0, 1.0)
        } else {
            rho[r]
        }
    };
    let level_prob = |r: usize, l: usize| rho[r] * like_correct[r][l] + (1.0 - rho[r]) * like_wrong[r][l];
    let mut acc_marg = Vec::with_capacity(n * u);
    for r in 0..n {
        for l in 0..u {
            acc_marg.push((rho[r] * like_correct[r][l] / level_prob(r, l)).clamp(0.0, 1.0));
        }
    }

    let mut p_a = vec![0.0; (n + 1) * n * 2];
    for last in 0..=n {
        for r in 0..n {
            let c = if last == n { rho[r] } else { cond(r, last, false) };
            p_a[(last * n + r) * 2] = 1.0 - c;
            p_a[(last * n + r) * 2 + 1] = c;
        }
    }
    let mut p_u = vec![0.0; (n + 1) * u * n * u];
    let mut acc_joint = vec![0.0; (n + 1) * u * n * u];
    for last in 0..=n {
        for l in 0..u {
            for r in 0..n {
                let pc = if last == n {
                    rho[r]
                } else {
                    let post = acc_marg[last * u + l];
                    post * cond(r, last, true) + (1.0 - post) * cond(r, last, false)
                };
                for l2 in 0..u {
                    let idx = ((last * u + l) * n + r) * u + l2;
                    let hit = pc * like_correct[r][l2];
                    let prob = hit + (1.0 - pc) * like_wrong[r][l2];
                    p_u[idx] = prob;
                    acc_joint[idx] = if prob > 0.0 { (hit / prob).clamp(0.0, 1.0) } else { pc };
                }
            }
        }
    }
    ConditionalTables::from_parts(n, u, (10f64).ln(), p_a, p_u, acc_joint, acc_marg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn uncertainty_anchors() {
        let mut one_hot = vec![0.0; 10];
        one_hot[3] = 1.0;
        assert_eq!(uncertainty(&one_hot).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((uncertainty(&uniform).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut half = vec![0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        assert!((uncertainty(&half).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(uncertainty(&[0.5, 0.6]).is_err());
        assert!(uncertainty(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn quantizer_anchors() {
        let umax = 10f64.ln();
        assert_eq!(quantize(0.0, 10, umax), 0);
        assert_eq!(quantize(umax, 10, umax), 9);
        // u_max rounded as it would be read from a file
        #[allow(clippy::approx_constant)]
        let u_max = 2.302585;
        assert_eq!(quantize(1.0, 10, u_max), 4);
        assert_eq!(quantize(umax + 1e-9, 10, umax), 9);
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant_and_bounded(raw in proptest::collection::vec(0.0f64..1.0, 2..12), rot in 0usize..12) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let mut q = p.clone();
            let k = rot % q.len();
            q.rotate_left(k);
            let (a, b) = (uncertainty(&p).unwrap(), uncertainty(&q).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a <= (p.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn quantizer_is_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0, levels in 1usize..20) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(lo, levels, 10f64.ln()) <= quantize(hi, levels, 10f64.ln()));
        }

        #[test]
        fn built_tables_always_validate(
            outcomes in proptest::collection::vec((any::<bool>(), 0usize..10, any::<bool>(), 0usize..10), 1..40),
            alpha in prop_oneof![Just(0.0), Just(1.0), 0.0f64..2.0],
            levels in 1usize..6,
        ) {
            let mut records = Vec::new();
            for (i, (c0, k0, c1, k1)) in outcomes.iter().enumerate() {
                for (opt, c, k) in [(0, c0, k0), (1, c1, k1)] {
                    let mut probs = vec![0.02; 10];
                    probs[*k] += 0.8;
                    records.push(OutputRecord { sample: i.to_string(), option: opt, probs, correct: *c });
                }
            }
            let t = build_tables(&OutputLog { records }, 2, levels, alpha).unwrap();
            prop_assert!(validate_tables(&t).is_ok());
        }
    }

    #[test]
    fn quantizer_covers_every_level() {
        let umax = 10f64.ln();
        let hit: std::collections::BTreeSet<usize> = (0..=1000).map(|i| quantize(umax * i as f64 / 1000.0, 10, umax)).collect();
        assert_eq!(hit.len(), 10);
    }

    fn one_hot(k: usize) -> Vec<f64> {
        let mut v = vec![0.0; 10];
        v[k] = 1.0;
        v
    }

    #[test]
    fn always_correct_option_is_smoothed() {
        let log = OutputLog {
            records: vec![
                OutputRecord { sample: "a".into(), option: 0, probs: one_hot(1), correct: true },
                OutputRecord { sample: "a".into(), option: 1, probs: one_hot(1), correct: true },
            ],
        };
        let t = build_tables(&log, 2, 10, 1.0).unwrap();
        assert!((t.p_a(0, true, None) - 2.0 / 3.0).abs() < 1e-12);
        // no sample was wrong at option 0, so the row falls back to the marginal
        assert!((t.p_a(1, true, Some(0)) - 2.0 / 3.0).abs() < 1e-12);
    }

    /// Two samples, two options, two levels, no smoothing; every entry worked out by hand.
    #[test]
    fn two_sample_toy_log() {
        let uniform = vec![0.1; 10];
        let text = format!(
            "s1,0,10,{},0\ns1,1,10,{},1\ns2,0,10,{},1\ns2,1,10,{},1\n",
            join(&uniform),
            join(&one_hot(4)),
            join(&one_hot(2)),
            join(&one_hot(2)),
        );
        let log = OutputLog::parse(&text).unwrap();
        let t = build_tables(&log, 2, 2, 0.0).unwrap();
        // option 0: s1 wrong at level 1, s2 correct at level 0
        assert_eq!(t.p_a(0, true, None), 0.5);
        assert_eq!(t.p_a(1, true, None), 1.0);
        assert_eq!(t.p_a(1, true, Some(0)), 1.0);
        assert_eq!(t.acc_marg(Some(0), 0), 1.0);
        assert_eq!(t.acc_marg(Some(0), 1), 0.0);
        assert_eq!(t.acc_marg(None, 1), 0.0);
        assert_eq!(t.p_u(0, 1, None, 0), 0.5);
        assert_eq!(t.p_u(1, 0, None, 0), 1.0);
        assert_eq!(t.p_u(1, 0, Some(0), 1), 1.0);
        assert_eq!(t.acc_joint(1, Some(0), 1, 0), 1.0);
        // level 1 never observed at option 1: falls back to overall accuracy
        assert_eq!(t.acc_joint(1, None, 0, 1), 1.0);
    }

    fn join(v: &[f64]) -> String {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }

    #[test]
    fn marginal_consistency_without_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut records = Vec::new();
        for s in 0..300 {
            for opt in 0..3 {
                let raw: Vec<f64> = (0..10).map(|_| rng.gen::<f64>().powi(4)).collect();
                let total: f64 = raw.iter().sum();
                let probs = raw.iter().map(|x| x / total).collect();
                records.push(OutputRecord { sample: s.to_string(), option: opt, probs, correct: rng.gen_bool(0.6 + 0.1 * opt as f64) });
            }
        }
        let log = OutputLog { records };
        let t = build_tables(&log, 3, 10, 0.0).unwrap();
        for r in 0..3 {
            let raw = log.records.iter().filter(|x| x.option == r && x.correct).count() as f64 / 300.0;
            let mixed: f64 = (0..10).map(|l| t.p_u(r, l, None, 0) * t.acc_joint(r, None, 0, l)).sum();
            assert!((mixed - raw).abs() < 1e-9, "option {r}: {mixed} vs {raw}");
            assert!((t.p_a(r, true, None) - raw).abs() < 1e-12);
        }
    }

    #[test]
    fn log_errors() {
        assert!(matches!(OutputLog::parse("a,0,2,0.5,0.5,1\nb,0,2,0.5\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(OutputLog::parse("a,0,2,0.5,0.6,1\n"), Err(Error::Parse { line: 1, .. })));
        let log = OutputLog::parse("a,0,2,0.5,0.5,1\n").unwrap();
        assert_eq!(build_tables(&log, 2, 4, 1.0), Err(Error::MissingOption(1)));
        let log = OutputLog::parse("a,0,2,0.5,0.5,1\nb,1,2,0.5,0.5,1\n").unwrap();
        assert!(matches!(build_tables(&log, 2, 4, 1.0), Err(Error::UnjoinableSamples(_))));
    }

    #[test]
    fn synthetic_marginals_are_exact() {
        let profile = fixtures::mnist().profile;
        for seed in 0..5 {
            for corr in [0.0, 0.3, 1.0] {
                let t = synth_tables(&profile, 10, corr, seed).unwrap();
                for r in 0..3 {
                    let rho = profile.accuracy(r);
                    assert!((t.p_a(r, true, None) - rho).abs() < 1e-15);
                    let mixed: f64 = (0..10).map(|l| t.p_u(r, l, None, 0) * t.acc_joint(r, None, 0, l)).sum();
                    assert!((mixed - rho).abs() < 1e-12);
                    let marg: f64 = (0..10).map(|l| t.p_u(r, l, None, 0) * t.acc_marg(Some(r), l)).sum();
                    assert!((marg - rho).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn independent_synthetic_tables_ignore_history() {
        let profile = fixtures::cifar10().profile;
        let t = synth_tables(&profile, 10, 0.0, 3).unwrap();
        for last in 0..3 {
            for r in 0..3 {
                assert!((t.p_a(r, true, Some(last)) - profile.accuracy(r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_level_synthetic_tables_collapse() {
        let profile = fixtures::mnist().profile;
        let t = synth_tables(&profile, 1, 0.6, 9).unwrap();
        for last in [None, Some(0), Some(1), Some(2)] {
            for r in 0..3 {
                assert!((t.p_u(r, 0, last, 0) - 1.0).abs() < 1e-15);
                // with one level nothing is learned about the last result
                assert!((t.acc_joint(r, last, 0, 0) - profile.accuracy(r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validation_reports_violations() {
        let profile = fixtures::mnist().profile;
        let good = synth_tables(&profile, 4, 0.5, 1).unwrap();
        assert!(validate_tables(&good).is_ok());

        let mut scaled = good.clone();
        scaled.p_u[0] *= 1.1;
        scaled.p_u[1] *= 1.1;
        assert!(matches!(validate_tables(&scaled), Err(Error::RowSumViolation { table: "p_u", .. })));

        let mut hot = good.clone();
        hot.acc_joint[5] = 1.2;
        assert!(matches!(validate_tables(&hot), Err(Error::RangeViolation { table: "acc_joint", .. })));

        let mut short = good.clone();
        short.acc_marg.pop();
        assert!(matches!(validate_tables(&short), Err(Error::ShapeMismatch { .. })));

        let back = ConditionalTables::from_json(&good.to_json()).unwrap();
        assert_eq!(back.digest(), good.digest());
    }
}

//! Scoring of participant answer sheets and the statistics reported on them.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::render::{AnswerKey, Side, PAIR_COUNT};

pub const SHEET_HEADER: &str = "participant_id,group,age,gender,c1,c2,c3,c4,c5,c6";

/// Scores run 0..=6.
pub const SCORE_BINS: usize = PAIR_COUNT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupId {
    Numbered(u32),
    Ungrouped,
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupId::Numbered(n) => write!(f, "{n}"),
            GroupId::Ungrouped => f.write_str("ungrouped"),
        }
    }
}

impl GroupId {
    fn parse(s: &str) -> GroupId {
        s.trim().parse().map(GroupId::Numbered).unwrap_or(GroupId::Ungrouped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSheet {
    pub participant_id: String,
    pub group: GroupId,
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub choices: [Side; PAIR_COUNT],
}

impl AnswerSheet {
    pub fn complement(&self) -> AnswerSheet {
        AnswerSheet {
            choices: self.choices.map(Side::other),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedSheet {
    pub line: usize,
    pub participant_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SheetFile {
    pub sheets: Vec<AnswerSheet>,
    pub rejected: Vec<RejectedSheet>,
}

/// Parses an answer-sheet table. A missing or wrong header is an error;
/// malformed rows are set aside with the reason.
pub fn read_sheets(text: &str) -> Result<SheetFile> {
    let mut file = SheetFile::default();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if fields.join(",") != SHEET_HEADER {
                return Err(Error::parse(line_no, format!("expected header `{SHEET_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        match parse_row(&fields) {
            Ok(sheet) => file.sheets.push(sheet),
            Err(reason) => {
                log::warn!("answer sheet line {line_no} rejected: {reason}");
                file.rejected.push(RejectedSheet {
                    line: line_no,
                    participant_id: fields.first().filter(|s| !s.is_empty()).map(|s| s.to_string()),
                    reason,
                });
            }
        }
    }
    if !header_seen {
        return Err(Error::parse(1, format!("missing header `{SHEET_HEADER}`")));
    }
    Ok(file)
}

fn parse_row(fields: &[&str]) -> std::result::Result<AnswerSheet, String> {
    if fields.len() != 4 + PAIR_COUNT {
        return Err(format!("expected {} fields, found {}", 4 + PAIR_COUNT, fields.len()));
    }
    if fields[0].is_empty() {
        return Err("empty participant_id".into());
    }
    let age = match fields[2] {
        "" => None,
        s => Some(s.parse::<u32>().map_err(|_| format!("age `{s}` is not a whole number"))?),
    };
    let gender = (!fields[3].is_empty()).then(|| fields[3].to_string());
    let mut choices = [Side::A; PAIR_COUNT];
    for (i, slot) in choices.iter_mut().enumerate() {
        let f = fields[4 + i];
        let mut chars = f.chars();
        *slot = match (chars.next(), chars.next()) {
            (Some(c), None) => Side::try_from(c).map_err(|_| format!("choice {} `{f}` is not A or B", i + 1))?,
            _ => return Err(format!("choice {} `{f}` is not A or B", i + 1)),
        };
    }
    Ok(AnswerSheet {
        participant_id: fields[0].to_string(),
        group: GroupId::parse(fields[1]),
        age,
        gender,
        choices,
    })
}

pub fn write_sheets(sheets: &[AnswerSheet]) -> String {
    let mut out = format!("{SHEET_HEADER}\n");
    for s in sheets {
        let group = match s.group {
            GroupId::Numbered(n) => n.to_string(),
            GroupId::Ungrouped => String::new(),
        };
        let age = s.age.map(|a| a.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{group},{age},{}", s.participant_id, s.gender.as_deref().unwrap_or(""));
        for c in s.choices {
            let _ = write!(out, ",{}", c.as_char());
        }
        out.push('\n');
    }
    out
}

pub fn score(sheet: &AnswerSheet, key: &AnswerKey) -> usize {
    sheet.choices.iter().zip(key.0).filter(|(c, k)| **c == *k).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub n: usize,
    pub counts: [usize; SCORE_BINS],
    pub mean: f64,
    /// Participants scoring 0 or 6, i.e. who split every pair the same way.
    pub partitioned: usize,
    pub partitioned_fraction: f64,
}

impl ScoreDistribution {
    pub fn share(&self, score: usize) -> f64 {
        self.counts[score] as f64 / self.n as f64
    }
}

pub fn distribution(sheets: &[AnswerSheet], key: &AnswerKey) -> Result<ScoreDistribution> {
    if sheets.is_empty() {
        return Err(Error::invalid("no valid answer sheets"));
    }
    let mut counts = [0usize; SCORE_BINS];
    for s in sheets {
        counts[score(s, key)] += 1;
    }
    let n = sheets.len();
    let total: usize = counts.iter().enumerate().map(|(k, c)| k * c).sum();
    let partitioned = counts[0] + counts[PAIR_COUNT];
    Ok(ScoreDistribution {
        n,
        counts,
        mean: total as f64 / n as f64,
        partitioned,
        partitioned_fraction: partitioned as f64 / n as f64,
    })
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Expected score counts under random guessing, kept as exact numerators
/// over 2⁶.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinomialExpectation {
    pub n: u64,
    /// `n · C(6, k)`; the expected count is this divided by 64.
    pub numerators: [u64; SCORE_BINS],
}

impl BinomialExpectation {
    pub const DENOMINATOR: u64 = 1 << PAIR_COUNT;

    pub fn expected(&self, k: usize) -> f64 {
        self.numerators[k] as f64 / Self::DENOMINATOR as f64
    }

    pub fn all(&self) -> [f64; SCORE_BINS] {
        std::array::from_fn(|k| self.expected(k))
    }
}

pub fn binomial_expected(n: usize) -> Result<BinomialExpectation> {
    if n == 0 {
        return Err(Error::invalid("expected counts need at least one participant"));
    }
    let n = n as u64;
    let numerators = std::array::from_fn(|k| {
        let c: u64 = binomial(PAIR_COUNT as u64, k as u64).try_into().expect("small");
        n * c
    });
    Ok(BinomialExpectation { n, numerators })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Bins actually used after merging zero-expectation bins into a neighbour.
    pub bins: usize,
}

/// Pearson chi-square; bins with zero expectation are folded into the next
/// bin (the previous one for the last bin), and `df = bins - 1`.
pub fn goodness_of_fit(observed: &[f64], expected: &[f64]) -> Result<GoodnessOfFit> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::invalid("observed and expected must cover the same non-empty support"));
    }
    if expected.iter().chain(observed).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("counts must be finite and non-negative"));
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut carry = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        carry = (carry.0 + o, carry.1 + e);
        if carry.1 > 0.0 {
            bins.push(carry);
            carry = (0.0, 0.0);
        }
    }
    if carry != (0.0, 0.0) {
        match bins.last_mut() {
            Some(last) => {
                last.0 += carry.0;
                last.1 += carry.1;
            }
            None => return Err(Error::invalid("every expected count is zero")),
        }
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = bins.len() - 1;
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).expect("positive df").sf(statistic)
    };
    Ok(GoodnessOfFit {
        statistic,
        df,
        p_value,
        bins: bins.len(),
    })
}

/// Exact `P(X >= observed)` for `X ~ Binomial(n, 2/64)`, the chance of that
/// many 0-or-6 scores under random guessing.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTail {
    pub observed: usize,
    pub n: usize,
    /// Numerator over `32^n`.
    pub numerator: BigUint,
    pub probability: f64,
    pub log10_probability: f64,
}

pub fn partition_tail(n: usize, observed: usize) -> Result<PartitionTail> {
    if observed > n {
        return Err(Error::invalid(format!("{observed} partitioned out of {n} participants")));
    }
    // p = 1/32, so each term is C(n,k) · 31^(n-k) over 32^n
    let mut numerator = BigUint::from(0u32);
    for k in observed..=n {
        numerator += binomial(n as u64, k as u64) * BigUint::from(31u32).pow((n - k) as u32);
    }
    let denominator_bits = 5 * n as u64;
    let log10_probability = if numerator == BigUint::from(0u32) {
        f64::NEG_INFINITY
    } else {
        let bits = numerator.bits();
        let shift = bits.saturating_sub(64);
        let mantissa: u64 = (&numerator >> shift).try_into().expect("fits in 64 bits");
        ((mantissa as f64).log2() + shift as f64 - denominator_bits as f64) * std::f64::consts::LOG10_2
    };
    Ok(PartitionTail {
        observed,
        n,
        numerator,
        probability: 10f64.powf(log10_probability),
        log10_probability,
    })
}

/// Fraction correct on each pair, in pair order.
pub fn per_pair_success(sheets: &[AnswerSheet], key: &AnswerKey) -> [f64; PAIR_COUNT] {
    let mut hits = [0usize; PAIR_COUNT];
    for s in sheets {
        for (i, (c, k)) in s.choices.iter().zip(key.0).enumerate() {
            if *c == k {
                hits[i] += 1;
            }
        }
    }
    hits.map(|h| if sheets.is_empty() { 0.0 } else { h as f64 / sheets.len() as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: GroupId,
    pub n: usize,
    pub mean: f64,
}

/// Mean score per group; numbered groups ascending, then the ungrouped bucket.
pub fn per_group(sheets: &[AnswerSheet], key: &AnswerKey) -> Vec<GroupSummary> {
    let mut acc: BTreeMap<GroupId, (usize, usize)> = BTreeMap::new();
    for s in sheets {
        let e = acc.entry(s.group).or_default();
        e.0 += 1;
        e.1 += score(s, key);
    }
    acc.into_iter()
        .map(|(group, (n, total))| GroupSummary {
            group,
            n,
            mean: total as f64 / n as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub gender_supplied: usize,
    /// Lower-cased answer → (count, share of those who answered). Answers
    /// other than male/female are pooled as "other".
    pub genders: BTreeMap<String, (usize, f64)>,
    pub ages_supplied: usize,
    pub mean_age: Option<f64>,
    /// Ages more than three standard deviations from the mean.
    pub excluded_ages: Vec<u32>,
}

pub fn demographics(sheets: &[AnswerSheet]) -> Demographics {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for g in sheets.iter().filter_map(|s| s.gender.as_deref()) {
        let g = g.trim().to_lowercase();
        let bucket = match g.as_str() {
            "male" | "m" => "male",
            "female" | "f" => "female",
            _ => "other",
        };
        *counts.entry(bucket.to_string()).or_default() += 1;
    }
    let gender_supplied: usize = counts.values().sum();
    let genders = counts
        .into_iter()
        .map(|(k, c)| (k, (c, c as f64 / gender_supplied as f64)))
        .collect();

    let ages: Vec<u32> = sheets.iter().filter_map(|s| s.age).collect();
    let (mean_age, excluded_ages) = if ages.is_empty() {
        (None, Vec::new())
    } else {
        let n = ages.len() as f64;
        let mean = ages.iter().map(|&a| a as f64).sum::<f64>() / n;
        let sd = (ages.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let (kept, excluded): (Vec<u32>, Vec<u32>) = ages.iter().partition(|&&a| (a as f64 - mean).abs() <= 3.0 * sd);
        for a in &excluded {
            log::info!("age {a} excluded from the mean as more than 3 sd from {mean:.2}");
        }
        let m = (!kept.is_empty()).then(|| kept.iter().map(|&a| a as f64).sum::<f64>() / kept.len() as f64);
        (m, excluded)
    };
    Demographics {
        gender_supplied,
        genders,
        ages_supplied: ages.len(),
        mean_age,
        excluded_ages,
    }
}

/// Everything computed from one set of sheets.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub key: AnswerKey,
    pub distribution: ScoreDistribution,
    pub expected: BinomialExpectation,
    pub fit: GoodnessOfFit,
    pub tail: PartitionTail,
    pub per_pair: [f64; PAIR_COUNT],
    pub groups: Vec<GroupSummary>,
    pub demographics: Demographics,
    pub rejected: Vec<RejectedSheet>,
}

pub fn analyse(file: &SheetFile, key: &AnswerKey) -> Result<Report> {
    let distribution = distribution(&file.sheets, key)?;
    let expected = binomial_expected(distribution.n)?;
    let observed = distribution.counts.map(|c| c as f64);
    let fit = goodness_of_fit(&observed, &expected.all())?;
    let tail = partition_tail(distribution.n, distribution.partitioned)?;
    Ok(Report {
        key: *key,
        per_pair: per_pair_success(&file.sheets, key),
        groups: per_group(&file.sheets, key),
        demographics: demographics(&file.sheets),
        rejected: file.rejected.clone(),
        distribution,
        expected,
        fit,
        tail,
    })
}

impl Report {
    pub fn score_table(&self) -> String {
        let mut out = String::from("score,observed,expected\n");
        for k in 0..SCORE_BINS {
            let _ = writeln!(out, "{k},{},{}", self.distribution.counts[k], self.expected.expected(k));
        }
        out
    }

    pub fn pair_table(&self) -> String {
        let mut out = String::from("pair,success_rate\n");
        for (i, r) in self.per_pair.iter().enumerate() {
            let _ = writeln!(out, "{},{r}", i + 1);
        }
        out
    }

    pub fn group_table(&self) -> String {
        let mut out = String::from("group,n,mean\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{}", g.group, g.n, g.mean);
        }
        out
    }

    /// Plain `key: value` summary.
    pub fn summary(&self) -> String {
        let d = &self.distribution;
        let mut out = String::new();
        let _ = writeln!(out, "answer_key: {}", self.key);
        let _ = writeln!(out, "participants: {}", d.n);
        let _ = writeln!(out, "rejected_sheets: {}", self.rejected.len());
        let _ = writeln!(out, "mean_score: {:.4}", d.mean);
        let _ = writeln!(out, "score_0_share: {:.4}", d.share(0));
        let _ = writeln!(out, "score_6_share: {:.4}", d.share(PAIR_COUNT));
        let _ = writeln!(out, "partitioned: {}", d.partitioned);
        let _ = writeln!(out, "partitioned_share: {:.4}", d.partitioned_fraction);
        let _ = writeln!(
            out,
            "expected_partitioned: {}",
            self.expected.expected(0) + self.expected.expected(PAIR_COUNT)
        );
        let _ = writeln!(out, "partition_tail_log10_p: {:.3}", self.tail.log10_probability);
        let _ = writeln!(out, "chi_square: {:.4}", self.fit.statistic);
        let _ = writeln!(out, "chi_square_df: {}", self.fit.df);
        let _ = writeln!(out, "chi_square_p: {:e}", self.fit.p_value);
        for (i, r) in self.per_pair.iter().enumerate() {
            let _ = writeln!(out, "pair_{}_success: {r:.4}", i + 1);
        }
        for g in &self.groups {
            let _ = writeln!(out, "group_{}_mean: {:.4} (n={})", g.group, g.mean, g.n);
        }
        let demo = &self.demographics;
        let _ = writeln!(out, "gender_supplied: {}", demo.gender_supplied);
        for (g, (c, share)) in &demo.genders {
            let _ = writeln!(out, "gender_{g}: {c} ({:.2}%)", share * 100.0);
        }
        match demo.mean_age {
            Some(m) => {
                let _ = writeln!(out, "mean_age: {m:.2}");
            }
            None => out.push_str("mean_age: none\n"),
        }
        if !demo.excluded_ages.is_empty() {
            let ages: Vec<String> = demo.excluded_ages.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "excluded_ages: {}", ages.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> AnswerKey {
        "AABABB".parse().unwrap()
    }

    fn sheet(id: &str, group: u32, choices: &str) -> AnswerSheet {
        AnswerSheet {
            participant_id: id.into(),
            group: GroupId::Numbered(group),
            age: None,
            gender: None,
            choices: choices.parse::<AnswerKey>().unwrap().0,
        }
    }

    #[test]
    fn scoring_examples() {
        assert_eq!(score(&sheet("p", 1, "AABABB"), &key()), 6);
        assert_eq!(score(&sheet("p", 1, "BBABAA"), &key()), 0);
        assert_eq!(score(&sheet("p", 1, "AAAAAA"), &key()), 3);
    }

    #[test]
    fn pascal_row() {
        let e = binomial_expected(64).unwrap();
        assert_eq!(e.all(), [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]);
        let e = binomial_expected(384).unwrap();
        assert_eq!(e.expected(0) + e.expected(6), 12.0);
        assert_eq!(e.numerators.iter().sum::<u64>(), 384 * 64);
        assert!(binomial_expected(0).is_err());
    }

    #[test]
    fn chi_square_hand_case() {
        let g = goodness_of_fit(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!((g.statistic - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.df, 1);
        let same = goodness_of_fit(&[1.0, 6.0, 15.0], &[1.0, 6.0, 15.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert!((same.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_expectation_bins_merge() {
        let g = goodness_of_fit(&[1.0, 2.0, 3.0], &[0.0, 3.0, 3.0]).unwrap();
        assert_eq!((g.bins, g.df), (2, 1));
        assert_eq!(g.statistic, 0.0);
        let g = goodness_of_fit(&[1.0, 2.0, 3.0], &[3.0, 3.0, 0.0]).unwrap();
        assert_eq!((g.bins, g.df), (2, 1));
        assert!((g.statistic - (4.0 / 3.0 + 4.0 / 3.0)).abs() < 1e-12);
        assert!(goodness_of_fit(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn tail_matches_direct_sum() {
        // small n, compare with f64 summation
        let n = 20;
        let t = partition_tail(n, 3).unwrap();
        let p: f64 = 1.0 / 32.0;
        let direct: f64 = (3..=n)
            .map(|k| {
                let c: f64 = (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product();
                c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
            })
            .sum();
        assert!((t.probability - direct).abs() / direct < 1e-12);
        assert!((partition_tail(10, 0).unwrap().probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sheets_round_trip_and_reject() {
        let text = "participant_id,group,age,gender,c1,c2,c3,c4,c5,c6\n\
                    p1,3,20,female,A,B,A,B,A,B\n\
                    p2,,,,B,B,B,B,B,B\n\
                    p3,2,x,male,A,A,A,A,A,A\n\
                    p4,2,19,male,A,A,A,A,A\n\
                    p5,2,19,male,A,A,A,A,A,C\n";
        let f = read_sheets(text).unwrap();
        assert_eq!(f.sheets.len(), 2);
        assert_eq!(f.rejected.len(), 3);
        assert_eq!(f.rejected[0].line, 4);
        assert_eq!(f.sheets[1].group, GroupId::Ungrouped);
        assert_eq!(f.sheets[1].age, None);
        let back = read_sheets(&write_sheets(&f.sheets)).unwrap();
        assert_eq!(back.sheets, f.sheets);
        assert!(read_sheets("p1,1,,,A,A,A,A,A,A\n").is_err());
    }

    #[test]
    fn pair_and_group_hand_counts() {
        let sheets = vec![sheet("a", 1, "ABABAB"), sheet("b", 1, "BABABA"), sheet("c", 2, "AABABB")];
        // ABABAB hits pairs 1 and 6, BABABA hits 2 to 5, the key sheet hits all
        let r = per_pair_success(&sheets, &key());
        assert!(r.iter().all(|v| (v - 2.0 / 3.0).abs() < 1e-12));
        let skewed = per_pair_success(&[sheet("d", 1, "ABBBBB")], &key());
        assert_eq!(skewed, [1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let g = per_group(&sheets, &key());
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].n, g[0].mean), (2, 3.0));
        assert_eq!((g[1].n, g[1].mean), (1, 6.0));
    }

    #[test]
    fn age_outlier_is_excluded() {
        let mut sheets: Vec<AnswerSheet> = (0..30)
            .map(|i| AnswerSheet {
                age: Some(19 + (i % 4)),
                gender: Some(if i % 3 == 0 { "Female" } else { "male" }.into()),
                ..sheet(&format!("p{i}"), 1, "AAAAAA")
            })
            .collect();
        sheets[0].age = Some(71);
        sheets[1].gender = Some("non-binary".into());
        let d = demographics(&sheets);
        assert_eq!(d.excluded_ages, vec![71]);
        assert_eq!(d.ages_supplied, 30);
        assert_eq!(d.genders["other"].0, 1);
        assert_eq!(d.gender_supplied, 30);
    }
}

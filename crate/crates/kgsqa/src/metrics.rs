//! Evaluation metrics: macro/micro top-1 accuracy, BLEU-1..4 with
//! modified n-gram precision and brevity penalty, and the paired two-sided
//! t-test with a dependency-free Student-t p-value.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::kg::EntityId;
use crate::pipeline::Interpretation;
use crate::text::Token;

/// Gold subject-relation pair with the relation's domain, for per-domain
/// accuracy breakdowns.
#[derive(Debug, Clone)]
pub struct GoldInterpretation {
    pub subject: EntityId,
    pub relation_id: String,
    pub domain: String,
}

/// Accuracy report. Micro is correct/total, macro is the unweighted mean
/// of per-domain accuracies; both in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub micro: f64,
    pub macro_: f64,
    pub total: usize,
    pub correct: usize,
    /// domain -> (correct, total, accuracy %)
    pub per_domain: BTreeMap<String, (usize, usize, f64)>,
}

impl EvalReport {
    pub fn lines(&self) -> String {
        let mut s = format!(
            "micro {:.2}% ({}/{})  macro {:.2}%\n",
            self.micro, self.correct, self.total, self.macro_
        );
        for (domain, (c, t, acc)) in &self.per_domain {
            s.push_str(&format!("  {domain}: {acc:.2}% ({c}/{t})\n"));
        }
        s
    }
}

/// Top-1 accuracy of predicted subject-relation pairs against gold; a
/// prediction is correct iff both ids match. Missing predictions (pipeline
/// failures) count as incorrect.
pub fn evaluate(
    predictions: &[Option<Interpretation>],
    gold: &[GoldInterpretation],
) -> Result<EvalReport> {
    evaluate_by(predictions, gold, |p, g| {
        p.subject == g.subject && p.relation.id == g.relation_id
    })
}

/// Relation-only accuracy: correct iff the predicted relation matches.
pub fn evaluate_relation_only(
    predictions: &[Option<Interpretation>],
    gold: &[GoldInterpretation],
) -> Result<EvalReport> {
    evaluate_by(predictions, gold, |p, g| p.relation.id == g.relation_id)
}

fn evaluate_by(
    predictions: &[Option<Interpretation>],
    gold: &[GoldInterpretation],
    is_correct: impl Fn(&Interpretation, &GoldInterpretation) -> bool,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} gold items",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("evaluation over zero items".into()));
    }
    let mut per_domain: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    let mut correct = 0usize;
    for (p, g) in predictions.iter().zip(gold) {
        let entry = per_domain.entry(g.domain.clone()).or_insert((0, 0, 0.0));
        entry.1 += 1;
        let ok = p.as_ref().is_some_and(|p| is_correct(p, g));
        if ok {
            entry.0 += 1;
            correct += 1;
        }
    }
    for (_, (c, t, acc)) in per_domain.iter_mut() {
        *acc = 100.0 * *c as f64 / *t as f64;
    }
    let micro = 100.0 * correct as f64 / gold.len() as f64;
    let macro_ =
        per_domain.values().map(|(_, _, a)| a).sum::<f64>() / per_domain.len() as f64;
    Ok(EvalReport {
        micro,
        macro_,
        total: gold.len(),
        correct,
        per_domain,
    })
}

/// Per-item 0/1 correctness vector, the input to the paired t-test.
pub fn correctness_vector(
    predictions: &[Option<Interpretation>],
    gold: &[GoldInterpretation],
    relation_only: bool,
) -> Vec<f64> {
    predictions
        .iter()
        .zip(gold)
        .map(|(p, g)| match p {
            Some(p)
                if p.relation.id == g.relation_id
                    && (relation_only || p.subject == g.subject) =>
            {
                1.0
            }
            _ => 0.0,
        })
        .collect()
}

fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(&tokens[i..i + n]).or_insert(0) += 1;
        }
    }
    m
}

/// BLEU-1..4 for one candidate against one or more references: modified
/// n-gram precision clipped by the maximum reference count, geometric mean
/// over orders 1..n, brevity penalty exp(1 - ref_len/cand_len) when the
/// candidate is shorter. No smoothing: a zero match count zeroes that
/// order.
pub fn bleu(candidate: &[Token], references: &[Vec<Token>], max_n: usize) -> Result<Vec<f64>> {
    if candidate.is_empty() {
        return Err(Error::EmptyInput("BLEU of empty candidate".into()));
    }
    if references.is_empty() {
        return Err(Error::EmptyInput("BLEU without references".into()));
    }
    // closest reference length, ties to the shorter
    let cand_len = candidate.len();
    let ref_len = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .unwrap();
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };

    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cand_ngrams = ngram_counts(candidate, n);
        let total: usize = cand_ngrams.values().sum();
        if total == 0 {
            precisions.push(0.0);
            continue;
        }
        let mut matched = 0usize;
        for (gram, &count) in &cand_ngrams {
            let max_ref = references
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            matched += count.min(max_ref);
        }
        precisions.push(matched as f64 / total as f64);
    }

    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let slice = &precisions[..n];
        let score = if slice.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let mean_log: f64 = slice.iter().map(|p| p.ln()).sum::<f64>() / n as f64;
            bp * mean_log.exp()
        };
        out.push(score);
    }
    Ok(out)
}

/// Corpus-level BLEU-1..4: aggregate clipped counts and lengths over all
/// candidate/reference pairs, then one brevity penalty.
pub fn corpus_bleu(
    candidates: &[Vec<Token>],
    references: &[Vec<Vec<Token>>],
    max_n: usize,
) -> Result<Vec<f64>> {
    if candidates.len() != references.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("corpus BLEU over zero pairs".into()));
    }
    let mut total_cand = 0usize;
    let mut total_ref = 0usize;
    let mut matched = vec![0usize; max_n];
    let mut possible = vec![0usize; max_n];
    for (cand, refs) in candidates.iter().zip(references) {
        if cand.is_empty() || refs.is_empty() {
            continue;
        }
        total_cand += cand.len();
        total_ref += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap();
        for n in 1..=max_n {
            let cand_ngrams = ngram_counts(cand, n);
            for (gram, &count) in &cand_ngrams {
                let max_ref = refs
                    .iter()
                    .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[n - 1] += count.min(max_ref);
            }
            possible[n - 1] += cand_ngrams.values().sum::<usize>();
        }
    }
    if total_cand == 0 {
        return Err(Error::EmptyInput("corpus BLEU with all-empty pairs".into()));
    }
    let bp = if total_cand < total_ref {
        (1.0 - total_ref as f64 / total_cand as f64).exp()
    } else {
        1.0
    };
    let mut out = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let mut ok = true;
        let mut log_sum = 0.0;
        for i in 0..n {
            if matched[i] == 0 || possible[i] == 0 {
                ok = false;
                break;
            }
            log_sum += (matched[i] as f64 / possible[i] as f64).ln();
        }
        out.push(if ok { bp * (log_sum / n as f64).exp() } else { 0.0 });
    }
    Ok(out)
}

/// Result of a paired two-sided t-test. `degenerate` flags a zero standard
/// deviation of the differences.
#[derive(Debug, Clone, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub degenerate: bool,
}

/// Paired two-sided t-test over per-item scores: t = mean(d)/(sd(d)/sqrt(n))
/// on d = a - b, with the p-value from the Student-t CDF at n-1 degrees of
/// freedom (regularized incomplete beta).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired test over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid("paired t-test needs at least 2 items".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                degenerate: true,
            }
        } else {
            TTest {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_sided_p(t, (n - 1) as f64);
    Ok(TTest {
        t,
        p,
        degenerate: false,
    })
}

/// Two-sided p-value for a Student-t statistic with `nu` degrees of
/// freedom: I_{nu/(nu+t^2)}(nu/2, 1/2).
pub fn student_t_two_sided_p(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    incomplete_beta(nu / 2.0, 0.5, x)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut a = COEFFS[0];
        let t = x + 7.5;
        for (i, c) in COEFFS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

/// Regularized incomplete beta function I_x(a, b) via the continued
/// fraction with the standard symmetry split.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    // modified Lentz's method
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

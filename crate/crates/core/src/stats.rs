//! Agreement between the two tracks across encoders: Pearson and Spearman
//! correlation with two-tailed t-test p-values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::TooFewRuns(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Product-moment correlation, two-pass in `f64`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("first variable"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("second variable"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho as Pearson correlation of fractional ranks (tie-correct).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
}

pub fn t_statistic(r: f64, n: usize) -> f64 {
    r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt()
}

/// Two-tailed p-value of a correlation under the t distribution with `n - 2`
/// degrees of freedom. Returns 0 when `|r| = 1`.
pub fn t_p_value(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::TooFewRuns(n));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(Error::Domain(format!("correlation {r} outside [-1, 1]")));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = n as f64 - 2.0;
    let t = t_statistic(r, n);
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function `I_x(a, b)` by continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("I_x(a, b) needs a, b > 0; got a={a}, b={b}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("I_x(a, b) needs x in [0, 1]; got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges quickly for x < (a + 1) / (a + b + 2); use the
    // symmetry I_x(a, b) = 1 - I_{1-x}(b, a) on the other side.
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x)? / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x)? / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
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
            return Ok(h);
        }
    }
    Err(Error::Domain(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

/// One encoder's results on both tracks. Accuracies are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model_id: String,
    pub sim_accuracy: f64,
    pub clf_accuracy: f64,
    pub sim_seconds: f64,
    pub clf_seconds: f64,
}

impl ModelRun {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sim_accuracy", self.sim_accuracy), ("clf_accuracy", self.clf_accuracy)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::Runs(format!(
                    "{}: {name} = {v} is not a percentage in [0, 100]",
                    self.model_id
                )));
            }
        }
        for (name, v) in [("sim_seconds", self.sim_seconds), ("clf_seconds", self.clf_seconds)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Runs(format!("{}: {name} = {v} must be >= 0", self.model_id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    /// Mean of `clf_seconds / sim_seconds`; `None` when a similarity time is zero
    /// (for example runs recorded without timing).
    pub mean_speedup: Option<f64>,
}

impl CorrelationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn correlate_runs(runs: &[ModelRun]) -> Result<CorrelationReport> {
    if runs.len() < 3 {
        return Err(Error::TooFewRuns(runs.len()));
    }
    for run in runs {
        run.validate()?;
    }
    let sim: Vec<f64> = runs.iter().map(|r| r.sim_accuracy).collect();
    let clf: Vec<f64> = runs.iter().map(|r| r.clf_accuracy).collect();
    let pearson_r = pearson(&sim, &clf)?;
    let spearman_rho = spearman(&sim, &clf)?;
    let mean_speedup = runs
        .iter()
        .all(|r| r.sim_seconds > 0.0)
        .then(|| runs.iter().map(|r| r.clf_seconds / r.sim_seconds).sum::<f64>() / runs.len() as f64);
    Ok(CorrelationReport {
        n: runs.len(),
        pearson_r,
        pearson_p: t_p_value(pearson_r, runs.len())?,
        spearman_rho,
        spearman_p: t_p_value(spearman_rho, runs.len())?,
        mean_speedup,
    })
}

/// Runs sorted by similarity accuracy (best first), with each track's
/// fractional rank. This is the model-selection view.
pub fn ranked_table(runs: &[ModelRun]) -> String {
    let neg = |f: fn(&ModelRun) -> f64| runs.iter().map(|r| -f(r)).collect::<Vec<_>>();
    let sim_rank = fractional_ranks(&neg(|r| r.sim_accuracy));
    let clf_rank = fractional_ranks(&neg(|r| r.clf_accuracy));
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| {
        runs[b]
            .sim_accuracy
            .total_cmp(&runs[a].sim_accuracy)
            .then_with(|| runs[a].model_id.cmp(&runs[b].model_id))
    });
    let width = runs.iter().map(|r| r.model_id.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    writeln!(
        out,
        "{:>4}  {:<width$}  {:>8}  {:>8}  {:>8}",
        "rank", "model", "sim acc", "clf acc", "clf rank"
    )
    .unwrap();
    for i in order {
        let r = &runs[i];
        writeln!(
            out,
            "{:>4}  {:<width$}  {:>8.2}  {:>8.2}  {:>8}",
            sim_rank[i], r.model_id, r.sim_accuracy, r.clf_accuracy, clf_rank[i]
        )
        .unwrap();
    }
    out
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<ModelRun>> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_runs_csv(&text)
}

pub fn parse_runs_csv(bytes: &[u8]) -> Result<Vec<ModelRun>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::Runs(e.to_string()))?.clone();
    let expected = ["model_id", "sim_accuracy", "clf_accuracy", "sim_seconds", "clf_seconds"];
    if headers.iter().ne(expected) {
        return Err(Error::Runs(format!(
            "header must be {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut runs = Vec::new();
    for row in reader.deserialize() {
        let run: ModelRun = row.map_err(|e| Error::Runs(e.to_string()))?;
        run.validate()?;
        runs.push(run);
    }
    Ok(runs)
}

pub fn runs_to_csv(runs: &[ModelRun]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for run in runs {
        writer.serialize(run).expect("in-memory csv write");
    }
    if runs.is_empty() {
        writer
            .write_record(["model_id", "sim_accuracy", "clf_accuracy", "sim_seconds", "clf_seconds"])
            .expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("flush to Vec")).expect("csv is utf-8")
}

pub fn write_runs_csv(runs: &[ModelRun], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, runs_to_csv(runs)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_linear() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewRuns(2))));
    }

    #[test]
    fn ranks() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(fractional_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(fractional_ranks(&[5.0; 4]), vec![2.5; 4]);
        assert_eq!(fractional_ranks(&[3.0, 1.0, 2.0, 1.0]), vec![4.0, 1.5, 3.0, 1.5]);
        assert!(fractional_ranks(&[]).is_empty());
    }

    #[test]
    fn spearman_monotone() {
        let xs = [0.3, -1.0, 2.5, 7.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3) + 10.0).collect();
        assert_eq!(spearman(&xs, &ys).unwrap(), 1.0);
    }

    #[test]
    fn p_value_cases() {
        assert_eq!(t_p_value(0.0, 10).unwrap(), 1.0);
        assert_eq!(t_p_value(1.0, 10).unwrap(), 0.0);
        assert!(matches!(t_p_value(0.5, 2), Err(Error::TooFewRuns(2))));
        assert!(t_p_value(1.5, 10).is_err());
        // 40-digit reference values
        assert!((t_p_value(0.65, 17).unwrap() - 0.004733938535274893).abs() < 1e-12);
        assert!((t_p_value(0.67, 17).unwrap() - 0.0032536540305667535).abs() < 1e-12);
        assert!((t_statistic(0.65, 17) - 3.3127067443445664).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_known_values() {
        assert_eq!(reg_inc_beta(2.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(reg_inc_beta(2.0, 3.0, 1.0).unwrap(), 1.0);
        for x in [0.25, 0.5, 0.9] {
            assert!((reg_inc_beta(1.0, 1.0, x).unwrap() - x).abs() < 1e-14);
        }
        assert!((reg_inc_beta(2.0, 2.0, 0.5).unwrap() - 0.5).abs() < 1e-14);
        // reference values computed with mpmath.betainc at 40 digits
        let cases = [
            (2.0, 3.0, 0.4, 0.5248),
            (0.5, 7.5, 0.3, 0.9771533868423155),
            (7.5, 0.5, 0.93, 0.3047900950278458),
            (10.0, 20.0, 0.35, 0.592386663663905),
            (0.3, 0.4, 0.6, 0.6265956017348527),
            (50.0, 60.0, 0.45, 0.4642352914306036),
            (7.5, 0.5, 0.2, 1.2783477850604929e-06),
        ];
        for (a, b, x, want) in cases {
            let got = reg_inc_beta(a, b, x).unwrap();
            assert!((got - want).abs() < 1e-10, "I_{x}({a},{b}) = {got}, want {want}");
        }
    }

    #[test]
    fn incomplete_beta_domain() {
        assert!(reg_inc_beta(0.0, 1.0, 0.5).is_err());
        assert!(reg_inc_beta(1.0, -1.0, 0.5).is_err());
        assert!(reg_inc_beta(1.0, 1.0, 1.5).is_err());
        assert!(reg_inc_beta(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n = {n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    fn run(id: &str, s: f64, c: f64) -> ModelRun {
        ModelRun {
            model_id: id.into(),
            sim_accuracy: s,
            clf_accuracy: c,
            sim_seconds: 2.0,
            clf_seconds: 1000.0,
        }
    }

    #[test]
    fn identical_columns_correlate_perfectly() {
        let runs = [run("a", 50.0, 50.0), run("b", 52.0, 52.0), run("c", 49.0, 49.0)];
        let r = correlate_runs(&runs).unwrap();
        assert_eq!(r.pearson_r, 1.0);
        assert_eq!(r.spearman_rho, 1.0);
        assert_eq!(r.pearson_p, 0.0);
        assert_eq!(r.mean_speedup, Some(500.0));
    }

    #[test]
    fn correlate_preconditions() {
        assert!(matches!(
            correlate_runs(&[run("a", 1.0, 2.0), run("b", 2.0, 3.0)]),
            Err(Error::TooFewRuns(2))
        ));
        let flat = [run("a", 50.0, 60.0), run("b", 51.0, 60.0), run("c", 52.0, 60.0)];
        assert!(matches!(correlate_runs(&flat), Err(Error::ZeroVariance(_))));
        let bad = [run("a", 150.0, 60.0), run("b", 51.0, 61.0), run("c", 52.0, 62.0)];
        assert!(matches!(correlate_runs(&bad), Err(Error::Runs(_))));
    }

    #[test]
    fn zero_sim_time_gives_no_speedup() {
        let mut runs = vec![run("a", 50.0, 60.0), run("b", 51.0, 62.0), run("c", 53.0, 61.0)];
        runs[1].sim_seconds = 0.0;
        assert_eq!(correlate_runs(&runs).unwrap().mean_speedup, None);
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let runs = vec![run("org/model-a", 50.78, 65.34), run("b", 51.5, 74.15)];
        let text = runs_to_csv(&runs);
        assert!(text.starts_with("model_id,sim_accuracy,clf_accuracy,sim_seconds,clf_seconds\n"));
        assert_eq!(parse_runs_csv(text.as_bytes()).unwrap(), runs);
        assert!(parse_runs_csv(b"model,sim\nx,1\n").is_err());
    }

    #[test]
    fn ranked_table_orders_by_similarity() {
        let runs = [run("low", 48.0, 70.0), run("high", 53.0, 60.0), run("mid", 50.0, 65.0)];
        let table = ranked_table(&runs);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[1].contains("high"));
        assert!(lines[2].contains("mid"));
        assert!(lines[3].contains("low"));
    }
}

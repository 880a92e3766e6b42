//! Forward/backward MARS fit.

use serde::{Deserialize, Serialize};

use super::linalg::{dot, normal_equations, solve_subset, SymMatrix};
use super::{BasisTerm, EfficiencySurrogate, FitStats, Hinge, HingeBasis, HoldoutScore, Smoothing};
use crate::error::{Error, Result};
use crate::hillchart::HillChartSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Upper bound on basis terms, intercept included.
    pub max_terms: usize,
    /// Maximum number of hinge factors per term.
    pub max_degree: usize,
    /// GCV cost per knot.
    pub gcv_penalty: f64,
    /// One sample in `holdout_modulus` (by coordinate hash) is held out.
    pub holdout_modulus: u64,
    pub smoothing: Smoothing,
    /// Forward pass stops when the best RSS reduction falls below this
    /// fraction of the total sum of squares.
    pub min_gain: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_terms: 40,
            max_degree: 2,
            gcv_penalty: 3.0,
            holdout_modulus: 5,
            smoothing: Smoothing::PiecewiseLinear,
            min_gain: 1e-7,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 3 {
            return Err(Error::Config("max_terms must be at least 3".into()));
        }
        if self.max_degree == 0 || self.max_degree > 3 {
            return Err(Error::Config("max_degree must be 1, 2 or 3".into()));
        }
        if !(self.gcv_penalty >= 0.0) {
            return Err(Error::Config("gcv_penalty must be non-negative".into()));
        }
        if self.holdout_modulus < 2 {
            return Err(Error::Config("holdout_modulus must be at least 2".into()));
        }
        if !(self.min_gain >= 0.0) {
            return Err(Error::Config("min_gain must be non-negative".into()));
        }
        Ok(())
    }
}

const MIN_SAMPLES: usize = 50;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Test-set membership from quantised grid coordinates.
pub(crate) fn is_holdout(s: &HillChartSample, modulus: u64) -> bool {
    let q = |v: f64, scale: f64| (v * scale).round() as i64 as u64;
    let mut h = splitmix64(q(s.alpha, 1e3));
    h = splitmix64(h ^ q(s.beta, 1e3));
    h = splitmix64(h ^ q(s.n_ed, 1e6));
    h % modulus == 0
}

fn gcv(rss: f64, n: usize, terms: usize, penalty: f64) -> f64 {
    let n = n as f64;
    let c = terms as f64 + penalty * (terms as f64 - 1.0) / 2.0;
    let denom = 1.0 - c / n;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    rss / n / (denom * denom)
}

/// Fits the surrogate on the training part of `samples` and scores it on
/// the held-out part.
pub fn fit(samples: &[HillChartSample], cfg: &FitConfig) -> Result<EfficiencySurrogate> {
    cfg.validate()?;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut ranges = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
    for s in samples {
        let x = [s.alpha, s.beta, s.n_ed];
        if x.iter().chain([&s.eta]).any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite sample".into()));
        }
        for j in 0..3 {
            ranges[j][0] = ranges[j][0].min(x[j]);
            ranges[j][1] = ranges[j][1].max(x[j]);
        }
    }
    for (j, r) in ranges.iter().enumerate() {
        if !(r[1] > r[0]) {
            return Err(Error::Fit(format!("input `{}` is constant", super::VARIABLES[j])));
        }
    }
    let (eta_min, eta_max) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
        (a.min(s.eta), b.max(s.eta))
    });
    if !(eta_max > eta_min) {
        return Err(Error::Fit("efficiency is constant".into()));
    }

    let (train, test): (Vec<&HillChartSample>, Vec<&HillChartSample>) =
        samples.iter().partition(|s| !is_holdout(s, cfg.holdout_modulus));
    if train.len() < MIN_SAMPLES || test.is_empty() {
        return Err(Error::Fit(format!(
            "degenerate holdout split: {} train / {} test",
            train.len(),
            test.len()
        )));
    }
    let xs: Vec<[f64; 3]> = train.iter().map(|s| [s.alpha, s.beta, s.n_ed]).collect();
    let y: Vec<f64> = train.iter().map(|s| s.eta).collect();

    let forward = forward_pass(&xs, &y, cfg);
    let pruned = backward_pass(&forward.cols, &y, cfg.gcv_penalty)?;

    let mut terms = Vec::with_capacity(pruned.active.len());
    let mut coefficients = Vec::with_capacity(pruned.active.len());
    for (&k, &c) in pruned.active.iter().zip(&pruned.coefficients) {
        terms.push(forward.terms[k].clone());
        coefficients.push(c);
    }
    let mut basis = HingeBasis { terms };
    assign_side_knots(&mut basis, &ranges);
    let cubic_coefficients = refit(&basis, &xs, &y, Smoothing::CubicC1);

    let train_mse = pruned.rss / xs.len() as f64;
    let unscored = HoldoutScore {
        mse: f64::NAN,
        r2: f64::NAN,
    };
    let mut model = EfficiencySurrogate::from_parts(
        basis,
        coefficients,
        cubic_coefficients,
        ranges,
        FitStats {
            mse: f64::NAN,
            r2: f64::NAN,
            linear: unscored,
            cubic: unscored,
            train_mse,
            gcv: pruned.gcv,
            forward_gcv: pruned.forward_gcv,
            forward_terms: forward.terms.len(),
            n_train: xs.len(),
            n_test: test.len(),
        },
        cfg.smoothing,
    )?;
    model.fit_stats.linear = holdout_score(&model.with_smoothing(Smoothing::PiecewiseLinear), &test);
    model.fit_stats.cubic = holdout_score(&model.with_smoothing(Smoothing::CubicC1), &test);
    model.fit_stats.select(cfg.smoothing);
    Ok(model)
}

fn holdout_score(model: &EfficiencySurrogate, test: &[&HillChartSample]) -> HoldoutScore {
    let mean = test.iter().map(|s| s.eta).sum::<f64>() / test.len() as f64;
    let (mut sse, mut sst) = (0.0, 0.0);
    for s in test {
        let e = s.eta - model.eval(s.alpha, s.beta, s.n_ed);
        sse += e * e;
        sst += (s.eta - mean) * (s.eta - mean);
    }
    HoldoutScore {
        mse: sse / test.len() as f64,
        r2: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
    }
}

struct Forward {
    terms: Vec<BasisTerm>,
    cols: Vec<Vec<f64>>,
}

/// Knot candidates of one variable: training indices sorted by descending
/// value, grouped by distinct value.
struct SortedVar {
    order: Vec<usize>,
    /// (value, end offset into `order`) per distinct value, descending.
    groups: Vec<(f64, usize)>,
}

impl SortedVar {
    fn new(xs: &[[f64; 3]], j: usize) -> Self {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[b][j].total_cmp(&xs[a][j]).then(a.cmp(&b)));
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let v = xs[i][j];
            match groups.last_mut() {
                Some(g) if g.0 == v => g.1 = pos + 1,
                _ => groups.push((v, pos + 1)),
            }
        }
        Self { order, groups }
    }
}

fn orthogonalize(v: &mut [f64], q: &[Vec<f64>]) {
    for _ in 0..2 {
        for qk in q {
            let a = dot(v, qk);
            for (vi, qi) in v.iter_mut().zip(qk) {
                *vi -= a * qi;
            }
        }
    }
}

/// Adds `col` to the orthonormal set if it brings a new direction.
fn push_orthonormal(q: &mut Vec<Vec<f64>>, r: &mut [f64], col: &[f64]) {
    let norm0 = dot(col, col);
    if norm0 <= 0.0 {
        return;
    }
    let mut v = col.to_vec();
    orthogonalize(&mut v, q);
    let nn = dot(&v, &v);
    if nn <= 1e-10 * norm0 {
        return;
    }
    let inv = 1.0 / nn.sqrt();
    v.iter_mut().for_each(|x| *x *= inv);
    let a = dot(r, &v);
    for (ri, vi) in r.iter_mut().zip(&v) {
        *ri -= a * vi;
    }
    q.push(v);
}

struct Candidate {
    gain: f64,
    parent: usize,
    var: usize,
    knot: f64,
}

fn forward_pass(xs: &[[f64; 3]], y: &[f64], cfg: &FitConfig) -> Forward {
    let n = xs.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sorted: Vec<SortedVar> = (0..3).map(|j| SortedVar::new(xs, j)).collect();

    let mut terms = vec![BasisTerm::intercept()];
    let mut cols = vec![vec![1.0; n]];
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r = y.to_vec();
    push_orthonormal(&mut q, &mut r, &cols[0]);

    while terms.len() + 2 <= cfg.max_terms {
        let rss: f64 = dot(&r, &r);
        if rss <= 1e-12 * tss {
            break;
        }
        let mut best: Option<Candidate> = None;
        for parent in 0..terms.len() {
            if terms[parent].degree() >= cfg.max_degree {
                continue;
            }
            for (var, order) in sorted.iter().enumerate() {
                if terms[parent].uses(var) {
                    continue;
                }
                if let Some(c) = best_knot(xs, &cols[parent], order, var, &q, &r) {
                    if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                        best = Some(Candidate { parent, ..c });
                    }
                }
            }
        }
        let Some(best) = best else { break };
        if best.gain < cfg.min_gain * tss {
            break;
        }
        for sign in [1i8, -1] {
            let h = Hinge {
                var: best.var,
                knot: best.knot,
                sign,
                lower: best.knot,
                upper: best.knot,
            };
            let mut term = terms[best.parent].clone();
            term.hinges.push(h);
            let col: Vec<f64> = cols[best.parent]
                .iter()
                .zip(xs)
                .map(|(b, x)| b * h.linear(x[best.var]).0)
                .collect();
            push_orthonormal(&mut q, &mut r, &col);
            terms.push(term);
            cols.push(col);
        }
    }
    Forward { terms, cols }
}

/// Best knot for splitting `parent` on `var`, by exact RSS reduction.
///
/// The hinge pair spans the same space as `{b·x, b·(x − t)₊}` given `b`,
/// so `b·x` is orthogonalised once and the knot sweep only tracks the
/// running moments of `b·(x − t)₊`.
fn best_knot(
    xs: &[[f64; 3]],
    parent: &[f64],
    sv: &SortedVar,
    var: usize,
    q: &[Vec<f64>],
    r: &[f64],
) -> Option<Candidate> {
    if sv.groups.len() < 3 {
        return None;
    }
    let bx: Vec<f64> = parent.iter().zip(xs).map(|(b, x)| b * x[var]).collect();
    let bxbx = dot(&bx, &bx);
    if bxbx <= 0.0 {
        return None;
    }
    let mut e = bx;
    orthogonalize(&mut e, q);
    let ee = dot(&e, &e);
    let e = if ee > 1e-10 * bxbx {
        let inv = 1.0 / ee.sqrt();
        e.iter_mut().for_each(|v| *v *= inv);
        Some(e)
    } else {
        None
    };
    let re = e.as_ref().map_or(0.0, |e| dot(r, e));

    // Moments over points with x > t: Σ v·b·x and Σ v·b for v in Q, r, e.
    let m = q.len();
    let mut s_bx = vec![0.0; m + 2];
    let mut s_b = vec![0.0; m + 2];
    let (mut s_bbxx, mut s_bbx, mut s_bb) = (0.0, 0.0, 0.0);
    let mut best: Option<Candidate> = None;
    let mut start = 0;
    let last = sv.groups.len() - 1;
    for (g, &(t, end)) in sv.groups.iter().enumerate() {
        if g > 0 && g < last && s_bb > 0.0 {
            let cc = s_bbxx - 2.0 * t * s_bbx + t * t * s_bb;
            let mut proj = 0.0;
            for k in 0..m {
                let cq = s_bx[k] - t * s_b[k];
                proj += cq * cq;
            }
            let rc = s_bx[m] - t * s_b[m];
            let ec = if e.is_some() { s_bx[m + 1] - t * s_b[m + 1] } else { 0.0 };
            let perp = cc - proj - ec * ec;
            let mut gain = re * re;
            if perp > 1e-9 * cc {
                let num = rc - re * ec;
                gain += num * num / perp;
            }
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(Candidate {
                    gain,
                    parent: 0,
                    var,
                    knot: t,
                });
            }
        }
        for &i in &sv.order[start..end] {
            let b = parent[i];
            if b == 0.0 {
                continue;
            }
            let x = xs[i][var];
            let bxv = b * x;
            for k in 0..m {
                s_bx[k] += q[k][i] * bxv;
                s_b[k] += q[k][i] * b;
            }
            s_bx[m] += r[i] * bxv;
            s_b[m] += r[i] * b;
            if let Some(e) = &e {
                s_bx[m + 1] += e[i] * bxv;
                s_b[m + 1] += e[i] * b;
            }
            s_bbxx += bxv * bxv;
            s_bbx += b * bxv;
            s_bb += b * b;
        }
        start = end;
    }
    best
}

struct Pruned {
    active: Vec<usize>,
    coefficients: Vec<f64>,
    rss: f64,
    gcv: f64,
    forward_gcv: f64,
}

/// Solves on `idx`, permanently dropping terms whose pivot collapses.
fn solve_dropping(gram: &SymMatrix, rhs: &[f64], mut idx: Vec<usize>) -> (Vec<usize>, Vec<f64>) {
    loop {
        match solve_subset(gram, rhs, &idx, 1e-12) {
            Ok(beta) => return (idx, beta),
            Err(pos) => {
                idx.remove(pos);
            }
        }
    }
}

fn backward_pass(cols: &[Vec<f64>], y: &[f64], penalty: f64) -> Result<Pruned> {
    let n = y.len();
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| {
            let s = dot(c, c).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let normed: Vec<Vec<f64>> = cols
        .iter()
        .zip(&scale)
        .map(|(c, s)| c.iter().map(|v| v / s).collect())
        .collect();
    let (gram, rhs) = normal_equations(&normed, y);
    let yy = dot(y, y);
    let rss_of = |idx: &[usize], beta: &[f64]| {
        let fit: f64 = idx.iter().zip(beta).map(|(&k, b)| b * rhs[k]).sum();
        (yy - fit).max(0.0)
    };

    let (mut active, beta) = solve_dropping(&gram, &rhs, (0..cols.len()).collect());
    if active.first() != Some(&0) {
        return Err(Error::Fit("intercept column collapsed".into()));
    }
    let rss = rss_of(&active, &beta);
    let forward_gcv = gcv(rss, n, active.len(), penalty);
    let mut best = Pruned {
        active: active.clone(),
        coefficients: beta,
        rss,
        gcv: forward_gcv,
        forward_gcv,
    };

    while active.len() > 1 {
        let mut step: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        for drop in 1..active.len() {
            let mut trial = active.clone();
            trial.remove(drop);
            let (trial, beta) = solve_dropping(&gram, &rhs, trial);
            let rss = rss_of(&trial, &beta);
            if step.as_ref().map_or(true, |s| rss < s.0) {
                step = Some((rss, trial, beta));
            }
        }
        let Some((rss, trial, beta)) = step else { break };
        let score = gcv(rss, n, trial.len(), penalty);
        if score < best.gcv {
            best = Pruned {
                active: trial.clone(),
                coefficients: beta,
                rss,
                gcv: score,
                forward_gcv,
            };
        }
        active = trial;
    }
    best.coefficients = best
        .active
        .iter()
        .zip(&best.coefficients)
        .map(|(&k, b)| b / scale[k])
        .collect();
    Ok(best)
}

/// Places cubic side knots halfway to the neighbouring knots of the same
/// variable (or to the range boundary).
fn assign_side_knots(basis: &mut HingeBasis, ranges: &[[f64; 2]; 3]) {
    let mut knots: [Vec<f64>; 3] = Default::default();
    for h in basis.terms.iter().flat_map(|t| t.hinges.iter()) {
        knots[h.var].push(h.knot);
    }
    for k in knots.iter_mut() {
        k.sort_by(f64::total_cmp);
        k.dedup();
    }
    for h in basis.terms.iter_mut().flat_map(|t| t.hinges.iter_mut()) {
        let ks = &knots[h.var];
        let pos = ks.iter().position(|&k| k == h.knot).unwrap_or(0);
        let prev = if pos > 0 { ks[pos - 1] } else { ranges[h.var][0] };
        let next = ks.get(pos + 1).copied().unwrap_or(ranges[h.var][1]);
        h.lower = 0.5 * (prev + h.knot);
        h.upper = 0.5 * (h.knot + next);
    }
}

/// Least-squares coefficients for `basis` evaluated in `smoothing` mode.
/// Terms whose columns collapse get a zero coefficient.
fn refit(basis: &HingeBasis, xs: &[[f64; 3]], y: &[f64], smoothing: Smoothing) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = basis
        .terms
        .iter()
        .map(|t| xs.iter().map(|x| t.value(x, smoothing)).collect())
        .collect();
    let scale: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt().max(1e-300)).collect();
    let normed: Vec<Vec<f64>> = cols
        .iter()
        .zip(&scale)
        .map(|(c, s)| c.iter().map(|v| v / s).collect())
        .collect();
    let (gram, rhs) = normal_equations(&normed, y);
    let (idx, beta) = solve_dropping(&gram, &rhs, (0..cols.len()).collect());
    let mut out = vec![0.0; cols.len()];
    for (&k, b) in idx.iter().zip(beta) {
        out[k] = b / scale[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64, f64, f64) -> f64) -> Vec<HillChartSample> {
        let mut out = Vec::new();
        for a in 0..=20 {
            for b in 0..=20 {
                for k in 0..=5 {
                    let (a, b, n) = (a as f64, b as f64, 0.3 + 0.1 * k as f64);
                    out.push(HillChartSample {
                        alpha: a,
                        beta: b,
                        n_ed: n,
                        eta: f(a, b, n),
                        q_ed: 0.0,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn recovers_exact_hinge_model() {
        let truth = |a: f64, b: f64, _n: f64| 0.2 + 0.03 * (a - 7.0).max(0.0) - 0.01 * (b - 12.0).max(0.0);
        let samples = grid(truth);
        let m = fit(&samples, &FitConfig::default()).unwrap();
        assert!(m.fit_stats().mse < 1e-12, "{:?}", m.fit_stats());
        assert!((m.eval(15.5, 3.5, 0.45) - truth(15.5, 3.5, 0.45)).abs() < 1e-8);
    }

    #[test]
    fn pruned_gcv_not_above_forward() {
        let samples = grid(|a, b, n| (a * 0.3).sin() * (b * 0.2).cos() + n);
        let m = fit(&samples, &FitConfig::default()).unwrap();
        let s = m.fit_stats();
        assert!(s.gcv <= s.forward_gcv);
        assert!(m.basis().terms.len() <= 40);
        assert!(m.basis().terms.iter().all(|t| t.degree() <= 2));
    }

    #[test]
    fn knots_inside_training_range() {
        let samples = grid(|a, b, n| (a - 10.0).abs() + (b - 5.0).powi(2) * 0.01 + n * n);
        let m = fit(&samples, &FitConfig::default()).unwrap();
        let r = m.input_ranges();
        for h in m.basis().terms.iter().flat_map(|t| t.hinges.iter()) {
            assert!(h.knot > r[h.var][0] && h.knot < r[h.var][1]);
            assert!(h.lower >= r[h.var][0] && h.upper <= r[h.var][1]);
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            fit(&grid(|_, _, _| 0.7), &FitConfig::default()),
            Err(Error::Fit(_))
        ));
        let mut flat = grid(|a, _, _| a);
        flat.iter_mut().for_each(|s| s.n_ed = 0.5);
        assert!(fit(&flat, &FitConfig::default()).is_err());
        assert!(fit(&grid(|a, _, _| a)[..40], &FitConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let samples = grid(|a, b, n| (a * 0.2).sin() + (b * 0.1).cos() * n);
        let a = fit(&samples, &FitConfig::default()).unwrap();
        let b = fit(&samples, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn knot_gain_matches_brute_force_least_squares() {
        // parent = (x1 - 3)+ so the candidate pair is an interaction term
        let xs: Vec<[f64; 3]> = (0..120)
            .map(|i| [(i % 11) as f64, ((i * 7) % 13) as f64 * 0.5, (i / 11) as f64])
            .collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| (x[0] * 0.7).sin() + 0.1 * x[1] * (x[0] - 4.0).max(0.0) + 0.01 * x[2])
            .collect();
        let n = xs.len();
        let ones = vec![1.0; n];
        let parent: Vec<f64> = xs.iter().map(|x| (x[1] - 3.0).max(0.0)).collect();
        let mut q = Vec::new();
        let mut r = y.clone();
        push_orthonormal(&mut q, &mut r, &ones);
        push_orthonormal(&mut q, &mut r, &parent);
        let rss0 = dot(&r, &r);
        let sv = SortedVar::new(&xs, 0);
        let got = best_knot(&xs, &parent, &sv, 0, &q, &r).unwrap();

        let mut best = (f64::NEG_INFINITY, 0.0);
        for &(t, _) in &sv.groups[1..sv.groups.len() - 1] {
            let cols = vec![
                ones.clone(),
                parent.clone(),
                parent.iter().zip(&xs).map(|(b, x)| b * (x[0] - t).max(0.0)).collect(),
                parent.iter().zip(&xs).map(|(b, x)| b * (t - x[0]).max(0.0)).collect(),
            ];
            let (g, c) = normal_equations(&cols, &y);
            let beta = solve_subset(&g, &c, &[0, 1, 2, 3], 0.0).unwrap();
            let rss: f64 = y
                .iter()
                .enumerate()
                .map(|(i, yi)| {
                    let f: f64 = (0..4).map(|k| beta[k] * cols[k][i]).sum();
                    (yi - f).powi(2)
                })
                .sum();
            if rss0 - rss > best.0 {
                best = (rss0 - rss, t);
            }
        }
        assert_eq!(got.knot, best.1);
        assert!((got.gain - best.0).abs() < 1e-8 * rss0, "{} vs {}", got.gain, best.0);
    }

    #[test]
    fn holdout_is_about_one_fifth() {
        let samples = grid(|a, _, _| a);
        let held = samples.iter().filter(|s| is_holdout(s, 5)).count();
        let frac = held as f64 / samples.len() as f64;
        assert!((0.15..0.25).contains(&frac), "{frac}");
    }
}

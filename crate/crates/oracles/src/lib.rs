//! Deliberately naive reference implementations.
//!
//! Everything here works on plain nested vectors and follows the textbook
//! definitions loop by loop, so the library under test can be checked
//! against code that shares none of its structure.

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Max,
    Sum,
}

fn fold(op: Op, values: &[f64]) -> f64 {
    match op {
        Op::Max => {
            let mut best = values[0];
            for &v in &values[1..] {
                if v > best {
                    best = v;
                }
            }
            best
        }
        Op::Sum => {
            let mut total = 0.0;
            for &v in values {
                total += v;
            }
            total
        }
    }
}

pub mod aggregation {
    use super::{fold, Matrix, Op};

    /// `stack[l][h]` is an n x n matrix. `heads_first` collapses heads with
    /// `step1` inside each layer, then layers with `step2`; otherwise the
    /// roles of the two axes swap.
    pub fn lama(stack: &[Vec<Matrix>], heads_first: bool, step1: Op, step2: Op) -> Matrix {
        let layers = stack.len();
        let heads = stack[0].len();
        let n = stack[0][0].len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (outer, inner) = if heads_first { (layers, heads) } else { (heads, layers) };
                let mut partials = Vec::new();
                for a in 0..outer {
                    let mut entries = Vec::new();
                    for b in 0..inner {
                        let (l, h) = if heads_first { (a, b) } else { (b, a) };
                        entries.push(stack[l][h][i][j]);
                    }
                    partials.push(fold(step1, &entries));
                }
                out[i][j] = fold(step2, &partials);
            }
        }
        out
    }

    pub fn lava(lama: &Matrix, step3: Op) -> Vec<f64> {
        lama.iter().map(|row| fold(step3, row)).collect()
    }
}

pub mod softmax {
    use super::Matrix;

    /// Row-wise softmax of `q k^T / sqrt(d_k)`, one scalar at a time.
    pub fn attention(q: &Matrix, k: &Matrix) -> Matrix {
        let d_k = q[0].len() as f64;
        q.iter()
            .map(|qi| {
                let logits: Vec<f64> = k
                    .iter()
                    .map(|kj| {
                        let mut dot = 0.0;
                        for t in 0..qi.len() {
                            dot += qi[t] * kj[t];
                        }
                        dot / d_k.sqrt()
                    })
                    .collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.iter().map(|e| e / total).collect()
            })
            .collect()
    }
}

pub mod entropy {
    fn templates(x: &[f64], m: usize, count: usize) -> Vec<&[f64]> {
        (0..count).map(|i| &x[i..i + m]).collect()
    }

    fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    fn phi(x: &[f64], m: usize, r: f64) -> f64 {
        let count = x.len() - m + 1;
        let t = templates(x, m, count);
        let mut total = 0.0;
        for i in 0..count {
            let matches = (0..count).filter(|&j| chebyshev(t[i], t[j]) <= r).count();
            total += (matches as f64 / count as f64).ln();
        }
        total / count as f64
    }

    pub fn apen(x: &[f64], m: usize, r: f64) -> f64 {
        phi(x, m, r) - phi(x, m + 1, r)
    }

    /// `None` when either match count is zero.
    pub fn sampen(x: &[f64], m: usize, r: f64) -> Option<f64> {
        let count = x.len() - m;
        let short = templates(x, m, count);
        let long = templates(x, m + 1, count);
        let (mut a, mut b) = (0usize, 0usize);
        for i in 0..count {
            for j in 0..count {
                if i == j {
                    continue;
                }
                if chebyshev(short[i], short[j]) <= r {
                    b += 1;
                }
                if chebyshev(long[i], long[j]) <= r {
                    a += 1;
                }
            }
        }
        if a == 0 || b == 0 {
            None
        } else {
            Some(-(a as f64 / b as f64).ln())
        }
    }

    /// Singular values by one-sided (Hestenes) Jacobi rotations.
    pub fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
        let cols = rows[0].len();
        let mut a: Vec<Vec<f64>> = (0..cols).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        for _sweep in 0..100 {
            let mut rotated = false;
            for p in 0..cols {
                for q in p + 1..cols {
                    let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                    let beta: f64 = a[q].iter().map(|v| v * v).sum();
                    let gamma: f64 = a[p].iter().zip(&a[q]).map(|(u, v)| u * v).sum();
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for k in 0..a[p].len() {
                        let (up, uq) = (a[p][k], a[q][k]);
                        a[p][k] = c * up - s * uq;
                        a[q][k] = s * up + c * uq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// SVD entropy with natural log over the delay embedding.
    pub fn svden(x: &[f64], order: usize, delay: usize) -> f64 {
        let rows: Vec<Vec<f64>> = (0..x.len() - (order - 1) * delay)
            .map(|i| (0..order).map(|k| x[i + k * delay]).collect())
            .collect();
        let sv = singular_values(&rows);
        let total: f64 = sv.iter().sum();
        let mut h = 0.0;
        for s in sv {
            let p = s / total;
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
        h
    }
}

pub mod lasa {
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Tag {
        High,
        Medium,
        Dropped,
    }

    pub fn tags(lava: &[f64], t1: f64, t2: f64) -> Vec<Tag> {
        lava.iter()
            .map(|&a| {
                if a > t1 {
                    Tag::High
                } else if a > t2 {
                    Tag::Medium
                } else {
                    Tag::Dropped
                }
            })
            .collect()
    }

    /// Kept `(position, value)` pairs sorted by position.
    pub fn abstraction(lava: &[f64], values: &[f64], t1: f64, t2: f64) -> Vec<(usize, f64)> {
        let tags = tags(lava, t1, t2);
        let n = tags.len();
        let mut kept = Vec::new();
        for p in 0..n {
            if tags[p] == Tag::High {
                kept.push((p, values[p]));
            }
            let starts_run = tags[p] == Tag::Medium && (p == 0 || tags[p - 1] != Tag::Medium);
            if starts_run {
                let mut end = p;
                while end + 1 < n && tags[end + 1] == Tag::Medium {
                    end += 1;
                }
                let mut run: Vec<f64> = values[p..=end].to_vec();
                run.sort_by(|a, b| a.partial_cmp(b).unwrap());
                kept.push(((p + end) / 2, run[(run.len() - 1) / 2]));
            }
        }
        kept.sort_by_key(|&(p, _)| p);
        kept
    }
}

pub mod gcr {
    //! Class-indexed nested vectors: `fcam[c][u][v][i][j]`, `ccam[c][v][i][j]`,
    //! `gtm[c][v][j]`. Classes are indexed by their rank in `classes`.

    use super::Matrix;

    pub struct Sample {
        pub class: i64,
        pub symbols: Vec<usize>,
        pub lama: Matrix,
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum Penalty {
        Counting { alpha: f64 },
        Entropy { alpha: f64, floor: f64 },
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Vector {
        Max,
        Median,
        Avg,
    }

    pub struct Setup {
        pub symbol_count: usize,
        pub relative_average: bool,
        pub threshold_factor: Option<f64>,
        pub penalty: Option<Penalty>,
    }

    pub type Fcam = Vec<Vec<Vec<Matrix>>>;
    pub type Ccam = Vec<Vec<Matrix>>;
    pub type Gtm = Vec<Vec<Vec<f64>>>;

    pub fn classes(samples: &[Sample]) -> Vec<i64> {
        let mut c: Vec<i64> = samples.iter().map(|s| s.class).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn fcam(samples: &[Sample], setup: &Setup) -> Fcam {
        let classes = classes(samples);
        let n = samples[0].symbols.len();
        let s = setup.symbol_count;
        let mut sums = vec![vec![vec![vec![vec![0.0; n]; n]; s]; s]; classes.len()];
        let mut counts = vec![vec![vec![vec![vec![0u32; n]; n]; s]; s]; classes.len()];

        let mut entry_total = 0.0;
        let mut entry_count = 0usize;
        for sample in samples {
            for row in &sample.lama {
                for &a in row {
                    entry_total += a;
                    entry_count += 1;
                }
            }
        }
        let cutoff = setup.threshold_factor.map(|f| f * (entry_total / entry_count as f64));
        let per_class: Vec<usize> = classes
            .iter()
            .map(|&c| samples.iter().filter(|x| x.class == c).count())
            .collect();
        let total_count = samples.len() as f64;

        for sample in samples {
            let c = classes.iter().position(|&k| k == sample.class).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let a = sample.lama[i][j];
                    if let Some(cut) = cutoff {
                        if a < cut {
                            continue;
                        }
                    }
                    let from = sample.symbols[i];
                    let to = sample.symbols[j];
                    match setup.penalty {
                        None => {
                            sums[c][from][to][i][j] += a;
                            counts[c][from][to][i][j] += 1;
                        }
                        Some(p) => {
                            let n_classes = classes.len() as f64;
                            let (reward, sub) = match p {
                                Penalty::Counting { alpha } => {
                                    let sub = a / per_class[c] as f64;
                                    (alpha * (n_classes + 1.0) * sub, sub)
                                }
                                Penalty::Entropy { alpha, floor } => {
                                    let e = per_class[c] as f64 / total_count;
                                    let entropy = (-(e * e.ln())).max(floor);
                                    (alpha * (n_classes + 1.0) * a / entropy, a * entropy)
                                }
                            };
                            sums[c][from][to][i][j] += reward;
                            counts[c][from][to][i][j] += 1;
                            for d in 0..classes.len() {
                                if d != c {
                                    sums[d][from][to][i][j] -= sub;
                                    counts[d][from][to][i][j] += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        if setup.relative_average {
            for c in 0..classes.len() {
                for u in 0..s {
                    for v in 0..s {
                        for i in 0..n {
                            for j in 0..n {
                                let k = counts[c][u][v][i][j];
                                sums[c][u][v][i][j] = if k > 0 { sums[c][u][v][i][j] / k as f64 } else { 0.0 };
                            }
                        }
                    }
                }
            }
        }
        sums
    }

    pub fn ccam(fcam: &Fcam) -> Ccam {
        fcam.iter()
            .map(|class| {
                let s = class.len();
                let n = class[0][0].len();
                (0..s)
                    .map(|v| {
                        let mut m = vec![vec![0.0; n]; n];
                        for u in 0..s {
                            for i in 0..n {
                                for j in 0..n {
                                    m[i][j] += class[u][v][i][j];
                                }
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect()
    }

    pub fn gtm(ccam: &Ccam, f: Vector) -> Gtm {
        ccam.iter()
            .map(|class| {
                class
                    .iter()
                    .map(|m| {
                        let n = m.len();
                        (0..n)
                            .map(|j| {
                                let mut column: Vec<f64> = (0..n).map(|i| m[i][j]).collect();
                                match f {
                                    Vector::Max => column.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                                    Vector::Avg => {
                                        let mut t = 0.0;
                                        for v in &column {
                                            t += v;
                                        }
                                        t / n as f64
                                    }
                                    Vector::Median => {
                                        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
                                        if n % 2 == 1 {
                                            column[n / 2]
                                        } else {
                                            (column[n / 2 - 1] + column[n / 2]) / 2.0
                                        }
                                    }
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn normalize(value: f64, max: f64) -> f64 {
        if max > 1e-12 {
            value / max
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn fcam_scores(fcam: &Fcam, x: &[usize]) -> Vec<f64> {
        fcam.iter()
            .map(|class| {
                let n = x.len();
                let s = class.len();
                let (mut value, mut max) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        value += class[x[i]][x[j]][i][j];
                        let mut best = f64::NEG_INFINITY;
                        for u in 0..s {
                            for v in 0..s {
                                best = best.max(class[u][v][i][j]);
                            }
                        }
                        max += best;
                    }
                }
                normalize(value, max)
            })
            .collect()
    }

    pub fn gtm_scores(gtm: &Gtm, x: &[usize]) -> Vec<f64> {
        gtm.iter()
            .map(|class| {
                let (mut value, mut max) = (0.0, 0.0);
                for (j, &sym) in x.iter().enumerate() {
                    value += class[sym][j];
                    max += class.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max);
                }
                normalize(value, max)
            })
            .collect()
    }

    /// Column-reduced scores: lookups `ccam[x_j][i][j]` summed over `i`
    /// and divided by `n` per column, against the best column per position.
    pub fn ccam_scores(ccam: &Ccam, x: &[usize]) -> Vec<f64> {
        gtm_scores(&gtm(ccam, Vector::Avg), x)
    }

    /// `counts[c][v][j]`: samples of class rank `c` holding symbol `v` at
    /// position `j`.
    pub fn occurrence_counts(samples: &[(i64, Vec<usize>)], symbol_count: usize) -> Vec<Vec<Vec<u64>>> {
        let mut classes: Vec<i64> = samples.iter().map(|s| s.0).collect();
        classes.sort();
        classes.dedup();
        let n = samples.first().map_or(0, |s| s.1.len());
        let mut counts = vec![vec![vec![0u64; n]; symbol_count]; classes.len()];
        for (class, symbols) in samples {
            let c = classes.iter().position(|k| k == class).unwrap();
            for (j, &v) in symbols.iter().enumerate() {
                counts[c][v][j] += 1;
            }
        }
        counts
    }

    /// Lowest class index among the maxima.
    pub fn argmax(scores: &[f64]) -> usize {
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occurrence_counts_per_class() {
        let counts = gcr::occurrence_counts(&[(5, vec![0, 1]), (2, vec![1, 1]), (5, vec![0, 0])], 2);
        assert_eq!(counts, vec![vec![vec![0, 0], vec![1, 1]], vec![vec![2, 1], vec![0, 1]]]);
    }

    #[test]
    fn jacobi_singular_values_of_diagonal() {
        let mut sv = entropy::singular_values(&[vec![3.0, 0.0], vec![0.0, 4.0], vec![0.0, 0.0]]);
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sv[0] - 3.0).abs() < 1e-12 && (sv[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_singular_values_of_rotation_product() {
        // [[1, 1], [0, 1]] has singular values golden ratio and its inverse
        let mut sv = entropy::singular_values(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sv[1] - phi).abs() < 1e-12 && (sv[0] - 1.0 / phi).abs() < 1e-12);
    }

    #[test]
    fn lasa_reference_worked_example() {
        let kept = lasa::abstraction(&[0.1, 0.2, 0.3, 0.4], &[-1.0, 0.0, 0.0, 1.0], 0.25, 0.25 / 1.2);
        assert_eq!(kept, vec![(2, 0.0), (3, 1.0)]);
    }

    #[test]
    fn sampen_of_constant() {
        assert_eq!(entropy::sampen(&[1.0; 10], 2, 0.0), Some(0.0));
        assert_eq!(entropy::apen(&[1.0; 10], 2, 0.0), 0.0);
    }
}

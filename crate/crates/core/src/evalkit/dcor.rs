//! Distance correlation between two samples of vectors, using the
//! biased V-statistic: pairwise Euclidean distance matrices are
//! double-centered and dCor = dCov / sqrt(dVar_a · dVar_b), with 0
//! when either marginal distance variance vanishes.

use crate::error::{Error, Result};
use crate::numcore::matrix::euclidean;
use crate::par;

fn check_sample(name: &str, xs: &[Vec<f64>]) -> Result<usize> {
    let d = xs[0].len();
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Shape(format!(
                "{name}[{i}] has dimension {}, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{name}[{i}] is not finite")));
        }
    }
    Ok(d)
}

/// Flat n-by-n distance matrix, row-major.
fn distance_matrix(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    par::map_range(n, |i| {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            row.push(euclidean(&xs[i], &xs[j]));
        }
        row
    })
    .into_iter()
    .flatten()
    .collect()
}

/// In-place double centering; returns the mean of squared entries
/// afterwards (the V-statistic inner product with itself).
fn double_center(m: &mut [f64], n: usize) {
    let grand = m.iter().sum::<f64>() / (n * n) as f64;
    let row_means: Vec<f64> = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n as f64
}

pub fn dcor(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "sample sizes differ: {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 samples, got {}",
            a.len()
        )));
    }
    check_sample("a", a)?;
    check_sample("b", b)?;
    let n = a.len();

    let mut da = distance_matrix(a);
    let mut db = distance_matrix(b);
    double_center(&mut da, n);
    double_center(&mut db, n);

    let dvar_a = mean_product(&da, &da);
    let dvar_b = mean_product(&db, &db);
    if dvar_a <= 0.0 || dvar_b <= 0.0 {
        return Ok(0.0);
    }
    let dcov2 = mean_product(&da, &db).max(0.0);
    Ok((dcov2 / (dvar_a * dvar_b).sqrt()).sqrt().min(1.0))
}

//! Sample moments with standard errors.

pub(crate) fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Mean and its standard error.
pub(crate) fn mean_se(a: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let m = mean(a);
    let var = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `E[ab]` for zero-mean `a, b`, with its standard error.
pub(crate) fn product_moment(a: &[f64], b: &[f64]) -> (f64, f64) {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    mean_se(&p)
}

/// Sample skewness; its standard error under normality is `√(6/n)`.
pub(crate) fn skewness(a: &[f64]) -> f64 {
    let m = mean(a);
    let m2 = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / a.len() as f64;
    let m3 = a.iter().map(|x| (x - m).powi(3)).sum::<f64>() / a.len() as f64;
    m3 / m2.powf(1.5)
}

/// Sample excess kurtosis; its standard error under normality is `√(24/n)`.
pub(crate) fn excess_kurtosis(a: &[f64]) -> f64 {
    let m = mean(a);
    let m2 = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / a.len() as f64;
    let m4 = a.iter().map(|x| (x - m).powi(4)).sum::<f64>() / a.len() as f64;
    m4 / (m2 * m2) - 3.0
}

/// Rows of equal length to columns.
pub(crate) fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

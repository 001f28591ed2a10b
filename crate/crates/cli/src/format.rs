use serde::{Deserialize, Serialize};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero with only two points.
    pub stderr: f64,
}

/// Least-squares line through `(ln x, ln y)`. `None` when a value is not
/// positive or fewer than two points are given.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if lx.len() > 2 {
        let ssr: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LogLogFit { slope, intercept, stderr })
}

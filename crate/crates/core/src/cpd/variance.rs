use crate::error::{Error, Result};

/// Default Bartlett bandwidth `floor(m^(1/3))`.
pub fn default_bandwidth(m: usize) -> usize {
    let mut b = (m as f64).cbrt().floor() as usize;
    // guard against cbrt rounding just below an exact cube
    while (b + 1).pow(3) <= m {
        b += 1;
    }
    while b > 0 && b.pow(3) > m {
        b -= 1;
    }
    b
}

/// Bartlett-kernel (Newey-West) long-run variance of `samples`.
///
/// `gamma_0 + 2 * sum_{j=1..=bandwidth} (1 - j/(bandwidth+1)) * gamma_j`
/// with biased autocovariances (divided by the sample length). A constant
/// series yields exactly zero.
pub fn long_run_variance(samples: &[f64], bandwidth: usize) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::param(
            "samples",
            format!("need at least 2 samples, got {}", samples.len()),
        ));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Ok(0.0);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        dev[lag..]
            .iter()
            .zip(&dev[..n - lag])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let max_lag = bandwidth.min(n - 1);
    let mut lrv = autocov(0);
    for lag in 1..=max_lag {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        lrv += 2.0 * w * autocov(lag);
    }
    Ok(lrv.max(0.0))
}

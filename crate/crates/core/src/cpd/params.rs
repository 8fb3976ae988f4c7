use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::cpd::variance::default_bandwidth;

/// Configuration of one sequential test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Learning-window length in samples.
    pub m: usize,
    /// Sensitivity exponent of the weight function, in `[0, 0.5)`.
    pub gamma: f64,
    /// Confidence level; the asymptotic false-alarm bound is `1 - confidence`.
    pub confidence: f64,
    /// Maximum monitoring length before a new monitoring period starts.
    pub horizon: usize,
    /// Bartlett kernel bandwidth for the long-run variance.
    pub lrv_bandwidth: usize,
}

impl DetectorParams {
    /// Parameters with the default bandwidth `floor(m^(1/3))`.
    pub fn new(m: usize, gamma: f64, confidence: f64, horizon: usize) -> Result<Self> {
        Self::with_bandwidth(m, gamma, confidence, horizon, default_bandwidth(m))
    }

    pub fn with_bandwidth(
        m: usize,
        gamma: f64,
        confidence: f64,
        horizon: usize,
        lrv_bandwidth: usize,
    ) -> Result<Self> {
        let params = Self {
            m,
            gamma,
            confidence,
            horizon,
            lrv_bandwidth,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::param("m", format!("must be >= 2, got {}", self.m)));
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        check_gamma(self.gamma)?;
        check_confidence(self.confidence)?;
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::param("gamma", format!("must lie in [0, 0.5), got {gamma}")));
    }
    Ok(())
}

pub(crate) fn check_confidence(confidence: f64) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param(
            "confidence",
            format!("must lie in (0, 1), got {confidence}"),
        ));
    }
    Ok(())
}

/// Weight function `g(m, l) = sqrt(m) * (1 + l/m) * (l / (l + m))^gamma`.
///
/// Monitoring starts at `l = 1`; `l = 0` is rejected because the last
/// factor vanishes for `gamma > 0`.
pub fn weight(m: usize, l: usize, gamma: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("m", "must be positive"));
    }
    if l == 0 {
        return Err(Error::param("l", "monitoring index starts at 1"));
    }
    check_gamma(gamma)?;
    let (m, l) = (m as f64, l as f64);
    Ok(m.sqrt() * (1.0 + l / m) * (l / (l + m)).powf(gamma))
}

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpd::params::{check_confidence, check_gamma};
use crate::error::{Error, Result};

const PATHS_PER_BLOCK: usize = 1024;

/// Calibrated threshold multiplier for one `(gamma, confidence)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub gamma: f64,
    pub confidence: f64,
    pub value: f64,
    pub n_paths: usize,
    pub n_grid: usize,
    pub seed: u64,
}

/// Whether the simulated functional takes `|W(t)|` or `W(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    OneSided,
}

/// Monte Carlo settings for critical-value calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: usize,
    pub n_grid: usize,
    pub seed: u64,
    #[serde(default)]
    pub sidedness: Sidedness,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            n_grid: 10_000,
            seed: 20_210_301,
            sidedness: Sidedness::TwoSided,
        }
    }
}

impl McSettings {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be positive"));
        }
        if self.n_grid == 0 {
            return Err(Error::param("n_grid", "must be positive"));
        }
        Ok(())
    }
}

/// Simulates `sup_{t in (0,1]} |W(t)| / t^gamma` (or `W(t)` when one-sided)
/// over `n_paths` Brownian paths discretised on `n_grid` uniform steps.
/// Returns the per-path suprema sorted ascending.
///
/// Paths are generated in fixed-size blocks, each with its own ChaCha
/// stream, so the result is independent of the thread count.
pub fn simulate_sup_functional(gamma: f64, settings: &McSettings) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    settings.validate()?;
    let n_grid = settings.n_grid;
    let step_sd = (1.0 / n_grid as f64).sqrt();
    let inv_pow: Vec<f64> = (1..=n_grid)
        .map(|i| (i as f64 / n_grid as f64).powf(-gamma))
        .collect();
    let two_sided = settings.sidedness == Sidedness::TwoSided;

    let n_blocks = settings.n_paths.div_ceil(PATHS_PER_BLOCK);
    let mut sups: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(block as u64);
            let start = block * PATHS_PER_BLOCK;
            let count = PATHS_PER_BLOCK.min(settings.n_paths - start);
            let inv_pow = &inv_pow;
            (0..count)
                .map(|_| {
                    let mut w = 0.0f64;
                    let mut sup = f64::NEG_INFINITY;
                    for &scale in inv_pow {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        w += step_sd * z;
                        let v = if two_sided { w.abs() } else { w } * scale;
                        if v > sup {
                            sup = v;
                        }
                    }
                    sup
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sups.sort_by(f64::total_cmp);
    Ok(sups)
}

/// Inverse-CDF empirical quantile of an ascending sample.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Critical value for one confidence level.
pub fn critical_value(
    gamma: f64,
    confidence: f64,
    n_paths: usize,
    n_grid: usize,
    seed: u64,
) -> Result<CriticalValue> {
    let settings = McSettings {
        n_paths,
        n_grid,
        seed,
        sidedness: Sidedness::TwoSided,
    };
    Ok(critical_values(gamma, &[confidence], &settings)?.remove(0))
}

/// Critical values for several confidence levels from one shared path sample,
/// so monotonicity in the confidence level holds exactly.
pub fn critical_values(
    gamma: f64,
    confidences: &[f64],
    settings: &McSettings,
) -> Result<Vec<CriticalValue>> {
    for &c in confidences {
        check_confidence(c)?;
    }
    let sups = simulate_sup_functional(gamma, settings)?;
    Ok(confidences
        .iter()
        .map(|&confidence| CriticalValue {
            gamma,
            confidence,
            value: empirical_quantile(&sups, confidence),
            n_paths: settings.n_paths,
            n_grid: settings.n_grid,
            seed: settings.seed,
        })
        .collect())
}

type CacheKey = (u64, u64, usize, usize, u64);

fn key(gamma: f64, confidence: f64, n_paths: usize, n_grid: usize, seed: u64) -> CacheKey {
    (gamma.to_bits(), confidence.to_bits(), n_paths, n_grid, seed)
}

/// File-backed store of two-sided critical values.
///
/// Records are `gamma,confidence,n_paths,n_grid,seed,value`, one per line,
/// in any order. Missing entries are simulated on demand and persisted.
#[derive(Debug, Default)]
pub struct CriticalValueCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CacheKey, CriticalValue>,
}

impl CriticalValueCache {
    /// An in-memory cache that never touches the filesystem.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or lazily creates) the cache at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cache = Self {
            path: Some(path.clone()),
            entries: BTreeMap::new(),
        };
        match fs::read_to_string(&path) {
            Ok(text) => {
                for cv in Self::parse(&text)? {
                    cache.insert(cv);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(path, e)),
        }
        Ok(cache)
    }

    pub fn parse(text: &str) -> Result<Vec<CriticalValue>> {
        let mut out = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::CacheFormat {
                line: idx + 1,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", fields.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{s:?}: {e}")));
            out.push(CriticalValue {
                gamma: float(fields[0])?,
                confidence: float(fields[1])?,
                n_paths: int(fields[2])? as usize,
                n_grid: int(fields[3])? as usize,
                seed: int(fields[4])?,
                value: float(fields[5])?,
            });
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for cv in self.entries.values() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cv.gamma, cv.confidence, cv.n_paths, cv.n_grid, cv.seed, cv.value
            ));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, cv: CriticalValue) {
        self.entries.insert(
            key(cv.gamma, cv.confidence, cv.n_paths, cv.n_grid, cv.seed),
            cv,
        );
    }

    pub fn get(&self, gamma: f64, confidence: f64, settings: &McSettings) -> Option<CriticalValue> {
        self.entries
            .get(&key(
                gamma,
                confidence,
                settings.n_paths,
                settings.n_grid,
                settings.seed,
            ))
            .copied()
    }

    /// Makes sure every `(gamma, confidence)` combination is present,
    /// simulating each missing gamma once. Persists if anything was added.
    pub fn ensure(
        &mut self,
        gammas: &[f64],
        confidences: &[f64],
        settings: &McSettings,
    ) -> Result<()> {
        if settings.sidedness != Sidedness::TwoSided {
            return Err(Error::param("sidedness", "the cache stores two-sided values only"));
        }
        let mut added = false;
        for &gamma in gammas {
            let missing: Vec<f64> = confidences
                .iter()
                .copied()
                .filter(|&c| self.get(gamma, c, settings).is_none())
                .collect();
            if missing.is_empty() {
                continue;
            }
            for cv in critical_values(gamma, &missing, settings)? {
                self.insert(cv);
            }
            added = true;
        }
        if added {
            self.save()?;
        }
        Ok(())
    }

    /// Returns the cached value, computing and persisting it when missing.
    pub fn lookup(
        &mut self,
        gamma: f64,
        confidence: f64,
        settings: &McSettings,
    ) -> Result<CriticalValue> {
        self.ensure(&[gamma], &[confidence], settings)?;
        Ok(self
            .get(gamma, confidence, settings)
            .expect("ensure inserted the entry"))
    }

    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(self.render().as_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

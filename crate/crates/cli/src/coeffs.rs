use std::path::{Path, PathBuf};

use fracuc::arma_map::{build_coeff_map, CoeffMap};
use fracuc::ssmodel::{DEFAULT_L, DEFAULT_V, DEFAULT_W};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Directory holding serialized coefficient maps.
pub const CACHE_ENV: &str = "FRACUC_CACHE_DIR";

/// Evenly spaced grid of memory parameters with both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridRange {
    pub fn values(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.lo + span * i as f64 / last)
            .collect()
    }

    fn check(&self) -> CliResult<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && 0.0 < self.lo && self.lo < self.hi) {
            return Err(CliError::Validation(format!(
                "grid range [{}, {}] must satisfy 0 < lo < hi",
                self.lo, self.hi
            )));
        }
        if self.points < 4 {
            return Err(CliError::Validation(format!(
                "grid needs at least 4 points, got {}",
                self.points
            )));
        }
        Ok(())
    }
}

/// Settings of the ARMA approximation, recorded in every output that uses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub v: usize,
    pub w: usize,
    pub l: usize,
    pub grid: GridRange,
    /// Number of fractional weights matched by each ARMA fit.
    pub map_n: usize,
}

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct ApproxArgs {
    /// AR order of the trend approximation.
    #[arg(long, default_value_t = DEFAULT_V)]
    pub v: usize,
    /// MA order of the trend approximation.
    #[arg(long, default_value_t = DEFAULT_W)]
    pub w: usize,
    /// Standard lags kept in the cycle's AR representation.
    #[arg(long, default_value_t = DEFAULT_L)]
    pub l: usize,
    /// Lowest memory parameter of the coefficient grid.
    #[arg(long, default_value_t = 0.5)]
    pub grid_lo: f64,
    /// Highest memory parameter of the coefficient grid.
    #[arg(long, default_value_t = 2.5)]
    pub grid_hi: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
}

impl ApproxArgs {
    pub fn approximation(&self, map_n: usize) -> Approximation {
        Approximation {
            v: self.v,
            w: self.w,
            l: self.l,
            grid: GridRange {
                lo: self.grid_lo,
                hi: self.grid_hi,
                points: self.grid_points,
            },
            map_n,
        }
    }
}

fn cache_path(dir: &Path, a: &Approximation, grid: &[f64]) -> PathBuf {
    dir.join(CoeffMap::cache_key(grid, a.v, a.w, a.map_n))
}

/// The coefficient map for `a`, read from the cache directory when one is
/// configured and holds it, built and stored otherwise. An unreadable cache
/// entry is rebuilt.
pub fn coeff_map(a: &Approximation) -> CliResult<CoeffMap> {
    a.grid.check()?;
    let grid = a.grid.values();
    let cache = std::env::var_os(CACHE_ENV).map(|d| cache_path(Path::new(&d), a, &grid));
    if let Some(path) = &cache {
        if let Ok(text) = std::fs::read_to_string(path) {
            match CoeffMap::from_json(&text) {
                Ok(map) => return Ok(map),
                Err(e) => eprintln!("ignoring cached map {}: {e}", path.display()),
            }
        }
    }
    eprintln!(
        "building ARMA({}, {}) coefficient map on {} grid points for n = {}",
        a.v, a.w, a.grid.points, a.map_n
    );
    let map = build_coeff_map(&grid, a.v, a.w, a.map_n)?;
    if let Some(path) = &cache {
        store(path, &map.to_json()?)?;
    }
    Ok(map)
}

/// Writes through a temporary file so concurrent readers never see a
/// partial map.
fn store(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
    std::fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

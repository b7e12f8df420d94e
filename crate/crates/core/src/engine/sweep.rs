//! Grids over Byzantine fraction and replicate seeds.

use std::io::Write;

use crate::config::SimConfig;
use crate::error::{Error, Result};

use super::{run_simulation, MetricsWriter, RunManifest, RoundMetrics};

/// Replicate seeds used when none are given.
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [987_654_321, 39_573_295, 32_599_368];

/// Parses `LO:HI:STEP` into the inclusive list of fractions.
pub fn parse_fraction_range(text: &str) -> Result<Vec<f64>> {
    let bad = |msg: &str| Error::config("--byz", format!("{msg} in {text:?}, expected LO:HI:STEP"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("wrong number of fields"));
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || hi < lo || lo < 0.0 {
        return Err(bad("need 0 <= LO <= HI and STEP > 0"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub run_id: String,
    pub byz_fraction: f64,
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
    pub manifest: RunManifest,
}

pub fn run_id(byz_fraction: f64, seed: u64) -> String {
    format!("f{byz_fraction:.2}-s{seed}")
}

/// Runs every (fraction, seed) pair; each seed drives all experiment streams
/// while the sketch family stays fixed.
pub fn sweep(base: &SimConfig, fractions: &[f64], seeds: &[u64]) -> Result<Vec<SweepRun>> {
    let mut runs = Vec::with_capacity(fractions.len() * seeds.len());
    for &f in fractions {
        for &seed in seeds {
            let mut config = base.clone();
            config.attack.byz_fraction = f;
            config.seeds = config.seeds.with_master(seed);
            log::info!("sweep run byz_fraction={f} seed={seed}");
            let result = run_simulation(&config)?;
            runs.push(SweepRun {
                run_id: run_id(f, seed),
                byz_fraction: f,
                seed,
                metrics: result.metrics,
                manifest: result.manifest,
            });
        }
    }
    Ok(runs)
}

pub fn write_sweep_csv<W: Write>(out: W, runs: &[SweepRun]) -> Result<W> {
    let mut w = MetricsWriter::new(out);
    for r in runs {
        w.write_run(&r.run_id, r.seed, r.byz_fraction, &r.metrics)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_fractions() {
        let f = parse_fraction_range("0:0.8:0.1").unwrap();
        assert_eq!(f.len(), 9);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[3], 0.3);
        assert_eq!(f[8], 0.8);
    }

    #[test]
    fn single_point_and_errors() {
        assert_eq!(parse_fraction_range("0.2:0.2:0.1").unwrap(), vec![0.2]);
        assert!(parse_fraction_range("0:1").is_err());
        assert!(parse_fraction_range("0:1:0").is_err());
        assert!(parse_fraction_range("0.5:0.1:0.1").is_err());
        assert!(parse_fraction_range("a:b:c").is_err());
    }
}

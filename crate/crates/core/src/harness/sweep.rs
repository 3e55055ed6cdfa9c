use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simnet::{Simulation, SimConfig, SimError};

use super::audit::audit_trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub sample_size: usize,
    pub reps: usize,
    /// Mean messages sent per correct process per broadcast.
    pub mean: f64,
    /// Half-width of the 95% confidence interval of `mean` across runs.
    pub ci95: f64,
    pub delivery_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `mean(n_last) / mean(n_first)`.
    pub observed_ratio: f64,
    /// `ln(n_last) / ln(n_first)`, or 1 with a fixed sample size.
    pub predicted_ratio: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sample_size,reps,mean,ci95,delivery_rate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.4}\n",
                r.n, r.sample_size, r.reps, r.mean, r.ci95, r.delivery_rate
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub seed_base: u64,
    pub k: f64,
    /// Forces every sample to this size (control run).
    pub fixed_sample_size: Option<usize>,
    pub tolerance: f64,
    pub validate_at_prb: bool,
    /// Overrides the default run horizon.
    pub horizon: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ns: vec![128, 512, 2048],
            reps: 20,
            seed_base: 0,
            k: 4.0,
            fixed_sample_size: None,
            tolerance: 0.30,
            validate_at_prb: false,
            horizon: None,
        }
    }
}

/// One honest broadcast in a network of `n`.
pub fn sweep_config(n: usize, seed: u64, k: f64, fixed: Option<usize>) -> SimConfig {
    let mut c = SimConfig::single_subnet(n, seed);
    c.samples.k = k;
    c.samples.size = fixed;
    c.audit_monotonicity = false;
    c
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Mean per-process message count per broadcast across `ns`, compared with
/// the `ln n` growth prediction.
pub fn sweep_message_complexity(opts: &SweepOptions) -> Result<SweepReport, SimError> {
    if opts.ns.len() < 3 || opts.reps == 0 {
        return Err(SimError::InvalidConfig("sweep needs at least three sizes and one repetition".into()));
    }
    let mut rows = Vec::new();
    for &n in &opts.ns {
        let runs: Vec<Result<(f64, f64, usize), SimError>> = (0..opts.reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut config = sweep_config(n, opts.seed_base + r, opts.k, opts.fixed_sample_size);
                config.validate_at_prb = opts.validate_at_prb;
                if let Some(h) = opts.horizon {
                    config.horizon = h;
                }
                let mut sim = Simulation::new(config)?;
                let size = sim.samples().max_size();
                sim.run_to_end();
                let a = audit_trace(sim.trace());
                let per_broadcast = a.messages_mean / a.honest_submissions.max(1) as f64;
                Ok((per_broadcast, a.delivery_rate(), size))
            })
            .collect();
        let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
        let means: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let (mean, ci95) = mean_ci(&means);
        rows.push(SweepRow {
            n,
            sample_size: runs[0].2,
            reps: opts.reps,
            mean,
            ci95,
            delivery_rate: runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64,
        });
    }
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let observed_ratio = last.mean / first.mean;
    let predicted_ratio = if opts.fixed_sample_size.is_some() {
        1.0
    } else {
        (last.n as f64).ln() / (first.n as f64).ln()
    };
    let within_tolerance = (observed_ratio - predicted_ratio).abs() <= opts.tolerance * predicted_ratio;
    Ok(SweepReport {
        rows,
        observed_ratio,
        predicted_ratio,
        tolerance: opts.tolerance,
        within_tolerance,
    })
}

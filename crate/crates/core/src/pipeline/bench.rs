use serde::{Deserialize, Serialize};

use super::{run_scenario, ExecMode, PipelineConfig, PipelineError, RunOptions, STAGE_NAMES};
use crate::trace::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub mean_us_per_frame: f64,
    pub std_us_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub frames: usize,
    pub fps_mean: f64,
    pub fps_std: f64,
    /// One row per stage, in dataflow order.
    pub stages: Vec<StageTiming>,
}

/// Sample mean and standard deviation (n - 1 denominator).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeats a single-threaded run and reports throughput and per-stage cost.
pub fn bench(scenario: &Scenario, config: &PipelineConfig, salt: &[u8], opts: &RunOptions, repetitions: usize) -> Result<BenchReport, PipelineError> {
    if repetitions < 3 {
        return Err(PipelineError::Config("bench needs at least 3 repetitions".into()));
    }
    let opts = RunOptions { mode: ExecMode::SingleThreaded, realtime: false, ..opts.clone() };
    let frames = scenario.frames.len().max(1) as f64;
    let mut fps = Vec::with_capacity(repetitions);
    let mut per_stage = vec![Vec::with_capacity(repetitions); STAGE_NAMES.len()];
    for _ in 0..repetitions {
        let out = run_scenario(scenario, config, salt, &opts)?;
        let busy: f64 = out.stage_time.iter().map(|d| d.as_secs_f64()).sum();
        fps.push(frames / busy.max(1e-9));
        for (k, d) in out.stage_time.iter().enumerate() {
            per_stage[k].push(d.as_secs_f64() * 1e6 / frames);
        }
    }
    let (fps_mean, fps_std) = mean_std(&fps);
    let stages = STAGE_NAMES
        .iter()
        .zip(&per_stage)
        .map(|(name, xs)| {
            let (m, s) = mean_std(xs);
            StageTiming { stage: name.to_string(), mean_us_per_frame: m, std_us_per_frame: s }
        })
        .collect();
    Ok(BenchReport { repetitions, frames: scenario.frames.len(), fps_mean, fps_std, stages })
}

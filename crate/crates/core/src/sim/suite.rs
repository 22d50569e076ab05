use super::episode::{run_episode, Attribution, EpisodeConfig, EpisodeError, EpisodeOutcome, Mode};
use crate::world::{Scenario, TaskLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Per-episode seed from the suite seed, scenario index and repeat. The mode
/// is deliberately not mixed in so every mode sees the same start poses.
pub fn episode_seed(base_seed: u64, scenario: usize, repeat: usize) -> u64 {
    // splitmix64 finalizer over a packed key
    let mut z = base_seed
        .wrapping_add((scenario as u64) << 32 | repeat as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub task_label: TaskLabel,
    pub mode: Mode,
    pub repeat: usize,
    pub seed: u64,
    pub success: bool,
    pub attribution: Attribution,
    pub violation: bool,
    pub goal_reached: bool,
    #[serde(deserialize_with = "null_as_nan")]
    pub min_h: f64,
    pub path_length: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: Mode,
    pub episodes: usize,
    pub safe_episodes: usize,
    pub unsafe_episodes: usize,
    #[serde(deserialize_with = "null_as_nan")]
    pub total_success: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub safe_success: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub unsafe_success: f64,
    pub failures: usize,
    /// Fractions of failures.
    #[serde(deserialize_with = "null_as_nan")]
    pub ctx: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub grnd: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub enf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub base_seed: u64,
    pub repeats: usize,
    pub rows: Vec<ModeRow>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Job identity within a suite; also names the per-episode output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteJob {
    pub mode: Mode,
    pub scenario: usize,
    pub repeat: usize,
    pub seed: u64,
}

/// JSON writes non-finite floats as `null`; empty fractions come back as NaN.
fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn frac(n: usize, d: usize) -> f64 {
    if d == 0 {
        f64::NAN
    } else {
        n as f64 / d as f64
    }
}

fn row(mode: Mode, eps: &[&EpisodeSummary]) -> ModeRow {
    let safe: Vec<_> = eps.iter().filter(|e| e.task_label == TaskLabel::Safe).collect();
    let uns: Vec<_> = eps.iter().filter(|e| e.task_label == TaskLabel::Unsafe).collect();
    let fails: Vec<_> = eps.iter().filter(|e| !e.success).collect();
    let count = |a: Attribution| fails.iter().filter(|e| e.attribution == a).count();
    ModeRow {
        mode,
        episodes: eps.len(),
        safe_episodes: safe.len(),
        unsafe_episodes: uns.len(),
        total_success: frac(eps.iter().filter(|e| e.success).count(), eps.len()),
        safe_success: frac(safe.iter().filter(|e| e.success).count(), safe.len()),
        unsafe_success: frac(uns.iter().filter(|e| e.success).count(), uns.len()),
        failures: fails.len(),
        ctx: frac(count(Attribution::Ctx), fails.len()),
        grnd: frac(count(Attribution::Grnd), fails.len()),
        enf: frac(count(Attribution::Enf), fails.len()),
    }
}

/// Runs every (mode, scenario, repeat) episode in parallel. `on_episode`
/// sees each finished episode, e.g. to write its artifacts; it runs on the
/// worker thread.
pub fn run_suite<F>(
    scenarios: &[Scenario<f64>],
    modes: &[Mode],
    repeats: usize,
    base_seed: u64,
    template: &EpisodeConfig,
    on_episode: F,
) -> Result<SuiteResult, EpisodeError>
where
    F: Fn(&SuiteJob, &Scenario<f64>, &EpisodeOutcome) -> Result<(), EpisodeError> + Sync,
{
    assert!(repeats >= 1, "repeats must be >= 1");
    let jobs: Vec<SuiteJob> = modes
        .iter()
        .flat_map(|&mode| {
            (0..scenarios.len()).flat_map(move |scenario| {
                (0..repeats).map(move |repeat| SuiteJob {
                    mode,
                    scenario,
                    repeat,
                    seed: episode_seed(base_seed, scenario, repeat),
                })
            })
        })
        .collect();
    let episodes = jobs
        .par_iter()
        .map(|job| {
            let s = &scenarios[job.scenario];
            let cfg = EpisodeConfig {
                scenario: s.name.clone(),
                mode: job.mode,
                seed: job.seed,
                ..template.clone()
            };
            let out = run_episode(s, &cfg)?;
            on_episode(job, s, &out)?;
            Ok(EpisodeSummary {
                scenario: s.name.clone(),
                task_label: s.task_label,
                mode: job.mode,
                repeat: job.repeat,
                seed: job.seed,
                success: out.metrics.success,
                attribution: out.metrics.failure_attribution,
                violation: out.metrics.violation,
                goal_reached: out.metrics.goal_reached,
                min_h: out.metrics.min_h,
                path_length: out.metrics.path_length,
                duration: out.metrics.duration,
            })
        })
        .collect::<Result<Vec<_>, EpisodeError>>()?;
    Ok(summarize(base_seed, repeats, modes, episodes))
}

pub fn summarize(base_seed: u64, repeats: usize, modes: &[Mode], episodes: Vec<EpisodeSummary>) -> SuiteResult {
    let rows = modes
        .iter()
        .map(|&m| {
            let eps: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.mode == m).collect();
            row(m, &eps)
        })
        .collect();
    SuiteResult {
        base_seed,
        repeats,
        rows,
        episodes,
    }
}

fn pct(x: f64) -> String {
    if x.is_nan() {
        "-".to_string()
    } else {
        format!("{:.1}%", 100.0 * x)
    }
}

impl SuiteResult {
    pub fn row(&self, mode: Mode) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    /// Success rates and failure attribution, one row per mode.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<11} {:>8} {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
            "mode", "episodes", "total", "safe", "unsafe", "ctx", "grnd", "enf"
        );
        let _ = writeln!(s, "{}", "-".repeat(78));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<11} {:>8} {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
                r.mode.as_str(),
                r.episodes,
                pct(r.total_success),
                pct(r.safe_success),
                pct(r.unsafe_success),
                pct(r.ctx),
                pct(r.grnd),
                pct(r.enf)
            );
        }
        s
    }

    /// Per-scenario success counts for each mode.
    pub fn breakdown(&self) -> String {
        let mut names: Vec<&str> = Vec::new();
        for e in &self.episodes {
            if !names.contains(&e.scenario.as_str()) {
                names.push(&e.scenario);
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{:<20}", "scenario");
        for r in &self.rows {
            let _ = write!(s, " {:>11}", r.mode.as_str());
        }
        s.push('\n');
        for n in names {
            let _ = write!(s, "{n:<20}");
            for r in &self.rows {
                let eps: Vec<_> = self
                    .episodes
                    .iter()
                    .filter(|e| e.scenario == n && e.mode == r.mode)
                    .collect();
                let ok = eps.iter().filter(|e| e.success).count();
                let _ = write!(s, " {:>11}", format!("{ok}/{}", eps.len()));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::BTreeSet::new();
        for sc in 0..12 {
            for r in 0..5 {
                assert!(seen.insert(episode_seed(7, sc, r)));
            }
        }
        assert_eq!(episode_seed(7, 3, 2), episode_seed(7, 3, 2));
    }

    #[test]
    fn summary_fractions() {
        let e = |label, success, attribution| EpisodeSummary {
            scenario: "x".into(),
            task_label: label,
            mode: Mode::Core,
            repeat: 0,
            seed: 0,
            success,
            attribution,
            violation: !success,
            goal_reached: success,
            min_h: 0.0,
            path_length: 0.0,
            duration: 0.0,
        };
        let r = summarize(
            0,
            1,
            &[Mode::Core],
            vec![
                e(TaskLabel::Safe, true, Attribution::None),
                e(TaskLabel::Unsafe, false, Attribution::Ctx),
                e(TaskLabel::Unsafe, false, Attribution::Grnd),
                e(TaskLabel::Unsafe, true, Attribution::None),
            ],
        );
        let row = r.row(Mode::Core).unwrap();
        assert_eq!(row.total_success, 0.5);
        assert_eq!(row.safe_success, 1.0);
        assert_eq!(row.unsafe_success, 1.0 / 3.0);
        assert_eq!(row.ctx, 0.5);
        assert_eq!(row.enf, 0.0);
        assert!(r.table().contains("core"));
    }

    #[test]
    fn empty_fractions_survive_json() {
        let r = summarize(0, 1, &[Mode::Oracle], vec![]);
        let back: SuiteResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert!(back.row(Mode::Oracle).unwrap().ctx.is_nan());
    }
}

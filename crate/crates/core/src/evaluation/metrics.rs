use std::fmt::Write as _;

use crate::adhesion::AttachReason;
use crate::log::EpisodeLog;
use crate::model::NUM_LEGS;

pub const RECOVERY_WINDOWS: [f64; 3] = [1.2, 2.4, 3.6];

fn finite_steps(log: &EpisodeLog) -> impl Iterator<Item = &crate::log::StepRecord> {
    log.steps.iter().filter(|s| s.measured.iter().all(|v| v.is_finite()))
}

/// RMS tracking error over `(v_x, v_y, omega_z)` stacked into one series.
pub fn velocity_rmse(log: &EpisodeLog) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in finite_steps(log) {
        for k in 0..3 {
            let e = s.command[k] - s.measured[k];
            sum += e * e;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

pub fn velocity_rmse_channels(log: &EpisodeLog) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for s in finite_steps(log) {
        for k in 0..3 {
            let e = s.command[k] - s.measured[k];
            sum[k] += e * e;
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|v| (v / n as f64).sqrt()))
}

/// `(stance steps with force active, stance steps)` summed over feet.
pub fn retention_counts(log: &EpisodeLog) -> (usize, usize) {
    let mut active = 0;
    let mut stance = 0;
    for s in &log.steps {
        for f in &s.feet {
            if f.stance {
                stance += 1;
                if f.force_active {
                    active += 1;
                }
            }
        }
    }
    (active, stance)
}

/// Percentage of stance time with the holding force applied.
pub fn retention(log: &EpisodeLog) -> Option<f64> {
    let (active, stance) = retention_counts(log);
    (stance > 0).then(|| 100.0 * active as f64 / stance as f64)
}

/// `(recovered, failures)` for window `window`. A failure is the first step
/// of a run of stochastic gate failures on one foot; it is recovered when
/// that foot is attached again within the window, before any termination.
pub fn recovery_failures(log: &EpisodeLog, window: f64) -> (usize, usize) {
    let mut failures = 0;
    let mut recovered = 0;
    for foot in 0..NUM_LEGS {
        let mut prev_stoch = false;
        for (k, s) in log.steps.iter().enumerate() {
            let stoch = s.feet[foot].reason == AttachReason::StochasticFail;
            if stoch && !prev_stoch {
                failures += 1;
                let t0 = s.time;
                let back = log.steps[k + 1..]
                    .iter()
                    .take_while(|r| r.time <= t0 + window + 1e-9)
                    .any(|r| r.feet[foot].attached);
                if back {
                    recovered += 1;
                }
            }
            prev_stoch = stoch;
        }
    }
    (recovered, failures)
}

/// Pooled recovery percentage, or `None` when no failure occurred.
pub fn recovery_rate(logs: &[EpisodeLog], window: f64) -> Option<f64> {
    let (r, f) = logs
        .iter()
        .map(|l| recovery_failures(l, window))
        .fold((0, 0), |(a, b), (c, d)| (a + c, b + d));
    (f > 0).then(|| 100.0 * r as f64 / f as f64)
}

pub fn early_termination_rate(logs: &[EpisodeLog]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    let early = logs.iter().filter(|l| l.termination.is_early()).count();
    100.0 * early as f64 / logs.len() as f64
}

pub fn average_walking_time(logs: &[EpisodeLog]) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    logs.iter().map(|l| l.duration.min(l.horizon)).sum::<f64>() / logs.len() as f64
}

/// Mean, population standard deviation and median of per-episode values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub count: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Some(Self {
            mean,
            std: var.sqrt(),
            median,
            count: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub label: String,
    pub prob_attach: f64,
    pub episodes: usize,
    pub sub_protocol: bool,
    pub rmse: Option<MetricSummary>,
    pub rmse_channels: Option<[f64; 3]>,
    pub early_termination: f64,
    pub walking_time: Option<MetricSummary>,
    pub retention: Option<MetricSummary>,
    /// Per-episode recovery summaries, episodes without failures excluded.
    pub recovery: Vec<(f64, Option<MetricSummary>)>,
}

impl MetricsReport {
    pub fn compute(label: &str, prob_attach: f64, logs: &[EpisodeLog], full_protocol_episodes: usize) -> Self {
        Self::compute_with_windows(label, prob_attach, logs, full_protocol_episodes, &RECOVERY_WINDOWS)
    }

    pub fn compute_with_windows(
        label: &str,
        prob_attach: f64,
        logs: &[EpisodeLog],
        full_protocol_episodes: usize,
        windows: &[f64],
    ) -> Self {
        let rmse: Vec<f64> = logs.iter().filter_map(velocity_rmse).collect();
        let durations: Vec<f64> = logs.iter().map(|l| l.duration.min(l.horizon)).collect();
        let retention: Vec<f64> = logs.iter().filter_map(retention).collect();
        let channels = {
            let per: Vec<[f64; 3]> = logs.iter().filter_map(velocity_rmse_channels).collect();
            (!per.is_empty()).then(|| {
                std::array::from_fn(|k| per.iter().map(|c| c[k]).sum::<f64>() / per.len() as f64)
            })
        };
        let recovery = windows
            .iter()
            .map(|&w| {
                let per: Vec<f64> = logs
                    .iter()
                    .filter_map(|l| {
                        let (r, f) = recovery_failures(l, w);
                        (f > 0).then(|| 100.0 * r as f64 / f as f64)
                    })
                    .collect();
                (w, MetricSummary::of(&per))
            })
            .collect();
        Self {
            label: label.to_string(),
            prob_attach,
            episodes: logs.len(),
            sub_protocol: logs.len() < full_protocol_episodes,
            rmse: MetricSummary::of(&rmse),
            rmse_channels: channels,
            early_termination: early_termination_rate(logs),
            walking_time: MetricSummary::of(&durations),
            retention: MetricSummary::of(&retention),
            recovery,
        }
    }

    pub fn tsv_header(&self) -> String {
        let mut h = String::from(
            "label\tprob_attach\tepisodes\tsub_protocol\trmse_mean\trmse_std\trmse_median\trmse_vx\trmse_vy\trmse_wz\tearly_term_pct\ttime_mean\ttime_std\tretention_mean\tretention_std",
        );
        for (w, _) in &self.recovery {
            write!(h, "\trecovery_{w}_mean\trecovery_{w}_std\trecovery_{w}_n").unwrap();
        }
        h
    }

    pub fn tsv_row(&self) -> String {
        let opt = |m: &Option<MetricSummary>, f: fn(&MetricSummary) -> f64| {
            m.as_ref().map_or("NA".to_string(), |m| f(m).to_string())
        };
        let ch = |k: usize| self.rmse_channels.map_or("NA".to_string(), |c| c[k].to_string());
        let mut row = format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.label,
            self.prob_attach,
            self.episodes,
            u8::from(self.sub_protocol),
            opt(&self.rmse, |m| m.mean),
            opt(&self.rmse, |m| m.std),
            opt(&self.rmse, |m| m.median),
            ch(0),
            ch(1),
            ch(2),
            self.early_termination,
            opt(&self.walking_time, |m| m.mean),
            opt(&self.walking_time, |m| m.std),
            opt(&self.retention, |m| m.mean),
            opt(&self.retention, |m| m.std),
        );
        for (_, m) in &self.recovery {
            write!(
                row,
                "\t{}\t{}\t{}",
                opt(m, |m| m.mean),
                opt(m, |m| m.std),
                m.as_ref().map_or(0, |m| m.count)
            )
            .unwrap();
        }
        row
    }

    /// Fixed-width rendering in the layout of the ablation table.
    pub fn table(reports: &[MetricsReport]) -> String {
        let pm = |m: &Option<MetricSummary>, digits: usize| {
            m.as_ref()
                .map_or("n/a".to_string(), |m| format!("{:.digits$} ± {:.digits$}", m.mean, m.std))
        };
        let mut out = String::new();
        let mut probs: Vec<f64> = reports.iter().map(|r| r.prob_attach).collect();
        probs.dedup();
        for p in probs {
            let group: Vec<&MetricsReport> = reports.iter().filter(|r| r.prob_attach == p).collect();
            let with_recovery = p < 1.0;
            let tag = if group.iter().any(|r| r.sub_protocol) { " (sub-protocol)" } else { "" };
            writeln!(out, "Results with prob_attach = {p}{tag}").unwrap();
            write!(
                out,
                "{:<22} {:>22} {:>12} {:>22} {:>20}",
                "Condition", "Vel. RMSE", "Early Term.", "Avg. Time (s)", "Retention (%)"
            )
            .unwrap();
            if with_recovery {
                for (w, _) in &group[0].recovery {
                    write!(out, " {:>20}", format!("Recovery dT={w}s")).unwrap();
                }
            }
            out.push('\n');
            for r in group {
                write!(
                    out,
                    "{:<22} {:>22} {:>12.2} {:>22} {:>20}",
                    r.label,
                    pm(&r.rmse, 4),
                    r.early_termination,
                    pm(&r.walking_time, 4),
                    pm(&r.retention, 2)
                )
                .unwrap();
                if with_recovery {
                    for (_, m) in &r.recovery {
                        write!(out, " {:>20}", pm(m, 2)).unwrap();
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

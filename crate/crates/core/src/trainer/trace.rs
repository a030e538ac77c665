//! Per-step conditioning traces and their summaries.

use serde_json::{json, Value};

use crate::csvio::format_float;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// κ of the head-input covariance; `+∞` when it is singular.
    pub kappa: f64,
    pub loss: f64,
    /// Learning rate applied to the Pre-SVD parameter.
    pub lr: f64,
    pub olr_fired: bool,
    /// Jittered retries needed by the eigensolver.
    pub retries: u32,
    /// The step was skipped after exhausting the retries.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Treatment label such as `svd` or `nog+ow+olr`.
    pub label: String,
    pub base_lr: f64,
    pub initial_kappa: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: Vec<StepRecord>,
    /// Validation accuracy after each epoch.
    pub epoch_accuracy: Vec<f64>,
    /// Steps that needed at least one jittered retry.
    pub retry_events: usize,
    /// Steps skipped because every retry failed.
    pub failures: usize,
}

/// Nearest-rank percentile (`q ∈ [0, 1]`); `+∞` sorts last.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    Some(sorted[idx])
}

impl TrainTrace {
    pub fn kappas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.kappa).collect()
    }

    /// Median κ over the last `fraction` of steps (at least one step).
    pub fn median_tail_kappa(&self, fraction: f64) -> Option<f64> {
        let n = self.steps.len();
        if n == 0 {
            return None;
        }
        let tail = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        percentile(&self.kappas()[n - tail..], 0.5)
    }

    pub fn olr_fire_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.olr_fired).count() as f64 / self.steps.len() as f64
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epoch_accuracy.last().copied()
    }

    /// `step,kappa,loss,lr,flags`, one row per step. Flags are the treatment
    /// label followed by `;olr` when the switch rule fired, `;retry=k` after
    /// jittered retries and `;failed` for skipped steps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,kappa,loss,lr,flags\n");
        for s in &self.steps {
            let mut flags = self.label.clone();
            if s.olr_fired {
                flags.push_str(";olr");
            }
            if s.retries > 0 {
                flags.push_str(&format!(";retry={}", s.retries));
            }
            if s.failed {
                flags.push_str(";failed");
            }
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step,
                format_float(s.kappa),
                format_float(s.loss),
                format_float(s.lr),
                flags
            ));
        }
        out
    }

    pub fn summary(&self) -> Value {
        let kappas = self.kappas();
        let pct = |q| percentile(&kappas, q).map_or(Value::Null, num_json);
        json!({
            "label": self.label,
            "base_lr": num_json(self.base_lr),
            "steps": self.steps.len(),
            "epochs": self.epoch_accuracy.len(),
            "initial_kappa": num_json(self.initial_kappa),
            "initial_loss": num_json(self.initial_loss),
            "final_loss": num_json(self.final_loss),
            "final_accuracy": self.final_accuracy().map_or(Value::Null, num_json),
            "epoch_accuracy": self.epoch_accuracy.iter().copied().map(num_json).collect::<Vec<_>>(),
            "failures": self.failures,
            "retry_events": self.retry_events,
            "olr_fire_fraction": num_json(self.olr_fire_fraction()),
            "kappa_percentiles": {
                "p10": pct(0.1),
                "p50": pct(0.5),
                "p90": pct(0.9),
                "max": pct(1.0),
            },
            "median_tail_kappa": self.median_tail_kappa(TAIL_FRACTION).map_or(Value::Null, num_json),
        })
    }
}

/// Runs ordered by median tail κ, lowest first, with ratios against the
/// untreated `svd` run when the sweep contains one.
pub fn ordering_report(traces: &[TrainTrace]) -> Value {
    let tail = |t: &TrainTrace| t.median_tail_kappa(TAIL_FRACTION).unwrap_or(f64::NAN);
    let baseline = traces.iter().find(|t| t.label == "svd").map(tail);
    let mut order: Vec<&TrainTrace> = traces.iter().collect();
    order.sort_by(|a, b| tail(a).total_cmp(&tail(b)));
    let runs: Vec<Value> = order
        .iter()
        .map(|t| {
            json!({
                "label": t.label,
                "median_tail_kappa": num_json(tail(t)),
                "baseline_over_run": baseline.map_or(Value::Null, |b| num_json(b / tail(t))),
                "olr_fire_fraction": num_json(t.olr_fire_fraction()),
                "final_accuracy": t.final_accuracy().map_or(Value::Null, num_json),
            })
        })
        .collect();
    json!({
        "tail_fraction": TAIL_FRACTION,
        "lowest": order.first().map(|t| t.label.clone()),
        "runs": runs,
    })
}

/// Share of the final steps used for the tail statistics.
pub const TAIL_FRACTION: f64 = 0.2;

/// Finite floats as JSON numbers; `inf`, `-inf` and `nan` as strings.
pub fn num_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(format_float(x))
    }
}

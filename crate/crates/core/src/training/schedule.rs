use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    HalveLr,
    Stop,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Continue => "continue",
            Decision::HalveLr => "halve_lr",
            Decision::Stop => "stop",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Non-improving epochs before the learning rate is halved.
    pub halve_patience: usize,
    /// Non-improving epochs before training stops.
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// An epoch repeats passes over the data until at least this many
    /// updates were made, so tiny training sets still move between
    /// validations. 0 means one pass.
    pub min_updates_per_epoch: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            halve_patience: 3,
            stop_patience: 4,
            max_epochs: 50,
            min_updates_per_epoch: 0,
        }
    }
}

/// Plateau tracking on a higher-is-better validation score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleState {
    pub best: Option<f64>,
    pub since_improvement: usize,
    pub lr: f64,
    pub epoch: usize,
    halve_patience: usize,
    stop_patience: usize,
}

impl ScheduleState {
    pub fn new(lr: f64, config: &ScheduleConfig) -> Self {
        ScheduleState {
            best: None,
            since_improvement: 0,
            lr,
            epoch: 0,
            halve_patience: config.halve_patience,
            stop_patience: config.stop_patience,
        }
    }

    /// Whether the last [`epoch_end`](Self::epoch_end) set a new best.
    pub fn improved(&self) -> bool {
        self.epoch > 0 && self.since_improvement == 0
    }

    /// Records one epoch's score. Only a strictly higher score counts as an
    /// improvement; the learning rate is halved when the plateau reaches the
    /// halving patience and training stops when it reaches the stop patience.
    pub fn epoch_end(&mut self, score: f64) -> Decision {
        self.epoch += 1;
        if self.best.map_or(true, |b| score > b) {
            self.best = Some(score);
            self.since_improvement = 0;
            return Decision::Continue;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.stop_patience {
            Decision::Stop
        } else if self.since_improvement == self.halve_patience {
            self.lr *= 0.5;
            Decision::HalveLr
        } else {
            Decision::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(scores: &[f64]) -> Vec<Decision> {
        let mut s = ScheduleState::new(1e-3, &ScheduleConfig::default());
        scores.iter().map(|&x| s.epoch_end(x)).collect()
    }

    #[test]
    fn improving_trace_continues() {
        assert_eq!(run(&[10.0, 11.0, 12.0]), vec![Decision::Continue; 3]);
    }

    #[test]
    fn halves_at_third_plateau_epoch_and_stops_at_fourth() {
        use Decision::*;
        assert_eq!(run(&[10.0, 9.0, 9.0, 9.0]), vec![Continue, Continue, Continue, HalveLr]);
        assert_eq!(run(&[10.0, 9.0, 9.0, 9.0, 9.0]), vec![Continue, Continue, Continue, HalveLr, Stop]);
        assert_eq!(run(&[10.0, 10.0, 10.0, 10.0, 10.0]).last(), Some(&Stop));
    }

    #[test]
    fn improvement_resets_the_counter() {
        use Decision::*;
        let d = run(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(d, vec![Continue, Continue, Continue, Continue, Continue, Continue, HalveLr]);
    }

    proptest! {
        #[test]
        fn lr_never_increases(scores in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let mut s = ScheduleState::new(1.0, &ScheduleConfig::default());
            let mut lr = s.lr;
            for x in scores {
                if s.epoch_end(x) == Decision::Stop {
                    break;
                }
                prop_assert!(s.lr <= lr);
                lr = s.lr;
            }
        }
    }
}

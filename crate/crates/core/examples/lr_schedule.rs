//! Replays a validation trace through the plateau schedule.

use pivotgen::training::{Decision, ScheduleConfig, ScheduleState};

fn main() {
    let scores = [20.1, 24.5, 26.0, 25.2, 25.9, 25.5, 26.3, 26.1, 26.2, 26.0, 25.8];
    let mut schedule = ScheduleState::new(1e-3, &ScheduleConfig::default());
    for score in scores {
        let lr = schedule.lr;
        let decision = schedule.epoch_end(score);
        println!("epoch {:>2}  score {score:5.1}  lr {lr:.2e}  {decision}", schedule.epoch);
        if decision == Decision::Stop {
            break;
        }
    }
}

//! Linear noise schedule: forward marginals and one exact reverse step.

use spatial_dit::schedule::{make_schedule, ScheduleKind};

fn main() -> spatial_dit::Result<()> {
    let s = make_schedule(50, 0.002, 0.4, ScheduleKind::Linear)?;
    for t in [1, 10, 25, 50] {
        println!("t={t:>2}  beta {:.4}  alpha_bar {:.5}  posterior var {:.5}", s.beta(t)?, s.alpha_bar(t)?, s.posterior_var(t)?);
    }
    let x0 = [1.0, -0.5, 2.0];
    let eps = [0.3, 0.1, -1.2];
    let x1 = s.q_sample(&x0, 1, &eps)?;
    let (mean, sigma) = s.p_mean_sigma(&x1, 1, &eps)?;
    println!("x1 {x1:.4?}  recovered {mean:.12?}  sigma {sigma}");
    Ok(())
}

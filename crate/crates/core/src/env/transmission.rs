//! Motor lag, backlash and series-elastic coupling between motor and joint.

/// Play (backlash) operator: the output only moves once the input has
/// travelled more than `beta` away from it.
#[inline]
pub fn play(theta_m: f64, theta_eff_prev: f64, beta: f64) -> f64 {
    theta_eff_prev.clamp(theta_m - beta, theta_m + beta)
}

/// Exact first-order lag of the motor angle towards `target` over `h` seconds.
#[inline]
pub fn motor_lag(theta_m: f64, target: f64, h: f64, tau: f64) -> f64 {
    target + (theta_m - target) * (-h / tau).exp()
}

/// Backlash output and series-elastic joint torque.
#[inline]
pub fn tendon_transmission(
    theta_m: f64,
    theta_eff_prev: f64,
    q: f64,
    qdot: f64,
    beta: f64,
    k_s: f64,
    d_s: f64,
) -> (f64, f64) {
    let eff = play(theta_m, theta_eff_prev, beta);
    (eff, k_s * (eff - q) - d_s * qdot)
}

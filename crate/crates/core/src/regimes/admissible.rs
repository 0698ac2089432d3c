//! Finite-grid check of admissibility for a decreasing modulus `omega`.
//!
//! `omega` is supplied on the scale `u = log log N`, so
//! `omega(exp(exp(2A log A)))` is `omega_u(2A ln A)` and nothing huge is formed.

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleReport {
    /// `(A, sqrt(A) omega(exp(exp(2A log A))))` on `A = 2^i`.
    pub quantity: Vec<(f64, f64)>,
    /// `(A, (A ln A)^-1/2 / omega(exp(exp((A+1) ln(A+1)))))`, bounding
    /// `(log log N)^-1/2 / omega(N)` on `[M_A, M_{A+1})`.
    pub domination: Vec<(f64, f64)>,
    pub admissible: bool,
    /// Largest domination ratio over the grid.
    pub c_omega: f64,
}

impl AdmissibleReport {
    pub fn growth(&self) -> f64 {
        self.quantity.last().expect("nonempty").1 / self.quantity[0].1
    }
}

/// Evaluates the admissibility quantity on `A = 2, 4, ..., 2^max_log2`.
///
/// The verdict is "admissible" when the quantity increases along the upper
/// half of the grid and at least doubles across it.
pub fn admissible_check(omega_u: &dyn Fn(f64) -> f64, max_log2: u32) -> Result<AdmissibleReport> {
    if !(4..=1000).contains(&max_log2) {
        return Err(invalid("A_max", "log2 A_max must lie in 4..=1000"));
    }
    let grid: Vec<f64> = (1..=max_log2).map(|i| 2f64.powi(i as i32)).collect();
    let mut us: Vec<f64> = Vec::new();
    for &a in &grid {
        us.push(a * a.ln());
        us.push((a + 1.0) * (a + 1.0).ln());
        us.push(2.0 * a * a.ln());
    }
    us.sort_by(f64::total_cmp);
    let vals: Vec<f64> = us.iter().map(|&u| omega_u(u)).collect();
    if let Some(i) = vals.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("omega", format!("must be positive and finite, got {} at u = {}", vals[i], us[i])));
    }
    if let Some(w) = vals.windows(2).position(|w| w[1] > w[0]) {
        return Err(invalid("omega", format!("not decreasing: increases between u = {} and u = {}", us[w], us[w + 1])));
    }
    let quantity: Vec<(f64, f64)> = grid.iter().map(|&a| (a, a.sqrt() * omega_u(2.0 * a * a.ln()))).collect();
    let domination: Vec<(f64, f64)> = grid
        .iter()
        .map(|&a| (a, (a * a.ln()).powf(-0.5) / omega_u((a + 1.0) * (a + 1.0).ln())))
        .collect();
    let half = quantity.len() / 2;
    let tail = &quantity[half..];
    let admissible = tail.windows(2).all(|w| w[1].1 > w[0].1) && tail.last().unwrap().1 >= 2.0 * tail[0].1;
    let c_omega = domination.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(AdmissibleReport { quantity, domination, admissible, c_omega })
}

//! Perturbation-impact diagnostics over attack trajectories.
//!
//! Every perturbation step records how the positive-class probability
//! `f` moved: the *impact index* `pii = |Δf| / ‖δ‖` (realized sensitivity
//! per unit of perturbation) and the *impact direction*
//! `pid = Δf / |Δf| ∈ {−1, +1}`, left undefined when `Δf = 0`. Because
//! each step's impact is measured on the realized intermediate state, the
//! signed impacts telescope exactly:
//!
//! ```text
//! f_final = f_initial + Σ_i pii_i · ‖δ_i‖ · pid_i
//! ```
//!
//! which also yields an exact label-flip criterion against a decision
//! threshold: starting below `τ`, the label flips precisely when the
//! cumulative signed impact reaches `τ − f_initial` (threshold inclusive),
//! and symmetrically from above. A cumulative impact smaller than
//! `|τ − f_initial|` in magnitude therefore guarantees the label is
//! preserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residuals below this bound count as an exact telescoping match.
pub const DECOMPOSITION_TOL: f64 = 1e-9;

/// One recorded movement of the positive-class probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub f_before: f64,
    pub f_after: f64,
    /// Perturbation norm ‖δ‖ of the step (1 for a categorical flip,
    /// normalized move size for a continuous change).
    pub delta_norm: f64,
    /// |Δf| / ‖δ‖.
    pub pii: f64,
    /// sign(Δf); `None` when the step left `f` unchanged.
    pub pid: Option<i8>,
}

impl TrajectoryStep {
    pub fn new(f_before: f64, f_after: f64, delta_norm: f64) -> Result<Self> {
        let (pii, pid) = compute_pii_pid(f_before, f_after, delta_norm)?;
        Ok(TrajectoryStep {
            f_before,
            f_after,
            delta_norm,
            pii,
            pid,
        })
    }

    /// `pii · ‖δ‖ · pid`, with undefined-direction steps contributing 0.
    pub fn signed_impact(&self) -> f64 {
        match self.pid {
            Some(s) => self.pii * self.delta_norm * f64::from(s),
            None => 0.0,
        }
    }
}

/// Impact index and direction of a probability move over a perturbation
/// of norm `delta_norm`.
pub fn compute_pii_pid(f_before: f64, f_after: f64, delta_norm: f64) -> Result<(f64, Option<i8>)> {
    if delta_norm <= 0.0 || delta_norm.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "perturbation norm must be positive, got {delta_norm}"
        )));
    }
    let df = f_after - f_before;
    let pii = df.abs() / delta_norm;
    let pid = if df == 0.0 {
        None
    } else if df > 0.0 {
        Some(1)
    } else {
        Some(-1)
    };
    Ok((pii, pid))
}

/// Result of checking the telescoping decomposition on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub passes: bool,
    pub residual: f64,
}

/// Verify that the signed step impacts telescope from `f_initial` to
/// `f_final`. Steps must chain (each `f_before` equals the previous
/// `f_after`, and the first equals `f_initial`); a broken chain is an
/// error, not a failed check.
pub fn verify_decomposition(
    trajectory: &[TrajectoryStep],
    f_initial: f64,
    f_final: f64,
) -> Result<DecompositionCheck> {
    let mut expected = f_initial;
    for (i, step) in trajectory.iter().enumerate() {
        if step.f_before != expected {
            return Err(Error::Data(format!(
                "trajectory broken at step {i}: f_before {} != previous f {}",
                step.f_before, expected
            )));
        }
        expected = step.f_after;
    }
    let reconstructed = f_initial
        + trajectory
            .iter()
            .map(TrajectoryStep::signed_impact)
            .sum::<f64>();
    let residual = (f_final - reconstructed).abs();
    Ok(DecompositionCheck {
        passes: residual < DECOMPOSITION_TOL,
        residual,
    })
}

/// Signed impact required to flip the thresholded label: `τ − f`.
/// Positive when `f` sits below the threshold (the cumulative impact must
/// reach it, inclusively); non-positive when `f` is already at or above
/// (any cumulative impact below it flips).
pub fn flip_margin(f_v: f64, tau_dec: f64) -> f64 {
    tau_dec - f_v
}

/// Check the exact flip criterion on a chained trajectory: at every
/// prefix, the label changed (relative to the start) if and only if the
/// cumulative signed impact crossed [`flip_margin`], and any prefix whose
/// cumulative impact is smaller in magnitude than the margin left the
/// label unchanged.
pub fn check_flip_theorems(trajectory: &[TrajectoryStep], f_initial: f64, tau_dec: f64) -> bool {
    let start_label = f_initial >= tau_dec;
    let margin = flip_margin(f_initial, tau_dec);
    let mut cumulative = 0.0;
    for step in trajectory {
        cumulative += step.signed_impact();
        let label_changed = (step.f_after >= tau_dec) != start_label;
        let crossed = if start_label {
            cumulative < margin
        } else {
            cumulative >= margin
        };
        if label_changed != crossed {
            return false;
        }
        if cumulative.abs() < margin.abs() && label_changed {
            return false;
        }
    }
    true
}

/// Fraction of steps where the two trajectories moved in the same
/// direction, over steps where both directions are defined. `None` when
/// no step has both directions defined.
pub fn shared_pid_fraction(
    trajectory_v: &[TrajectoryStep],
    trajectory_vp: &[TrajectoryStep],
) -> Option<f64> {
    let mut both = 0usize;
    let mut shared = 0usize;
    for (a, b) in trajectory_v.iter().zip(trajectory_vp) {
        if let (Some(pa), Some(pb)) = (a.pid, b.pid) {
            both += 1;
            if pa == pb {
                shared += 1;
            }
        }
    }
    (both > 0).then(|| shared as f64 / both as f64)
}

//! Weight functions for the moving least squares fit.

/// Regularized weight (interpolating behaviour):
///
/// w(r) = [ ((r/r_sd)^2 + eps)^-2 - (1 + eps)^-2 ] / [ eps^-2 - (1 + eps)^-2 ]
///
/// equal to 1 at r = 0, 0 at r = r_sd, and 0 beyond. The smaller eps, the
/// closer the weight is to a Kronecker delta at the nodes; eps must stay
/// above the square root of machine precision for numerical stability.
pub fn weight_regularized(r: f64, r_sd: f64, epsilon: f64) -> f64 {
    debug_assert!(r >= 0.0 && r_sd > 0.0 && epsilon > 0.0);
    if r > r_sd {
        return 0.0;
    }
    let q = (r / r_sd) * (r / r_sd);
    regularized_from_q(q, epsilon)
}

fn inv_sq(x: f64) -> f64 {
    1.0 / (x * x)
}

fn regularized_from_q(q: f64, epsilon: f64) -> f64 {
    let num = inv_sq(q + epsilon) - inv_sq(1.0 + epsilon);
    let den = inv_sq(epsilon) - inv_sq(1.0 + epsilon);
    num / den
}

/// Weight kind used when assembling shape functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightKind {
    /// Regularized weight; gives (for practical purposes) interpolating
    /// shape functions.
    Regularized { epsilon: f64 },
    /// Truncated Gaussian with shape parameter c = r_sd / 3. Comparison
    /// only; not interpolating.
    Exponential,
}

impl WeightKind {
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            WeightKind::Regularized { epsilon } => Some(*epsilon),
            WeightKind::Exponential => None,
        }
    }

    /// Weight and gradient factor at squared normalized distance
    /// q = (r / r_sd)^2. In support-local coordinates y = (x - c)/r_sd the
    /// weight gradient is g * (y - y_i) with the returned g.
    pub(crate) fn eval(self, q: f64) -> (f64, f64) {
        match self {
            WeightKind::Regularized { epsilon } => {
                let den = inv_sq(epsilon) - inv_sq(1.0 + epsilon);
                let w = (inv_sq(q + epsilon) - inv_sq(1.0 + epsilon)) / den;
                let t = q + epsilon;
                let dwdq = -2.0 / (t * t * t) / den;
                (w, 2.0 * dwdq)
            }
            WeightKind::Exponential => {
                // (r_sd / c)^2 = 9
                let floor = (-9.0f64).exp();
                let den = 1.0 - floor;
                let e = (-9.0 * q).exp();
                let w = (e - floor) / den;
                let dwdq = -9.0 * e / den;
                (w, 2.0 * dwdq)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regularized_is_one_at_zero_distance() {
        assert_eq!(weight_regularized(0.0, 0.03, 1e-5), 1.0);
    }

    #[test]
    fn regularized_vanishes_at_and_beyond_support_radius() {
        assert_eq!(weight_regularized(0.03, 0.03, 1e-5), 0.0);
        assert_eq!(weight_regularized(0.031, 0.03, 1e-5), 0.0);
        assert_eq!(weight_regularized(5.0, 0.03, 1e-5), 0.0);
    }

    #[test]
    fn regularized_is_continuous_at_the_cutoff() {
        let w = weight_regularized(0.03 * (1.0 - 1e-9), 0.03, 1e-5);
        assert!(w.abs() < 1e-7, "w just inside the cutoff was {w}");
    }

    #[test]
    fn regularized_matches_extended_precision_oracle_at_half_radius() {
        // Frozen from a 40-digit evaluation of the weight formula at
        // r = 0.5 r_sd, eps = 1e-5.
        let expected = 1.499874007799575e-9;
        let w = weight_regularized(0.5, 1.0, 1e-5);
        assert_relative_eq!(w, expected, max_relative = 1e-14);
        // Radius scale invariance: only r/r_sd enters.
        let w2 = weight_regularized(0.015, 0.03, 1e-5);
        assert_relative_eq!(w2, expected, max_relative = 1e-14);
    }

    #[test]
    fn regularized_slope_matches_finite_differences() {
        let eps = 1e-5;
        let kind = WeightKind::Regularized { epsilon: eps };
        for q in [0.01, 0.1, 0.3, 0.7] {
            let h = 1e-8;
            let (wp, _) = kind.eval(q + h);
            let (wm, _) = kind.eval(q - h);
            let (_, g) = kind.eval(q);
            // g = 2 dw/dq
            assert_relative_eq!(g / 2.0, (wp - wm) / (2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn exponential_weight_endpoints() {
        let (w0, _) = WeightKind::Exponential.eval(0.0);
        let (w1, _) = WeightKind::Exponential.eval(1.0);
        assert_relative_eq!(w0, 1.0, epsilon = 1e-15);
        assert!(w1.abs() < 1e-15);
    }
}

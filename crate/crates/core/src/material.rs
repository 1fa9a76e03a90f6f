//! Neo-Hookean hyperelastic constitutive law.
//!
//! Strain energy density:
//!
//!   W = (mu/2) (I1_bar - 3) + (kappa/2) (J - 1)^2,
//!
//! with J = det F and I1_bar = J^(-2/3) tr(F' F). The second Piola-Kirchhoff
//! stress follows from S = 2 dW/dC:
//!
//!   S = mu J^(-2/3) (I - (tr C / 3) C^-1) + kappa J (J - 1) C^-1.
//!
//! The closed form is cross-validated two independent ways: central finite
//! differences of W in C, and the principal-stress specialization used by the
//! uniaxial analytical solution.

use nalgebra::Matrix3;

use crate::{Error, Result};

/// Neo-Hookean parameters derived from engineering constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Young's modulus (Pa).
    pub e: f64,
    /// Poisson ratio.
    pub nu: f64,
    /// Density (kg/m^3).
    pub rho: f64,
    /// Shear modulus mu = E / (2 (1 + nu)) (Pa).
    pub mu: f64,
    /// Bulk modulus kappa = E / (3 (1 - 2 nu)) (Pa).
    pub kappa: f64,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64, rho: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("Young's modulus must be positive, got {e}")));
        }
        if !(nu > -1.0 && nu < 0.5) {
            return Err(Error::Config(format!(
                "Poisson ratio must lie in (-1, 0.5), got {nu}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config(format!("density must be positive, got {rho}")));
        }
        let mu = e / (2.0 * (1.0 + nu));
        let kappa = e / (3.0 * (1.0 - 2.0 * nu));
        if !(mu.is_finite() && kappa.is_finite()) {
            return Err(Error::Config("derived moduli are not finite".into()));
        }
        Ok(Self { e, nu, rho, mu, kappa })
    }

    /// First Lame parameter, kappa - 2 mu / 3.
    pub fn lame_lambda(&self) -> f64 {
        self.kappa - 2.0 * self.mu / 3.0
    }

    /// Dilatational wave speed sqrt((lambda + 2 mu) / rho) (m/s).
    pub fn dilatational_wave_speed(&self) -> f64 {
        ((self.lame_lambda() + 2.0 * self.mu) / self.rho).sqrt()
    }

    /// Shear wave speed sqrt(mu / rho) (m/s).
    pub fn shear_wave_speed(&self) -> f64 {
        (self.mu / self.rho).sqrt()
    }
}

/// Volume ratio J = det F.
pub fn volume_ratio(f: &Matrix3<f64>) -> f64 {
    f.determinant()
}

/// Strain energy density W(F) in Pa. Fails for inverted states (J <= 0).
pub fn strain_energy(f: &Matrix3<f64>, m: &MaterialParams) -> Result<f64> {
    let j = volume_ratio(f);
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian { j });
    }
    let c = f.transpose() * f;
    strain_energy_of_c(&c, j, m)
}

fn strain_energy_of_c(c: &Matrix3<f64>, j: f64, m: &MaterialParams) -> Result<f64> {
    let cbrt = j.cbrt();
    let i1_bar = c.trace() / (cbrt * cbrt);
    Ok(m.mu / 2.0 * (i1_bar - 3.0) + m.kappa / 2.0 * (j - 1.0) * (j - 1.0))
}

/// Second Piola-Kirchhoff stress S = 2 dW/dC (Pa), exactly symmetric as
/// computed. Fails for inverted states.
pub fn second_pk_stress(f: &Matrix3<f64>, m: &MaterialParams) -> Result<Matrix3<f64>> {
    let j = volume_ratio(f);
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian { j });
    }
    let c = f.transpose() * f;
    let c_inv = c
        .try_inverse()
        .ok_or(Error::NonPositiveJacobian { j })?;
    // C and its inverse are symmetric; symmetrize away round-off so S is
    // symmetric bit for bit.
    let c_inv = (c_inv + c_inv.transpose()) * 0.5;
    let cbrt = j.cbrt();
    let j_m23 = 1.0 / (cbrt * cbrt);
    let dev = Matrix3::identity() - c_inv * (c.trace() / 3.0);
    Ok(dev * (m.mu * j_m23) + c_inv * (m.kappa * j * (j - 1.0)))
}

/// Principal Cauchy stresses (sigma_11 = sigma_22, sigma_33) of the uniaxial
/// state with axial stretch `lambda` and volume ratio `j`:
///
///   sigma_11 = mu / (3 J^(5/3)) (J / lambda - lambda^2) + kappa (J - 1)
///   sigma_33 = 2 mu / (3 J^(5/3)) (lambda^2 - J / lambda) + kappa (J - 1)
pub fn principal_cauchy_uniaxial(lambda: f64, j: f64, m: &MaterialParams) -> (f64, f64) {
    debug_assert!(lambda > 0.0 && j > 0.0);
    let j53 = j * j.cbrt() * j.cbrt();
    let dev = j / lambda - lambda * lambda;
    let vol = m.kappa * (j - 1.0);
    let s11 = m.mu / (3.0 * j53) * dev + vol;
    let s33 = 2.0 * m.mu / (3.0 * j53) * (-dev) + vol;
    (s11, s33)
}

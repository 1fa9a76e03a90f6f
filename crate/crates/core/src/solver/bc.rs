//! Essential boundary conditions and their displacement programs.

use nalgebra::{Point3, Vector3};

use crate::cloud::NodeCloud;

/// 3-4-5 polynomial loading ramp: zero velocity and acceleration at both
/// ends, u(0) = 0, u(T) = u_max, held at u_max afterwards.
pub fn smooth_ramp(t: f64, duration: f64, u_max: f64) -> f64 {
    u_max * ramp_fraction(t, duration)
}

pub(crate) fn ramp_fraction(t: f64, duration: f64) -> f64 {
    debug_assert!(duration > 0.0);
    if t <= 0.0 {
        return 0.0;
    }
    if t >= duration {
        return 1.0;
    }
    let tau = t / duration;
    let t3 = tau * tau * tau;
    t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Displacement program of one boundary condition.
#[derive(Debug, Clone)]
pub enum BcProgram {
    /// Hold zero displacement.
    Fixed,
    /// Ramp every node of the set to the same target vector over `duration`.
    Ramp { target: Vector3<f64>, duration: f64 },
    /// Rigid rotation of the set about an axis through `center`, the angle
    /// following the smooth ramp profile up to `angle` radians:
    /// u(p) = R(theta) (p - c) - (p - c).
    Torsion {
        axis: Axis,
        center: Point3<f64>,
        angle: f64,
        duration: f64,
    },
}

impl BcProgram {
    pub fn duration(&self) -> f64 {
        match self {
            BcProgram::Fixed => 0.0,
            BcProgram::Ramp { duration, .. } | BcProgram::Torsion { duration, .. } => *duration,
        }
    }
}

/// A node set with a per-axis constraint mask and a displacement program.
/// Masked components of `u_next` are overwritten with the program value after
/// every step; interpolating shape functions make this imposition exact.
#[derive(Debug, Clone)]
pub struct BoundaryCondition {
    pub name: String,
    pub nodes: Vec<usize>,
    pub mask: [bool; 3],
    pub program: BcProgram,
    /// Reference offsets p - c for the torsion program, one per node.
    offsets: Vec<Vector3<f64>>,
}

impl BoundaryCondition {
    pub fn fixed(name: impl Into<String>, nodes: Vec<usize>, mask: [bool; 3]) -> Self {
        Self {
            name: name.into(),
            nodes,
            mask,
            program: BcProgram::Fixed,
            offsets: Vec::new(),
        }
    }

    pub fn ramp(
        name: impl Into<String>,
        nodes: Vec<usize>,
        mask: [bool; 3],
        target: Vector3<f64>,
        duration: f64,
    ) -> Self {
        Self {
            name: name.into(),
            nodes,
            mask,
            program: BcProgram::Ramp { target, duration },
            offsets: Vec::new(),
        }
    }

    pub fn torsion(
        name: impl Into<String>,
        nodes: Vec<usize>,
        cloud: &NodeCloud,
        axis: Axis,
        center: Point3<f64>,
        angle: f64,
        duration: f64,
    ) -> Self {
        let offsets = nodes.iter().map(|&i| cloud.coord(i) - center).collect();
        Self {
            name: name.into(),
            nodes,
            mask: [true; 3],
            program: BcProgram::Torsion {
                axis,
                center,
                angle,
                duration,
            },
            offsets,
        }
    }

    /// Prescribed displacement of the k-th node of the set at time `t`.
    pub fn displacement_at(&self, k: usize, t: f64) -> Vector3<f64> {
        match &self.program {
            BcProgram::Fixed => Vector3::zeros(),
            BcProgram::Ramp { target, duration } => target * ramp_fraction(t, *duration),
            BcProgram::Torsion {
                axis,
                angle,
                duration,
                ..
            } => {
                let theta = angle * ramp_fraction(t, *duration);
                let (sin, cos) = theta.sin_cos();
                let r = self.offsets[k];
                // Rotation in the plane perpendicular to the axis.
                let (a, b) = match axis {
                    Axis::X => (1, 2),
                    Axis::Y => (2, 0),
                    Axis::Z => (0, 1),
                };
                let mut u = Vector3::zeros();
                u[a] = cos * r[a] - sin * r[b] - r[a];
                u[b] = sin * r[a] + cos * r[b] - r[b];
                u
            }
        }
    }

    /// Overwrites constrained components of `u` with the program value.
    pub fn apply(&self, u: &mut [Vector3<f64>], t: f64) {
        for (k, &node) in self.nodes.iter().enumerate() {
            let value = self.displacement_at(k, t);
            for axis in 0..3 {
                if self.mask[axis] {
                    u[node][axis] = value[axis];
                }
            }
        }
    }
}

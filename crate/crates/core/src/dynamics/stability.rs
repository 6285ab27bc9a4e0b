//! Linear stability of the admittance loop closed through a partner modelled
//! as a mass-spring-damper.
//!
//! Per axis, the robot admittance `M_d s + K_d` acts on velocity, the partner
//! load `M_h s² + D_h s + K_h` acts on position, the actuator contributes a
//! first-order lag `1 / (T_a s + 1)` and the force feedback delay `e^{-sT}` is
//! replaced by its first-order Padé approximant. The closed loop is
//!
//! ```text
//! s (M_d s + K_d)(T_a s + 1)(1 + sT/2) + (1 − sT/2)(M_h s² + D_h s + K_h) = 0
//! ```
//!
//! Without stiffness the constant term vanishes and the loop keeps a simple
//! pole at the origin: the velocity-level controller lets position drift.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{HumanParams, RobotParams};
use crate::error::{invalid, Error, Result};

/// Real-part margin below which a pole counts as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanarAxis {
    X,
    Y,
    Phi,
}

impl PlanarAxis {
    pub fn index(self) -> usize {
        self as usize
    }
}

// Polynomials are stored highest degree first.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    for (i, x) in b.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    out
}

fn trim_leading(mut p: Vec<f64>) -> Vec<f64> {
    let first = p.iter().position(|c| *c != 0.0).unwrap_or(p.len());
    p.drain(..first);
    p
}

/// Closed-loop characteristic polynomial for one planar axis, highest degree
/// first, with exact zero leading terms removed.
pub fn characteristic_polynomial(
    robot: &RobotParams,
    human: &HumanParams,
    axis: PlanarAxis,
) -> Vec<f64> {
    let k = axis.index();
    let m_d = robot.inertia[k];
    let k_d = robot.damping[k];
    let half_delay = robot.loop_delay / 2.0;

    let robot_side = poly_mul(
        &poly_mul(&[m_d, k_d, 0.0], &[robot.actuator_lag, 1.0]),
        &[half_delay, 1.0],
    );
    let human_side = poly_mul(
        &[-half_delay, 1.0],
        &[human.mass, human.damping, human.stiffness],
    );
    trim_leading(poly_add(&robot_side, &human_side))
}

/// Horner evaluation at a complex point.
pub fn evaluate(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn evaluate_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    coeffs
        .iter()
        .fold((zero, zero), |(p, dp), c| (p * z + c, dp * z + p))
}

/// All complex roots of a real polynomial (highest degree first).
///
/// Roots come from the eigenvalues of the companion matrix and are then
/// polished by Newton iteration on the original coefficients. Exact zero
/// trailing coefficients are deflated as exact roots at the origin.
pub fn poles(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(invalid("polynomial coefficients must be finite"));
    }
    let p = trim_leading(coeffs.to_vec());
    if p.is_empty() {
        return Err(Error::ZeroPolynomial);
    }
    let zeros_at_origin = p.iter().rev().take_while(|c| **c == 0.0).count();
    let reduced = &p[..p.len() - zeros_at_origin];
    let degree = reduced.len() - 1;

    let mut roots = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
    match degree {
        0 => {}
        1 => roots.push(Complex64::new(-reduced[1] / reduced[0], 0.0)),
        _ => {
            let lead = reduced[0];
            let companion = DMatrix::from_fn(degree, degree, |i, j| {
                if i == 0 {
                    -reduced[j + 1] / lead
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            for z in companion.complex_eigenvalues().iter() {
                roots.push(polish(reduced, *z));
            }
        }
    }
    Ok(roots)
}

fn polish(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let mut best = evaluate(coeffs, z).norm();
    for _ in 0..60 {
        let (p, dp) = evaluate_with_derivative(coeffs, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        let r = evaluate(coeffs, next).norm();
        if !(r < best) {
            break;
        }
        best = r;
        z = next;
    }
    z
}

/// Stability classification of a pole set, treating one simple pole exactly
/// at the origin as the designed velocity-level drift.
pub fn classify_poles(roots: &[Complex64]) -> (f64, bool) {
    let max_real = roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let at_origin = roots.iter().filter(|z| z.re == 0.0 && z.im == 0.0).count();
    let rest = roots
        .iter()
        .filter(|z| !(z.re == 0.0 && z.im == 0.0))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    (max_real, at_origin <= 1 && rest < STABILITY_MARGIN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub kh_axis: Vec<f64>,
    pub dh_axis: Vec<f64>,
    /// `max_real[i][j]` for `kh_axis[i]`, `dh_axis[j]`.
    pub max_real: Vec<Vec<f64>>,
    pub stable: Vec<Vec<bool>>,
}

impl StabilityGrid {
    /// Smallest sampled stiffness that is unstable for damping column `j`.
    pub fn threshold(&self, j: usize) -> Option<f64> {
        (0..self.kh_axis.len())
            .find(|&i| !self.stable[i][j])
            .map(|i| self.kh_axis[i])
    }

    /// Smallest unstable stiffness over all damping columns.
    pub fn min_threshold(&self) -> Option<f64> {
        (0..self.dh_axis.len())
            .filter_map(|j| self.threshold(j))
            .reduce(f64::min)
    }

    pub fn unstable_count(&self) -> usize {
        self.stable.iter().flatten().filter(|s| !**s).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kh,dh,max_real,stable")?;
        for (i, kh) in self.kh_axis.iter().enumerate() {
            for (j, dh) in self.dh_axis.iter().enumerate() {
                writeln!(
                    w,
                    "{kh},{dh},{},{}",
                    self.max_real[i][j],
                    u8::from(self.stable[i][j])
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Sweep partner stiffness and damping and record the dominant pole.
pub fn stability_map(
    robot: &RobotParams,
    human: &HumanParams,
    axis: PlanarAxis,
    kh_range: (f64, f64),
    dh_range: (f64, f64),
    dims: (usize, usize),
) -> Result<StabilityGrid> {
    if dims.0 < 2 || dims.1 < 2 {
        return Err(invalid(
            "stability grid needs at least two samples per axis",
        ));
    }
    if !(0.0 <= kh_range.0 && kh_range.0 < kh_range.1)
        || !(0.0 <= dh_range.0 && dh_range.0 < dh_range.1)
    {
        return Err(invalid(
            "stiffness and damping ranges must be non-negative and increasing",
        ));
    }
    let kh_axis = linspace(kh_range.0, kh_range.1, dims.0);
    let dh_axis = linspace(dh_range.0, dh_range.1, dims.1);
    let mut max_real = vec![vec![0.0; dims.1]; dims.0];
    let mut stable = vec![vec![false; dims.1]; dims.0];
    for (i, kh) in kh_axis.iter().enumerate() {
        for (j, dh) in dh_axis.iter().enumerate() {
            let h = HumanParams {
                mass: human.mass,
                stiffness: *kh,
                damping: *dh,
            };
            let roots = poles(&characteristic_polynomial(robot, &h, axis))?;
            let (m, s) = classify_poles(&roots);
            max_real[i][j] = m;
            stable[i][j] = s;
        }
    }
    Ok(StabilityGrid {
        kh_axis,
        dh_axis,
        max_real,
        stable,
    })
}

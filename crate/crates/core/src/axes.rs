//! The seven-dimensional motion space: planar base motion (x, y, heading φ)
//! followed by the four upper-body joints (q1..q4).

/// Number of motion-space axes.
pub const DOF: usize = 7;

/// Number of leading axes that carry planar contact forces (x, y, φ).
pub const PLANAR: usize = 3;

pub type Vec7 = [f64; DOF];

pub const ZERO: Vec7 = [0.0; DOF];

/// Column names used by every CSV export, in axis order.
pub const AXIS_NAMES: [&str; DOF] = ["x", "y", "phi", "q1", "q2", "q3", "q4"];

pub fn is_finite(v: &Vec7) -> bool {
    v.iter().all(|c| c.is_finite())
}

pub fn sub(a: &Vec7, b: &Vec7) -> Vec7 {
    std::array::from_fn(|i| a[i] - b[i])
}

pub fn add_scaled(a: &Vec7, b: &Vec7, s: f64) -> Vec7 {
    std::array::from_fn(|i| a[i] + s * b[i])
}

pub fn scale(a: &Vec7, s: f64) -> Vec7 {
    std::array::from_fn(|i| a[i] * s)
}

pub fn planar(v: &Vec7) -> [f64; PLANAR] {
    [v[0], v[1], v[2]]
}

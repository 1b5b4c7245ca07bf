#![allow(dead_code)]

use htcontrol::model::random_state;
use htcontrol::{ModeShape, StateVector, C64};

pub fn random(n: usize, d: usize, seed: u64) -> StateVector {
    random_state(ModeShape::new(n, d).unwrap(), seed).unwrap()
}

pub fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

// SPDX-License-Identifier: Apache-2.0

//! Inputs shared by the criterion benchmarks in `benches/`.

use cgolab::potential::DEFAULT_PERIOD;
use cgolab::{Conductivity, Field, FrequencyGrid, ProfileSpec, Zeta};

pub struct Fixture {
    pub grid: FrequencyGrid,
    pub cond: Conductivity,
    pub zeta: Zeta,
    /// Smooth non-band-limited test function, physical representation.
    pub field: Field,
}

pub fn fixture(n: usize, s: f64) -> Fixture {
    let grid = FrequencyGrid::new(3, n, DEFAULT_PERIOD).expect("bench grid");
    let cond = Conductivity::from_profile(&grid, &ProfileSpec::smooth_bump()).expect("bench profile");
    let zeta = Zeta::from_frame(s, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).expect("bench frame");
    let field = Field::from_real_fn(&grid, |x| (-(x[0] - 3.0).powi(2) - x[1].sin()).exp());
    Fixture { grid, cond, zeta, field }
}

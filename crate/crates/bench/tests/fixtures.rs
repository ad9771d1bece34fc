// SPDX-License-Identifier: Apache-2.0

use cgolab::cgo::solve_psi;
use cgolab::{Representation, SolverConfig};
use cgolab_bench::fixture;

#[test]
fn fixtures_are_solvable() {
    let fx = fixture(16, 16.0);
    assert_eq!(fx.field.representation(), Representation::Physical);
    assert_eq!(fx.grid.len(), 16 * 16 * 16);
    let (_, rep) = solve_psi(&fx.cond, &fx.zeta, &SolverConfig::default()).unwrap();
    assert!(rep.converged);
}

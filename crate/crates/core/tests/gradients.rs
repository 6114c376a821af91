//! Tape gradients of every training loss against central finite differences at random points.

mod common;

use common::grad;

#[test]
fn reconstruction() {
    let e = grad::reconstruction();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn forecast() {
    let e = grad::forecast();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn adversarial_pair() {
    let e = grad::adversarial_pair();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn moments() {
    let e = grad::moments();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn mode_seeking() {
    let e = grad::mode_seeking();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn divergence() {
    let e = grad::divergence();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn generator_network() {
    let e = grad::generator_network();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn pinball() {
    let e = grad::pinball();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn belief_network() {
    let e = grad::belief_network();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn td() {
    let e = grad::td();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn adversary_q() {
    let e = grad::adversary_q();
    assert!(e < grad::TOL, "relative error {e:e}");
}

#[test]
fn supervised_policy() {
    let e = grad::supervised_policy();
    assert!(e < grad::TOL, "relative error {e:e}");
}

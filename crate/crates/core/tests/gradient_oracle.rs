//! Backward pass against reverse-mode differentiation of the unrolled graph.

mod common;

#[test]
fn backward_matches_tape_on_small_instances() {
    let nonzero = common::oracle_check(50, 0x5eed).unwrap();
    // the comparison is only meaningful if gradients actually flow
    assert!(nonzero >= 40, "only {nonzero} instances had non-zero gradients");
}

#[test]
fn tape_differentiates_a_known_expression() {
    let mut tape = common::Tape::default();
    let x = tape.leaf(3.0);
    let y = tape.leaf(-2.0);
    let xy = tape.mul(x, y);
    let s = tape.lin(&[(xy, 2.0), (x, 1.0)]);
    let out = tape.square(s);
    // out = (2xy + x)^2 = (-12 + 3)^2
    assert_eq!(tape.value(out), 81.0);
    let adj = tape.grad(out);
    // d/dx = 2(2xy + x)(2y + 1), d/dy = 2(2xy + x)(2x)
    assert_eq!(adj[x], 2.0 * -9.0 * -3.0);
    assert_eq!(adj[y], 2.0 * -9.0 * 6.0);
}

//! Dual-channel reverse-mode differentiation on a tiny function.
//!
//! Every tape node carries a value and a time tangent. One backward pass on
//! the value channel gives parameter gradients; `tangent_of` turns the time
//! derivative into an ordinary node, so a loss may contain both `F(t)` and
//! `dF/dt` and still be differentiated with respect to the parameters.

use nfg::autodiff::Channel;
use nfg::{Dual, Tape};

fn main() -> nfg::Result<()> {
    // Forward mode alone: d/dt of 1 − exp(−θ t) at t = 2 with θ = 0.7.
    let theta = 0.7;
    let t = Dual::new(2.0, 1.0);
    let f = Dual::constant(1.0) - (-(t * Dual::constant(theta))).exp();
    println!("F(2) = {:.6}, dF/dt = {:.6} (closed form {:.6})", f.value, f.tangent, theta * (-theta * 2.0).exp());

    // Reverse over forward: the log density ln(dF/dt) differentiated w.r.t. θ.
    let tape = Tape::new();
    let th = tape.scalar(theta, 0.0);
    let time = tape.constant_dual(Dual::new(2.0, 1.0));
    let one = tape.constant(1.0);
    let cif = tape.sub(one, tape.exp(tape.neg(tape.mul(th, time))));
    let density = tape.tangent_of(cif);
    let log_density = tape.ln(density)?;
    let grad = tape.backward_channel(log_density, Channel::Value)?;
    // ln(θ e^{−θt}) = ln θ − θ t, so the derivative is 1/θ − t.
    println!(
        "d ln f / dθ = {:.6} (closed form {:.6}); tape holds {} nodes",
        grad.wrt(th),
        1.0 / theta - 2.0,
        tape.len()
    );
    Ok(())
}

//! Minimal dense neural-network toolkit: a reverse-mode tape, layer descriptors, parameter
//! sets and an Adam optimiser. All arithmetic is `f64` and single-threaded so training is
//! bit-reproducible under a fixed seed.

mod layers;
mod params;
mod tape;
mod tensor;

pub use layers::{Activation, LayerNorm, Linear, Lstm, Mlp};
pub use params::{Adam, Params};
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Clamp applied to every logit entering a cross-entropy.
pub const LOGIT_CLAMP: f64 = 15.0;

/// Binary cross-entropy against a constant label, on clamped logits, averaged over entries.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, label: f64) -> Var {
    let z = tape.clamp(logits, -LOGIT_CLAMP, LOGIT_CLAMP);
    // BCE(z, y) = softplus(z) - y z
    let sp = tape.softplus(z);
    let per = if label == 0.0 {
        sp
    } else {
        let yz = tape.scale(z, label);
        tape.sub(sp, yz)
    };
    tape.mean(per)
}

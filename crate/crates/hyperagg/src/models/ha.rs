//! The HyperAggregation operator.
//!
//! A two-layer hypernetwork with trainable weights W_A (h x h) and
//! W_B (h x m) emits `w_tar`, a weight matrix sized n x m for the current
//! n-row neighborhood. The bias-free target network then channel-mixes the
//! transposed input with `w_tar` in its first layer and `w_tar` transposed
//! in its second, tying both layers to one hypernetwork output.

use rand::Rng;

use crate::error::{HgError, Result};
use crate::tensor::{Tape, Var};

/// Tape handles for one HA instance's parameters.
pub struct HaVars {
    pub w_a: Var,
    pub w_b: Var,
    /// (gain, bias) for the norm before the target network, when enabled.
    pub pre_ln: Option<(Var, Var)>,
    /// (gain, bias) for the norm after the target network, when enabled.
    pub post_ln: Option<(Var, Var)>,
}

/// Placement flags and rates; norms are implied by `HaVars`.
#[derive(Debug, Clone, Copy)]
pub struct HaSettings {
    pub pre_activation: bool,
    pub pre_dropout: f64,
    pub post_dropout: f64,
    pub mixing_dropout: f64,
}

/// Trainable scalar count of the aggregation core: W_A and W_B only, no
/// hidden biases.
pub fn ha_core_param_count(hidden: usize, mixing: usize) -> usize {
    hidden * hidden + hidden * mixing
}

/// Aggregates an n x h neighborhood embedding matrix into n x h.
pub fn hyper_aggregate(
    tape: &mut Tape,
    xn: Var,
    vars: &HaVars,
    settings: &HaSettings,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Var> {
    let (n, _) = tape.shape(xn);
    if n == 0 {
        return Err(HgError::EmptyNeighborhood);
    }

    let mut x = xn;
    if settings.pre_activation {
        x = tape.gelu(x);
    }
    if let Some((gain, bias)) = vars.pre_ln {
        x = tape.layer_norm(x, gain, bias)?;
    }
    if settings.pre_dropout > 0.0 {
        x = tape.dropout(x, settings.pre_dropout, training, rng)?;
    }

    // hypernetwork: w_tar = gelu(x W_A) W_B, one row per neighborhood member
    let hidden = tape.matmul(x, vars.w_a)?;
    let hidden = tape.gelu(hidden);
    let w_tar = tape.matmul(hidden, vars.w_b)?;

    // target network input, optionally thinned by mixing dropout
    let mut mix_in = x;
    if settings.mixing_dropout > 0.0 {
        mix_in = tape.dropout(mix_in, settings.mixing_dropout, training, rng)?;
    }
    let xt = tape.transpose(mix_in);
    let first = tape.matmul(xt, w_tar)?;
    let first = tape.gelu(first);
    let w_tar_t = tape.transpose(w_tar);
    let second = tape.matmul(first, w_tar_t)?;
    let mut out = tape.transpose(second);

    if let Some((gain, bias)) = vars.post_ln {
        out = tape.layer_norm(out, gain, bias)?;
    }
    if settings.post_dropout > 0.0 {
        out = tape.dropout(out, settings.post_dropout, training, rng)?;
    }
    Ok(out)
}

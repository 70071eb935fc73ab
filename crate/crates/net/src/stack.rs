//! Predefined and continuous stacks generated from a single image.

use std::str::FromStr;

use evhdr_core::{EvStep, LdrImage, LdrStack};

use crate::error::{NetError, Result};
use crate::model::{forward_batch, select_model, Direction, ModelWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StackMode {
    /// Integer EVs −3..=3.
    Predefined,
    /// Half-EV steps −3..=3.
    Continuous,
}

impl FromStr for StackMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "predefined" => Ok(StackMode::Predefined),
            "continuous" => Ok(StackMode::Continuous),
            _ => Err(format!("unknown stack mode '{s}' (expected predefined or continuous)")),
        }
    }
}

pub fn preset_evs(mode: StackMode) -> Vec<EvStep> {
    let step = match mode {
        StackMode::Predefined => 1.0,
        StackMode::Continuous => 0.5,
    };
    let n = (6.0 / step) as i32;
    (0..=n).map(|i| EvStep::new(-3.0 + i as f64 * step).expect("finite")).collect()
}

/// Generates every EV directly from `input`; EV 0 is `input` itself.
/// Non-zero EVs of one sign are run through their model as one batch.
pub fn generate_stack(
    increase: Option<&ModelWeights>,
    decrease: Option<&ModelWeights>,
    input: &LdrImage,
    evs: &[EvStep],
) -> Result<LdrStack> {
    if evs.is_empty() {
        return Err(NetError::Core(evhdr_core::Error::InvalidArgument("no EVs requested".into())));
    }
    if evs.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(NetError::Core(evhdr_core::Error::InvalidArgument("EVs must be strictly increasing".into())));
    }
    let mut entries = Vec::with_capacity(evs.len());
    for dir in [Direction::Decrease, Direction::Increase] {
        let group: Vec<EvStep> = evs.iter().copied().filter(|e| dir.accepts(e.value())).collect();
        let Some(&first) = group.first() else { continue };
        let w = select_model(increase, decrease, first)?.expect("non-zero EV");
        for chunk in group.chunks(8) {
            let inputs = vec![input.clone(); chunk.len()];
            let out = forward_batch(w, &inputs, chunk)?;
            entries.extend(chunk.iter().copied().zip(out));
        }
    }
    if evs.iter().any(|e| e.is_zero()) {
        entries.push((EvStep::ZERO, input.clone()));
    }
    Ok(LdrStack::new(entries)?)
}

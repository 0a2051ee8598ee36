use rand::RngCore;

use super::model::NpModel;
use super::train::sanitize;
use crate::env::{EnvState, Protocol, UeAction, NUM_UES};
use crate::error::Result;
use crate::kpi::{Diagnostics, Footprint};

/// Greedy execution of a trained model. Access or Discard on an empty
/// buffer is replaced by Silence and counted.
#[derive(Clone, Debug)]
pub struct NpmPolicy {
    model: NpModel,
    diagnostics: Diagnostics,
}

impl NpmPolicy {
    pub fn new(model: NpModel) -> Self {
        Self { model, diagnostics: Diagnostics::default() }
    }

    pub fn model(&self) -> &NpModel {
        &self.model
    }

    /// Raw greedy actions without substitution.
    pub fn greedy(&self, b: [usize; NUM_UES]) -> Result<[UeAction; NUM_UES]> {
        Ok(self.model.full_cycle_forward(b)?.actions)
    }

    /// 32-bit float CMs on both links, the stored weight file, and
    /// multiply-add FLOPs of one cycle.
    pub fn footprint(&self) -> Footprint {
        Footprint {
            cm_bits: (32 * self.model.cm_width()) as u64,
            model_bytes: super::io::save_npm(&self.model).len() as u64,
            inference_flops: self.model.inference_flops(),
        }
    }
}

impl Protocol for NpmPolicy {
    fn decide(&mut self, state: &EnvState, _rng: &mut dyn RngCore) -> Result<[UeAction; NUM_UES]> {
        let raw = self.greedy(state.buffers)?;
        let (applied, fixed) = sanitize(raw, state.buffers);
        self.diagnostics.invalid_substitutions += fixed as u64;
        Ok(applied)
    }

    fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }
}

//! Dense tensors, a recording tape for reverse-mode gradients, transformer
//! layers, Adam and the plateau schedule.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use layers::{attention, ffn, layer_norm, linear, mse, multi_head_attention, softmax_rows, HeadVars};
pub use optim::{schedule_step, Adam, AdamConfig, LrSchedule, LrScheduleConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{GradStore, ParamStore, Tensor};

/// Shape and width parameters of the transformer stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 3,
            d_ffn: 128,
        }
    }
}

impl AttentionConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ffn == 0 {
            return Err(crate::Error::Config("transformer widths must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(crate::Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Binds every parameter to a tape leaf, in store order.
pub fn bind_params<T: crate::Real>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    requires_grad: bool,
) -> indexmap::IndexMap<String, Var> {
    params
        .iter()
        .map(|(name, t)| {
            let (r, c) = t.dims2();
            (name.clone(), tape.leaf(r, c, t.values.clone(), requires_grad && t.requires_grad))
        })
        .collect()
}

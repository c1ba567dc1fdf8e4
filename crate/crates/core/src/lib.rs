pub mod cf;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ia;
pub mod io;
pub mod prox;
pub mod spectral;
pub mod synth;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use tensor::{
    BlockFlattening, CMatrix, CsdTensor, FrequencyPartition, FrequencyTensor, InverseCsdTensor,
    MaskKind, SelectionMask, TimeSeriesPanel,
};

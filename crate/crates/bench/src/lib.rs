//! Shared fixtures for the benchmarks.

use mxscale::{generate_tensor, GeneratorSpec, Tensor};

pub fn activations(rows: usize, cols: usize) -> Tensor {
    generate_tensor(&GeneratorSpec::activation_like(rows, cols, 1)).expect("valid spec")
}

pub fn weights(rows: usize, cols: usize) -> Tensor {
    generate_tensor(&GeneratorSpec::weight_like(rows, cols, 2)).expect("valid spec")
}

#pragma once

#include <span>
#include <vector>

#include "densitydist/autodiff.hpp"

// Differentiable primitives over rank-2 tensors. Every op checks shapes and
// throws std::invalid_argument naming the offending shapes.
namespace densitydist::ops {

Var matmul(Var a, Var b);     // a·b
Var matmul_nt(Var a, Var b);  // a·bᵀ
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double factor);
/// Adds a 1×cols row vector to every row of `a`.
Var add_row(Var a, Var row);

Var softmax_rows(Var a);
Var softmax_cols(Var a);

/// Per-row normalization with variance epsilon 1e-5, followed by the affine
/// map gamma∘x̂ + beta with gamma, beta of shape 1×cols.
Var layer_norm_rows(Var a, Var gamma, Var beta);
inline constexpr double kLayerNormEpsilon = 1e-5;

Var relu(Var a);
Var gelu(Var a);  // exact erf form

Var sum(Var a);                   // 1×1
Var sum_axis(Var a, int axis);    // axis 0 → 1×cols, axis 1 → rows×1
Var max_axis(Var a, int axis);    // gradient routed to the first maximal entry

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

/// Mean over the 3×3 neighbourhood of each cell of a row-major grid_h×grid_w
/// lattice (rows of `a` are cells). Border cells average the neighbours that
/// exist.
Var neighbor_mean(Var a, std::size_t grid_h, std::size_t grid_w);

/// Scalar node whose value and input gradients were computed elsewhere
/// (closed-form loss gradients). `grads[i]` must match `inputs[i]`'s shape.
Var external_scalar(std::span<const Var> inputs, double value, std::vector<Tensor> grads);

}  // namespace densitydist::ops

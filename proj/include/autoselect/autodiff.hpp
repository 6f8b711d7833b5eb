#pragma once

#include <functional>
#include <span>
#include <vector>

#include "autoselect/tape.hpp"
#include "autoselect/tensor.hpp"

namespace autoselect {

/// Builds a scalar loss on the tape given one input node per parameter
/// tensor (same order). Rank-1 parameters appear as [n,1] nodes, rank-2
/// as [r,c] nodes.
using LossBuilder = std::function<NodeId(Tape&, std::span<const NodeId>)>;

/// Forward value of the loss at `params`.
double eval_loss(const LossBuilder& f, std::span<const Tensor> params);

/// Reverse-mode gradient, one tensor per parameter, shapes matching.
std::vector<Tensor> grad(const LossBuilder& f, std::span<const Tensor> params,
                         double* loss_out = nullptr);

/// Central finite differences, (f(p+h e_i) - f(p-h e_i)) / 2h per coordinate.
std::vector<Tensor> fd_grad(const LossBuilder& f, std::span<const Tensor> params,
                            double step);

/// Hessian-vector product H*v approximated by central differences of the
/// exact gradient: (grad(p+hv) - grad(p-hv)) / 2h with
/// h = 1e-5 * (1 + max_i ||p_i||_inf).
std::vector<Tensor> hvp(const LossBuilder& f, std::span<const Tensor> params,
                        std::span<const Tensor> direction);

} // namespace autoselect

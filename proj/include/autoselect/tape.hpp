#pragma once

#include <span>
#include <string>
#include <vector>

#include "autoselect/tensor.hpp"

namespace autoselect {

using NodeId = int;

/// Reverse-mode differentiation tape over dense matrices.
///
/// Nodes are appended in execution order, which is by construction a
/// topological order, so one backward sweep in reverse creation order
/// visits every node exactly once. Values are validated for finiteness
/// as they are produced; a NaN/Inf raises NumericError naming the node.
///
/// A tape records one forward computation and is used by one thread;
/// values are immutable once written.
class Tape {
public:
    enum class Op {
        Input,
        Affine,            // x [B,n] * W [n,m] + row-broadcast b [m]
        LstmCell,          // fused gated recurrent cell, output [B,2d] = [h'|c']
        Tanh,
        Sigmoid,
        SliceCols,
        Transpose,
        Add,
        Scale,
        Dot,               // column-vector dot -> 1x1
        Stack,             // k scalar nodes -> [k,1]
        SquaredNorm,       // sum of squares -> 1x1
        Sum,               // sum of entries -> 1x1
        MaskedSqErrPerTask,// per-column masked mean squared error -> [F,1]
        BceMean,           // mean binary cross-entropy with prob clamp -> 1x1
    };

    NodeId input(Matrix v, std::string label = {});
    NodeId affine(NodeId x, NodeId w, NodeId b);
    /// Gate layout along the 4d axis is [input | forget | cell | output]:
    ///   g = x*Wx + h*Wh + b,  c' = sig(g_f).c + sig(g_i).tanh(g_c),
    ///   h' = sig(g_o).tanh(c').
    /// Output packs [h' | c'] side by side; use slice_cols to split.
    NodeId lstm_cell(NodeId x, NodeId h_prev, NodeId c_prev,
                     NodeId wx, NodeId wh, NodeId b);
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId slice_cols(NodeId x, Index first, Index count);
    NodeId transpose(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId dot(NodeId a, NodeId b);
    NodeId stack(std::span<const NodeId> scalars);
    NodeId squared_norm(NodeId x);
    NodeId sum(NodeId x);
    /// preds: one [B,F] node per horizon step. For each column (task) f:
    ///   mse_f = sum_t sum_b mask(b,f)*(pred-target)^2 / max(1, sum mask(.,f)).
    /// Targets and masks are constants of the node, not differentiated.
    NodeId masked_sqerr_per_task(std::span<const NodeId> preds,
                                 std::vector<Matrix> targets,
                                 std::vector<Matrix> masks);
    /// probs [B,1], labels in {0,1}; probs clamped to [1e-7, 1-1e-7].
    NodeId bce_mean(NodeId probs, Vector labels);

    const Matrix& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].val; }
    /// Per-task observed-cell counts of a MaskedSqErrPerTask node.
    Vector observed_counts(NodeId id) const;

    /// Seeds d(root)=1 (root must be 1x1) and sweeps the whole tape once.
    void backward(NodeId root);
    const Matrix& grad(NodeId id);

    size_t node_count() const { return nodes_.size(); }

    static constexpr double kProbClamp = 1e-7;

private:
    struct Node {
        Op op;
        std::vector<NodeId> in;
        Matrix val;
        Matrix grad;
        std::vector<Matrix> aux;  // cached activations / constant operands
        Vector auxv;              // per-column denominators etc.
        double factor = 0.0;      // Scale
        Index i0 = 0, i1 = 0;     // SliceCols
        std::string label;
    };

    NodeId push(Node n);
    void check_finite(NodeId id) const;
    Matrix& g(NodeId id);
    void backward_node(Node& n);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

const char* op_name(Tape::Op op);

} // namespace autoselect

#include "autoselect/tape.hpp"

#include <cmath>

#include "autoselect/errors.hpp"

namespace autoselect {

const char* op_name(Tape::Op op) {
    switch (op) {
        case Tape::Op::Input: return "input";
        case Tape::Op::Affine: return "affine";
        case Tape::Op::LstmCell: return "lstm_cell";
        case Tape::Op::Tanh: return "tanh";
        case Tape::Op::Sigmoid: return "sigmoid";
        case Tape::Op::SliceCols: return "slice_cols";
        case Tape::Op::Transpose: return "transpose";
        case Tape::Op::Add: return "add";
        case Tape::Op::Scale: return "scale";
        case Tape::Op::Dot: return "dot";
        case Tape::Op::Stack: return "stack";
        case Tape::Op::SquaredNorm: return "squared_norm";
        case Tape::Op::Sum: return "sum";
        case Tape::Op::MaskedSqErrPerTask: return "masked_sqerr_per_task";
        case Tape::Op::BceMean: return "bce_mean";
    }
    return "?";
}

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    check_finite(id);
    return id;
}

void Tape::check_finite(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.val.allFinite()) {
        throw NumericError("non-finite value at tape node #" + std::to_string(id) +
                           " (" + op_name(n.op) +
                           (n.label.empty() ? std::string() : " '" + n.label + "'") + ")");
    }
}

NodeId Tape::input(Matrix v, std::string label) {
    Node n{Op::Input, {}, std::move(v), {}, {}, {}, 0.0, 0, 0, std::move(label)};
    return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(w);
    const Matrix& bv = value(b);
    if (xv.cols() != wv.rows() || bv.rows() != wv.cols() || bv.cols() != 1)
        throw ConfigError("affine: shape mismatch");
    Node n{Op::Affine, {x, w, b}, {}, {}, {}, {}, 0.0, 0, 0, {}};
    n.val = (xv * wv).rowwise() + bv.col(0).transpose();
    return push(std::move(n));
}

NodeId Tape::lstm_cell(NodeId x, NodeId h_prev, NodeId c_prev,
                       NodeId wx, NodeId wh, NodeId b) {
    const Matrix& xv = value(x);
    const Matrix& hv = value(h_prev);
    const Matrix& cv = value(c_prev);
    const Matrix& wxv = value(wx);
    const Matrix& whv = value(wh);
    const Matrix& bv = value(b);
    const Index B = xv.rows();
    const Index d = hv.cols();
    if (wxv.rows() != xv.cols() || wxv.cols() != 4 * d || whv.rows() != d ||
        whv.cols() != 4 * d || bv.rows() != 4 * d || bv.cols() != 1 ||
        cv.cols() != d || hv.rows() != B || cv.rows() != B)
        throw ConfigError("lstm_cell: shape mismatch");

    Matrix gates = ((xv * wxv + hv * whv).rowwise() + bv.col(0).transpose());
    Matrix gi = (1.0 / (1.0 + (-gates.leftCols(d).array()).exp())).matrix();
    Matrix gf = (1.0 / (1.0 + (-gates.middleCols(d, d).array()).exp())).matrix();
    Matrix gc = gates.middleCols(2 * d, d).array().tanh().matrix();
    Matrix go = (1.0 / (1.0 + (-gates.rightCols(d).array()).exp())).matrix();

    Matrix c_new = gf.cwiseProduct(cv) + gi.cwiseProduct(gc);
    Matrix tc = c_new.array().tanh().matrix();
    Matrix h_new = go.cwiseProduct(tc);

    Node n{Op::LstmCell, {x, h_prev, c_prev, wx, wh, b}, {}, {}, {}, {}, 0.0, 0, 0, {}};
    n.val.resize(B, 2 * d);
    n.val << h_new, c_new;
    n.aux = {std::move(gi), std::move(gf), std::move(gc), std::move(go), std::move(tc)};
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
    Node n{Op::Tanh, {x}, value(x).array().tanh().matrix(), {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
    Node n{Op::Sigmoid, {x}, (1.0 / (1.0 + (-value(x).array()).exp())).matrix(),
           {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId x, Index first, Index count) {
    const Matrix& xv = value(x);
    if (first < 0 || count <= 0 || first + count > xv.cols())
        throw ConfigError("slice_cols: range out of bounds");
    Node n{Op::SliceCols, {x}, xv.middleCols(first, count), {}, {}, {}, 0.0,
           first, count, {}};
    return push(std::move(n));
}

NodeId Tape::transpose(NodeId x) {
    Node n{Op::Transpose, {x}, value(x).transpose(), {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
        throw ConfigError("add: shape mismatch");
    Node n{Op::Add, {a, b}, value(a) + value(b), {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double s) {
    Node n{Op::Scale, {a}, s * value(a), {}, {}, {}, s, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::dot(NodeId a, NodeId b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols() != 1 || bv.cols() != 1 || av.rows() != bv.rows())
        throw ConfigError("dot: needs equal-length column vectors");
    Node n{Op::Dot, {a, b}, Matrix::Constant(1, 1, av.col(0).dot(bv.col(0))),
           {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::stack(std::span<const NodeId> scalars) {
    Matrix v(static_cast<Index>(scalars.size()), 1);
    Node n{Op::Stack, {}, {}, {}, {}, {}, 0.0, 0, 0, {}};
    for (size_t i = 0; i < scalars.size(); ++i) {
        const Matrix& s = value(scalars[i]);
        if (s.size() != 1) throw ConfigError("stack: inputs must be scalars");
        v(static_cast<Index>(i), 0) = s(0, 0);
        n.in.push_back(scalars[i]);
    }
    n.val = std::move(v);
    return push(std::move(n));
}

NodeId Tape::squared_norm(NodeId x) {
    Node n{Op::SquaredNorm, {x}, Matrix::Constant(1, 1, value(x).squaredNorm()),
           {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    Node n{Op::Sum, {x}, Matrix::Constant(1, 1, value(x).sum()),
           {}, {}, {}, 0.0, 0, 0, {}};
    return push(std::move(n));
}

NodeId Tape::masked_sqerr_per_task(std::span<const NodeId> preds,
                                   std::vector<Matrix> targets,
                                   std::vector<Matrix> masks) {
    if (preds.empty() || preds.size() != targets.size() || preds.size() != masks.size())
        throw ConfigError("masked_sqerr_per_task: horizon mismatch");
    const Index F = value(preds[0]).cols();
    Vector counts = Vector::Zero(F);
    for (size_t t = 0; t < preds.size(); ++t) {
        const Matrix& p = value(preds[t]);
        if (p.rows() != targets[t].rows() || p.cols() != targets[t].cols() ||
            p.rows() != masks[t].rows() || p.cols() != masks[t].cols())
            throw ConfigError("masked_sqerr_per_task: shape mismatch");
        counts += masks[t].colwise().sum().transpose();
    }
    Vector denom = counts.cwiseMax(1.0);
    Matrix mse = Matrix::Zero(F, 1);
    for (size_t t = 0; t < preds.size(); ++t) {
        Matrix err = (value(preds[t]) - targets[t]).cwiseProduct(masks[t]);
        mse.col(0) += err.cwiseProduct(value(preds[t]) - targets[t])
                          .colwise()
                          .sum()
                          .transpose();
    }
    mse.col(0) = mse.col(0).cwiseQuotient(denom);

    Node n{Op::MaskedSqErrPerTask, {}, std::move(mse), {}, {}, {}, 0.0, 0, 0, {}};
    n.in.assign(preds.begin(), preds.end());
    n.aux.reserve(targets.size() + masks.size());
    for (auto& t : targets) n.aux.push_back(std::move(t));
    for (auto& m : masks) n.aux.push_back(std::move(m));
    n.auxv.resize(2 * F);
    n.auxv.head(F) = denom;
    n.auxv.tail(F) = counts;
    return push(std::move(n));
}

Vector Tape::observed_counts(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op != Op::MaskedSqErrPerTask)
        throw ConfigError("observed_counts: wrong node kind");
    const Index F = n.val.rows();
    return n.auxv.tail(F);
}

NodeId Tape::bce_mean(NodeId probs, Vector labels) {
    const Matrix& p = value(probs);
    if (p.cols() != 1 || p.rows() != labels.size())
        throw ConfigError("bce_mean: probs must be [B,1] matching labels");
    const double lo = kProbClamp, hi = 1.0 - kProbClamp;
    double acc = 0.0;
    for (Index i = 0; i < labels.size(); ++i) {
        const double pc = std::min(std::max(p(i, 0), lo), hi);
        acc -= labels[i] * std::log(pc) + (1.0 - labels[i]) * std::log(1.0 - pc);
    }
    Node n{Op::BceMean, {probs},
           Matrix::Constant(1, 1, acc / static_cast<double>(labels.size())),
           {}, {}, {}, 0.0, 0, 0, {}};
    n.auxv = std::move(labels);
    return push(std::move(n));
}

Matrix& Tape::g(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    return n.grad;
}

const Matrix& Tape::grad(NodeId id) {
    if (!ran_backward_) throw ConfigError("grad: backward() has not run");
    return g(id);
}

void Tape::backward(NodeId root) {
    if (ran_backward_) throw ConfigError("backward: may run only once per tape");
    const Node& r = nodes_[static_cast<size_t>(root)];
    if (r.val.size() != 1) throw ConfigError("backward: root must be scalar");
    if (!std::isfinite(r.val(0, 0)))
        throw NumericError("backward: non-finite loss at root node");
    g(root)(0, 0) += 1.0;
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.size() == 0) continue;  // not on any path to the root
        backward_node(n);
    }
    ran_backward_ = true;
}

void Tape::backward_node(Node& n) {
    const Matrix& go = n.grad;
    switch (n.op) {
        case Op::Input:
            break;
        case Op::Affine: {
            const Matrix& x = value(n.in[0]);
            const Matrix& w = value(n.in[1]);
            g(n.in[0]).noalias() += go * w.transpose();
            g(n.in[1]).noalias() += x.transpose() * go;
            g(n.in[2]).col(0) += go.colwise().sum().transpose();
            break;
        }
        case Op::LstmCell: {
            const Matrix& x = value(n.in[0]);
            const Matrix& h_prev = value(n.in[1]);
            const Matrix& c_prev = value(n.in[2]);
            const Matrix& wx = value(n.in[3]);
            const Matrix& wh = value(n.in[4]);
            const Matrix& gi = n.aux[0];
            const Matrix& gf = n.aux[1];
            const Matrix& gc = n.aux[2];
            const Matrix& go_gate = n.aux[3];
            const Matrix& tc = n.aux[4];
            const Index d = h_prev.cols();

            Matrix dh = go.leftCols(d);
            Matrix dc = go.rightCols(d);
            // h' = o . tanh(c')
            Matrix d_o = dh.cwiseProduct(tc);
            dc += dh.cwiseProduct(go_gate)
                      .cwiseProduct((1.0 - tc.array().square()).matrix());
            Matrix d_f = dc.cwiseProduct(c_prev);
            Matrix d_i = dc.cwiseProduct(gc);
            Matrix d_g = dc.cwiseProduct(gi);
            g(n.in[2]) += dc.cwiseProduct(gf);

            Matrix dgates(x.rows(), 4 * d);
            dgates.leftCols(d) =
                d_i.cwiseProduct(gi).cwiseProduct((1.0 - gi.array()).matrix());
            dgates.middleCols(d, d) =
                d_f.cwiseProduct(gf).cwiseProduct((1.0 - gf.array()).matrix());
            dgates.middleCols(2 * d, d) =
                d_g.cwiseProduct((1.0 - gc.array().square()).matrix());
            dgates.rightCols(d) =
                d_o.cwiseProduct(go_gate).cwiseProduct((1.0 - go_gate.array()).matrix());

            g(n.in[0]).noalias() += dgates * wx.transpose();
            g(n.in[1]).noalias() += dgates * wh.transpose();
            g(n.in[3]).noalias() += x.transpose() * dgates;
            g(n.in[4]).noalias() += h_prev.transpose() * dgates;
            g(n.in[5]).col(0) += dgates.colwise().sum().transpose();
            break;
        }
        case Op::Tanh:
            g(n.in[0]) += go.cwiseProduct((1.0 - n.val.array().square()).matrix());
            break;
        case Op::Sigmoid:
            g(n.in[0]) += go.cwiseProduct(
                n.val.cwiseProduct((1.0 - n.val.array()).matrix()));
            break;
        case Op::SliceCols:
            g(n.in[0]).middleCols(n.i0, n.i1) += go;
            break;
        case Op::Transpose:
            g(n.in[0]) += go.transpose();
            break;
        case Op::Add:
            g(n.in[0]) += go;
            g(n.in[1]) += go;
            break;
        case Op::Scale:
            g(n.in[0]) += n.factor * go;
            break;
        case Op::Dot: {
            const double s = go(0, 0);
            g(n.in[0]) += s * value(n.in[1]);
            g(n.in[1]) += s * value(n.in[0]);
            break;
        }
        case Op::Stack:
            for (size_t i = 0; i < n.in.size(); ++i)
                g(n.in[i])(0, 0) += go(static_cast<Index>(i), 0);
            break;
        case Op::SquaredNorm:
            g(n.in[0]) += (2.0 * go(0, 0)) * value(n.in[0]);
            break;
        case Op::Sum:
            g(n.in[0]).array() += go(0, 0);
            break;
        case Op::MaskedSqErrPerTask: {
            const Index F = n.val.rows();
            const size_t H = n.in.size();
            // column-wise scale: d mse_f / d pred(b,f) = 2*mask*(pred-target)/denom_f
            Vector colscale = Vector::Zero(F);
            for (Index f = 0; f < F; ++f)
                colscale[f] = 2.0 * go(f, 0) / n.auxv[f];
            for (size_t t = 0; t < H; ++t) {
                const Matrix& target = n.aux[t];
                const Matrix& mask = n.aux[H + t];
                Matrix dp = (value(n.in[t]) - target).cwiseProduct(mask);
                dp = dp * colscale.asDiagonal();
                g(n.in[t]) += dp;
            }
            break;
        }
        case Op::BceMean: {
            const Matrix& p = value(n.in[0]);
            const double s = go(0, 0) / static_cast<double>(n.auxv.size());
            const double lo = kProbClamp, hi = 1.0 - kProbClamp;
            Matrix dp = Matrix::Zero(p.rows(), 1);
            for (Index i = 0; i < p.rows(); ++i) {
                const double pi = p(i, 0);
                if (pi <= lo || pi >= hi) continue;  // clamp is flat
                dp(i, 0) = s * (pi - n.auxv[i]) / (pi * (1.0 - pi));
            }
            g(n.in[0]) += dp;
            break;
        }
    }
}

} // namespace autoselect

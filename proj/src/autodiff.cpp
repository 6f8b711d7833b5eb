#include "autoselect/autodiff.hpp"

#include <cmath>

#include "autoselect/errors.hpp"

namespace autoselect {

namespace {

std::vector<NodeId> push_params(Tape& tape, std::span<const Tensor> params) {
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const Tensor& p : params) ids.push_back(tape.input(p.to_matrix()));
    return ids;
}

Tensor grad_as_tensor(const Matrix& gm, const Tensor& like) {
    if (like.rank() == 1) return Tensor::from_vector(gm.col(0));
    return Tensor::from_matrix(gm);
}

} // namespace

double eval_loss(const LossBuilder& f, std::span<const Tensor> params) {
    Tape tape;
    auto ids = push_params(tape, params);
    const NodeId loss = f(tape, ids);
    const Matrix& v = tape.value(loss);
    if (v.size() != 1) throw ConfigError("eval_loss: builder must return a scalar");
    return v(0, 0);
}

std::vector<Tensor> grad(const LossBuilder& f, std::span<const Tensor> params,
                         double* loss_out) {
    Tape tape;
    auto ids = push_params(tape, params);
    const NodeId loss = f(tape, ids);
    if (tape.value(loss).size() != 1)
        throw ConfigError("grad: builder must return a scalar");
    if (loss_out) *loss_out = tape.value(loss)(0, 0);
    tape.backward(loss);
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor gt = grad_as_tensor(tape.grad(ids[i]), params[i]);
        gt.require_finite("gradient of parameter " + std::to_string(i));
        out.push_back(std::move(gt));
    }
    return out;
}

std::vector<Tensor> fd_grad(const LossBuilder& f, std::span<const Tensor> params,
                            double step) {
    if (step <= 0.0) throw ConfigError("fd_grad: step must be positive");
    std::vector<Tensor> work(params.begin(), params.end());
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor gk = Tensor::zeros(params[k].shape());
        for (Index i = 0; i < params[k].size(); ++i) {
            const double orig = work[k][i];
            work[k][i] = orig + step;
            const double up = eval_loss(f, work);
            work[k][i] = orig - step;
            const double dn = eval_loss(f, work);
            work[k][i] = orig;
            gk[i] = (up - dn) / (2.0 * step);
        }
        out.push_back(std::move(gk));
    }
    return out;
}

std::vector<Tensor> hvp(const LossBuilder& f, std::span<const Tensor> params,
                        std::span<const Tensor> direction) {
    if (direction.size() != params.size())
        throw ConfigError("hvp: direction/parameter count mismatch");
    double pnorm = 0.0;
    for (const Tensor& p : params) pnorm = std::max(pnorm, p.inf_norm());
    const double h = 1e-5 * (1.0 + pnorm);

    std::vector<Tensor> shifted(params.begin(), params.end());
    for (size_t k = 0; k < shifted.size(); ++k) shifted[k].axpy(h, direction[k]);
    std::vector<Tensor> gp = grad(f, shifted);
    for (size_t k = 0; k < shifted.size(); ++k) shifted[k].axpy(-2.0 * h, direction[k]);
    std::vector<Tensor> gm = grad(f, shifted);

    std::vector<Tensor> out;
    out.reserve(params.size());
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor r = gp[k];
        r -= gm[k];
        r *= 1.0 / (2.0 * h);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace autoselect

#include "autoselect/oracle_fixtures.hpp"

#include <cmath>

#include "autoselect/autodiff.hpp"
#include "autoselect/errors.hpp"
#include "autoselect/evalkit.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

namespace {

Matrix random_matrix(Index r, Index c, RngStream& st, double scale = 1.0) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = scale * st.uniform(-1.0, 1.0);
    return m;
}

Vector random_vector(Index n, RngStream& st, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * st.uniform(-1.0, 1.0);
    return v;
}

} // namespace

QuadraticProblem::QuadraticProblem(int dim, int n_tasks, int n_pretrain,
                                   int n_finetune, double lr_p, double lr_c,
                                   uint64_t seed, bool duplicate_last_task)
    : dim_(dim), n_tasks_(n_tasks), n_pretrain_(n_pretrain),
      n_finetune_(n_finetune), lr_p_(lr_p), lr_c_(lr_c) {
    RngStream st(seed, "fixture.quadratic");
    theta0_ = random_vector(dim, st);
    const int rows = std::max(2, dim - 1);
    for (int f = 0; f < n_tasks; ++f) {
        a_.push_back(random_matrix(rows, dim, st));
        y_.push_back(random_vector(rows, st));
    }
    if (duplicate_last_task && n_tasks >= 2) {
        a_.back() = a_[static_cast<size_t>(n_tasks) - 2];
        y_.back() = y_[static_cast<size_t>(n_tasks) - 2];
    }
    c_mat_ = random_matrix(rows, dim, st);
    z_ = random_vector(rows, st);
    v_mat_ = random_matrix(rows, dim, st);
    u_ = random_vector(rows, st);
}

std::vector<Tensor> QuadraticProblem::encoder_init() const {
    return {Tensor::from_vector(theta0_)};
}

NodeId QuadraticProblem::pretrain_loss(Tape& t, std::span<const NodeId> enc,
                                       std::span<const NodeId>, NodeId lambda,
                                       int) const {
    NodeId theta_row = t.transpose(enc[0]);  // [1,dim]
    std::vector<NodeId> task_losses;
    task_losses.reserve(static_cast<size_t>(n_tasks_));
    for (int f = 0; f < n_tasks_; ++f) {
        NodeId at = t.input(a_[static_cast<size_t>(f)].transpose().eval());
        NodeId nb = t.input((-y_[static_cast<size_t>(f)]).eval());
        NodeId residual = t.affine(theta_row, at, nb);  // [1,rows]
        task_losses.push_back(t.squared_norm(residual));
    }
    NodeId per_task = t.stack(task_losses);
    return t.dot(lambda, per_task);
}

NodeId QuadraticProblem::finetune_loss(Tape& t, std::span<const NodeId> enc,
                                       std::span<const NodeId>, int) const {
    NodeId row = t.affine(t.transpose(enc[0]), t.input(c_mat_.transpose().eval()),
                          t.input((-z_).eval()));
    return t.scale(t.squared_norm(row), 0.5);
}

NodeId QuadraticProblem::val_loss(Tape& t, std::span<const NodeId> enc,
                                  std::span<const NodeId>) const {
    NodeId row = t.affine(t.transpose(enc[0]), t.input(v_mat_.transpose().eval()),
                          t.input((-u_).eval()));
    return t.scale(t.squared_norm(row), 0.5);
}

Vector QuadraticProblem::closed_form_hypergrad_11(const Vector& lw) const {
    if (n_pretrain_ != 1 || n_finetune_ != 1)
        throw ConfigError("closed form applies to the 1/1 unroll only");
    auto grad_q = [&](int f, const Vector& th) -> Vector {
        return 2.0 * a_[static_cast<size_t>(f)].transpose() *
               (a_[static_cast<size_t>(f)] * th - y_[static_cast<size_t>(f)]);
    };
    Vector th1 = theta0_;
    for (int f = 0; f < n_tasks_; ++f) th1 -= lr_p_ * lw[f] * grad_q(f, theta0_);
    Vector th2 = th1 - lr_c_ * c_mat_.transpose() * (c_mat_ * th1 - z_);
    Vector val_grad = v_mat_.transpose() * (v_mat_ * th2 - u_);
    Matrix prop = Matrix::Identity(dim_, dim_) - lr_c_ * c_mat_.transpose() * c_mat_;
    Vector pulled = prop.transpose() * val_grad;
    Vector g(n_tasks_);
    for (int f = 0; f < n_tasks_; ++f) g[f] = -lr_p_ * pulled.dot(grad_q(f, theta0_));
    return g;
}

// ---- tiny sequence-model problem ---------------------------------------------

namespace {

SeqBatch random_seq_batch(Index B, Index T, Index obs_len, Index F, RngStream& st,
                          bool labels, bool duplicate_last_task) {
    SeqBatch b;
    b.values = Tensor::zeros({B, T, F});
    b.mask = Tensor::zeros({B, T, F});
    b.obs_len = obs_len;
    for (Index i = 0; i < B; ++i)
        for (Index s = 0; s < T; ++s)
            for (Index f = 0; f < F; ++f) {
                b.values.at3(i, s, f) = st.uniform(-1.5, 1.5);
                b.mask.at3(i, s, f) = st.uniform() < 0.8 ? 1.0 : 0.0;
            }
    if (duplicate_last_task && F >= 2)
        for (Index i = 0; i < B; ++i)
            for (Index s = 0; s < T; ++s) {
                b.values.at3(i, s, F - 1) = b.values.at3(i, s, F - 2);
                b.mask.at3(i, s, F - 1) = b.mask.at3(i, s, F - 2);
            }
    if (labels) {
        b.labels.resize(B);
        for (Index i = 0; i < B; ++i) b.labels[i] = st.uniform() < 0.5 ? 0.0 : 1.0;
    }
    return b;
}

EncNodes enc_nodes_from(std::span<const NodeId> ids) {
    return {ids[0], ids[1], ids[2]};
}

DecNodes dec_nodes_from(std::span<const NodeId> ids) {
    return {ids[0], ids[1], ids[2], ids[3], ids[4]};
}

} // namespace

TinySeqProblem::TinySeqProblem(Index n_features, Index hidden, Index batch,
                               Index obs_len, Index horizon, int n_pretrain,
                               int n_finetune, double lr_p, double lr_c,
                               uint64_t seed, bool duplicate_last_task)
    : n_features_(n_features), hidden_(hidden), n_pretrain_(n_pretrain),
      n_finetune_(n_finetune), lr_p_(lr_p), lr_c_(lr_c) {
    PairMap pairs;
    if (duplicate_last_task && n_features >= 2)
        pairs[static_cast<int>(n_features) - 1] = static_cast<int>(n_features) - 2;
    enc0_ = init_encoder(n_features, hidden, seed, pairs);
    dec0_ = init_decoder(n_features, hidden, seed, pairs);
    RngStream st(seed, "fixture.tinyseq");
    pre_batch_ = random_seq_batch(batch, obs_len + horizon, obs_len, n_features, st,
                                  false, duplicate_last_task);
    sup_batch_ = random_seq_batch(batch, obs_len, obs_len, n_features, st, true,
                                  duplicate_last_task);
    val_batch_ = random_seq_batch(batch, obs_len, obs_len, n_features, st, true,
                                  duplicate_last_task);
}

std::vector<Tensor> TinySeqProblem::encoder_init() const {
    return {Tensor::from_matrix(enc0_.cell.wx), Tensor::from_matrix(enc0_.cell.wh),
            Tensor::from_vector(enc0_.cell.b)};
}

std::vector<Tensor> TinySeqProblem::decoder_init() const {
    return {Tensor::from_matrix(dec0_.cell.wx), Tensor::from_matrix(dec0_.cell.wh),
            Tensor::from_vector(dec0_.cell.b), Tensor::from_matrix(dec0_.w_out),
            Tensor::from_vector(dec0_.b_out)};
}

NodeId TinySeqProblem::pretrain_loss(Tape& t, std::span<const NodeId> enc,
                                     std::span<const NodeId> dec, NodeId lambda,
                                     int) const {
    PretrainLossNodes nodes = build_pretrain_loss(t, enc_nodes_from(enc),
                                                  dec_nodes_from(dec), lambda,
                                                  pre_batch_);
    return nodes.loss;
}

NodeId TinySeqProblem::headless_bce(Tape& t, NodeId state, const Vector& labels) const {
    // parameter-free head: p = sigma(rowsum(h))
    NodeId ones = t.input(Matrix::Ones(hidden_, 1));
    NodeId zero = t.input(Matrix::Zero(1, 1));
    NodeId logits = t.affine(state, ones, zero);
    return t.bce_mean(t.sigmoid(logits), labels);
}

NodeId TinySeqProblem::encoder_state(Tape& t, std::span<const NodeId> enc,
                                     const SeqBatch& batch) const {
    return build_encoder(t, enc_nodes_from(enc), batch);
}

NodeId TinySeqProblem::finetune_loss(Tape& t, std::span<const NodeId> enc,
                                     std::span<const NodeId>, int) const {
    return headless_bce(t, encoder_state(t, enc, sup_batch_), sup_batch_.labels);
}

NodeId TinySeqProblem::val_loss(Tape& t, std::span<const NodeId> enc,
                                std::span<const NodeId>) const {
    return headless_bce(t, encoder_state(t, enc, val_batch_), val_batch_.labels);
}

// ---- brute-force metric oracles ------------------------------------------------

double auc_roc_bruteforce(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
    long long n_pos = 0, n_neg = 0;
    double wins = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++n_pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (int y : labels) n_neg += (y != 1);
    if (n_pos == 0 || n_neg == 0)
        throw ConfigError("auc_roc_bruteforce: needs both classes");
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_pr_bruteforce(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
    // walk distinct thresholds from high to low, recomputing precision from
    // scratch each time
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                     thresholds.end());
    long long n_pos = 0;
    for (int y : labels) n_pos += (y == 1);
    if (n_pos == 0) throw ConfigError("auc_pr_bruteforce: needs a positive");
    double ap = 0.0;
    long long prev_tp = 0;
    for (double th : thresholds) {
        long long tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= th) (labels[i] == 1 ? tp : fp)++;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += precision * static_cast<double>(tp - prev_tp);
        prev_tp = tp;
    }
    return ap / static_cast<double>(n_pos);
}

// ---- fixture suite ---------------------------------------------------------------

namespace {

FixtureResult grad_vs_fd_fixture(const std::string& name, const LossBuilder& f,
                                 std::vector<Tensor> params, double tol,
                                 bool corrupt) {
    std::vector<Tensor> g = grad(f, params);
    std::vector<Tensor> fd = fd_grad(f, params, 1e-5);
    if (corrupt && !g.empty() && g[0].size() > 0) g[0][0] += 0.5;
    const double err = max_rel_err(g, fd, 1e-8);
    return {name, err, tol, err <= tol};
}

FixtureResult hypergrad_pair_fixture(const std::string& name,
                                     const InnerProblem& prob,
                                     const TaskWeights& lambda, double tol) {
    HyperGradient ex = exact_hypergrad(prob, lambda);
    HyperGradient fd = fd_hypergrad(prob, lambda);
    double err = 0.0;
    for (Index f = 0; f < lambda.size(); ++f) {
        err = std::max(err, rel_err(ex.lambda_grad[f], fd.lambda_grad[f], 1e-6));
        err = std::max(err, rel_err(ex.logit_grad[f], fd.logit_grad[f], 1e-6));
    }
    return {name, err, tol, err <= tol};
}

} // namespace

std::vector<FixtureResult> run_oracle_fixtures(bool corrupt) {
    std::vector<FixtureResult> out;

    // 1) gradient oracle on the weighted forecast loss of the real model
    {
        RngStream st(7, "fixture.grad.lp");
        const Index B = 3, F = 3, d = 4, obs = 4, hor = 2;
        SeqBatch batch = random_seq_batch(B, obs + hor, obs, F, st, false, false);
        EncoderParams e0 = init_encoder(F, d, 7);
        DecoderParams d0 = init_decoder(F, d, 7);
        Vector lw(F);
        lw << 0.5, 0.3, 0.2;
        std::vector<Tensor> params = {
            Tensor::from_matrix(e0.cell.wx), Tensor::from_matrix(e0.cell.wh),
            Tensor::from_vector(e0.cell.b),  Tensor::from_matrix(d0.cell.wx),
            Tensor::from_matrix(d0.cell.wh), Tensor::from_vector(d0.cell.b),
            Tensor::from_matrix(d0.w_out),   Tensor::from_vector(d0.b_out)};
        auto builder = [&](Tape& t, std::span<const NodeId> ids) {
            NodeId lam = t.input(lw);
            return build_pretrain_loss(t, enc_nodes_from(ids.subspan(0, 3)),
                                       dec_nodes_from(ids.subspan(3, 5)), lam,
                                       batch)
                .loss;
        };
        out.push_back(
            grad_vs_fd_fixture("grad_forecast_loss", builder, params, 1e-4, corrupt));
    }

    // 2) gradient oracle on the classification loss
    {
        RngStream st(8, "fixture.grad.lc");
        const Index B = 4, F = 2, d = 3, obs = 5;
        SeqBatch batch = random_seq_batch(B, obs, obs, F, st, true, false);
        EncoderParams e0 = init_encoder(F, d, 8);
        ClassifierParams c0 = init_classifier(d, 8);
        std::vector<Tensor> params = {
            Tensor::from_matrix(e0.cell.wx), Tensor::from_matrix(e0.cell.wh),
            Tensor::from_vector(e0.cell.b), Tensor::from_vector(c0.w),
            Tensor::scalar(c0.b)};
        auto builder = [&](Tape& t, std::span<const NodeId> ids) {
            ClsNodes cn{ids[3], ids[4]};
            return build_classifier_loss(t, enc_nodes_from(ids.subspan(0, 3)), cn,
                                         batch)
                .loss;
        };
        out.push_back(
            grad_vs_fd_fixture("grad_classification_loss", builder, params, 1e-4, false));
    }

    // 3) closed-form linear-least-squares hyper-gradient, 1 pretrain + 1 finetune step
    {
        QuadraticProblem prob(4, 3, 1, 1, 0.05, 0.05, 11);
        TaskWeights lambda = TaskWeights::from_logits((Vector(3) << 0.2, -0.1, 0.4).finished());
        HyperGradient ex = exact_hypergrad(prob, lambda);
        Vector closed = prob.closed_form_hypergrad_11(lambda.weights());
        double err = 0.0;
        for (Index f = 0; f < 3; ++f)
            err = std::max(err, rel_err(ex.lambda_grad[f], closed[f], 1e-8));
        out.push_back({"hypergrad_least_squares_closed_form", err, 1e-6, err <= 1e-6});
    }

    // 4) exact vs finite-difference on a deeper quadratic unroll
    {
        QuadraticProblem prob(5, 3, 4, 3, 0.04, 0.06, 12);
        TaskWeights lambda = TaskWeights::from_logits((Vector(3) << -0.3, 0.1, 0.25).finished());
        out.push_back(hypergrad_pair_fixture("hypergrad_quadratic_4p3s", prob, lambda, 3e-3));
    }

    // 5) exact vs finite-difference on the tiny sequence model
    {
        TinySeqProblem prob(2, 3, 2, 3, 2, 1, 1, 0.1, 0.1, 13);
        TaskWeights lambda = TaskWeights::from_logits((Vector(2) << 0.15, -0.2).finished());
        out.push_back(hypergrad_pair_fixture("hypergrad_tiny_seq_model", prob, lambda, 3e-3));
    }

    // 6) duplicated tasks must receive identical hyper-gradient components
    {
        QuadraticProblem prob(4, 3, 2, 2, 0.05, 0.05, 14, /*duplicate_last_task=*/true);
        Vector logits(3);
        logits << 0.1, -0.05, -0.05;
        TaskWeights lambda = TaskWeights::from_logits(logits);
        HyperGradient ex = exact_hypergrad(prob, lambda);
        const double err = rel_err(ex.lambda_grad[1], ex.lambda_grad[2], 1e-9);
        out.push_back({"hypergrad_duplicate_symmetry", err, 1e-9, err <= 1e-9});
    }

    // 7) ranking metrics against brute force
    {
        RngStream st(15, "fixture.auc");
        double worst = 0.0;
        for (int rep = 0; rep < 200; ++rep) {
            const int n = 2 + static_cast<int>(st.uniform_index(18));
            std::vector<double> scores(static_cast<size_t>(n));
            std::vector<int> labels(static_cast<size_t>(n));
            bool pos = false, neg = false;
            for (int i = 0; i < n; ++i) {
                scores[static_cast<size_t>(i)] =
                    std::round(st.uniform() * 8.0) / 8.0;  // force ties
                labels[static_cast<size_t>(i)] = st.uniform() < 0.4 ? 1 : 0;
                (labels[static_cast<size_t>(i)] ? pos : neg) = true;
            }
            if (!pos || !neg) continue;
            worst = std::max(worst, std::abs(auc_roc(scores, labels) -
                                             auc_roc_bruteforce(scores, labels)));
            worst = std::max(worst, std::abs(auc_pr(scores, labels) -
                                             auc_pr_bruteforce(scores, labels)));
        }
        out.push_back({"metrics_vs_bruteforce", worst, 1e-12, worst <= 1e-12});
    }

    return out;
}

} // namespace autoselect

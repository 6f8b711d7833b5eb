#include "autoselect/seqmodel.hpp"

#include <cmath>

#include "autoselect/errors.hpp"
#include "autoselect/rng.hpp"

namespace autoselect {

namespace {

int remap(const PairMap& pairs, int i) {
    auto it = pairs.find(i);
    return it == pairs.end() ? i : it->second;
}

// Row `r` of a weight matrix filled from its own keyed stream, so a
// duplicated task can replay the source task's stream exactly.
Matrix rows_from_streams(Index rows, Index cols, double bound, uint64_t seed,
                         std::string_view tag, const PairMap& pairs) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        RngStream st(seed, tag, static_cast<uint64_t>(remap(pairs, static_cast<int>(r))));
        for (Index c = 0; c < cols; ++c) m(r, c) = st.uniform(-bound, bound);
    }
    return m;
}

Matrix cols_from_streams(Index rows, Index cols, double bound, uint64_t seed,
                         std::string_view tag, const PairMap& pairs) {
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c) {
        RngStream st(seed, tag, static_cast<uint64_t>(remap(pairs, static_cast<int>(c))));
        for (Index r = 0; r < rows; ++r) m(r, c) = st.uniform(-bound, bound);
    }
    return m;
}

} // namespace

EncoderParams init_encoder(Index n_features, Index hidden, uint64_t seed,
                           const PairMap& pairs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    EncoderParams p;
    p.cell.wx = rows_from_streams(n_features, 4 * hidden, bound, seed, "init.enc.wx", pairs);
    p.cell.wh = rows_from_streams(hidden, 4 * hidden, bound, seed, "init.enc.wh", {});
    p.cell.b = Vector::Zero(4 * hidden);
    return p;
}

DecoderParams init_decoder(Index n_features, Index hidden, uint64_t seed,
                           const PairMap& pairs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    DecoderParams p;
    p.cell.wx = rows_from_streams(n_features, 4 * hidden, bound, seed, "init.dec.wx", pairs);
    p.cell.wh = rows_from_streams(hidden, 4 * hidden, bound, seed, "init.dec.wh", {});
    p.cell.b = Vector::Zero(4 * hidden);
    p.w_out = cols_from_streams(hidden, n_features, bound, seed, "init.dec.wout", pairs);
    p.b_out = Vector::Zero(n_features);
    return p;
}

ClassifierParams init_classifier(Index hidden, uint64_t seed, uint64_t reinit_index) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    RngStream st(seed, "init.cls.w", reinit_index);
    ClassifierParams p;
    p.w.resize(hidden);
    for (Index i = 0; i < hidden; ++i) p.w[i] = st.uniform(-bound, bound);
    p.b = 0.0;
    return p;
}

ModelParams init_model(Index n_features, Index hidden, uint64_t seed,
                       const PairMap& pairs) {
    return {init_encoder(n_features, hidden, seed, pairs),
            init_decoder(n_features, hidden, seed, pairs),
            init_classifier(hidden, seed)};
}

Matrix SeqBatch::step_values(Index t) const {
    const Index B = batch(), F = features();
    Matrix m(B, F);
    for (Index b = 0; b < B; ++b)
        for (Index f = 0; f < F; ++f) m(b, f) = values.at3(b, t, f);
    return m;
}

Matrix SeqBatch::step_mask(Index t) const {
    const Index B = batch(), F = features();
    Matrix m(B, F);
    for (Index b = 0; b < B; ++b)
        for (Index f = 0; f < F; ++f) m(b, f) = mask.at3(b, t, f);
    return m;
}

void SeqBatch::validate() const {
    if (values.rank() != 3 || !values.same_shape(mask))
        throw ConfigError("seq batch: values/mask must be equal-shape rank-3");
    if (obs_len < 1 || obs_len > steps())
        throw ConfigError("seq batch: obs_len out of range");
    if (labels.size() != 0 && labels.size() != batch())
        throw ConfigError("seq batch: label count mismatch");
    values.require_finite("batch values");
}

EncNodes push_encoder(Tape& t, const EncoderParams& p) {
    return {t.input(p.cell.wx, "enc.wx"), t.input(p.cell.wh, "enc.wh"),
            t.input(p.cell.b, "enc.b")};
}

DecNodes push_decoder(Tape& t, const DecoderParams& p) {
    return {t.input(p.cell.wx, "dec.wx"), t.input(p.cell.wh, "dec.wh"),
            t.input(p.cell.b, "dec.b"), t.input(p.w_out, "dec.wout"),
            t.input(p.b_out, "dec.bout")};
}

ClsNodes push_classifier(Tape& t, const ClassifierParams& p) {
    return {t.input(p.w, "cls.w"), t.input(Matrix::Constant(1, 1, p.b), "cls.b")};
}

NodeId build_encoder(Tape& t, const EncNodes& enc, const SeqBatch& batch) {
    const Index B = batch.batch();
    const Index d = t.value(enc.wh).rows();
    NodeId h = t.input(Matrix::Zero(B, d));
    NodeId c = t.input(Matrix::Zero(B, d));
    for (Index step = 0; step < batch.obs_len; ++step) {
        NodeId x = t.input(batch.step_values(step));
        NodeId hc = t.lstm_cell(x, h, c, enc.wx, enc.wh, enc.b);
        h = t.slice_cols(hc, 0, d);
        c = t.slice_cols(hc, d, d);
    }
    return h;
}

std::vector<NodeId> build_decoder(Tape& t, const DecNodes& dec, NodeId s,
                                  NodeId x_last, Index horizon) {
    if (horizon < 1) throw ConfigError("decoder: horizon must be >= 1");
    const Index B = t.value(s).rows();
    const Index d = t.value(s).cols();
    NodeId h = s;
    NodeId c = t.input(Matrix::Zero(B, d));
    NodeId x = x_last;
    std::vector<NodeId> preds;
    preds.reserve(static_cast<size_t>(horizon));
    for (Index step = 0; step < horizon; ++step) {
        NodeId hc = t.lstm_cell(x, h, c, dec.wx, dec.wh, dec.b);
        h = t.slice_cols(hc, 0, d);
        c = t.slice_cols(hc, d, d);
        NodeId p = t.affine(h, dec.w_out, dec.b_out);
        preds.push_back(p);
        x = p;
    }
    return preds;
}

PretrainLossNodes build_pretrain_loss(Tape& t, const EncNodes& enc,
                                      const DecNodes& dec, NodeId lambda_node,
                                      const SeqBatch& batch) {
    const Index H = batch.horizon();
    if (H < 1) throw ConfigError("pretrain loss: batch has no horizon steps");
    NodeId s = build_encoder(t, enc, batch);
    NodeId x_last = t.input(batch.step_values(batch.obs_len - 1));
    std::vector<NodeId> preds = build_decoder(t, dec, s, x_last, H);
    std::vector<Matrix> targets, masks;
    targets.reserve(static_cast<size_t>(H));
    masks.reserve(static_cast<size_t>(H));
    for (Index j = 0; j < H; ++j) {
        targets.push_back(batch.step_values(batch.obs_len + j));
        masks.push_back(batch.step_mask(batch.obs_len + j));
    }
    NodeId mse = t.masked_sqerr_per_task(preds, std::move(targets), std::move(masks));
    NodeId loss = t.dot(lambda_node, mse);
    return {loss, mse};
}

ClassifierLossNodes build_classifier_loss(Tape& t, const EncNodes& enc,
                                          const ClsNodes& cls,
                                          const SeqBatch& batch) {
    if (batch.labels.size() == 0)
        throw ConfigError("classifier loss: batch has no labels");
    NodeId s = build_encoder(t, enc, batch);
    NodeId logits = t.affine(s, cls.w, cls.b);
    NodeId probs = t.sigmoid(logits);
    NodeId loss = t.bce_mean(probs, batch.labels);
    return {loss, probs};
}

Matrix encode(const EncoderParams& enc, const SeqBatch& batch) {
    Tape t;
    EncNodes e = push_encoder(t, enc);
    return t.value(build_encoder(t, e, batch));
}

std::vector<Matrix> decode(const DecoderParams& dec, const Matrix& s,
                           const Matrix& x_last, Index horizon) {
    Tape t;
    DecNodes d = push_decoder(t, dec);
    NodeId sn = t.input(s);
    NodeId xn = t.input(x_last);
    std::vector<NodeId> ids = build_decoder(t, d, sn, xn, horizon);
    std::vector<Matrix> out;
    out.reserve(ids.size());
    for (NodeId id : ids) out.push_back(t.value(id));
    return out;
}

Vector classify(const EncoderParams& enc, const ClassifierParams& cls,
                const SeqBatch& batch) {
    Tape t;
    EncNodes e = push_encoder(t, enc);
    NodeId s = build_encoder(t, e, batch);
    ClsNodes c = push_classifier(t, cls);
    NodeId probs = t.sigmoid(t.affine(s, c.w, c.b));
    return t.value(probs).col(0);
}

double pretrain_loss(const Vector& lambda_weights,
                     const std::vector<Matrix>& preds, const SeqBatch& batch,
                     Vector* task_mse_out) {
    const Index H = batch.horizon();
    const Index F = batch.features();
    if (static_cast<Index>(preds.size()) != H)
        throw ConfigError("pretrain_loss: horizon mismatch");
    Vector num = Vector::Zero(F), cnt = Vector::Zero(F);
    for (Index j = 0; j < H; ++j) {
        Matrix tgt = batch.step_values(batch.obs_len + j);
        Matrix msk = batch.step_mask(batch.obs_len + j);
        Matrix err = (preds[static_cast<size_t>(j)] - tgt).cwiseProduct(msk);
        num += err.cwiseProduct(preds[static_cast<size_t>(j)] - tgt)
                   .colwise()
                   .sum()
                   .transpose();
        cnt += msk.colwise().sum().transpose();
    }
    Vector mse = num.cwiseQuotient(cnt.cwiseMax(1.0));
    if (task_mse_out) *task_mse_out = mse;
    return lambda_weights.dot(mse);
}

double classification_loss(const Vector& probs, const Vector& labels) {
    if (probs.size() != labels.size())
        throw ConfigError("classification_loss: size mismatch");
    const double lo = Tape::kProbClamp, hi = 1.0 - Tape::kProbClamp;
    double acc = 0.0;
    for (Index i = 0; i < probs.size(); ++i) {
        const double p = std::min(std::max(probs[i], lo), hi);
        acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(probs.size());
}

} // namespace autoselect

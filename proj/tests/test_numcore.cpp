#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "autoselect/autodiff.hpp"
#include "autoselect/rng.hpp"
#include "autoselect/tape.hpp"
#include "autoselect/tensor.hpp"

using namespace autoselect;

namespace {

Tensor rand_tensor(std::vector<Index> shape, RngStream& st, double lo = -2.0,
                   double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = st.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("tensor invariants") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS_AS(Tensor({2, 3}, Eigen::ArrayXd::Zero(5)), ConfigError);
    CHECK_THROWS_AS(Tensor({0, 3}, Eigen::ArrayXd::Zero(0)), ConfigError);

    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.require_finite("unit test tensor"), NumericError);
}

TEST_CASE("tensor round trips through eigen") {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    Tensor t = Tensor::from_matrix(m);
    CHECK(t.at2(1, 0) == 3);
    CHECK(t.to_matrix() == m);
    Vector v(3);
    v << 5, 6, 7;
    CHECK(Tensor::from_vector(v).to_vector() == v);
}

TEST_CASE("rng streams replay and are stable across constructions") {
    RngStream a(42, "unit", 3);
    RngStream b(42, "unit", 3);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(42, "unit", 4);
    RngStream d(42, "other", 3);
    RngStream e(43, "unit", 3);
    RngStream base(42, "unit", 3);
    bool all_same_c = true, all_same_d = true, all_same_e = true;
    RngStream c2(42, "unit", 4), d2(42, "other", 3), e2(43, "unit", 3);
    for (int i = 0; i < 16; ++i) {
        const uint64_t x = base.next_u64();
        all_same_c &= (c2.next_u64() == x);
        all_same_d &= (d2.next_u64() == x);
        all_same_e &= (e2.next_u64() == x);
    }
    CHECK_FALSE(all_same_c);
    CHECK_FALSE(all_same_d);
    CHECK_FALSE(all_same_e);
    (void)c; (void)d; (void)e;
}

TEST_CASE("rng uniform bounds and normal moments") {
    RngStream st(7, "moments");
    double sum = 0, sumsq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = st.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double z = st.normal();
        sum += z;
        sumsq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sumsq / n - 1.0) < 0.05);
}

TEST_CASE("grad of sum of squares and of a constant") {
    // f(x) = sum(x^2) at [1,2] -> [2,4]
    std::vector<Tensor> params = {Tensor::from_vector((Vector(2) << 1, 2).finished())};
    auto f = [](Tape& t, std::span<const NodeId> ids) {
        return t.squared_norm(ids[0]);
    };
    std::vector<Tensor> g = grad(f, params);
    CHECK(g[0][0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g[0][1] == doctest::Approx(4.0).epsilon(1e-12));

    auto constant = [](Tape& t, std::span<const NodeId>) {
        return t.input(Matrix::Constant(1, 1, 3.25));
    };
    std::vector<Tensor> gc = grad(constant, params);
    CHECK(gc[0][0] == 0.0);
    CHECK(gc[0][1] == 0.0);
}

TEST_CASE("fd_grad analytic cases") {
    // f(x) = x^3 at x=2 -> 12
    std::vector<Tensor> p = {Tensor::scalar(2.0)};
    auto cube = [](Tape& t, std::span<const NodeId> ids) {
        // x^3 = x * x * x via dot(x, x^2): build with squared_norm and dot
        NodeId x2 = t.squared_norm(ids[0]);        // x^2
        return t.dot(ids[0], x2);                  // x * x^2
    };
    std::vector<Tensor> g = fd_grad(cube, p, 1e-5);
    CHECK(g[0][0] == doctest::Approx(12.0).epsilon(1e-6));

    // |x| at 0: the symmetric difference returns 0. The subgradient there is
    // undefined; 0 is the documented convention.
    std::vector<Tensor> p0 = {Tensor::scalar(0.0)};
    auto abs_direct = [](Tape& t, std::span<const NodeId> ids) {
        return t.input(Matrix::Constant(1, 1, std::abs(t.value(ids[0])(0, 0))));
    };
    std::vector<Tensor> ga = fd_grad(abs_direct, p0, 1e-5);
    CHECK(ga[0][0] == 0.0);
}

TEST_CASE("grad matches fd_grad on every primitive, 100 seeds") {
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        RngStream st(seed, "primitive.sweep");
        const Index B = 2 + static_cast<Index>(st.uniform_index(3));
        const Index d = 2 + static_cast<Index>(st.uniform_index(3));
        const Index f = 2 + static_cast<Index>(st.uniform_index(2));

        // affine + tanh + sigmoid + slice + add + scale + transpose chain
        std::vector<Tensor> params = {rand_tensor({B, f}, st), rand_tensor({f, d}, st),
                                      rand_tensor({d}, st), rand_tensor({B, d}, st)};
        auto chain = [&](Tape& t, std::span<const NodeId> ids) {
            NodeId y = t.affine(ids[0], ids[1], ids[2]);
            NodeId a = t.tanh(y);
            NodeId b = t.sigmoid(t.add(a, ids[3]));
            NodeId c = t.scale(t.slice_cols(b, 0, d - 1), 1.7);
            NodeId tr = t.transpose(c);
            return t.squared_norm(tr);
        };
        worst = std::max(worst, max_rel_err(grad(chain, params),
                                            fd_grad(chain, params, 1e-5)));

        // fused recurrent cell
        std::vector<Tensor> cell = {rand_tensor({B, f}, st, -1, 1),
                                    rand_tensor({B, d}, st, -1, 1),
                                    rand_tensor({B, d}, st, -1, 1),
                                    rand_tensor({f, 4 * d}, st, -1, 1),
                                    rand_tensor({d, 4 * d}, st, -1, 1),
                                    rand_tensor({4 * d}, st, -1, 1)};
        auto cellf = [&](Tape& t, std::span<const NodeId> ids) {
            NodeId hc = t.lstm_cell(ids[0], ids[1], ids[2], ids[3], ids[4], ids[5]);
            return t.squared_norm(hc);
        };
        worst = std::max(worst, max_rel_err(grad(cellf, cell),
                                            fd_grad(cellf, cell, 1e-5)));

        // reductions: masked per-task error, dot, stack, sum, bce
        const Index H = 2;
        std::vector<Tensor> reds = {rand_tensor({B, f}, st), rand_tensor({B, f}, st),
                                    rand_tensor({f}, st, 0.05, 1.0)};
        std::vector<Matrix> targets, masks;
        for (Index j = 0; j < H; ++j) {
            targets.push_back(rand_tensor({B, f}, st).to_matrix());
            Matrix m(B, f);
            for (Index r = 0; r < B; ++r)
                for (Index cidx = 0; cidx < f; ++cidx)
                    m(r, cidx) = st.uniform() < 0.7 ? 1.0 : 0.0;
            masks.push_back(m);
        }
        Vector labels(B);
        for (Index r = 0; r < B; ++r) labels[r] = st.uniform() < 0.5 ? 0.0 : 1.0;
        auto redf = [&](Tape& t, std::span<const NodeId> ids) {
            std::vector<NodeId> preds = {ids[0], ids[1]};
            NodeId mse = t.masked_sqerr_per_task(preds, targets, masks);
            NodeId lp = t.dot(ids[2], mse);
            NodeId probs = t.sigmoid(t.slice_cols(ids[0], 0, 1));
            NodeId bce = t.bce_mean(probs, labels);
            NodeId s = t.sum(ids[1]);
            return t.dot(t.stack(std::vector<NodeId>{lp, bce, s}),
                         t.input((Vector(3) << 1.0, 0.7, 0.1).finished()));
        };
        worst = std::max(worst, max_rel_err(grad(redf, reds),
                                            fd_grad(redf, reds, 1e-5)));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("numeric failure names the offending node") {
    std::vector<Tensor> p = {Tensor::from_vector((Vector(1) << 1.0).finished())};
    auto f = [](Tape& t, std::span<const NodeId> ids) {
        NodeId big = t.scale(ids[0], 1e308);
        return t.squared_norm(big);  // (1e308)^2 overflows to inf
    };
    CHECK_THROWS_WITH_AS(grad(f, p), doctest::Contains("squared_norm"), NumericError);
}

TEST_CASE("hvp on a diagonal quadratic") {
    // f(x) = 0.5 x^T A x, A = diag(2,4); H v = [2,4] for v = [1,1]
    Matrix a(2, 2);
    a << 2, 0, 0, 4;
    std::vector<Tensor> p = {Tensor::from_vector((Vector(2) << 0.3, -0.7).finished())};
    auto f = [&](Tape& t, std::span<const NodeId> ids) {
        NodeId row = t.affine(t.transpose(ids[0]), t.input(a),
                              t.input(Vector::Zero(2)));
        return t.scale(t.dot(t.transpose(row), ids[0]), 0.5);
    };
    std::vector<Tensor> v = {Tensor::from_vector((Vector(2) << 1, 1).finished())};
    std::vector<Tensor> hv = hvp(f, p, v);
    CHECK(hv[0][0] == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(hv[0][1] == doctest::Approx(4.0).epsilon(1e-7));

    std::vector<Tensor> zero = {Tensor::zeros({2})};
    std::vector<Tensor> hz = hvp(f, p, zero);
    CHECK(hz[0][0] == 0.0);
    CHECK(hz[0][1] == 0.0);
}

TEST_CASE("hvp symmetry and linearity on random quadratics") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        RngStream st(seed, "hvp.sym");
        const Index n = 2 + static_cast<Index>(st.uniform_index(9));  // dim <= 10
        Matrix m = rand_tensor({n, n}, st).to_matrix();
        Matrix h = 0.5 * (m + m.transpose());
        std::vector<Tensor> p = {rand_tensor({n}, st)};
        auto f = [&](Tape& t, std::span<const NodeId> ids) {
            NodeId row = t.affine(t.transpose(ids[0]), t.input(h),
                                  t.input(Vector::Zero(n)));
            return t.scale(t.dot(t.transpose(row), ids[0]), 0.5);
        };
        Tensor u = rand_tensor({n}, st), v = rand_tensor({n}, st);
        std::vector<Tensor> hu = hvp(f, p, std::vector<Tensor>{u});
        std::vector<Tensor> hv = hvp(f, p, std::vector<Tensor>{v});

        // u^T (H v) == v^T (H u), explicit H as the brute-force reference
        const double uhv = u.to_vector().dot(hv[0].to_vector());
        const double vhu = v.to_vector().dot(hu[0].to_vector());
        CHECK(rel_err(uhv, vhu, 1e-8) < 1e-6);
        const double direct = u.to_vector().dot(h * v.to_vector());
        CHECK(rel_err(uhv, direct, 1e-8) < 1e-6);

        // linearity: H(2u + 3v) = 2 Hu + 3 Hv within FD tolerance
        Tensor w = u;
        w *= 2.0;
        w.axpy(3.0, v);
        std::vector<Tensor> hw = hvp(f, p, std::vector<Tensor>{w});
        Tensor lin = hu[0];
        lin *= 2.0;
        lin.axpy(3.0, hv[0]);
        CHECK(max_rel_err(hw, {lin}, 1e-6) < 1e-5);
    }
}

TEST_CASE("backward pass is bitwise deterministic") {
    RngStream st(5, "det");
    std::vector<Tensor> params = {rand_tensor({3, 8}, st), rand_tensor({8, 4}, st),
                                  rand_tensor({4}, st)};
    auto f = [](Tape& t, std::span<const NodeId> ids) {
        return t.squared_norm(t.tanh(t.affine(ids[0], ids[1], ids[2])));
    };
    std::vector<Tensor> g1 = grad(f, params);
    std::vector<Tensor> g2 = grad(f, params);
    for (size_t k = 0; k < g1.size(); ++k) CHECK(bitwise_equal(g1[k], g2[k]));
}

#include <cmath>
#include <vector>

#include "doctest.h"
#include "srs/autodiff.hpp"
#include "srs/gradcheck.hpp"
#include "srs/rng.hpp"

using srs::check_gradients;
using srs::DimensionError;
using srs::Rng;
using srs::Tape;
using srs::Tensor;
using srs::Var;
namespace ops = srs::ops;

namespace {

Tensor rand_t(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero so relu kinks stay clear of finite differences.
Tensor rand_nonzero(Rng& rng, std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) {
        const double mag = rng.uniform(0.2, 1.0);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("elementwise chain add/sub/mul/scale") {
    Rng rng(101);
    Tensor a = rand_t(rng, {2, 3});
    Tensor b = rand_t(rng, {2, 3});
    Tensor probe = rand_t(rng, {2, 3});
    auto rep = check_gradients({a, b}, [probe](Tape& t, const std::vector<Var>& v) {
        Var s = ops::add(v[0], v[1]);
        Var d = ops::sub(v[0], v[1]);
        Var m = ops::mul(s, d);  // (a+b)*(a-b)
        Var y = ops::add_scalar(ops::scale(m, 0.7), 0.3);
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("relu sigmoid tanh") {
    Rng rng(102);
    Tensor x = rand_nonzero(rng, {7});
    Tensor probe = rand_t(rng, {7});
    auto rep = check_gradients({x}, [probe](Tape& t, const std::vector<Var>& v) {
        Var y = ops::add(ops::relu(v[0]), ops::add(ops::sigmoid(v[0]), ops::tanh(v[0])));
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("sum and mean") {
    Rng rng(103);
    Tensor x = rand_t(rng, {3, 2});
    auto rep = check_gradients({x}, [](Tape&, const std::vector<Var>& v) {
        return ops::add(ops::sum(v[0]), ops::scale(ops::mean(v[0]), 2.0));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("matmul value") {
    Tape t;
    Var a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b = t.leaf(Tensor({2, 2}, {5, 6, 7, 8}));
    Var c = ops::matmul(a, b);
    CHECK(c.value().at(0, 0) == 19);
    CHECK(c.value().at(0, 1) == 22);
    CHECK(c.value().at(1, 0) == 43);
    CHECK(c.value().at(1, 1) == 50);
    CHECK_THROWS_AS(ops::matmul(a, t.leaf(Tensor({3, 2}))), DimensionError);
}

TEST_CASE("matmul gradients") {
    Rng rng(104);
    Tensor a = rand_t(rng, {3, 4});
    Tensor b = rand_t(rng, {4, 2});
    Tensor probe = rand_t(rng, {3, 2});
    auto rep = check_gradients({a, b}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::matmul(v[0], v[1]), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("matmul_nt matches matmul-with-transpose") {
    Rng rng(105);
    Tensor a = rand_t(rng, {3, 4});
    Tensor b = rand_t(rng, {5, 4});
    {
        Tape t;
        Var va = t.leaf(a), vb = t.leaf(b);
        Var direct = ops::matmul_nt(va, vb);
        Var viat = ops::matmul(va, ops::transpose(vb));
        for (int i = 0; i < direct.value().size(); ++i)
            CHECK(direct.value()[i] == doctest::Approx(viat.value()[i]).epsilon(1e-12));
    }
    Tensor probe = rand_t(rng, {3, 5});
    auto rep = check_gradients({a, b}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::matmul_nt(v[0], v[1]), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("transpose and reshape gradients") {
    Rng rng(106);
    Tensor x = rand_t(rng, {3, 4});
    Tensor probe = rand_t(rng, {12});
    auto rep = check_gradients({x}, [probe](Tape& t, const std::vector<Var>& v) {
        Var y = ops::reshape(ops::transpose(v[0]), {12});
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("linear rank-1 and rank-2") {
    Rng rng(107);
    Tensor x1 = rand_t(rng, {4});
    Tensor x2 = rand_t(rng, {3, 4});
    Tensor w = rand_t(rng, {5, 4});
    Tensor b = rand_t(rng, {5});
    Tensor p1 = rand_t(rng, {5});
    Tensor p2 = rand_t(rng, {3, 5});
    auto rep1 = check_gradients({x1, w, b}, [p1](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::linear(v[0], v[1], v[2]), t.leaf(p1)));
    });
    CHECK(rep1.max_rel_err < kTol);
    auto rep2 = check_gradients({x2, w, b}, [p2](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::linear(v[0], v[1], v[2]), t.leaf(p2)));
    });
    CHECK(rep2.max_rel_err < kTol);
}

TEST_CASE("concat family") {
    Rng rng(108);
    Tensor a = rand_t(rng, {3});
    Tensor b = rand_t(rng, {2});
    Tensor c = rand_t(rng, {4});
    Tensor probe = rand_t(rng, {9});
    auto rep = check_gradients({a, b, c}, [probe](Tape& t, const std::vector<Var>& v) {
        Var y = ops::concat({v[0], v[1], v[2]});
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);

    Tensor m1 = rand_t(rng, {2, 3});
    Tensor m2 = rand_t(rng, {2, 2});
    Tensor mp = rand_t(rng, {2, 5});
    auto rep2 = check_gradients({m1, m2}, [mp](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::concat_cols(v[0], v[1]), t.leaf(mp)));
    });
    CHECK(rep2.max_rel_err < kTol);

    Tensor r1 = rand_t(rng, {4});
    Tensor r2 = rand_t(rng, {4});
    Tensor sp = rand_t(rng, {2, 4});
    auto rep3 = check_gradients({r1, r2}, [sp](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::stack_rows({v[0], v[1]}), t.leaf(sp)));
    });
    CHECK(rep3.max_rel_err < kTol);

    Tensor rx = rand_t(rng, {3, 4});
    Tensor rp = rand_t(rng, {4});
    auto rep4 = check_gradients({rx}, [rp](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::row(v[0], 1), t.leaf(rp)));
    });
    CHECK(rep4.max_rel_err < kTol);
}

TEST_CASE("softmax value and gradients") {
    {
        Tape t;
        Var y = ops::softmax(t.leaf(Tensor({3})));  // equal logits
        for (int i = 0; i < 3; ++i) CHECK(y.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        Var s = ops::softmax(t.leaf(Tensor({1}, {7.0})));
        CHECK(s.value()[0] == 1.0);
        CHECK_THROWS_AS(ops::softmax(t.leaf(Tensor({0}))), DimensionError);
    }
    {
        // [c, c + ln 3] -> [0.25, 0.75], shift-invariant in c
        const double ln3 = std::log(3.0);
        for (double c : {0.0, 5.0}) {
            Tape t;
            Var y = ops::softmax(t.leaf(Tensor({2}, {c, c + ln3})));
            CHECK(y.value()[0] == doctest::Approx(0.25).epsilon(1e-9));
            CHECK(y.value()[1] == doctest::Approx(0.75).epsilon(1e-9));
        }
    }
    Rng rng(109);
    Tensor x = rand_t(rng, {6}, -2.0, 2.0);
    Tensor probe = rand_t(rng, {6});
    auto rep = check_gradients({x}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::softmax(v[0]), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("masked softmax rows: masked keys zero, dead queries zero") {
    const std::vector<std::uint8_t> key_mask = {1, 0, 1, 1};
    const std::vector<std::uint8_t> query_mask = {1, 1, 0};
    Rng rng(110);
    Tensor s = rand_t(rng, {3, 4}, -2.0, 2.0);
    {
        Tape t;
        Var y = ops::masked_softmax_rows(t.leaf(s), key_mask, query_mask);
        const Tensor& yv = y.value();
        for (int i = 0; i < 2; ++i) {
            double rows_sum = 0.0;
            for (int j = 0; j < 4; ++j) rows_sum += yv.at(i, j);
            CHECK(rows_sum == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(yv.at(i, 1) == 0.0);  // masked key
        }
        for (int j = 0; j < 4; ++j) CHECK(yv.at(2, j) == 0.0);  // dead query row
    }
    Tensor probe = rand_t(rng, {3, 4});
    auto rep = check_gradients({s}, [probe, key_mask, query_mask](Tape& t, const std::vector<Var>& v) {
        Var y = ops::masked_softmax_rows(v[0], key_mask, query_mask);
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("layer norm: unit stats and gradients") {
    {
        Tape t;
        Var y = ops::layer_norm(t.leaf(Tensor({2}, {1.0, 3.0})),
                                t.leaf(Tensor::full({2}, 1.0)), t.leaf(Tensor({2})), 1e-6);
        CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-5));
        CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-5));
    }
    {
        // constant vector with unit gain / zero bias -> exactly zeros
        Tape t;
        Var y = ops::layer_norm(t.leaf(Tensor::full({4}, 2.5)), t.leaf(Tensor::full({4}, 1.0)),
                                t.leaf(Tensor({4})), 1e-6);
        for (int i = 0; i < 4; ++i) CHECK(y.value()[i] == 0.0);
    }
    {
        // zero gain -> output equals the bias vector
        Tape t;
        Tensor bias({3}, {0.3, -0.7, 2.0});
        Var y = ops::layer_norm(t.leaf(Tensor({3}, {1.0, 4.0, 9.0})), t.leaf(Tensor({3})),
                                t.leaf(bias), 1e-6);
        for (int i = 0; i < 3; ++i) CHECK(y.value()[i] == bias[i]);
    }
    {
        // unit gain / zero bias output has near-zero mean, near-unit variance
        Rng rng(210);
        Tape t;
        Var y = ops::layer_norm(t.leaf(rand_t(rng, {9}, -3.0, 3.0)), t.leaf(Tensor::full({9}, 1.0)),
                                t.leaf(Tensor({9})), 1e-6);
        double mu = 0.0, var = 0.0;
        for (int i = 0; i < 9; ++i) mu += y.value()[i];
        mu /= 9;
        for (int i = 0; i < 9; ++i) var += (y.value()[i] - mu) * (y.value()[i] - mu);
        var /= 9;
        CHECK(std::fabs(mu) < 1e-9);
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }
    Rng rng(111);
    Tensor x = rand_t(rng, {6});
    Tensor gain = rand_t(rng, {6}, 0.5, 1.5);
    Tensor bias = rand_t(rng, {6});
    Tensor probe = rand_t(rng, {6});
    auto rep = check_gradients({x, gain, bias}, [probe](Tape& t, const std::vector<Var>& v) {
        Var y = ops::layer_norm(v[0], v[1], v[2], 1e-6);
        return ops::sum(ops::mul(y, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < 1e-5);

    Tensor xr = rand_t(rng, {3, 5});
    Tensor gr = rand_t(rng, {5}, 0.5, 1.5);
    Tensor br = rand_t(rng, {5});
    Tensor pr = rand_t(rng, {3, 5});
    auto rep2 = check_gradients({xr, gr, br}, [pr](Tape& t, const std::vector<Var>& v) {
        Var y = ops::layer_norm_rows(v[0], v[1], v[2], 1e-6);
        return ops::sum(ops::mul(y, t.leaf(pr)));
    });
    CHECK(rep2.max_rel_err < 1e-5);
}

TEST_CASE("dropout with fixed mask scales kept entries") {
    Tensor mask({4}, {1, 0, 1, 1});
    {
        Tape t;
        Var y = ops::dropout(t.leaf(Tensor({4}, {1, 2, 3, 4})), mask, 0.75);
        CHECK(y.value()[0] == doctest::Approx(1.0 / 0.75));
        CHECK(y.value()[1] == 0.0);
        CHECK(y.value()[3] == doctest::Approx(4.0 / 0.75));
    }
    Rng rng(112);
    Tensor x = rand_t(rng, {4});
    Tensor probe = rand_t(rng, {4});
    auto rep = check_gradients({x}, [probe, mask](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::dropout(v[0], mask, 0.75), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("gather rows accumulates over repeated ids") {
    Rng rng(113);
    Tensor table = rand_t(rng, {5, 3});
    Tensor probe = rand_t(rng, {4, 3});
    const std::vector<int> ids = {0, 2, 2, 4};
    auto rep = check_gradients({table}, [probe, ids](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::gather_rows(v[0], ids), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("mean over unmasked rows") {
    Rng rng(114);
    Tensor x = rand_t(rng, {4, 3});
    Tensor probe = rand_t(rng, {3});
    const std::vector<std::uint8_t> mask = {1, 0, 1, 0};
    {
        Tape t;
        Var y = ops::mean_rows_masked(t.leaf(x), mask);
        for (int j = 0; j < 3; ++j)
            CHECK(y.value()[j] == doctest::Approx(0.5 * (x.at(0, j) + x.at(2, j))));
    }
    auto rep = check_gradients({x}, [probe, mask](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::mean_rows_masked(v[0], mask), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);

    // all-masked input collapses to zeros
    Tape t;
    Var z = ops::mean_rows_masked(t.leaf(x), {0, 0, 0, 0});
    for (int j = 0; j < 3; ++j) CHECK(z.value()[j] == 0.0);
}

TEST_CASE("vecmat gradients") {
    Rng rng(115);
    Tensor w = rand_t(rng, {4});
    Tensor x = rand_t(rng, {4, 3});
    Tensor probe = rand_t(rng, {3});
    auto rep = check_gradients({w, x}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::vecmat(v[0], v[1]), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("strided conv halves spatial extents") {
    Rng rng(116);
    Tensor img = rand_t(rng, {2, 8, 8});
    Tensor w = rand_t(rng, {3, 2, 3, 3});
    Tensor b = rand_t(rng, {3});
    {
        Tape t;
        Var y = ops::conv2d_s2(t.leaf(img), t.leaf(w), t.leaf(b));
        CHECK(y.value().shape() == std::vector<int>{3, 4, 4});
    }
    Tensor probe = rand_t(rng, {3, 4, 4});
    auto rep = check_gradients({img, w, b}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::conv2d_s2(v[0], v[1], v[2]), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("strided conv against direct correlation oracle") {
    // 1x4x4 image, 1 output channel: hand-evaluate one output position.
    Tensor img({1, 4, 4});
    for (int i = 0; i < 16; ++i) img[i] = i + 1;
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b({1}, {0.5});
    Tape t;
    Var y = ops::conv2d_s2(t.leaf(img), t.leaf(w), t.leaf(b));
    // out(0,0): window centered at (0,0) with padding: rows -1..1, cols -1..1
    //   valid entries: (0,0)=1,(0,1)=2,(1,0)=5,(1,1)=6 -> 14 + 0.5
    CHECK(y.value()[0] == doctest::Approx(14.5));
    // out(1,1): centered at (2,2): rows 1..3, cols 1..3 full 3x3 block
    double s = 0;
    for (int yy = 1; yy <= 3; ++yy)
        for (int xx = 1; xx <= 3; ++xx) s += img[yy * 4 + xx];
    CHECK(y.value()[1 * 2 + 1] == doctest::Approx(s + 0.5));
}

TEST_CASE("adaptive average pooling") {
    Rng rng(117);
    Tensor x = rand_t(rng, {2, 6, 6});
    {
        Tape t;
        Var y = ops::adaptive_avg_pool(t.leaf(x), 2);
        CHECK(y.value().shape() == std::vector<int>{2, 2, 2});
        // cell (0, 0,0) = mean of 3x3 block
        double s = 0;
        for (int yy = 0; yy < 3; ++yy)
            for (int xx = 0; xx < 3; ++xx) s += x[yy * 6 + xx];
        CHECK(y.value()[0] == doctest::Approx(s / 9.0));
    }
    Tensor probe = rand_t(rng, {2, 2, 2});
    auto rep = check_gradients({x}, [probe](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::adaptive_avg_pool(v[0], 2), t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("relation matrix value and gradients") {
    // m[k][j] = w1.g_k + w2.h_j + w3.(g_k*h_j), zero at masked words
    Rng rng(118);
    Tensor grid = rand_t(rng, {4, 3});
    Tensor words = rand_t(rng, {5, 3});
    Tensor w = rand_t(rng, {9});
    const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1};
    {
        Tape t;
        Var m = ops::relation_matrix(t.leaf(grid), t.leaf(words), t.leaf(w), mask);
        CHECK(m.value().shape() == std::vector<int>{4, 5});
        for (int k = 0; k < 4; ++k) CHECK(m.value().at(k, 2) == 0.0);
        double expect = 0.0;
        for (int i = 0; i < 3; ++i)
            expect += w[i] * grid.at(1, i) + w[3 + i] * words.at(3, i) +
                      w[6 + i] * grid.at(1, i) * words.at(3, i);
        CHECK(m.value().at(1, 3) == doctest::Approx(expect).epsilon(1e-12));
    }
    Tensor probe = rand_t(rng, {4, 5});
    auto rep = check_gradients({grid, words, w}, [probe, mask](Tape& t, const std::vector<Var>& v) {
        Var m = ops::relation_matrix(v[0], v[1], v[2], mask);
        return ops::sum(ops::mul(m, t.leaf(probe)));
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("max pooling over rows and columns") {
    Tensor m({2, 3}, {1.0, 5.0, 2.0,
                      4.0, 5.0, -1.0});
    const std::vector<std::uint8_t> mask = {1, 1, 0};
    {
        Tape t;
        Var cm = ops::col_max_masked(t.leaf(m, true), mask);
        CHECK(cm.value()[0] == 4.0);
        CHECK(cm.value()[1] == 5.0);
        CHECK(cm.value()[2] == 0.0);  // masked column pools to zero
        t.backward(cm, Tensor({3}, {1.0, 1.0, 1.0}));
        Tensor g = t.grad_or_zeros(Var(&t, 0));
        CHECK(g.at(1, 0) == 1.0);
        CHECK(g.at(0, 1) == 1.0);  // tie in column 1 routes to lowest row index
        CHECK(g.at(1, 1) == 0.0);
        CHECK(g.at(0, 2) == 0.0);
    }
    {
        Tape t;
        Var rm = ops::row_max_masked(t.leaf(m, true), mask);
        CHECK(rm.value()[0] == 5.0);
        CHECK(rm.value()[1] == 5.0);
        t.backward(rm, Tensor({2}, {1.0, 1.0}));
        Tensor g = t.grad_or_zeros(Var(&t, 0));
        CHECK(g.at(0, 1) == 1.0);
        CHECK(g.at(1, 1) == 1.0);
        CHECK(g.at(1, 2) == 0.0);  // masked column never wins
        CHECK_THROWS_AS(ops::row_max_masked(t.leaf(m), {0, 0, 0}), DimensionError);
    }
    // FD check away from ties
    Rng rng(119);
    Tensor mm = rand_t(rng, {4, 5});
    Tensor p1 = rand_t(rng, {5});
    Tensor p2 = rand_t(rng, {4});
    const std::vector<std::uint8_t> cmask = {1, 0, 1, 1, 1};
    auto rep = check_gradients({mm}, [p1, cmask](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::col_max_masked(v[0], cmask), t.leaf(p1)));
    });
    CHECK(rep.max_rel_err < kTol);
    auto rep2 = check_gradients({mm}, [p2, cmask](Tape& t, const std::vector<Var>& v) {
        return ops::sum(ops::mul(ops::row_max_masked(v[0], cmask), t.leaf(p2)));
    });
    CHECK(rep2.max_rel_err < kTol);
}

TEST_CASE("cross entropy value and gradients") {
    {
        Tape t;
        Var l = ops::nll_loss(t.leaf(Tensor({4})), 2);  // uniform logits
        CHECK(l.value().item() == doctest::Approx(std::log(4.0)));
    }
    Rng rng(120);
    Tensor logits = rand_t(rng, {5}, -2.0, 2.0);
    auto rep = check_gradients({logits}, [](Tape&, const std::vector<Var>& v) {
        return ops::nll_loss(v[0], 3);
    });
    CHECK(rep.max_rel_err < kTol);
}

TEST_CASE("backward_multi sums seeded roots linearly") {
    Tensor x({3}, {1.0, 2.0, 3.0});
    Tensor p1({3}, {1.0, 0.0, 2.0});
    Tensor p2({3}, {0.0, 3.0, 1.0});

    Tape t;
    Var vx = t.leaf(x, true);
    Var r1 = ops::sum(ops::mul(vx, t.leaf(p1)));
    Var r2 = ops::sum(ops::mul(vx, t.leaf(p2)));
    t.backward_multi({{r1, Tensor::scalar(1.0)}, {r2, Tensor::scalar(2.0)}});
    Tensor g = t.grad_or_zeros(vx);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(p1[i] + 2.0 * p2[i]));
}

TEST_CASE("gradients skip non-leaf constants") {
    Tape t;
    Var x = t.leaf(Tensor({2}, {1.0, 2.0}), true);
    Var c = t.leaf(Tensor({2}, {3.0, 4.0}), false);
    Var y = ops::sum(ops::mul(x, c));
    t.backward(y);
    CHECK_FALSE(t.has_grad(c.id()));
    Tensor g = t.grad_or_zeros(x);
    CHECK(g[0] == 3.0);
    CHECK(g[1] == 4.0);
}

}  // TEST_SUITE

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "relcl/gradcheck.hpp"
#include "relcl/loss_gradcheck.hpp"
#include "relcl/ops.hpp"
#include "relcl/tape.hpp"

using namespace relcl;

TEST_CASE("rng is deterministic and splits independent streams") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng s1 = Rng(7).stream("alpha");
    Rng s2 = Rng(7).stream("beta");
    CHECK(s1.next_u64() != s2.next_u64());
    CHECK(Rng::derive_seed(7, "x") == Rng::derive_seed(7, "x"));
    CHECK(Rng::derive_seed(7, "x") != Rng::derive_seed(8, "x"));
}

TEST_CASE("rng uniform_int is in range and shuffle is a permutation") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(7) < 7);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto w = v;
    rng.shuffle(w);
    std::sort(w.begin(), w.end());
    CHECK(w == v);
}

TEST_CASE("softmax matches hand values") {
    Tensor s = softmax(Tensor::from_vector({1, 1, 1}));
    for (size_t i = 0; i < 3; ++i) CHECK(s.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    Tensor t = softmax(Tensor::from_vector({0.0, std::log(2.0)}));
    CHECK(t.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(t.at(1) == doctest::Approx(2.0 / 3).epsilon(1e-12));

    CHECK(softmax(Tensor::from_vector({5.0})).at(0) == 1.0);
    CHECK_THROWS_AS(softmax(Tensor({0})), std::domain_error);
}

TEST_CASE("softmax sums to one and is shift-invariant on random inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 1 + rng.uniform_int(12);
        Tensor logits({n});
        for (size_t i = 0; i < n; ++i) logits.at(i) = -50.0 + 100.0 * rng.uniform();
        Tensor p = softmax(logits);
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            CHECK(p.at(i) > 0.0);
            sum += p.at(i);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);

        Tensor shifted = logits;
        const double c = -20.0 + 40.0 * rng.uniform();
        for (size_t i = 0; i < n; ++i) shifted.at(i) += c;
        Tensor q = softmax(shifted);
        for (size_t i = 0; i < n; ++i) CHECK(std::fabs(p.at(i) - q.at(i)) < 1e-12);
    }
}

TEST_CASE("cross_entropy hand values and clamping") {
    CHECK(cross_entropy(Tensor::from_vector({0.7, 0.2, 0.1}), 0).value ==
          doctest::Approx(0.356675).epsilon(1e-6));
    CHECK(cross_entropy(Tensor::from_vector({0.25, 0.25, 0.25, 0.25}), 2).value ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(cross_entropy(Tensor::from_vector({1.0, 0.0}), 0).value == 0.0);

    auto r = cross_entropy(Tensor::from_vector({1.0, 0.0}), 1);
    CHECK(r.clamped);
    CHECK(std::isfinite(r.value));
    CHECK(r.value == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(Tensor::from_vector({0.5, 0.5}), 2), std::invalid_argument);
}

TEST_CASE("cosine_similarity basics") {
    CHECK(cosine_similarity(Tensor::from_vector({1, 0}), Tensor::from_vector({0, 1})) == 0.0);
    CHECK(cosine_similarity(Tensor::from_vector({1, 2, 3}), Tensor::from_vector({1, 2, 3})) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(Tensor::from_vector({1, 0}), Tensor::from_vector({-1, 0})) ==
          doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_similarity(Tensor::from_vector({0, 0}), Tensor::from_vector({1, 0})),
                    std::domain_error);

    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const size_t n = 2 + rng.uniform_int(6);
        Tensor a({n}), b({n});
        for (size_t i = 0; i < n; ++i) {
            a.at(i) = rng.normal();
            b.at(i) = rng.normal();
        }
        const double c = 1e-3 + 10.0 * rng.uniform();
        Tensor ac = a;
        for (size_t i = 0; i < n; ++i) ac.at(i) *= c;
        CHECK(std::fabs(cosine_similarity(ac, b) - cosine_similarity(a, b)) < 1e-12);
        CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-15));
    }
}

TEST_CASE("mean_pool hand values and span checks") {
    Tensor m({2, 2});
    m.at(0, 0) = 2;
    m.at(0, 1) = 4;
    m.at(1, 0) = 4;
    m.at(1, 1) = 8;
    Tensor p = mean_pool(m, 0, 1);
    CHECK(p.at(0) == 3.0);
    CHECK(p.at(1) == 6.0);

    CHECK(mean_pool(m, 1, 1).at(1) == 8.0);

    Tensor t({3, 2});
    for (size_t i = 0; i < 3; ++i) t.at(i, 0) = t.at(i, 1) = static_cast<double>(2 * i + 1);
    Tensor q = mean_pool(t, 0, 2);
    CHECK(q.at(0) == 3.0);
    CHECK(q.at(1) == 3.0);

    CHECK_THROWS_AS(mean_pool(m, 0, 2), std::domain_error);
    CHECK_THROWS_AS(mean_pool(m, 1, 0), std::domain_error);
}

TEST_CASE("backward: sum loss gives all-ones gradient, unused params get zero") {
    Tensor p({3, 2});
    Rng rng(2);
    for (double& v : p.data) v = rng.normal();
    Tensor unused = Tensor::full({2}, 1.0);

    Tape tape;
    NodeId pn = tape.param(p);
    NodeId un = tape.param(unused);
    (void)un;
    NodeId loss = tape.sum_elements(pn);
    tape.backward(loss);
    for (double g : tape.grad_of(p).data) CHECK(g == 1.0);
    for (double g : tape.grad_of(unused).data) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor p = Tensor::full({3}, 1.0);
    Tape tape;
    NodeId pn = tape.param(p);
    CHECK_THROWS_AS(tape.backward(pn), std::invalid_argument);
}

TEST_CASE("softmax + cross-entropy gradient is softmax minus one-hot") {
    Tensor z = Tensor::from_vector({0.3, -1.2, 2.0, 0.1});
    const size_t target = 2;

    Tape tape;
    NodeId zn = tape.param(z);
    NodeId probs = tape.softmax_vec(zn);
    NodeId loss = tape.ce_from_probs(probs, target);
    tape.backward(loss);
    Tensor g1 = tape.grad_of(z);

    Tensor p = softmax(z);
    for (size_t i = 0; i < z.numel(); ++i)
        CHECK(g1.at(i) == doctest::Approx(p.at(i) - (i == target ? 1.0 : 0.0)).epsilon(1e-12));

    Tape tape2;
    NodeId zn2 = tape2.param(z);
    NodeId loss2 = tape2.ce_from_logits(zn2, target);
    tape2.backward(loss2);
    Tensor g2 = tape2.grad_of(z);
    for (size_t i = 0; i < z.numel(); ++i)
        CHECK(g2.at(i) == doctest::Approx(g1.at(i)).epsilon(1e-12));
}

TEST_CASE("grad_check on a quadratic is exact to roundoff") {
    Tensor p({1, 4});
    Rng rng(9);
    for (double& v : p.data) v = rng.normal();
    auto build = [&](Tape& tape) {
        NodeId pn = tape.param(p);
        return tape.matmul(pn, tape.transpose(pn)); // p . p^T, scalar-shaped
    };
    auto report = grad_check(build, {&p}, 1e-6);
    CHECK(report.max_rel_err < 1e-8);
    CHECK(report.coords_checked == 4);
    CHECK_THROWS_AS(grad_check(build, {&p}, 0.1), std::invalid_argument);
}

namespace {

// Composite graph touching a given op; gradient checked against finite
// differences.
void check_op_gradient(const std::function<NodeId(Tape&, std::vector<NodeId>&)>& make,
                       std::vector<Tensor>& params, double tol = 1e-6) {
    std::vector<Tensor*> ptrs;
    for (auto& t : params) ptrs.push_back(&t);
    auto build = [&](Tape& tape) {
        std::vector<NodeId> ids;
        for (auto& t : params) ids.push_back(tape.param(t));
        return make(tape, ids);
    };
    auto report = grad_check(build, ptrs, 1e-6);
    CHECK(report.max_rel_err < tol);
}

Tensor rand_tensor(std::vector<size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

} // namespace

TEST_CASE("per-op gradients match finite differences") {
    Rng rng(21);

    SUBCASE("matmul + transpose + add + scale") {
        std::vector<Tensor> params{rand_tensor({3, 4}, rng), rand_tensor({4, 3}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                NodeId prod = t.matmul(p[0], p[1]);                    // 3x3
                NodeId sym = t.add(prod, t.transpose(prod));
                return t.sum_elements(t.scale(sym, 0.7));
            },
            params);
    }
    SUBCASE("add_row_broadcast + gelu") {
        std::vector<Tensor> params{rand_tensor({4, 5}, rng), rand_tensor({5}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                return t.sum_elements(t.gelu(t.add_row_broadcast(p[0], p[1])));
            },
            params);
    }
    SUBCASE("softmax_rows weighted by constants") {
        std::vector<Tensor> params{rand_tensor({3, 6}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                NodeId sm = t.softmax_rows(p[0]);
                return t.sum_elements(t.gelu(sm));
            },
            params);
    }
    SUBCASE("layer_norm_rows") {
        std::vector<Tensor> params{rand_tensor({4, 6}, rng), rand_tensor({6}, rng, 0.5),
                                   rand_tensor({6}, rng, 0.5)};
        params[1] = Tensor::full({6}, 1.0);
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                return t.sum_elements(t.gelu(t.layer_norm_rows(p[0], p[1], p[2])));
            },
            params);
    }
    SUBCASE("mean_rows_range + row + slice_cols + concat") {
        std::vector<Tensor> params{rand_tensor({5, 6}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                NodeId pooled = t.mean_rows_range(p[0], 1, 3);      // (6)
                NodeId r = t.row(p[0], 0);                          // (6)
                NodeId cat = t.concat_vec(pooled, r);               // (12)
                NodeId sliced = t.slice_cols(p[0], 2, 5);           // 5x3
                NodeId both = t.concat_cols({sliced, sliced});      // 5x6
                return t.combine_scalars({t.sum_elements(cat), t.sum_elements(both)}, {1.0, 0.5});
            },
            params);
    }
    SUBCASE("embed_rows / select_rows scatter gradient") {
        std::vector<Tensor> params{rand_tensor({6, 4}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                NodeId rows = t.embed_rows(p[0], {0, 2, 2, 5});
                return t.sum_elements(t.gelu(rows));
            },
            params);
    }
    SUBCASE("cosine") {
        std::vector<Tensor> params{rand_tensor({5}, rng), rand_tensor({5}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) { return t.cosine(p[0], p[1]); }, params);
    }
    SUBCASE("affine_vec") {
        std::vector<Tensor> params{rand_tensor({3, 5}, rng), rand_tensor({5}, rng),
                                   rand_tensor({3}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                return t.ce_from_logits(t.affine_vec(p[0], p[1], p[2]), 1);
            },
            params);
    }
    SUBCASE("stack_scalars + weighted_lse") {
        std::vector<Tensor> params{rand_tensor({4}, rng), rand_tensor({4}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                NodeId c1 = t.cosine(p[0], p[1]);
                NodeId c2 = t.scale(c1, -1.0);
                NodeId c3 = t.sum_elements(p[0]);
                NodeId stacked = t.stack_scalars({c1, c2, c3});
                return t.weighted_lse(stacked, {1.0, 2.5, 0.3});
            },
            params);
    }
    SUBCASE("sub") {
        std::vector<Tensor> params{rand_tensor({3, 3}, rng), rand_tensor({3, 3}, rng)};
        check_op_gradient(
            [](Tape& t, std::vector<NodeId>& p) {
                return t.sum_elements(t.gelu(t.sub(p[0], p[1])));
            },
            params);
    }
}

TEST_CASE("weighted_lse zero weights drop terms and all-zero weights throw") {
    Tensor s = Tensor::from_vector({1.0, 100.0, 2.0});
    Tape tape;
    NodeId sn = tape.param(s);
    NodeId out = tape.weighted_lse(sn, {1.0, 0.0, 1.0});
    const double expect = std::log(std::exp(1.0 - 2.0) + std::exp(0.0)) + 2.0;
    CHECK(tape.value(out).item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(tape.weighted_lse(sn, {0.0, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("loss gradcheck suite passes at a small sample") {
    const auto outcomes = run_loss_gradchecks(2, 1e-6);
    REQUIRE(outcomes.size() == 5);
    for (const auto& o : outcomes) {
        INFO(o.loss);
        CHECK(o.max_rel_err < 1e-5);
        CHECK(o.coords_checked > 0);
    }
}

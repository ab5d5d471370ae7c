#include <cmath>
#include <functional>

#include "doctest.h"
#include "fixtures.hpp"
#include "srp/errors.hpp"
#include "srp/nn.hpp"

using namespace srp;
using namespace srp::nn;
using namespace srp::testing;

namespace {

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-1.0, 1.0);
    }
    return t;
}

double forward(std::vector<Parameter>& params, const Builder& build) {
    Tape tape;
    std::vector<Var> vars;
    for (auto& p : params) {
        vars.push_back(tape.parameter(p));
    }
    return build(tape, vars).value()[0];
}

/// Central-difference check of every parameter entry against backward().
void check_gradients(std::vector<Parameter>& params, const Builder& build, double tol = 1e-6) {
    for (auto& p : params) {
        p.zero_grad();
    }
    {
        Tape tape;
        std::vector<Var> vars;
        for (auto& p : params) {
            vars.push_back(tape.parameter(p));
        }
        tape.backward(build(tape, vars));
    }
    const double h = 1e-6;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double up = forward(params, build);
            p.value[i] = saved - h;
            const double down = forward(params, build);
            p.value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            CHECK(p.grad[i] == doctest::Approx(numeric).epsilon(tol).scale(1.0));
        }
    }
}

std::vector<Parameter> params_of(Rng& rng, std::vector<std::pair<std::size_t, std::size_t>> shapes) {
    std::vector<Parameter> out;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        out.emplace_back("p" + std::to_string(i), shapes[i].first, shapes[i].second);
        out.back().value = random_tensor(rng, shapes[i].first, shapes[i].second);
    }
    return out;
}

/// Reduces any tensor to a scalar with fixed weights so every entry matters.
Var reduce(Tape& tape, Var x) {
    Tensor w(x.cols(), 1);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 0.3 + 0.1 * static_cast<double>(i);
    }
    return mean_rows(matmul(x, tape.constant(w)));
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t(2, 3, 1.5);
    CHECK(t.shape() == std::vector<std::size_t>{2, 3});
    t(1, 2) = 4.0;
    CHECK(t.row(1)[2] == 4.0);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK(Tensor::row_vector({1, 2}).rows() == 1);
}

TEST_CASE("op values") {
    Tape tape;
    const Var a = tape.constant(Tensor(2, 2, std::vector<double>{1, 2, 3, 4}));
    const Var b = tape.constant(Tensor(2, 2, std::vector<double>{5, 6, 7, 8}));
    CHECK(matmul(a, b).value() == Tensor(2, 2, std::vector<double>{19, 22, 43, 50}));
    CHECK(relu(tape.constant(Tensor::row_vector({-1, 2}))).value() == Tensor::row_vector({0, 2}));
    CHECK(sigmoid(tape.constant(Tensor::scalar(0))).value()[0] == 0.5);
    const Tensor s = softmax(tape.constant(Tensor::row_vector({1000, 1000}))).value();
    CHECK(s[0] == 0.5);
    CHECK(s[1] == 0.5);
    CHECK(mean_rows(a).value() == Tensor::row_vector({2, 3}));
    const std::vector<std::size_t> src{0, 1, 1}, dst{0, 0, 2};
    const Tensor seg = segment_mean(a, src, dst, 3).value();
    CHECK(seg == Tensor(3, 2, std::vector<double>{2, 3, 0, 0, 3, 4}));
    const std::vector<std::size_t> idx{1, 1, 0};
    CHECK(gather_rows(a, idx).value() == Tensor(3, 2, std::vector<double>{3, 4, 3, 4, 1, 2}));
    Rng rng(1);
    CHECK(dropout(a, 0.0, rng).value() == a.value());

    const std::vector<double> labels{1.0};
    CHECK(bce(tape.constant(Tensor::scalar(1.0)), labels).value()[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::isfinite(bce(tape.constant(Tensor::scalar(0.0)), labels).value()[0]));
}

TEST_CASE("finite-difference gradients of every op") {
    Rng rng(9);
    SUBCASE("matmul + add_row + relu") {
        auto p = params_of(rng, {{3, 4}, {4, 2}, {1, 2}});
        check_gradients(p, [](Tape& t, std::vector<Var>& v) { return reduce(t, relu(add_row(matmul(v[0], v[1]), v[2]))); });
    }
    SUBCASE("add, mul, scale, sigmoid") {
        auto p = params_of(rng, {{2, 3}, {2, 3}});
        check_gradients(p, [](Tape& t, std::vector<Var>& v) {
            return reduce(t, sigmoid(scale(mul(add(v[0], v[1]), v[1]), 1.7)));
        });
    }
    SUBCASE("softmax + cross entropy") {
        auto p = params_of(rng, {{3, 4}});
        check_gradients(p, [](Tape&, std::vector<Var>& v) {
            static const std::vector<std::size_t> labels{0, 3, 1};
            return cross_entropy(softmax(v[0]), labels);
        });
    }
    SUBCASE("bce and mse") {
        auto p = params_of(rng, {{4, 1}});
        check_gradients(p, [](Tape&, std::vector<Var>& v) {
            static const std::vector<double> labels{1, 0, 0, 1};
            return add(bce(sigmoid(v[0]), labels), mse(v[0], labels));
        });
    }
    SUBCASE("concat, gather, segment mean, broadcast") {
        auto p = params_of(rng, {{3, 2}, {3, 1}, {1, 3}});
        check_gradients(p, [](Tape& t, std::vector<Var>& v) {
            static const std::vector<std::size_t> idx{2, 0, 2, 1};
            static const std::vector<std::size_t> src{0, 1, 3, 2}, dst{1, 1, 0, 2};
            const std::vector<Var> cols{v[0], v[1]};
            const Var c = concat_cols(cols);
            const Var g = gather_rows(c, idx);
            const Var s = segment_mean(g, src, dst, 3);
            const std::vector<Var> rows{s, broadcast_rows(v[2], 2)};
            return reduce(t, concat_rows(rows));
        });
    }
    SUBCASE("linear") {
        auto p = params_of(rng, {{5, 3}, {3, 2}, {1, 2}});
        check_gradients(p, [](Tape& t, std::vector<Var>& v) { return reduce(t, linear(v[0], v[1], v[2])); });
    }
}

TEST_CASE("gradients accumulate across backward passes") {
    Parameter p("w", 1, 1);
    p.value[0] = 2.0;
    p.zero_grad();
    for (int i = 0; i < 2; ++i) {
        Tape tape;
        const Var w = tape.parameter(p);
        tape.backward(mul(w, w));
    }
    CHECK(p.grad[0] == 8.0);
}

TEST_CASE("adam minimizes a quadratic and zeroes gradients") {
    Parameter p("w", 1, 2);
    p.value = Tensor::row_vector({3.0, -2.0});
    p.zero_grad();
    Parameter* ps[] = {&p};
    AdamOptions opt;
    opt.learning_rate = 0.05;
    for (int step = 0; step < 2000; ++step) {
        Tape tape;
        const Var w = tape.parameter(p);
        tape.backward(reduce(tape, mul(w, w)));
        adam_step(ps, opt);
    }
    CHECK(p.grad[0] == 0.0);
    CHECK(std::abs(p.value[0]) < 1e-2);
    CHECK(std::abs(p.value[1]) < 1e-2);
    CHECK(p.steps == 2000);
}

TEST_CASE("checkpoint round trip and shape mismatch") {
    Rng rng(3);
    auto a = params_of(rng, {{2, 3}, {1, 4}});
    const Parameter* ca[] = {&a[0], &a[1]};
    TempDir dir;
    save_checkpoint(dir.path() / "m.bin", ca);
    CHECK(read_text(dir.path() / "m.bin").rfind("SRPCKPT1", 0) == 0);

    auto b = params_of(rng, {{2, 3}, {1, 4}});
    Parameter* pb[] = {&b[0], &b[1]};
    load_checkpoint(dir.path() / "m.bin", pb);
    CHECK(b[0].value == a[0].value);
    CHECK(b[1].value == a[1].value);

    auto c = params_of(rng, {{3, 2}, {1, 4}});
    Parameter* pc[] = {&c[0], &c[1]};
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.bin", pc), DataError);
}

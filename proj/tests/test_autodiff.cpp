#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rng.hpp"
#include "tape.hpp"

#include <cmath>
#include <vector>

using namespace actseg;

namespace {

Tensor rand_tensor(Rng& rng, int r, int c, double lo = -2.0, double hi = 2.0) {
    Tensor t(r, c);
    for (auto& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

// Reduce an arbitrary tape output to a scalar node: sum(out .* fixed weights).
Value scalarize(Tape& tape, Value out) {
    const Tensor& od = tape.data(out);
    Tensor w(od.rows, od.cols);
    for (size_t i = 0; i < w.size(); ++i) w.v[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    Value prod = tape.mul(out, tape.constant(std::move(w)));
    Value acc = tape.zeros(1, 1);
    const Tensor& pd = tape.data(prod);
    for (int r = 0; r < pd.rows; ++r) {
        Value row = pd.rows > 1 ? tape.slice_rows(prod, r, r + 1) : prod;
        for (int c = 0; c < pd.cols; ++c) {
            Value cell = pd.cols > 1 ? tape.slice_col(row, c) : row;
            acc = tape.add(acc, cell);
        }
    }
    return acc;
}

// Central-difference check of a scalar-valued builder over one input tensor.
double primitive_max_rel_err(const std::function<Value(Tape&, Value)>& build, Tensor input,
                             double step = 1e-6) {
    auto f = [&](std::span<const double> theta, std::span<double> grad_out) -> double {
        Tape tape;
        Tensor in = input;
        std::copy(theta.begin(), theta.end(), in.v.begin());
        Value x = tape.leaf(std::move(in));
        Value loss = scalarize(tape, build(tape, x));
        if (!grad_out.empty()) {
            tape.backward(loss);
            const Tensor& g = tape.grad(x);
            std::copy(g.v.begin(), g.v.end(), grad_out.begin());
        }
        return tape.scalar(loss);
    };
    std::vector<double> theta(input.v);
    auto res = grad_check(f, theta, step);
    return res.max_rel_err;
}

} // namespace

TEST_CASE("sigmoid and tanh fixed points") {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(0.0));
    Value s = tape.sigmoid(x);
    CHECK(tape.scalar(s) == doctest::Approx(0.5).epsilon(1e-15));

    Value t = tape.tanh(x);
    CHECK(tape.scalar(t) == doctest::Approx(0.0).epsilon(1e-15));
    tape.backward(t);
    CHECK(tape.grad(x).v[0] == doctest::Approx(1.0).epsilon(1e-15)); // tanh'(0) = 1
}

TEST_CASE("softmax cross entropy of uniform logits is ln(vocab)") {
    Tape tape;
    Value logits = tape.leaf(Tensor::column({0.0, 0.0, 0.0}));
    Value loss = tape.softmax_xent(logits, 1);
    // independent oracle: direct summation of -log(exp(x_t)/sum exp(x_i))
    double z = 0.0;
    for (double x : {0.0, 0.0, 0.0}) z += std::exp(x);
    const double expected = std::log(z) - 0.0;
    CHECK(tape.scalar(loss) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(tape.scalar(loss) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("backward on simple compositions") {
    SUBCASE("x*x at x=3") {
        Tape tape;
        Value x = tape.leaf(Tensor::scalar(3.0));
        Value y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x).v[0] == doctest::Approx(6.0));
    }
    SUBCASE("sigmoid at 0") {
        Tape tape;
        Value x = tape.leaf(Tensor::scalar(0.0));
        Value y = tape.sigmoid(x);
        tape.backward(y);
        CHECK(tape.grad(x).v[0] == doctest::Approx(0.25));
    }
    SUBCASE("a*b + b at a=2 b=5") {
        Tape tape;
        Value a = tape.leaf(Tensor::scalar(2.0));
        Value b = tape.leaf(Tensor::scalar(5.0));
        Value y = tape.add(tape.mul(a, b), b);
        tape.backward(y);
        CHECK(tape.grad(a).v[0] == doctest::Approx(5.0));
        CHECK(tape.grad(b).v[0] == doctest::Approx(3.0));
    }
}

TEST_CASE("backward accumulates across calls and zero_grad resets") {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(3.0));
    Value y = tape.mul(x, x);
    tape.backward(y);
    tape.backward(y);
    CHECK(tape.grad(x).v[0] == doctest::Approx(12.0));
    tape.zero_grad();
    tape.backward(y);
    CHECK(tape.grad(x).v[0] == doctest::Approx(6.0));
}

TEST_CASE("backward linearity: grad(l1+l2) = grad(l1) + grad(l2)") {
    Rng rng(7);
    Tape tape;
    Value x = tape.leaf(rand_tensor(rng, 3, 1));
    Value w = tape.leaf(rand_tensor(rng, 1, 3));
    Value l1 = tape.matmul(w, tape.tanh(x));
    Value l2 = tape.matmul(w, tape.mul(x, x));
    Value sum = tape.add(l1, l2);
    tape.backward(sum);
    Tensor combined = tape.grad(x);

    tape.zero_grad();
    tape.backward(l1);
    tape.backward(l2);
    const Tensor& separate = tape.grad(x);
    for (size_t i = 0; i < combined.size(); ++i) {
        CHECK(combined.v[i] == doctest::Approx(separate.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("loss must be scalar") {
    Tape tape;
    Value x = tape.leaf(Tensor::column({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), NumericError);
}

TEST_CASE("shape mismatch names the primitive and shapes") {
    Tape tape;
    Value a = tape.leaf(Tensor(3, 2));
    Value b = tape.leaf(Tensor(4, 1));
    try {
        tape.matmul(a, b);
        FAIL("expected throw");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("3x2") != std::string::npos);
        CHECK(msg.find("4x1") != std::string::npos);
    }
}

TEST_CASE("non-finite input rejected") {
    Tape tape;
    Tensor bad(2, 1);
    bad.v[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(tape.leaf(bad), NumericError);

    Value ok = tape.leaf(Tensor::column({1.0, 2.0}));
    Value big = tape.leaf(Tensor::column({1e308, 1e308}));
    Value sum = tape.add(big, big); // overflows to inf
    CHECK_THROWS_AS(tape.mul(sum, ok), NumericError);
}

TEST_CASE("every primitive matches central differences on random input") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        // unary elementwise
        for (auto build : {
                 +[](Tape& t, Value x) { return t.sigmoid(x); },
                 +[](Tape& t, Value x) { return t.tanh(x); },
                 +[](Tape& t, Value x) { return t.scale(x, 1.7); },
             }) {
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 4, 1)) < 1e-6);
        }
        // matmul: dL/dB with fixed A
        {
            Tensor A = rand_tensor(rng, 3, 4);
            auto build = [&](Tape& t, Value x) { return t.matmul(t.constant(A), x); };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 4, 2)) < 1e-6);
            auto buildA = [&](Tape& t, Value x) { return t.matmul(x, t.constant(A)); };
            CHECK(primitive_max_rel_err(buildA, rand_tensor(rng, 2, 3)) < 1e-6);
        }
        // add with bias broadcast
        {
            Tensor A = rand_tensor(rng, 3, 4);
            auto build = [&](Tape& t, Value x) { return t.add(t.constant(A), x); };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 3, 1)) < 1e-6);
        }
        // elementwise mul
        {
            Tensor B = rand_tensor(rng, 3, 2);
            auto build = [&](Tape& t, Value x) { return t.mul(x, t.constant(B)); };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 3, 2)) < 1e-6);
        }
        // weighted accumulate, scalar weight: gradient w.r.t. p, x and acc
        {
            Tensor X = rand_tensor(rng, 3, 1);
            Tensor ACC = rand_tensor(rng, 3, 1);
            auto build_p = [&](Tape& t, Value p) {
                return t.wacc(t.constant(ACC), p, t.constant(X));
            };
            CHECK(primitive_max_rel_err(build_p, rand_tensor(rng, 1, 1)) < 1e-6);
            Tensor P = rand_tensor(rng, 1, 1);
            auto build_x = [&](Tape& t, Value x) {
                return t.wacc(t.constant(ACC), t.constant(P), x);
            };
            CHECK(primitive_max_rel_err(build_x, rand_tensor(rng, 3, 1)) < 1e-6);
        }
        // weighted accumulate, row weights over columns
        {
            Tensor X = rand_tensor(rng, 3, 4);
            Tensor ACC = rand_tensor(rng, 3, 4);
            auto build_p = [&](Tape& t, Value p) {
                return t.wacc(t.constant(ACC), p, t.constant(X));
            };
            CHECK(primitive_max_rel_err(build_p, rand_tensor(rng, 1, 4)) < 1e-6);
        }
        // concat + slice
        {
            Tensor B = rand_tensor(rng, 2, 1);
            auto build = [&](Tape& t, Value x) {
                Value cat = t.vstack2(x, t.constant(B));
                return t.slice_rows(cat, 1, 4);
            };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 3, 1)) < 1e-6);
            auto build_h = [&](Tape& t, Value x) {
                Value parts[2] = {x, x};
                return t.slice_col(t.hstack(parts), 1);
            };
            CHECK(primitive_max_rel_err(build_h, rand_tensor(rng, 3, 2)) < 1e-6);
        }
        // lookup
        {
            auto build = [&](Tape& t, Value x) {
                const int rows[3] = {2, 0, 2};
                Value gathered = t.lookup_rows(x, rows);
                return t.add(gathered, t.lookup_row(x, 1));
            };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 3, 2)) < 1e-6);
        }
        // softmax (masked)
        {
            std::vector<uint8_t> mask = {1, 1, 0, 1};
            auto build = [&](Tape& t, Value x) { return t.softmax(x, &mask); };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 4, 1)) < 1e-6);
        }
        // softmax cross entropy
        {
            auto build = [&](Tape& t, Value x) { return t.softmax_xent(x, 2); };
            CHECK(primitive_max_rel_err(build, rand_tensor(rng, 5, 1)) < 1e-6);
        }
    }
}

TEST_CASE("grad_check harness on closed forms") {
    SUBCASE("quadratic is exact up to rounding") {
        std::vector<double> theta = {3.0};
        auto f = [](std::span<const double> th, std::span<double> g) {
            if (!g.empty()) g[0] = 2.0 * th[0];
            return th[0] * th[0];
        };
        auto res = grad_check(f, theta, 1e-5);
        CHECK(res.max_rel_err <= 1e-8);
    }
    SUBCASE("constant function has zero error") {
        std::vector<double> theta = {1.0, -2.0};
        auto f = [](std::span<const double>, std::span<double> g) {
            for (auto& x : g) x = 0.0;
            return 4.2;
        };
        auto res = grad_check(f, theta, 1e-5);
        CHECK(res.max_rel_err == 0.0);
    }
    SUBCASE("rejects non-finite objective naming the coordinate") {
        std::vector<double> theta = {0.0};
        auto f = [](std::span<const double> th, std::span<double>) {
            return th[0] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
        };
        CHECK_THROWS_AS(grad_check(f, theta, 1e-5), NumericError);
    }
}

TEST_CASE("parameters stage once and receive gradients") {
    Parameter p("w", 2, 1);
    p.value.v = {1.5, -0.5};
    Tape tape;
    Value w1 = tape.param(p);
    Value w2 = tape.param(p);
    CHECK(w1.idx == w2.idx);
    Value loss = tape.matmul(tape.constant(Tensor{[] {
                                 Tensor t(1, 2);
                                 t.v = {2.0, 3.0};
                                 return t;
                             }()}),
                             w1);
    tape.backward(loss);
    tape.write_param_grads();
    CHECK(p.grad.v[0] == doctest::Approx(2.0));
    CHECK(p.grad.v[1] == doctest::Approx(3.0));
}

TEST_CASE("tape truncation drops nodes past the mark") {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(1.0));
    const size_t mark = tape.mark();
    tape.mul(x, x);
    tape.mul(x, x);
    CHECK(tape.size() == 3);
    tape.truncate(mark);
    CHECK(tape.size() == 1);
    // tape remains usable
    Value y = tape.add(x, x);
    tape.backward(y);
    CHECK(tape.grad(x).v[0] == doctest::Approx(2.0));
}

TEST_CASE("forward evaluation is reproducible") {
    auto run = [] {
        Rng rng(123);
        Tape tape;
        Value a = tape.leaf(rand_tensor(rng, 4, 3));
        Value b = tape.leaf(rand_tensor(rng, 3, 2));
        Value y = tape.tanh(tape.matmul(a, b));
        return tape.data(y).v;
    };
    CHECK(run() == run());
}

#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "mpnn/network.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using Catch::Matchers::WithinAbs;
using namespace mpnn;

namespace {

NetworkArch small_arch(Activation act = Activation::SiLU) {
    NetworkArch a;
    a.input_dim = 1;
    a.hidden = {4, 4, 4};
    a.activation = act;
    return a;
}

Eigen::MatrixXd random_batch(int dim, long n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::MatrixXd x(dim, n);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    return x;
}

} // namespace

TEST_CASE("parameter count and layout") {
    NetworkArch a;
    a.input_dim = 3;
    a.hidden = {32, 128, 128};
    CHECK(a.param_count() == 32 * 3 + 32 + 128 * 32 + 128 + 128 * 128 + 128 + 128 + 1);
    const NetworkParams p(a);
    CHECK(p.size() == a.param_count());
    CHECK(p.layout().blocks[7].offset == a.param_count() - 1);

    a.hidden = {32, 64, 128};
    CHECK_THROWS_AS(a.validate(), InputError);
    a.hidden = {32, 256, 256};
    CHECK_THROWS_AS(a.validate(), InputError);
}

TEST_CASE("zero parameters give a zero potential") {
    for (auto act : {Activation::Tanh, Activation::SiLU, Activation::ReLU}) {
        NetworkArch a = small_arch(act);
        a.input_dim = 3;
        const auto p = init_params(a, 0.0, 1);
        CHECK(forward_batch(p, random_batch(3, 10, 2)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("initialization is deterministic and small at delta = 0.01") {
    NetworkArch a;
    a.input_dim = 3;
    a.hidden = {128, 128, 128};
    const auto p = init_params(a, 0.01, 77);
    const auto q = init_params(a, 0.01, 77);
    CHECK(p.flat() == q.flat());
    CHECK(init_params(a, 0.01, 78).flat() != p.flat());

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd x(3, 1000);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    for (auto act : {Activation::Tanh, Activation::SiLU, Activation::ReLU}) {
        a.activation = act;
        CHECK(forward_batch(init_params(a, 0.01, 77), x).cwiseAbs().maxCoeff() < 0.1);
    }
    CHECK_THROWS_AS(init_params(a, -1.0, 1), InputError);
}

TEST_CASE("forward pass matches a hand-written evaluation") {
    const auto p = init_params(small_arch(Activation::Tanh), 1.0, 5);
    const double x = 0.37;
    Eigen::VectorXd h1 = (p.weight(0) * x + p.bias(0)).array().tanh();
    Eigen::VectorXd h2 = (p.weight(1) * h1 + p.bias(1)).array().tanh();
    Eigen::VectorXd h3 = (p.weight(2) * h2 + p.bias(2)).array().tanh().matrix() + h2;
    const double expected = (p.weight(3) * h3)(0, 0) + p.bias(3)[0];
    CHECK_THAT(forward(p, Coordinate(&x, 1)), WithinAbs(expected, 1e-14));
}

TEST_CASE("residual skip passes the second layer through") {
    // With W3 = 0 and b3 = 0 the third activation vanishes and h3 = h2.
    auto p = init_params(small_arch(Activation::Tanh), 1.0, 6);
    p.weight(2).setZero();
    p.bias(2).setZero();
    const double x = -0.8;
    Eigen::VectorXd h1 = (p.weight(0) * x + p.bias(0)).array().tanh();
    Eigen::VectorXd h2 = (p.weight(1) * h1 + p.bias(1)).array().tanh();
    CHECK_THAT(forward(p, Coordinate(&x, 1)), WithinAbs((p.weight(3) * h2)(0, 0) + p.bias(3)[0], 1e-14));
}

TEST_CASE("batched and pointwise evaluation agree") {
    NetworkArch a = small_arch();
    a.input_dim = 3;
    const auto p = init_params(a, 1.0, 8);
    const auto x = random_batch(3, 16, 9);
    const auto u = forward_batch(p, x);
    for (long i = 0; i < x.cols(); ++i)
        CHECK(u[i] == Catch::Approx(forward(p, Coordinate(x.col(i).data(), 3))).epsilon(1e-14));
    Eigen::MatrixXd same(3, 4);
    same.colwise() = x.col(0);
    const auto v = forward_batch(p, same);
    CHECK((v.array() == v[0]).all());
    CHECK_THROWS_AS(forward_batch(p, random_batch(2, 4, 1)), InputError);
}

TEST_CASE("non-finite activations report the layer") {
    auto p = init_params(small_arch(), 1.0, 3);
    p.weight(1)(0, 0) = std::numeric_limits<double>::infinity();
    const double x = 0.5;
    CHECK_THROWS_WITH(forward(p, Coordinate(&x, 1)), Catch::Matchers::ContainsSubstring("layer 2"));
}

TEST_CASE("param_gradient matches central differences") {
    for (auto act : {Activation::Tanh, Activation::SiLU}) {
        const auto p = init_params(small_arch(act), 1.0, 21);
        const auto x = random_batch(1, 8, 22);
        Eigen::RowVectorXd w(8);
        std::mt19937_64 rng(23);
        std::normal_distribution<double> g;
        for (auto& v : w) v = g(rng);
        const auto grad = param_gradient(p, x, w);
        auto f = [&](const Eigen::VectorXd& theta) {
            NetworkParams q = p;
            q.flat() = theta;
            return forward_batch(q, x).dot(w);
        };
        CHECK(test_support::max_relative_gradient_error(f, p.flat(), grad) < 1e-6);
    }
}

TEST_CASE("single-sample gradient is the Jacobian row") {
    const auto p = init_params(small_arch(), 1.0, 31);
    const double x = 0.9;
    const Eigen::MatrixXd batch = Eigen::MatrixXd::Constant(1, 1, x);
    const auto grad = param_gradient(p, batch, Eigen::RowVectorXd::Ones(1));
    CHECK(grad[p.size() - 1] == 1.0); // dU/db4
    auto f = [&](const Eigen::VectorXd& theta) {
        NetworkParams q = p;
        q.flat() = theta;
        return forward(q, Coordinate(&x, 1));
    };
    CHECK(test_support::max_relative_gradient_error(f, p.flat(), grad) < 1e-6);
    CHECK_THROWS_AS(param_gradient(p, batch, Eigen::RowVectorXd::Ones(2)), InputError);
}

TEST_CASE("gradient is linear in the upstream weights") {
    const auto p = init_params(small_arch(), 1.0, 41);
    const auto x = random_batch(1, 5, 42);
    Eigen::RowVectorXd a = Eigen::RowVectorXd::LinSpaced(5, -1.0, 1.0);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::LinSpaced(5, 2.0, 0.5);
    const auto lhs = param_gradient(p, x, 2.0 * a + 3.0 * b);
    const auto rhs = 2.0 * param_gradient(p, x, a) + 3.0 * param_gradient(p, x, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Adam first step moves every component by eta") {
    AdamState s(3, 0.01);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd g(3);
    g << 2.0, -0.5, 1e-3;
    adam_step(theta, s, g);
    CHECK_THAT(theta[0], WithinAbs(-0.01, 1e-8));
    CHECK_THAT(theta[1], WithinAbs(0.01, 1e-8));
    CHECK_THAT(theta[2], WithinAbs(-0.01, 1e-7));
}

TEST_CASE("Adam with a constant gradient steps by eta") {
    AdamState s(2, 1e-3);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
    const Eigen::VectorXd g = Eigen::Vector2d(0.3, -4.0);
    for (int i = 0; i < 200; ++i) {
        const Eigen::VectorXd before = theta;
        adam_step(theta, s, g);
        CHECK_THAT(std::abs(theta[0] - before[0]), WithinAbs(1e-3, 1e-9));
        CHECK_THAT(std::abs(theta[1] - before[1]), WithinAbs(1e-3, 1e-9));
    }
}

TEST_CASE("Adam minimizes a quadratic bowl") {
    AdamState s(2, 0.1);
    Eigen::VectorXd theta = Eigen::Vector2d(1.0, 1.0);
    for (int i = 0; i < 500; ++i) adam_step(theta, s, theta);
    CHECK(theta.norm() < 1e-3);
    Eigen::VectorXd wrong(3);
    CHECK_THROWS_AS(adam_step(theta, s, wrong), InputError);
}

TEST_CASE("checkpoint round trip is exact") {
    NetworkArch a;
    a.input_dim = 3;
    a.hidden = {8, 16, 16};
    a.activation = Activation::Tanh;
    const auto p = init_params(a, 0.37, 99);
    const auto path = std::filesystem::temp_directory_path() / "mpnn_test_checkpoint.json";
    save_checkpoint(p, path);
    const auto q = load_checkpoint(path);
    CHECK(q.arch() == p.arch());
    CHECK(q.flat() == p.flat());
    const auto x = random_batch(3, 20, 4);
    CHECK(forward_batch(q, x) == forward_batch(p, x));
    std::filesystem::remove(path);

    auto j = to_json(p);
    j["layers"][2]["rows"] = 3;
    CHECK_THROWS_AS(params_from_json(j), InputError);
    j = to_json(p);
    j["format"] = "other";
    CHECK_THROWS_AS(params_from_json(j), InputError);
}

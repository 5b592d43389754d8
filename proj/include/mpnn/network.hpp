#pragma once

// Potential model U(r): three hidden layers (SiLU by default) with an additive skip from
// the second hidden layer into the third, and a linear scalar head.
//
//   h1 = act(W1 r + b1)
//   h2 = act(W2 h1 + b2)
//   h3 = act(W3 h2 + b3) + h2
//   U  = W4 h3 + b4
//
// All parameters live in one flat vector so the optimizer can treat them as
// a single array; layer accessors are Eigen maps into that vector.

#include "mpnn/errors.hpp"
#include "mpnn/wavefunction.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace mpnn {

enum class Activation { Tanh, ReLU, SiLU };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::ReLU: return "relu";
    default: return "silu";
    }
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::ReLU;
    if (s == "silu") return Activation::SiLU;
    throw InputError("unknown activation '" + s + "' (expected tanh, relu or silu)");
}

namespace detail {
// Applies the activation in place; `deriv` receives act'(z).
inline void activate(Activation a, Eigen::MatrixXd& z, Eigen::MatrixXd& deriv) {
    switch (a) {
    case Activation::Tanh:
        z = z.array().tanh();
        deriv = 1.0 - z.array().square();
        break;
    case Activation::ReLU:
        deriv = (z.array() > 0.0).cast<double>();
        z = z.cwiseMax(0.0);
        break;
    case Activation::SiLU: {
        const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
        deriv = sig * (1.0 + z.array() * (1.0 - sig));
        z = z.array() * sig;
        break;
    }
    }
}
} // namespace detail

struct NetworkArch {
    int input_dim = 1;
    std::array<int, 3> hidden{32, 128, 128};
    Activation activation = Activation::SiLU;

    void validate() const {
        if (input_dim < 1) throw InputError("input_dim must be positive");
        for (int h : hidden)
            if (h < 1 || h > 128) throw InputError("hidden widths must lie in [1, 128]");
        if (hidden[1] != hidden[2]) throw InputError("residual skip needs hidden[1] == hidden[2]");
    }

    long param_count() const {
        const long d = input_dim, a = hidden[0], b = hidden[1], c = hidden[2];
        return a * d + a + b * a + b + c * b + c + c + 1;
    }

    friend bool operator==(const NetworkArch&, const NetworkArch&) = default;
};

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Offsets of each block inside the flat vector: W1 b1 W2 b2 W3 b3 W4 b4,
/// matrices stored column-major.
struct ParamLayout {
    struct Block {
        const char* name;
        long offset, rows, cols;
    };
    std::array<Block, 8> blocks;

    explicit ParamLayout(const NetworkArch& a) {
        const long d = a.input_dim, h1 = a.hidden[0], h2 = a.hidden[1], h3 = a.hidden[2];
        const long shapes[8][2] = {{h1, d}, {h1, 1}, {h2, h1}, {h2, 1}, {h3, h2}, {h3, 1}, {1, h3}, {1, 1}};
        const char* names[8] = {"W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4"};
        long off = 0;
        for (int i = 0; i < 8; ++i) {
            blocks[i] = {names[i], off, shapes[i][0], shapes[i][1]};
            off += shapes[i][0] * shapes[i][1];
        }
    }
};

class NetworkParams {
public:
    NetworkParams() = default;
    explicit NetworkParams(const NetworkArch& arch) : arch_(arch), layout_(arch), flat_(Eigen::VectorXd::Zero(arch.param_count())) {
        arch.validate();
    }

    const NetworkArch& arch() const noexcept { return arch_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    Eigen::VectorXd& flat() noexcept { return flat_; }
    const Eigen::VectorXd& flat() const noexcept { return flat_; }
    long size() const noexcept { return static_cast<long>(flat_.size()); }

    /// Layer i in 0..3: weight matrix and bias of that layer.
    MatMap weight(int i) { return block(2 * i); }
    ConstMatMap weight(int i) const { return block(2 * i); }
    VecMap bias(int i) {
        const auto& b = layout_.blocks[2 * i + 1];
        return {flat_.data() + b.offset, b.rows};
    }
    ConstVecMap bias(int i) const {
        const auto& b = layout_.blocks[2 * i + 1];
        return {flat_.data() + b.offset, b.rows};
    }

    MatMap block(int k) {
        const auto& b = layout_.blocks[k];
        return {flat_.data() + b.offset, b.rows, b.cols};
    }
    ConstMatMap block(int k) const {
        const auto& b = layout_.blocks[k];
        return {flat_.data() + b.offset, b.rows, b.cols};
    }

private:
    NetworkArch arch_{};
    ParamLayout layout_{NetworkArch{}};
    Eigen::VectorXd flat_;
};

/// Glorot-uniform weights; biases uniform in +-1/sqrt(fan_in) when
/// `random_biases`, otherwise zero. Everything is then scaled by `delta`.
inline NetworkParams init_params(const NetworkArch& arch, double delta, std::uint64_t seed, bool random_biases = true) {
    if (!(delta >= 0.0)) throw InputError("delta must be >= 0");
    NetworkParams p(arch);
    std::mt19937_64 rng(seed);
    for (int layer = 0; layer < 4; ++layer) {
        auto w = p.weight(layer);
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (long j = 0; j < w.cols(); ++j)
            for (long i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        if (random_biases) {
            auto b = p.bias(layer);
            const double bl = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            std::uniform_real_distribution<double> bdist(-bl, bl);
            for (long i = 0; i < b.size(); ++i) b[i] = bdist(rng);
        }
    }
    p.flat() *= delta;
    return p;
}

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    Eigen::MatrixXd input; // D x B
    Eigen::MatrixXd h1, h2, t3, h3;
    Eigen::MatrixXd d1, d2, d3; // act'(z) per hidden layer
    Eigen::RowVectorXd out;
};

namespace detail {
inline void check_finite(const Eigen::MatrixXd& m, int layer) {
    if (!m.allFinite()) throw NumericalError("non-finite activation in layer " + std::to_string(layer));
}
} // namespace detail

/// Batched forward pass over the columns of `x`; fills `cache` for backprop.
inline const Eigen::RowVectorXd& forward_batch(const NetworkParams& p, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                               ForwardCache& cache) {
    if (x.rows() != p.arch().input_dim) throw InputError("input dimension does not match network");
    const Activation act = p.arch().activation;
    cache.input = x;
    cache.h1.noalias() = p.weight(0) * x;
    cache.h1.colwise() += p.bias(0);
    detail::activate(act, cache.h1, cache.d1);
    detail::check_finite(cache.h1, 1);
    cache.h2.noalias() = p.weight(1) * cache.h1;
    cache.h2.colwise() += p.bias(1);
    detail::activate(act, cache.h2, cache.d2);
    detail::check_finite(cache.h2, 2);
    cache.t3.noalias() = p.weight(2) * cache.h2;
    cache.t3.colwise() += p.bias(2);
    detail::activate(act, cache.t3, cache.d3);
    cache.h3 = cache.t3 + cache.h2;
    detail::check_finite(cache.h3, 3);
    cache.out.noalias() = p.weight(3) * cache.h3;
    cache.out.array() += p.bias(3)[0];
    detail::check_finite(cache.out, 4);
    return cache.out;
}

inline Eigen::RowVectorXd forward_batch(const NetworkParams& p, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    ForwardCache cache;
    return forward_batch(p, x, cache);
}

inline double forward(const NetworkParams& p, Coordinate r) {
    if (static_cast<int>(r.size()) != p.arch().input_dim) throw InputError("input dimension does not match network");
    const Eigen::Map<const Eigen::MatrixXd> x(r.data(), static_cast<long>(r.size()), 1);
    return forward_batch(p, x)[0];
}

/// Gradient of sum_n upstream[n] * U(x_n) with respect to the flat parameters,
/// using activations from the preceding forward_batch call.
inline Eigen::VectorXd backward(const NetworkParams& p, const ForwardCache& cache,
                                const Eigen::Ref<const Eigen::RowVectorXd>& upstream) {
    if (upstream.size() != cache.out.size()) throw InputError("upstream length does not match batch size");
    Eigen::VectorXd grad(p.size());
    auto gblock = [&](int k) {
        const auto& b = p.layout().blocks[k];
        return MatMap(grad.data() + b.offset, b.rows, b.cols);
    };

    gblock(6).noalias() = upstream * cache.h3.transpose();
    gblock(7)(0, 0) = upstream.sum();

    Eigen::MatrixXd d_h3 = p.weight(3).transpose() * upstream;
    Eigen::MatrixXd d_z3 = d_h3.cwiseProduct(cache.d3);
    gblock(4).noalias() = d_z3 * cache.h2.transpose();
    gblock(5) = d_z3.rowwise().sum();

    Eigen::MatrixXd d_h2 = d_h3;
    d_h2.noalias() += p.weight(2).transpose() * d_z3;
    Eigen::MatrixXd d_z2 = d_h2.cwiseProduct(cache.d2);
    gblock(2).noalias() = d_z2 * cache.h1.transpose();
    gblock(3) = d_z2.rowwise().sum();

    Eigen::MatrixXd d_h1 = p.weight(1).transpose() * d_z2;
    Eigen::MatrixXd d_z1 = d_h1.cwiseProduct(cache.d1);
    gblock(0).noalias() = d_z1 * cache.input.transpose();
    gblock(1) = d_z1.rowwise().sum();

    if (!grad.allFinite()) throw NumericalError("non-finite parameter gradient");
    return grad;
}

/// Exact reverse-mode gradient of sum_n upstream[n] * U(batch_n).
inline Eigen::VectorXd param_gradient(const NetworkParams& p, const Eigen::Ref<const Eigen::MatrixXd>& batch,
                                      const Eigen::Ref<const Eigen::RowVectorXd>& upstream) {
    if (upstream.size() != batch.cols()) throw InputError("upstream length does not match batch size");
    ForwardCache cache;
    forward_batch(p, batch, cache);
    return backward(p, cache, upstream);
}

// ---- Adam -------------------------------------------------------------------

struct AdamState {
    Eigen::VectorXd m, v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double eta = 1e-3;

    AdamState() = default;
    AdamState(long n, double learning_rate)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), eta(learning_rate) {}
};

/// One bias-corrected Adam update of `theta` in place.
inline void adam_step(Eigen::Ref<Eigen::VectorXd> theta, AdamState& s, const Eigen::Ref<const Eigen::VectorXd>& grad) {
    if (grad.size() != theta.size() || s.m.size() != theta.size())
        throw InputError("gradient length does not match parameter count");
    ++s.t;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    theta.array() -= s.eta * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.epsilon);
}

inline void adam_step(NetworkParams& p, AdamState& s, const Eigen::Ref<const Eigen::VectorXd>& grad) {
    adam_step(p.flat(), s, grad);
}

// ---- checkpoints --------------------------------------------------------------
//
// {"format": "mpnn-checkpoint", "version": 1,
//  "arch": {"input_dim": D, "hidden": [a, b, c], "activation": "silu"},
//  "layers": [{"name": "W1", "rows": r, "cols": c, "values": [row-major]}, ...]}
//
// Doubles are written in shortest round-trip form, so reloading is exact.

inline nlohmann::json to_json(const NetworkParams& p) {
    nlohmann::json layers = nlohmann::json::array();
    for (int k = 0; k < 8; ++k) {
        const auto& b = p.layout().blocks[k];
        const auto m = p.block(k);
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(b.rows * b.cols));
        for (long i = 0; i < b.rows; ++i)
            for (long j = 0; j < b.cols; ++j) values.push_back(m(i, j));
        layers.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"values", values}});
    }
    const auto& a = p.arch();
    return {{"format", "mpnn-checkpoint"},
            {"version", 1},
            {"arch", {{"input_dim", a.input_dim}, {"hidden", a.hidden}, {"activation", to_string(a.activation)}}},
            {"layers", layers}};
}

inline NetworkParams params_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "mpnn-checkpoint") throw InputError("not an mpnn checkpoint");
    NetworkArch arch;
    const auto& a = j.at("arch");
    arch.input_dim = a.at("input_dim").get<int>();
    arch.hidden = a.at("hidden").get<std::array<int, 3>>();
    arch.activation = activation_from_string(a.value("activation", std::string{"tanh"}));
    NetworkParams p(arch);
    const auto& layers = j.at("layers");
    if (layers.size() != 8) throw InputError("checkpoint must hold 8 layer records");
    for (int k = 0; k < 8; ++k) {
        const auto& b = p.layout().blocks[k];
        const auto& rec = layers.at(k);
        if (rec.at("name").get<std::string>() != b.name || rec.at("rows").get<long>() != b.rows ||
            rec.at("cols").get<long>() != b.cols)
            throw InputError(std::string("checkpoint layer mismatch at ") + b.name);
        const auto values = rec.at("values").get<std::vector<double>>();
        if (static_cast<long>(values.size()) != b.rows * b.cols)
            throw InputError(std::string("wrong value count for ") + b.name);
        auto m = p.block(k);
        for (long i = 0; i < b.rows; ++i)
            for (long j2 = 0; j2 < b.cols; ++j2) m(i, j2) = values[static_cast<std::size_t>(i * b.cols + j2)];
    }
    if (!p.flat().allFinite()) throw InputError("checkpoint contains non-finite values");
    return p;
}

inline void save_checkpoint(const NetworkParams& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out << to_json(p).dump() << '\n';
}

inline NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    return params_from_json(nlohmann::json::parse(in));
}

} // namespace mpnn

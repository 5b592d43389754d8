#pragma once

// Training schemes for the inverse problem "find U such that psi is an
// eigenstate of -lap/2 + U":
//
//   MPNN     L = sqrt(mean_n |psi_n (E_n - Ebar)|^2) + lambda (U(r0) - V(r0))^2
//            E_n = K(r_n) + U(r_n),  Ebar = mean_n E_n, r_n ~ |psi|^2
//   QPNN     L = sum_n |grad E(r_n)|^2 + (U(r0) - V(r0))^2,  r_n uniform in a box
//   QPNN_MS  the QPNN loss on Metropolis samples
//
// grad E is a central difference of the local energy along each axis.

#include "mpnn/errors.hpp"
#include "mpnn/network.hpp"
#include "mpnn/sampler.hpp"
#include "mpnn/wavefunction.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mpnn {

enum class Scheme { MPNN, QPNN, QPNN_MS };
enum class EnergyVariant { Standard, Modulus };
enum class EtaSchedule { Constant, Cosine };

inline std::string to_string(Scheme s) {
    switch (s) {
    case Scheme::MPNN: return "MPNN";
    case Scheme::QPNN: return "QPNN";
    default: return "QPNN+MS";
    }
}

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "MPNN" || s == "mpnn") return Scheme::MPNN;
    if (s == "QPNN" || s == "qpnn") return Scheme::QPNN;
    if (s == "QPNN+MS" || s == "QPNN_MS" || s == "qpnn+ms" || s == "qpnn_ms") return Scheme::QPNN_MS;
    throw InputError("unknown scheme '" + s + "' (expected MPNN, QPNN or QPNN+MS)");
}

inline std::string to_string(EnergyVariant v) { return v == EnergyVariant::Standard ? "standard" : "modulus"; }

inline EnergyVariant energy_variant_from_string(const std::string& s) {
    if (s == "standard") return EnergyVariant::Standard;
    if (s == "modulus") return EnergyVariant::Modulus;
    throw InputError("unknown energy variant '" + s + "' (expected standard or modulus)");
}

inline std::string to_string(EtaSchedule s) { return s == EtaSchedule::Constant ? "constant" : "cosine"; }

inline EtaSchedule eta_schedule_from_string(const std::string& s) {
    if (s == "constant") return EtaSchedule::Constant;
    if (s == "cosine") return EtaSchedule::Cosine;
    throw InputError("unknown eta schedule '" + s + "' (expected constant or cosine)");
}

/// Independent 64-bit seed for a named sub-stream of a run (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t train_samples = 2;
inline constexpr std::uint64_t test_samples = 3;
inline constexpr std::uint64_t resample_base = 100;
} // namespace seed_stream

/// Default pin coordinate: x0 = 1 for the oscillator, (1, 0, 0) for hydrogen.
inline std::vector<double> default_pin_point(const WavefunctionSpec& spec) {
    return spec.kind == StateKind::HO1D ? std::vector<double>{1.0} : std::vector<double>{1.0, 0.0, 0.0};
}

inline std::vector<Interval> default_training_box(const WavefunctionSpec& spec) {
    return std::vector<Interval>(static_cast<std::size_t>(spec.dim()), Interval{-2.0, 2.0});
}

struct TrainConfig {
    WavefunctionSpec spec = WavefunctionSpec::harmonic(2);
    Scheme scheme = Scheme::MPNN;
    std::array<int, 3> hidden{32, 128, 128};
    Activation activation = Activation::SiLU;
    bool random_biases = true;
    long n_samples = 2000;
    double lambda = 1.0;
    std::vector<double> pin_point;    // empty = default_pin_point(spec)
    std::optional<double> pin_value;  // unset = exact_potential(spec, pin_point)
    double eta = 1e-3;
    EtaSchedule eta_schedule = EtaSchedule::Constant;
    double eta_floor = 0.01; // cosine only: the rate never drops below eta_floor * eta
    long steps = 20000;
    double delta = 0.01;
    std::uint64_t seed = 0;
    long resample_every = 0; // 0 keeps one fixed training set
    double qpnn_fd_step = 1e-3;
    bool detach_energy = false;
    EnergyVariant energy_variant = EnergyVariant::Standard;
    long history_every = 100;
    double max_excluded_fraction = 0.01;
    // Metropolis chain settings; sigma <= 0 selects default_step_sigma(spec).
    double chain_sigma = 0.0;
    long chain_burn_in = 1000;
    long chain_thinning = 5;
    std::vector<Interval> box; // QPNN uniform box; empty = default_training_box(spec)
    std::filesystem::path abort_checkpoint; // written if training diverges

    NetworkArch arch() const { return {spec.dim(), hidden, activation}; }
    std::vector<double> pin() const { return pin_point.empty() ? default_pin_point(spec) : pin_point; }
    double pin_target() const {
        const auto r0 = pin();
        return pin_value ? *pin_value : exact_potential(spec, Coordinate(r0));
    }
    /// Learning rate for step s (1-based).
    double eta_at(long s) const {
        if (eta_schedule == EtaSchedule::Constant) return eta;
        const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(s - 1) / static_cast<double>(steps)));
        return eta * std::max(eta_floor, c);
    }
    std::vector<Interval> training_box() const { return box.empty() ? default_training_box(spec) : box; }
    ChainConfig chain(long n, std::uint64_t chain_seed) const {
        ChainConfig c;
        c.step_sigma = chain_sigma > 0.0 ? chain_sigma : default_step_sigma(spec);
        c.burn_in = chain_burn_in;
        c.thinning = chain_thinning;
        c.n_samples = n;
        c.seed = chain_seed;
        return c;
    }

    void validate() const {
        arch().validate();
        if (n_samples < 1) throw InputError("n_samples must be >= 1");
        if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
        if (!(eta > 0.0)) throw InputError("eta must be > 0");
        if (!(eta_floor >= 0.0 && eta_floor <= 1.0)) throw InputError("eta_floor must be in [0, 1]");
        if (steps < 1) throw InputError("steps must be >= 1");
        if (!(delta >= 0.0)) throw InputError("delta must be >= 0");
        if (resample_every < 0) throw InputError("resample_every must be >= 0");
        if (scheme != Scheme::MPNN && !(qpnn_fd_step > 0.0)) throw InputError("qpnn_fd_step must be > 0");
        if (history_every < 1) throw InputError("history_every must be >= 1");
        if (static_cast<int>(pin().size()) != spec.dim()) throw InputError("pin_point has wrong dimension");
        if (!is_valid_point(spec, Coordinate(pin())) && !pin_value)
            throw InputError("pin_point must avoid the singularity");
        if (static_cast<int>(training_box().size()) != spec.dim()) throw InputError("box has wrong dimension");
        chain(1, 0).validate();
    }
};

struct LossReport {
    double total_loss = 0.0;
    double residual_rms = 0.0; // MPNN: RMS residual; QPNN: summed |grad E|^2
    double pin_penalty = 0.0;  // (U(r0) - V(r0))^2, before lambda
    double energy_estimate = 0.0;
    long step = 0;
    long excluded = 0;
};

// ---- potential models -------------------------------------------------------
//
// Loss and energy routines accept anything that can evaluate U on the columns
// of a coordinate matrix: the network itself, or a plain function (used to
// inject exact or shifted potentials when certifying the losses).

struct FunctionPotential {
    std::function<double(Coordinate)> fn;
};

inline Eigen::RowVectorXd evaluate_potential(const NetworkParams& p, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    return forward_batch(p, x);
}

inline Eigen::RowVectorXd evaluate_potential(const FunctionPotential& f, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    Eigen::RowVectorXd out(x.cols());
    for (long i = 0; i < x.cols(); ++i) out[i] = f.fn(Coordinate(x.col(i).data(), static_cast<std::size_t>(x.rows())));
    return out;
}

template <class M>
concept PotentialModel = requires(const M& m, const Eigen::MatrixXd& x) {
    { evaluate_potential(m, x) } -> std::convertible_to<Eigen::RowVectorXd>;
};

/// U(r) = V(r) + shift + tilt * x_1.
inline FunctionPotential exact_potential_model(const WavefunctionSpec& spec, double shift = 0.0, double tilt = 0.0) {
    return {[spec, shift, tilt](Coordinate r) { return exact_potential(spec, r) + shift + tilt * r[0]; }};
}

template <PotentialModel M>
double evaluate_at(const M& model, Coordinate r) {
    const Eigen::Map<const Eigen::MatrixXd> x(r.data(), static_cast<long>(r.size()), 1);
    return evaluate_potential(model, x)[0];
}

inline double kinetic(const WavefunctionSpec& spec, Coordinate r, EnergyVariant v) {
    return v == EnergyVariant::Standard ? local_kinetic(spec, r) : local_kinetic_modulus(spec, r);
}

/// E(r) = -lap(psi)/(2 psi) + U(r).
template <PotentialModel M>
double local_energy(const WavefunctionSpec& spec, const M& model, Coordinate r) {
    return local_kinetic(spec, r) + evaluate_at(model, r);
}

/// E'(r) = -lap|psi|/(2|psi|) + U(r).
template <PotentialModel M>
double local_energy_modulus(const WavefunctionSpec& spec, const M& model, Coordinate r) {
    return local_kinetic_modulus(spec, r) + evaluate_at(model, r);
}

// ---- prepared batches ---------------------------------------------------------

/// Valid sample points with their wavefunction values and kinetic terms.
struct PointBatch {
    Eigen::MatrixXd coords; // D x n, plus the pin point as the last column
    Eigen::RowVectorXd psi;
    Eigen::RowVectorXd kinetic;
    long excluded = 0;

    long size() const { return static_cast<long>(psi.size()); }
};

inline PointBatch prepare_points(const WavefunctionSpec& spec, const Eigen::MatrixXd& pts, Coordinate pin,
                                 EnergyVariant variant) {
    if (pts.rows() != spec.dim()) throw InputError("sample dimension does not match wavefunction");
    const auto dim = static_cast<std::size_t>(spec.dim());
    std::vector<long> keep;
    keep.reserve(static_cast<std::size_t>(pts.cols()));
    for (long i = 0; i < pts.cols(); ++i)
        if (is_valid_point(spec, Coordinate(pts.col(i).data(), dim))) keep.push_back(i);
    PointBatch b;
    const long n = static_cast<long>(keep.size());
    b.excluded = pts.cols() - n;
    b.coords.resize(spec.dim(), n + 1);
    b.psi.resize(n);
    b.kinetic.resize(n);
    for (long j = 0; j < n; ++j) {
        b.coords.col(j) = pts.col(keep[static_cast<std::size_t>(j)]);
        const Coordinate r(b.coords.col(j).data(), dim);
        b.psi[j] = psi(spec, r);
        b.kinetic[j] = kinetic(spec, r, variant);
    }
    for (std::size_t k = 0; k < dim; ++k) b.coords(static_cast<long>(k), n) = pin[k];
    return b;
}

/// Central-difference probes r_n +/- h e_i for every valid sample, then the pin point.
/// Column layout: for sample j and axis i, plus-probe at 2(j D + i), minus-probe right after.
struct ProbeBatch {
    Eigen::MatrixXd probes;
    Eigen::RowVectorXd kinetic; // at every probe
    Eigen::MatrixXd centers;    // D x n valid centers (for the energy average)
    Eigen::RowVectorXd center_kinetic;
    double h = 1e-3;
    long excluded = 0;

    long size() const { return static_cast<long>(centers.cols()); }
};

inline ProbeBatch prepare_probes(const WavefunctionSpec& spec, const Eigen::MatrixXd& pts, Coordinate pin, double h,
                                 EnergyVariant variant) {
    if (pts.rows() != spec.dim()) throw InputError("sample dimension does not match wavefunction");
    if (!(h > 0.0)) throw InputError("finite-difference step must be > 0");
    const int dim = spec.dim();
    const auto udim = static_cast<std::size_t>(dim);
    std::vector<long> keep;
    Eigen::VectorXd q(dim);
    for (long i = 0; i < pts.cols(); ++i) {
        bool ok = is_valid_point(spec, Coordinate(pts.col(i).data(), udim));
        for (int a = 0; a < dim && ok; ++a)
            for (double s : {1.0, -1.0}) {
                q = pts.col(i);
                q[a] += s * h;
                ok = ok && is_valid_point(spec, Coordinate(q.data(), udim));
            }
        if (ok) keep.push_back(i);
    }
    ProbeBatch b;
    b.h = h;
    const long n = static_cast<long>(keep.size());
    b.excluded = pts.cols() - n;
    b.probes.resize(dim, 2 * dim * n + 1);
    b.kinetic.resize(2 * dim * n);
    b.centers.resize(dim, n);
    b.center_kinetic.resize(n);
    for (long j = 0; j < n; ++j) {
        b.centers.col(j) = pts.col(keep[static_cast<std::size_t>(j)]);
        b.center_kinetic[j] = kinetic(spec, Coordinate(b.centers.col(j).data(), udim), variant);
        for (int a = 0; a < dim; ++a)
            for (int s = 0; s < 2; ++s) {
                const long c = 2 * (j * dim + a) + s;
                b.probes.col(c) = b.centers.col(j);
                b.probes(a, c) += s == 0 ? h : -h;
                b.kinetic[c] = kinetic(spec, Coordinate(b.probes.col(c).data(), udim), variant);
            }
    }
    for (int k = 0; k < dim; ++k) b.probes(k, 2 * dim * n) = pin[static_cast<std::size_t>(k)];
    return b;
}

namespace detail {

struct MpnnTerms {
    LossReport report;
    Eigen::RowVectorXd upstream; // dL/dU at every column of the batch (pin last)
};

// Loss terms from potential values u (pin value last).
inline MpnnTerms mpnn_terms(const PointBatch& b, const Eigen::RowVectorXd& u, double lambda, double pin_target,
                            bool detach_energy) {
    const long n = b.size();
    if (n == 0) throw TrainingError("empty effective batch: every sample was excluded");
    MpnnTerms t;
    const Eigen::RowVectorXd energy = b.kinetic + u.head(n);
    const double e_bar = energy.mean();
    const Eigen::RowVectorXd residual = (b.psi.array() * (energy.array() - e_bar)).matrix();
    const double rms = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
    const double pin_diff = u[n] - pin_target;

    t.report.residual_rms = rms;
    t.report.pin_penalty = pin_diff * pin_diff;
    t.report.total_loss = rms + lambda * t.report.pin_penalty;
    t.report.energy_estimate = e_bar;
    t.report.excluded = b.excluded;

    // d rms / d u_m = (R_m psi_m - mean(R psi)) / (n rms); the mean term is the
    // path through Ebar and is dropped when the energy is detached.
    t.upstream.setZero(n + 1);
    if (rms > 0.0) {
        const Eigen::RowVectorXd rp = residual.cwiseProduct(b.psi);
        const double centre = detach_energy ? 0.0 : rp.mean();
        t.upstream.head(n) = ((rp.array() - centre) / (static_cast<double>(n) * rms)).matrix();
    }
    t.upstream[n] = 2.0 * lambda * pin_diff;
    return t;
}

struct QpnnTerms {
    LossReport report;
    Eigen::RowVectorXd upstream;
};

inline QpnnTerms qpnn_terms(const ProbeBatch& b, const Eigen::RowVectorXd& u, int dim, double pin_target) {
    const long n = b.size();
    if (n == 0) throw TrainingError("empty effective batch: every sample was excluded");
    const long m = 2 * dim * n;
    QpnnTerms t;
    t.upstream.setZero(m + 1);
    double grad_sq = 0.0;
    for (long c = 0; c < m; c += 2) {
        const double e_plus = b.kinetic[c] + u[c];
        const double e_minus = b.kinetic[c + 1] + u[c + 1];
        const double g = (e_plus - e_minus) / (2.0 * b.h);
        grad_sq += g * g;
        t.upstream[c] = g / b.h;
        t.upstream[c + 1] = -g / b.h;
    }
    const double pin_diff = u[m] - pin_target;
    t.upstream[m] = 2.0 * pin_diff;
    t.report.residual_rms = grad_sq;
    t.report.pin_penalty = pin_diff * pin_diff;
    t.report.total_loss = grad_sq + t.report.pin_penalty;
    t.report.excluded = b.excluded;
    return t;
}

} // namespace detail

// ---- energies -------------------------------------------------------------------

struct EnergyEstimate {
    double value = 0.0;
    long used = 0;
    long excluded = 0;
};

/// Mean local energy over the valid points of `samples`. Over Metropolis
/// samples this is the importance-sampled <H>.
template <PotentialModel M>
EnergyEstimate energy_estimate(const WavefunctionSpec& spec, const M& model, const SampleSet& samples,
                               EnergyVariant variant = EnergyVariant::Standard) {
    const auto pin = default_pin_point(spec);
    const auto b = prepare_points(spec, samples.coords, Coordinate(pin), variant);
    if (b.size() == 0) throw TrainingError("no valid points for the energy estimate");
    const Eigen::RowVectorXd u = evaluate_potential(model, b.coords.leftCols(b.size()));
    return {(b.kinetic + u).mean(), b.size(), b.excluded};
}

/// Unweighted mean of E(r) over whatever positions the scheme trained on;
/// identical arithmetic to energy_estimate, only its meaning depends on the source.
template <PotentialModel M>
EnergyEstimate qpnn_energy(const WavefunctionSpec& spec, const M& model, const SampleSet& samples,
                           EnergyVariant variant = EnergyVariant::Standard) {
    return energy_estimate(spec, model, samples, variant);
}

// ---- losses ---------------------------------------------------------------------

template <PotentialModel M>
LossReport mpnn_loss(const WavefunctionSpec& spec, const M& model, const SampleSet& samples, const TrainConfig& cfg) {
    const auto pin = cfg.pin();
    const auto b = prepare_points(spec, samples.coords, Coordinate(pin), cfg.energy_variant);
    const Eigen::RowVectorXd u = evaluate_potential(model, b.coords);
    return detail::mpnn_terms(b, u, cfg.lambda, cfg.pin_target(), cfg.detach_energy).report;
}

template <PotentialModel M>
LossReport qpnn_loss(const WavefunctionSpec& spec, const M& model, const SampleSet& samples, const TrainConfig& cfg) {
    const auto pin = cfg.pin();
    const auto b = prepare_probes(spec, samples.coords, Coordinate(pin), cfg.qpnn_fd_step, cfg.energy_variant);
    const Eigen::RowVectorXd u = evaluate_potential(model, b.probes);
    auto report = detail::qpnn_terms(b, u, spec.dim(), cfg.pin_target()).report;
    if (b.size() > 0) {
        const Eigen::RowVectorXd uc = evaluate_potential(model, b.centers);
        report.energy_estimate = (b.center_kinetic + uc).mean();
    }
    return report;
}

/// Loss of the configured scheme and its exact gradient with respect to the
/// network parameters.
inline std::pair<LossReport, Eigen::VectorXd> loss_and_gradient(const NetworkParams& params,
                                                               const SampleSet& samples, const TrainConfig& cfg) {
    const auto pin = cfg.pin();
    ForwardCache cache;
    if (cfg.scheme == Scheme::MPNN) {
        const auto b = prepare_points(cfg.spec, samples.coords, Coordinate(pin), cfg.energy_variant);
        const auto& u = forward_batch(params, b.coords, cache);
        auto t = detail::mpnn_terms(b, u, cfg.lambda, cfg.pin_target(), cfg.detach_energy);
        return {t.report, backward(params, cache, t.upstream)};
    }
    const auto b = prepare_probes(cfg.spec, samples.coords, Coordinate(pin), cfg.qpnn_fd_step, cfg.energy_variant);
    const auto& u = forward_batch(params, b.probes, cache);
    auto t = detail::qpnn_terms(b, u, cfg.spec.dim(), cfg.pin_target());
    return {t.report, backward(params, cache, t.upstream)};
}

// ---- evaluation metric ------------------------------------------------------------

struct PotentialError {
    double value = 0.0;
    long used = 0;
    long excluded = 0; // grid points at the Coulomb singularity
    double mean_diff = 0.0; // mean of U - V; a pure shift shows up here
    double sd_diff = 0.0;   // standard deviation of U - V over the grid
};

/// Mean absolute deviation |U - V| over the grid, skipping singular points.
template <PotentialModel M>
PotentialError potential_error(const M& model, const WavefunctionSpec& spec, const SampleSet& grid) {
    if (grid.dim() != spec.dim()) throw InputError("grid dimension does not match wavefunction");
    const auto dim = static_cast<std::size_t>(spec.dim());
    std::vector<long> keep;
    for (long i = 0; i < grid.size(); ++i) {
        if (spec.kind == StateKind::HydrogenGround && detail::radius(grid.at(i)) < r_floor) continue;
        keep.push_back(i);
    }
    PotentialError e;
    e.used = static_cast<long>(keep.size());
    e.excluded = grid.size() - e.used;
    if (e.used == 0) return e;
    Eigen::MatrixXd pts(spec.dim(), e.used);
    for (long j = 0; j < e.used; ++j) pts.col(j) = grid.coords.col(keep[static_cast<std::size_t>(j)]);
    const Eigen::RowVectorXd u = evaluate_potential(model, pts);
    double sum_abs = 0.0, sum = 0.0;
    Eigen::RowVectorXd diff(e.used);
    for (long j = 0; j < e.used; ++j) {
        diff[j] = u[j] - exact_potential(spec, Coordinate(pts.col(j).data(), dim));
        sum_abs += std::abs(diff[j]);
        sum += diff[j];
    }
    const double n = static_cast<double>(e.used);
    e.value = sum_abs / n;
    e.mean_diff = sum / n;
    e.sd_diff = std::sqrt((diff.array() - e.mean_diff).square().sum() / n);
    return e;
}

// ---- training loop ------------------------------------------------------------------

struct TrainResult {
    NetworkParams params;
    std::vector<LossReport> history;
    LossReport final_report;
    SampleSet train_samples; // the last training set used
    long excluded_total = 0;
};

/// Training positions for one epoch of the configured scheme.
inline SampleSet draw_training_samples(const TrainConfig& cfg, std::uint64_t sample_seed) {
    if (cfg.scheme == Scheme::QPNN)
        return uniform_box_sample_valid(cfg.spec, cfg.training_box(), cfg.n_samples, sample_seed);
    return metropolis_sample(cfg.spec, cfg.chain(cfg.n_samples, sample_seed));
}

/// Runs cfg.steps Adam updates of the scheme's loss. `on_record` (optional)
/// sees every recorded history entry.
inline TrainResult train(const TrainConfig& cfg, const std::function<void(const LossReport&)>& on_record = {}) {
    cfg.validate();
    TrainResult res;
    res.params = init_params(cfg.arch(), cfg.delta, derive_seed(cfg.seed, seed_stream::init), cfg.random_biases);
    AdamState adam(res.params.size(), cfg.eta);

    const auto pin = cfg.pin();
    const double pin_target = cfg.pin_target();
    const int dim = cfg.spec.dim();

    PointBatch points;
    ProbeBatch probes;
    auto load_samples_for = [&](long epoch) {
        const std::uint64_t s = epoch == 0 ? derive_seed(cfg.seed, seed_stream::train_samples)
                                           : derive_seed(cfg.seed, seed_stream::resample_base + static_cast<std::uint64_t>(epoch));
        res.train_samples = draw_training_samples(cfg, s);
        long excluded = 0;
        if (cfg.scheme == Scheme::MPNN) {
            points = prepare_points(cfg.spec, res.train_samples.coords, Coordinate(pin), cfg.energy_variant);
            excluded = points.excluded;
        } else {
            probes = prepare_probes(cfg.spec, res.train_samples.coords, Coordinate(pin), cfg.qpnn_fd_step,
                                    cfg.energy_variant);
            excluded = probes.excluded;
        }
        res.excluded_total += excluded;
        if (static_cast<double>(excluded) > cfg.max_excluded_fraction * static_cast<double>(cfg.n_samples))
            throw TrainingError("more than " + std::to_string(cfg.max_excluded_fraction * 100.0) +
                                "% of the training batch was excluded");
    };
    load_samples_for(0);

    auto abort = [&](const std::string& what, long step) {
        if (!cfg.abort_checkpoint.empty()) save_checkpoint(res.params, cfg.abort_checkpoint);
        throw TrainingError(what + " at step " + std::to_string(step), step);
    };

    ForwardCache cache;
    Eigen::VectorXd grad;
    for (long step = 1; step <= cfg.steps; ++step) {
        if (cfg.resample_every > 0 && step > 1 && (step - 1) % cfg.resample_every == 0)
            load_samples_for((step - 1) / cfg.resample_every);

        LossReport report;
        const bool record = step % cfg.history_every == 0 || step == 1 || step == cfg.steps;
        try {
            if (cfg.scheme == Scheme::MPNN) {
                const auto& u = forward_batch(res.params, points.coords, cache);
                auto t = detail::mpnn_terms(points, u, cfg.lambda, pin_target, cfg.detach_energy);
                report = t.report;
                grad = backward(res.params, cache, t.upstream);
            } else {
                const auto& u = forward_batch(res.params, probes.probes, cache);
                auto t = detail::qpnn_terms(probes, u, dim, pin_target);
                report = t.report;
                grad = backward(res.params, cache, t.upstream);
                if (record) {
                    const Eigen::RowVectorXd uc = forward_batch(res.params, probes.centers);
                    report.energy_estimate = (probes.center_kinetic + uc).mean();
                }
            }
        } catch (const NumericalError& e) {
            abort(e.what(), step);
        }
        if (!std::isfinite(report.total_loss)) abort("non-finite loss", step);
        report.step = step;
        if (record) {
            res.history.push_back(report);
            if (on_record) on_record(report);
        }
        res.final_report = report;
        adam.eta = cfg.eta_at(step);
        adam_step(res.params, adam, grad);
    }
    return res;
}

} // namespace mpnn

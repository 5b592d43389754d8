#pragma once

// Coordinate sources: Metropolis-Hastings chains targeting |psi|^2, i.i.d.
// uniform boxes, and regular evaluation grids. Coordinates are stored as the
// columns of a D x N matrix.

#include "mpnn/errors.hpp"
#include "mpnn/wavefunction.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mpnn {

enum class SampleSource { Metropolis, UniformBox, UniformGrid, External };

inline std::string to_string(SampleSource s) {
    switch (s) {
    case SampleSource::Metropolis: return "metropolis";
    case SampleSource::UniformBox: return "uniform_box";
    case SampleSource::UniformGrid: return "uniform_grid";
    default: return "external";
    }
}

inline SampleSource sample_source_from_string(const std::string& s) {
    if (s == "metropolis") return SampleSource::Metropolis;
    if (s == "uniform_box") return SampleSource::UniformBox;
    if (s == "uniform_grid") return SampleSource::UniformGrid;
    if (s == "external") return SampleSource::External;
    throw InputError("unknown sample source '" + s + "'");
}

/// Closed interval [lo, hi] on one axis.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct SampleSet {
    Eigen::MatrixXd coords; // dim x size
    SampleSource source = SampleSource::External;
    std::uint64_t seed = 0;
    double acceptance_rate = 0.0; // Metropolis only
    long skipped = 0;             // Metropolis draws rejected by the node/singularity guard
    std::vector<std::string> warnings;

    int dim() const noexcept { return static_cast<int>(coords.rows()); }
    long size() const noexcept { return static_cast<long>(coords.cols()); }
    Coordinate at(long i) const { return {coords.col(i).data(), static_cast<std::size_t>(coords.rows())}; }
};

struct ChainConfig {
    double step_sigma = 0.5;
    long burn_in = 1000;
    long thinning = 5;
    long n_samples = 1000;
    std::uint64_t seed = 0;
    std::vector<double> init; // empty = default_chain_init(spec)

    void validate() const {
        if (!(step_sigma > 0.0) || !std::isfinite(step_sigma)) throw InputError("step_sigma must be > 0");
        if (burn_in < 0) throw InputError("burn_in must be >= 0");
        if (thinning < 1) throw InputError("thinning must be >= 1");
        if (n_samples < 1) throw InputError("n_samples must be >= 1");
    }
};

/// Starting point at (or near) the mode of |psi|^2; the hydrogen origin is invalid so use |r| = 1.
inline std::vector<double> default_chain_init(const WavefunctionSpec& spec) {
    if (spec.kind == StateKind::HydrogenGround) return {1.0, 0.0, 0.0};
    switch (spec.level) {
    case 0: return {0.0};
    case 1: return {1.0};
    default: return {std::sqrt(2.5)};
    }
}

/// Default proposal width: 0.5 for the oscillator, 0.8 for hydrogen.
inline double default_step_sigma(const WavefunctionSpec& spec) {
    return spec.kind == StateKind::HydrogenGround ? 0.8 : 0.5;
}

/// Metropolis acceptance probability min(1, p_proposed / p_current).
inline double acceptance_probability(double p_current, double p_proposed) {
    if (p_proposed >= p_current) return 1.0;
    return p_proposed / p_current;
}

/// Single Metropolis chain with an isotropic Gaussian proposal. After burn-in
/// every `thinning`-th state is recorded unless it fails the validity guard.
inline SampleSet metropolis_sample(const WavefunctionSpec& spec, const ChainConfig& cfg) {
    cfg.validate();
    const int dim = spec.dim();
    Eigen::VectorXd current(dim);
    {
        const auto init = cfg.init.empty() ? default_chain_init(spec) : cfg.init;
        if (static_cast<int>(init.size()) != dim) throw InputError("chain init has wrong dimension");
        for (int k = 0; k < dim; ++k) current[k] = init[k];
    }
    auto as_coord = [dim](const Eigen::VectorXd& v) { return Coordinate{v.data(), static_cast<std::size_t>(dim)}; };

    double p_current = probability(spec, as_coord(current));
    if (!std::isfinite(p_current)) throw NumericalError("non-finite probability at chain start");
    if (p_current <= 0.0) throw InputError("chain init has zero probability");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SampleSet out;
    out.source = SampleSource::Metropolis;
    out.seed = cfg.seed;
    out.coords.resize(dim, cfg.n_samples);

    Eigen::VectorXd proposal(dim);
    long recorded = 0;
    long accepted_after_burn = 0;
    long steps_after_burn = 0;
    for (long step = 0; recorded < cfg.n_samples; ++step) {
        for (int k = 0; k < dim; ++k) proposal[k] = current[k] + cfg.step_sigma * gauss(rng);
        const double p_prop = probability(spec, as_coord(proposal));
        if (!std::isfinite(p_prop)) throw NumericalError("non-finite probability in Metropolis proposal");
        const double a = acceptance_probability(p_current, p_prop);
        const bool accept = a >= 1.0 || unif(rng) < a;
        if (accept) {
            current = proposal;
            p_current = p_prop;
        }
        if (step < cfg.burn_in) continue;
        ++steps_after_burn;
        if (accept) ++accepted_after_burn;
        if ((step - cfg.burn_in) % cfg.thinning != cfg.thinning - 1) continue;
        if (!is_valid_point(spec, as_coord(current))) {
            ++out.skipped;
            continue;
        }
        out.coords.col(recorded++) = current;
    }
    out.acceptance_rate = static_cast<double>(accepted_after_burn) / static_cast<double>(steps_after_burn);
    if (out.acceptance_rate < 0.05 || out.acceptance_rate > 0.95) {
        std::ostringstream msg;
        msg << "acceptance rate " << out.acceptance_rate << " outside [0.05, 0.95]; adjust step_sigma";
        out.warnings.push_back(msg.str());
    }
    return out;
}

namespace detail {
inline void check_bounds(int dim, const std::vector<Interval>& bounds) {
    if (dim < 1) throw InputError("dimension must be positive");
    if (static_cast<int>(bounds.size()) != dim) throw InputError("bounds must list one interval per axis");
    for (const auto& b : bounds)
        if (!(b.lo < b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
            throw InputError("degenerate bounds: need lo < hi on every axis");
}
} // namespace detail

inline SampleSet uniform_box_sample(int dim, const std::vector<Interval>& bounds, long n, std::uint64_t seed) {
    detail::check_bounds(dim, bounds);
    if (n < 1) throw InputError("sample count must be >= 1");
    std::mt19937_64 rng(seed);
    SampleSet out;
    out.source = SampleSource::UniformBox;
    out.seed = seed;
    out.coords.resize(dim, n);
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k)
            out.coords(k, i) = std::uniform_real_distribution<double>(bounds[k].lo, bounds[k].hi)(rng);
    return out;
}

/// Uniform box sample restricted to valid points of `spec` (invalid draws are redrawn).
inline SampleSet uniform_box_sample_valid(const WavefunctionSpec& spec, const std::vector<Interval>& bounds,
                                          long n, std::uint64_t seed) {
    const int dim = spec.dim();
    detail::check_bounds(dim, bounds);
    if (n < 1) throw InputError("sample count must be >= 1");
    std::mt19937_64 rng(seed);
    SampleSet out;
    out.source = SampleSource::UniformBox;
    out.seed = seed;
    out.coords.resize(dim, n);
    Eigen::VectorXd r(dim);
    for (long i = 0; i < n;) {
        for (int k = 0; k < dim; ++k)
            r[k] = std::uniform_real_distribution<double>(bounds[k].lo, bounds[k].hi)(rng);
        if (!is_valid_point(spec, {r.data(), static_cast<std::size_t>(dim)})) {
            ++out.skipped;
            continue;
        }
        out.coords.col(i++) = r;
    }
    return out;
}

/// Cartesian product grid with endpoints; the last axis varies fastest.
inline SampleSet uniform_grid(int dim, const std::vector<Interval>& bounds, const std::vector<long>& counts) {
    detail::check_bounds(dim, bounds);
    if (static_cast<int>(counts.size()) != dim) throw InputError("counts must list one value per axis");
    long total = 1;
    for (long c : counts) {
        if (c < 2) throw InputError("grid needs at least 2 points per axis");
        total *= c;
    }
    SampleSet out;
    out.source = SampleSource::UniformGrid;
    out.coords.resize(dim, total);
    for (long i = 0; i < total; ++i) {
        long rem = i;
        for (int k = dim - 1; k >= 0; --k) {
            const long j = rem % counts[k];
            rem /= counts[k];
            const double t = static_cast<double>(j) / static_cast<double>(counts[k] - 1);
            out.coords(k, i) = j == counts[k] - 1 ? bounds[k].hi : bounds[k].lo + t * (bounds[k].hi - bounds[k].lo);
        }
    }
    return out;
}

// ---- CSV + JSON sidecar --------------------------------------------------

inline void write_sample_csv(const SampleSet& s, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw InputError("cannot open " + csv_path.string() + " for writing");
    out.precision(17);
    for (int k = 0; k < s.dim(); ++k) out << (k ? "," : "") << "x" << (k + 1);
    out << '\n';
    for (long i = 0; i < s.size(); ++i) {
        for (int k = 0; k < s.dim(); ++k) out << (k ? "," : "") << s.coords(k, i);
        out << '\n';
    }
}

inline nlohmann::json sample_sidecar(const SampleSet& s) {
    return {{"source", to_string(s.source)}, {"seed", s.seed},          {"acceptance_rate", s.acceptance_rate},
            {"n", s.size()},                 {"dim", s.dim()},          {"skipped", s.skipped},
            {"warnings", s.warnings}};
}

/// Writes `<stem>.csv` and `<stem>.json`.
inline void save_samples(const SampleSet& s, const std::filesystem::path& stem) {
    write_sample_csv(s, std::filesystem::path(stem).replace_extension(".csv"));
    std::ofstream js(std::filesystem::path(stem).replace_extension(".json"));
    if (!js) throw InputError("cannot write sample sidecar for " + stem.string());
    js << sample_sidecar(s).dump(2) << '\n';
}

/// Reads `<stem>.csv`; the JSON sidecar is optional.
inline SampleSet load_samples(const std::filesystem::path& stem) {
    const auto csv_path = std::filesystem::path(stem).replace_extension(".csv");
    std::ifstream in(csv_path);
    if (!in) throw InputError("cannot open " + csv_path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError(csv_path.string() + " is empty");
    const int dim = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        int cols = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++cols;
        }
        if (cols != dim) throw InputError("ragged row in " + csv_path.string());
    }
    SampleSet s;
    const long n = static_cast<long>(values.size()) / dim;
    s.coords = Eigen::Map<const Eigen::MatrixXd>(values.data(), dim, n);
    const auto side = std::filesystem::path(stem).replace_extension(".json");
    if (std::ifstream js(side); js) {
        const auto j = nlohmann::json::parse(js);
        s.source = sample_source_from_string(j.at("source").get<std::string>());
        s.seed = j.value("seed", std::uint64_t{0});
        s.acceptance_rate = j.value("acceptance_rate", 0.0);
        s.skipped = j.value("skipped", 0L);
        s.warnings = j.value("warnings", std::vector<std::string>{});
    }
    return s;
}

} // namespace mpnn

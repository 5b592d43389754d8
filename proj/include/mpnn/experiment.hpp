#pragma once

// Experiment drivers: one training cell with evaluation and artifacts, the
// Table 1 comparison, sample-count and lambda sweeps, potential slices and
// the oracle certification table.

#include "mpnn/config.hpp"
#include "mpnn/oracle.hpp"
#include "mpnn/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <utility>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mpnn {

namespace fs = std::filesystem;

// ---- evaluation ---------------------------------------------------------------

/// Regular grid on [grid_lo, grid_hi]^D with per_axis(D) points per axis.
inline SampleSet evaluation_grid(const WavefunctionSpec& spec, const EvalConfig& eval) {
    const int d = spec.dim();
    return uniform_grid(d, std::vector<Interval>(static_cast<std::size_t>(d), {eval.grid_lo, eval.grid_hi}),
                        std::vector<long>(static_cast<std::size_t>(d), eval.per_axis(d)));
}

/// Held-out positions from the scheme's own training distribution, drawn
/// with a seed stream distinct from every training stream.
inline SampleSet test_samples(const TrainConfig& cfg, const EvalConfig& eval) {
    TrainConfig c = cfg;
    c.n_samples = eval.test_samples;
    return draw_training_samples(c, derive_seed(cfg.seed, seed_stream::test_samples));
}

struct Evaluation {
    PotentialError eps;
    EnergyEstimate energy;
};

template <PotentialModel M>
Evaluation evaluate(const M& model, const TrainConfig& cfg, const EvalConfig& eval) {
    Evaluation e;
    e.eps = potential_error(model, cfg.spec, evaluation_grid(cfg.spec, eval));
    e.energy = energy_estimate(cfg.spec, model, test_samples(cfg, eval), cfg.energy_variant);
    return e;
}

// ---- single runs --------------------------------------------------------------

struct RunReport {
    std::string label;
    TrainConfig config;
    bool ok = true;
    std::string error;
    double eps = std::numeric_limits<double>::quiet_NaN();
    double energy = std::numeric_limits<double>::quiet_NaN();
    double offset_mean = std::numeric_limits<double>::quiet_NaN(); // of U - V on the grid
    double offset_sd = std::numeric_limits<double>::quiet_NaN();
    LossReport final;
    long excluded_train = 0;
    long excluded_grid = 0;
    long excluded_test = 0;
    double wall_seconds = 0.0;
};

/// Everything except wall time, which lives in timing.json so that reports
/// stay byte-identical across repeated runs.
inline nlohmann::json to_json(const RunReport& r, const EvalConfig& eval) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"label", r.label},
            {"status", r.ok ? "ok" : "failed"},
            {"error", r.error},
            {"config", to_json(r.config)},
            {"eval", to_json(eval)},
            {"spec", r.config.spec.name()},
            {"scheme", to_string(r.config.scheme)},
            {"n_samples", r.config.n_samples},
            {"lambda", r.config.lambda},
            {"seed", r.config.seed},
            {"eps", num(r.eps)},
            {"energy", num(r.energy)},
            {"offset_mean", num(r.offset_mean)},
            {"offset_sd", num(r.offset_sd)},
            {"exact_energy", r.config.spec.exact_energy()},
            {"final_loss", num(r.final.total_loss)},
            {"residual", num(r.final.residual_rms)},
            {"pin_penalty", num(r.final.pin_penalty)},
            {"excluded", {{"train", r.excluded_train}, {"grid", r.excluded_grid}, {"test", r.excluded_test}}}};
}

inline void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline void write_history_csv(const std::vector<LossReport>& history, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(17);
    out << "step,total_loss,residual_rms,pin_penalty,energy_estimate\n";
    for (const auto& h : history)
        out << h.step << ',' << h.total_loss << ',' << h.residual_rms << ',' << h.pin_penalty << ','
            << h.energy_estimate << '\n';
}

struct CellOutput {
    RunReport report;
    std::optional<NetworkParams> params;
};

/// Trains one configuration, evaluates it, and (if `dir` is non-empty)
/// writes checkpoint.json, history.csv, report.json and timing.json there. Training and
/// numerical failures are reported in the result instead of thrown.
inline CellOutput run_cell(const TrainConfig& cfg, const EvalConfig& eval, const fs::path& dir = {},
                           const std::string& label = {}) {
    CellOutput out;
    auto& r = out.report;
    r.label = label;
    r.config = cfg;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<LossReport> history; // kept up to the failure if training aborts
    try {
        auto c = cfg;
        if (!dir.empty()) {
            fs::create_directories(dir);
            c.abort_checkpoint = dir / "abort_checkpoint.json";
        }
        const auto trained = train(c, [&](const LossReport& h) { history.push_back(h); });
        r.final = trained.final_report;
        r.excluded_train = trained.excluded_total;
        const auto ev = evaluate(trained.params, cfg, eval);
        r.eps = ev.eps.value;
        r.excluded_grid = ev.eps.excluded;
        r.offset_mean = ev.eps.mean_diff;
        r.offset_sd = ev.eps.sd_diff;
        r.energy = ev.energy.value;
        r.excluded_test = ev.energy.excluded;
        out.params = trained.params;
    } catch (const TrainingError& e) {
        r.ok = false;
        r.error = e.what();
    } catch (const NumericalError& e) {
        r.ok = false;
        r.error = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!dir.empty()) {
        if (out.params) save_checkpoint(*out.params, dir / "checkpoint.json");
        write_history_csv(history, dir / "history.csv");
        write_json(to_json(r, eval), dir / "report.json");
        write_json({{"label", r.label}, {"wall_seconds", r.wall_seconds}}, dir / "timing.json");
    }
    return out;
}

// ---- batches of independent cells ------------------------------------------------

struct CellTask {
    std::string label;
    TrainConfig config;
    fs::path dir; // empty = no artifacts
};

/// Runs every task on up to `workers` threads. Cells are independent, so the
/// results do not depend on the worker count. `on_done` is called under a lock.
inline std::vector<CellOutput> run_cells(const std::vector<CellTask>& tasks, const EvalConfig& eval, int workers,
                                         const std::function<void(const CellOutput&)>& on_done = {}) {
    std::vector<CellOutput> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex lock;
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            results[i] = run_cell(tasks[i].config, eval, tasks[i].dir, tasks[i].label);
            if (on_done) {
                std::scoped_lock g(lock);
                on_done(results[i]);
            }
        }
    };
    const auto n = static_cast<std::size_t>(std::clamp<long>(workers, 1, static_cast<long>(std::max<std::size_t>(tasks.size(), 1))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    }
    return results;
}

// ---- Table 1 ----------------------------------------------------------------------

struct PaperCell {
    double eps;
    double energy;
};

/// Reference numbers printed next to the measured ones; never used as thresholds.
inline std::optional<PaperCell> paper_reference(const WavefunctionSpec& spec, Scheme scheme) {
    static const std::map<std::pair<std::string, Scheme>, PaperCell> table{
        {{"hydrogen", Scheme::QPNN}, {0.072, -0.486}},  {{"hydrogen", Scheme::QPNN_MS}, {0.060, -0.534}},
        {{"hydrogen", Scheme::MPNN}, {0.028, -0.493}},  {{"ho1d:2", Scheme::QPNN}, {0.042, 2.474}},
        {{"ho1d:2", Scheme::QPNN_MS}, {0.016, 2.519}},  {{"ho1d:2", Scheme::MPNN}, {0.006, 2.506}}};
    const auto it = table.find({spec.name(), scheme});
    if (it == table.end()) return std::nullopt;
    return it->second;
}

inline std::string cell_label(const TrainConfig& c) {
    std::string spec = c.spec.name();
    std::replace(spec.begin(), spec.end(), ':', '_');
    std::string scheme = to_string(c.scheme);
    std::replace(scheme.begin(), scheme.end(), '+', '_');
    return spec + "-" + scheme;
}

/// One cell per (system, scheme) for each seed.
inline std::vector<CellTask> table1_tasks(const ExperimentConfig& ec, const fs::path& out) {
    std::vector<CellTask> tasks;
    for (const auto& sys : ec.table1.systems)
        for (auto scheme : ec.table1.schemes)
            for (auto seed : ec.seeds) {
                auto c = train_for_system(ec.train, sys);
                c.scheme = scheme;
                c.seed = seed;
                auto label = cell_label(c) + (ec.seeds.size() > 1 ? "-seed" + std::to_string(seed) : "");
                tasks.push_back({label, c, out.empty() ? fs::path{} : out / "cells" / label});
            }
    return tasks;
}

inline std::string csv_number(double v) {
    if (!std::isfinite(v)) return "nan";
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

/// system,scheme,seed,eps,energy,exact_energy,paper_eps,paper_energy,status
inline void write_table1_csv(const std::vector<CellOutput>& cells, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "system,scheme,seed,eps,energy,exact_energy,paper_eps,paper_energy,status\n";
    for (const auto& c : cells) {
        const auto& r = c.report;
        const auto ref = paper_reference(r.config.spec, r.config.scheme);
        out << r.config.spec.name() << ',' << to_string(r.config.scheme) << ',' << r.config.seed << ','
            << csv_number(r.eps) << ',' << csv_number(r.energy) << ',' << csv_number(r.config.spec.exact_energy())
            << ',' << (ref ? csv_number(ref->eps) : "") << ',' << (ref ? csv_number(ref->energy) : "") << ','
            << (r.ok ? "ok" : "failed") << '\n';
    }
}

// ---- sweeps -------------------------------------------------------------------------

inline std::vector<CellTask> sample_sweep_tasks(const ExperimentConfig& ec, const fs::path& out) {
    std::vector<CellTask> tasks;
    for (auto scheme : ec.sweep.schemes)
        for (long n : ec.sweep.samples)
            for (auto seed : ec.seeds) {
                auto c = ec.train;
                c.hidden = ec.sweep.sample_hidden;
                c.scheme = scheme;
                c.n_samples = n;
                c.seed = seed;
                auto label = cell_label(c) + "-N" + std::to_string(n) + "-seed" + std::to_string(seed);
                tasks.push_back({label, c, out.empty() ? fs::path{} : out / "cells" / label});
            }
    return tasks;
}

struct SweepPoint {
    Scheme scheme = Scheme::MPNN;
    long n_samples = 0;
    double mean_eps = 0.0;
    double var_eps = 0.0; // population variance over the seeds
    long runs = 0;
    long failed = 0;
};

/// Mean and variance of eps per (scheme, N) over the successful runs, in
/// first-appearance order.
inline std::vector<SweepPoint> aggregate_samples(const std::vector<CellOutput>& cells) {
    std::vector<SweepPoint> points;
    std::vector<std::vector<double>> values;
    for (const auto& c : cells) {
        const auto& r = c.report;
        auto it = std::find_if(points.begin(), points.end(), [&](const SweepPoint& p) {
            return p.scheme == r.config.scheme && p.n_samples == r.config.n_samples;
        });
        if (it == points.end()) {
            points.push_back({r.config.scheme, r.config.n_samples});
            values.emplace_back();
            it = points.end() - 1;
        }
        auto& v = values[static_cast<std::size_t>(it - points.begin())];
        if (r.ok && std::isfinite(r.eps)) v.push_back(r.eps);
        else ++it->failed;
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& v = values[i];
        auto& p = points[i];
        p.runs = static_cast<long>(v.size());
        if (v.empty()) {
            p.mean_eps = p.var_eps = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double s = 0.0;
        for (double e : v) s += e;
        p.mean_eps = s / static_cast<double>(v.size());
        double q = 0.0;
        for (double e : v) q += (e - p.mean_eps) * (e - p.mean_eps);
        p.var_eps = q / static_cast<double>(v.size());
    }
    return points;
}

/// scheme,N,mean_eps,var_eps
inline void write_sample_sweep_csv(const std::vector<SweepPoint>& points, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "scheme,N,mean_eps,var_eps\n";
    for (const auto& p : points)
        out << to_string(p.scheme) << ',' << p.n_samples << ',' << csv_number(p.mean_eps) << ','
            << csv_number(p.var_eps) << '\n';
}

inline std::vector<CellTask> lambda_sweep_tasks(const ExperimentConfig& ec, const fs::path& out) {
    std::vector<CellTask> tasks;
    for (double lambda : ec.sweep.lambdas)
        for (auto seed : ec.seeds) {
            auto c = ec.train;
            c.lambda = lambda;
            c.seed = seed;
            std::ostringstream name;
            name << cell_label(c) << "-lambda" << lambda << "-seed" << seed;
            tasks.push_back({name.str(), c, out.empty() ? fs::path{} : out / "cells" / name.str()});
        }
    return tasks;
}

/// lambda,eps,loss with one row per run (seeds share a lambda value).
inline void write_lambda_sweep_csv(const std::vector<CellOutput>& cells, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "lambda,eps,loss\n";
    for (const auto& c : cells)
        out << csv_number(c.report.config.lambda) << ',' << csv_number(c.report.eps) << ','
            << csv_number(c.report.final.total_loss) << '\n';
}

// ---- slices -------------------------------------------------------------------------

struct SliceSummary {
    long points = 0;
    long masked = 0;
    double mean_abs_diff = 0.0;
    double std_diff = 0.0; // standard deviation of U - V over unmasked points
};

/// U, V and U - V on a plane (3D: the two free axes; 1D: a line). Points at
/// the Coulomb singularity are masked: U, V and U - V are written as nan.
template <PotentialModel M>
SliceSummary write_slice_csv(const M& model, const WavefunctionSpec& spec, const SliceConfig& s, const fs::path& path) {
    const int d = spec.dim();
    if (d != 1 && d != 3) throw InputError("slices need a 1D or 3D state");
    if (d == 3 && (s.axis < 0 || s.axis > 2)) throw InputError("slice axis must be x, y or z");
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(12);
    static const char* names[3] = {"x", "y", "z"};
    int free_axes[2] = {0, 1};
    if (d == 3) {
        int k = 0;
        for (int a = 0; a < 3; ++a)
            if (a != s.axis) free_axes[k++] = a;
        out << names[free_axes[0]] << ',' << names[free_axes[1]] << ",U,V,U_minus_V\n";
    } else {
        out << "x,U,V,U_minus_V\n";
    }
    const auto grid = d == 3 ? uniform_grid(2, {{s.lo, s.hi}, {s.lo, s.hi}}, {s.points, s.points})
                             : uniform_grid(1, {{s.lo, s.hi}}, {s.points});
    Eigen::MatrixXd pts(d, grid.size());
    for (long i = 0; i < grid.size(); ++i) {
        if (d == 3) {
            pts(s.axis, i) = s.offset;
            pts(free_axes[0], i) = grid.coords(0, i);
            pts(free_axes[1], i) = grid.coords(1, i);
        } else {
            pts(0, i) = grid.coords(0, i);
        }
    }
    std::vector<char> masked(static_cast<std::size_t>(pts.cols()), 0);
    std::vector<long> keep;
    for (long i = 0; i < pts.cols(); ++i) {
        if (spec.kind == StateKind::HydrogenGround && pts.col(i).norm() < r_floor) masked[static_cast<std::size_t>(i)] = 1;
        else keep.push_back(i);
    }
    const Eigen::MatrixXd kept = pts(Eigen::all, keep);
    const Eigen::RowVectorXd u = evaluate_potential(model, kept);
    SliceSummary sum;
    double acc = 0.0, acc_sq = 0.0, acc_abs = 0.0;
    for (long i = 0, k = 0; i < pts.cols(); ++i) {
        for (long a = 0; a < grid.dim(); ++a) out << grid.coords(a, i) << ',';
        if (masked[static_cast<std::size_t>(i)]) {
            out << "nan,nan,nan\n";
            ++sum.masked;
            continue;
        }
        const Coordinate r(pts.col(i).data(), static_cast<std::size_t>(d));
        const double v = exact_potential(spec, r);
        const double diff = u[k++] - v;
        out << u[k - 1] << ',' << v << ',' << diff << '\n';
        acc += diff;
        acc_sq += diff * diff;
        acc_abs += std::abs(diff);
        ++sum.points;
    }
    if (sum.points > 0) {
        const double n = static_cast<double>(sum.points);
        sum.mean_abs_diff = acc_abs / n;
        sum.std_diff = std::sqrt(std::max(0.0, acc_sq / n - (acc / n) * (acc / n)));
    }
    return sum;
}

// ---- oracle certification ----------------------------------------------------------------

struct OracleRow {
    std::string state;
    double analytic_energy;
    double oracle_energy;
    double max_psi_deviation; // hydrogen: on the radial function u = rho R
    double overlap;           // normalized overlap with the closed form
};

namespace detail {

/// Max abs deviation and normalized overlap after sign alignment.
inline std::pair<double, double> compare_vectors(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    const double sign = ab < 0 ? -1.0 : 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(sign * a[i] - b[i]));
    return {worst, std::abs(ab) / std::sqrt(aa * bb)};
}

} // namespace detail

/// Certifies every shipped state: the oscillator levels on [-8, 8] with 2001
/// points, hydrogen through the radial solver on [1e-4, 40] with 8000 points.
inline std::vector<OracleRow> oracle_certification() {
    std::vector<OracleRow> rows;
    const oracle::Grid1D grid{-8.0, 8.0, 2001};
    const auto pairs = oracle::fd_eigensolve_1d([](double x) { return 0.5 * x * x; }, grid, 3);
    for (int n = 0; n <= 2; ++n) {
        const auto spec = WavefunctionSpec::harmonic(n);
        std::vector<double> exact(static_cast<std::size_t>(grid.n));
        for (long i = 0; i < grid.n; ++i) {
            const double x = grid.x(i);
            exact[static_cast<std::size_t>(i)] = psi(spec, Coordinate(&x, 1));
        }
        const auto [dev, overlap] = detail::compare_vectors(pairs[static_cast<std::size_t>(n)].vector, exact);
        rows.push_back({spec.name(), spec.exact_energy(), pairs[static_cast<std::size_t>(n)].energy, dev, overlap});
    }
    // Normalized radial function of the ground state: u = 2 rho exp(-rho).
    const oracle::Grid1D rgrid{1e-4, 40.0, 8000};
    const auto h = oracle::fd_eigensolve_radial(0, [](double rho) { return -1.0 / rho; }, rgrid, 1);
    std::vector<double> exact(static_cast<std::size_t>(rgrid.n));
    for (long i = 0; i < rgrid.n; ++i) exact[static_cast<std::size_t>(i)] = 2.0 * rgrid.x(i) * std::exp(-rgrid.x(i));
    const auto [dev, overlap] = detail::compare_vectors(h[0].vector, exact);
    const auto hs = WavefunctionSpec::hydrogen();
    rows.push_back({hs.name(), hs.exact_energy(), h[0].energy, dev, overlap});
    return rows;
}

inline nlohmann::json to_json(const std::vector<OracleRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"state", r.state},
                       {"analytic_energy", r.analytic_energy},
                       {"oracle_energy", r.oracle_energy},
                       {"energy_error", std::abs(r.oracle_energy - r.analytic_energy)},
                       {"max_psi_deviation", r.max_psi_deviation},
                       {"overlap", r.overlap}});
    return out;
}

} // namespace mpnn

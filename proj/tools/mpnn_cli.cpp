// mpnn: command-line driver for the potential-learning experiments.
//
//   mpnn [--config PATH] [--out DIR] [--seed INT] [--workers INT] [--dry-run] <command> [options]
//
// Exit codes: 0 success, 2 usage or configuration error, 1 numerical failure
// (including any failed training cell in a batch).

#include "mpnn/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

using namespace mpnn;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_numerical = 1;
constexpr int exit_usage = 2;

struct Globals {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    bool dry_run = false;
};

struct TrainOverrides {
    std::string spec, scheme;
    std::optional<long> steps, samples;
    std::optional<double> lambda;
};

ExperimentConfig load(const Globals& g) {
    auto ec = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    if (!g.out.empty()) ec.output_dir = g.out;
    if (g.seed) ec.seeds = {*g.seed};
    ec.train.seed = ec.seeds.front();
    return ec;
}

void apply(TrainConfig& c, const TrainOverrides& o) {
    if (!o.spec.empty()) c = with_spec(c, WavefunctionSpec::parse(o.spec));
    if (!o.scheme.empty()) c.scheme = scheme_from_string(o.scheme);
    if (o.steps) c.steps = *o.steps;
    if (o.samples) c.n_samples = *o.samples;
    if (o.lambda) c.lambda = *o.lambda;
    validate_train(c, "command line");
}

void print_plan(const std::vector<CellTask>& tasks) {
    nlohmann::json plan = nlohmann::json::array();
    for (const auto& t : tasks)
        plan.push_back({{"label", t.label}, {"dir", t.dir.string()}, {"config", to_json(t.config)}});
    std::cout << plan.dump(2) << '\n';
}

void log_cell(const CellOutput& c) {
    const auto& r = c.report;
    std::cerr << (r.ok ? "done   " : "FAILED ") << r.label << "  eps=" << r.eps << "  E=" << r.energy
              << "  loss=" << r.final.total_loss << "  (" << std::fixed << std::setprecision(1) << r.wall_seconds
              << " s)" << std::defaultfloat << std::setprecision(6);
    if (!r.ok) std::cerr << "  " << r.error;
    std::cerr << '\n';
}

int failures(const std::vector<CellOutput>& cells) {
    int n = 0;
    for (const auto& c : cells) n += c.report.ok ? 0 : 1;
    return n;
}

std::vector<CellOutput> run_batch(const std::vector<CellTask>& tasks, const ExperimentConfig& ec, const Globals& g,
                                  const fs::path& out, const std::string& name) {
    fs::create_directories(out);
    auto cells = run_cells(tasks, ec.eval, g.workers, log_cell);
    nlohmann::json reports = nlohmann::json::array(), timing = nlohmann::json::array();
    for (const auto& c : cells) {
        reports.push_back(to_json(c.report, ec.eval));
        timing.push_back({{"label", c.report.label}, {"wall_seconds", c.report.wall_seconds}});
    }
    write_json(reports, out / (name + "_reports.json"));
    write_json(timing, out / (name + "_timing.json"));
    return cells;
}

int cmd_train(const Globals& g, const TrainOverrides& o) {
    auto ec = load(g);
    apply(ec.train, o);
    const fs::path out = ec.output_dir;
    const std::vector<CellTask> tasks{{cell_label(ec.train), ec.train, out}};
    if (g.dry_run) {
        print_plan(tasks);
        return exit_ok;
    }
    const auto cell = run_cell(ec.train, ec.eval, out, tasks[0].label);
    log_cell(cell);
    std::cout << to_json(cell.report, ec.eval).dump(2) << '\n';
    return cell.report.ok ? exit_ok : exit_numerical;
}

int cmd_table1(const Globals& g) {
    const auto ec = load(g);
    const fs::path out = ec.output_dir;
    const auto tasks = table1_tasks(ec, out);
    if (g.dry_run) {
        print_plan(tasks);
        return exit_ok;
    }
    const auto cells = run_batch(tasks, ec, g, out, "table1");
    write_table1_csv(cells, out / "table1.csv");
    std::cout << std::left << std::setw(10) << "system" << std::setw(10) << "scheme" << std::setw(8) << "seed"
              << std::setw(14) << "eps" << std::setw(14) << "energy" << std::setw(12) << "paper eps" << "paper E\n";
    for (const auto& c : cells) {
        const auto& r = c.report;
        const auto ref = paper_reference(r.config.spec, r.config.scheme);
        std::cout << std::setw(10) << r.config.spec.name() << std::setw(10) << to_string(r.config.scheme)
                  << std::setw(8) << r.config.seed << std::setw(14) << csv_number(r.eps) << std::setw(14)
                  << csv_number(r.energy) << std::setw(12) << (ref ? csv_number(ref->eps) : "-")
                  << (ref ? csv_number(ref->energy) : "-") << (r.ok ? "" : "  FAILED") << '\n';
    }
    std::cout << "wrote " << (out / "table1.csv").string() << '\n';
    return failures(cells) ? exit_numerical : exit_ok;
}

int cmd_sweep_samples(const Globals& g) {
    const auto ec = load(g);
    const fs::path out = ec.output_dir;
    const auto tasks = sample_sweep_tasks(ec, out);
    if (g.dry_run) {
        print_plan(tasks);
        return exit_ok;
    }
    const auto cells = run_batch(tasks, ec, g, out, "sweep_samples");
    const auto points = aggregate_samples(cells);
    write_sample_sweep_csv(points, out / "sweep_samples.csv");
    for (const auto& p : points)
        std::cout << to_string(p.scheme) << "  N=" << p.n_samples << "  mean_eps=" << csv_number(p.mean_eps)
                  << "  var_eps=" << csv_number(p.var_eps) << "  runs=" << p.runs << '\n';
    std::cout << "wrote " << (out / "sweep_samples.csv").string() << '\n';
    return failures(cells) ? exit_numerical : exit_ok;
}

int cmd_sweep_lambda(const Globals& g) {
    const auto ec = load(g);
    const fs::path out = ec.output_dir;
    const auto tasks = lambda_sweep_tasks(ec, out);
    if (g.dry_run) {
        print_plan(tasks);
        return exit_ok;
    }
    const auto cells = run_batch(tasks, ec, g, out, "sweep_lambda");
    write_lambda_sweep_csv(cells, out / "sweep_lambda.csv");
    // z = 0 slices for the smallest and largest lambda (first seed).
    const auto [lo, hi] = std::minmax_element(ec.sweep.lambdas.begin(), ec.sweep.lambdas.end());
    for (double lambda : {*lo, *hi}) {
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const CellOutput& c) {
            return c.report.config.lambda == lambda && c.params;
        });
        if (it == cells.end()) continue;
        std::ostringstream name;
        name << "slice_lambda" << lambda << ".csv";
        SliceConfig s = ec.slice;
        write_slice_csv(*it->params, it->report.config.spec, s, out / name.str());
    }
    for (const auto& c : cells)
        std::cout << "lambda=" << c.report.config.lambda << "  seed=" << c.report.config.seed
                  << "  eps=" << csv_number(c.report.eps) << "  loss=" << csv_number(c.report.final.total_loss)
                  << "  E=" << csv_number(c.report.energy) << '\n';
    std::cout << "wrote " << (out / "sweep_lambda.csv").string() << '\n';
    return failures(cells) ? exit_numerical : exit_ok;
}

int cmd_slice(const Globals& g, const std::string& checkpoint, const std::string& spec_name) {
    const auto ec = load(g);
    const auto spec = spec_name.empty() ? ec.train.spec : WavefunctionSpec::parse(spec_name);
    const fs::path out = ec.output_dir;
    if (g.dry_run) {
        std::cout << "slice of " << checkpoint << " for " << spec.name() << " -> " << (out / "slice.csv").string()
                  << '\n';
        return exit_ok;
    }
    if (!fs::exists(checkpoint)) throw InputError("checkpoint not found: " + checkpoint);
    const auto params = load_checkpoint(checkpoint);
    if (params.arch().input_dim != spec.dim())
        throw InputError("checkpoint input dimension does not match " + spec.name());
    fs::create_directories(out);
    const auto s = write_slice_csv(params, spec, ec.slice, out / "slice.csv");
    std::cout << "points=" << s.points << "  masked=" << s.masked << "  mean|U-V|=" << s.mean_abs_diff
              << "  sd(U-V)=" << s.std_diff << "\nwrote " << (out / "slice.csv").string() << '\n';
    return exit_ok;
}

int cmd_oracle(const Globals& g) {
    const auto ec = load(g);
    const fs::path out = ec.output_dir;
    if (g.dry_run) {
        std::cout << "oracle certification -> " << (out / "oracle.json").string() << '\n';
        return exit_ok;
    }
    const auto rows = oracle_certification();
    fs::create_directories(out);
    write_json(to_json(rows), out / "oracle.json");
    std::cout << std::left << std::setw(10) << "state" << std::setw(14) << "analytic E" << std::setw(16)
              << "oracle E" << std::setw(14) << "max dPsi" << "overlap\n";
    for (const auto& r : rows)
        std::cout << std::setw(10) << r.state << std::setw(14) << r.analytic_energy << std::setw(16)
                  << std::setprecision(10) << r.oracle_energy << std::setprecision(4) << std::setw(14)
                  << r.max_psi_deviation << std::setprecision(8) << r.overlap << std::setprecision(6) << '\n';
    std::cout << to_json(rows).dump(2) << '\n';
    return exit_ok;
}

int cmd_sample_dump(const Globals& g, const TrainOverrides& o) {
    auto ec = load(g);
    apply(ec.train, o);
    const fs::path out = ec.output_dir;
    if (g.dry_run) {
        std::cout << ec.train.n_samples << " " << to_string(ec.train.scheme) << " training samples of "
                  << ec.train.spec.name() << " -> " << (out / "samples.csv").string() << '\n';
        return exit_ok;
    }
    const auto s = draw_training_samples(ec.train, derive_seed(ec.train.seed, seed_stream::train_samples));
    fs::create_directories(out);
    save_samples(s, out / "samples");
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << s.size() << " samples to " << (out / "samples.csv").string() << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn the potential of a known eigenstate and reproduce the benchmark experiments."};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may also follow the subcommand
    Globals g;
    app.add_option("--config", g.config, "YAML experiment config")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "output directory (overrides output_dir)");
    app.add_option("--seed", g.seed, "single seed (overrides seeds)");
    app.add_option("--workers", g.workers, "parallel training cells")->check(CLI::PositiveNumber);
    app.add_flag("--dry-run", g.dry_run, "print the planned work and exit");

    TrainOverrides o;
    auto add_overrides = [&o](CLI::App* cmd) {
        cmd->add_option("--spec", o.spec, "ho1d:0, ho1d:1, ho1d:2 or hydrogen");
        cmd->add_option("--scheme", o.scheme, "MPNN, QPNN or QPNN+MS");
        cmd->add_option("--steps", o.steps, "training steps");
        cmd->add_option("--samples", o.samples, "training samples N");
        cmd->add_option("--lambda", o.lambda, "pin weight");
    };
    auto* train = app.add_subcommand("train", "train one configuration; writes checkpoint, history and report");
    add_overrides(train);
    auto* table1 = app.add_subcommand("table1", "three schemes on each configured system");
    auto* sweep_n = app.add_subcommand("sweep-samples", "error against the number of training samples");
    auto* sweep_l = app.add_subcommand("sweep-lambda", "error and loss against the pin weight");
    auto* slice = app.add_subcommand("slice", "dump U, V and U - V on a plane");
    std::string checkpoint, slice_spec;
    slice->add_option("--checkpoint", checkpoint, "trained network")->required();
    slice->add_option("--spec", slice_spec, "state the network was trained on (default: train.spec)");
    auto* oracle_cmd = app.add_subcommand("oracle", "certify the closed forms against the eigensolver");
    auto* dump = app.add_subcommand("sample-dump", "write the training samples of a configuration");
    add_overrides(dump);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*train) return cmd_train(g, o);
        if (*table1) return cmd_table1(g);
        if (*sweep_n) return cmd_sweep_samples(g);
        if (*sweep_l) return cmd_sweep_lambda(g);
        if (*slice) return cmd_slice(g, checkpoint, slice_spec);
        if (*oracle_cmd) return cmd_oracle(g);
        if (*dump) return cmd_sample_dump(g, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const InputError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const TrainingError& e) {
        std::cerr << "training failed: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numerical;
    }
    return exit_usage;
}

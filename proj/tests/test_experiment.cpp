#include <catch2/catch_amalgamated.hpp>

#include "mpnn/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace mpnn;

namespace {

TrainConfig tiny(const WavefunctionSpec& spec, Scheme scheme, std::uint64_t seed = 0) {
    TrainConfig c;
    c.spec = spec;
    c.scheme = scheme;
    c.hidden = {6, 8, 8};
    c.n_samples = 200;
    c.steps = 20;
    c.history_every = 5;
    c.chain_burn_in = 100;
    c.seed = seed;
    return c;
}

EvalConfig small_eval() {
    EvalConfig e;
    e.grid_points = 1000;
    e.test_samples = 500;
    return e;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mpnn_experiment_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

long count_lines(const fs::path& p) {
    std::ifstream in(p);
    long n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

} // namespace

TEST_CASE("evaluation grid follows the per-axis rule") {
    const auto e = small_eval();
    CHECK(evaluation_grid(WavefunctionSpec::harmonic(2), e).size() == 1000);
    CHECK(evaluation_grid(WavefunctionSpec::hydrogen(), e).size() == 1000);
}

TEST_CASE("test samples come from a stream separate from training") {
    const auto c = tiny(WavefunctionSpec::harmonic(0), Scheme::MPNN);
    const auto test = test_samples(c, small_eval());
    const auto train = draw_training_samples(c, derive_seed(c.seed, seed_stream::train_samples));
    CHECK(test.size() == 500);
    CHECK(test.coords(0, 0) != train.coords(0, 0));
    CHECK(test_samples(c, small_eval()).coords == test.coords);
}

TEST_CASE("a cell writes checkpoint, history and report") {
    const auto dir = scratch("cell");
    const auto c = tiny(WavefunctionSpec::harmonic(2), Scheme::MPNN);
    const auto out = run_cell(c, small_eval(), dir, "one");
    REQUIRE(out.report.ok);
    CHECK(std::isfinite(out.report.eps));
    CHECK(std::isfinite(out.report.energy));
    CHECK(fs::exists(dir / "checkpoint.json"));
    CHECK(count_lines(dir / "history.csv") == 1 + 5);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["status"] == "ok");
    CHECK(rep["scheme"] == "MPNN");
    CHECK(rep["eps"].get<double>() == out.report.eps);
    CHECK(rep["config"]["n_samples"] == 200);
    const auto reloaded = load_checkpoint(dir / "checkpoint.json");
    CHECK(potential_error(reloaded, c.spec, evaluation_grid(c.spec, small_eval())).value == out.report.eps);
    fs::remove_all(dir);
}

TEST_CASE("a diverging cell is reported, not thrown") {
    auto c = tiny(WavefunctionSpec::harmonic(0), Scheme::MPNN);
    c.eta = 1e300;
    const auto dir = scratch("diverge");
    const auto out = run_cell(c, small_eval(), dir);
    CHECK_FALSE(out.report.ok);
    CHECK_FALSE(out.report.error.empty());
    CHECK(std::isnan(out.report.eps));
    CHECK(fs::exists(dir / "abort_checkpoint.json"));
    CHECK_FALSE(fs::exists(dir / "checkpoint.json"));
    CHECK(count_lines(dir / "history.csv") >= 2); // header and the first step
    fs::remove_all(dir);
}

TEST_CASE("results do not depend on the worker count") {
    std::vector<CellTask> tasks;
    for (auto scheme : {Scheme::MPNN, Scheme::QPNN, Scheme::QPNN_MS})
        for (std::uint64_t seed : {1, 2})
            tasks.push_back({"t", tiny(WavefunctionSpec::harmonic(1), scheme, seed), {}});
    const auto serial = run_cells(tasks, small_eval(), 1);
    long seen = 0;
    const auto parallel = run_cells(tasks, small_eval(), 3, [&](const CellOutput&) { ++seen; });
    CHECK(seen == static_cast<long>(tasks.size()));
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        CHECK(serial[i].report.eps == parallel[i].report.eps);
        CHECK(serial[i].report.energy == parallel[i].report.energy);
        CHECK(serial[i].params->flat() == parallel[i].params->flat());
    }
}

TEST_CASE("sample sweep aggregation uses the population variance") {
    std::vector<CellOutput> cells(5);
    const double eps[] = {0.1, 0.3, 0.2, 0.4, 0.5};
    const long n[] = {100, 100, 200, 200, 200};
    for (int i = 0; i < 5; ++i) {
        cells[i].report.config.n_samples = n[i];
        cells[i].report.eps = eps[i];
    }
    cells[4].report.ok = false;
    const auto pts = aggregate_samples(cells);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].mean_eps == Catch::Approx(0.2));
    CHECK(pts[0].var_eps == Catch::Approx(0.01));
    CHECK(pts[1].runs == 2);
    CHECK(pts[1].failed == 1);
    CHECK(pts[1].mean_eps == Catch::Approx(0.3));
    CHECK(pts[1].var_eps == Catch::Approx(0.01));
}

TEST_CASE("table 1 tasks cover every system and scheme") {
    auto ec = parse_config_string(R"(
table1:
  systems:
    - {spec: hydrogen, train: {steps: 3}}
    - {spec: "ho1d:2"}
)");
    const auto tasks = table1_tasks(ec, "out");
    REQUIRE(tasks.size() == 6);
    CHECK(tasks[0].config.spec == WavefunctionSpec::hydrogen());
    CHECK(tasks[0].config.steps == 3);
    CHECK(tasks[0].config.pin() == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(tasks[3].config.spec == WavefunctionSpec::harmonic(2));
    CHECK(tasks[5].config.scheme == Scheme::MPNN);
    CHECK(tasks[5].dir == fs::path("out/cells/ho1d_2-MPNN"));
    CHECK(paper_reference(WavefunctionSpec::hydrogen(), Scheme::MPNN)->eps == 0.028);
    CHECK_FALSE(paper_reference(WavefunctionSpec::harmonic(0), Scheme::MPNN).has_value());
}

TEST_CASE("table 1 csv has one row per cell") {
    const auto dir = scratch("table1");
    fs::create_directories(dir);
    std::vector<CellOutput> cells(2);
    cells[0].report.config.spec = WavefunctionSpec::hydrogen();
    cells[0].report.eps = 0.05;
    cells[0].report.energy = -0.49;
    cells[1].report.ok = false;
    write_table1_csv(cells, dir / "t.csv");
    const auto text = slurp(dir / "t.csv");
    CHECK(text.find("hydrogen,MPNN,0,0.05,-0.49,-0.5,0.028,-0.493,ok") != std::string::npos);
    CHECK(text.find("ho1d:2,MPNN,0,nan,nan,2.5,0.006,2.506,failed") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("hydrogen slice masks the nucleus and sees the exact potential") {
    const auto dir = scratch("slice");
    fs::create_directories(dir);
    SliceConfig s;
    s.points = 11; // odd, so the origin is on the grid
    const auto spec = WavefunctionSpec::hydrogen();
    const auto sum = write_slice_csv(exact_potential_model(spec), spec, s, dir / "s.csv");
    CHECK(sum.masked == 1);
    CHECK(sum.points == 120);
    CHECK(sum.mean_abs_diff == 0.0);
    CHECK(count_lines(dir / "s.csv") == 122);
    CHECK(slurp(dir / "s.csv").rfind("x,y,U,V,U_minus_V", 0) == 0);

    const auto shifted = write_slice_csv(exact_potential_model(spec, 0.25), spec, s, dir / "s2.csv");
    CHECK(shifted.mean_abs_diff == Catch::Approx(0.25));
    CHECK(shifted.std_diff == Catch::Approx(0.0).margin(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("oracle certification covers every state within tolerance") {
    const auto rows = oracle_certification();
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        INFO(r.state);
        CHECK(std::abs(r.oracle_energy - r.analytic_energy) <= 1e-3);
        CHECK(r.max_psi_deviation <= 1e-3);
        CHECK(r.overlap > 0.9999);
    }
    CHECK(to_json(rows).size() == 4);
}

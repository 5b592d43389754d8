#include <catch2/catch_amalgamated.hpp>

#include "mpnn/config.hpp"

#include <string>

using namespace mpnn;

namespace {

std::string key_of(const std::string& yaml) {
    try {
        parse_config_string(yaml);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

} // namespace

TEST_CASE("empty document gives defaults") {
    const auto c = parse_config_string("");
    CHECK(c.version == 1);
    CHECK(c.seeds == std::vector<std::uint64_t>{0});
    CHECK(c.train.spec == WavefunctionSpec::harmonic(2));
    CHECK(c.table1.schemes.size() == 3);
    CHECK(c.eval.per_axis(1) == 8000);
    CHECK(c.eval.per_axis(3) == 20);
}

TEST_CASE("full document round trip") {
    const auto c = parse_config_string(R"(
version: 1
seeds: [3, 4]
output_dir: out/x
train:
  spec: hydrogen
  scheme: QPNN+MS
  hidden: [8, 16, 16]
  activation: tanh
  n_samples: 500
  lambda: 0.5
  eta: 0.01
  eta_schedule: cosine
  eta_floor: 0.05
  steps: 10
  chain: {sigma: 0.7, burn_in: 50, thinning: 2}
eval: {grid_points: 1000, test_samples: 300}
table1:
  systems:
    - {spec: hydrogen, train: {steps: 7}}
    - {spec: "ho1d:2"}
  schemes: [MPNN]
sweep: {samples: [100, 200], schemes: [QPNN], lambdas: [0, 2]}
slice: {axis: y, offset: 0.25, points: 11}
)");
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(c.output_dir == "out/x");
    CHECK(c.train.spec == WavefunctionSpec::hydrogen());
    CHECK(c.train.scheme == Scheme::QPNN_MS);
    CHECK(c.train.hidden == std::array<int, 3>{8, 16, 16});
    CHECK(c.train.activation == Activation::Tanh);
    CHECK(c.train.eta_schedule == EtaSchedule::Cosine);
    CHECK(c.train.eta_floor == 0.05);
    CHECK(c.train.chain_sigma == 0.7);
    CHECK(c.eval.per_axis(3) == 10);
    REQUIRE(c.table1.systems.size() == 2);
    CHECK(train_for_system(c.train, c.table1.systems[0]).steps == 7);
    const auto ho = train_for_system(c.train, c.table1.systems[1]);
    CHECK(ho.spec == WavefunctionSpec::harmonic(2));
    CHECK(ho.pin() == std::vector<double>{1.0});
    CHECK(c.table1.schemes == std::vector<Scheme>{Scheme::MPNN});
    CHECK(c.sweep.samples == std::vector<long>{100, 200});
    CHECK(c.slice.axis == 1);
    CHECK(c.slice.points == 11);
}

TEST_CASE("errors name the offending key") {
    CHECK(key_of("train: {n_samples: -5}") == "train");
    CHECK(key_of("train: {n_smaples: 5}") == "train.n_smaples");
    CHECK(key_of("train: {lambda: abc}") == "train.lambda");
    CHECK(key_of("train: {scheme: DMC}") == "train.scheme");
    CHECK(key_of("train: {hidden: [1, 2]}") == "train.hidden");
    CHECK(key_of("version: 2") == "version");
    CHECK(key_of("sweep: {samples: [0]}") == "sweep.samples");
    CHECK(key_of("slice: {axis: w}") == "slice.axis");
    CHECK(key_of("table1: {systems: [{spec: helium}]}") == "table1.systems[0].spec");
    CHECK(key_of("bogus: 1") == "bogus");
    CHECK_THROWS_AS(parse_config_string("train: [unclosed"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ConfigError);
}

TEST_CASE("cosine schedule") {
    TrainConfig c;
    c.eta = 0.01;
    c.steps = 100;
    CHECK(c.eta_at(50) == 0.01);
    c.eta_schedule = EtaSchedule::Cosine;
    c.eta_floor = 0.1;
    CHECK(c.eta_at(1) == Catch::Approx(0.01));
    CHECK(c.eta_at(51) == Catch::Approx(0.005));
    CHECK(c.eta_at(100) == Catch::Approx(0.001));
}

TEST_CASE("report echo carries every setting") {
    TrainConfig c;
    const auto j = to_json(c);
    CHECK(j["spec"] == "ho1d:2");
    CHECK(j["pin_value"].get<double>() == 0.5);
    CHECK(j["box"].size() == 1);
    CHECK(j["eta_schedule"] == "constant");
}

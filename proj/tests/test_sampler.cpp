#include <catch2/catch_amalgamated.hpp>

#include "mpnn/sampler.hpp"
#include "stats.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using Catch::Matchers::WithinAbs;
using namespace mpnn;

namespace {

ChainConfig chain_for(const WavefunctionSpec& spec, long n, std::uint64_t seed) {
    ChainConfig c;
    c.step_sigma = default_step_sigma(spec);
    c.n_samples = n;
    c.seed = seed;
    return c;
}

} // namespace

TEST_CASE("acceptance probability") {
    CHECK(acceptance_probability(0.2, 0.4) == 1.0);
    CHECK(acceptance_probability(0.4, 0.2) == 0.5);
    CHECK(acceptance_probability(0.3, 0.3) == 1.0);
}

TEST_CASE("oscillator ground-state moments") {
    const auto s = metropolis_sample(WavefunctionSpec::harmonic(0), chain_for(WavefunctionSpec::harmonic(0), 100000, 42));
    REQUIRE(s.size() == 100000);
    const Eigen::RowVectorXd x = s.coords.row(0);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    CHECK_THAT(mean, WithinAbs(0.0, 0.02));
    CHECK_THAT(var, WithinAbs(0.5, 0.02));
    CHECK(s.acceptance_rate > 0.05);
    CHECK(s.acceptance_rate < 0.95);
    CHECK(s.warnings.empty());
}

TEST_CASE("hydrogen mean radius") {
    const auto spec = WavefunctionSpec::hydrogen();
    const auto s = metropolis_sample(spec, chain_for(spec, 100000, 43));
    double mean_r = 0.0;
    for (long i = 0; i < s.size(); ++i) mean_r += s.coords.col(i).norm();
    mean_r /= static_cast<double>(s.size());
    CHECK_THAT(mean_r, WithinAbs(1.5, 0.03));
}

TEST_CASE("histogram chi-square against |psi|^2") {
    for (const auto& spec : {WavefunctionSpec::harmonic(0), WavefunctionSpec::harmonic(2)}) {
        const auto s = metropolis_sample(spec, chain_for(spec, 100000, 44));
        const auto p = test_support::histogram_chi2_pvalue(spec, s, -4.0, 4.0, 40);
        INFO(spec.name() << " p = " << p);
        CHECK(p > 0.01);
    }
    const auto spec = WavefunctionSpec::hydrogen();
    const auto s = metropolis_sample(spec, chain_for(spec, 100000, 45));
    const auto p = test_support::radial_chi2_pvalue(s, 6.0, 30);
    INFO("hydrogen radial p = " << p);
    CHECK(p > 0.01);
}

TEST_CASE("same seed gives identical chains, different seeds differ") {
    const auto spec = WavefunctionSpec::hydrogen();
    const auto a = metropolis_sample(spec, chain_for(spec, 500, 7));
    const auto b = metropolis_sample(spec, chain_for(spec, 500, 7));
    const auto c = metropolis_sample(spec, chain_for(spec, 500, 8));
    CHECK(a.coords == b.coords);
    CHECK(a.acceptance_rate == b.acceptance_rate);
    CHECK(a.coords != c.coords);
}

TEST_CASE("chains never record invalid points") {
    for (const auto& spec : {WavefunctionSpec::harmonic(1), WavefunctionSpec::harmonic(2), WavefunctionSpec::hydrogen()}) {
        const auto s = metropolis_sample(spec, chain_for(spec, 20000, 9));
        for (long i = 0; i < s.size(); ++i) REQUIRE(is_valid_point(spec, s.at(i)));
    }
}

TEST_CASE("bad proposal widths raise an acceptance warning") {
    auto cfg = chain_for(WavefunctionSpec::harmonic(0), 2000, 1);
    cfg.step_sigma = 200.0;
    const auto s = metropolis_sample(WavefunctionSpec::harmonic(0), cfg);
    CHECK(s.acceptance_rate < 0.05);
    CHECK(s.warnings.size() == 1);
}

TEST_CASE("chain configuration is validated") {
    const auto spec = WavefunctionSpec::harmonic(0);
    auto cfg = chain_for(spec, 10, 1);
    cfg.thinning = 0;
    CHECK_THROWS_AS(metropolis_sample(spec, cfg), InputError);
    cfg = chain_for(spec, 0, 1);
    CHECK_THROWS_AS(metropolis_sample(spec, cfg), InputError);
    cfg = chain_for(spec, 10, 1);
    cfg.step_sigma = 0.0;
    CHECK_THROWS_AS(metropolis_sample(spec, cfg), InputError);
    cfg = chain_for(spec, 10, 1);
    cfg.init = {0.0, 0.0};
    CHECK_THROWS_AS(metropolis_sample(spec, cfg), InputError);
}

TEST_CASE("uniform grid layout") {
    const auto g = uniform_grid(2, {{-1.0, 1.0}, {0.0, 3.0}}, {3, 4});
    REQUIRE(g.size() == 12);
    CHECK(g.source == SampleSource::UniformGrid);
    CHECK(g.coords(0, 0) == -1.0);
    CHECK(g.coords(1, 0) == 0.0);
    CHECK(g.coords(1, 1) == 1.0); // last axis fastest
    CHECK(g.coords(0, 4) == 0.0);
    CHECK(g.coords(0, 11) == 1.0);
    CHECK(g.coords(1, 11) == 3.0);
    CHECK_THROWS_AS(uniform_grid(2, {{-1.0, 1.0}}, {3, 3}), InputError);
    CHECK_THROWS_AS(uniform_grid(1, {{1.0, -1.0}}, {3}), InputError);
    CHECK_THROWS_AS(uniform_grid(1, {{-1.0, 1.0}}, {1}), InputError);
}

TEST_CASE("uniform box samples stay inside and skip invalid points") {
    const auto b = uniform_box_sample(3, std::vector<Interval>(3, {-2.0, 2.0}), 5000, 3);
    CHECK(b.size() == 5000);
    CHECK(b.coords.minCoeff() >= -2.0);
    CHECK(b.coords.maxCoeff() <= 2.0);
    CHECK_THAT(b.coords.mean(), WithinAbs(0.0, 0.05));

    const auto v = uniform_box_sample_valid(WavefunctionSpec::hydrogen(), std::vector<Interval>(3, {-2.0, 2.0}), 2000, 3);
    for (long i = 0; i < v.size(); ++i) CHECK(is_valid_point(WavefunctionSpec::hydrogen(), v.at(i)));
}

TEST_CASE("sample CSV round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mpnn_test_sampler";
    std::filesystem::create_directories(dir);
    const auto spec = WavefunctionSpec::hydrogen();
    const auto s = metropolis_sample(spec, chain_for(spec, 300, 12));
    save_samples(s, dir / "chain");
    const auto back = load_samples(dir / "chain");
    CHECK(back.coords == s.coords);
    CHECK(back.source == SampleSource::Metropolis);
    CHECK(back.seed == 12);
    CHECK(back.acceptance_rate == s.acceptance_rate);
    std::filesystem::remove_all(dir);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vaa/judge.hpp"
#include "vaa/stats.hpp"

using namespace vaa;

namespace {

struct Clustered {
    std::vector<double> y;
    std::vector<double> x;
    std::vector<std::string> cluster;
};

Clustered random_clustered(std::mt19937_64& rng, std::size_t groups, std::size_t per_group,
                           double slope) {
    Clustered d;
    std::normal_distribution<double> noise(0.0, 0.3);
    std::normal_distribution<double> offset(0.0, 2.0);
    std::uniform_real_distribution<double> xs(-2.0, 2.0);
    for (std::size_t g = 0; g < groups; ++g) {
        double c = offset(rng);
        for (std::size_t i = 0; i < per_group; ++i) {
            double x = xs(rng);
            d.x.push_back(x);
            d.y.push_back(c + slope * x + noise(rng));
            d.cluster.push_back("g" + std::to_string(g));
        }
    }
    return d;
}

}  // namespace

TEST_CASE("pearson matches the oracle and handles the degenerate inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> a, b;
        for (int i = 0; i < 30; ++i) {
            a.push_back(u(rng));
            b.push_back(u(rng));
        }
        CHECK(pearson(a, b) == doctest::Approx(oracle::pearson(a, b)).epsilon(1e-12));
    }
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {6, 4, 2}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), data_error);
    CHECK_THROWS_AS(pearson({1}, {2}), data_error);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), data_error);
}

TEST_CASE("wald statistics compute z, p, and the 95 percent interval") {
    auto c = wald_stats(1.0, 0.5);
    CHECK(c.z == doctest::Approx(2.0));
    CHECK(c.p == doctest::Approx(std::erfc(2.0 / std::sqrt(2.0))));
    CHECK(c.ci_lo == doctest::Approx(0.02));
    CHECK(c.ci_hi == doctest::Approx(1.98));

    auto degenerate = wald_stats(3.0, 0.0);
    CHECK(degenerate.p == 0.0);
    CHECK(std::isinf(degenerate.z));
    CHECK(wald_stats(0.0, 0.0).p == 1.0);
}

TEST_CASE("the within-cluster slope matches the dummy-variable oracle") {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 20; ++t) {
        auto d = random_clustered(rng, 5 + t % 4, 6, 0.7);
        auto fit = linear_fixed_intercepts(d.y, d.x, d.cluster);
        double want = oracle::fixed_effects_slope(d.y, d.x, d.cluster);
        CHECK(fit.coefficients.at("slope").b == doctest::Approx(want).epsilon(1e-6));
        CHECK(fit.n == d.y.size());
        CHECK(fit.clusters == 5 + t % 4);
    }
}

TEST_CASE("a noise-free clustered line recovers its slope exactly") {
    std::vector<double> x = {0, 1, 2, 0, 1, 2};
    std::vector<double> y = {5, 7, 9, -1, 1, 3};  // y = 2x + {5, -1}
    std::vector<std::string> g = {"a", "a", "a", "b", "b", "b"};
    auto fit = linear_fixed_intercepts(y, x, g);
    CHECK(fit.coefficients.at("slope").b == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.coefficients.at("slope").se == doctest::Approx(0.0));
}

TEST_CASE("the linear fit rejects unidentifiable designs") {
    CHECK_THROWS_AS(linear_fixed_intercepts({1, 2}, {1, 2}, {"a", "b"}), data_error);
    CHECK_THROWS_AS(linear_fixed_intercepts({1, 2, 3}, {1, 2, 3}, {"a", "a", "a"}), data_error);
    // x constant within each cluster: the slope is absorbed by the intercepts
    CHECK_THROWS_AS(
        linear_fixed_intercepts({1, 2, 3, 4}, {1, 1, 2, 2}, {"a", "a", "b", "b"}), data_error);
}

TEST_CASE("logistic estimates agree with an exhaustive likelihood search") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> xs(-2.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 5; ++t) {
        std::vector<double> y, x;
        std::vector<std::string> cl;
        for (int i = 0; i < 200; ++i) {
            double xi = xs(rng);
            double p = 1.0 / (1.0 + std::exp(-(0.3 + 0.8 * xi)));
            x.push_back(xi);
            y.push_back(u(rng) < p ? 1.0 : 0.0);
            cl.push_back("c" + std::to_string(i % 25));
        }
        auto fit = logistic_regression(y, x, cl);
        auto want = oracle::logistic_grid_search(y, x);
        CHECK(fit.coefficients.at("(intercept)").b == doctest::Approx(want.b0).epsilon(1e-4));
        CHECK(fit.coefficients.at("slope").b == doctest::Approx(want.b1).epsilon(1e-4));
        CHECK_FALSE(fit.separation_flag);
        CHECK(fit.clusters == 25);
    }
}

TEST_CASE("perfect separation caps the slope and flags the fit") {
    std::vector<double> y, x;
    std::vector<std::string> cl;
    for (int i = 0; i < 40; ++i) {
        double xi = (i - 19.5) / 10.0;
        x.push_back(xi);
        y.push_back(xi > 0 ? 1.0 : 0.0);
        cl.push_back("c" + std::to_string(i % 8));
    }
    auto fit = logistic_regression(y, x, cl);
    CHECK(fit.separation_flag);
    CHECK(std::abs(fit.coefficients.at("slope").b) == doctest::Approx(20.0));
    REQUIRE(fit.warnings.size() == 1);
    CHECK(fit.warnings[0].find("separation") != std::string::npos);
}

TEST_CASE("logistic outcomes must be coded 0/1 with both classes present") {
    std::vector<std::string> cl = {"a", "a", "b", "b"};
    CHECK_THROWS_AS(logistic_regression({0, 1, 0.5, 1}, {1, 2, 3, 4}, cl), data_error);
    CHECK_THROWS_AS(logistic_regression({1, 1, 1, 1}, {1, 2, 3, 4}, cl), data_error);
    CHECK_THROWS_AS(logistic_regression({0, 0, 0, 0}, {1, 2, 3, 4}, cl), data_error);
}

TEST_CASE("a two-category multinomial fit reduces to binary logistic") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> xs(-2.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> y, x;
    std::vector<std::string> labels, cl;
    for (int i = 0; i < 150; ++i) {
        double xi = xs(rng);
        double p = 1.0 / (1.0 + std::exp(-(0.2 - 0.9 * xi)));
        bool hit = u(rng) < p;
        x.push_back(xi);
        y.push_back(hit ? 1.0 : 0.0);
        labels.push_back(hit ? "hit" : "miss");
        cl.push_back("c" + std::to_string(i));
    }
    auto binary = logistic_regression(y, x, cl);
    auto multi = multinomial_logistic(labels, x, "miss");
    REQUIRE(multi.by_category.count("hit"));
    const auto& m = multi.by_category.at("hit");
    CHECK(m.coefficients.at("(intercept)").b ==
          doctest::Approx(binary.coefficients.at("(intercept)").b).epsilon(1e-8));
    CHECK(m.coefficients.at("slope").b ==
          doctest::Approx(binary.coefficients.at("slope").b).epsilon(1e-8));
    CHECK(m.clusters == 0);
}

TEST_CASE("the multinomial estimate zeroes the likelihood gradient") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> xs(-1.5, 1.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> names = {"base", "mid", "high"};
    std::vector<std::string> labels;
    std::vector<int> cat;
    std::vector<double> x;
    for (int i = 0; i < 240; ++i) {
        double xi = xs(rng);
        double e1 = std::exp(0.4 + 0.6 * xi);
        double e2 = std::exp(-0.2 + 1.1 * xi);
        double z = 1.0 + e1 + e2;
        double r = u(rng);
        int c = r < 1.0 / z ? 0 : (r < (1.0 + e1) / z ? 1 : 2);
        labels.push_back(names[static_cast<std::size_t>(c)]);
        cat.push_back(c);
        x.push_back(xi);
    }
    auto fit = multinomial_logistic(labels, x, "base");
    REQUIRE(fit.by_category.size() == 2);
    std::vector<std::pair<double, double>> beta = {
        {fit.by_category.at("high").coefficients.at("(intercept)").b,
         fit.by_category.at("high").coefficients.at("slope").b},
        {fit.by_category.at("mid").coefficients.at("(intercept)").b,
         fit.by_category.at("mid").coefficients.at("slope").b}};
    // oracle indexes categories sorted by name past the reference: high=1, mid=2
    std::vector<int> recoded;
    for (int c : cat) recoded.push_back(c == 0 ? 0 : (c == 2 ? 1 : 2));
    auto score = oracle::multinomial_score(recoded, x, 3, beta);
    for (double s : score) CHECK(std::abs(s) < 1e-5);
}

TEST_CASE("the multinomial fit reports dropped categories and bad references") {
    std::vector<std::string> labels = {"a", "b", "a", "b", "a", "b"};
    std::vector<double> x = {-1, 1, -2, 2, -0.5, 0.7};
    auto fit = multinomial_logistic(labels, x, "a", {"a", "b", "c"});
    REQUIRE(fit.warnings.size() == 1);
    CHECK(fit.warnings[0].find("c") != std::string::npos);
    CHECK_THROWS_AS(multinomial_logistic(labels, x, "zzz"), config_error);
    CHECK_THROWS_AS(multinomial_logistic({"a", "a"}, {1, 2}, "a"), data_error);
    CHECK_THROWS_AS(multinomial_logistic({}, {}, "a"), data_error);
}

TEST_CASE("separated multinomial categories hit the coefficient cap") {
    std::vector<std::string> labels;
    std::vector<double> x;
    for (int i = 0; i < 30; ++i) {
        double xi = (i - 14.5) / 5.0;
        x.push_back(xi);
        labels.push_back(xi > 0 ? "hi" : "lo");
    }
    auto fit = multinomial_logistic(labels, x, "lo");
    CHECK(fit.by_category.at("hi").separation_flag);
    CHECK(std::abs(fit.by_category.at("hi").coefficients.at("slope").b) == doctest::Approx(20.0));
}

TEST_CASE("quadratic kappa matches the confusion-matrix oracle") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> score(1, 7);
    for (int t = 0; t < 10; ++t) {
        std::vector<int> a, b;
        for (int i = 0; i < 50; ++i) {
            int v = score(rng);
            a.push_back(v);
            b.push_back(std::min(7, std::max(1, v + (i % 3) - 1)));
        }
        int lo = 7, hi = 1;
        for (int v : a) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (int v : b) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(kappa_quadratic(a, b) ==
              doctest::Approx(oracle::kappa_quadratic_confusion(a, b, lo, hi)).epsilon(1e-12));
    }
    CHECK(kappa_quadratic({1, 2, 3, 1}, {1, 2, 3, 1}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(kappa_quadratic({2, 2, 2}, {2, 2, 2}), data_error);
    CHECK_THROWS_AS(kappa_quadratic({1, 2}, {1}), data_error);
    CHECK_THROWS_AS(kappa_quadratic({1}, {1}), data_error);
}

TEST_CASE("two-rater reliability follows the two-way random-effects form") {
    CHECK(icc_two_way({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    // constant offset: MSR=2, MSE=0, MSC=6 for n=3 gives 2 / (2 + 4) = 1/3
    CHECK(icc_two_way({1, 2, 3}, {3, 4, 5}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(icc_two_way({2, 2}, {2, 2}), data_error);
    CHECK_THROWS_AS(icc_two_way({1}, {1}), data_error);
    CHECK_THROWS_AS(icc_two_way({1, 2}, {1}), data_error);
}

TEST_CASE("agreement statistics dispatch by name") {
    CHECK(agreement_stats({1, 2, 3}, {1, 2, 3}, "kappa_quadratic") == doctest::Approx(1.0));
    CHECK(agreement_stats({1, 2, 3}, {1, 2, 3}, "icc") == doctest::Approx(1.0));
    CHECK_THROWS_AS(agreement_stats({1, 2}, {1, 2}, "cronbach"), config_error);
}

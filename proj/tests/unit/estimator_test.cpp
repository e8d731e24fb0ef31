#include <doctest.h>

#include <cmath>

#include "theia/error.hpp"
#include "theia/estimator.hpp"
#include "theia/random.hpp"

using namespace theia;

TEST_CASE("conditional selectivity") {
    CHECK(conditional_selectivity({1, 2, 3}, {2, 3, 4, 5}) == doctest::Approx(0.5));
    CHECK(conditional_selectivity({1, 2}, {1, 2}) == 1.0);
    CHECK(conditional_selectivity({1, 2}, {3, 4}) == 0.0);
    CHECK(conditional_selectivity({1, 2, 3, 4}, {2, 3}) == 1.0);
    CHECK_THROWS_AS(conditional_selectivity({1}, {}), UndefinedInputError);
}

TEST_CASE("record evaluation") {
    PredicateStats s = record_evaluation({}, {true, 1.0, 30.0});
    CHECK(s.samples == 1);
    CHECK(s.accepts == 1);
    CHECK(s.cost_ema == 30.0);
    s = record_evaluation(s, {false, 0.0, 40.0});
    CHECK(s.cost_ema == doctest::Approx(32.0));
    CHECK(s.samples == 2);
    CHECK(s.accepts == 1);

    PredicateStats t;
    for (int i = 0; i < 100; ++i) t = record_evaluation(t, {i < 30, 0.0, 1.0});
    CHECK(*selectivity_estimate(t) == doctest::Approx(0.30));
}

TEST_CASE("selectivity estimate and sample floor") {
    PredicateStats s;
    CHECK_FALSE(selectivity_estimate(s).has_value());
    CHECK_FALSE(has_enough_samples(s));
    s.samples = 9;
    CHECK_FALSE(has_enough_samples(s));
    s.samples = 10;
    CHECK(has_enough_samples(s));
    CHECK(*selectivity_estimate(s) == 0.0);
    s.accepts = 10;
    CHECK(*selectivity_estimate(s) == 1.0);
}

TEST_CASE("new epoch drops conditioned counts") {
    PredicateStats s{12, 5, 3.0, 12, 0};
    s.new_epoch();
    CHECK(s.samples == 0);
    CHECK(s.accepts == 0);
    CHECK(s.cost_ema == 3.0);
    CHECK(s.position_epoch == 1);
    CHECK_FALSE(selectivity_estimate(s).has_value());
}

TEST_CASE("bernoulli stream estimate") {
    Rng rng(42);
    PredicateStats s;
    for (int i = 0; i < 1000; ++i) s = record_evaluation(s, {uniform_real(rng) < 0.3, 0.0, 1.0});
    const double e = *selectivity_estimate(s);
    CHECK(e >= 0.25);
    CHECK(e <= 0.35);
}

TEST_CASE("conditional rank") {
    CHECK(conditional_rank(3.0, 0.0) == 3.0);
    CHECK(conditional_rank(2.0, 0.5) == 4.0);
    CHECK(conditional_rank(1.0, 0.9) == doctest::Approx(10.0));
    CHECK(std::isinf(conditional_rank(1.0, 1.0)));
}

#include <doctest.h>

#include <cmath>

#include "theia/error.hpp"
#include "theia/predicates.hpp"
#include "theia/random.hpp"

using namespace theia;

namespace {

Photo half_blue() {
    Photo p = Photo::uniform("half", 8, 8, {0, 0, 0});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) p.set(x, y, {0, 0, 255});
    return p;
}

double brute_intersection(const RgbHistogram& a, const RgbHistogram& b) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = 0; i < kHistogramBins; ++i) s += std::min(a.bins[c][i], b.bins[c][i]);
        total += s;
    }
    return total / 3.0;
}

}  // namespace

TEST_CASE("rgb threshold") {
    const auto blue = eval_rgb_threshold(Photo::uniform("b", 4, 4, {0, 0, 255}), Channel::Blue, 128);
    CHECK(blue.accepted);
    CHECK(blue.score == doctest::Approx(1.0));
    const auto red = eval_rgb_threshold(Photo::uniform("r", 4, 4, {255, 0, 0}), Channel::Blue, 128);
    CHECK_FALSE(red.accepted);
    CHECK(red.score == doctest::Approx(0.0));
    const auto half = eval_rgb_threshold(half_blue(), Channel::Blue, 128);
    CHECK_FALSE(half.accepted);
    CHECK(half.score == doctest::Approx(0.5));
}

TEST_CASE("rgb histogram match") {
    const Photo blue = Photo::uniform("b", 4, 4, {0, 0, 255});
    const Photo red = Photo::uniform("r", 4, 4, {255, 0, 0});
    const auto self = eval_rgb_histogram_match(blue, histogram_of(blue), 1.0);
    CHECK(self.score == doctest::Approx(1.0));
    CHECK(self.accepted);
    // Only the green channel (all zero in both) overlaps.
    const auto cross = eval_rgb_histogram_match(blue, histogram_of(red), 0.5);
    CHECK(cross.score == doctest::Approx(1.0 / 3.0));
    CHECK(cross.score == doctest::Approx(brute_intersection(histogram_of(blue), histogram_of(red))));

    RgbHistogram flat;
    for (auto& ch : flat.bins) ch.fill(1.0 / kHistogramBins);
    const Photo mixed = half_blue();
    CHECK(eval_rgb_histogram_match(mixed, flat, 0.0).score ==
          doctest::Approx(brute_intersection(histogram_of(mixed), flat)));

    RgbHistogram bad = flat;
    bad.bins[0][0] = 0.5;
    CHECK_THROWS_AS(eval_rgb_histogram_match(mixed, bad, 0.5), ParameterError);
}

TEST_CASE("texture match") {
    const Photo gray = Photo::uniform("g", 16, 16, {100, 100, 100});
    const auto blocks = texture_blocks(gray);
    REQUIRE(blocks.size() == 16);
    CHECK(eval_texture_match(gray, blocks[0], 0.99).score == doctest::Approx(1.0));

    const TexturePatch patch{100.0, 50.0, 10.0};
    const double d = std::sqrt(std::pow(50.0 / kTextureStddevScale, 2) + std::pow(10.0 / kTextureGradientScale, 2));
    CHECK(eval_texture_match(gray, patch, 0.0).score == doctest::Approx(std::exp(-d)));
    CHECK(eval_texture_match(gray, patch, 0.0).accepted);
}

TEST_CASE("all accept") {
    CHECK(eval_all_accept(Photo::uniform("a", 1, 1, {})).accepted);
    CHECK(eval_all_accept(Photo::uniform("a", 1, 1, {})).score == 1.0);
    CHECK(eval_all_accept(Photo::uniform("a", 1, 1, {})).cpu_time_ms == kMinimalTickMs);
}

TEST_CASE("synthetic predicate") {
    std::size_t accepted = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        const Photo p = Photo::uniform("id" + std::to_string(i), 1, 1, {});
        CHECK(eval_synthetic(p, 1.0, 2.0, 7).accepted);
        CHECK_FALSE(eval_synthetic(p, 0.0, 2.0, 7).accepted);
        const auto v = eval_synthetic(p, 0.3, 2.0, 7);
        CHECK(v.cpu_time_ms == 2.0);
        CHECK((v.accepted ? v.score >= 0.5 : v.score <= 0.5));
        accepted += v.accepted;
    }
    CHECK(std::abs(static_cast<double>(accepted) / n - 0.3) <= 0.02);
}

TEST_CASE("synthetic predicates with different salts are independent") {
    std::size_t a = 0, b = 0, both = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        const Photo p = Photo::uniform("id" + std::to_string(i), 1, 1, {});
        const bool x = eval_synthetic(p, 0.4, 1.0, 1).accepted;
        const bool y = eval_synthetic(p, 0.5, 1.0, 2).accepted;
        a += x;
        b += y;
        both += x && y;
    }
    const double s1 = static_cast<double>(a) / n;
    const double cond = static_cast<double>(both) / static_cast<double>(b);
    CHECK(std::abs(cond - s1) <= 0.03);
}

TEST_CASE("registry evaluates specs and rejects bad parameters") {
    const auto& r = PredicateRegistry::builtin();
    PredicateSpec spec{"RGB Threshold", {"B"}, 128.0, {}, {}, {}};
    CHECK(r.evaluate(spec, Photo::uniform("b", 2, 2, {0, 0, 255})).accepted);
    spec.parameters = {"Q"};
    CHECK_THROWS_AS(r.evaluate(spec, Photo::uniform("b", 2, 2, {0, 0, 255})), ParameterError);
    CHECK_THROWS_AS(r.evaluate(PredicateSpec{"Nope", {}, 0.0, {}, {}, {}}, Photo::uniform("b", 1, 1, {})),
                    NotFoundError);
}

TEST_CASE("predicates are deterministic") {
    const Photo p = half_blue();
    const auto& r = PredicateRegistry::builtin();
    for (const auto& name : r.names()) {
        if (name == "RGB Histogram") continue;
        PredicateSpec s{name, {}, 0.0, {}, {}, {}};
        if (name == "RGB Threshold") s.parameters = {"B"};
        if (name == "Texture") s.parameters = {"100", "10", "2"};
        if (name == "Synthetic") s.parameters = {"0.5", "1", "3"};
        CHECK(r.evaluate(s, p) == r.evaluate(s, p));
    }
}

#include <doctest.h>

#include "theia/error.hpp"
#include "theia/gate.hpp"

using namespace theia;

TEST_CASE("config parsing") {
    const Config c = Config::parse("# comment\na=1\n b = two \n\nc=2.5\n");
    CHECK(c.get("a") == std::optional<std::string>("1"));
    CHECK(c.get("b") == std::optional<std::string>("two"));
    CHECK(c.get_double("c", 0.0) == 2.5);
    CHECK(c.get_long("missing", 7) == 7);
    CHECK_FALSE(c.contains("missing"));
    CHECK(Config::parse(c.str()).values() == c.values());
}

TEST_CASE("shipped defaults") {
    const Config c = Config::load(THEIA_CONFIG);
    const ServerOptions s = ServerOptions::from_config(c);
    CHECK(s.costs == CostModel{1, 1, 10});
    CHECK(s.flat_fraction == kDefaultFlatFraction);
    const CorpusParams p = CorpusParams::from_config(c);
    CHECK(p.devices == 85);
    CHECK(p.total_photos == std::optional<std::size_t>(3055));
    CHECK(p.locality == 0.8);
    const EnergySettings e = EnergySettings::from_config(c);
    CHECK(e.wifi == wifi_profile());
    CHECK(e.g3 == g3_profile());
}

TEST_CASE("stable hashing") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = uniform_real(rng);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(uniform_index(rng, 7) < 7);
    }
}

TEST_CASE("ppm round trip") {
    Photo p = Photo::uniform("x", 3, 2, {1, 2, 3}, PhotoMeta{123, 1.5, -2.5, 4096});
    p.set(1, 1, {200, 100, 50});
    const Photo back = decode_ppm("x", encode_ppm(p), decode_meta(encode_meta(p.meta())));
    CHECK(back == p);
    CHECK(back.transfer_bytes() == 4096);
    CHECK_THROWS_AS(decode_ppm("y", "P3 garbage"), Error);
}

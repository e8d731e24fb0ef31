#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "theia/energy.hpp"
#include "theia/error.hpp"

using namespace theia;

TEST_CASE("offload energy over wifi") {
    const EnergyModel m;
    const OffloadCost c = offload_energy_per_photo(wifi_profile(), m, 500000);
    CHECK(c.tx_time_ms == doctest::Approx(316.0));
    CHECK(c.energy_mj == doctest::Approx(84.056));
    CHECK(c.compute_ms_equivalent == doctest::Approx(c.energy_mj / (m.alpha_mw / 1000.0)));
    CHECK(offload_energy_per_photo(wifi_profile(), m, 1000000).energy_mj > c.energy_mj);

    NetworkProfile ideal{"ideal", 0.0, 1e18, 266.0};
    CHECK(offload_energy_per_photo(ideal, m, 500000).energy_mj == doctest::Approx(0.0));
}

TEST_CASE("profiles and delay") {
    CHECK(g3_profile().tx_power_mw == 571.0);
    CHECK(g3_profile().rtt_ms == 95.0);
    CHECK(with_extra_rtt(wifi_profile(), 1000.0).rtt_ms == 1066.0);
    CHECK(with_extra_rtt(wifi_profile(), 0.0) == wifi_profile());
}

TEST_CASE("fit recovers a noiseless model") {
    const EnergyModel truth{900.0, 266.0, 0.0};
    std::vector<EnergySample> samples;
    for (int i = 0; i < 10; ++i) {
        const double c = 10.0 * (i % 4 + 1), t = 7.0 * (i % 3), e = c + t + 5.0 * (i % 5);
        samples.push_back({c, t, e, measure_energy_mj(truth, c, t, e)});
    }
    const EnergyModel fit = fit_energy_model(samples);
    CHECK(fit.alpha_mw == doctest::Approx(900.0).epsilon(1e-6));
    CHECK(fit.beta_mw == doctest::Approx(266.0).epsilon(1e-6));
    CHECK(std::abs(fit.idle_mw) < 1e-6);
}

TEST_CASE("fit errors") {
    std::vector<EnergySample> two = {{1, 0, 1, 1}, {0, 1, 1, 1}};
    CHECK_THROWS_AS(fit_energy_model(two), FitError);
    std::vector<EnergySample> no_tx = {{1, 0, 1, 1}, {2, 0, 3, 2}, {3, 0, 4, 3}};
    try {
        fit_energy_model(no_tx);
        FAIL("expected FitError");
    } catch (const FitError& e) {
        CHECK(std::string(e.what()).find("transmit") != std::string::npos);
    }
}

TEST_CASE("energy settings from config") {
    Config c = Config::parse("energy.alpha_mw=900\nwifi.rtt_ms=10\ng3.tx_power_mw=600\n");
    const EnergySettings s = EnergySettings::from_config(c);
    CHECK(s.model.alpha_mw == 900.0);
    CHECK(s.wifi.rtt_ms == 10.0);
    CHECK(s.g3.tx_power_mw == 600.0);
    CHECK(&s.profile("g3") == &s.g3);
    CHECK_THROWS_AS(s.profile("lte"), NotFoundError);
}

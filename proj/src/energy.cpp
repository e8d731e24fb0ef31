#include "theia/energy.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "theia/error.hpp"

namespace theia {

NetworkProfile wifi_profile() { return {"wifi", 66.0, 2.0e6, 266.0}; }

NetworkProfile g3_profile() { return {"g3", 95.0, 3.0e5, 571.0}; }

NetworkProfile with_extra_rtt(NetworkProfile profile, double extra_rtt_ms) {
    profile.rtt_ms += extra_rtt_ms;
    return profile;
}

EnergyModel fit_energy_model(std::span<const EnergySample> samples) {
    if (samples.size() < 3)
        throw FitError("energy model fit needs at least 3 samples, got " + std::to_string(samples.size()));
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd measured(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        design(i, 0) = s.compute_ms / 1000.0;
        design(i, 1) = s.tx_ms / 1000.0;
        design(i, 2) = s.elapsed_ms / 1000.0;
        measured(i) = s.measured_mj;
    }

    static const char* const kDimension[3] = {"compute", "transmit", "idle (elapsed time)"};
    // Scale columns so the rank test does not depend on their units.
    Eigen::Vector3d scale = design.colwise().norm().transpose();
    for (int c = 0; c < 3; ++c)
        if (scale(c) == 0.0) throw FitError(std::string("energy model fit: degenerate ") + kDimension[c] + " dimension");
    const Eigen::MatrixXd scaled = design * scale.cwiseInverse().asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-9);
    if (qr.rank() < 3) {
        const auto& perm = qr.colsPermutation().indices();
        std::string which = kDimension[perm(2)];
        throw FitError("energy model fit: degenerate " + which + " dimension (collinear samples)");
    }
    const Eigen::Vector3d coef = qr.solve(measured).cwiseQuotient(scale);
    return {coef(0), coef(1), coef(2)};
}

double measure_energy_mj(const EnergyModel& hardware, double compute_ms, double tx_ms, double elapsed_ms) {
    return hardware.compute_mj(compute_ms) + hardware.transmit_mj(tx_ms) + hardware.idle_mj(elapsed_ms);
}

OffloadCost offload_energy_per_photo(const NetworkProfile& profile, const EnergyModel& model,
                                     std::uint64_t photo_bytes) {
    OffloadCost c;
    c.tx_time_ms = profile.tx_time_ms(photo_bytes);
    c.energy_mj = profile.tx_power_mw * c.tx_time_ms / 1000.0;
    c.compute_ms_equivalent = model.alpha_mw > 0 ? c.energy_mj / (model.alpha_mw / 1000.0)
                                                 : std::numeric_limits<double>::infinity();
    return c;
}

namespace {

NetworkProfile profile_from(const Config& cfg, NetworkProfile p) {
    const std::string k = p.name;
    p.rtt_ms = cfg.get_double(k + ".rtt_ms", p.rtt_ms);
    p.tx_power_mw = cfg.get_double(k + ".tx_power_mw", p.tx_power_mw);
    p.bandwidth_bytes_per_s = cfg.get_double(k + ".bandwidth_bytes_per_s", p.bandwidth_bytes_per_s);
    if (p.rtt_ms < 0 || p.bandwidth_bytes_per_s <= 0 || p.tx_power_mw < 0)
        throw ParameterError("profile " + k + ": rtt and power must be >= 0, bandwidth > 0");
    return p;
}

}  // namespace

EnergySettings EnergySettings::from_config(const Config& config) {
    EnergySettings s;
    s.model.alpha_mw = config.get_double("energy.alpha_mw", s.model.alpha_mw);
    s.model.beta_mw = config.get_double("energy.beta_mw", s.model.beta_mw);
    s.model.idle_mw = config.get_double("energy.idle_mw", s.model.idle_mw);
    if (s.model.alpha_mw < 0 || s.model.beta_mw < 0 || s.model.idle_mw < 0)
        throw ParameterError("energy model coefficients must be >= 0");
    s.wifi = profile_from(config, s.wifi);
    s.g3 = profile_from(config, s.g3);
    return s;
}

const NetworkProfile& EnergySettings::profile(const std::string& name) const {
    if (name == "wifi") return wifi;
    if (name == "g3" || name == "3g") return g3;
    throw NotFoundError("unknown network profile: " + name);
}

}  // namespace theia

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "theia/config.hpp"

namespace theia {

/// Linear power model. Energy in millijoules = power (mW) x time (s).
///
/// Compute time is simulated: one simulated millisecond of predicate work
/// stands for roughly 100 ms on a handset, so the default alpha of 100 W makes a
/// 30 ms face detection cost about 3 J, in line with handset measurements.
struct EnergyModel {
    double alpha_mw = 100000.0;  // during predicate compute
    double beta_mw = 266.0;      // during wireless transmit
    double idle_mw = 50.0;       // baseline, over all elapsed time

    double compute_mj(double ms) const noexcept { return alpha_mw * ms / 1000.0; }
    double transmit_mj(double ms) const noexcept { return beta_mw * ms / 1000.0; }
    double idle_mj(double ms) const noexcept { return idle_mw * ms / 1000.0; }

    bool operator==(const EnergyModel&) const = default;
};

struct NetworkProfile {
    std::string name;
    double rtt_ms = 0.0;
    double bandwidth_bytes_per_s = 1.0;
    double tx_power_mw = 0.0;

    /// rtt + transfer time of `bytes`.
    double tx_time_ms(std::uint64_t bytes) const noexcept {
        return rtt_ms + 1000.0 * static_cast<double>(bytes) / bandwidth_bytes_per_s;
    }

    bool operator==(const NetworkProfile&) const = default;
};

/// WiFi: 266 mW transmit power, 66 ms median RTT, 2 MB/s.
NetworkProfile wifi_profile();
/// 3G: 571 mW transmit power, 95 ms median RTT, 300 KB/s.
NetworkProfile g3_profile();

/// Same link with `extra_rtt_ms` of injected delay.
NetworkProfile with_extra_rtt(NetworkProfile profile, double extra_rtt_ms);

/// Per-device accumulated energy. Every component only grows.
struct EnergyLedger {
    double compute_mj = 0.0;
    double transmit_mj = 0.0;
    double idle_mj = 0.0;

    double total_mj() const noexcept { return compute_mj + transmit_mj + idle_mj; }

    EnergyLedger operator-(const EnergyLedger& earlier) const noexcept {
        return {compute_mj - earlier.compute_mj, transmit_mj - earlier.transmit_mj, idle_mj - earlier.idle_mj};
    }
    EnergyLedger& operator+=(const EnergyLedger& o) noexcept {
        compute_mj += o.compute_mj;
        transmit_mj += o.transmit_mj;
        idle_mj += o.idle_mj;
        return *this;
    }
};

/// One energy-profiler observation.
struct EnergySample {
    double compute_ms = 0.0;
    double tx_ms = 0.0;
    double elapsed_ms = 0.0;
    double measured_mj = 0.0;
};

/// Least squares fit of measured = alpha*compute + beta*tx + idle*elapsed
/// (times in seconds). Throws FitError with fewer than three samples or when a
/// dimension cannot be separated from the others.
EnergyModel fit_energy_model(std::span<const EnergySample> samples);

/// What the hardware would report for a window; used to simulate the profiler.
double measure_energy_mj(const EnergyModel& hardware, double compute_ms, double tx_ms, double elapsed_ms);

struct OffloadCost {
    double tx_time_ms = 0.0;
    double energy_mj = 0.0;
    double compute_ms_equivalent = 0.0;  // energy expressed as local compute time
};

/// Energy of transmitting one photo over `profile` at the profile's transmit
/// power, and the same energy in compute-ms at the model's alpha.
OffloadCost offload_energy_per_photo(const NetworkProfile& profile, const EnergyModel& model,
                                     std::uint64_t photo_bytes);

/// Energy model and link profiles, overridable from a config file:
/// `energy.alpha_mw`, `energy.beta_mw`, `energy.idle_mw`, and for each of `wifi`
/// and `g3`: `.rtt_ms`, `.tx_power_mw`, `.bandwidth_bytes_per_s`.
struct EnergySettings {
    EnergyModel model;
    NetworkProfile wifi = wifi_profile();
    NetworkProfile g3 = g3_profile();

    static EnergySettings from_config(const Config& config);
    /// Profile by name ("wifi" or "g3"); throws NotFoundError otherwise.
    const NetworkProfile& profile(const std::string& name) const;
};

}  // namespace theia

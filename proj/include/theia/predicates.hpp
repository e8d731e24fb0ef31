#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "theia/photo.hpp"
#include "theia/query.hpp"

namespace theia {

/// Outcome of one predicate on one photo.
struct PredicateVerdict {
    bool accepted = false;
    double score = 0.0;        // [0, 1], monotone in the predicate's raw score
    double cpu_time_ms = 0.0;  // simulated compute time

    bool operator==(const PredicateVerdict&) const = default;
};

/// Compute cost charged for a predicate that does no work.
inline constexpr double kMinimalTickMs = 0.01;

// Nominal compute costs, simulated milliseconds per megapixel.
inline constexpr double kRgbThresholdMsPerMp = 20.0;
inline constexpr double kRgbHistogramMsPerMp = 40.0;
inline constexpr double kTextureMsPerMp = 150.0;

// Synthetic stand-ins for the Haar-cascade detectors.
inline constexpr double kFaceSelectivity = 0.25;
inline constexpr double kFaceCostMs = 30.0;
inline constexpr double kBodySelectivity = 0.30;
inline constexpr double kBodyCostMs = 45.0;

enum class Channel { Red = 0, Green = 1, Blue = 2 };

std::optional<Channel> parse_channel(std::string_view s);

inline constexpr int kHistogramBins = 16;

/// Per-channel normalized 16-bin histogram.
struct RgbHistogram {
    std::array<std::array<double, kHistogramBins>, 3> bins{};
};

RgbHistogram histogram_of(const Photo& photo);

/// Reference grayscale statistics for texture matching.
struct TexturePatch {
    double mean = 0.0;
    double stddev = 0.0;
    double gradient = 0.0;
};

inline constexpr int kTextureGrid = 4;
inline constexpr double kTextureMeanScale = 255.0;
inline constexpr double kTextureStddevScale = 64.0;
inline constexpr double kTextureGradientScale = 32.0;

/// Statistics of each non-empty cell of the 4x4 block grid, row-major.
std::vector<TexturePatch> texture_blocks(const Photo& photo);

/// exp(-normalized L2 distance) between two descriptors.
double texture_similarity(const TexturePatch& block, const TexturePatch& patch);

PredicateVerdict eval_rgb_threshold(const Photo& photo, Channel channel, int cutoff);
PredicateVerdict eval_rgb_histogram_match(const Photo& photo, const RgbHistogram& reference, double threshold);
PredicateVerdict eval_texture_match(const Photo& photo, const TexturePatch& patch, double threshold);
PredicateVerdict eval_all_accept(const Photo& photo);
PredicateVerdict eval_synthetic(const Photo& photo, double target_selectivity, double cost_ms, std::uint64_t salt);

/// Registry entry. Parameters and threshold arrive through PredicateSpec.
struct PredicateInfo {
    std::string name;
    std::size_t min_parameters = 0;
    std::size_t max_parameters = 0;
    double score_min = 0.0;  // declared range of the threshold
    double score_max = 1.0;
    double nominal_ms_per_megapixel = 0.0;  // 0 for fixed-cost predicates
    std::function<PredicateVerdict(const Photo&, const PredicateSpec&)> evaluate;
    std::function<std::optional<std::string>(const PredicateSpec&)> check_parameters;
};

class PredicateRegistry {
public:
    PredicateRegistry() = default;

    /// A registry holding every built-in predicate.
    static PredicateRegistry with_builtins();
    /// Shared immutable instance of with_builtins().
    static const PredicateRegistry& builtin();

    void add(PredicateInfo info);

    const PredicateInfo* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    const PredicateInfo& at(std::string_view name) const;

    /// Evaluates one leaf. Throws NotFoundError / ParameterError.
    PredicateVerdict evaluate(const PredicateSpec& spec, const Photo& photo) const;

    std::vector<std::string> names() const;

private:
    std::map<std::string, PredicateInfo, std::less<>> entries_;
};

// Built-in names.
inline constexpr std::string_view kAllAccept = "All_Accept";
inline constexpr std::string_view kFaceFront = "Face (front)";
inline constexpr std::string_view kBodyFull = "Body (full)";
inline constexpr std::string_view kTexture = "Texture";
inline constexpr std::string_view kRgbThreshold = "RGB Threshold";
inline constexpr std::string_view kRgbHistogram = "RGB Histogram";
inline constexpr std::string_view kSynthetic = "Synthetic";

struct LeafOutcome {
    std::size_t leaf = 0;  // document-order leaf index
    PredicateVerdict verdict;
};

struct QueryVerdict {
    bool accepted = false;
    double score = 0.0;  // AND: min over evaluated leaves, OR: max
    std::vector<LeafOutcome> evaluated;
    double cpu_time_ms = 0.0;
};

/// Left-to-right short-circuit evaluation of a query tree.
QueryVerdict evaluate_query(const QueryNode& root, const Photo& photo, const PredicateRegistry& registry);

}  // namespace theia

#include "theia/predicates.hpp"

#include <algorithm>
#include <cmath>

#include "theia/error.hpp"
#include "theia/random.hpp"

namespace theia {

std::optional<Channel> parse_channel(std::string_view s) {
    if (s == "R" || s == "r") return Channel::Red;
    if (s == "G" || s == "g") return Channel::Green;
    if (s == "B" || s == "b") return Channel::Blue;
    return std::nullopt;
}

namespace {

double scaled_cost(const Photo& photo, double ms_per_mp) { return ms_per_mp * photo.megapixels(); }

}  // namespace

PredicateVerdict eval_rgb_threshold(const Photo& photo, Channel channel, int cutoff) {
    std::uint64_t sum = 0;
    const auto& px = photo.pixels();
    for (std::size_t i = static_cast<std::size_t>(channel); i < px.size(); i += 3) sum += px[i];
    const double mean = static_cast<double>(sum) / static_cast<double>(photo.pixel_count());
    return {mean >= cutoff, mean / 255.0, scaled_cost(photo, kRgbThresholdMsPerMp)};
}

RgbHistogram histogram_of(const Photo& photo) {
    std::array<std::array<std::uint64_t, kHistogramBins>, 3> counts{};
    const auto& px = photo.pixels();
    for (std::size_t i = 0; i < px.size(); i += 3)
        for (int c = 0; c < 3; ++c) ++counts[c][px[i + c] / (256 / kHistogramBins)];
    RgbHistogram h;
    const double n = static_cast<double>(photo.pixel_count());
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < kHistogramBins; ++b) h.bins[c][b] = static_cast<double>(counts[c][b]) / n;
    return h;
}

PredicateVerdict eval_rgb_histogram_match(const Photo& photo, const RgbHistogram& reference, double threshold) {
    for (int c = 0; c < 3; ++c) {
        double sum = 0;
        for (double v : reference.bins[c]) sum += v;
        if (std::abs(sum - 1.0) > 1e-6)
            throw ParameterError("histogram reference channel " + std::to_string(c) + " sums to " + std::to_string(sum));
    }
    const RgbHistogram h = histogram_of(photo);
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        double inter = 0;
        for (int b = 0; b < kHistogramBins; ++b) inter += std::min(h.bins[c][b], reference.bins[c][b]);
        total += inter;
    }
    const double score = std::clamp(total / 3.0, 0.0, 1.0);
    // Bin sums carry rounding; a self-match must still clear threshold 1.
    return {score + 1e-12 >= threshold, score, scaled_cost(photo, kRgbHistogramMsPerMp)};
}

std::vector<TexturePatch> texture_blocks(const Photo& photo) {
    const int w = photo.width(), h = photo.height();
    std::vector<int> gray(photo.pixel_count());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) gray[static_cast<std::size_t>(y) * w + x] = luma(photo.at(x, y));
    auto g = [&](int x, int y) { return gray[static_cast<std::size_t>(y) * w + x]; };

    std::vector<TexturePatch> blocks;
    blocks.reserve(kTextureGrid * kTextureGrid);
    for (int by = 0; by < kTextureGrid; ++by) {
        const int y0 = by * h / kTextureGrid, y1 = (by + 1) * h / kTextureGrid;
        for (int bx = 0; bx < kTextureGrid; ++bx) {
            const int x0 = bx * w / kTextureGrid, x1 = (bx + 1) * w / kTextureGrid;
            if (x1 <= x0 || y1 <= y0) continue;
            double sum = 0, sum_sq = 0, grad = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const double v = g(x, y);
                    sum += v;
                    sum_sq += v * v;
                    // Forward differences; zero at the right/bottom image edge.
                    const double gx = g(std::min(x + 1, w - 1), y) - v;
                    const double gy = g(x, std::min(y + 1, h - 1)) - v;
                    grad += std::sqrt(gx * gx + gy * gy);
                }
            }
            const double n = static_cast<double>(x1 - x0) * (y1 - y0);
            const double mean = sum / n;
            const double var = std::max(0.0, sum_sq / n - mean * mean);
            blocks.push_back({mean, std::sqrt(var), grad / n});
        }
    }
    return blocks;
}

double texture_similarity(const TexturePatch& block, const TexturePatch& patch) {
    const double dm = (block.mean - patch.mean) / kTextureMeanScale;
    const double ds = (block.stddev - patch.stddev) / kTextureStddevScale;
    const double dg = (block.gradient - patch.gradient) / kTextureGradientScale;
    return std::exp(-std::sqrt(dm * dm + ds * ds + dg * dg));
}

PredicateVerdict eval_texture_match(const Photo& photo, const TexturePatch& patch, double threshold) {
    double best = 0.0;
    for (const auto& b : texture_blocks(photo)) best = std::max(best, texture_similarity(b, patch));
    return {best >= threshold, best, scaled_cost(photo, kTextureMsPerMp)};
}

PredicateVerdict eval_all_accept(const Photo&) { return {true, 1.0, kMinimalTickMs}; }

PredicateVerdict eval_synthetic(const Photo& photo, double target_selectivity, double cost_ms, std::uint64_t salt) {
    const double u = unit_fraction(hash64(photo.id(), salt));
    const double s = target_selectivity;
    PredicateVerdict v;
    v.cpu_time_ms = cost_ms;
    v.accepted = u < s;
    // Accepted photos land in (0.5, 1], rejected ones in [0, 0.5]; smaller u scores higher.
    if (v.accepted)
        v.score = 0.5 + 0.5 * (s - u) / s;
    else
        v.score = s < 1.0 ? 0.5 * (1.0 - u) / (1.0 - s) : 0.0;
    return v;
}

namespace {

std::optional<std::string> check_numbers(const PredicateSpec& p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
        if (!p.number(i)) return "parameter p" + std::to_string(i) + " is not a number";
    return std::nullopt;
}

RgbHistogram histogram_parameter(const PredicateSpec& p) {
    RgbHistogram h;
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < kHistogramBins; ++b) {
            auto v = p.number(static_cast<std::size_t>(c * kHistogramBins + b));
            if (!v) throw ParameterError("RGB Histogram: parameters must be 48 numbers");
            h.bins[c][b] = *v;
        }
    return h;
}

TexturePatch texture_parameter(const PredicateSpec& p) {
    auto m = p.number(0), s = p.number(1), g = p.number(2);
    if (!m || !s || !g) throw ParameterError("Texture: parameters must be mean, stddev, gradient");
    if (*s < 0 || *g < 0) throw ParameterError("Texture: stddev and gradient must be >= 0");
    return {*m, *s, *g};
}

PredicateInfo synthetic_detector(std::string_view name, double selectivity, double cost_ms) {
    const std::uint64_t salt = fnv1a64(name);
    PredicateInfo info;
    info.name = std::string(name);
    info.min_parameters = 0;
    info.max_parameters = 64;  // cascade tuning parameters are accepted and ignored
    info.evaluate = [selectivity, cost_ms, salt](const Photo& photo, const PredicateSpec&) {
        return eval_synthetic(photo, selectivity, cost_ms, salt);
    };
    return info;
}

}  // namespace

PredicateRegistry PredicateRegistry::with_builtins() {
    PredicateRegistry r;

    PredicateInfo all;
    all.name = std::string(kAllAccept);
    all.min_parameters = all.max_parameters = 0;
    all.evaluate = [](const Photo& photo, const PredicateSpec&) { return eval_all_accept(photo); };
    r.add(std::move(all));

    r.add(synthetic_detector(kFaceFront, kFaceSelectivity, kFaceCostMs));
    r.add(synthetic_detector(kBodyFull, kBodySelectivity, kBodyCostMs));

    PredicateInfo rgb;
    rgb.name = std::string(kRgbThreshold);
    rgb.min_parameters = rgb.max_parameters = 1;
    rgb.score_min = 0;
    rgb.score_max = 255;
    rgb.nominal_ms_per_megapixel = kRgbThresholdMsPerMp;
    rgb.check_parameters = [](const PredicateSpec& p) -> std::optional<std::string> {
        if (!parse_channel(p.parameters.at(0))) return "channel must be R, G or B";
        return std::nullopt;
    };
    rgb.evaluate = [](const Photo& photo, const PredicateSpec& p) {
        auto ch = parse_channel(p.parameters.at(0));
        if (!ch) throw ParameterError("RGB Threshold: channel must be R, G or B");
        return eval_rgb_threshold(photo, *ch, static_cast<int>(std::ceil(p.threshold)));
    };
    r.add(std::move(rgb));

    PredicateInfo hist;
    hist.name = std::string(kRgbHistogram);
    hist.min_parameters = hist.max_parameters = 3 * kHistogramBins;
    hist.nominal_ms_per_megapixel = kRgbHistogramMsPerMp;
    hist.check_parameters = [](const PredicateSpec& p) -> std::optional<std::string> {
        if (auto bad = check_numbers(p, 3 * kHistogramBins)) return bad;
        const RgbHistogram h = histogram_parameter(p);
        for (int c = 0; c < 3; ++c) {
            double sum = 0;
            for (double v : h.bins[c]) {
                if (v < 0) return "histogram bins must be >= 0";
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6) return "histogram channel " + std::to_string(c) + " is not normalized";
        }
        return std::nullopt;
    };
    hist.evaluate = [](const Photo& photo, const PredicateSpec& p) {
        return eval_rgb_histogram_match(photo, histogram_parameter(p), p.threshold);
    };
    r.add(std::move(hist));

    PredicateInfo tex;
    tex.name = std::string(kTexture);
    tex.min_parameters = tex.max_parameters = 3;
    tex.nominal_ms_per_megapixel = kTextureMsPerMp;
    tex.check_parameters = [](const PredicateSpec& p) -> std::optional<std::string> {
        if (auto bad = check_numbers(p, 3)) return bad;
        if (*p.number(1) < 0 || *p.number(2) < 0) return "stddev and gradient must be >= 0";
        return std::nullopt;
    };
    tex.evaluate = [](const Photo& photo, const PredicateSpec& p) {
        return eval_texture_match(photo, texture_parameter(p), p.threshold);
    };
    r.add(std::move(tex));

    PredicateInfo syn;
    syn.name = std::string(kSynthetic);
    syn.min_parameters = syn.max_parameters = 3;
    syn.check_parameters = [](const PredicateSpec& p) -> std::optional<std::string> {
        if (auto bad = check_numbers(p, 3)) return bad;
        const double s = *p.number(0), c = *p.number(1), salt = *p.number(2);
        if (s < 0 || s > 1) return "selectivity must lie in [0, 1]";
        if (c < 0) return "cost must be >= 0";
        if (salt < 0 || salt != std::floor(salt)) return "salt must be a non-negative integer";
        return std::nullopt;
    };
    syn.evaluate = [](const Photo& photo, const PredicateSpec& p) {
        auto s = p.number(0), c = p.number(1), salt = p.number(2);
        if (!s || !c || !salt) throw ParameterError("Synthetic: parameters are selectivity, cost_ms, salt");
        return eval_synthetic(photo, *s, *c, static_cast<std::uint64_t>(*salt));
    };
    r.add(std::move(syn));

    return r;
}

const PredicateRegistry& PredicateRegistry::builtin() {
    static const PredicateRegistry instance = with_builtins();
    return instance;
}

void PredicateRegistry::add(PredicateInfo info) {
    if (!info.evaluate) throw ParameterError("predicate " + info.name + " has no evaluator");
    std::string key = info.name;
    if (!entries_.emplace(std::move(key), std::move(info)).second)
        throw ParameterError("duplicate predicate name: " + key);
}

const PredicateInfo* PredicateRegistry::find(std::string_view name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
}

const PredicateInfo& PredicateRegistry::at(std::string_view name) const {
    if (const auto* info = find(name)) return *info;
    throw NotFoundError("unknown predicate: " + std::string(name));
}

PredicateVerdict PredicateRegistry::evaluate(const PredicateSpec& spec, const Photo& photo) const {
    return at(spec.name).evaluate(photo, spec);
}

std::vector<std::string> PredicateRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

namespace {

struct TreeWalk {
    const Photo& photo;
    const PredicateRegistry& registry;
    QueryVerdict& out;
    std::size_t next_leaf = 0;

    // Returns (accepted, score). Leaves skipped by short-circuit still consume an index.
    std::pair<bool, double> eval(const QueryNode& n, bool skip) {
        if (n.is_leaf()) {
            const std::size_t idx = next_leaf++;
            if (skip) return {false, 0.0};
            PredicateVerdict v = registry.evaluate(n.predicate, photo);
            out.cpu_time_ms += v.cpu_time_ms;
            out.evaluated.push_back({idx, v});
            return {v.accepted, v.score};
        }
        const bool is_and = n.kind == QueryNode::Kind::And;
        bool decided = false;
        bool result = is_and;
        double score = is_and ? 1.0 : 0.0;
        bool any = false;
        for (const auto& c : n.children) {
            auto [acc, sc] = eval(c, skip || decided);
            if (skip || decided) continue;
            score = any ? (is_and ? std::min(score, sc) : std::max(score, sc)) : sc;
            any = true;
            if (is_and && !acc) {
                result = false;
                decided = true;
            } else if (!is_and && acc) {
                result = true;
                decided = true;
            }
        }
        return {result, score};
    }
};

}  // namespace

QueryVerdict evaluate_query(const QueryNode& root, const Photo& photo, const PredicateRegistry& registry) {
    QueryVerdict out;
    TreeWalk walk{photo, registry, out};
    auto [accepted, score] = walk.eval(root, false);
    out.accepted = accepted;
    out.score = score;
    return out;
}

}  // namespace theia

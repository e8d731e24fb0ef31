#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace theia {

struct PhotoMeta {
    std::int64_t timestamp = 0;  // seconds since epoch
    std::optional<double> latitude;
    std::optional<double> longitude;
    std::uint64_t bytes = 0;     // original file size; 0 = unknown

    bool operator==(const PhotoMeta&) const = default;
};

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
};

/// An 8-bit RGB raster with capture metadata.
class Photo {
public:
    Photo(std::string id, int width, int height, std::vector<std::uint8_t> pixels, PhotoMeta meta = {});

    static Photo uniform(std::string id, int width, int height, Rgb color, PhotoMeta meta = {});

    const std::string& id() const noexcept { return id_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }
    const PhotoMeta& meta() const noexcept { return meta_; }

    Rgb at(int x, int y) const noexcept {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width_ + x);
        return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
    }
    void set(int x, int y, Rgb c) noexcept {
        const std::size_t i = 3 * (static_cast<std::size_t>(y) * width_ + x);
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
    }

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    double megapixels() const noexcept { return static_cast<double>(pixel_count()) / 1e6; }

    /// Bytes moved when the photo is offloaded: the recorded file size, or the
    /// raster size when none was recorded.
    std::uint64_t transfer_bytes() const noexcept;

    bool operator==(const Photo&) const = default;

private:
    std::string id_;
    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
    PhotoMeta meta_;
};

using PhotoPtr = std::shared_ptr<const Photo>;

/// Integer luma, (299 R + 587 G + 114 B) / 1000.
inline int luma(Rgb c) noexcept { return (299 * c.r + 587 * c.g + 114 * c.b) / 1000; }

std::string encode_ppm(const Photo& photo);
Photo decode_ppm(std::string id, std::string_view bytes, PhotoMeta meta = {});

std::string encode_meta(const PhotoMeta& meta);
PhotoMeta decode_meta(std::string_view text);

void save_photo(const std::filesystem::path& dir, const Photo& photo);
Photo load_photo(const std::filesystem::path& dir, const std::string& id);

/// Photo store of one device, keyed by id.
using Corpus = std::map<std::string, PhotoPtr>;

/// Loads every `<id>.ppm` (+ optional `<id>.meta`) in `dir`.
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace theia

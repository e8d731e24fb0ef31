#include "theia/photo.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "theia/error.hpp"

namespace theia {

Photo::Photo(std::string id, int width, int height, std::vector<std::uint8_t> pixels, PhotoMeta meta)
    : id_(std::move(id)), width_(width), height_(height), pixels_(std::move(pixels)), meta_(meta) {
    if (width_ < 1 || height_ < 1) throw ParameterError("photo " + id_ + ": dimensions must be >= 1");
    if (pixels_.size() != 3 * pixel_count())
        throw ParameterError("photo " + id_ + ": pixel buffer length must be 3*width*height");
}

Photo Photo::uniform(std::string id, int width, int height, Rgb color, PhotoMeta meta) {
    std::vector<std::uint8_t> px(3 * static_cast<std::size_t>(width > 0 ? width : 0) * (height > 0 ? height : 0));
    for (std::size_t i = 0; i + 2 < px.size(); i += 3) {
        px[i] = color.r;
        px[i + 1] = color.g;
        px[i + 2] = color.b;
    }
    return Photo(std::move(id), width, height, std::move(px), meta);
}

std::uint64_t Photo::transfer_bytes() const noexcept {
    return meta_.bytes > 0 ? meta_.bytes : pixels_.size() + 15;
}

std::string encode_ppm(const Photo& photo) {
    std::string out = "P6\n" + std::to_string(photo.width()) + " " + std::to_string(photo.height()) + "\n255\n";
    out.append(reinterpret_cast<const char*>(photo.pixels().data()), photo.pixels().size());
    return out;
}

namespace {

// Reads the next whitespace/comment-separated header token.
std::string_view next_token(std::string_view bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const char c = bytes[pos];
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
}

int parse_int(std::string_view s, const std::string& what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ParameterError("bad PPM " + what + ": '" + std::string(s) + "'");
    return v;
}

}  // namespace

Photo decode_ppm(std::string id, std::string_view bytes, PhotoMeta meta) {
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P6") throw ParameterError("photo " + id + ": not a binary PPM (P6)");
    const int w = parse_int(next_token(bytes, pos), "width");
    const int h = parse_int(next_token(bytes, pos), "height");
    const int maxval = parse_int(next_token(bytes, pos), "maxval");
    if (maxval != 255) throw ParameterError("photo " + id + ": only maxval 255 is supported");
    if (w < 1 || h < 1) throw ParameterError("photo " + id + ": dimensions must be >= 1");
    ++pos;  // single whitespace before raster
    const std::size_t need = 3 * static_cast<std::size_t>(w) * h;
    if (bytes.size() < pos || bytes.size() - pos < need) throw ParameterError("photo " + id + ": truncated raster");
    std::vector<std::uint8_t> px(bytes.begin() + pos, bytes.begin() + pos + need);
    return Photo(std::move(id), w, h, std::move(px), meta);
}

std::string encode_meta(const PhotoMeta& meta) {
    std::ostringstream os;
    os.precision(17);
    os << "ts=" << meta.timestamp << "\n";
    if (meta.latitude) os << "lat=" << *meta.latitude << "\n";
    if (meta.longitude) os << "lon=" << *meta.longitude << "\n";
    if (meta.bytes > 0) os << "bytes=" << meta.bytes << "\n";
    return os.str();
}

PhotoMeta decode_meta(std::string_view text) {
    PhotoMeta meta;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "ts") meta.timestamp = std::stoll(value);
            else if (key == "lat") meta.latitude = std::stod(value);
            else if (key == "lon") meta.longitude = std::stod(value);
            else if (key == "bytes") meta.bytes = std::stoull(value);
        } catch (const std::exception&) {
            throw ParameterError("bad meta value for '" + key + "': " + value);
        }
    }
    return meta;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void save_photo(const std::filesystem::path& dir, const Photo& photo) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / (photo.id() + ".ppm"), encode_ppm(photo));
    write_file(dir / (photo.id() + ".meta"), encode_meta(photo.meta()));
}

Photo load_photo(const std::filesystem::path& dir, const std::string& id) {
    PhotoMeta meta;
    const auto meta_path = dir / (id + ".meta");
    if (std::filesystem::exists(meta_path)) meta = decode_meta(read_file(meta_path));
    return decode_ppm(id, read_file(dir / (id + ".ppm")), meta);
}

Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus corpus;
    if (!std::filesystem::is_directory(dir)) return corpus;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".ppm") continue;
        const std::string id = entry.path().stem().string();
        corpus.emplace(id, std::make_shared<const Photo>(load_photo(dir, id)));
    }
    return corpus;
}

}  // namespace theia

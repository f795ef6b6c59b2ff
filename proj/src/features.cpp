#include "labelgraph/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "labelgraph/error.hpp"

namespace lg {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'F', '1'};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    bool has(std::size_t count) const { return bytes_.size() - pos_ >= count; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::uint32_t(std::uint8_t(bytes_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return v;
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(std::uint8_t(bytes_[pos_])) |
                          std::uint16_t(std::uint16_t(std::uint8_t(bytes_[pos_ + 1])) << 8);
        pos_ += 2;
        return v;
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string_view take(std::size_t count, const char* what) {
        need(count, what);
        auto out = bytes_.substr(pos_, count);
        pos_ += count;
        return out;
    }

private:
    void need(std::size_t count, const char* what) const {
        if (!has(count)) fail(ErrorKind::Format, std::string("truncated feature file: missing ") + what);
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(char((v >> (8 * b)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof v);
    put_u32(out, bits);
}

// Normalizes every row in place; norms computed in double.
void normalize_rows(std::size_t n, std::size_t d, std::vector<float>& data) {
    for (std::size_t i = 0; i < n; ++i) {
        float* row = data.data() + i * d;
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::isfinite(row[j])) {
                fail(ErrorKind::Format,
                     "non-finite value at row " + std::to_string(i) + " column " + std::to_string(j));
            }
            sq += double(row[j]) * double(row[j]);
        }
        const double norm = std::sqrt(sq);
        if (norm == 0.0) fail(ErrorKind::Format, "zero-norm row " + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j) row[j] = float(double(row[j]) / norm);
    }
}

FeatureMatrix parse_binary(std::string_view bytes, bool normalize) {
    ByteReader in(bytes);
    in.take(4, "magic");
    const std::uint32_t n = in.u32("row count");
    const std::uint32_t d = in.u32("dimension");
    if (n == 0 || d == 0) fail(ErrorKind::Format, "feature file header has n=0 or d=0");
    const std::size_t values = std::size_t(n) * d;
    if (in.remaining() / 4 < values) fail(ErrorKind::Format, "truncated feature file: missing vector data");

    std::vector<float> data(values);
    for (auto& v : data) v = in.f32("vector data");

    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t len = in.u16("id length");
        ids.emplace_back(in.take(len, "id bytes"));
    }
    if (in.remaining() != 0) fail(ErrorKind::Format, "trailing bytes after feature file ids");

    if (normalize) normalize_rows(n, d, data);
    return FeatureMatrix(n, d, std::move(data), std::move(ids));
}

FeatureMatrix parse_json_lines(std::string_view bytes) {
    std::vector<float> data;
    std::vector<std::string> ids;
    std::size_t d = 0;
    std::size_t line_no = 0;

    std::size_t start = 0;
    while (start < bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        if (end == std::string_view::npos) end = bytes.size();
        std::string_view line = bytes.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("vec") ||
            !obj["vec"].is_array()) {
            fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": expected {\"id\": string, \"vec\": [numbers]}");
        }
        const auto& vec = obj["vec"];
        if (ids.empty()) {
            d = vec.size();
            if (d == 0) fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": empty vector");
        } else if (vec.size() != d) {
            fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": dimension " + std::to_string(vec.size()) +
                                        " differs from " + std::to_string(d));
        }
        for (std::size_t j = 0; j < vec.size(); ++j) {
            const auto& v = vec[j];
            if (!v.is_number()) fail(ErrorKind::Format, "line " + std::to_string(line_no) + ": non-numeric vector entry");
            const double x = v.get<double>();
            if (!std::isfinite(x) || std::fabs(x) > std::numeric_limits<float>::max()) {
                fail(ErrorKind::Format,
                     "non-finite value at row " + std::to_string(ids.size()) + " column " + std::to_string(j));
            }
            data.push_back(float(x));
        }
        ids.push_back(obj["id"].get<std::string>());
    }
    if (ids.empty()) fail(ErrorKind::Format, "feature file has no rows");

    const std::size_t n = ids.size();
    normalize_rows(n, d, data);
    return FeatureMatrix(n, d, std::move(data), std::move(ids));
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t n, std::size_t d, std::vector<float> data, std::vector<std::string> ids)
    : n_(n), d_(d), data_(std::move(data)), ids_(std::move(ids)) {
    if (n_ == 0 || d_ == 0) fail(ErrorKind::Format, "feature matrix needs n >= 1 and d >= 1");
    if (data_.size() != n_ * d_ || ids_.size() != n_) fail(ErrorKind::Format, "feature matrix shape mismatch");
    index_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        if (!index_.emplace(ids_[i], i).second) fail(ErrorKind::Format, "duplicate id '" + ids_[i] + "'");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            fail(ErrorKind::Format,
                 "non-finite value at row " + std::to_string(i / d_) + " column " + std::to_string(i % d_));
        }
    }
}

std::optional<std::size_t> FeatureMatrix::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> indices) const {
    std::vector<float> data;
    std::vector<std::string> ids;
    data.reserve(indices.size() * d_);
    ids.reserve(indices.size());
    for (std::size_t i : indices) {
        auto r = row(i);
        data.insert(data.end(), r.begin(), r.end());
        ids.push_back(ids_[i]);
    }
    return FeatureMatrix(indices.size(), d_, std::move(data), std::move(ids));
}

FeatureMatrix ingest_features(std::string_view bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return parse_binary(bytes, true);
    const auto first = bytes.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && bytes[first] == '{') return parse_json_lines(bytes);
    fail(ErrorKind::Format, "unrecognized feature file: expected LGF1 magic or JSON lines");
}

FeatureMatrix decode_normalized_features(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorKind::Format, "missing LGF1 magic");
    return parse_binary(bytes, false);
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::NotFound, "file not found: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::NotFound, "features file not found: " + path.string());
    return ingest_features(read_file_bytes(path));
}

std::string encode_raw_features(std::size_t n, std::size_t d, std::span<const float> data,
                                std::span<const std::string> ids) {
    if (n > std::numeric_limits<std::uint32_t>::max() || d > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorKind::Parameter, "feature matrix too large for LGF1");
    }
    std::string out;
    out.reserve(12 + data.size() * 4 + n * 10);
    out.append(kMagic, 4);
    put_u32(out, std::uint32_t(n));
    put_u32(out, std::uint32_t(d));
    for (float v : data) put_f32(out, v);
    for (const auto& id : ids) {
        if (id.size() > std::numeric_limits<std::uint16_t>::max()) fail(ErrorKind::Parameter, "id longer than 65535 bytes");
        put_u16(out, std::uint16_t(id.size()));
        out += id;
    }
    return out;
}

std::string encode_features(const FeatureMatrix& features) {
    return encode_raw_features(features.n(), features.d(), features.data(), features.ids());
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) sum += double(a[j]) * double(b[j]);
    return sum;
}

}  // namespace lg

#include "labelgraph/graph_io.hpp"

#include <cstring>
#include <fstream>

#include "labelgraph/error.hpp"
#include "labelgraph/hashing.hpp"

namespace lg {

namespace {

constexpr char kGraphMagic[4] = {'L', 'G', 'G', '1'};
constexpr std::uint32_t kGraphVersion = 1;
constexpr std::size_t kDigestChars = 64;

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    // Stored little-endian; hosts we build for are little-endian.
    out.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

class Cursor {
public:
    Cursor(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string_view take(std::size_t count) {
        need(count);
        auto out = bytes_.substr(pos_, count);
        pos_ += count;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t count) const {
        if (remaining() < count) fail(ErrorKind::Integrity, "graph file " + source_ + " is truncated");
    }

    std::string_view bytes_;
    const std::string& source_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_graph(const KnnGraph& graph, const FeatureMatrix* features) {
    std::string out;
    out.append(kGraphMagic, 4);
    put<std::uint32_t>(out, kGraphVersion);
    put<std::uint32_t>(out, std::uint32_t(graph.n()));
    put<std::uint32_t>(out, std::uint32_t(graph.k()));
    put<double>(out, graph.temperature());
    for (std::size_t i = 0; i < graph.n(); ++i) {
        for (auto j : graph.neighbors(i)) put<std::uint32_t>(out, j);
    }
    for (std::size_t i = 0; i < graph.n(); ++i) {
        for (double s : graph.neighbor_similarities(i)) put<double>(out, s);
    }
    put<std::uint8_t>(out, features ? 1 : 0);
    if (features) {
        const std::string payload = encode_features(*features);
        put<std::uint64_t>(out, payload.size());
        out += payload;
    }
    out += sha256_hex(out);
    return out;
}

GraphBundle decode_graph(std::string_view bytes, const std::string& source) {
    if (bytes.size() < 4 + kDigestChars || std::memcmp(bytes.data(), kGraphMagic, 4) != 0) {
        fail(ErrorKind::Integrity, "graph file " + source + " is truncated or has a bad magic");
    }
    const auto body = bytes.substr(0, bytes.size() - kDigestChars);
    if (sha256_hex(body) != bytes.substr(body.size())) {
        fail(ErrorKind::Integrity, "graph file " + source + " failed its checksum");
    }

    Cursor in(body, source);
    in.take(4);
    if (in.get<std::uint32_t>() != kGraphVersion) fail(ErrorKind::Integrity, "graph file " + source + " has an unknown version");
    const std::size_t n = in.get<std::uint32_t>();
    const std::size_t k = in.get<std::uint32_t>();
    const double temperature = in.get<double>();
    if (k == 0 || k >= n || in.remaining() / (4 + 8) < n * k) {
        fail(ErrorKind::Integrity, "graph file " + source + " has an inconsistent header");
    }
    std::vector<std::uint32_t> neighbors(n * k);
    for (auto& j : neighbors) j = in.get<std::uint32_t>();
    std::vector<double> sims(n * k);
    for (auto& s : sims) s = in.get<double>();

    GraphBundle bundle;
    if (in.get<std::uint8_t>() != 0) {
        const std::uint64_t len = in.get<std::uint64_t>();
        try {
            bundle.features = decode_normalized_features(in.take(len));
        } catch (const Error& e) {
            fail(ErrorKind::Integrity, "graph file " + source + " has corrupt features: " + e.what());
        }
        if (bundle.features->n() != n) fail(ErrorKind::Integrity, "graph file " + source + " feature count mismatch");
    }
    if (in.remaining() != 0) fail(ErrorKind::Integrity, "graph file " + source + " has trailing bytes");

    try {
        bundle.graph = KnnGraph::from_neighbors(n, k, temperature, std::move(neighbors), std::move(sims));
    } catch (const Error& e) {
        fail(ErrorKind::Integrity, "graph file " + source + ": " + e.what());
    }
    return bundle;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_graph_file(const std::filesystem::path& path, const KnnGraph& graph, const FeatureMatrix* features) {
    write_file_atomic(path, encode_graph(graph, features));
}

GraphBundle read_graph_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::NotFound, "graph file not found: " + path.string());
    return decode_graph(read_file_bytes(path), path.string());
}

}  // namespace lg

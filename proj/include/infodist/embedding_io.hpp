#pragma once

// Labeled embedding pools: the binary interchange format, CSV import and
// seeded synthetic fixtures.
//
// Binary layout (little-endian):
//   "IDST" | u16 version = 1 | u16 reserved = 0 | u32 count | u32 dim | u32 classes
//   then per item: u32 label, dim x f32
// The item id is its 0-based record index.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "infodist/error.hpp"
#include "infodist/random.hpp"

namespace infodist {

using ItemId = std::uint32_t;
using ClassLabel = std::uint32_t;

struct EmbeddingSet {
    std::uint32_t dim = 1;
    std::uint32_t num_classes = 1;
    std::vector<ClassLabel> labels;  // one per item
    std::vector<float> values;       // row-major, labels.size() x dim

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }

    std::span<const float> row(std::size_t id) const { return {values.data() + id * dim, dim}; }

    std::vector<ItemId> ids_of_class(ClassLabel c) const {
        std::vector<ItemId> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) out.push_back(static_cast<ItemId>(i));
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (auto l : labels)
            if (l < num_classes) ++counts[l];
        return counts;
    }

    friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

// Throws Error describing the first violated invariant. With
// require_all_classes every class in [0, C) must own at least one item.
inline void validate(const EmbeddingSet& set, bool require_all_classes = false) {
    if (set.dim == 0) throw Error("embedding set has dim 0");
    if (set.num_classes == 0) throw Error("embedding set has 0 classes");
    if (set.values.size() != set.labels.size() * set.dim)
        throw Error(fmt::format("embedding set holds {} values for {} items of dim {}", set.values.size(),
                                set.labels.size(), set.dim));
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.labels[i] >= set.num_classes)
            throw Error(fmt::format("label out of range at record {}: {} >= {}", i, set.labels[i], set.num_classes));
        for (float v : set.row(i))
            if (!std::isfinite(v)) throw Error(fmt::format("non-finite value at record {}", i));
    }
    if (require_all_classes) {
        const auto counts = set.class_counts();
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c] == 0) throw Error(fmt::format("class {} has no items", c));
    }
}

namespace detail {

inline constexpr std::array<char, 4> kEmbeddingMagic{'I', 'D', 'S', 'T'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;

class ByteWriter {
public:
    void bytes(std::span<const char> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    std::vector<char> take() { return std::move(out_); }

private:
    template <typename U>
    void put_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::vector<char> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const char> data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    bool has(std::size_t n) const { return remaining() >= n; }

    std::span<const char> bytes(std::size_t n) {
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint16_t u16() { return get_le<std::uint16_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

private:
    template <typename U>
    U get_le() {
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    std::span<const char> data_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}' for reading", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace detail

inline std::vector<char> encode_embeddings(const EmbeddingSet& set) {
    validate(set);
    detail::ByteWriter w;
    w.bytes(detail::kEmbeddingMagic);
    w.u16(detail::kEmbeddingVersion);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(set.size()));
    w.u32(set.dim);
    w.u32(set.num_classes);
    for (std::size_t i = 0; i < set.size(); ++i) {
        w.u32(set.labels[i]);
        for (float v : set.row(i)) w.f32(v);
    }
    return w.take();
}

inline EmbeddingSet decode_embeddings(std::span<const char> bytes) {
    detail::ByteReader r(bytes);
    if (!r.has(detail::kEmbeddingHeaderBytes))
        throw Error(fmt::format("malformed header: {} bytes, need {}", bytes.size(), detail::kEmbeddingHeaderBytes));
    const auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), detail::kEmbeddingMagic.begin()))
        throw Error("malformed header: bad magic");
    if (const auto version = r.u16(); version != detail::kEmbeddingVersion)
        throw Error(fmt::format("malformed header: unsupported version {}", version));
    if (const auto reserved = r.u16(); reserved != 0) throw Error("malformed header: reserved field not zero");

    EmbeddingSet set;
    const std::uint32_t count = r.u32();
    set.dim = r.u32();
    set.num_classes = r.u32();
    if (set.dim == 0) throw Error("malformed header: dim 0");
    if (set.num_classes == 0) throw Error("malformed header: 0 classes");

    const std::size_t record_bytes = 4 + std::size_t{4} * set.dim;
    const std::size_t payload = r.remaining();
    if (payload != count * record_bytes && count > 0 && payload % count == 0 && payload / count >= 4 &&
        (payload / count - 4) % 4 == 0) {
        throw Error(fmt::format("dimension mismatch at record 0: header declares dim={}, records carry {} values",
                                set.dim, (payload / count - 4) / 4));
    }

    set.labels.reserve(count);
    set.values.reserve(std::size_t{count} * set.dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!r.has(record_bytes)) throw Error(fmt::format("truncated file at record {}", i));
        const auto label = r.u32();
        if (label >= set.num_classes)
            throw Error(fmt::format("label out of range at record {}: {} >= {}", i, label, set.num_classes));
        set.labels.push_back(label);
        for (std::uint32_t k = 0; k < set.dim; ++k) {
            const float v = r.f32();
            if (!std::isfinite(v)) throw Error(fmt::format("non-finite value at record {}", i));
            set.values.push_back(v);
        }
    }
    if (r.remaining() != 0) throw Error(fmt::format("{} trailing bytes after record {}", r.remaining(), count));
    return set;
}

inline EmbeddingSet read_embeddings(const std::filesystem::path& path) {
    return decode_embeddings(detail::read_file_bytes(path));
}

// Validates before touching the file, so a bad set never leaves partial output.
inline void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    const auto bytes = encode_embeddings(set);
    detail::write_file_bytes(path, bytes);
}

// CSV import: header "label,f0,...,f{d-1}", one row per item. num_classes is
// the largest label + 1 unless given explicitly.
inline EmbeddingSet parse_embeddings_csv(std::string_view text, std::uint32_t num_classes = 0) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw Error("malformed header: empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "label") throw Error("malformed header: expected 'label,f0,...'");
    for (std::size_t k = 1; k < header.size(); ++k)
        if (header[k] != fmt::format("f{}", k - 1))
            throw Error(fmt::format("malformed header: column {} is '{}', expected 'f{}'", k, header[k], k - 1));

    EmbeddingSet set;
    set.dim = static_cast<std::uint32_t>(header.size() - 1);
    std::uint32_t max_label = 0;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw Error(fmt::format("dimension mismatch at record {}: expected {} values, got {}", record, set.dim,
                                    cells.empty() ? 0 : cells.size() - 1));
        try {
            std::size_t used = 0;
            const long label = std::stol(cells[0], &used);
            if (used != cells[0].size() || label < 0) throw std::invalid_argument("label");
            set.labels.push_back(static_cast<ClassLabel>(label));
            max_label = std::max(max_label, static_cast<std::uint32_t>(label));
            for (std::size_t k = 1; k < cells.size(); ++k) {
                const float v = std::stof(cells[k], &used);
                if (used != cells[k].size()) throw std::invalid_argument("value");
                if (!std::isfinite(v)) throw Error(fmt::format("non-finite value at record {}", record));
                set.values.push_back(v);
            }
        } catch (const std::logic_error&) {
            throw Error(fmt::format("unparsable value at record {}", record));
        }
        ++record;
    }
    set.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    validate(set);
    return set;
}

inline EmbeddingSet read_embeddings_csv(const std::filesystem::path& path, std::uint32_t num_classes = 0) {
    const auto bytes = detail::read_file_bytes(path);
    return parse_embeddings_csv(std::string_view(bytes.data(), bytes.size()), num_classes);
}

// Unit-length rows; zero rows are left untouched.
inline EmbeddingSet l2_normalized(EmbeddingSet set) {
    for (std::size_t i = 0; i < set.size(); ++i) {
        double norm = 0.0;
        for (float v : set.row(i)) norm += static_cast<double>(v) * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        float* row = set.values.data() + i * set.dim;
        for (std::uint32_t k = 0; k < set.dim; ++k) row[k] = static_cast<float>(row[k] / norm);
    }
    return set;
}

// Subset in the given order; ids are renumbered to positions in `ids`.
inline EmbeddingSet subset(const EmbeddingSet& set, std::span<const ItemId> ids) {
    EmbeddingSet out;
    out.dim = set.dim;
    out.num_classes = set.num_classes;
    out.labels.reserve(ids.size());
    out.values.reserve(ids.size() * set.dim);
    for (auto id : ids) {
        if (id >= set.size()) throw std::invalid_argument(fmt::format("item id {} out of range", id));
        out.labels.push_back(set.labels[id]);
        const auto r = set.row(id);
        out.values.insert(out.values.end(), r.begin(), r.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

struct FixtureSpec {
    std::uint64_t seed = 0;
    std::uint32_t num_classes = 2;
    std::uint32_t clusters_per_class = 1;
    std::uint32_t dim = 2;
    std::uint32_t count_per_class = 100;
    double separation = 10.0;  // minimum distance between cluster means, in units of noise_sigma
    double noise_sigma = 1.0;
};

struct Fixture {
    EmbeddingSet set;
    std::vector<std::uint32_t> cluster;  // planted cluster index per item, global over classes
    std::vector<std::vector<double>> means;
};

inline constexpr int kFixtureMaxAttempts = 10'000;

namespace detail {

inline void check_fixture_spec(const FixtureSpec& spec) {
    if (spec.num_classes == 0 || spec.clusters_per_class == 0 || spec.dim == 0 || spec.count_per_class == 0)
        throw std::invalid_argument("fixture spec counts must be positive");
    if (!(spec.separation > 0.0) || !(spec.noise_sigma > 0.0) || !std::isfinite(spec.separation) ||
        !std::isfinite(spec.noise_sigma))
        throw std::invalid_argument("fixture separation and noise_sigma must be positive and finite");
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

}  // namespace detail

// Cluster means are drawn from a standard normal and then scaled so the
// closest pair sits exactly separation x noise_sigma apart. Draws whose
// closest pair is degenerate are rejected.
inline Fixture generate_fixture_with_clusters(const FixtureSpec& spec) {
    detail::check_fixture_spec(spec);
    Rng rng(spec.seed);
    const std::size_t num_clusters = std::size_t{spec.num_classes} * spec.clusters_per_class;
    const double min_distance = spec.separation * spec.noise_sigma;

    std::vector<std::vector<double>> means(num_clusters, std::vector<double>(spec.dim));
    bool placed = false;
    for (int attempt = 0; attempt < kFixtureMaxAttempts && !placed; ++attempt) {
        for (auto& m : means)
            for (auto& x : m) x = rng.normal();
        if (num_clusters == 1) {
            for (auto& x : means[0]) x *= min_distance;
            placed = true;
            break;
        }
        double closest = std::numeric_limits<double>::infinity();
        double total = 0.0;
        for (std::size_t a = 0; a < num_clusters; ++a)
            for (std::size_t b = a + 1; b < num_clusters; ++b) {
                const double d = detail::distance(means[a], means[b]);
                closest = std::min(closest, d);
                total += d;
            }
        const double mean_distance = total / (0.5 * static_cast<double>(num_clusters * (num_clusters - 1)));
        if (!(closest > 1e-6 * mean_distance)) continue;
        const double scale = min_distance / closest;
        for (auto& m : means)
            for (auto& x : m) x *= scale;
        placed = true;
    }
    if (!placed) throw Error(fmt::format("could not place {} cluster means in {} attempts", num_clusters,
                                         kFixtureMaxAttempts));

    Fixture fx;
    fx.set.dim = spec.dim;
    fx.set.num_classes = spec.num_classes;
    const std::size_t total_items = std::size_t{spec.num_classes} * spec.count_per_class;
    fx.set.labels.reserve(total_items);
    fx.set.values.reserve(total_items * spec.dim);
    fx.cluster.reserve(total_items);
    for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
        for (std::uint32_t j = 0; j < spec.clusters_per_class; ++j) {
            const std::uint32_t n = spec.count_per_class / spec.clusters_per_class +
                                    (j < spec.count_per_class % spec.clusters_per_class ? 1 : 0);
            const std::uint32_t cluster = c * spec.clusters_per_class + j;
            for (std::uint32_t i = 0; i < n; ++i) {
                fx.set.labels.push_back(c);
                fx.cluster.push_back(cluster);
                for (std::uint32_t k = 0; k < spec.dim; ++k)
                    fx.set.values.push_back(
                        static_cast<float>(means[cluster][k] + spec.noise_sigma * rng.normal()));
            }
        }
    }
    fx.means = std::move(means);
    return fx;
}

inline EmbeddingSet generate_fixture(const FixtureSpec& spec) { return generate_fixture_with_clusters(spec).set; }

}  // namespace infodist

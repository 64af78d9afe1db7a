#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "infodist/embedding_io.hpp"

using namespace infodist;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "infodist_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

EmbeddingSet tiny_set() {
    EmbeddingSet s;
    s.dim = 3;
    s.num_classes = 2;
    s.labels = {0, 1};
    s.values = {0.5f, -1.0f, 2.0f, 3.25f, 0.0f, -0.125f};
    return s;
}

void expect_error_containing(const std::function<void()>& fn, const std::string& needle) {
    try {
        fn();
        FAIL() << "expected an error containing '" << needle << "'";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

// Header as the format declares it, for building malformed files by hand.
std::vector<char> header(std::uint32_t count, std::uint32_t dim, std::uint32_t classes) {
    detail::ByteWriter w;
    w.bytes(std::array<char, 4>{'I', 'D', 'S', 'T'});
    w.u16(1);
    w.u16(0);
    w.u32(count);
    w.u32(dim);
    w.u32(classes);
    return w.take();
}

}  // namespace

TEST(EmbeddingIo, SmallestWellFormedFile) {
    const auto path = temp_path("tiny.bin");
    write_embeddings(tiny_set(), path);
    const auto back = read_embeddings(path);
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back.dim, 3u);
    EXPECT_EQ(back.num_classes, 2u);
    EXPECT_EQ(back, tiny_set());
}

TEST(EmbeddingIo, HeaderOnlyFileHasFixedLength) {
    EmbeddingSet empty;
    empty.dim = 1;
    empty.num_classes = 1;
    const auto bytes = encode_embeddings(empty);
    // magic(4) + version(2) + reserved(2) + count(4) + dim(4) + classes(4)
    EXPECT_EQ(bytes.size(), 20u);
    EXPECT_EQ(decode_embeddings(bytes), empty);
}

TEST(EmbeddingIo, ExactByteLayout) {
    EmbeddingSet s;
    s.dim = 1;
    s.num_classes = 2;
    s.labels = {1};
    s.values = {1.0f};
    const auto bytes = encode_embeddings(s);
    const std::vector<unsigned char> expected{'I', 'D', 'S', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,
                                              2,   0,   0,   0,   1, 0, 0, 0, 0, 0, 0x80, 0x3f};
    ASSERT_EQ(bytes.size(), expected.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected[i]) << i;
}

TEST(EmbeddingIo, DimensionMismatchReported) {
    auto bytes = header(1, 4, 2);
    detail::ByteWriter w;
    w.u32(0);
    for (int k = 0; k < 3; ++k) w.f32(1.0f);
    const auto rec = w.take();
    bytes.insert(bytes.end(), rec.begin(), rec.end());
    expect_error_containing([&] { decode_embeddings(bytes); }, "dimension mismatch at record 0");
}

TEST(EmbeddingIo, TruncatedFileReported) {
    auto bytes = encode_embeddings(tiny_set());
    bytes.resize(bytes.size() - 3);
    expect_error_containing([&] { decode_embeddings(bytes); }, "truncated file at record 1");
}

TEST(EmbeddingIo, LabelOutOfRangeAndNonFiniteReported) {
    auto bad_label = encode_embeddings(tiny_set());
    bad_label[20 + 16] = 7;  // second record's label
    expect_error_containing([&] { decode_embeddings(bad_label); }, "label out of range at record 1");

    auto nan_value = header(1, 1, 1);
    detail::ByteWriter w;
    w.u32(0);
    w.f32(std::numeric_limits<float>::quiet_NaN());
    const auto rec = w.take();
    nan_value.insert(nan_value.end(), rec.begin(), rec.end());
    expect_error_containing([&] { decode_embeddings(nan_value); }, "non-finite value at record 0");
}

TEST(EmbeddingIo, MalformedHeaderReported) {
    auto bytes = encode_embeddings(tiny_set());
    bytes[0] = 'X';
    expect_error_containing([&] { decode_embeddings(bytes); }, "malformed header");
    expect_error_containing([&] { decode_embeddings(std::vector<char>(10, 0)); }, "malformed header");
}

TEST(EmbeddingIo, InvalidSetRejectedBeforeWriting) {
    auto bad = tiny_set();
    bad.labels[1] = 5;
    const auto path = temp_path("never_written.bin");
    std::filesystem::remove(path);
    EXPECT_THROW(write_embeddings(bad, path), Error);
    EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(EmbeddingIo, UnwritablePath) {
    EXPECT_THROW(write_embeddings(tiny_set(), "/nonexistent-dir/x/y.bin"), Error);
}

TEST(EmbeddingIo, RoundTripIsByteIdenticalOverSeededFixtures) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        FixtureSpec spec;
        spec.seed = seed;
        spec.num_classes = 1 + seed % 4;
        spec.clusters_per_class = 1 + seed % 3;
        spec.dim = 1 + static_cast<std::uint32_t>(seed % 7);
        spec.count_per_class = 5 + static_cast<std::uint32_t>(seed);
        const auto path = temp_path(fmt::format("fixture_{}.bin", seed));
        write_embeddings(generate_fixture(spec), path);
        const auto original = detail::read_file_bytes(path);
        const auto set = read_embeddings(path);
        EXPECT_EQ(set, generate_fixture(spec));
        EXPECT_EQ(encode_embeddings(set), original) << "seed " << seed;
    }
}

TEST(EmbeddingIo, CsvImport) {
    const auto set = parse_embeddings_csv("label,f0,f1\n1,0.5,-2\n0,1e-3,4.25\n");
    EXPECT_EQ(set.size(), 2u);
    EXPECT_EQ(set.dim, 2u);
    EXPECT_EQ(set.num_classes, 2u);
    EXPECT_EQ(set.labels, (std::vector<ClassLabel>{1, 0}));
    EXPECT_FLOAT_EQ(set.values[2], 1e-3f);
    expect_error_containing([] { parse_embeddings_csv("label,f0,f1\n1,0.5\n"); }, "dimension mismatch at record 0");
    expect_error_containing([] { parse_embeddings_csv("label,x0\n1,0.5\n"); }, "malformed header");
    expect_error_containing([] { parse_embeddings_csv("label,f0\n0,1\n1,abc\n"); }, "record 1");
    expect_error_containing([] { parse_embeddings_csv("label,f0\n3,1\n", 2); }, "label out of range");
}

TEST(Fixture, CountsAndDeterminism) {
    FixtureSpec spec;
    spec.seed = 42;
    spec.num_classes = 9;
    spec.count_per_class = 1000;
    spec.dim = 4;
    const auto a = generate_fixture(spec);
    EXPECT_EQ(a.size(), 9000u);
    EXPECT_EQ(a, generate_fixture(spec));
    const auto counts = a.class_counts();
    for (auto c : counts) EXPECT_EQ(c, 1000u);
    for (float v : a.values) ASSERT_TRUE(std::isfinite(v));
    spec.seed = 43;
    EXPECT_NE(a, generate_fixture(spec));
}

TEST(Fixture, ClustersSplitEvenlyAndMeansSeparated) {
    FixtureSpec spec;
    spec.seed = 3;
    spec.num_classes = 2;
    spec.clusters_per_class = 3;
    spec.count_per_class = 10;
    spec.dim = 5;
    spec.separation = 6;
    spec.noise_sigma = 0.5;
    const auto fx = generate_fixture_with_clusters(spec);
    std::vector<int> per_cluster(6, 0);
    for (auto c : fx.cluster) ++per_cluster[c];
    EXPECT_EQ(per_cluster, (std::vector<int>{4, 3, 3, 4, 3, 3}));
    double closest = 1e300;
    for (std::size_t a = 0; a < fx.means.size(); ++a)
        for (std::size_t b = a + 1; b < fx.means.size(); ++b)
            closest = std::min(closest, detail::distance(fx.means[a], fx.means[b]));
    EXPECT_GE(closest, spec.separation * spec.noise_sigma - 1e-9);
}

// Oracle: nearest planted mean, computed directly from the generator's means.
TEST(Fixture, NearestCentroidRecoversWellSeparatedClasses) {
    FixtureSpec spec;
    spec.seed = 11;
    spec.num_classes = 4;
    spec.clusters_per_class = 2;
    spec.dim = 6;
    spec.count_per_class = 250;
    spec.separation = 10;
    spec.noise_sigma = 1;
    const auto fx = generate_fixture_with_clusters(spec);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < fx.set.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        const auto row = fx.set.row(i);
        for (std::size_t m = 0; m < fx.means.size(); ++m) {
            double d = 0;
            for (std::size_t k = 0; k < row.size(); ++k) d += (row[k] - fx.means[m][k]) * (row[k] - fx.means[m][k]);
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        hits += best / spec.clusters_per_class == fx.set.labels[i];
    }
    EXPECT_GE(static_cast<double>(hits) / fx.set.size(), 0.99);
}

TEST(Fixture, PreconditionViolations) {
    FixtureSpec spec;
    spec.count_per_class = 0;
    EXPECT_THROW(generate_fixture(spec), std::invalid_argument);
    spec = {};
    spec.separation = -1;
    EXPECT_THROW(generate_fixture(spec), std::invalid_argument);
}

TEST(Embeddings, L2NormalizedRowsHaveUnitLength) {
    const auto set = l2_normalized(tiny_set());
    for (std::size_t i = 0; i < set.size(); ++i) {
        double n = 0;
        for (float v : set.row(i)) n += double(v) * v;
        EXPECT_NEAR(n, 1.0, 1e-6);
    }
}

#include "icot/io.hpp"
#include "icot/synthbench.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace icot;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("icot_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

SynthSpec toy_spec() {
    SynthSpec s;
    s.seen_classes = 5;
    s.unseen_classes = 2;
    s.attr_dim = 8;
    s.feature_dim = 16;
    s.train_per_class = 20;
    s.test_per_seen_class = 10;
    s.test_per_unseen_class = 10;
    s.seed = 1;
    return s;
}

bool has_kind(const std::vector<Violation>& v, const std::string& kind, const std::string& needle) {
    for (const auto& x : v) {
        if (x.kind == kind && x.message.find(needle) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST(ValidateSplit, AcceptsConsistentSplit) {
    const ClassSpace space{{0, 1}, {2}};
    const std::vector<ClassId> labels{0, 1, 0, 2};
    SplitSpec split{{0, 1}, {2}, {3}, "PS"};
    EXPECT_TRUE(validate_split(space, split, labels).empty());
}

TEST(ValidateSplit, NamesOverlappingClass) {
    const ClassSpace space{{0, 7}, {7, 8}};
    const std::vector<ClassId> labels{0, 8};
    SplitSpec split{{0}, {}, {1}, "PS"};
    EXPECT_TRUE(has_kind(validate_split(space, split, labels), "class-overlap", "class 7"));
}

TEST(ValidateSplit, NamesSeenLabelInUnseenTest) {
    const ClassSpace space{{0}, {1}};
    const std::vector<ClassId> labels{0, 1, 0};
    SplitSpec split{{0}, {}, {1, 2}, "PS"};
    EXPECT_TRUE(has_kind(validate_split(space, split, labels), "test-unseen-label", "row 2"));
}

TEST(ValidateSplit, RowOverlapAndRange) {
    const ClassSpace space{{0}, {1}};
    const std::vector<ClassId> labels{0, 1};
    SplitSpec split{{0}, {0}, {1, 5}, "PS"};
    const auto v = validate_split(space, split, labels);
    EXPECT_TRUE(has_kind(v, "row-overlap", "row 0"));
    EXPECT_TRUE(has_kind(v, "row-out-of-range", "row 5"));
}

TEST(MergeTrainSet, CountsAndProvenance) {
    const LabeledDataset seen = LabeledDataset::seen_real(Matrix::Ones(6, 2), {0, 0, 1, 1, 2, 2});
    UnlabeledPool pool{Matrix::Zero(5, 2), {10, 11, 12, 13, 14}};
    for (Eigen::Index r = 0; r < 5; ++r) pool.features(r, 0) = static_cast<double>(r);

    const auto same = merge_train_set(seen, {}, pool);
    EXPECT_EQ(same.features, seen.features);
    EXPECT_EQ(same.labels, seen.labels);

    PseudoLabeledSet ps{{3, 3, 1, 4}, {5, 5, 6, 5}, "A", 1};
    const auto merged = merge_train_set(seen, ps, pool);
    ASSERT_EQ(merged.size(), 10U);
    EXPECT_EQ(std::count(merged.origins.begin(), merged.origins.end(), Origin::PseudoUnseen), 4);
    EXPECT_EQ(merged.features(6, 0), 3.0);
    EXPECT_EQ(merged.features(7, 0), 3.0);
    EXPECT_EQ(merged.labels[8], 6U);
    EXPECT_EQ(seen.size(), 6U);

    PseudoLabeledSet bad{{9}, {5}, "A", 1};
    EXPECT_THROW(merge_train_set(seen, bad, pool), std::out_of_range);
}

TEST(Synthbench, ShapesMatchSpec) {
    const auto gen = generate(toy_spec());
    const auto& d = gen.data;
    EXPECT_EQ(d.features.rows(), 5 * 30 + 2 * 10);
    EXPECT_EQ(d.features.cols(), 16);
    EXPECT_EQ(d.semantics.num_classes(), 7U);
    EXPECT_EQ(d.semantics.dim(), 8U);
    EXPECT_EQ(d.split.train_idx.size(), 100U);
    EXPECT_EQ(d.split.test_seen_idx.size(), 50U);
    EXPECT_EQ(d.split.test_unseen_idx.size(), 20U);
    std::map<ClassId, int> train_count;
    for (auto r : d.split.train_idx) ++train_count[d.labels[r]];
    for (ClassId c = 0; c < 5; ++c) EXPECT_EQ(train_count[c], 20);
    EXPECT_TRUE(validate_split(d.space, d.split, d.labels).empty());
    EXPECT_GE(d.semantics.matrix().minCoeff(), 0.0);
    EXPECT_LE(d.semantics.matrix().maxCoeff(), 1.0);
}

TEST(Synthbench, DeterministicPerSeed) {
    const auto a = generate(toy_spec());
    const auto b = generate(toy_spec());
    EXPECT_EQ(a.data.features, b.data.features);
    EXPECT_EQ(a.data.labels, b.data.labels);
    EXPECT_EQ(a.data.semantics.matrix(), b.data.semantics.matrix());
    SynthSpec other = toy_spec();
    other.seed = 2;
    EXPECT_NE(generate(other).data.features, a.data.features);
}

TEST(Synthbench, ReferenceSpecIsFrozen) {
    const SynthSpec s = reference_benchmark();
    EXPECT_EQ(s.seen_classes, 10U);
    EXPECT_EQ(s.unseen_classes, 4U);
    EXPECT_EQ(s.attr_dim, 16U);
    EXPECT_EQ(s.feature_dim, 64U);
    EXPECT_EQ(s.train_per_class, 60U);
    EXPECT_EQ(s.test_per_seen_class, 30U);
    EXPECT_EQ(s.test_per_unseen_class, 30U);
    EXPECT_EQ(s.noise, 2.0);
    EXPECT_EQ(s, reference_benchmark());
}

namespace {

double nearest_mean_acc(const SynthOutput& gen, const std::vector<std::size_t>& rows) {
    const auto& d = gen.data;
    std::size_t hit = 0;
    for (auto r : rows) {
        Eigen::Index best = 0;
        (gen.class_means.rowwise() - d.features.row(static_cast<Eigen::Index>(r))).rowwise().squaredNorm().minCoeff(&best);
        hit += static_cast<ClassId>(best) == d.labels[r];
    }
    return static_cast<double>(hit) / static_cast<double>(rows.size());
}

}  // namespace

TEST(Synthbench, NoiselessLimitIsPerfectlySeparable) {
    SynthSpec s = toy_spec();
    s.noise = 1e-6;
    const auto gen = generate(s);
    auto rows = gen.data.compound_idx();
    EXPECT_EQ(nearest_mean_acc(gen, rows), 1.0);
}

TEST(Synthbench, OracleAccuracyNonIncreasingInNoise) {
    double prev = 2.0;
    for (double sigma : {1.0, 1.8, 2.4}) {
        SynthSpec s = reference_benchmark();
        s.noise = sigma;
        const auto gen = generate(s);
        const double acc = nearest_mean_acc(gen, gen.data.compound_idx());
        EXPECT_LE(acc, prev) << "sigma " << sigma;
        prev = acc;
    }
}

TEST(Synthbench, InvalidSpecRejected) {
    SynthSpec s = toy_spec();
    s.feature_dim = 4;
    EXPECT_THROW(generate(s), std::invalid_argument);
    s = toy_spec();
    s.noise = 0.0;
    EXPECT_THROW(generate(s), std::invalid_argument);
}

TEST(SynthSpecJson, RoundTripAndUnknownKey) {
    nlohmann::json j;
    to_json(j, reference_benchmark());
    SynthSpec back;
    from_json(j, back);
    EXPECT_EQ(back, reference_benchmark());
    j["colour"] = 3;
    EXPECT_THROW(from_json(j, back), std::exception);
}

TEST(DatasetIo, RoundTripIsBitExact) {
    const auto gen = generate(toy_spec());
    const auto dir = scratch_dir("roundtrip");
    write_dataset(dir, gen.data);
    const ZslData back = load_dataset(DatasetPaths::in_dir(dir));
    ASSERT_EQ(back.features.rows(), gen.data.features.rows());
    EXPECT_EQ(std::memcmp(back.features.data(), gen.data.features.data(),
                          sizeof(double) * static_cast<std::size_t>(back.features.size())),
              0);
    EXPECT_EQ(back.labels, gen.data.labels);
    EXPECT_EQ(back.semantics.matrix(), gen.data.semantics.matrix());
    EXPECT_EQ(back.space.seen, gen.data.space.seen);
    EXPECT_EQ(back.space.unseen, gen.data.space.unseen);
    EXPECT_EQ(back.split.train_idx, gen.data.split.train_idx);
    EXPECT_EQ(back.split.test_seen_idx, gen.data.split.test_seen_idx);
    EXPECT_EQ(back.split.test_unseen_idx, gen.data.split.test_unseen_idx);
    EXPECT_EQ(back.split.name, gen.data.split.name);
    EXPECT_EQ(back.names, gen.data.names);

    const auto dir2 = scratch_dir("roundtrip2");
    write_dataset(dir2, back);
    for (const char* f : {"features.bin", "labels.bin", "attributes.csv", "split.json", "manifest.json"}) {
        EXPECT_EQ(slurp(dir / f), slurp(dir2 / f)) << f;
    }
}

TEST(DatasetIo, FeatureHeaderLayout) {
    const auto dir = scratch_dir("layout");
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    write_features(dir / "f.bin", m);
    const std::string bytes = slurp(dir / "f.bin");
    ASSERT_EQ(bytes.size(), 8U + 12U + 6U * 4U);
    EXPECT_EQ(bytes.substr(0, 8), "ICOTFEAT");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);
    EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);
    float first = 0.0F;
    std::memcpy(&first, bytes.data() + 20, 4);
    EXPECT_EQ(first, 1.0F);
}

TEST(DatasetIo, CorruptMagicIsMalformedHeader) {
    const auto gen = generate(toy_spec());
    const auto dir = scratch_dir("corrupt");
    write_dataset(dir, gen.data);
    {
        std::fstream f(dir / "features.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    try {
        (void)load_dataset(DatasetPaths::in_dir(dir));
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("malformed header"), std::string::npos);
    }
}

TEST(DatasetIo, DimensionMismatchAndUnknownClass) {
    const auto gen = generate(toy_spec());
    const auto dir = scratch_dir("mismatch");
    write_dataset(dir, gen.data);
    std::vector<ClassId> short_labels(gen.data.labels.begin(), gen.data.labels.end() - 1);
    write_labels(dir / "labels.bin", short_labels);
    EXPECT_THROW(load_dataset(DatasetPaths::in_dir(dir)), DatasetError);

    auto labels = gen.data.labels;
    labels[3] = 99;
    write_labels(dir / "labels.bin", labels);
    try {
        (void)load_dataset(DatasetPaths::in_dir(dir));
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("unknown class id 99 at row 3"), std::string::npos);
    }
}

TEST(DatasetIo, AwaShapedMetadataValidates) {
    ClassSpace space;
    for (ClassId c = 0; c < 40; ++c) space.seen.push_back(c);
    for (ClassId c = 40; c < 50; ++c) space.unseen.push_back(c);
    std::vector<ClassId> labels;
    SplitSpec split;
    for (ClassId c = 0; c < 50; ++c) {
        labels.push_back(c);
        (c < 40 ? split.train_idx : split.test_unseen_idx).push_back(c);
    }
    EXPECT_TRUE(validate_split(space, split, labels).empty());

    const auto dir = scratch_dir("awa");
    ZslData d;
    d.features = Matrix::Constant(50, 2048, 0.25);
    d.labels = labels;
    d.space = space;
    d.split = split;
    d.semantics = SemanticTable(Matrix::Constant(50, 85, 0.5));
    write_dataset(dir, d);
    const auto back = load_dataset(DatasetPaths::in_dir(dir));
    EXPECT_EQ(back.features.cols(), 2048);
    EXPECT_EQ(back.semantics.dim(), 85U);
}

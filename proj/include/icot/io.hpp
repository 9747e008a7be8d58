#pragma once

// On-disk dataset formats.
//
//   features  "ICOTFEAT" u32 version=1, u32 n, u32 d, n*d f32 row-major (LE)
//   labels    "ICOTLABL" u32 version=1, u32 n, n u32 class ids (LE)
//   attributes  CSV rows "class_id,a_1,...,a_q", ids dense 0..K-1 in order
//   split     JSON {seen_classes, unseen_classes, train_idx, test_seen_idx,
//                   test_unseen_idx, split_name}
//   manifest  JSON {"<class id>": "<name>"} (optional)

#include "icot/datamodel.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace icot {

class DatasetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr std::string_view kFeatureMagic = "ICOTFEAT";
inline constexpr std::string_view kLabelMagic = "ICOTLABL";
inline constexpr std::uint32_t kFormatVersion = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    std::array<unsigned char, 4> b{};
    const auto offset = static_cast<long long>(is.tellg());
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw DatasetError(path + ": truncated file at byte offset " + std::to_string(offset));
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& path) {
    std::string got(magic.size(), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw DatasetError(path + ": malformed header at byte offset 0 (expected magic \"" +
                           std::string(magic) + "\")");
    }
    const std::uint32_t version = get_u32(is, path);
    if (version != kFormatVersion) {
        throw DatasetError(path + ": malformed header at byte offset 8 (unsupported version " +
                           std::to_string(version) + ")");
    }
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw DatasetError(p.string() + ": cannot open");
    return is;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw DatasetError(p.string() + ": cannot open for writing");
    return os;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffULL) throw DatasetError(std::string(what) + " exceeds u32 range");
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Writes `m` as f32. Values are narrowed; f32-representable inputs round-trip exactly.
inline void write_features(const std::filesystem::path& path, const Matrix& m) {
    auto os = detail::open_out(path);
    os.write(detail::kFeatureMagic.data(), static_cast<std::streamsize>(detail::kFeatureMagic.size()));
    detail::put_u32(os, detail::kFormatVersion);
    detail::put_u32(os, detail::checked_u32(static_cast<std::size_t>(m.rows()), "feature rows"));
    detail::put_u32(os, detail::checked_u32(static_cast<std::size_t>(m.cols()), "feature cols"));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
    if (!os) throw DatasetError(path.string() + ": write failed");
}

inline Matrix read_features(const std::filesystem::path& path) {
    const std::string p = path.string();
    auto is = detail::open_in(path);
    detail::expect_magic(is, detail::kFeatureMagic, p);
    const std::uint32_t n = detail::get_u32(is, p);
    const std::uint32_t d = detail::get_u32(is, p);
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const float f = std::bit_cast<float>(detail::get_u32(is, p));
        if (!std::isfinite(f)) {
            throw DatasetError(p + ": non-finite value at row " + std::to_string(i / d) + ", byte offset " +
                               std::to_string(20 + 4 * i));
        }
        m.data()[i] = static_cast<double>(f);
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw DatasetError(p + ": trailing bytes after " + std::to_string(n) + "x" + std::to_string(d) +
                           " payload");
    }
    return m;
}

inline void write_labels(const std::filesystem::path& path, std::span<const ClassId> labels) {
    auto os = detail::open_out(path);
    os.write(detail::kLabelMagic.data(), static_cast<std::streamsize>(detail::kLabelMagic.size()));
    detail::put_u32(os, detail::kFormatVersion);
    detail::put_u32(os, detail::checked_u32(labels.size(), "label count"));
    for (ClassId c : labels) detail::put_u32(os, c);
    if (!os) throw DatasetError(path.string() + ": write failed");
}

inline std::vector<ClassId> read_labels(const std::filesystem::path& path) {
    const std::string p = path.string();
    auto is = detail::open_in(path);
    detail::expect_magic(is, detail::kLabelMagic, p);
    const std::uint32_t n = detail::get_u32(is, p);
    std::vector<ClassId> out(n);
    for (auto& c : out) c = detail::get_u32(is, p);
    if (is.peek() != std::char_traits<char>::eof()) {
        throw DatasetError(p + ": trailing bytes after " + std::to_string(n) + " labels");
    }
    return out;
}

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), end};
}

inline void write_attributes(const std::filesystem::path& path, const SemanticTable& table) {
    auto os = detail::open_out(path);
    const Matrix& a = table.matrix();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        os << r;
        for (Eigen::Index c = 0; c < a.cols(); ++c) os << ',' << format_double(a(r, c));
        os << '\n';
    }
}

inline SemanticTable read_attributes(const std::filesystem::path& path) {
    const std::string p = path.string();
    auto is = detail::open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> values;
        std::size_t pos = 0;
        bool first = true;
        while (pos <= line.size()) {
            const std::size_t comma = std::min(line.find(',', pos), line.size());
            std::string_view cell(line.data() + pos, comma - pos);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw DatasetError(p + ": line " + std::to_string(line_no) + ": bad number \"" +
                                   std::string(cell) + "\"");
            }
            if (first) {
                if (v != static_cast<double>(rows.size())) {
                    throw DatasetError(p + ": line " + std::to_string(line_no) + ": class id " +
                                       std::string(cell) + " is not the dense id " +
                                       std::to_string(rows.size()));
                }
                first = false;
            } else {
                values.push_back(v);
            }
            pos = comma + 1;
        }
        if (values.empty()) {
            throw DatasetError(p + ": line " + std::to_string(line_no) + ": no attribute values");
        }
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw DatasetError(p + ": line " + std::to_string(line_no) + ": dimension mismatch (" +
                               std::to_string(values.size()) + " vs " + std::to_string(rows.front().size()) + ")");
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw DatasetError(p + ": no attribute rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return SemanticTable(std::move(m));
}

inline nlohmann::json split_to_json(const ClassSpace& space, const SplitSpec& split) {
    return {{"seen_classes", space.seen},       {"unseen_classes", space.unseen},
            {"train_idx", split.train_idx},     {"test_seen_idx", split.test_seen_idx},
            {"test_unseen_idx", split.test_unseen_idx}, {"split_name", split.name}};
}

inline void write_split(const std::filesystem::path& path, const ClassSpace& space, const SplitSpec& split) {
    auto os = detail::open_out(path);
    os << split_to_json(space, split).dump(1) << '\n';
}

inline std::pair<ClassSpace, SplitSpec> read_split(const std::filesystem::path& path) {
    const std::string p = path.string();
    auto is = detail::open_in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw DatasetError(p + ": invalid JSON at byte " + std::to_string(e.byte));
    }
    for (const char* key : {"seen_classes", "unseen_classes", "train_idx", "test_seen_idx", "test_unseen_idx",
                            "split_name"}) {
        if (!j.contains(key)) throw DatasetError(p + ": missing key \"" + std::string(key) + "\"");
    }
    try {
        ClassSpace space{j.at("seen_classes").get<std::vector<ClassId>>(),
                         j.at("unseen_classes").get<std::vector<ClassId>>()};
        SplitSpec split{j.at("train_idx").get<std::vector<std::size_t>>(),
                        j.at("test_seen_idx").get<std::vector<std::size_t>>(),
                        j.at("test_unseen_idx").get<std::vector<std::size_t>>(),
                        j.at("split_name").get<std::string>()};
        return {std::move(space), std::move(split)};
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError(p + ": " + e.what());
    }
}

inline void write_manifest(const std::filesystem::path& path, const std::map<ClassId, std::string>& names) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, name] : names) j[std::to_string(id)] = name;
    auto os = detail::open_out(path);
    os << j.dump(1) << '\n';
}

inline std::map<ClassId, std::string> read_manifest(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    std::map<ClassId, std::string> out;
    try {
        const auto j = nlohmann::json::parse(is);
        for (const auto& [k, v] : j.items()) out[static_cast<ClassId>(std::stoul(k))] = v.get<std::string>();
    } catch (const std::exception& e) {
        throw DatasetError(path.string() + ": " + e.what());
    }
    return out;
}

struct DatasetPaths {
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path attributes;
    std::filesystem::path split;
    std::filesystem::path manifest;  // optional

    /// Conventional file names inside one directory.
    static DatasetPaths in_dir(const std::filesystem::path& dir) {
        return {dir / "features.bin", dir / "labels.bin", dir / "attributes.csv", dir / "split.json",
                dir / "manifest.json"};
    }
};

/// Loads and cross-checks a dataset; any inconsistency throws DatasetError.
inline ZslData load_dataset(const DatasetPaths& paths) {
    ZslData data;
    data.features = read_features(paths.features);
    data.labels = read_labels(paths.labels);
    data.semantics = read_attributes(paths.attributes);
    std::tie(data.space, data.split) = read_split(paths.split);
    if (!paths.manifest.empty() && std::filesystem::exists(paths.manifest)) {
        data.names = read_manifest(paths.manifest);
    }

    if (static_cast<std::size_t>(data.features.rows()) != data.labels.size()) {
        throw DatasetError(paths.labels.string() + ": dimension mismatch, " + std::to_string(data.labels.size()) +
                           " labels for " + std::to_string(data.features.rows()) + " feature rows");
    }
    const std::size_t k = data.semantics.num_classes();
    for (std::size_t r = 0; r < data.labels.size(); ++r) {
        if (data.labels[r] >= k) {
            throw DatasetError(paths.labels.string() + ": unknown class id " + std::to_string(data.labels[r]) +
                               " at row " + std::to_string(r) + " (byte offset " + std::to_string(16 + 4 * r) + ")");
        }
    }
    for (ClassId c : data.space.all()) {
        if (c >= k) {
            throw DatasetError(paths.split.string() + ": unknown class id " + std::to_string(c) +
                               " (attribute table has " + std::to_string(k) + " classes)");
        }
    }
    const auto violations = validate_split(data.space, data.split, data.labels);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << paths.split.string() << ": " << violations.size() << " split violation(s):";
        for (const auto& v : violations) msg << "\n  [" << v.kind << "] " << v.message;
        throw DatasetError(msg.str());
    }
    return data;
}

inline void write_dataset(const std::filesystem::path& dir, const ZslData& data) {
    std::filesystem::create_directories(dir);
    const auto paths = DatasetPaths::in_dir(dir);
    write_features(paths.features, data.features);
    write_labels(paths.labels, data.labels);
    write_attributes(paths.attributes, data.semantics);
    write_split(paths.split, data.space, data.split);
    if (!data.names.empty()) write_manifest(paths.manifest, data.names);
}

}  // namespace icot

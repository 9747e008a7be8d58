#pragma once

// Core zero-shot data types: class partition, semantic table, labeled and
// unlabeled feature sets, pseudo-labeled selections and split validation.

#include "icot/numeric.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace icot {

using ClassId = std::uint32_t;

/// Seen/unseen partition Y = Y^S u Y^U.
struct ClassSpace {
    std::vector<ClassId> seen;
    std::vector<ClassId> unseen;

    /// Seen then unseen, in declaration order.
    [[nodiscard]] std::vector<ClassId> all() const {
        std::vector<ClassId> out(seen);
        out.insert(out.end(), unseen.begin(), unseen.end());
        return out;
    }
    [[nodiscard]] bool is_seen(ClassId c) const {
        return std::find(seen.begin(), seen.end(), c) != seen.end();
    }
    [[nodiscard]] bool is_unseen(ClassId c) const {
        return std::find(unseen.begin(), unseen.end(), c) != unseen.end();
    }
    [[nodiscard]] bool contains(ClassId c) const { return is_seen(c) || is_unseen(c); }
};

/// Per-class attribute vectors, one row per dense class id.
class SemanticTable {
  public:
    SemanticTable() = default;
    explicit SemanticTable(Matrix attributes) : attributes_(std::move(attributes)) {
        require_finite(attributes_, "SemanticTable");
    }

    [[nodiscard]] std::size_t num_classes() const { return static_cast<std::size_t>(attributes_.rows()); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(attributes_.cols()); }
    [[nodiscard]] bool has(ClassId c) const { return c < num_classes(); }
    [[nodiscard]] const Matrix& matrix() const { return attributes_; }

    [[nodiscard]] RowVector row(ClassId c) const {
        if (!has(c)) {
            throw std::out_of_range("SemanticTable: no semantic vector for class " + std::to_string(c));
        }
        return attributes_.row(c);
    }

    /// Stacked attribute rows for `classes`, in the given order.
    [[nodiscard]] Matrix rows(std::span<const ClassId> classes) const {
        Matrix out(static_cast<Eigen::Index>(classes.size()), attributes_.cols());
        for (std::size_t i = 0; i < classes.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = row(classes[i]);
        }
        return out;
    }

  private:
    Matrix attributes_;
};

enum class Origin : std::uint8_t { SeenReal, PseudoUnseen };

struct LabeledDataset {
    Matrix features;
    std::vector<ClassId> labels;
    std::vector<Origin> origins;

    [[nodiscard]] std::size_t size() const { return labels.size(); }

    /// Distinct labels in ascending order.
    [[nodiscard]] std::vector<ClassId> classes() const {
        std::set<ClassId> s(labels.begin(), labels.end());
        return {s.begin(), s.end()};
    }

    static LabeledDataset seen_real(Matrix features, std::vector<ClassId> labels) {
        if (static_cast<std::size_t>(features.rows()) != labels.size()) {
            throw std::invalid_argument("LabeledDataset: feature rows != label count");
        }
        LabeledDataset d;
        d.origins.assign(labels.size(), Origin::SeenReal);
        d.features = std::move(features);
        d.labels = std::move(labels);
        return d;
    }
};

/// Unlabeled rows with stable ids (their row numbers in the source dataset).
struct UnlabeledPool {
    Matrix features;
    std::vector<std::size_t> ids;

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(features.rows()); }

    /// Sub-pool made of the given positional rows.
    [[nodiscard]] UnlabeledPool subset(std::span<const std::size_t> rows) const {
        UnlabeledPool out;
        out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        out.ids.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= size()) {
                throw std::out_of_range("UnlabeledPool::subset: row " + std::to_string(rows[i]) +
                                        " out of range");
            }
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
            out.ids.push_back(ids[rows[i]]);
        }
        return out;
    }
};

/// Model-assigned labels on positional pool rows; repeats allowed.
struct PseudoLabeledSet {
    std::vector<std::size_t> rows;
    std::vector<ClassId> classes;
    std::string source;
    int iteration = 0;

    [[nodiscard]] std::size_t size() const { return rows.size(); }
    bool operator==(const PseudoLabeledSet&) const = default;
};

struct SplitSpec {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_seen_idx;
    std::vector<std::size_t> test_unseen_idx;
    std::string name = "PS";
};

struct Violation {
    std::string kind;
    std::string message;
};

/// Every broken split invariant; an empty result means the split is valid.
inline std::vector<Violation> validate_split(const ClassSpace& space, const SplitSpec& split,
                                             std::span<const ClassId> labels) {
    std::vector<Violation> out;
    auto add = [&out](std::string kind, std::string msg) {
        out.push_back({std::move(kind), std::move(msg)});
    };

    if (space.seen.empty()) add("empty-seen", "no seen classes declared");
    if (space.unseen.empty()) add("empty-unseen", "no unseen classes declared");

    std::map<ClassId, int> count;
    for (ClassId c : space.seen) count[c] |= 1;
    for (ClassId c : space.unseen) count[c] |= 2;
    for (const auto& [c, mask] : count) {
        if (mask == 3) add("class-overlap", "class " + std::to_string(c) + " is both seen and unseen");
    }
    auto check_unique = [&](const std::vector<ClassId>& ids, const char* which) {
        std::set<ClassId> s;
        for (ClassId c : ids) {
            if (!s.insert(c).second) {
                add("duplicate-class", std::string("class ") + std::to_string(c) + " repeated in " + which);
            }
        }
    };
    check_unique(space.seen, "seen_classes");
    check_unique(space.unseen, "unseen_classes");

    std::map<std::size_t, const char*> owner;
    auto check_rows = [&](const std::vector<std::size_t>& idx, const char* which) {
        for (std::size_t r : idx) {
            if (r >= labels.size()) {
                add("row-out-of-range", std::string(which) + " row " + std::to_string(r) +
                                            " exceeds label count " + std::to_string(labels.size()));
                continue;
            }
            auto [it, inserted] = owner.emplace(r, which);
            if (!inserted) {
                add("row-overlap", "row " + std::to_string(r) + " appears in both " + it->second +
                                       " and " + which);
            }
        }
    };
    check_rows(split.train_idx, "train_idx");
    check_rows(split.test_seen_idx, "test_seen_idx");
    check_rows(split.test_unseen_idx, "test_unseen_idx");

    for (std::size_t r : split.train_idx) {
        if (r < labels.size() && !space.is_seen(labels[r])) {
            add("train-label", "train row " + std::to_string(r) + " has non-seen label " +
                                   std::to_string(labels[r]));
        }
    }
    for (std::size_t r : split.test_seen_idx) {
        if (r < labels.size() && !space.is_seen(labels[r])) {
            add("test-seen-label", "test-seen row " + std::to_string(r) + " has non-seen label " +
                                       std::to_string(labels[r]));
        }
    }
    for (std::size_t r : split.test_unseen_idx) {
        if (r < labels.size() && !space.is_unseen(labels[r])) {
            add("test-unseen-label", "test-unseen row " + std::to_string(r) +
                                         " has non-unseen label " + std::to_string(labels[r]));
        }
    }
    return out;
}

/// Seen rows followed by one row per pseudo entry (repeats duplicated).
inline LabeledDataset merge_train_set(const LabeledDataset& seen, const PseudoLabeledSet& pseudo,
                                      const UnlabeledPool& pool) {
    if (pseudo.rows.size() != pseudo.classes.size()) {
        throw std::invalid_argument("merge_train_set: pseudo rows/classes length mismatch");
    }
    LabeledDataset out;
    const auto n_seen = static_cast<Eigen::Index>(seen.size());
    const auto n_total = n_seen + static_cast<Eigen::Index>(pseudo.size());
    out.features.resize(n_total, seen.features.cols());
    if (n_seen > 0) {
        out.features.topRows(n_seen) = seen.features;
    }
    out.labels = seen.labels;
    out.origins = seen.origins;
    out.labels.reserve(static_cast<std::size_t>(n_total));
    out.origins.reserve(static_cast<std::size_t>(n_total));
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
        const std::size_t r = pseudo.rows[i];
        if (r >= pool.size()) {
            throw std::out_of_range("merge_train_set: pseudo row " + std::to_string(r) +
                                    " outside pool of " + std::to_string(pool.size()));
        }
        out.features.row(n_seen + static_cast<Eigen::Index>(i)) = pool.features.row(static_cast<Eigen::Index>(r));
        out.labels.push_back(pseudo.classes[i]);
        out.origins.push_back(Origin::PseudoUnseen);
    }
    return out;
}

/// A loaded or generated benchmark: every row, its true label, the split and
/// class metadata. Views below copy the relevant rows.
struct ZslData {
    Matrix features;
    std::vector<ClassId> labels;
    ClassSpace space;
    SemanticTable semantics;
    SplitSpec split;
    std::map<ClassId, std::string> names;

    [[nodiscard]] LabeledDataset train_set() const {
        return LabeledDataset::seen_real(gather(split.train_idx), labels_of(split.train_idx));
    }
    [[nodiscard]] UnlabeledPool unseen_pool() const { return pool_of(split.test_unseen_idx); }
    [[nodiscard]] UnlabeledPool seen_pool() const { return pool_of(split.test_seen_idx); }
    [[nodiscard]] std::vector<ClassId> unseen_truth() const { return labels_of(split.test_unseen_idx); }
    [[nodiscard]] std::vector<ClassId> seen_truth() const { return labels_of(split.test_seen_idx); }

    /// Test-seen and test-unseen rows merged in source row order.
    [[nodiscard]] std::vector<std::size_t> compound_idx() const {
        std::vector<std::size_t> idx(split.test_seen_idx);
        idx.insert(idx.end(), split.test_unseen_idx.begin(), split.test_unseen_idx.end());
        std::sort(idx.begin(), idx.end());
        return idx;
    }
    [[nodiscard]] UnlabeledPool compound_pool() const { return pool_of(compound_idx()); }
    [[nodiscard]] std::vector<ClassId> compound_truth() const { return labels_of(compound_idx()); }

    [[nodiscard]] Matrix gather(std::span<const std::size_t> idx) const {
        Matrix out(static_cast<Eigen::Index>(idx.size()), features.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
        }
        return out;
    }
    [[nodiscard]] std::vector<ClassId> labels_of(std::span<const std::size_t> idx) const {
        std::vector<ClassId> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(labels.at(i));
        return out;
    }
    [[nodiscard]] UnlabeledPool pool_of(std::span<const std::size_t> idx) const {
        return UnlabeledPool{gather(idx), {idx.begin(), idx.end()}};
    }
};

}  // namespace icot

#pragma once

#include "icot/datamodel.hpp"

#include <map>
#include <span>
#include <stdexcept>
#include <string>

namespace icot {

/// Per-class top-1 accuracy in percent. Classes without samples are absent
/// from `per_class` and excluded from `mean`.
struct ClassAccuracy {
    std::map<ClassId, double> per_class;
    double mean = 0.0;

    [[nodiscard]] bool populated() const { return !per_class.empty(); }
};

inline ClassAccuracy per_class_acc(std::span<const ClassId> preds, std::span<const ClassId> truths,
                                   std::span<const ClassId> classes) {
    if (preds.size() != truths.size()) {
        throw std::invalid_argument("per_class_acc: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(truths.size()) + " truths");
    }
    std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // correct, total
    for (ClassId c : classes) tally.emplace(c, std::pair<std::size_t, std::size_t>{0, 0});
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto it = tally.find(truths[i]);
        if (it == tally.end()) {
            throw std::invalid_argument("per_class_acc: truth class " + std::to_string(truths[i]) +
                                        " not in class list");
        }
        ++it->second.second;
        if (preds[i] == truths[i]) ++it->second.first;
    }
    ClassAccuracy out;
    double sum = 0.0;
    for (const auto& [c, ct] : tally) {
        if (ct.second == 0) continue;
        const double acc = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
        out.per_class[c] = acc;
        sum += acc;
    }
    if (!out.per_class.empty()) out.mean = sum / static_cast<double>(out.per_class.size());
    return out;
}

/// H = 2 S U / (S + U); zero when both are zero.
inline double harmonic_mean(double acc_seen, double acc_unseen) {
    const double denom = acc_seen + acc_unseen;
    return denom == 0.0 ? 0.0 : 2.0 * acc_seen * acc_unseen / denom;
}

}  // namespace icot

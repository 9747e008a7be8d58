#pragma once

// Run configuration, experiment orchestration and result artifacts.

#include "icot/cotrain.hpp"
#include "icot/gzsl.hpp"
#include "icot/io.hpp"
#include "icot/metrics.hpp"
#include "icot/oodgate.hpp"
#include "icot/synthbench.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef ICOT_VERSION
#define ICOT_VERSION "v0.1.0"
#endif

namespace icot {

inline constexpr const char* kVersion = ICOT_VERSION;

/// Invalid run configuration; raised before any computation starts.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------- learners

struct LearnerEntry {
    std::string type;  // prototype | generative | compat
    std::string tag;
    nlohmann::json params = nlohmann::json::object();

    bool operator==(const LearnerEntry&) const = default;
};

namespace config_detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& slot, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(slot);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline void positive(double v, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be > 0");
}

}  // namespace config_detail

inline PrototypeConfig prototype_config(const nlohmann::json& j, const std::string& where) {
    using namespace config_detail;
    check_keys(j, {"hidden", "epochs", "lr", "batch", "temperature", "l2", "normalize"}, where);
    PrototypeConfig c;
    take(j, "hidden", c.hidden, where);
    take(j, "epochs", c.epochs, where);
    take(j, "lr", c.lr, where);
    take(j, "batch", c.batch, where);
    take(j, "temperature", c.temperature, where);
    take(j, "l2", c.l2, where);
    take(j, "normalize", c.normalize, where);
    if (c.epochs < 0 || c.batch == 0) throw ConfigError(where + ": epochs must be >= 0 and batch >= 1");
    positive(c.lr, where + ".lr");
    if (c.l2 < 0.0) throw ConfigError(where + ".l2 must be >= 0");
    return c;
}

inline GenerativeConfig generative_config(const nlohmann::json& j, const std::string& where) {
    using namespace config_detail;
    check_keys(j, {"lambda", "n_syn", "epochs", "lr", "batch", "normalize"}, where);
    GenerativeConfig c;
    take(j, "lambda", c.lambda, where);
    take(j, "n_syn", c.n_syn, where);
    take(j, "epochs", c.epochs, where);
    take(j, "lr", c.lr, where);
    take(j, "batch", c.batch, where);
    take(j, "normalize", c.normalize, where);
    if (c.epochs < 0 || c.batch == 0) throw ConfigError(where + ": epochs must be >= 0 and batch >= 1");
    positive(c.lr, where + ".lr");
    if (c.lambda < 0.0) throw ConfigError(where + ".lambda must be >= 0");
    return c;
}

inline CompatConfig compat_config(const nlohmann::json& j, const std::string& where) {
    using namespace config_detail;
    check_keys(j, {"lambda", "normalize"}, where);
    CompatConfig c;
    take(j, "lambda", c.lambda, where);
    take(j, "normalize", c.normalize, where);
    if (c.lambda < 0.0) throw ConfigError(where + ".lambda must be >= 0");
    return c;
}

inline LearnerSpec make_learner(const LearnerEntry& e) {
    const std::string where = "learners[" + e.tag + "]";
    if (e.type == "prototype") return prototype_learner(e.tag, prototype_config(e.params, where));
    if (e.type == "generative") return generative_learner(e.tag, generative_config(e.params, where));
    if (e.type == "compat") return compat_learner(e.tag, compat_config(e.params, where));
    throw ConfigError(where + ": unknown learner type \"" + e.type + "\" (expected prototype|generative|compat)");
}

inline LearnerEntry retagged(LearnerEntry e, std::string tag) {
    e.tag = std::move(tag);
    return e;
}

/// Learner settings used with the built-in synthetic benchmark.
inline std::vector<LearnerEntry> benchmark_learners() {
    return {{"prototype", "A", {{"epochs", 5}, {"temperature", 0.0}}}, {"generative", "B", {{"lr", 1e-2}}}};
}

// ---------------------------------------------------------------- config

struct RunConfig {
    std::string name = "experiment";
    std::string pipeline;                   // zsl | gzsl | ood | ablation
    nlohmann::json dataset;                 // {"synthetic": spec | "reference"} or {"path": dir}
    std::vector<LearnerEntry> learners;
    std::size_t iterations = 8;
    ExchangeVariant exchange = ExchangeVariant::Cross;
    std::vector<std::size_t> cycle;
    double alpha = 0.5;
    std::vector<double> fusion_weights;     // more than two learners; empty = uniform
    SelectionMode mode = SelectionMode::Incremental;
    bool warm_start = false;
    OodMethod ood_method = OodMethod::Semantic;
    OodConfig ood;
    std::size_t iter_l = 0;                 // 0 = default L
    double gate_fnr = 0.05;
    double holdout_fraction = 0.2;
    std::string gzsl_setting = "2";         // 1 | 2 | plain
    bool gzsl_on_all_rows = false;
    std::string ablation = "alpha-sweep";   // alpha-sweep | oneoff | diversity | multi-model | ctl
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json ls = nlohmann::json::array();
        for (const auto& l : learners) ls.push_back({{"type", l.type}, {"tag", l.tag}, {"params", l.params}});
        nlohmann::json ex = {{"policy", to_string(exchange)}};
        if (!cycle.empty()) ex["order"] = cycle;
        return {{"name", name},
                {"pipeline", pipeline},
                {"dataset", dataset},
                {"learners", ls},
                {"iterations", iterations},
                {"exchange", ex},
                {"alpha", alpha},
                {"fusion_weights", fusion_weights},
                {"mode", mode == SelectionMode::Incremental ? "incremental" : "oneoff"},
                {"warm_start", warm_start},
                {"ood",
                 {{"method", to_string(ood_method)},
                  {"L", iter_l},
                  {"gate_fnr", gate_fnr},
                  {"holdout_fraction", holdout_fraction},
                  {"epochs", ood.epochs},
                  {"lr", ood.lr},
                  {"batch", ood.batch},
                  {"hidden", ood.hidden},
                  {"margin", ood.margin}}},
                {"gzsl", {{"setting", gzsl_setting}, {"train_on_all_rows", gzsl_on_all_rows}}},
                {"ablation", ablation},
                {"seed", seed},
                {"output_dir", output_dir}};
    }

    [[nodiscard]] CotrainOptions cotrain_options(std::size_t threads = 1) const {
        CotrainOptions o;
        o.iterations = iterations;
        o.policy = {exchange, cycle};
        o.fusion = learners.size() == 2 ? FusionWeights::alpha(alpha)
                   : fusion_weights.empty() ? FusionWeights::uniform(learners.size())
                                            : FusionWeights{fusion_weights};
        o.seed = seed;
        o.mode = mode;
        o.warm_start = warm_start;
        o.threads = threads;
        return o;
    }

    [[nodiscard]] GzslConfig gzsl_config(std::size_t threads = 1) const {
        GzslConfig g;
        g.cotrain = cotrain_options(threads);
        g.ood = ood;
        g.gate_fnr = gate_fnr;
        g.holdout_fraction = holdout_fraction;
        g.gzsl_on_all_rows = gzsl_on_all_rows;
        return g;
    }
};

/// Validates and normalizes a config document. Throws ConfigError.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    using namespace config_detail;
    check_keys(j,
               {"name", "pipeline", "dataset", "learners", "iterations", "exchange", "alpha", "fusion_weights", "mode",
                "warm_start", "ood", "gzsl", "ablation", "seed", "output_dir"},
               "config");
    RunConfig c;
    for (const char* key : {"pipeline", "seed", "dataset"}) {
        if (!j.contains(key)) throw ConfigError(std::string("config: missing required key \"") + key + "\"");
    }
    take(j, "name", c.name, "config");
    take(j, "pipeline", c.pipeline, "config");
    if (c.pipeline != "zsl" && c.pipeline != "gzsl" && c.pipeline != "ood" && c.pipeline != "ablation") {
        throw ConfigError("config.pipeline: \"" + c.pipeline + "\" is not one of zsl|gzsl|ood|ablation");
    }
    if (c.name.empty() || c.name.find('/') != std::string::npos || c.name == "." || c.name == "..") {
        throw ConfigError("config.name must be a non-empty plain directory name");
    }
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) {
        throw ConfigError("config.seed must be a non-negative integer");
    }
    c.seed = j.at("seed").get<std::uint64_t>();

    const auto& ds = j.at("dataset");
    check_keys(ds, {"synthetic", "path"}, "config.dataset");
    if (ds.contains("synthetic") == ds.contains("path")) {
        throw ConfigError("config.dataset: give exactly one of \"synthetic\" or \"path\"");
    }
    if (ds.contains("synthetic")) {
        const auto& s = ds.at("synthetic");
        SynthSpec spec = reference_benchmark();
        if (s.is_string()) {
            if (s.get<std::string>() != "reference") throw ConfigError("config.dataset.synthetic: unknown preset");
        } else {
            try {
                from_json(s, spec);
                spec.validate();
            } catch (const std::exception& e) {
                throw ConfigError(std::string("config.dataset.synthetic: ") + e.what());
            }
        }
        nlohmann::json sj;
        to_json(sj, spec);
        c.dataset = {{"synthetic", sj}};
    } else {
        if (!ds.at("path").is_string()) throw ConfigError("config.dataset.path must be a string");
        c.dataset = {{"path", ds.at("path")}};
    }

    if (j.contains("learners")) {
        if (!j.at("learners").is_array()) throw ConfigError("config.learners must be an array");
        for (const auto& lj : j.at("learners")) {
            check_keys(lj, {"type", "tag", "params"}, "config.learners[]");
            LearnerEntry e;
            take(lj, "type", e.type, "config.learners[]");
            take(lj, "tag", e.tag, "config.learners[]");
            if (lj.contains("params")) e.params = lj.at("params");
            if (e.tag.empty()) throw ConfigError("config.learners[]: missing tag");
            make_learner(e);  // validates hyperparameters
            c.learners.push_back(std::move(e));
        }
    } else {
        c.learners = benchmark_learners();
    }
    for (std::size_t i = 0; i < c.learners.size(); ++i) {
        for (std::size_t k = i + 1; k < c.learners.size(); ++k) {
            if (c.learners[i].tag == c.learners[k].tag) throw ConfigError("config.learners: duplicate tag " + c.learners[i].tag);
        }
    }

    take(j, "iterations", c.iterations, "config");
    if (c.iterations < 1) throw ConfigError("config.iterations must be >= 1");
    if (j.contains("exchange")) {
        const auto& ex = j.at("exchange");
        std::string policy;
        if (ex.is_string()) {
            policy = ex.get<std::string>();
        } else {
            check_keys(ex, {"policy", "order"}, "config.exchange");
            take(ex, "policy", policy, "config.exchange");
            take(ex, "order", c.cycle, "config.exchange");
        }
        try {
            c.exchange = parse_exchange_variant(policy);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config.exchange: ") + e.what());
        }
    } else if (c.learners.size() > 2) {
        c.exchange = ExchangeVariant::Cyclic;
    }
    take(j, "alpha", c.alpha, "config");
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("config.alpha must lie in [0, 1]");
    take(j, "fusion_weights", c.fusion_weights, "config");
    if (!c.fusion_weights.empty() && c.fusion_weights.size() != c.learners.size()) {
        throw ConfigError("config.fusion_weights: need one weight per learner");
    }
    for (double w : c.fusion_weights) {
        if (!(w >= 0.0)) throw ConfigError("config.fusion_weights must be >= 0");
    }
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m == "incremental") c.mode = SelectionMode::Incremental;
        else if (m == "oneoff") c.mode = SelectionMode::OneOff;
        else throw ConfigError("config.mode must be incremental|oneoff");
    }
    take(j, "warm_start", c.warm_start, "config");

    if (j.contains("ood")) {
        const auto& o = j.at("ood");
        check_keys(o, {"method", "L", "gate_fnr", "holdout_fraction", "epochs", "lr", "batch", "hidden", "margin"},
                   "config.ood");
        std::string method = to_string(c.ood_method);
        take(o, "method", method, "config.ood");
        try {
            c.ood_method = parse_ood_method(method);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config.ood: ") + e.what());
        }
        take(o, "L", c.iter_l, "config.ood");
        take(o, "gate_fnr", c.gate_fnr, "config.ood");
        take(o, "holdout_fraction", c.holdout_fraction, "config.ood");
        take(o, "epochs", c.ood.epochs, "config.ood");
        take(o, "lr", c.ood.lr, "config.ood");
        take(o, "batch", c.ood.batch, "config.ood");
        take(o, "hidden", c.ood.hidden, "config.ood");
        take(o, "margin", c.ood.margin, "config.ood");
    }
    if (!(c.gate_fnr > 0.0 && c.gate_fnr < 1.0)) throw ConfigError("config.ood.gate_fnr must lie in (0, 1)");
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) {
        throw ConfigError("config.ood.holdout_fraction must lie in (0, 1)");
    }
    if (c.ood.epochs < 0 || c.ood.batch == 0 || c.ood.hidden == 0) {
        throw ConfigError("config.ood: epochs >= 0, batch >= 1 and hidden >= 1 required");
    }
    positive(c.ood.lr, "config.ood.lr");

    if (j.contains("gzsl")) {
        const auto& g = j.at("gzsl");
        check_keys(g, {"setting", "train_on_all_rows"}, "config.gzsl");
        if (g.contains("setting")) {
            const auto& s = g.at("setting");
            c.gzsl_setting = s.is_number_integer() ? std::to_string(s.get<int>()) : s.get<std::string>();
        }
        take(g, "train_on_all_rows", c.gzsl_on_all_rows, "config.gzsl");
    }
    if (c.gzsl_setting != "1" && c.gzsl_setting != "2" && c.gzsl_setting != "plain") {
        throw ConfigError("config.gzsl.setting must be 1|2|plain");
    }
    take(j, "ablation", c.ablation, "config");
    if (c.ablation != "alpha-sweep" && c.ablation != "oneoff" && c.ablation != "diversity" &&
        c.ablation != "multi-model" && c.ablation != "ctl") {
        throw ConfigError("config.ablation must be alpha-sweep|oneoff|diversity|multi-model|ctl");
    }
    take(j, "output_dir", c.output_dir, "config");

    const bool needs_roster = c.pipeline == "zsl" || c.pipeline == "gzsl" || c.pipeline == "ablation";
    if (needs_roster && c.learners.size() < 2) throw ConfigError("config.learners: need at least 2 learners");
    if (needs_roster) {
        try {
            ExchangePolicy{c.exchange, c.cycle}.validate(c.learners.size());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config.exchange: ") + e.what());
        }
    }
    if (c.pipeline == "ablation" && c.ablation != "multi-model" && c.learners.size() != 2) {
        throw ConfigError("config: the " + c.ablation + " ablation needs exactly 2 learners");
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path.string() + ": cannot open config");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    RunConfig c = parse_run_config(j);
    if (c.dataset.contains("path")) {
        std::filesystem::path p = c.dataset.at("path").get<std::string>();
        if (p.is_relative()) c.dataset["path"] = (path.parent_path() / p).lexically_normal().string();
    }
    return c;
}

inline ZslData load_run_dataset(const RunConfig& config) {
    if (config.dataset.contains("synthetic")) {
        SynthSpec spec;
        from_json(config.dataset.at("synthetic"), spec);
        return generate(spec).data;
    }
    return load_dataset(DatasetPaths::in_dir(config.dataset.at("path").get<std::string>()));
}

// ---------------------------------------------------------------- results

struct EvalResult {
    std::string name;
    std::string pipeline;
    std::string version = kVersion;
    std::string fingerprint;
    std::uint64_t seed = 0;
    std::map<ClassId, double> per_class;  // percent
    std::optional<double> acc;            // ZSL mean per-class unseen ACC
    std::optional<double> acc_seen;       // GZSL
    std::optional<double> acc_unseen;     // GZSL
    std::optional<double> h;              // GZSL
    std::optional<double> apr_value;
    nlohmann::json details = nlohmann::json::object();
    std::vector<IterationRecord> history;

    bool operator==(const EvalResult& o) const {
        return to_json() == o.to_json();
    }

    /// Accuracies lie in [0, 100] and H matches 2SU/(S+U).
    void validate() const {
        auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
        for (const auto& [c, v] : per_class) {
            if (!in_range(v)) throw std::logic_error("EvalResult: accuracy out of range for class " + std::to_string(c));
        }
        for (const auto* v : {&acc, &acc_seen, &acc_unseen, &h}) {
            if (*v && !in_range(**v)) throw std::logic_error("EvalResult: accuracy out of range");
        }
        if (h && acc_seen && acc_unseen && std::abs(*h - harmonic_mean(*acc_seen, *acc_unseen)) > 1e-9) {
            throw std::logic_error("EvalResult: H inconsistent with S and U");
        }
    }

    [[nodiscard]] nlohmann::json to_json() const {
        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        nlohmann::json pc = nlohmann::json::object();
        for (const auto& [c, v] : per_class) pc[std::to_string(c)] = v;
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& r : history) hist.push_back(r.to_json());
        return {{"name", name},
                {"pipeline", pipeline},
                {"version", version},
                {"config_fingerprint", fingerprint},
                {"seed", seed},
                {"per_class_acc", pc},
                {"acc", opt(acc)},
                {"acc_seen", opt(acc_seen)},
                {"acc_unseen", opt(acc_unseen)},
                {"H", opt(h)},
                {"apr", opt(apr_value)},
                {"details", details},
                {"history", hist}};
    }

    static EvalResult from_json(const nlohmann::json& j) {
        auto opt = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        EvalResult r;
        r.name = j.at("name").get<std::string>();
        r.pipeline = j.at("pipeline").get<std::string>();
        r.version = j.at("version").get<std::string>();
        r.fingerprint = j.at("config_fingerprint").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [k, v] : j.at("per_class_acc").items()) {
            r.per_class[static_cast<ClassId>(std::stoul(k))] = v.get<double>();
        }
        r.acc = opt("acc");
        r.acc_seen = opt("acc_seen");
        r.acc_unseen = opt("acc_unseen");
        r.h = opt("H");
        r.apr_value = opt("apr");
        r.details = j.at("details");
        for (const auto& hj : j.at("history")) r.history.push_back(IterationRecord::from_json(hj));
        return r;
    }
};

inline std::string config_fingerprint(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.to_json().dump())));
    return buf;
}

namespace experiment_detail {

inline std::vector<ClassId> pick(const std::vector<ClassId>& v, std::span<const std::size_t> rows) {
    std::vector<ClassId> out;
    for (std::size_t r : rows) out.push_back(v.at(r));
    return out;
}

struct Context {
    const RunConfig& config;
    ZslData data;
    LabeledDataset seen;
    UnlabeledPool pool;
    std::vector<ClassId> truth;
    std::size_t threads;

    [[nodiscard]] double acc(std::span<const ClassId> preds) const {
        return per_class_acc(preds, truth, data.space.unseen).mean;
    }

    [[nodiscard]] CotrainResult zsl(const std::vector<LearnerEntry>& roster, CotrainOptions opt) const {
        std::vector<LearnerSpec> specs;
        for (const auto& e : roster) specs.push_back(make_learner(e));
        const PoolTruth pt{truth};
        return icot_zsl_run(specs, seen, pool, data.semantics, data.space, opt, &pt);
    }
};

inline EvalResult base_result(const RunConfig& config) {
    EvalResult r;
    r.name = config.name;
    r.pipeline = config.pipeline;
    r.seed = config.seed;
    r.fingerprint = config_fingerprint(config);
    return r;
}

inline double mean_pairwise_apr(const std::vector<Predictions>& preds, const Context& ctx) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t k = i + 1; k < preds.size(); ++k) {
            total += apr(preds[i].argmax(), preds[k].argmax(), ctx.truth, ctx.data.space.unseen);
            ++pairs;
        }
    }
    return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

inline EvalResult run_zsl(const Context& ctx) {
    EvalResult r = base_result(ctx.config);
    const auto run = ctx.zsl(ctx.config.learners, ctx.config.cotrain_options(ctx.threads));
    const auto table = per_class_acc(run.labels, ctx.truth, ctx.data.space.unseen);
    r.per_class = table.per_class;
    r.acc = table.mean;
    r.apr_value = mean_pairwise_apr(run.initial_predictions, ctx);
    nlohmann::json inductive = nlohmann::json::object();
    nlohmann::json final_acc = nlohmann::json::object();
    for (std::size_t i = 0; i < ctx.config.learners.size(); ++i) {
        inductive[ctx.config.learners[i].tag] = ctx.acc(run.initial_predictions[i].argmax());
        final_acc[ctx.config.learners[i].tag] = ctx.acc(run.final_predictions[i].argmax());
    }
    r.details = {{"inductive_acc", inductive}, {"final_learner_acc", final_acc}, {"pool_size", ctx.pool.size()}};
    r.history = run.history;
    return r;
}

inline EvalResult run_gzsl(const Context& ctx) {
    EvalResult r = base_result(ctx.config);
    const auto& d = ctx.data;
    const UnlabeledPool compound = d.compound_pool();
    const auto truth = d.compound_truth();
    std::vector<LearnerSpec> specs;
    for (const auto& e : ctx.config.learners) specs.push_back(make_learner(e));
    const GzslConfig gc = ctx.config.gzsl_config(ctx.threads);
    GzslPrediction pred;
    if (ctx.config.gzsl_setting == "plain") {
        const PoolTruth pt{truth};
        pred = plain_gzsl_run(specs, ctx.seen, compound, d.semantics, d.space, gc, &pt, &r.history);
    } else if (ctx.config.gzsl_setting == "1") {
        pred = two_stage_ood_run(specs, ctx.seen, d.unseen_pool(), compound, d.semantics, d.space, gc);
    } else {
        pred = two_stage_sod_run(specs, ctx.seen, compound, d.semantics, d.space, gc);
    }
    const GzslScores s = evaluate_gzsl(pred.labels, truth, d.space);
    r.acc_seen = s.seen;
    r.acc_unseen = s.unseen;
    r.h = s.h;
    std::vector<std::size_t> u_rows, s_rows;
    for (std::size_t i = 0; i < truth.size(); ++i) (d.space.is_unseen(truth[i]) ? u_rows : s_rows).push_back(i);
    for (const auto& [c, v] : per_class_acc(pick(pred.labels, u_rows), pick(truth, u_rows), d.space.unseen).per_class) {
        r.per_class[c] = v;
    }
    for (const auto& [c, v] : per_class_acc(pick(pred.labels, s_rows), pick(truth, s_rows), d.space.seen).per_class) {
        r.per_class[c] = v;
    }
    std::size_t gated_unseen = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred.routes[i] == Route::GatedUnseen && d.space.is_unseen(truth[i])) ++gated_unseen;
    }
    r.details = {{"setting", ctx.config.gzsl_setting},
                 {"compound_size", compound.size()},
                 {"gated_rows", pred.gated()},
                 {"gated_true_unseen", gated_unseen},
                 {"predictions_csv", pred.to_csv()}};
    return r;
}

inline EvalResult run_ood(const Context& ctx) {
    EvalResult r = base_result(ctx.config);
    const auto& d = ctx.data;
    const UnlabeledPool compound = d.compound_pool();
    const auto truth = d.compound_truth();
    const OodGate gate = fit_ood_gate(ctx.config.ood_method, ctx.seen, compound, d.semantics, d.space,
                                      ctx.config.seed, ctx.config.ood, ctx.config.iter_l);
    const auto scores = gate.score(compound.features);
    std::vector<double> seen_scores, unseen_scores;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        (d.space.is_unseen(truth[i]) ? unseen_scores : seen_scores).push_back(scores[i]);
    }
    const OodCurve curve = tnr_at_fnr(seen_scores, unseen_scores);
    r.details = ood_summary(gate, curve);
    r.details["compound_size"] = compound.size();
    return r;
}

inline nlohmann::json framework_row(const std::string& framework, const std::string& exchange, double apr_value,
                                    double acc) {
    return {{"framework", framework}, {"exchange", exchange}, {"apr", apr_value}, {"acc", acc}};
}

inline EvalResult run_ablation(const Context& ctx) {
    EvalResult r = base_result(ctx.config);
    const auto& cfg = ctx.config;
    const CotrainOptions base = cfg.cotrain_options(ctx.threads);
    nlohmann::json rows = nlohmann::json::array();
    const auto& roster = cfg.learners;

    if (cfg.ablation == "alpha-sweep") {
        for (double a : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0}) {
            CotrainOptions o = base;
            o.fusion = FusionWeights::alpha(a);
            const double acc = ctx.acc(ctx.zsl(roster, o).labels);
            rows.push_back({{"alpha", a}, {"acc", acc}});
            if (a == cfg.alpha) r.acc = acc;
        }
    } else if (cfg.ablation == "oneoff") {
        for (SelectionMode m : {SelectionMode::Incremental, SelectionMode::OneOff}) {
            CotrainOptions o = base;
            o.mode = m;
            const double acc = ctx.acc(ctx.zsl(roster, o).labels);
            rows.push_back({{"mode", m == SelectionMode::Incremental ? "incremental" : "oneoff"}, {"acc", acc}});
            if (m == cfg.mode) r.acc = acc;
        }
    } else if (cfg.ablation == "diversity") {
        const auto& a = roster[0];
        const auto& b = roster[1];
        const std::vector<std::pair<std::string, std::vector<LearnerEntry>>> frameworks{
            {a.tag + "+" + b.tag, {a, b}},
            {a.tag + "+" + a.tag, {retagged(a, a.tag + "1"), retagged(a, a.tag + "2")}},
            {b.tag + "+" + b.tag, {retagged(b, b.tag + "1"), retagged(b, b.tag + "2")}}};
        for (const auto& [label, fw] : frameworks) {
            const auto run = ctx.zsl(fw, base);
            const double acc = ctx.acc(run.labels);
            rows.push_back(framework_row(label, "cross", mean_pairwise_apr(run.initial_predictions, ctx), acc));
            if (&fw == &frameworks.front().second) {
                r.acc = acc;
                r.apr_value = rows.back().at("apr").get<double>();
            }
        }
    } else if (cfg.ablation == "ctl") {
        for (const auto& e : roster) {
            const auto run = ctx.zsl({retagged(e, e.tag + "1"), retagged(e, e.tag + "2")}, base);
            rows.push_back({{"framework", e.tag}, {"acc", ctx.acc(run.initial_predictions[0].argmax())}});
            rows.push_back({{"framework", "2" + e.tag + "+CTL"}, {"acc", ctx.acc(run.labels)}});
        }
    } else {  // multi-model
        const auto& a = roster[0];
        const auto& b = roster[1];
        const LearnerEntry c = roster.size() > 2 ? roster[2] : LearnerEntry{"compat", "C", nlohmann::json::object()};
        const std::vector<std::pair<std::string, std::vector<LearnerEntry>>> frameworks{
            {"2" + a.tag + "+" + b.tag, {retagged(a, a.tag + "1"), retagged(a, a.tag + "2"), b}},
            {a.tag + "+2" + b.tag, {a, retagged(b, b.tag + "1"), retagged(b, b.tag + "2")}},
            {a.tag + "+" + b.tag + "+" + c.tag, {a, b, c}}};
        for (const auto& [label, fw] : frameworks) {
            for (ExchangeVariant v : {ExchangeVariant::Cyclic, ExchangeVariant::Agreement}) {
                CotrainOptions o = base;
                o.policy = {v, {}};
                o.fusion = FusionWeights::uniform(3);
                const auto run = ctx.zsl(fw, o);
                // Disagreement of the added third learner with the first two.
                const auto& p = run.initial_predictions;
                const auto third = fw[1].type == fw[0].type ? 1U : 2U;
                const auto x = third == 1U ? p[1].argmax() : p[2].argmax();
                const auto first = p[0].argmax();
                const auto second = third == 1U ? p[2].argmax() : p[1].argmax();
                const double apr_x = apr_vs_pair(x, first, second, ctx.truth, ctx.data.space.unseen);
                rows.push_back(framework_row(label, to_string(v), apr_x, ctx.acc(run.labels)));
            }
        }
    }
    r.details = {{"ablation", cfg.ablation}, {"rows", rows}};
    return r;
}

inline std::string rows_to_csv(const nlohmann::json& rows) {
    if (rows.empty()) return "";
    std::vector<std::string> cols;
    for (const auto& [k, _] : rows.front().items()) cols.push_back(k);
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const auto& v = row.at(cols[i]);
            out += i ? "," : "";
            out += v.is_string() ? v.get<std::string>() : v.is_number_float() ? format_double(v.get<double>()) : v.dump();
        }
        out += "\n";
    }
    return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error(p.string() + ": cannot open for writing");
    os << text;
    if (!os) throw std::runtime_error(p.string() + ": write failed");
}

}  // namespace experiment_detail

/// Output directory for a config: $ICOT_OUT_DIR (if set) or config.output_dir, plus the name.
inline std::filesystem::path output_directory(const RunConfig& config) {
    const char* env = std::getenv("ICOT_OUT_DIR");
    const std::filesystem::path root = env != nullptr && *env != '\0' ? std::filesystem::path(env)
                                                                      : std::filesystem::path(config.output_dir);
    return root / config.name;
}

/// metrics.csv content for a result.
inline std::string metrics_csv(const EvalResult& r, const ZslData& data) {
    if (r.pipeline == "ablation") return experiment_detail::rows_to_csv(r.details.at("rows"));
    if (r.pipeline == "ood") {
        std::string out = "fnr_target,threshold,tnr\n";
        for (const auto& p : r.details.at("curve")) {
            out += format_double(p.at("fnr_target").get<double>()) + "," +
                   format_double(p.at("threshold").get<double>()) + "," + format_double(p.at("tnr").get<double>()) +
                   "\n";
        }
        return out;
    }
    std::string out = "class_id,name,split,accuracy\n";
    for (const auto& [c, v] : r.per_class) {
        const auto it = data.names.find(c);
        out += std::to_string(c) + "," + (it != data.names.end() ? it->second : "") + "," +
               (data.space.is_unseen(c) ? "unseen" : "seen") + "," + format_double(v) + "\n";
    }
    return out;
}

/// Runs the configured pipeline and writes summary.json, metrics.csv,
/// history.jsonl and config.json (plus predictions.csv for GZSL).
inline EvalResult run_experiment(const RunConfig& config, std::size_t threads = 1, bool write = true) {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    experiment_detail::Context ctx{config, load_run_dataset(config), {}, {}, {}, threads};
    ctx.seen = ctx.data.train_set();
    ctx.pool = ctx.data.unseen_pool();
    ctx.truth = ctx.data.unseen_truth();

    EvalResult r;
    if (config.pipeline == "zsl") r = experiment_detail::run_zsl(ctx);
    else if (config.pipeline == "gzsl") r = experiment_detail::run_gzsl(ctx);
    else if (config.pipeline == "ood") r = experiment_detail::run_ood(ctx);
    else r = experiment_detail::run_ablation(ctx);
    r.validate();

    if (write) {
        const auto dir = output_directory(config);
        std::filesystem::create_directories(dir);
        nlohmann::json summary = r.to_json();
        std::string predictions;
        if (summary.at("details").contains("predictions_csv")) {
            predictions = summary["details"]["predictions_csv"].get<std::string>();
            summary["details"].erase("predictions_csv");
        }
        summary["config"] = config.to_json();
        experiment_detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
        experiment_detail::write_text(dir / "config.json", config.to_json().dump(2) + "\n");
        experiment_detail::write_text(dir / "metrics.csv", metrics_csv(r, ctx.data));
        std::string hist;
        for (const auto& rec : r.history) hist += rec.to_json().dump() + "\n";
        experiment_detail::write_text(dir / "history.jsonl", hist);
        if (!predictions.empty()) experiment_detail::write_text(dir / "predictions.csv", predictions);
    }
    return r;
}

/// Human-readable rendering of a summary.json document.
inline std::string format_summary(const nlohmann::json& s) {
    auto pct = [](const nlohmann::json& v) {
        if (v.is_null()) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", v.get<double>());
        return std::string(buf);
    };
    std::ostringstream os;
    os << "experiment   " << s.at("name").get<std::string>() << "\n"
       << "pipeline     " << s.at("pipeline").get<std::string>() << "\n"
       << "version      " << s.at("version").get<std::string>() << "\n"
       << "seed         " << s.at("seed").get<std::uint64_t>() << "\n"
       << "fingerprint  " << s.at("config_fingerprint").get<std::string>() << "\n";
    const auto pipeline = s.at("pipeline").get<std::string>();
    if (pipeline == "zsl") {
        os << "fused unseen ACC  " << pct(s.at("acc")) << "\n";
        if (!s.at("apr").is_null()) os << "APR (inductive)   " << pct(s.at("apr").get<double>() * 100.0) << "%\n";
        for (const auto& [tag, v] : s.at("details").at("inductive_acc").items()) {
            os << "inductive " << tag << " ACC   " << pct(v) << "\n";
        }
    } else if (pipeline == "gzsl") {
        os << "U " << pct(s.at("acc_unseen")) << "  S " << pct(s.at("acc_seen")) << "  H " << pct(s.at("H")) << "\n";
    } else if (pipeline == "ood") {
        const auto& d = s.at("details");
        os << "method " << d.at("method").get<std::string>() << "  average TNR "
           << pct(d.at("average_tnr").get<double>() * 100.0) << "%  |simulated unseen| "
           << d.at("simulated_unseen_size").get<std::size_t>() << "\n";
    } else {
        os << "ablation " << s.at("details").at("ablation").get<std::string>() << "\n";
        for (const auto& row : s.at("details").at("rows")) {
            std::string line;
            for (const auto& [k, v] : row.items()) {
                line += k + "=" + (v.is_string() ? v.get<std::string>() : v.is_number_float() ? pct(v) : v.dump()) + "  ";
            }
            os << "  " << line << "\n";
        }
    }
    if (s.contains("history") && !s.at("history").empty()) {
        os << "iterations (fused unseen ACC):";
        for (const auto& h : s.at("history")) os << " " << pct(h.at("fused_unseen_acc"));
        os << "\n";
    }
    return os.str();
}

}  // namespace icot

// icot_cli: generate benchmarks, run experiment configs and inspect results.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include "icot/experiment.hpp"
#include "icot/selftest.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

icot::SynthSpec read_spec(const std::string& arg) {
    if (arg == "reference") return icot::reference_benchmark();
    std::ifstream is(arg);
    if (!is) throw icot::ConfigError(arg + ": cannot open spec");
    icot::SynthSpec spec = icot::reference_benchmark();
    try {
        nlohmann::json j;
        is >> j;
        from_json(j, spec);
        spec.validate();
    } catch (const std::exception& e) {
        throw icot::ConfigError(arg + ": " + e.what());
    }
    return spec;
}

int gen_data(const std::string& spec_arg, const std::string& out) {
    const icot::SynthSpec spec = read_spec(spec_arg);
    const auto gen = icot::generate(spec);
    icot::write_dataset(out, gen.data);
    nlohmann::json sj;
    to_json(sj, spec);
    std::ofstream(fs::path(out) / "spec.json") << sj.dump(2) << "\n";
    std::cout << "wrote " << gen.data.labels.size() << " rows (" << gen.data.space.seen.size() << " seen, "
              << gen.data.space.unseen.size() << " unseen classes) to " << out << "\n";
    return kOk;
}

int run(const std::string& pipeline, const std::string& config_path, std::size_t threads,
        const std::string& setting, const std::string& method, const std::string& ablation) {
    icot::RunConfig config = icot::load_run_config(config_path);
    if (config.pipeline != pipeline) {
        throw icot::ConfigError(config_path + ": pipeline is \"" + config.pipeline + "\", expected \"" + pipeline +
                                "\"");
    }
    if (!setting.empty()) {
        if (setting != "1" && setting != "2" && setting != "plain") throw icot::ConfigError("--setting must be 1|2|plain");
        config.gzsl_setting = setting;
    }
    if (!method.empty()) {
        try {
            config.ood_method = icot::parse_ood_method(method);
        } catch (const std::invalid_argument& e) {
            throw icot::ConfigError(e.what());
        }
    }
    if (!ablation.empty()) {
        nlohmann::json j = config.to_json();
        j["ablation"] = ablation;
        const auto dataset = config.dataset;
        config = icot::parse_run_config(j);
        config.dataset = dataset;
    }
    const icot::EvalResult r = icot::run_experiment(config, threads);
    nlohmann::json s = r.to_json();
    s["details"].erase("predictions_csv");
    std::cout << icot::format_summary(s) << "artifacts in " << icot::output_directory(config).string() << "\n";
    return kOk;
}

int report(const std::string& in) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "summary.json";
    std::ifstream is(p);
    if (!is) throw icot::ConfigError(p.string() + ": cannot open summary");
    nlohmann::json s;
    try {
        is >> s;
    } catch (const nlohmann::json::exception& e) {
        throw icot::ConfigError(p.string() + ": " + e.what());
    }
    std::cout << icot::format_summary(s);
    return kOk;
}

int selftest() {
    bool all = true;
    for (const auto& c : icot::run_selftest()) {
        std::cout << (c.ok ? "PASS " : "FAIL ") << c.name << "  (" << c.detail << ")\n";
        all = all && c.ok;
    }
    std::cout << (all ? "selftest passed\n" : "selftest FAILED\n");
    return all ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative co-training for zero-shot learning", "icot_cli"};
    app.set_version_flag("--version", std::string(icot::kVersion));
    app.require_subcommand(1);
    std::size_t threads = 1;
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    std::string spec_arg, out, config, setting, method, ablation, in;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic benchmark and write dataset files");
    gen->add_option("--spec", spec_arg, "Spec JSON file, or 'reference'")->required();
    gen->add_option("--out", out, "Output directory")->required();

    auto* zsl = app.add_subcommand("zsl", "Run ICoT-ZSL");
    zsl->add_option("--config", config, "Run config JSON")->required();

    auto* gzsl = app.add_subcommand("gzsl", "Run a GZSL pipeline");
    gzsl->add_option("--config", config, "Run config JSON")->required();
    gzsl->add_option("--setting", setting, "1 | 2 | plain (overrides the config)");

    auto* ood = app.add_subcommand("ood", "Fit and evaluate an OOD gate");
    ood->add_option("--config", config, "Run config JSON")->required();
    ood->add_option("--method", method, "semantic | iter | max-softmax (overrides the config)");

    auto* abl = app.add_subcommand("ablation", "Run an ablation study");
    abl->add_option("--config", config, "Run config JSON")->required();
    abl->add_option("--kind", ablation, "alpha-sweep | oneoff | diversity | multi-model | ctl");

    auto* rep = app.add_subcommand("report", "Pretty-print a result summary");
    rep->add_option("--in", in, "Result directory or summary.json")->required();

    auto* self = app.add_subcommand("selftest", "Run gradient checks and metric oracles");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kConfigError;
    }

    try {
        if (gen->parsed()) return gen_data(spec_arg, out);
        if (zsl->parsed()) return run("zsl", config, threads, "", "", "");
        if (gzsl->parsed()) return run("gzsl", config, threads, setting, "", "");
        if (ood->parsed()) return run("ood", config, threads, "", method, "");
        if (abl->parsed()) return run("ablation", config, threads, "", "", ablation);
        if (rep->parsed()) return report(in);
        if (self->parsed()) return selftest();
    } catch (const icot::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    std::cerr << app.help();
    return kConfigError;
}

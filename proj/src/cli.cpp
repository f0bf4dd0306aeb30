#include "nup/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "nup/train.hpp"
#include "nup/verify.hpp"

namespace nup {

namespace {

template <typename Scalar>
RunOutcome train_scalar(const RunConfig& run, const Dataset& ds, std::ofstream& out) {
    const MetricSink sink = [&out](const MetricRecord& rec) { out << metric_line(rec) << '\n' << std::flush; };
    return run_training<Scalar>(run, ds, sink);
}

}  // namespace

TrainResult train_to_file(const RunConfig& run, const std::string& out_path, std::ostream& err) {
    TrainResult res;
    Dataset ds;
    try {
        ds = load_dataset(run.data, run.model.m0);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        res.status = kExitUsage;
        return res;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        err << "error: cannot write '" << out_path << "'\n";
        res.status = kExitUsage;
        return res;
    }
    out << header_line(run, ds) << '\n' << std::flush;
    RunOutcome outcome;
    try {
        outcome = run.model.dtype == Dtype::f32 ? train_scalar<float>(run, ds, out) : train_scalar<double>(run, ds, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        res.status = kExitUsage;
        return res;
    }
    res.steps_completed = outcome.steps_completed;
    res.aborted = outcome.aborted;
    res.abort_step = outcome.abort_step;
    res.abort_reason = outcome.abort_reason;
    res.status = outcome.aborted ? kExitDiverged : kExitOk;
    return res;
}

int cmd_train(const std::string& config_path, const std::string& out_path, std::ostream& log, std::ostream& err) {
    RunConfig run;
    try {
        run = load_run_config(config_path);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    const TrainResult res = train_to_file(run, out_path, err);
    if (res.status == kExitDiverged)
        log << "aborted at step " << res.abort_step << ": " << res.abort_reason << '\n';
    else if (res.status == kExitOk)
        log << "completed " << res.steps_completed << " steps -> " << out_path << '\n';
    return res.status;
}

std::vector<double> parse_lr_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto first = item.find_first_not_of(" \t");
        const auto last = item.find_last_not_of(" \t");
        if (first == std::string::npos) throw ConfigError("empty entry in learning-rate list");
        item = item.substr(first, last - first + 1);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad learning rate '" + item + "'");
        }
        if (used != item.size() || !(v > 0.0) || !std::isfinite(v))
            throw ConfigError("bad learning rate '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("learning-rate list is empty");
    return out;
}

int cmd_sweep(const std::string& config_path, const std::vector<double>& lrs, const std::string& out_dir,
              std::ostream& log, std::ostream& err) {
    if (lrs.empty()) {
        err << "error: learning-rate grid is empty\n";
        return kExitUsage;
    }
    RunConfig base;
    try {
        base = load_run_config(config_path);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        err << "error: cannot create '" << out_dir << "': " << ec.message() << '\n';
        return kExitUsage;
    }
    nlohmann::ordered_json manifest;
    manifest["config"] = config_path;
    manifest["base_seed"] = base.model.seed;
    manifest["runs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < lrs.size(); ++i) {
        RunConfig run = base;
        run.model.eta = lrs[i];
        std::ostringstream name;
        name << "run_" << std::setw(2) << std::setfill('0') << i << ".jsonl";
        const auto path = (std::filesystem::path(out_dir) / name.str()).string();
        const TrainResult res = train_to_file(run, path, err);
        if (res.status == kExitUsage) return kExitUsage;
        nlohmann::ordered_json entry;
        entry["eta"] = lrs[i];
        entry["file"] = name.str();
        entry["status"] = res.aborted ? "aborted" : "completed";
        entry["abort_step"] = res.aborted ? nlohmann::ordered_json(res.abort_step) : nlohmann::ordered_json(nullptr);
        entry["steps_completed"] = res.steps_completed;
        entry["seed"] = run.model.seed;
        manifest["runs"].push_back(entry);
        log << "eta=" << lrs[i] << ' ' << (res.aborted ? "aborted at step " + std::to_string(res.abort_step) : "completed")
            << " -> " << path << '\n';
    }
    std::ofstream mf(std::filesystem::path(out_dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!mf) {
        err << "error: cannot write manifest in '" << out_dir << "'\n";
        return kExitUsage;
    }
    mf << manifest.dump(2) << '\n';
    return kExitOk;
}

int cmd_verify(const std::string& level, int trials, std::uint64_t seed, std::ostream& log, std::ostream& err,
               const std::string& table_path) {
    if (!is_suite_level(level)) {
        err << "error: unknown level '" << level << "' (expected grad|hess|tress|theorem|cumulative|all)\n";
        return kExitUsage;
    }
    if (trials < 0) {
        err << "error: trials must be >= 0\n";
        return kExitUsage;
    }
    const SuiteReport report = run_suite(level, trials, seed);
    log << report.text();
    if (!table_path.empty()) {
        std::ofstream t(table_path, std::ios::binary | std::ios::trunc);
        if (!t) {
            err << "error: cannot write '" << table_path << "'\n";
            return kExitUsage;
        }
        t << report.table();
    }
    return report.all_pass() ? kExitOk : kExitVerifyFailed;
}

int cmd_paramcount(int l, Index m, int r, Index m0, Index m_out, std::ostream& log, std::ostream& err) {
    NupConfig cfg;
    cfg.l = l;
    cfg.m = m;
    cfg.r = r;
    cfg.m0 = m0;
    cfg.m_out = m_out;
    try {
        validate(cfg);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    log << param_count(cfg) << '\n';
    return kExitOk;
}

}  // namespace nup

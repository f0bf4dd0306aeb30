// Command implementations behind the `nup` executable. Each returns the
// process exit status and writes human-readable messages to the given streams.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nup/metrics.hpp"

namespace nup {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,         // usage or configuration error
    kExitVerifyFailed = 2,  // a verification check failed
    kExitDiverged = 3,      // training aborted (train only)
};

struct TrainResult {
    int status = kExitOk;
    Index steps_completed = 0;
    bool aborted = false;
    Index abort_step = -1;
    std::string abort_reason;
};

// Runs one configuration and streams the metrics file to `out_path`, one line
// per record, flushed per line.
TrainResult train_to_file(const RunConfig& run, const std::string& out_path, std::ostream& err);

int cmd_train(const std::string& config_path, const std::string& out_path, std::ostream& log, std::ostream& err);

// One metrics file per η in `out_dir` (run_<index>.jsonl) plus manifest.json.
// Every run shares the configured seed. Divergent runs are recorded in the
// manifest and the sweep continues.
int cmd_sweep(const std::string& config_path, const std::vector<double>& lrs, const std::string& out_dir,
              std::ostream& log, std::ostream& err);

// Prints the suite report; `table_path`, when set, receives the tab-separated table.
int cmd_verify(const std::string& level, int trials, std::uint64_t seed, std::ostream& log, std::ostream& err,
               const std::string& table_path = "");

int cmd_paramcount(int l, Index m, int r, Index m0, Index m_out, std::ostream& log, std::ostream& err);

// "0.1,0.2, 1e-3" → {0.1, 0.2, 0.001}; throws ConfigError on malformed input.
std::vector<double> parse_lr_list(const std::string& text);

}  // namespace nup

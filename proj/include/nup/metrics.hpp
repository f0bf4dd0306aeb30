// Run configuration and the JSON Lines metrics stream.
//
// A metrics file starts with one header record ("record": "header") holding
// the resolved run configuration, then carries one record per training step
// with the MetricRecord field names. Values not measured at a step are null.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nup/data_io.hpp"
#include "nup/model.hpp"

namespace nup {

struct MetricRecord {
    Index step = 0;
    double minibatch_loss = 0.0;
    std::optional<double> effective_sharpness;
    std::optional<double> stability_ratio;
    std::optional<double> softrank_last_hidden;
    std::vector<double> grad_scales;
    std::vector<double> tau;
    bool aborted = false;
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | mnist
    std::string images;                // mnist only
    std::string labels;
    Index subset = 0;                  // 0 keeps everything
    int classes = 10;                  // synthetic only
    Index per_class = 100;
    Index dim = 0;                     // 0 means model.m0
    double spread = 1.0;
    double radius = 1.0;
    std::uint64_t seed = 0;
};

struct RunConfig {
    NupConfig model;
    Index steps = 100;
    Index sharpness_every = 10;  // 0 disables the sharpness diagnostic
    DataConfig data;
};

// Parses a JSON document. Unknown keys, wrong types and invalid values throw
// ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

Dataset load_dataset(const DataConfig& data, Index m0);

std::string header_line(const RunConfig& cfg, const Dataset& ds);
std::string metric_line(const MetricRecord& rec);
MetricRecord parse_metric_line(const std::string& line);

}  // namespace nup

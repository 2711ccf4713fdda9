#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/backtest.hpp"
#include "air/dataplane.hpp"
#include "air/forecasters.hpp"
#include "air/refinery.hpp"

namespace air {

// One JSON document drives every subcommand; sections are strict (unknown
// keys are rejected so typos cannot silently change an experiment).
struct RunConfig {
    // dataset: exactly one source
    bool synthetic = true;
    SyntheticSpec synth;
    struct RealPaths {
        std::filesystem::path series_csv;
        std::filesystem::path keydriver_jsonl;
        std::filesystem::path outlook_jsonl;
        std::filesystem::path descriptions_jsonl;
        std::vector<std::string> target_names;
    } real;

    ModelConfig model;  // widths/flags; channels/targets/dims derived from the dataset
    TrainConfig train;

    IsoWeek start{2022, 1};
    int years = 3;
    int max_points = 0;
    std::vector<std::string> models{"vanilla-tsmixer", "air-tsmixer"};
    std::string baseline;

    RefineryConfig refinery;
    BackendConfig backend;

    std::filesystem::path output_dir = "out";
    int workers = 0;  // 0 = min(hardware threads, 8)

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);
    int effective_workers() const;
};

// Materializes the configured dataset (generating or loading+interpolating).
BacktestDataset load_dataset(const RunConfig& cfg);

}  // namespace air

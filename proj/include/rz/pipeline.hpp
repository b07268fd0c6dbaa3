#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rz/cfe.hpp"
#include "rz/field.hpp"
#include "rz/fpca.hpp"
#include "rz/response.hpp"
#include "rz/surrogate.hpp"
#include "rz/zones.hpp"

namespace rz {

struct RunConfig {
    std::filesystem::path output_dir = "rz_out";

    // Exactly one of a synthetic spec or a (field, yield) pair.
    std::optional<SyntheticSpec> synthetic;
    std::filesystem::path field_path;
    std::filesystem::path yield_path;

    std::vector<int> hidden_layers = {128, 64};
    Activation activation = Activation::Tanh;
    TrainConfig train;
    double split_fraction = 0.8;
    std::uint64_t split_seed = 1;

    NGrid grid;
    double variance_target = kDefaultVarianceTarget;
    int k_max = kDefaultComponentCap;

    std::string zone_profile = "heterogeneous";
    int zone_count = 0;  // 0 takes the profile default
    ClusterOptions cluster;

    CfeSettings cfe;
    std::uint64_t plot_seed = 1;
    int plot_curves_per_zone = 50;
};

/// Parses a run config; relative paths resolve against the config's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);

/// Checks input paths and numeric ranges. Throws PreconditionError.
void validate(const RunConfig& config);

/// Failure of one pipeline stage.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Layer sizes for a field with n feature channels.
std::vector<int> full_layer_sizes(const std::vector<int>& hidden, int n_features);

/// Trains a fresh network: split, target scaling, input ranges, SGD.
DenseNet fit_surrogate(const FieldRaster& field, const YieldRaster& yield, const std::vector<int>& hidden,
                       Activation activation, const TrainConfig& config, double split_fraction,
                       std::uint64_t split_seed, TrainReport* report = nullptr);

/// Relevance CSV, zone map PGM/CSV and per-zone curve samples. Returns the
/// written file names (relative to `dir`).
std::vector<std::string> emit_plots(const std::filesystem::path& dir, const CurveSet& curves, const ZoneModel& zones,
                                    const FieldRaster& field, const RelevanceReport& relevance,
                                    int curves_per_zone, std::uint64_t seed);

std::string sha256_file(const std::filesystem::path& path);

struct RunSummary {
    std::map<std::string, std::string> artifacts;  // primary artifact -> sha256
    std::map<std::string, std::string> reports;    // plot/report outputs -> sha256
    std::filesystem::path manifest;
};

/// Runs every stage in order and writes manifest.json. Throws StageError.
RunSummary run_pipeline(const RunConfig& config);

/// The seven primary artifacts, in stage order.
inline const std::vector<std::string> kPrimaryArtifacts = {"field.csv",  "yield.csv", "model.json", "curves.csv",
                                                           "fpca.json",  "zones.json", "cfe.jsonl"};

}  // namespace rz

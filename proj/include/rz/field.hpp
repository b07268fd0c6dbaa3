#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rz/common.hpp"

namespace rz {

inline constexpr int kPatchSize = 5;
inline constexpr int kPatchCells = kPatchSize * kPatchSize;
inline constexpr int kPatchRadius = kPatchSize / 2;
inline constexpr double kNoData = -9999.0;

/// Default covariate order. Channel 0 is always the nitrogen rate.
inline const std::vector<std::string> kDefaultFeatureNames = {"N", "S", "E", "TPI", "A", "P", "VV", "VH"};

struct FeatureRange {
    double min = 0.0;
    double max = 0.0;

    [[nodiscard]] double span() const { return max - min; }
};

/// H x W grid of covariate channels with a validity mask. Values are stored
/// cell-major, so the channels of one cell are contiguous.
class FieldRaster {
public:
    FieldRaster() = default;

    /// `data` holds height*width*n_features values indexed (row*width + col)*n + s.
    /// Values under a false mask entry are discarded.
    FieldRaster(int height, int width, std::vector<std::string> feature_names, std::vector<double> data,
                std::vector<std::uint8_t> mask, double cell_size_m = 10.0);

    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int n_features() const { return static_cast<int>(feature_names_.size()); }
    [[nodiscard]] double cell_size_m() const { return cell_size_m_; }
    [[nodiscard]] const std::vector<std::string>& feature_names() const { return feature_names_; }
    [[nodiscard]] const std::vector<FeatureRange>& feature_ranges() const { return feature_ranges_; }

    [[nodiscard]] bool in_bounds(int row, int col) const {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }
    [[nodiscard]] bool valid(int row, int col) const {
        return in_bounds(row, col) && mask_[index(row, col)] != 0;
    }
    [[nodiscard]] bool valid(Site s) const { return valid(s.row, s.col); }

    /// Channel value of a masked-in cell.
    [[nodiscard]] double at(int row, int col, int feature) const;
    /// All channels of one cell; masked-out cells hold NaN.
    [[nodiscard]] std::span<const double> cell(int row, int col) const;

    [[nodiscard]] std::size_t valid_count() const;
    [[nodiscard]] std::vector<Site> valid_sites() const;
    [[nodiscard]] const std::vector<std::uint8_t>& mask() const { return mask_; }

private:
    [[nodiscard]] std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
    }

    int height_ = 0;
    int width_ = 0;
    double cell_size_m_ = 10.0;
    std::vector<std::string> feature_names_;
    std::vector<double> data_;
    std::vector<std::uint8_t> mask_;
    std::vector<FeatureRange> feature_ranges_;
};

/// Harvested yield (bu/ac) paired with a FieldRaster.
struct YieldRaster {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    [[nodiscard]] double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
    }
    [[nodiscard]] bool valid(int row, int col) const {
        return mask[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)] != 0;
    }
};

/// A 5x5 neighbourhood of covariates, optionally labelled with yield.
struct Patch {
    Site origin;  // top-left cell
    int n_features = 0;
    std::vector<double> cube;                 // (i*5 + j)*n + s
    std::vector<double> target;               // 25 yields, empty when unlabelled
    std::vector<std::uint8_t> target_valid;   // 25 flags, empty when unlabelled

    [[nodiscard]] Site center() const { return {origin.row + kPatchRadius, origin.col + kPatchRadius}; }
    [[nodiscard]] bool labelled() const { return !target.empty(); }
    [[nodiscard]] double& at(int i, int j, int s) {
        return cube[static_cast<std::size_t>((i * kPatchSize + j) * n_features + s)];
    }
    [[nodiscard]] double at(int i, int j, int s) const {
        return cube[static_cast<std::size_t>((i * kPatchSize + j) * n_features + s)];
    }
};

/// Patches of W_{site}: every valid patch whose extent covers the site.
struct SiteWindow {
    Site site;
    std::vector<Patch> patches;
};

// -- file I/O ---------------------------------------------------------------

FieldRaster load_field(const std::filesystem::path& path);
void save_field(const std::filesystem::path& path, const FieldRaster& field);
YieldRaster load_yield(const std::filesystem::path& path);
void save_yield(const std::filesystem::path& path, const YieldRaster& yield);

// -- synthetic fields --------------------------------------------------------

/// Sigmoid yield response of one latent class:
/// plateau / (1 + exp(-steepness * (N - midpoint))).
struct ClassResponse {
    double plateau = 0.0;
    double steepness = 0.0;
    double midpoint = 0.0;

    [[nodiscard]] double operator()(double nitrogen) const;
};

struct SyntheticSpec {
    std::uint64_t seed = 1;
    int height = 60;
    int width = 60;
    double cell_size_m = 10.0;
    /// Channel whose value decides the latent class (1 = slope).
    int driver_feature = 1;
    /// Side length, in cells, of the square plots sharing one nitrogen rate.
    int plot_size = 3;
    double n_min = 0.0;
    double n_max = 150.0;
    double noise_sd = 1.0;
    double base_yield = 30.0;
    /// Vertical yield shift per unit of normalised elevation; does not alter curve shape.
    double elevation_effect = 4.0;
    /// Driver range is split into equal thirds; the lowest third maps to the
    /// highest-responsivity class (index 2), the highest third to class 0.
    double driver_min = 0.5;
    double driver_max = 12.0;
    /// Row-dependent wobble of the band boundaries, in columns.
    double band_wobble = 3.0;
    std::array<ClassResponse, 3> response = {{
        {15.0, 0.05, 60.0},
        {35.0, 0.06, 60.0},
        {60.0, 0.08, 50.0},
    }};
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
void save_synthetic_spec(const std::filesystem::path& path, const SyntheticSpec& spec);

/// Value of the driver feature at a cell before any noise; the layout function.
double synthetic_driver_value(const SyntheticSpec& spec, int row, int col);
/// Latent class implied by a driver value.
int synthetic_class(const SyntheticSpec& spec, double driver_value);

struct SyntheticField {
    FieldRaster field;
    YieldRaster yield;
    std::vector<int> truth;  // latent class per cell, row-major; -1 when masked
};

SyntheticField generate_synthetic(const SyntheticSpec& spec);

// -- patches -----------------------------------------------------------------

/// Builds the patch with the given top-left origin. Masked-out non-centre cells
/// are filled with the midpoint of each feature's range.
Patch make_patch(const FieldRaster& field, Site origin);

/// True when the 5x5 patch at `origin` lies in bounds and its centre is masked-in.
bool patch_valid(const FieldRaster& field, Site origin);

/// One labelled patch per valid centre, row-major.
std::vector<Patch> extract_patches(const FieldRaster& field, const YieldRaster& yield);

struct PatchSplit {
    std::vector<Patch> train;
    std::vector<Patch> validation;
};

PatchSplit split_patches(std::vector<Patch> patches, double fraction, std::uint64_t seed);

/// Every valid patch whose 5x5 extent contains `site` (at most 25).
SiteWindow window9(const FieldRaster& field, Site site);

}  // namespace rz

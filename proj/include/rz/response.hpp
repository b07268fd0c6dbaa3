#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "rz/field.hpp"
#include "rz/surrogate.hpp"

namespace rz {

/// Evenly spaced admissible nitrogen rates (lbs/acre).
struct NGrid {
    double n_min = 0.0;
    double n_max = 150.0;
    int steps = 151;

    void validate() const;
    [[nodiscard]] std::vector<double> values() const;
};

struct ResponseCurve {
    Site site;
    std::vector<double> values;
    bool aligned = false;
};

/// Swept predictions of one patch, indexed (i*5 + j)*steps + t.
struct CurveCube {
    int steps = 0;
    std::vector<double> values;

    [[nodiscard]] double at(int i, int j, int t) const {
        return values[static_cast<std::size_t>((i * kPatchSize + j) * steps + t)];
    }
    [[nodiscard]] std::vector<double> curve(int i, int j) const;
};

/// Predictions for every grid value with channel 0 of all 25 cells overwritten.
CurveCube sweep_patch(const PatchRegressor& model, std::span<const double> cube, const NGrid& grid);

/// Element-wise mean, over the window's patches, of the curve at the cell
/// where each patch covers the window's site.
ResponseCurve window_curve(const PatchRegressor& model, const SiteWindow& window, const NGrid& grid);

/// window_curve over window9(field, site). Unaligned.
ResponseCurve site_curve(const PatchRegressor& model, const FieldRaster& field, Site site, const NGrid& grid);

/// Subtracts the minimum so the curve starts its range at zero.
ResponseCurve align(ResponseCurve curve);

struct CurveSet {
    std::vector<double> grid;           // nitrogen values of each sample
    std::vector<ResponseCurve> curves;  // row-major by site
    std::vector<Site> skipped;          // masked-in sites without a valid patch

    [[nodiscard]] std::size_t steps() const { return grid.size(); }
};

/// Aligned curves for every masked-in site that has at least one valid patch.
CurveSet field_curves(const PatchRegressor& model, const FieldRaster& field, const NGrid& grid);

void save_curves(const std::filesystem::path& path, const CurveSet& set);
CurveSet load_curves(const std::filesystem::path& path);

}  // namespace rz

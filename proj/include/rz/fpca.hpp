#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rz/common.hpp"
#include "rz/response.hpp"

namespace rz {

/// Functional PCA of curves sampled on a common uniform grid. Inner products
/// are plain sums over the samples, so components are orthonormal vectors.
struct FpcaModel {
    std::vector<double> grid;
    Eigen::VectorXd mean_curve;
    Eigen::MatrixXd components;      // K x steps, one eigen-curve per row
    Eigen::VectorXd eigenvalues;     // K, nonincreasing
    Eigen::VectorXd explained_ratio; // K
    double total_variance = 0.0;     // trace of the sample covariance

    [[nodiscard]] int k() const { return static_cast<int>(components.rows()); }
    [[nodiscard]] int steps() const { return static_cast<int>(mean_curve.size()); }
};

struct ScoreVector {
    Site site;
    std::vector<double> scores;
};

inline constexpr double kDefaultVarianceTarget = 0.995;
inline constexpr int kDefaultComponentCap = 3;

/// Sample covariance (1/(m-1)) of equal-length curves, one per row of `curves`.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& curves, Eigen::VectorXd* mean = nullptr);

/// Keeps the fewest leading components whose cumulative explained ratio
/// reaches `variance_target`, capped at `k_max`. A target of 1 keeps
/// min(k_max, steps) components.
FpcaModel fit_fpca(const Eigen::MatrixXd& curves, double variance_target = kDefaultVarianceTarget,
                   int k_max = kDefaultComponentCap);
FpcaModel fit_fpca(const CurveSet& set, double variance_target = kDefaultVarianceTarget,
                   int k_max = kDefaultComponentCap);

std::vector<double> transform(const FpcaModel& model, std::span<const double> curve);
ScoreVector transform(const FpcaModel& model, const ResponseCurve& curve);
std::vector<ScoreVector> transform(const FpcaModel& model, const CurveSet& set);

/// Euclidean distance between the K-dimensional scores of two curves.
double distance(const FpcaModel& model, std::span<const double> a, std::span<const double> b);

std::vector<double> reconstruct(const FpcaModel& model, std::span<const double> scores);

void save_fpca(const std::filesystem::path& path, const FpcaModel& model);
FpcaModel load_fpca(const std::filesystem::path& path);

}  // namespace rz

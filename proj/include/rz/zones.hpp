#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rz/field.hpp"
#include "rz/fpca.hpp"

namespace rz {

struct ZoneModel {
    int c = 0;
    double m = 2.0;
    std::uint64_t seed = 0;
    Eigen::MatrixXd centroids;    // c x K
    Eigen::MatrixXd memberships;  // sites x c
    std::vector<int> assignments;
    std::vector<Site> sites;      // row i of memberships belongs to sites[i]
    std::vector<double> objective_history;
    int iterations = 0;

    [[nodiscard]] int dims() const { return static_cast<int>(centroids.cols()); }
};

struct ClusterOptions {
    int c = 3;
    double m = 2.0;
    std::uint64_t seed = 1;
    int max_iter = 300;
    double tol = 1e-6;
};

/// State after each membership update: U computed from the current centroids
/// and the objective J_m(U, V).
struct ClusterIteration {
    int iteration = 0;
    const Eigen::MatrixXd& memberships;
    const Eigen::MatrixXd& centroids;
    double objective = 0.0;
};

using ClusterObserver = std::function<void(const ClusterIteration&)>;

/// Fuzzy c-means over the rows of `points` under Euclidean distance.
ZoneModel cluster(const Eigen::MatrixXd& points, const ClusterOptions& options, const ClusterObserver& observer = {});
ZoneModel cluster(const std::vector<ScoreVector>& scores, const ClusterOptions& options,
                  const ClusterObserver& observer = {});

/// Fuzzy c-means membership of one point: u_z = 1 / sum_w (d_z / d_w)^(2/(m-1)).
/// A point on a centroid belongs to it with membership 1.
std::vector<double> membership_vector(const Eigen::MatrixXd& centroids, double m, std::span<const double> point);

struct ZoneMembership {
    int zone = 0;
    std::vector<double> memberships;
};

ZoneMembership membership(const ZoneModel& model, std::span<const double> score);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

/// J_m = sum_i sum_z u_iz^m ||x_i - v_z||^2.
double fcm_objective(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                     const Eigen::MatrixXd& memberships, double m);

/// Zone id per cell, -1 outside the charted sites.
struct ZoneMap {
    int height = 0;
    int width = 0;
    std::vector<int> ids;

    [[nodiscard]] int at(int row, int col) const {
        return ids[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)];
    }
};

ZoneMap zone_map(const ZoneModel& model, int height, int width);
ZoneMap zone_map(const ZoneModel& model, const FieldRaster& field);

/// Gray level of a zone id in PGM output; -1 maps to 255.
int zone_gray_level(int zone, int zone_count);

void save_zone_map_csv(const std::filesystem::path& path, const ZoneMap& map);
void save_zone_map_pgm(const std::filesystem::path& path, const ZoneMap& map, int zone_count);

inline constexpr int kMinZones = 2;
inline constexpr int kMaxZones = 8;

/// Configured zone count: "heterogeneous" -> 4, "homogeneous" -> 3, or an
/// explicit count in [2, 8].
int zone_counts_default(const std::string& profile);
int zone_counts_default(const std::string& profile, int override_count);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

void save_zone_model(const std::filesystem::path& path, const ZoneModel& model);
ZoneModel load_zone_model(const std::filesystem::path& path);

}  // namespace rz

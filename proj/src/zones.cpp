#include "rz/zones.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rz/log.hpp"

namespace rz {

namespace {

/// Greedy farthest-point seeding from a random start. Returns false when the
/// data hold fewer than c distinct points reachable this way.
bool farthest_point_init(const Eigen::MatrixXd& points, int c, std::mt19937_64& rng, Eigen::MatrixXd& centroids) {
    const Eigen::Index n = points.rows();
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> chosen{pick(rng)};
    Eigen::VectorXd nearest = (points.rowwise() - points.row(chosen[0])).rowwise().squaredNorm();
    while (static_cast<int>(chosen.size()) < c) {
        Eigen::Index best = 0;
        const double gap = nearest.maxCoeff(&best);
        if (!(gap > 0.0)) {
            return false;
        }
        chosen.push_back(best);
        nearest = nearest.cwiseMin((points.rowwise() - points.row(best)).rowwise().squaredNorm());
    }
    centroids.resize(c, points.cols());
    for (int z = 0; z < c; ++z) {
        centroids.row(z) = points.row(chosen[static_cast<std::size_t>(z)]);
    }
    return true;
}

void update_memberships(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids, double m,
                        Eigen::MatrixXd& memberships) {
    const Eigen::Index n = points.rows();
    const Eigen::Index c = centroids.rows();
    memberships.resize(n, c);
    std::vector<double> point(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index d = 0; d < points.cols(); ++d) {
            point[static_cast<std::size_t>(d)] = points(i, d);
        }
        const auto u = membership_vector(centroids, m, point);
        for (Eigen::Index z = 0; z < c; ++z) {
            memberships(i, z) = u[static_cast<std::size_t>(z)];
        }
    }
}

Eigen::MatrixXd update_centroids(const Eigen::MatrixXd& points, const Eigen::MatrixXd& memberships, double m) {
    const Eigen::MatrixXd weights = memberships.array().pow(m).matrix();  // n x c
    Eigen::MatrixXd centroids = weights.transpose() * points;             // c x K
    const Eigen::VectorXd totals = weights.colwise().sum().transpose();
    for (Eigen::Index z = 0; z < centroids.rows(); ++z) {
        centroids.row(z) /= totals(z);
    }
    return centroids;
}

}  // namespace

int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<double> membership_vector(const Eigen::MatrixXd& centroids, double m, std::span<const double> point) {
    const auto c = static_cast<std::size_t>(centroids.rows());
    require(static_cast<Eigen::Index>(point.size()) == centroids.cols(), "point dimension does not match centroids");
    std::vector<double> sq(c);
    for (std::size_t z = 0; z < c; ++z) {
        double acc = 0.0;
        for (std::size_t d = 0; d < point.size(); ++d) {
            const double diff = point[d] - centroids(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(d));
            acc += diff * diff;
        }
        sq[z] = acc;
    }
    std::vector<double> u(c, 0.0);
    for (std::size_t z = 0; z < c; ++z) {
        if (sq[z] == 0.0) {
            u[z] = 1.0;
            return u;
        }
    }
    const double exponent = 1.0 / (m - 1.0);  // on squared distances: (d_z/d_w)^(2/(m-1))
    for (std::size_t z = 0; z < c; ++z) {
        double denom = 0.0;
        for (std::size_t w = 0; w < c; ++w) {
            denom += std::pow(sq[z] / sq[w], exponent);
        }
        u[z] = 1.0 / denom;
    }
    return u;
}

double fcm_objective(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                     const Eigen::MatrixXd& memberships, double m) {
    double j = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index z = 0; z < centroids.rows(); ++z) {
            j += std::pow(memberships(i, z), m) * (points.row(i) - centroids.row(z)).squaredNorm();
        }
    }
    return j;
}

ZoneModel cluster(const Eigen::MatrixXd& points, const ClusterOptions& options, const ClusterObserver& observer) {
    require(options.c >= 2, "fuzzy c-means needs at least two zones");
    require(points.rows() > options.c, "fuzzy c-means needs more points than zones");
    require(options.m > 1.0, "fuzzifier must exceed 1");
    require(options.max_iter >= 1, "max_iter must be positive");
    require(options.tol > 0.0, "tolerance must be positive");
    require(points.allFinite(), "score vectors must be finite");

    ZoneModel model;
    model.c = options.c;
    model.m = options.m;
    model.seed = options.seed;

    std::mt19937_64 rng(options.seed);
    bool seeded = false;
    for (int attempt = 0; attempt < 10 && !seeded; ++attempt) {
        seeded = farthest_point_init(points, options.c, rng, model.centroids);
    }
    if (!seeded) {
        throw PreconditionError(
            fmt::format("fuzzy c-means initialisation found fewer than {} distinct points after 10 attempts", options.c));
    }

    Eigen::MatrixXd u;
    double previous = std::numeric_limits<double>::infinity();
    int iteration = 0;
    for (; iteration < options.max_iter; ++iteration) {
        update_memberships(points, model.centroids, options.m, u);
        const double objective = fcm_objective(points, model.centroids, u, options.m);
        if (objective > previous * (1.0 + 1e-10) + 1e-12) {
            throw std::logic_error(fmt::format("fuzzy c-means objective increased at iteration {}: {} -> {}",
                                               iteration, previous, objective));
        }
        previous = objective;
        model.objective_history.push_back(objective);
        if (observer) {
            observer({iteration, u, model.centroids, objective});
        }
        Eigen::MatrixXd next = update_centroids(points, u, options.m);
        const double shift = (next - model.centroids).rowwise().norm().maxCoeff();
        model.centroids = std::move(next);
        if (shift < options.tol) {
            ++iteration;
            break;
        }
    }
    model.iterations = iteration;
    update_memberships(points, model.centroids, options.m, model.memberships);
    model.assignments.resize(static_cast<std::size_t>(points.rows()));
    std::vector<double> row(static_cast<std::size_t>(options.c));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (int z = 0; z < options.c; ++z) {
            row[static_cast<std::size_t>(z)] = model.memberships(i, z);
        }
        model.assignments[static_cast<std::size_t>(i)] = argmax(row);
    }
    log()->info("stage=cluster event=done zones={} points={} iterations={} objective={:.6g}", options.c,
                points.rows(), model.iterations, model.objective_history.back());
    return model;
}

ZoneModel cluster(const std::vector<ScoreVector>& scores, const ClusterOptions& options,
                  const ClusterObserver& observer) {
    require(!scores.empty(), "no score vectors to cluster");
    const auto dims = static_cast<Eigen::Index>(scores.front().scores.size());
    Eigen::MatrixXd points(static_cast<Eigen::Index>(scores.size()), dims);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        require(static_cast<Eigen::Index>(scores[i].scores.size()) == dims, "score vectors differ in length");
        for (Eigen::Index d = 0; d < dims; ++d) {
            points(static_cast<Eigen::Index>(i), d) = scores[i].scores[static_cast<std::size_t>(d)];
        }
    }
    ZoneModel model = cluster(points, options, observer);
    model.sites.reserve(scores.size());
    for (const auto& s : scores) {
        model.sites.push_back(s.site);
    }
    return model;
}

ZoneMembership membership(const ZoneModel& model, std::span<const double> score) {
    require(model.c >= 2 && model.centroids.rows() == model.c, "zone model is not fitted");
    ZoneMembership out;
    out.memberships = membership_vector(model.centroids, model.m, score);
    out.zone = argmax(out.memberships);
    return out;
}

ZoneMap zone_map(const ZoneModel& model, int height, int width) {
    require(model.sites.size() == model.assignments.size(), "zone model needs one assignment per site");
    ZoneMap map{height, width, std::vector<int>(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), -1)};
    for (std::size_t i = 0; i < model.sites.size(); ++i) {
        const Site s = model.sites[i];
        require(s.row >= 0 && s.col >= 0 && s.row < height && s.col < width, "zone site outside the map");
        map.ids[static_cast<std::size_t>(s.row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(s.col)] =
            model.assignments[i];
    }
    return map;
}

ZoneMap zone_map(const ZoneModel& model, const FieldRaster& field) {
    return zone_map(model, field.height(), field.width());
}

int zone_gray_level(int zone, int zone_count) {
    if (zone < 0) {
        return 255;
    }
    const int spread = zone_count > 1 ? 254 / (zone_count - 1) : 0;
    return zone * spread;
}

void save_zone_map_csv(const std::filesystem::path& path, const ZoneMap& map) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    for (int r = 0; r < map.height; ++r) {
        for (int c = 0; c < map.width; ++c) {
            out << (c > 0 ? "," : "") << map.at(r, c);
        }
        out << '\n';
    }
}

void save_zone_map_pgm(const std::filesystem::path& path, const ZoneMap& map, int zone_count) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    for (const int id : map.ids) {
        out.put(static_cast<char>(static_cast<unsigned char>(zone_gray_level(id, zone_count))));
    }
}

int zone_counts_default(const std::string& profile) {
    if (profile == "heterogeneous") {
        return 4;
    }
    if (profile == "homogeneous") {
        return 3;
    }
    throw PreconditionError(fmt::format("unknown field profile '{}' (use heterogeneous or homogeneous)", profile));
}

int zone_counts_default(const std::string& profile, int override_count) {
    if (override_count > 0) {
        if (override_count < kMinZones || override_count > kMaxZones) {
            throw PreconditionError(fmt::format("zone count {} outside [{}, {}]", override_count, kMinZones, kMaxZones));
        }
        return override_count;
    }
    return zone_counts_default(profile);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    require(a.size() == b.size(), "labelings differ in length");
    const auto n = static_cast<double>(a.size());
    if (a.size() < 2) {
        return 1.0;
    }
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows;
    std::map<int, double> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0;
    for (const auto& [key, count] : joint) {
        index += pairs(count);
    }
    double sum_rows = 0.0;
    for (const auto& [key, count] : rows) {
        sum_rows += pairs(count);
    }
    double sum_cols = 0.0;
    for (const auto& [key, count] : cols) {
        sum_cols += pairs(count);
    }
    const double expected = sum_rows * sum_cols / pairs(n);
    const double maximum = 0.5 * (sum_rows + sum_cols);
    if (maximum == expected) {
        return 1.0;
    }
    return (index - expected) / (maximum - expected);
}

void save_zone_model(const std::filesystem::path& path, const ZoneModel& model) {
    nlohmann::json j;
    j["c"] = model.c;
    j["m"] = model.m;
    j["seed"] = model.seed;
    j["iterations"] = model.iterations;
    j["centroids"] = nlohmann::json::array();
    for (Eigen::Index z = 0; z < model.centroids.rows(); ++z) {
        const Eigen::RowVectorXd row = model.centroids.row(z);
        j["centroids"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["objective_history"] = model.objective_history;
    j["sites"] = nlohmann::json::array();
    for (const Site s : model.sites) {
        j["sites"].push_back({s.row, s.col});
    }
    j["assignments"] = model.assignments;
    j["memberships"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < model.memberships.rows(); ++i) {
        const Eigen::RowVectorXd row = model.memberships.row(i);
        j["memberships"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump() << '\n';
}

ZoneModel load_zone_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        nlohmann::json j;
        in >> j;
        ZoneModel model;
        model.c = j.at("c").get<int>();
        model.m = j.at("m").get<double>();
        model.seed = j.value("seed", std::uint64_t{0});
        model.iterations = j.value("iterations", 0);
        const auto centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(centroids.size()) != model.c || centroids.empty()) {
            throw ParseError(fmt::format("{}: expected {} centroids", path.string(), model.c));
        }
        const auto dims = static_cast<Eigen::Index>(centroids.front().size());
        model.centroids.resize(model.c, dims);
        for (int z = 0; z < model.c; ++z) {
            if (static_cast<Eigen::Index>(centroids[static_cast<std::size_t>(z)].size()) != dims) {
                throw ParseError(fmt::format("{}: centroid {} has the wrong length", path.string(), z));
            }
            for (Eigen::Index d = 0; d < dims; ++d) {
                model.centroids(z, d) = centroids[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)];
            }
        }
        model.objective_history = j.value("objective_history", std::vector<double>{});
        if (j.contains("sites")) {
            for (const auto& s : j.at("sites")) {
                model.sites.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
            }
            model.assignments = j.at("assignments").get<std::vector<int>>();
            const auto rows = j.at("memberships").get<std::vector<std::vector<double>>>();
            model.memberships.resize(static_cast<Eigen::Index>(rows.size()), model.c);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (int z = 0; z < model.c; ++z) {
                    model.memberships(static_cast<Eigen::Index>(i), z) = rows[i].at(static_cast<std::size_t>(z));
                }
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace rz

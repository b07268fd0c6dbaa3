#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls the code under test except where a fixture needs a model.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "rz/cfe.hpp"
#include "rz/fpca.hpp"
#include "rz/response.hpp"
#include "rz/surrogate.hpp"
#include "rz/zones.hpp"

namespace rz::testing {

using Matrix = std::vector<std::vector<double>>;

struct EigenPairs {
    std::vector<double> values;        // descending
    std::vector<std::vector<double>> vectors;  // vectors[k] belongs to values[k]
};

/// Cyclic Jacobi rotations on a dense symmetric matrix.
inline EigenPairs jacobi_eigen(Matrix a) {
    const std::size_t n = a.size();
    Matrix v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        v[i][i] = 1.0;
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a[p][q] * a[p][q];
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) {
                    continue;
                }
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p];
                    const double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
    EigenPairs out;
    for (const std::size_t k : order) {
        out.values.push_back(a[k][k]);
        std::vector<double> vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            vec[i] = v[i][k];
        }
        // largest-magnitude entry positive
        std::size_t big = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (std::abs(vec[i]) > std::abs(vec[big])) {
                big = i;
            }
        }
        if (vec[big] < 0) {
            for (double& x : vec) {
                x = -x;
            }
        }
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

/// Plain loops, 1/(m-1) normalisation.
inline Matrix covariance_loops(const std::vector<std::vector<double>>& curves, std::vector<double>& mean) {
    const std::size_t m = curves.size();
    const std::size_t t = curves.front().size();
    mean.assign(t, 0.0);
    for (const auto& c : curves) {
        for (std::size_t k = 0; k < t; ++k) {
            mean[k] += c[k] / static_cast<double>(m);
        }
    }
    Matrix cov(t, std::vector<double>(t, 0.0));
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < t; ++j) {
                cov[i][j] += (c[i] - mean[i]) * (c[j] - mean[j]) / static_cast<double>(m - 1);
            }
        }
    }
    return cov;
}

/// Adjusted Rand index by counting agreeing pairs directly, O(n^2).
inline double pair_counting_ari(std::span<const int> a, std::span<const int> b) {
    const std::size_t n = a.size();
    double both = 0;     // same in a, same in b
    double only_a = 0;   // same in a, different in b
    double only_b = 0;   // different in a, same in b
    double neither = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            if (sa && sb) {
                both += 1;
            } else if (sa) {
                only_a += 1;
            } else if (sb) {
                only_b += 1;
            } else {
                neither += 1;
            }
        }
    }
    const double total = both + only_a + only_b + neither;
    const double expected = (both + only_a) * (both + only_b) / total;
    const double maximum = 0.5 * ((both + only_a) + (both + only_b));
    return (both - expected) / (maximum - expected);
}

struct Blobs {
    Eigen::MatrixXd points;
    std::vector<int> labels;
};

inline Blobs make_blobs(std::uint64_t seed, const std::vector<std::vector<double>>& centers, double sd, int per_blob) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sd);
    const auto dims = static_cast<Eigen::Index>(centers.front().size());
    Blobs b;
    b.points.resize(static_cast<Eigen::Index>(centers.size()) * per_blob, dims);
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (int i = 0; i < per_blob; ++i, ++row) {
            for (Eigen::Index d = 0; d < dims; ++d) {
                b.points(row, d) = centers[c][static_cast<std::size_t>(d)] + noise(rng);
            }
            b.labels.push_back(static_cast<int>(c));
        }
    }
    return b;
}

/// Two-channel regressor (N, x): every cell yields
/// 20 + (10 + 50 * mean_x) / (1 + exp(-0.06 (N - 60))), with mean_x the patch
/// mean of channel 1.
class ToyRegressor final : public PatchRegressor {
public:
    [[nodiscard]] int n_features() const override { return 2; }

    [[nodiscard]] std::vector<double> predict(std::span<const double> cube) const override {
        check_cube(cube);
        const double p = plateau(cube);
        std::vector<double> out(kPatchCells);
        for (int k = 0; k < kPatchCells; ++k) {
            out[static_cast<std::size_t>(k)] = 20.0 + p * sigmoid(cube[static_cast<std::size_t>(2 * k)]);
        }
        return out;
    }

    [[nodiscard]] std::vector<double> sweep_cell(std::span<const double> cube, std::span<const double> n_values,
                                                 int /*cell*/) const override {
        check_cube(cube);
        const double p = plateau(cube);
        std::vector<double> out(n_values.size());
        for (std::size_t t = 0; t < n_values.size(); ++t) {
            out[t] = 20.0 + p * sigmoid(n_values[t]);
        }
        return out;
    }

private:
    static double sigmoid(double n) { return 1.0 / (1.0 + std::exp(-0.06 * (n - 60.0))); }
    static double plateau(std::span<const double> cube) {
        double sum = 0.0;
        for (int k = 0; k < kPatchCells; ++k) {
            sum += cube[static_cast<std::size_t>(2 * k + 1)];
        }
        return 10.0 + 50.0 * sum / kPatchCells;
    }
};

/// 14x14 field of iid uniform x values with a random nitrogen channel.
inline FieldRaster toy_field(std::uint64_t seed, int size = 14) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> data;
    for (int k = 0; k < size * size; ++k) {
        data.push_back(150.0 * unit(rng));
        data.push_back(unit(rng));
    }
    return FieldRaster(size, size, {"N", "X"}, std::move(data), std::vector<std::uint8_t>(size * size, 1));
}

struct ToyWorld {
    ToyRegressor regressor;
    FieldRaster field;
    NGrid grid{0.0, 150.0, 151};
    FpcaModel fpca;
    ZoneModel zones;

    [[nodiscard]] CfeModels models() const { return {&regressor, grid, &fpca, &zones}; }
};

inline void build_toy_world(ToyWorld& w, std::uint64_t seed) {
    w.field = toy_field(seed);
    const CurveSet curves = field_curves(w.regressor, w.field, w.grid);
    w.fpca = fit_fpca(curves);
    ClusterOptions o;
    o.c = 3;
    o.seed = seed;
    w.zones = cluster(transform(w.fpca, curves), o);
}

struct Objectives {
    double g1 = 0;
    double g2 = 0;
    double g3 = 0;
};

/// Lexicographic optimum over the identity and every mask-on candidate whose
/// values lie on an evenly spaced grid of `points` values per feature.
/// Only meaningful for single-gene problems.
inline Objectives exhaustive_optimum(const CfeProblem& problem, int points) {
    Objectives best{0.0, 0.0, 0.0};
    const auto& b = problem.bounds.front();
    for (int k = 0; k < points; ++k) {
        Candidate c = identity_candidate(problem);
        c.mask[0] = 1;
        c.values[0] = k == points - 1 ? b.max : b.min + b.span() * k / (points - 1);
        evaluate(problem, c);
        const Objectives o{c.objectives[0], c.objectives[1], c.objectives[2]};
        if (std::tie(o.g1, o.g2, o.g3) < std::tie(best.g1, best.g2, best.g3)) {
            best = o;
        }
    }
    return best;
}

}  // namespace rz::testing

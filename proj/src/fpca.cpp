#include "rz/fpca.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rz/log.hpp"

namespace rz {

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& curves, Eigen::VectorXd* mean) {
    require(curves.rows() >= 2, "covariance needs at least two curves");
    const Eigen::VectorXd mu = curves.colwise().mean().transpose();
    const Eigen::MatrixXd centered = curves.rowwise() - mu.transpose();
    if (mean != nullptr) {
        *mean = mu;
    }
    return (centered.transpose() * centered) / static_cast<double>(curves.rows() - 1);
}

FpcaModel fit_fpca(const Eigen::MatrixXd& curves, double variance_target, int k_max) {
    require(curves.rows() >= 2, "fPCA needs at least two curves");
    require(curves.cols() >= 1, "fPCA needs nonempty curves");
    require(variance_target > 0.0 && variance_target <= 1.0, "variance target must lie in (0, 1]");
    require(k_max >= 1, "component cap must be at least 1");
    require(curves.allFinite(), "curves must be finite");

    FpcaModel model;
    const Eigen::MatrixXd cov = sample_covariance(curves, &model.mean_curve);
    model.total_variance = cov.trace();
    if (!(model.total_variance > 1e-24)) {
        throw PreconditionError("degenerate curve set: all curves are identical");
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("symmetric eigen-decomposition did not converge");
    }
    // Eigen returns ascending eigenvalues; reverse to descending.
    const Eigen::Index steps = cov.rows();
    Eigen::VectorXd values(steps);
    Eigen::MatrixXd vectors(steps, steps);  // one eigen-curve per row
    for (Eigen::Index k = 0; k < steps; ++k) {
        values(k) = std::max(0.0, solver.eigenvalues()(steps - 1 - k));
        Eigen::VectorXd v = solver.eigenvectors().col(steps - 1 - k);
        Eigen::Index largest = 0;
        v.cwiseAbs().maxCoeff(&largest);
        if (v(largest) < 0.0) {
            v = -v;
        }
        vectors.row(k) = v.transpose();
    }
    const double sum = values.sum();

    const int cap = static_cast<int>(std::min<Eigen::Index>(k_max, steps));
    int k = cap;
    if (variance_target < 1.0) {
        double cumulative = 0.0;
        int needed = static_cast<int>(steps);
        for (Eigen::Index i = 0; i < steps; ++i) {
            cumulative += values(i) / sum;
            if (cumulative >= variance_target) {
                needed = static_cast<int>(i + 1);
                break;
            }
        }
        if (needed > cap) {
            log()->warn("stage=fpca event=cap_applied needed={} k={} target={}", needed, cap, variance_target);
        }
        k = std::min(needed, cap);
    }

    model.components = vectors.topRows(k);
    model.eigenvalues = values.head(k);
    model.explained_ratio = values.head(k) / sum;
    log()->info("stage=fpca event=fit curves={} steps={} k={} explained={:.6f}", curves.rows(), steps, k,
                model.explained_ratio.sum());
    return model;
}

FpcaModel fit_fpca(const CurveSet& set, double variance_target, int k_max) {
    require(set.curves.size() >= 2, "fPCA needs at least two curves");
    const auto steps = static_cast<Eigen::Index>(set.steps());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(set.curves.size()), steps);
    for (std::size_t i = 0; i < set.curves.size(); ++i) {
        const auto& c = set.curves[i];
        require(static_cast<Eigen::Index>(c.values.size()) == steps, "curves must share the grid length");
        require(c.aligned, "fPCA expects aligned curves");
        m.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(c.values.data(), steps);
    }
    FpcaModel model = fit_fpca(m, variance_target, k_max);
    model.grid = set.grid;
    return model;
}

std::vector<double> transform(const FpcaModel& model, std::span<const double> curve) {
    require(static_cast<int>(curve.size()) == model.steps(),
            fmt::format("curve has {} samples, model expects {}", curve.size(), model.steps()));
    const Eigen::Map<const Eigen::VectorXd> r(curve.data(), static_cast<Eigen::Index>(curve.size()));
    const Eigen::VectorXd s = model.components * (r - model.mean_curve);
    return {s.data(), s.data() + s.size()};
}

ScoreVector transform(const FpcaModel& model, const ResponseCurve& curve) {
    return {curve.site, transform(model, std::span<const double>(curve.values))};
}

std::vector<ScoreVector> transform(const FpcaModel& model, const CurveSet& set) {
    std::vector<ScoreVector> out;
    out.reserve(set.curves.size());
    for (const auto& c : set.curves) {
        out.push_back(transform(model, c));
    }
    return out;
}

double distance(const FpcaModel& model, std::span<const double> a, std::span<const double> b) {
    const auto va = transform(model, a);
    const auto vb = transform(model, b);
    double sum = 0.0;
    for (std::size_t k = 0; k < va.size(); ++k) {
        sum += (va[k] - vb[k]) * (va[k] - vb[k]);
    }
    return std::sqrt(sum);
}

std::vector<double> reconstruct(const FpcaModel& model, std::span<const double> scores) {
    require(static_cast<int>(scores.size()) == model.k(),
            fmt::format("expected {} scores, got {}", model.k(), scores.size()));
    const Eigen::Map<const Eigen::VectorXd> s(scores.data(), static_cast<Eigen::Index>(scores.size()));
    const Eigen::VectorXd r = model.mean_curve + model.components.transpose() * s;
    return {r.data(), r.data() + r.size()};
}

void save_fpca(const std::filesystem::path& path, const FpcaModel& model) {
    nlohmann::json j;
    j["grid"] = model.grid;
    j["mean_curve"] = std::vector<double>(model.mean_curve.data(), model.mean_curve.data() + model.mean_curve.size());
    j["components"] = nlohmann::json::array();
    for (Eigen::Index k = 0; k < model.components.rows(); ++k) {
        const Eigen::RowVectorXd row = model.components.row(k);
        j["components"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["eigenvalues"] = std::vector<double>(model.eigenvalues.data(), model.eigenvalues.data() + model.eigenvalues.size());
    j["explained_ratio"] =
        std::vector<double>(model.explained_ratio.data(), model.explained_ratio.data() + model.explained_ratio.size());
    j["total_variance"] = model.total_variance;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump() << '\n';
}

FpcaModel load_fpca(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        nlohmann::json j;
        in >> j;
        FpcaModel m;
        m.grid = j.value("grid", std::vector<double>{});
        const auto mean = j.at("mean_curve").get<std::vector<double>>();
        const auto comps = j.at("components").get<std::vector<std::vector<double>>>();
        const auto values = j.at("eigenvalues").get<std::vector<double>>();
        const auto ratios = j.at("explained_ratio").get<std::vector<double>>();
        const auto steps = static_cast<Eigen::Index>(mean.size());
        const auto k = static_cast<Eigen::Index>(comps.size());
        if (values.size() != comps.size() || ratios.size() != comps.size()) {
            throw ParseError(fmt::format("{}: component count mismatch", path.string()));
        }
        m.mean_curve = Eigen::Map<const Eigen::VectorXd>(mean.data(), steps);
        m.components.resize(k, steps);
        for (Eigen::Index i = 0; i < k; ++i) {
            if (static_cast<Eigen::Index>(comps[static_cast<std::size_t>(i)].size()) != steps) {
                throw ParseError(fmt::format("{}: component {} has the wrong length", path.string(), i));
            }
            m.components.row(i) = Eigen::Map<const Eigen::RowVectorXd>(comps[static_cast<std::size_t>(i)].data(), steps);
        }
        m.eigenvalues = Eigen::Map<const Eigen::VectorXd>(values.data(), k);
        m.explained_ratio = Eigen::Map<const Eigen::VectorXd>(ratios.data(), k);
        m.total_variance = j.value("total_variance", 0.0);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace rz

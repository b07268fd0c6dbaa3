#include "rz/surrogate.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rz/log.hpp"

namespace rz {

// -- PatchRegressor --------------------------------------------------------------

void PatchRegressor::check_cube(std::span<const double> cube) const {
    if (cube.size() != static_cast<std::size_t>(kPatchCells * n_features())) {
        throw PreconditionError(fmt::format("cube has {} values, expected {} (5x5x{})", cube.size(),
                                            kPatchCells * n_features(), n_features()));
    }
}

std::vector<double> PatchRegressor::sweep_cell(std::span<const double> cube, std::span<const double> n_values,
                                               int cell) const {
    check_cube(cube);
    require(cell >= 0 && cell < kPatchCells, "output cell index out of range");
    const int n = n_features();
    std::vector<double> work(cube.begin(), cube.end());
    std::vector<double> out;
    out.reserve(n_values.size());
    for (const double value : n_values) {
        for (int k = 0; k < kPatchCells; ++k) {
            work[static_cast<std::size_t>(k * n)] = value;
        }
        out.push_back(predict(work)[static_cast<std::size_t>(cell)]);
    }
    return out;
}

std::vector<double> PatchRegressor::sweep(std::span<const double> cube, std::span<const double> n_values) const {
    check_cube(cube);
    const int n = n_features();
    const std::size_t steps = n_values.size();
    std::vector<double> work(cube.begin(), cube.end());
    std::vector<double> out(kPatchCells * steps);
    for (std::size_t t = 0; t < steps; ++t) {
        for (int k = 0; k < kPatchCells; ++k) {
            work[static_cast<std::size_t>(k * n)] = n_values[t];
        }
        const auto y = predict(work);
        for (std::size_t k = 0; k < kPatchCells; ++k) {
            out[k * steps + t] = y[k];
        }
    }
    return out;
}

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") {
        return Activation::Tanh;
    }
    if (name == "identity") {
        return Activation::Identity;
    }
    throw PreconditionError(fmt::format("unknown activation '{}'", name));
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& name) {
    if (name == "sgd") {
        return Optimizer::Sgd;
    }
    if (name == "adam") {
        return Optimizer::Adam;
    }
    throw PreconditionError(fmt::format("unknown optimizer '{}'", name));
}

// -- DenseNet --------------------------------------------------------------------

DenseNet::DenseNet(std::vector<int> layer_sizes, Activation activation)
    : sizes_(std::move(layer_sizes)), activation_(activation) {
    require(sizes_.size() >= 2, "a network needs at least an input and an output layer");
    for (const int s : sizes_) {
        require(s >= 1, "layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        weights_.emplace_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
        biases_.emplace_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
    if (sizes_.front() % kPatchCells == 0) {
        input_ranges_.assign(static_cast<std::size_t>(sizes_.front() / kPatchCells), FeatureRange{0.0, 1.0});
    }
}

void DenseNet::initialize(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
                weights_[l](r, c) = dist(rng);
            }
        }
        biases_[l].setZero();
    }
}

std::size_t DenseNet::parameter_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        count += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return count;
}

std::vector<double> DenseNet::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
                flat.push_back(weights_[l](r, c));
            }
        }
        for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
            flat.push_back(biases_[l](r));
        }
    }
    return flat;
}

void DenseNet::set_parameters(std::span<const double> flat) {
    require(flat.size() == parameter_count(), "parameter vector has the wrong length");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
                weights_[l](r, c) = flat[k++];
            }
        }
        for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
            biases_[l](r) = flat[k++];
        }
    }
}

void DenseNet::set_input_ranges(std::vector<FeatureRange> ranges) {
    require(static_cast<int>(ranges.size()) * kPatchCells == sizes_.front(),
            "input ranges must match the network's feature count");
    input_ranges_ = std::move(ranges);
}

void DenseNet::set_target_scaling(double offset, double scale) {
    require(std::isfinite(offset) && std::isfinite(scale) && scale > 0.0, "target scale must be positive");
    target_offset_ = offset;
    target_scale_ = scale;
}

namespace {

// tanh through Eigen's packet exp; libm tanh dominated sweep profiles.
// Near zero, 1 - e^{-2|x|} cancels, so a short odd series takes over.
void tanh_inplace(Eigen::MatrixXd& z) {
    auto x = z.array();
    const Eigen::ArrayXXd ax = x.abs();
    const Eigen::ArrayXXd e = (-2.0 * ax).exp();
    const Eigen::ArrayXXd far = (1.0 - e) / (1.0 + e);
    const Eigen::ArrayXXd x2 = ax.square();
    const Eigen::ArrayXXd near = ax * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
    const Eigen::ArrayXXd t = (ax < 0.02).select(near, far);
    z = (x < 0.0).select(-t, t).matrix();
}

}  // namespace

void DenseNet::activate(Eigen::MatrixXd& z) const {
    if (activation_ == Activation::Tanh) {
        tanh_inplace(z);
    }
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const {
    require(input.size() == sizes_.front(), "input length does not match the first layer");
    Eigen::MatrixXd a = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::MatrixXd z = weights_[l] * a;
        z.colwise() += biases_[l];
        if (l + 1 < weights_.size()) {
            activate(z);
        }
        a = std::move(z);
    }
    return a.col(0);
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& inputs) const {
    require(inputs.rows() == sizes_.front(), "input rows do not match the first layer");
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::MatrixXd z = weights_[l] * a;
        z.colwise() += biases_[l];
        if (l + 1 < weights_.size()) {
            activate(z);
        }
        a = std::move(z);
    }
    return a;
}

double DenseNet::loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                   const Eigen::MatrixXd& weights, std::vector<double>* gradient) const {
    require(targets.rows() == sizes_.back() && targets.cols() == inputs.cols(), "target shape mismatch");
    const bool weighted = weights.size() != 0;
    if (weighted) {
        require(weights.rows() == targets.rows() && weights.cols() == targets.cols(), "weight shape mismatch");
    }
    const std::size_t layers = weights_.size();
    std::vector<Eigen::MatrixXd> acts(layers + 1);
    acts[0] = inputs;
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = weights_[l] * acts[l];
        z.colwise() += biases_[l];
        if (l + 1 < layers) {
            activate(z);
        }
        acts[l + 1] = std::move(z);
    }
    Eigen::MatrixXd diff = acts[layers] - targets;
    double denom = 0.0;
    if (weighted) {
        diff.array() *= weights.array();
        denom = weights.sum();
    } else {
        denom = static_cast<double>(diff.size());
    }
    if (denom <= 0.0) {
        if (gradient != nullptr) {
            gradient->assign(parameter_count(), 0.0);
        }
        return 0.0;
    }
    // diff already carries one factor of the weight; weights are 0/1 in practice,
    // for general weights the loss is sum(w * e^2) / sum(w).
    const double loss = weighted ? (diff.array() * (acts[layers] - targets).array()).sum() / denom
                                 : diff.squaredNorm() / denom;
    if (gradient == nullptr) {
        return loss;
    }

    std::vector<Eigen::MatrixXd> grad_w(layers);
    std::vector<Eigen::VectorXd> grad_b(layers);
    Eigen::MatrixXd delta = (2.0 / denom) * diff;
    for (std::size_t l = layers; l-- > 0;) {
        grad_w[l] = delta * acts[l].transpose();
        grad_b[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = weights_[l].transpose() * delta;
            if (activation_ == Activation::Tanh) {
                back.array() *= 1.0 - acts[l].array().square();
            }
            delta = std::move(back);
        }
    }
    gradient->clear();
    gradient->reserve(parameter_count());
    for (std::size_t l = 0; l < layers; ++l) {
        for (Eigen::Index r = 0; r < grad_w[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < grad_w[l].cols(); ++c) {
                gradient->push_back(grad_w[l](r, c));
            }
        }
        for (Eigen::Index r = 0; r < grad_b[l].size(); ++r) {
            gradient->push_back(grad_b[l](r));
        }
    }
    return loss;
}

int DenseNet::n_features() const {
    require(sizes_.front() % kPatchCells == 0 && sizes_.back() == kPatchCells,
            "network shape is not a 5x5 patch regressor");
    return sizes_.front() / kPatchCells;
}

Eigen::VectorXd DenseNet::normalize(std::span<const double> cube) const {
    check_cube(cube);
    const int n = n_features();
    Eigen::VectorXd x(static_cast<Eigen::Index>(cube.size()));
    for (std::size_t k = 0; k < cube.size(); ++k) {
        const auto& range = input_ranges_[k % static_cast<std::size_t>(n)];
        const double span = range.span();
        x(static_cast<Eigen::Index>(k)) = span > 0.0 ? (cube[k] - range.min) / span : 0.0;
    }
    return x;
}

std::vector<double> DenseNet::predict(std::span<const double> cube) const {
    const Eigen::VectorXd y = forward(normalize(cube));
    std::vector<double> out(static_cast<std::size_t>(y.size()));
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        out[static_cast<std::size_t>(k)] = target_offset_ + target_scale_ * y(k);
    }
    return out;
}

Eigen::MatrixXd DenseNet::hidden_sweep(std::span<const double> cube, std::span<const double> n_values) const {
    Eigen::VectorXd x = normalize(cube);
    const int n = n_features();
    const auto& nrange = input_ranges_.front();
    const double span = nrange.span();
    const Eigen::Index steps = static_cast<Eigen::Index>(n_values.size());

    // The first layer is affine in the nitrogen channel: z(N) = z(0) + N' * colsum.
    Eigen::VectorXd n_column = Eigen::VectorXd::Zero(sizes_[1]);
    for (int k = 0; k < kPatchCells; ++k) {
        x(k * n) = 0.0;
        n_column += weights_[0].col(k * n);
    }
    Eigen::VectorXd base = weights_[0] * x + biases_[0];
    Eigen::MatrixXd a(sizes_[1], steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const double scaled = span > 0.0 ? (n_values[static_cast<std::size_t>(t)] - nrange.min) / span : 0.0;
        a.col(t) = base + scaled * n_column;
    }
    const std::size_t layers = weights_.size();
    if (layers == 1) {
        return a;  // linear single layer: a already holds the outputs
    }
    activate(a);
    for (std::size_t l = 1; l + 1 < layers; ++l) {
        Eigen::MatrixXd z = weights_[l] * a;
        z.colwise() += biases_[l];
        activate(z);
        a = std::move(z);
    }
    return a;
}

double DenseNet::output_cell(const Eigen::MatrixXd& hidden, int cell, Eigen::Index t) const {
    if (weights_.size() == 1) {
        return target_offset_ + target_scale_ * hidden(cell, t);
    }
    const auto& w = weights_.back();
    const double raw = w.row(cell).dot(hidden.col(t)) + biases_.back()(cell);
    return target_offset_ + target_scale_ * raw;
}

std::vector<double> DenseNet::sweep_cell(std::span<const double> cube, std::span<const double> n_values,
                                         int cell) const {
    require(cell >= 0 && cell < kPatchCells, "output cell index out of range");
    const Eigen::MatrixXd hidden = hidden_sweep(cube, n_values);
    std::vector<double> out(n_values.size());
    for (std::size_t t = 0; t < n_values.size(); ++t) {
        out[t] = output_cell(hidden, cell, static_cast<Eigen::Index>(t));
    }
    return out;
}

std::vector<double> DenseNet::sweep(std::span<const double> cube, std::span<const double> n_values) const {
    const Eigen::MatrixXd hidden = hidden_sweep(cube, n_values);
    const std::size_t steps = n_values.size();
    std::vector<double> out(kPatchCells * steps);
    for (int cell = 0; cell < kPatchCells; ++cell) {
        for (std::size_t t = 0; t < steps; ++t) {
            out[static_cast<std::size_t>(cell) * steps + t] = output_cell(hidden, cell, static_cast<Eigen::Index>(t));
        }
    }
    return out;
}

// -- training ------------------------------------------------------------------

namespace {

struct PatchMatrices {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    Eigen::MatrixXd weights;
};

PatchMatrices to_matrices(const DenseNet& net, std::span<const Patch> patches) {
    PatchMatrices m;
    const auto count = static_cast<Eigen::Index>(patches.size());
    m.inputs.resize(net.layer_sizes().front(), count);
    m.targets.resize(kPatchCells, count);
    m.weights.resize(kPatchCells, count);
    for (Eigen::Index k = 0; k < count; ++k) {
        const Patch& p = patches[static_cast<std::size_t>(k)];
        require(p.labelled(), "training patches must be labelled");
        m.inputs.col(k) = net.normalize(p.cube);
        for (int c = 0; c < kPatchCells; ++c) {
            const bool ok = p.target_valid[static_cast<std::size_t>(c)] != 0;
            m.weights(c, k) = ok ? 1.0 : 0.0;
            m.targets(c, k) = ok ? (p.target[static_cast<std::size_t>(c)] - net.target_offset()) / net.target_scale()
                                 : 0.0;
        }
    }
    return m;
}

}  // namespace

double rmse(const PatchRegressor& model, std::span<const Patch> patches) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const Patch& p : patches) {
        require(p.labelled(), "rmse needs labelled patches");
        const auto y = model.predict(p.cube);
        for (std::size_t c = 0; c < kPatchCells; ++c) {
            if (p.target_valid[c] != 0) {
                const double e = y[c] - p.target[c];
                sum += e * e;
                ++count;
            }
        }
    }
    return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

std::pair<double, double> target_statistics(std::span<const Patch> patches) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t count = 0;
    for (const Patch& p : patches) {
        for (std::size_t c = 0; c < p.target.size(); ++c) {
            if (p.target_valid[c] != 0) {
                sum += p.target[c];
                sq += p.target[c] * p.target[c];
                ++count;
            }
        }
    }
    if (count == 0) {
        return {0.0, 1.0};
    }
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
    const double sd = std::sqrt(var);
    return {mean, sd > 1e-12 ? sd : 1.0};
}

TrainReport train(DenseNet& net, std::span<const Patch> train_patches, std::span<const Patch> val_patches,
                  const TrainConfig& config) {
    require(config.epochs >= 1, "epochs must be at least 1");
    require(config.learning_rate >= 0.0, "learning rate must be nonnegative");
    require(config.batch_size >= 1, "batch size must be positive");
    require(config.l2_penalty >= 0.0, "l2 penalty must be nonnegative");
    require(config.momentum >= 0.0 && config.momentum < 1.0, "momentum must lie in [0, 1)");
    require(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0,
            "Adam decay rates must lie in [0, 1)");
    require(!train_patches.empty(), "no training patches");
    for (const Patch& p : train_patches) {
        require(p.n_features == net.n_features(), "patch feature count does not match the network");
    }

    const PatchMatrices data = to_matrices(net, train_patches);
    const auto count = data.inputs.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(config.seed);

    std::vector<double> params = net.parameters();
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<double> second(config.optimizer == Optimizer::Adam ? params.size() : 0, 0.0);
    double beta1_power = 1.0;
    double beta2_power = 1.0;
    std::vector<double> grad;
    // Flat indices of weight entries, which take the L2 penalty; biases do not.
    std::vector<std::uint8_t> is_weight;
    is_weight.reserve(params.size());
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        is_weight.insert(is_weight.end(), static_cast<std::size_t>(net.weight(l).size()), 1);
        is_weight.insert(is_weight.end(), static_cast<std::size_t>(net.bias(l).size()), 0);
    }

    TrainReport report;
    const int in_rows = net.layer_sizes().front();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (Eigen::Index start = 0; start < count; start += config.batch_size) {
            const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, count - start);
            Eigen::MatrixXd x(in_rows, size);
            Eigen::MatrixXd y(kPatchCells, size);
            Eigen::MatrixXd w(kPatchCells, size);
            for (Eigen::Index k = 0; k < size; ++k) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + k)];
                x.col(k) = data.inputs.col(src);
                y.col(k) = data.targets.col(src);
                w.col(k) = data.weights.col(src);
            }
            const double loss = net.loss_and_gradient(x, y, w, &grad);
            if (!std::isfinite(loss)) {
                throw TrainingError(fmt::format("non-finite loss at epoch {} batch {} (learning rate {})", epoch + 1,
                                                batches + 1, config.learning_rate));
            }
            if (config.optimizer == Optimizer::Adam) {
                beta1_power *= config.beta1;
                beta2_power *= config.beta2;
                for (std::size_t k = 0; k < params.size(); ++k) {
                    const double g = grad[k] + (is_weight[k] != 0 ? config.l2_penalty * params[k] : 0.0);
                    velocity[k] = config.beta1 * velocity[k] + (1.0 - config.beta1) * g;
                    second[k] = config.beta2 * second[k] + (1.0 - config.beta2) * g * g;
                    const double m_hat = velocity[k] / (1.0 - beta1_power);
                    const double v_hat = second[k] / (1.0 - beta2_power);
                    params[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + 1e-8);
                }
            } else {
                for (std::size_t k = 0; k < params.size(); ++k) {
                    const double g = grad[k] + (is_weight[k] != 0 ? config.l2_penalty * params[k] : 0.0);
                    velocity[k] = config.momentum * velocity[k] - config.learning_rate * g;
                    params[k] += velocity[k];
                }
            }
            net.set_parameters(params);
            epoch_loss += loss;
            ++batches;
        }
        const double mean_loss = epoch_loss / static_cast<double>(batches);
        if (!std::isfinite(mean_loss)) {
            throw TrainingError(fmt::format("non-finite loss at epoch {}", epoch + 1));
        }
        report.loss_history.push_back(mean_loss);
    }
    report.final_train_rmse = rmse(net, train_patches);
    report.final_val_rmse = val_patches.empty() ? 0.0 : rmse(net, val_patches);
    log()->info("stage=train event=done epochs={} train_rmse={:.4f} val_rmse={:.4f}", config.epochs,
                report.final_train_rmse, report.final_val_rmse);
    return report;
}

double gradient_check(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                      double epsilon, std::uint64_t seed) {
    require(epsilon >= 1e-7 && epsilon <= 1e-3, "gradient check epsilon must lie in [1e-7, 1e-3]");
    require(static_cast<int>(input.size()) == net.layer_sizes().front(), "input length mismatch");
    require(static_cast<int>(target.size()) == net.layer_sizes().back(), "target length mismatch");
    const Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    const Eigen::MatrixXd y =
        Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
    const Eigen::MatrixXd no_weights;

    std::vector<double> analytic;
    net.loss_and_gradient(x, y, no_weights, &analytic);

    const std::size_t total = net.parameter_count();
    std::vector<std::size_t> picks(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (total > 64) {
        std::mt19937_64 rng(seed);
        std::shuffle(picks.begin(), picks.end(), rng);
        picks.resize(64);
    }

    DenseNet probe = net;
    std::vector<double> params = net.parameters();
    double worst = 0.0;
    for (const std::size_t k : picks) {
        const double saved = params[k];
        params[k] = saved + epsilon;
        probe.set_parameters(params);
        const double plus = probe.loss_and_gradient(x, y, no_weights, nullptr);
        params[k] = saved - epsilon;
        probe.set_parameters(params);
        const double minus = probe.loss_and_gradient(x, y, no_weights, nullptr);
        params[k] = saved;
        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double scale = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / scale);
    }
    return worst;
}

// -- serialization ---------------------------------------------------------------

void save_model(const std::filesystem::path& path, const DenseNet& net) {
    nlohmann::json j;
    j["type"] = "dense";
    j["layer_sizes"] = net.sizes_;
    j["activation"] = to_string(net.activation_);
    j["seed"] = net.seed_;
    j["target_offset"] = net.target_offset_;
    j["target_scale"] = net.target_scale_;
    for (const auto& r : net.input_ranges_) {
        j["input_min"].push_back(r.min);
        j["input_max"].push_back(r.max);
    }
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(net.weights_[l].size()));
        for (Eigen::Index r = 0; r < net.weights_[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < net.weights_[l].cols(); ++c) {
                w.push_back(net.weights_[l](r, c));
            }
        }
        j["weights"].push_back(w);
        j["biases"].push_back(std::vector<double>(net.biases_[l].data(), net.biases_[l].data() + net.biases_[l].size()));
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump() << '\n';
}

DenseNet load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        nlohmann::json j;
        in >> j;
        if (j.value("type", std::string{}) != "dense") {
            throw ParseError(fmt::format("{}: unsupported model type", path.string()));
        }
        DenseNet net(j.at("layer_sizes").get<std::vector<int>>(),
                     activation_from_string(j.value("activation", std::string{"tanh"})));
        net.seed_ = j.value("seed", std::uint64_t{0});
        const auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
        const auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
        if (weights.size() != net.weights_.size() || biases.size() != net.biases_.size()) {
            throw ParseError(fmt::format("{}: layer count mismatch", path.string()));
        }
        for (std::size_t l = 0; l < weights.size(); ++l) {
            auto& w = net.weights_[l];
            if (weights[l].size() != static_cast<std::size_t>(w.size()) ||
                biases[l].size() != static_cast<std::size_t>(net.biases_[l].size())) {
                throw ParseError(fmt::format("{}: parameter count mismatch in layer {}", path.string(), l));
            }
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) {
                    w(r, c) = weights[l][k++];
                }
            }
            for (std::size_t r = 0; r < biases[l].size(); ++r) {
                net.biases_[l](static_cast<Eigen::Index>(r)) = biases[l][r];
            }
        }
        if (j.contains("input_min")) {
            const auto lo = j.at("input_min").get<std::vector<double>>();
            const auto hi = j.at("input_max").get<std::vector<double>>();
            std::vector<FeatureRange> ranges;
            for (std::size_t s = 0; s < lo.size(); ++s) {
                ranges.push_back({lo[s], hi.at(s)});
            }
            net.set_input_ranges(std::move(ranges));
        }
        net.set_target_scaling(j.value("target_offset", 0.0), j.value("target_scale", 1.0));
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace rz

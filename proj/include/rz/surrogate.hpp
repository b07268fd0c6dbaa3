#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rz/field.hpp"

namespace rz {

/// Patch regression model f: 5x5xn covariate cube -> 5x5 yield patch.
class PatchRegressor {
public:
    virtual ~PatchRegressor() = default;

    [[nodiscard]] virtual int n_features() const = 0;
    [[nodiscard]] int patch_size() const { return kPatchSize; }

    /// Predicted yields for the 25 cells, row-major. Pure.
    [[nodiscard]] virtual std::vector<double> predict(std::span<const double> cube) const = 0;

    /// Output of one cell while channel 0 of every input cell takes each value
    /// of `n_values` in turn.
    [[nodiscard]] virtual std::vector<double> sweep_cell(std::span<const double> cube,
                                                         std::span<const double> n_values, int cell) const;

    /// All 25 swept outputs, indexed cell*steps + t.
    [[nodiscard]] virtual std::vector<double> sweep(std::span<const double> cube,
                                                    std::span<const double> n_values) const;

protected:
    void check_cube(std::span<const double> cube) const;
};

enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected network. Hidden layers use `activation`, the output layer is
/// linear. As a PatchRegressor it min-max scales each input channel with the
/// stored feature ranges and maps outputs back through the target scaling.
class DenseNet final : public PatchRegressor {
public:
    /// Zero-initialised network.
    explicit DenseNet(std::vector<int> layer_sizes, Activation activation = Activation::Tanh);

    /// Glorot-uniform weights, zero biases.
    void initialize(std::uint64_t seed);

    [[nodiscard]] const std::vector<int>& layer_sizes() const { return sizes_; }
    [[nodiscard]] Activation activation() const { return activation_; }
    [[nodiscard]] std::size_t layer_count() const { return weights_.size(); }
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    /// Parameters flattened layer by layer: weights (row-major), then biases.
    [[nodiscard]] std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);

    [[nodiscard]] const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_[layer]; }
    [[nodiscard]] const Eigen::VectorXd& bias(std::size_t layer) const { return biases_[layer]; }
    Eigen::MatrixXd& weight(std::size_t layer) { return weights_[layer]; }
    Eigen::VectorXd& bias(std::size_t layer) { return biases_[layer]; }

    void set_input_ranges(std::vector<FeatureRange> ranges);
    [[nodiscard]] const std::vector<FeatureRange>& input_ranges() const { return input_ranges_; }
    void set_target_scaling(double offset, double scale);
    [[nodiscard]] double target_offset() const { return target_offset_; }
    [[nodiscard]] double target_scale() const { return target_scale_; }

    /// Raw network map on an already normalised input column.
    [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    /// Batched raw forward pass, one sample per column.
    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

    /// Weighted mean squared error of the raw forward pass and its gradient
    /// (flattened like parameters()). `weights` may be empty for all-ones.
    double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                             const Eigen::MatrixXd& weights, std::vector<double>* gradient) const;

    /// Cube -> normalised input column.
    [[nodiscard]] Eigen::VectorXd normalize(std::span<const double> cube) const;

    [[nodiscard]] int n_features() const override;
    [[nodiscard]] std::vector<double> predict(std::span<const double> cube) const override;
    [[nodiscard]] std::vector<double> sweep_cell(std::span<const double> cube, std::span<const double> n_values,
                                                 int cell) const override;
    [[nodiscard]] std::vector<double> sweep(std::span<const double> cube,
                                            std::span<const double> n_values) const override;

private:
    friend void save_model(const std::filesystem::path&, const DenseNet&);
    friend DenseNet load_model(const std::filesystem::path&);

    void activate(Eigen::MatrixXd& z) const;
    /// Last hidden activations for each swept nitrogen value (one column per value).
    [[nodiscard]] Eigen::MatrixXd hidden_sweep(std::span<const double> cube, std::span<const double> n_values) const;
    [[nodiscard]] double output_cell(const Eigen::MatrixXd& hidden, int cell, Eigen::Index t) const;

    std::vector<int> sizes_;
    Activation activation_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
    std::vector<FeatureRange> input_ranges_;
    double target_offset_ = 0.0;
    double target_scale_ = 1.0;
    std::uint64_t seed_ = 0;
};

inline const std::vector<int> kDefaultLayerSizes = {200, 128, 64, 25};

enum class Optimizer { Sgd, Adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
    double l2_penalty = 0.0;
    /// Heavy-ball momentum for Sgd; 0 is plain mini-batch SGD.
    double momentum = 0.0;
    Optimizer optimizer = Optimizer::Sgd;
    /// Adam moment decay rates.
    double beta1 = 0.9;
    double beta2 = 0.999;
};

struct TrainReport {
    double final_train_rmse = 0.0;
    double final_val_rmse = 0.0;
    std::vector<double> loss_history;  // per-epoch mean minibatch loss
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Root mean squared error, in yield units, over the valid target cells.
double rmse(const PatchRegressor& model, std::span<const Patch> patches);

/// Mini-batch SGD or Adam on the weighted MSE in scaled target space.
TrainReport train(DenseNet& net, std::span<const Patch> train_patches, std::span<const Patch> val_patches,
                  const TrainConfig& config);

/// Target scaling (mean, standard deviation) from labelled patches.
std::pair<double, double> target_statistics(std::span<const Patch> patches);

/// Backprop gradient versus central finite differences on 64 random
/// parameters (all of them when there are fewer). Returns the max relative error.
double gradient_check(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                      double epsilon, std::uint64_t seed = 0);

void save_model(const std::filesystem::path& path, const DenseNet& net);
DenseNet load_model(const std::filesystem::path& path);

}  // namespace rz

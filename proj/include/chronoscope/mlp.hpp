#pragma once

#include "chronoscope/motion.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

struct DenseLayer {
    std::size_t rows = 0;  // outputs
    std::size_t cols = 0;  // inputs
    std::vector<double> weights;  // rows x cols, row-major
    std::vector<double> biases;   // rows

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected network with tanh hidden layers and one linear output.
///
/// Inputs are standardized with a fixed per-feature affine map before the
/// first layer; the map is set from training data and never trained.
class Mlp {
public:
    Mlp() = default;
    /// layer_sizes = {in, hidden..., 1}; weights drawn Xavier-uniform from seed.
    Mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);
    explicit Mlp(std::vector<DenseLayer> layers);

    std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().cols; }
    std::vector<std::size_t> layer_sizes() const;
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    void set_input_normalization(std::vector<double> mean, std::vector<double> inv_std);
    const std::vector<double>& input_mean() const noexcept { return in_mean_; }
    const std::vector<double>& input_inv_std() const noexcept { return in_inv_std_; }
    /// Fits mean / inverse std over the rows (zero-variance features get inv_std = 1).
    void fit_input_normalization(const std::vector<std::vector<double>>& rows);

    /// Activations of every layer from one forward pass; index 0 is the
    /// normalized input.
    struct Tape {
        std::vector<std::vector<double>> activations;
    };

    double forward(std::span<const double> x) const;
    double forward(std::span<const double> x, Tape& tape) const;

    /// Adds d(output)/d(params) * upstream into grad (flat layout, see below).
    void backward(const Tape& tape, double upstream, std::vector<double>& grad) const;

    /// Flat parameter layout: per layer, weights row-major then biases.
    std::size_t parameter_count() const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);
    bool all_finite() const;

    void zero();

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<DenseLayer> layers_;
    std::vector<double> in_mean_;
    std::vector<double> in_inv_std_;
};

/// SGD with classical momentum: v <- mu * v + g; theta <- theta - lr * v.
class MomentumSgd {
public:
    MomentumSgd(double learning_rate, double momentum = 0.9) : lr_(learning_rate), momentum_(momentum) {}
    void step(Mlp& net, const std::vector<double>& grad);

private:
    double lr_;
    double momentum_;
    std::vector<double> velocity_;
};

/// Binary model container shared by the estimator ("CHSM") and the change
/// detector ("CHDM"), little-endian:
///   magic[4] version:u16
///   feature block: frames:u32 n_strides:u32 strides:u32[] n_stats:u32 stats:u8[]
///                  stat_scale:f64 n_norm:u32 mean:f64[] inv_std:f64[]
///   n_layers:u32, per layer rows:u32 cols:u32 weights:f64[rows*cols] biases:f64[rows]
///   metadata_len:u32 metadata (UTF-8 JSON)
inline constexpr std::uint16_t kModelFormatVersion = 1;

struct NetworkBundle {
    FeatureConfig features;
    Mlp net;
    nlohmann::json metadata = nlohmann::json::object();
};

std::string encode_network(const std::array<char, 4>& magic, const NetworkBundle& bundle);
NetworkBundle decode_network(const std::array<char, 4>& magic, const std::string& bytes);

}  // namespace chronoscope

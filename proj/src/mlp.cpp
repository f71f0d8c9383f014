#include "chronoscope/mlp.hpp"

#include "chronoscope/error.hpp"
#include "chronoscope/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace chronoscope {

Mlp::Mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2 || layer_sizes.back() != 1) {
        fail(ErrorKind::shape, "layer sizes must list at least input and a final output of 1");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        DenseLayer layer;
        layer.cols = layer_sizes[l];
        layer.rows = layer_sizes[l + 1];
        if (layer.cols == 0 || layer.rows == 0) {
            fail(ErrorKind::shape, "layer sizes must be positive");
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.cols + layer.rows));
        layer.weights.resize(layer.rows * layer.cols);
        for (double& w : layer.weights) {
            w = rng.uniform(-limit, limit);
        }
        layer.biases.assign(layer.rows, 0.0);
        layers_.push_back(std::move(layer));
    }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        fail(ErrorKind::shape, "network needs at least one layer");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const DenseLayer& layer = layers_[l];
        if (layer.weights.size() != layer.rows * layer.cols || layer.biases.size() != layer.rows) {
            fail(ErrorKind::shape, "layer " + std::to_string(l) + " parameter counts do not match its shape");
        }
        if (l > 0 && layer.cols != layers_[l - 1].rows) {
            fail(ErrorKind::shape, "layer " + std::to_string(l) + " input size does not chain with the previous layer");
        }
    }
    if (layers_.back().rows != 1) {
        fail(ErrorKind::shape, "final layer must have a single output");
    }
}

std::vector<std::size_t> Mlp::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers_.empty()) {
        return sizes;
    }
    sizes.push_back(layers_.front().cols);
    for (const DenseLayer& l : layers_) {
        sizes.push_back(l.rows);
    }
    return sizes;
}

void Mlp::set_input_normalization(std::vector<double> mean, std::vector<double> inv_std) {
    if (mean.size() != inv_std.size() || (!mean.empty() && mean.size() != input_size())) {
        fail(ErrorKind::shape, "input normalization does not match the network input size");
    }
    in_mean_ = std::move(mean);
    in_inv_std_ = std::move(inv_std);
}

void Mlp::fit_input_normalization(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = input_size();
    std::vector<double> mean(n, 0.0), inv(n, 1.0);
    if (!rows.empty()) {
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < n; ++i) {
                mean[i] += r.at(i);
            }
        }
        for (double& m : mean) {
            m /= static_cast<double>(rows.size());
        }
        for (std::size_t i = 0; i < n; ++i) {
            double var = 0.0;
            for (const auto& r : rows) {
                var += (r[i] - mean[i]) * (r[i] - mean[i]);
            }
            var /= static_cast<double>(rows.size());
            inv[i] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
        }
    }
    set_input_normalization(std::move(mean), std::move(inv));
}

double Mlp::forward(std::span<const double> x) const {
    Tape tape;
    return forward(x, tape);
}

double Mlp::forward(std::span<const double> x, Tape& tape) const {
    if (x.size() != input_size()) {
        fail(ErrorKind::shape, "feature length " + std::to_string(x.size()) + " does not match model input " +
                                   std::to_string(input_size()));
    }
    tape.activations.resize(layers_.size() + 1);
    std::vector<double>& in = tape.activations[0];
    in.assign(x.begin(), x.end());
    if (!in_mean_.empty()) {
        for (std::size_t i = 0; i < in.size(); ++i) {
            in[i] = (in[i] - in_mean_[i]) * in_inv_std_[i];
        }
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const DenseLayer& layer = layers_[l];
        const std::vector<double>& a = tape.activations[l];
        std::vector<double>& z = tape.activations[l + 1];
        z.resize(layer.rows);
        for (std::size_t r = 0; r < layer.rows; ++r) {
            const double* w = &layer.weights[r * layer.cols];
            double acc = layer.biases[r];
            for (std::size_t c = 0; c < layer.cols; ++c) {
                acc += w[c] * a[c];
            }
            z[r] = l + 1 < layers_.size() ? std::tanh(acc) : acc;
        }
    }
    return tape.activations.back()[0];
}

void Mlp::backward(const Tape& tape, double upstream, std::vector<double>& grad) const {
    if (grad.size() != parameter_count()) {
        grad.assign(parameter_count(), 0.0);
    }
    // offsets of each layer's block in the flat layout
    std::vector<std::size_t> offset(layers_.size());
    std::size_t pos = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        offset[l] = pos;
        pos += layers_[l].weights.size() + layers_[l].biases.size();
    }
    std::vector<double> delta{upstream};
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const DenseLayer& layer = layers_[l];
        const std::vector<double>& a = tape.activations[l];
        double* gw = &grad[offset[l]];
        double* gb = gw + layer.weights.size();
        for (std::size_t r = 0; r < layer.rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) {
                continue;
            }
            double* row = gw + r * layer.cols;
            for (std::size_t c = 0; c < layer.cols; ++c) {
                row[c] += d * a[c];
            }
            gb[r] += d;
        }
        if (l == 0) {
            break;
        }
        std::vector<double> prev(layer.cols, 0.0);
        for (std::size_t r = 0; r < layer.rows; ++r) {
            const double d = delta[r];
            const double* w = &layer.weights[r * layer.cols];
            for (std::size_t c = 0; c < layer.cols; ++c) {
                prev[c] += w[c] * d;
            }
        }
        for (std::size_t c = 0; c < layer.cols; ++c) {
            prev[c] *= 1.0 - a[c] * a[c];  // tanh'
        }
        delta = std::move(prev);
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers_) {
        n += l.weights.size() + l.biases.size();
    }
    return n;
}

std::vector<double> Mlp::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const DenseLayer& l : layers_) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.biases.begin(), l.biases.end());
    }
    return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        fail(ErrorKind::shape, "flat parameter vector has the wrong length");
    }
    std::size_t pos = 0;
    for (DenseLayer& l : layers_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.begin());
        pos += l.weights.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.biases.size(), l.biases.begin());
        pos += l.biases.size();
    }
}

bool Mlp::all_finite() const {
    for (const DenseLayer& l : layers_) {
        for (double w : l.weights) {
            if (!std::isfinite(w)) return false;
        }
        for (double b : l.biases) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

void Mlp::zero() {
    for (DenseLayer& l : layers_) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
}

void MomentumSgd::step(Mlp& net, const std::vector<double>& grad) {
    std::vector<double> params = net.parameters();
    if (grad.size() != params.size()) {
        fail(ErrorKind::shape, "gradient length does not match the parameter count");
    }
    if (velocity_.size() != params.size()) {
        velocity_.assign(params.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] + grad[i];
        params[i] -= lr_ * velocity_[i];
    }
    net.set_parameters(params);
}

// ---------------------------------------------------------------- container

namespace {

class Writer {
public:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out.append(buf, sizeof(T));
    }
    std::string out;
};

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}
    template <typename T>
    T get(const char* field) {
        if (pos_ + sizeof(T) > s_.size()) {
            fail(ErrorKind::format, std::string("model file truncated at '") + field + "'");
        }
        T v;
        std::memcpy(&v, s_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n, const char* field) {
        if (n > s_.size() - pos_) {
            fail(ErrorKind::format, std::string("model file truncated at '") + field + "'");
        }
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t remaining() const { return s_.size() - pos_; }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_network(const std::array<char, 4>& magic, const NetworkBundle& bundle) {
    Writer w;
    w.out.append(magic.data(), 4);
    w.put<std::uint16_t>(kModelFormatVersion);
    const FeatureConfig& fc = bundle.features;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(fc.frames));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(fc.strides.size()));
    for (std::size_t d : fc.strides) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(fc.stats.size()));
    for (MotionStat s : fc.stats) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s));
    }
    w.put<double>(fc.stat_scale);
    const auto& mean = bundle.net.input_mean();
    const auto& inv = bundle.net.input_inv_std();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(mean.size()));
    for (double m : mean) w.put<double>(m);
    for (double s : inv) w.put<double>(s);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(bundle.net.layers().size()));
    for (const DenseLayer& l : bundle.net.layers()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.rows));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.cols));
        for (double v : l.weights) w.put<double>(v);
        for (double v : l.biases) w.put<double>(v);
    }
    const std::string meta = bundle.metadata.dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.out += meta;
    return std::move(w.out);
}

NetworkBundle decode_network(const std::array<char, 4>& magic, const std::string& bytes) {
    Reader r(bytes);
    const std::string m = r.bytes(4, "magic");
    if (std::memcmp(m.data(), magic.data(), 4) != 0) {
        fail(ErrorKind::format, "bad magic: expected '" + std::string(magic.data(), 4) + "'");
    }
    const auto version = r.get<std::uint16_t>("version");
    if (version != kModelFormatVersion) {
        fail(ErrorKind::format, "unsupported model version " + std::to_string(version));
    }
    NetworkBundle b;
    b.features.frames = r.get<std::uint32_t>("frames");
    const auto n_strides = r.get<std::uint32_t>("n_strides");
    if (n_strides > 16) {
        fail(ErrorKind::format, "implausible stride count");
    }
    b.features.strides.clear();
    for (std::uint32_t i = 0; i < n_strides; ++i) {
        b.features.strides.push_back(r.get<std::uint32_t>("strides"));
    }
    const auto n_stats = r.get<std::uint32_t>("n_stats");
    if (n_stats > 16) {
        fail(ErrorKind::format, "implausible statistic count");
    }
    b.features.stats.clear();
    for (std::uint32_t i = 0; i < n_stats; ++i) {
        const auto s = r.get<std::uint8_t>("stats");
        if (s > static_cast<std::uint8_t>(MotionStat::changed_frac)) {
            fail(ErrorKind::format, "unknown statistic id " + std::to_string(s));
        }
        b.features.stats.push_back(static_cast<MotionStat>(s));
    }
    b.features.stat_scale = r.get<double>("stat_scale");
    b.features.validate();
    const auto n_norm = r.get<std::uint32_t>("n_norm");
    if (static_cast<std::size_t>(n_norm) * 16 > r.remaining()) {
        fail(ErrorKind::format, "model file truncated at 'normalization'");
    }
    std::vector<double> mean(n_norm), inv(n_norm);
    for (double& v : mean) v = r.get<double>("mean");
    for (double& v : inv) v = r.get<double>("inv_std");
    const auto n_layers = r.get<std::uint32_t>("n_layers");
    std::vector<DenseLayer> layers;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        DenseLayer layer;
        layer.rows = r.get<std::uint32_t>("rows");
        layer.cols = r.get<std::uint32_t>("cols");
        const std::size_t count = layer.rows * layer.cols + layer.rows;
        if (count * 8 > r.remaining()) {
            fail(ErrorKind::format, "model file truncated at 'layer " + std::to_string(l) + "'");
        }
        layer.weights.resize(layer.rows * layer.cols);
        for (double& v : layer.weights) v = r.get<double>("weights");
        layer.biases.resize(layer.rows);
        for (double& v : layer.biases) v = r.get<double>("biases");
        layers.push_back(std::move(layer));
    }
    b.net = Mlp(std::move(layers));
    b.net.set_input_normalization(std::move(mean), std::move(inv));
    const auto meta_len = r.get<std::uint32_t>("metadata_len");
    const std::string meta = r.bytes(meta_len, "metadata");
    try {
        b.metadata = meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("model metadata is not JSON: ") + e.what());
    }
    if (r.remaining() != 0) {
        fail(ErrorKind::format, "trailing bytes after model metadata");
    }
    return b;
}

}  // namespace chronoscope

#include "chronoscope/change_model.hpp"

#include "chronoscope/error.hpp"
#include "chronoscope/media_io.hpp"
#include "chronoscope/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace chronoscope {

FeatureVector detector_features(const FrameSequence& video, const FeatureConfig& config) {
    if (video.size() < 4) {
        fail(ErrorKind::insufficient_length, "detector needs at least 4 frames");
    }
    FeatureVector out = extract_features(video, config);
    const auto& m = motion_profile(video).magnitudes;
    const std::size_t n = m.size();
    const auto third_mean = [&](std::size_t b, std::size_t e) {
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            acc += m[i];
        }
        return std::max(acc / static_cast<double>(e - b), 1e-6);
    };
    const std::size_t a = n / 3;
    const std::size_t b = (2 * n) / 3;
    const double first = third_mean(0, a);
    const double middle = third_mean(a, b);
    const double last = third_mean(b, n);
    out.values.push_back(std::log(last / first));
    out.values.push_back(std::log(middle / first));
    out.values.push_back(std::log(last / middle));
    return out;
}

DetectorModel make_detector(const FeatureConfig& features, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    features.validate();
    std::vector<std::size_t> sizes{features.length() + kContrastFeatures};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    DetectorModel m;
    m.features = features;
    m.net = Mlp(sizes, seed);
    return m;
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_loss(double z, int label) {
    // softplus(z) - y*z
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - (label ? z : 0.0);
}

namespace {

double bce_impl(const Mlp& net, const std::vector<BceTerm>& terms, std::vector<double>* grad) {
    if (grad) {
        grad->assign(net.parameter_count(), 0.0);
    }
    if (terms.empty()) {
        return 0.0;
    }
    const double w = 1.0 / static_cast<double>(terms.size());
    Mlp::Tape tape;
    double loss = 0.0;
    for (const BceTerm& t : terms) {
        if (t.label != 0 && t.label != 1) {
            fail(ErrorKind::label, "labels must be 0 or 1");
        }
        const double z = net.forward(t.features, tape);
        loss += w * bce_loss(z, t.label);
        if (grad) {
            net.backward(tape, w * (sigmoid(z) - t.label), *grad);
        }
    }
    return loss;
}

}  // namespace

double bce_batch_loss(const Mlp& net, const std::vector<BceTerm>& terms) {
    return bce_impl(net, terms, nullptr);
}

double bce_batch_gradient(const Mlp& net, const std::vector<BceTerm>& terms, std::vector<double>& grad) {
    return bce_impl(net, terms, &grad);
}

DetectorTrainResult train_detector(const std::vector<DetectorSample>& samples, const TrainConfig& config,
                                   const FeatureConfig& features, double window_s) {
    config.validate();
    features.validate();
    std::size_t positives = 0;
    for (const DetectorSample& s : samples) {
        if (s.label != 0 && s.label != 1) {
            fail(ErrorKind::label, "labels must be 0 or 1");
        }
        if (s.features.values.size() != features.length() + kContrastFeatures) {
            fail(ErrorKind::shape, "detector sample has the wrong feature length");
        }
        positives += static_cast<std::size_t>(s.label);
    }
    if (positives == 0 || positives == samples.size()) {
        fail(ErrorKind::degenerate_data, "detector training needs both classes");
    }

    DetectorTrainResult result;
    result.model = make_detector(features, config.hidden, Rng::mix(config.seed, 2));
    result.model.window_s = window_s;
    Mlp& net = result.model.net;
    {
        std::vector<std::vector<double>> rows;
        rows.reserve(samples.size());
        for (const DetectorSample& s : samples) {
            rows.push_back(s.features.values);
        }
        net.fit_input_normalization(rows);
    }

    Rng rng(config.seed);
    MomentumSgd opt(config.learning_rate, 0.9);
    std::vector<double> grad;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
        }
        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - pos);
            std::vector<BceTerm> batch;
            batch.reserve(count);
            bool zero = true;
            for (std::size_t b = 0; b < count; ++b) {
                const DetectorSample& s = samples[order[pos + b]];
                batch.push_back({s.features.values, s.label});
                zero = zero && std::all_of(s.features.values.begin(), s.features.values.end(),
                                           [](double v) { return v == 0.0; });
            }
            LossRecord rec;
            rec.step = step++;
            rec.epoch = epoch;
            rec.loss = bce_batch_gradient(net, batch, grad);
            rec.zero_features = zero;
            result.history.zero_feature_batches += zero ? 1 : 0;
            result.history.records.push_back(rec);
            opt.step(net, grad);
            if (!net.all_finite()) {
                fail(ErrorKind::degenerate_data, "training diverged (non-finite parameters)");
            }
        }
    }

    std::size_t correct = 0;
    for (const DetectorSample& s : samples) {
        const int pred = net.forward(s.features.values) > 0.0 ? 1 : 0;
        correct += pred == s.label ? 1 : 0;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    result.model.metadata = {{"kind", "detector"},
                             {"train_config", to_json(config)},
                             {"samples", samples.size()},
                             {"positives", positives},
                             {"train_accuracy", result.train_accuracy}};
    return result;
}

std::vector<std::size_t> balanced_subset(const std::vector<int>& labels, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] ? pos : neg).push_back(i);
    }
    std::vector<std::size_t>& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    Rng rng(seed);
    for (std::size_t i = major.size(); i > 1; --i) {
        std::swap(major[i - 1], major[static_cast<std::size_t>(rng.below(i))]);
    }
    major.resize(keep);
    std::vector<std::size_t> out = pos;
    out.insert(out.end(), neg.begin(), neg.end());
    std::sort(out.begin(), out.end());
    return out;
}

Detection detect(const DetectorModel& model, const FrameSequence& video) {
    const double z = model.net.forward(detector_features(video, model.features).values);
    Detection d;
    d.probability = sigmoid(z);
    d.positive = d.probability > 0.5;
    return d;
}

// ---------------------------------------------------------------- protocol

int middle_third_label(const SpeedProfile& profile, const WindowSpan& span) {
    for (double t : profile.change_points()) {
        if (in_middle_third(t, span)) {
            return 1;
        }
    }
    return 0;
}

std::vector<ProtocolWindow> protocol_windows(const std::vector<ProtocolClip>& clips, double clip_len_s,
                                             const ProtocolOptions& options) {
    const double stride = options.stride_s > 0.0 ? options.stride_s : clip_len_s / 4.0;
    std::vector<ProtocolWindow> all;
    for (std::size_t c = 0; c < clips.size(); ++c) {
        const FrameSequence& v = *clips[c].video;
        for (const WindowSpan& span : window_grid(v.size(), v.fps(), clip_len_s, stride)) {
            all.push_back({c, span, middle_third_label(clips[c].profile, span)});
        }
    }
    if (!options.balance) {
        return all;
    }
    std::vector<int> labels;
    for (const auto& w : all) {
        labels.push_back(w.label);
    }
    std::vector<ProtocolWindow> out;
    for (std::size_t i : balanced_subset(labels, options.seed)) {
        out.push_back(all[i]);
    }
    return out;
}

nlohmann::json to_json(const ProtocolReport& r) {
    nlohmann::json j = to_json(r.scores);
    j["n_windows"] = r.n_windows;
    j["n_positive"] = r.n_positive;
    j["n_negative"] = r.n_negative;
    return j;
}

ProtocolReport evaluate_protocol(const std::vector<ProtocolClip>& clips, double clip_len_s,
                                 const ProtocolOptions& options, const WindowClassifier& classifier) {
    const auto windows = protocol_windows(clips, clip_len_s, options);
    if (windows.empty()) {
        fail(ErrorKind::empty_set, "no evaluation windows");
    }
    std::vector<int> pred, truth;
    ProtocolReport r;
    for (const ProtocolWindow& w : windows) {
        const FrameSequence& v = *clips[w.clip_index].video;
        pred.push_back(classifier(v.slice(w.span.start_frame, w.span.end_frame)) ? 1 : 0);
        truth.push_back(w.label);
        (w.label ? r.n_positive : r.n_negative)++;
    }
    r.scores = detection_scores(pred, truth);
    r.n_windows = windows.size();
    return r;
}

ProtocolReport evaluate_protocol(const DetectorModel& model, const std::vector<ProtocolClip>& clips,
                                 double clip_len_s, const ProtocolOptions& options) {
    return evaluate_protocol(clips, clip_len_s, options,
                             [&](const FrameSequence& w) { return detect(model, w).positive ? 1 : 0; });
}

// ---------------------------------------------------------------- storage

std::string encode_detector(const DetectorModel& model) {
    NetworkBundle b{model.features, model.net, model.metadata};
    b.metadata["window_s"] = model.window_s;
    return encode_network(kDetectorMagic, b);
}

DetectorModel decode_detector(const std::string& bytes) {
    NetworkBundle b = decode_network(kDetectorMagic, bytes);
    if (b.net.input_size() != b.features.length() + kContrastFeatures) {
        fail(ErrorKind::format, "network input size does not match the feature configuration");
    }
    DetectorModel m;
    m.features = b.features;
    m.net = std::move(b.net);
    m.window_s = b.metadata.value("window_s", 2.0);
    b.metadata.erase("window_s");
    m.metadata = std::move(b.metadata);
    return m;
}

void save_detector(const DetectorModel& model, const std::filesystem::path& path) {
    write_text_file(path, encode_detector(model));
}

DetectorModel load_detector(const std::filesystem::path& path) {
    return decode_detector(read_binary_file(path));
}

}  // namespace chronoscope

#include "chronoscope/speed_model.hpp"

#include "chronoscope/error.hpp"
#include "chronoscope/media_io.hpp"
#include "chronoscope/parallel.hpp"

#include <numeric>

namespace chronoscope {

EstimatorModel make_estimator(const FeatureConfig& features, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    features.validate();
    std::vector<std::size_t> sizes{features.length()};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    EstimatorModel m;
    m.features = features;
    m.net = Mlp(sizes, seed);
    return m;
}

std::string_view to_string(KSampler s) {
    return s == KSampler::log_uniform ? "log_uniform" : "truncated_normal";
}

KSampler k_sampler_from_string(std::string_view name) {
    if (name == "log_uniform") return KSampler::log_uniform;
    if (name == "truncated_normal") return KSampler::truncated_normal;
    fail(ErrorKind::invalid_argument, "unknown k sampler '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0) {
        fail(ErrorKind::invalid_argument, "epochs and batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        fail(ErrorKind::invalid_argument, "learning_rate must be positive");
    }
    if (!(lambda_sup >= 0.0) || !std::isfinite(lambda_sup)) {
        fail(ErrorKind::invalid_argument, "lambda_sup must be >= 0");
    }
    if (!(k_max > 1.0) || !std::isfinite(k_max)) {
        fail(ErrorKind::invalid_argument, "k_max must be > 1");
    }
    for (std::size_t h : hidden) {
        if (h == 0) {
            fail(ErrorKind::invalid_argument, "hidden layer sizes must be positive");
        }
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"lambda_sup", c.lambda_sup},
            {"k_sampler", std::string(to_string(c.k_sampler))},
            {"k_max", c.k_max},
            {"seed", c.seed},
            {"hidden", c.hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lambda_sup = j.value("lambda_sup", c.lambda_sup);
    c.k_sampler = k_sampler_from_string(j.value("k_sampler", std::string(to_string(c.k_sampler))));
    c.k_max = j.value("k_max", c.k_max);
    c.seed = j.value("seed", c.seed);
    c.hidden = j.value("hidden", c.hidden);
    c.validate();
    return c;
}

// ---------------------------------------------------------------- losses

double forward(const EstimatorModel& model, const FeatureVector& features) {
    return model.net.forward(features.values);
}

double ssl_loss(const EstimatorModel& model, const FeatureVector& orig, const FeatureVector& accel, double k) {
    if (!(k >= 1.0)) {
        fail(ErrorKind::invalid_factor, "acceleration factor must be >= 1");
    }
    const double e = forward(model, accel) - (std::log(k) + forward(model, orig));
    return e * e;
}

double sup_loss(const EstimatorModel& model, const FeatureVector& features, double true_speed) {
    if (!(true_speed > 0.0)) {
        fail(ErrorKind::label, "true speed must be positive");
    }
    const double e = forward(model, features) - std::log(true_speed);
    return e * e;
}

namespace {

double batch_impl(const Mlp& net, const LossBatch& batch, std::vector<double>* grad) {
    if (grad) {
        grad->assign(net.parameter_count(), 0.0);
    }
    Mlp::Tape ta, tb;
    double ssl = 0.0;
    if (!batch.ssl.empty()) {
        const double w = 1.0 / static_cast<double>(batch.ssl.size());
        for (const SslTerm& t : batch.ssl) {
            if (!(t.k >= 1.0)) {
                fail(ErrorKind::invalid_factor, "acceleration factor must be >= 1");
            }
            const double fa = net.forward(t.accel, ta);
            const double fo = net.forward(t.orig, tb);
            const double e = fa - std::log(t.k) - fo;
            ssl += w * e * e;
            if (grad) {
                net.backward(ta, 2.0 * w * e, *grad);
                net.backward(tb, -2.0 * w * e, *grad);
            }
        }
    }
    double sup = 0.0;
    if (!batch.sup.empty()) {
        const double w = batch.lambda_sup / static_cast<double>(batch.sup.size());
        for (const SupTerm& t : batch.sup) {
            if (!(t.true_speed > 0.0)) {
                fail(ErrorKind::label, "true speed must be positive");
            }
            const double f = net.forward(t.features, ta);
            const double e = f - std::log(t.true_speed);
            sup += w * e * e;
            if (grad) {
                net.backward(ta, 2.0 * w * e, *grad);
            }
        }
    }
    return ssl + sup;
}

}  // namespace

double batch_loss(const Mlp& net, const LossBatch& batch) {
    return batch_impl(net, batch, nullptr);
}

double batch_loss_gradient(const Mlp& net, const LossBatch& batch, std::vector<double>& grad) {
    return batch_impl(net, batch, &grad);
}

// ---------------------------------------------------------------- training

double LossHistory::zero_feature_fraction() const {
    return records.empty() ? 0.0 : static_cast<double>(zero_feature_batches) / static_cast<double>(records.size());
}

std::vector<double> LossHistory::smoothed(std::size_t window) const {
    std::vector<double> out(records.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        acc += records[i].loss;
        if (i >= window) {
            acc -= records[i - window].loss;
        }
        out[i] = acc / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

std::optional<double> sample_k(Rng& rng, const TrainConfig& config, std::size_t frame_count, std::size_t frames) {
    if (frame_count < frames || frames < 2) {
        return std::nullopt;
    }
    const double feasible = max_subsample_factor(frame_count, frames);
    if (!(feasible > 1.0)) {
        return std::nullopt;
    }
    if (config.k_sampler == KSampler::log_uniform) {
        const double hi = std::min(config.k_max, feasible);
        return std::exp(rng.uniform(0.0, std::log(hi)));
    }
    // N(1, (T/2)^2) with T = k_max; about half the draws land below 1
    const double sigma = 0.5 * config.k_max;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double k = 1.0 + sigma * rng.normal();
        if (k >= 1.0 && k <= feasible) {
            return k;
        }
    }
    return std::nullopt;
}

namespace {

// A pending feature extraction: frames [offset, offset + length) of a clip,
// subsampled by k, first `frames` frames kept.
struct WindowJob {
    const FrameSequence* video = nullptr;
    std::size_t offset = 0;
    std::size_t length = 0;
    double k = 1.0;
};

FrameSequence materialize(const WindowJob& job, std::size_t frames) {
    FrameSequence seg = job.video->slice(job.offset, job.offset + job.length);
    if (job.k == 1.0) {
        return seg.slice(0, frames);
    }
    return subsample(seg, job.k).slice(0, frames);
}

std::size_t segment_length(double k, std::size_t frames, std::size_t available) {
    const double need = static_cast<double>(frames - 1) * k;
    const auto len = static_cast<std::size_t>(std::ceil(need - 1e-9)) + 1;
    return std::min(len, available);
}

WindowJob plain_window(Rng& rng, const FrameSequence* video, std::size_t frames) {
    WindowJob j;
    j.video = video;
    j.length = frames;
    j.offset = static_cast<std::size_t>(rng.below(video->size() - frames + 1));
    return j;
}

WindowJob accel_window(Rng& rng, const FrameSequence* video, std::size_t frames, double k) {
    WindowJob j;
    j.video = video;
    j.k = k;
    j.length = segment_length(k, frames, video->size());
    j.offset = static_cast<std::size_t>(rng.below(video->size() - j.length + 1));
    return j;
}

std::vector<std::vector<double>> extract_all(const std::vector<WindowJob>& jobs, const FeatureConfig& fc,
                                             unsigned threads) {
    std::vector<std::vector<double>> out(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        out[i] = extract_features(materialize(jobs[i], fc.frames), fc).values;
    });
    return out;
}

bool all_zero(const std::vector<std::vector<double>>& rows) {
    for (const auto& r : rows) {
        for (double v : r) {
            if (v != 0.0) return false;
        }
    }
    return true;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
    }
}

}  // namespace

TrainResult train_estimator(const TrainData& data, const TrainConfig& config, const FeatureConfig& features,
                            unsigned threads) {
    config.validate();
    features.validate();
    if (data.unlabeled.empty()) {
        fail(ErrorKind::empty_set, "training needs at least one unlabeled clip");
    }
    if (config.lambda_sup > 0.0 && data.labeled.empty()) {
        fail(ErrorKind::empty_set, "lambda_sup > 0 needs labeled clips");
    }
    const std::size_t F = features.frames;
    for (const LabeledClip& l : data.labeled) {
        if (!(l.true_speed > 0.0)) {
            fail(ErrorKind::label, "labeled clip has non-positive speed");
        }
        if (l.video->size() < F) {
            fail(ErrorKind::insufficient_length, "labeled clip shorter than the feature window");
        }
    }

    TrainResult result;
    result.model = make_estimator(features, config.hidden, Rng::mix(config.seed, 1));
    Mlp& net = result.model.net;
    LossHistory& history = result.history;

    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < data.unlabeled.size(); ++i) {
        const FrameSequence* v = data.unlabeled[i];
        if (v->size() >= F && max_subsample_factor(v->size(), F) > 1.0) {
            usable.push_back(i);
        } else {
            ++history.skipped_clips;
        }
    }
    if (usable.empty()) {
        fail(ErrorKind::insufficient_length, "no unlabeled clip is long enough for any acceleration");
    }

    const bool use_sup = config.lambda_sup > 0.0 && !data.labeled.empty();
    const std::size_t n_sup = use_sup ? std::max<std::size_t>(1, config.batch_size / 5) : 0;
    const std::size_t n_ssl = std::max<std::size_t>(1, config.batch_size - n_sup);

    Rng rng(config.seed);

    // Input standardization from one plain and one accelerated window per clip.
    {
        std::vector<WindowJob> jobs;
        for (std::size_t i : usable) {
            const FrameSequence* v = data.unlabeled[i];
            jobs.push_back(plain_window(rng, v, F));
            if (auto k = sample_k(rng, config, v->size(), F)) {
                jobs.push_back(accel_window(rng, v, F, *k));
            }
        }
        for (const LabeledClip& l : data.labeled) {
            jobs.push_back(plain_window(rng, l.video, F));
        }
        net.fit_input_normalization(extract_all(jobs, features, threads));
    }

    MomentumSgd opt(config.learning_rate, 0.9);
    std::vector<double> grad;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = usable;
        shuffle(order, rng);
        for (std::size_t pos = 0; pos < order.size(); pos += n_ssl) {
            const std::size_t count = std::min(n_ssl, order.size() - pos);
            std::vector<WindowJob> jobs;
            std::vector<double> ks;
            for (std::size_t b = 0; b < count; ++b) {
                const FrameSequence* v = data.unlabeled[order[pos + b]];
                double k = sample_k(rng, config, v->size(), F).value_or(1.0);
                WindowJob acc = accel_window(rng, v, F, k);
                WindowJob orig = acc;
                orig.k = 1.0;
                orig.length = F;
                jobs.push_back(orig);
                jobs.push_back(acc);
                ks.push_back(k);
            }
            std::vector<double> speeds;
            for (std::size_t b = 0; b < n_sup; ++b) {
                const LabeledClip& l = data.labeled[static_cast<std::size_t>(rng.below(data.labeled.size()))];
                jobs.push_back(plain_window(rng, l.video, F));
                speeds.push_back(l.true_speed);
            }
            auto rows = extract_all(jobs, features, threads);

            LossBatch batch;
            batch.lambda_sup = config.lambda_sup;
            for (std::size_t b = 0; b < count; ++b) {
                batch.ssl.push_back({std::move(rows[2 * b]), std::move(rows[2 * b + 1]), ks[b]});
            }
            for (std::size_t b = 0; b < n_sup; ++b) {
                batch.sup.push_back({std::move(rows[2 * count + b]), speeds[b]});
            }

            LossRecord rec;
            rec.step = step++;
            rec.epoch = epoch;
            bool zero = true;
            for (const auto& t : batch.ssl) zero = zero && all_zero({t.orig, t.accel});
            for (const auto& t : batch.sup) zero = zero && all_zero({t.features});
            rec.zero_features = zero;
            history.zero_feature_batches += zero ? 1 : 0;
            {
                LossBatch part = batch;
                part.sup.clear();
                rec.ssl = batch_loss(net, part);
                part = batch;
                part.ssl.clear();
                part.lambda_sup = 1.0;
                rec.sup = part.sup.empty() ? 0.0 : batch_loss(net, part);
            }
            rec.loss = batch_loss_gradient(net, batch, grad);
            history.records.push_back(rec);
            opt.step(net, grad);
            if (!net.all_finite()) {
                fail(ErrorKind::degenerate_data, "training diverged (non-finite parameters)");
            }
        }
    }

    result.model.metadata = {
        {"kind", "estimator"},
        {"train_config", to_json(config)},
        {"k_sampler", std::string(to_string(config.k_sampler))},
        {"k_policy", config.k_sampler == KSampler::log_uniform
                         ? "ln k ~ U[0, ln min(k_max, frame budget)]"
                         : "k ~ N(1, (k_max/2)^2), draws below 1 or above the frame budget rejected"},
        {"unlabeled_clips", data.unlabeled.size()},
        {"labeled_clips", data.labeled.size()},
        {"skipped_clips", history.skipped_clips},
        {"steps", history.records.size()},
    };
    return result;
}

// ---------------------------------------------------------------- inference

std::vector<std::size_t> prediction_window_starts(std::size_t frame_count, std::size_t frames, std::size_t max_windows) {
    if (frame_count < frames) {
        fail(ErrorKind::insufficient_length, "clip has " + std::to_string(frame_count) + " frames, estimator needs " +
                                                 std::to_string(frames));
    }
    const std::size_t positions = frame_count - frames + 1;
    const std::size_t count = std::max<std::size_t>(1, std::min(max_windows, positions));
    if (count == 1) {
        return {(frame_count - frames) / 2};
    }
    return uniform_indices(positions, count);
}

double predict_log_speed(const EstimatorModel& model, const FrameSequence& video, unsigned threads) {
    const std::size_t F = model.features.frames;
    const auto starts = prediction_window_starts(video.size(), F, model.prediction_windows);
    std::vector<double> preds(starts.size());
    parallel_for(starts.size(), threads, [&](std::size_t i) {
        preds[i] = forward(model, extract_features(video.slice(starts[i], starts[i] + F), model.features));
    });
    return std::accumulate(preds.begin(), preds.end(), 0.0) / static_cast<double>(preds.size());
}

nlohmann::json to_json(const PredictionTrace& trace) {
    nlohmann::json steps = nlohmann::json::array();
    for (const TraceStep& s : trace.steps) {
        steps.push_back({{"estimate_so_far", s.estimate_so_far},
                         {"residual_estimate", s.residual_estimate},
                         {"frames_remaining", s.frames_remaining},
                         {"applied_factor", s.applied_factor}});
    }
    return {{"iterations", steps}, {"final_speed", trace.final_speed}};
}

namespace {

class VideoSource {
public:
    VideoSource(const EstimatorModel& model, FrameSequence video, unsigned threads)
        : model_(model), video_(std::move(video)), threads_(threads) {}

    double estimate() { return std::exp(predict_log_speed(model_, video_, threads_)); }
    double max_factor() const { return max_subsample_factor(video_.size(), model_.features.frames); }
    void accelerate(double k) { video_ = subsample(video_, k); }
    std::size_t frames() const { return video_.size(); }

private:
    const EstimatorModel& model_;
    FrameSequence video_;
    unsigned threads_;
};

}  // namespace

PredictionTrace predict_iterative(const EstimatorModel& model, const FrameSequence& video, std::size_t iterations,
                                  unsigned threads) {
    if (iterations == 0) {
        fail(ErrorKind::invalid_argument, "iterations must be >= 1");
    }
    if (video.size() < model.features.frames) {
        fail(ErrorKind::insufficient_length, "clip has " + std::to_string(video.size()) + " frames, estimator needs " +
                                                 std::to_string(model.features.frames));
    }
    VideoSource source(model, video, threads);
    return iterate_prediction(source, iterations);
}

PredictionTrace predict_iterative(const EstimatorModel& model, const Clip& clip, std::size_t iterations,
                                  unsigned threads) {
    return predict_iterative(model, clip.video, iterations, threads);
}

// ---------------------------------------------------------------- storage

std::string encode_estimator(const EstimatorModel& model) {
    NetworkBundle b{model.features, model.net, model.metadata};
    b.metadata["prediction_windows"] = model.prediction_windows;
    return encode_network(kEstimatorMagic, b);
}

EstimatorModel decode_estimator(const std::string& bytes) {
    NetworkBundle b = decode_network(kEstimatorMagic, bytes);
    if (b.net.input_size() != b.features.length()) {
        fail(ErrorKind::format, "network input size does not match the feature configuration");
    }
    EstimatorModel m;
    m.features = b.features;
    m.net = std::move(b.net);
    m.prediction_windows = b.metadata.value("prediction_windows", std::size_t{8});
    b.metadata.erase("prediction_windows");
    m.metadata = std::move(b.metadata);
    return m;
}

void save_estimator(const EstimatorModel& model, const std::filesystem::path& path) {
    write_text_file(path, encode_estimator(model));
}

EstimatorModel load_estimator(const std::filesystem::path& path) {
    return decode_estimator(read_binary_file(path));
}

}  // namespace chronoscope

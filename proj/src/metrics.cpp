#include "chronoscope/metrics.hpp"

#include "chronoscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace chronoscope {

namespace {

void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        fail(ErrorKind::shape, "correlation inputs differ in length");
    }
    if (x.size() < 2) {
        fail(ErrorKind::undefined_correlation, "correlation needs at least two points");
    }
}

nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        fail(ErrorKind::undefined_correlation, "correlation undefined for a constant input");
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            ranks[order[t]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    check_pair(x, y);
    return pearson(average_ranks(x), average_ranks(y));
}

LogRmse log_rmse_from(double rmse) {
    return {rmse, std::exp(rmse)};
}

LogRmse rmse_log(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        fail(ErrorKind::shape, "prediction and truth differ in length");
    }
    if (pred.empty()) {
        fail(ErrorKind::empty_set, "rmse of an empty set");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(pred[i] > 0.0) || !(truth[i] > 0.0)) {
            fail(ErrorKind::domain, "speeds must be positive for log-space error");
        }
        const double e = std::log(pred[i]) - std::log(truth[i]);
        acc += e * e;
    }
    return log_rmse_from(std::sqrt(acc / static_cast<double>(pred.size())));
}

SpeedEvalReport evaluate_speeds(const std::vector<SpeedEvalItem>& items) {
    if (items.empty()) {
        fail(ErrorKind::empty_set, "no items to evaluate");
    }
    SpeedEvalReport r;
    r.n = items.size();
    std::vector<double> p, t, lp, lt;
    for (SpeedEvalItem it : items) {
        p.push_back(it.predicted);
        t.push_back(it.truth);
    }
    const LogRmse e = rmse_log(p, t);
    r.rmse_log = e.rmse_log;
    r.exp_rmse = e.exp_rmse;
    for (SpeedEvalItem it : items) {
        it.log_error = std::log(it.predicted) - std::log(it.truth);
        lp.push_back(std::log(it.predicted));
        lt.push_back(std::log(it.truth));
        r.items.push_back(it);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        r.pearson_rho = pearson(lp, lt);
        r.spearman_rs = spearman(lp, lt);
    } catch (const Error& err) {
        if (err.kind() != ErrorKind::undefined_correlation) throw;
        r.pearson_rho = nan;
        r.spearman_rs = nan;
    }
    return r;
}

nlohmann::json to_json(const SpeedEvalReport& r) {
    nlohmann::json items = nlohmann::json::array();
    for (const SpeedEvalItem& it : r.items) {
        items.push_back({{"id", it.id}, {"predicted", it.predicted}, {"truth", it.truth}, {"log_error", it.log_error}});
    }
    return {{"pearson_rho", number_or_null(r.pearson_rho)},
            {"spearman_rs", number_or_null(r.spearman_rs)},
            {"rmse_log", r.rmse_log},
            {"exp_rmse", r.exp_rmse},
            {"n", r.n},
            {"items", items}};
}

std::string format_table(const SpeedEvalReport& r) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%10s %10s %10s %10s %8s\n", "rho", "r_s", "RMSE", "e^RMSE", "n");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%10.3f %10.3f %10.3f %10.3f %8zu\n", r.pearson_rho, r.spearman_rs, r.rmse_log,
                  r.exp_rmse, r.n);
    out += buf;
    return out;
}

DetectionScores detection_scores(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) {
        fail(ErrorKind::shape, "prediction and truth differ in length");
    }
    if (pred.empty()) {
        fail(ErrorKind::empty_set, "no labels to score");
    }
    DetectionScores s;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
            fail(ErrorKind::label, "labels must be 0 or 1");
        }
        if (pred[i] && truth[i]) ++s.tp;
        else if (pred[i] && !truth[i]) ++s.fp;
        else if (!pred[i] && truth[i]) ++s.fn;
        else ++s.tn;
    }
    const auto d = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    s.accuracy = d(s.tp + s.tn, pred.size());
    s.precision = d(s.tp, s.tp + s.fp);
    s.recall = d(s.tp, s.tp + s.fn);
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

nlohmann::json to_json(const DetectionScores& s) {
    return {{"accuracy", s.accuracy},
            {"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"confusion", {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tn", s.tn}}}};
}

std::string format_table(const DetectionScores& s) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%10s %10s %10s %10s %6s %6s %6s %6s\n", "accuracy", "precision", "recall", "F1",
                  "TP", "FP", "FN", "TN");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%10.3f %10.3f %10.3f %10.3f %6zu %6zu %6zu %6zu\n", s.accuracy, s.precision,
                  s.recall, s.f1, s.tp, s.fp, s.fn, s.tn);
    out += buf;
    return out;
}

EventScores event_f1(std::vector<double> pred, std::vector<double> truth, double tolerance_s) {
    if (!(tolerance_s > 0.0)) {
        fail(ErrorKind::invalid_argument, "tolerance must be positive");
    }
    std::sort(pred.begin(), pred.end());
    std::sort(truth.begin(), truth.end());
    EventScores s;
    s.n_pred = pred.size();
    s.n_truth = truth.size();
    std::vector<bool> used(truth.size(), false);
    for (double p : pred) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (!used[j] && std::abs(p - truth[j]) <= tolerance_s) {
                used[j] = true;
                ++s.matched;
                break;
            }
        }
    }
    s.precision = s.n_pred == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.n_pred);
    s.recall = s.n_truth == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.n_truth);
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

nlohmann::json to_json(const EventScores& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
            {"matched", s.matched}, {"n_pred", s.n_pred}, {"n_truth", s.n_truth}};
}

}  // namespace chronoscope

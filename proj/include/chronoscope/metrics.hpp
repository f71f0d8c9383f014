#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace chronoscope {

/// Product-moment correlation. Throws undefined_correlation when either
/// input has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(const std::vector<double>& x);

/// Pearson correlation of the average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct LogRmse {
    double rmse_log = 0.0;
    double exp_rmse = 1.0;
};

/// exp_rmse is always exp(rmse_log).
LogRmse log_rmse_from(double rmse_log);

/// Root mean squared natural-log error.
LogRmse rmse_log(const std::vector<double>& pred, const std::vector<double>& truth);

struct SpeedEvalItem {
    std::string id;
    double predicted = 1.0;
    double truth = 1.0;
    double log_error = 0.0;  // ln predicted - ln truth
};

struct SpeedEvalReport {
    double pearson_rho = 0.0;
    double spearman_rs = 0.0;
    double rmse_log = 0.0;
    double exp_rmse = 1.0;
    std::size_t n = 0;
    std::vector<SpeedEvalItem> items;
};

/// Correlations are taken over log speeds. With fewer than two items, or
/// constant inputs, the correlations are reported as NaN (null in JSON).
SpeedEvalReport evaluate_speeds(const std::vector<SpeedEvalItem>& items);

nlohmann::json to_json(const SpeedEvalReport& report);
/// Columns: rho, r_s, RMSE, e^RMSE, n.
std::string format_table(const SpeedEvalReport& report);

struct DetectionScores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
};

DetectionScores detection_scores(const std::vector<int>& pred, const std::vector<int>& truth);
nlohmann::json to_json(const DetectionScores& scores);
std::string format_table(const DetectionScores& scores);

struct EventScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t matched = 0;
    std::size_t n_pred = 0;
    std::size_t n_truth = 0;
};

/// Greedy one-to-one matching in time order: each prediction, earliest first,
/// takes the earliest unmatched truth within tolerance_s. Empty prediction
/// and truth lists score 1.0 across the board.
EventScores event_f1(std::vector<double> pred, std::vector<double> truth, double tolerance_s);
nlohmann::json to_json(const EventScores& scores);

}  // namespace chronoscope

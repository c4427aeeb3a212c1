// Evaluation protocols (k-fold cross validation, given-ratio holdout) and
// metrics for rating prediction (MAE/RMSE/MPE) and context-aware top-N
// recommendation (Prec/Rec/MAP/NDCG/MRR).

#ifndef CTXREC_EVAL_HPP
#define CTXREC_EVAL_HPP

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

enum class Task { Rating, Ranking };
const char* to_string(Task t);

struct Protocol {
    enum class Kind { CrossValidation, Ratio };
    Kind kind = Kind::CrossValidation;
    int k = 5;
    double train_ratio = 0.8;
    int seed = 1;
    bool parallel = false;
    std::string test_view = "all";

    bool operator==(const Protocol&) const = default;
};

struct EvalReport {
    std::string algorithm;
    Task task = Task::Rating;
    std::vector<std::pair<std::string, double>> metrics;    // averaged over folds
    std::vector<std::vector<std::pair<std::string, double>>> per_fold;
    std::string params;
};

/// Seeded uniform shuffle, then round-robin assignment. Depends only on
/// (row count, k, seed), so every algorithm sees the same folds.
std::vector<std::vector<int>> kfold_split(int num_rows, int k, int seed);

/// Seeded shuffle; first ceil(r * n) rows train, the rest test.
std::pair<std::vector<int>, std::vector<int>> ratio_split(int num_rows, double r,
                                                          int seed);

double mae(const std::vector<std::pair<double, double>>& pairs);
double rmse(const std::vector<std::pair<double, double>>& pairs);
/// Fraction of pairs whose absolute error exceeds delta.
double mpe(const std::vector<std::pair<double, double>>& pairs, double delta = 1e-5);

struct RankingCase {
    std::vector<int> ranked;
    std::unordered_set<int> relevant;
};

struct RankingScores {
    double precision = 0.0;
    double recall = 0.0;
    double map = 0.0;
    double ndcg = 0.0;
    double mrr = 0.0;
};

RankingScores ranking_metrics(const std::vector<RankingCase>& cases, int n);

/// True for roster names that only support the ranking task.
bool ranking_only_algorithm(const std::string& algorithm);

EvalReport evaluate(const std::string& algorithm, const RatingTable& table,
                    const Protocol& protocol, Task task, const HyperParams& hp);

std::string format_params(const std::string& algorithm, const Protocol& protocol,
                          Task task, const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_EVAL_HPP

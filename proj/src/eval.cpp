#include "ctxrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ctxrec {

const char* to_string(Task t) {
    return t == Task::Rating ? "rating" : "ranking";
}

std::vector<std::vector<int>> kfold_split(int num_rows, int k, int seed) {
    if (k < 2) throw std::runtime_error("cv needs k >= 2");
    if (k > num_rows)
        throw std::runtime_error("cv fold count " + std::to_string(k) +
                                 " exceeds row count " + std::to_string(num_rows));
    std::vector<int> order(num_rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(static_cast<uint32_t>(seed));
    shuffle_indices(order, rng);

    std::vector<std::vector<int>> folds(k);
    for (int i = 0; i < num_rows; ++i) folds[i % k].push_back(order[i]);
    return folds;
}

std::pair<std::vector<int>, std::vector<int>> ratio_split(int num_rows, double r,
                                                          int seed) {
    if (!(r > 0.0 && r < 1.0)) throw std::runtime_error("ratio must be in (0, 1)");
    std::vector<int> order(num_rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(static_cast<uint32_t>(seed));
    shuffle_indices(order, rng);

    int train_n = static_cast<int>(std::ceil(r * num_rows));
    if (train_n <= 0 || train_n >= num_rows)
        throw std::runtime_error("ratio split leaves an empty side");
    std::vector<int> train(order.begin(), order.begin() + train_n);
    std::vector<int> test(order.begin() + train_n, order.end());
    return {std::move(train), std::move(test)};
}

static void require_nonempty(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw std::runtime_error("no prediction pairs");
}

double mae(const std::vector<std::pair<double, double>>& pairs) {
    require_nonempty(pairs);
    double acc = 0.0;
    for (const auto& [a, p] : pairs) acc += std::abs(a - p);
    return acc / pairs.size();
}

double rmse(const std::vector<std::pair<double, double>>& pairs) {
    require_nonempty(pairs);
    double acc = 0.0;
    for (const auto& [a, p] : pairs) acc += (a - p) * (a - p);
    return std::sqrt(acc / pairs.size());
}

double mpe(const std::vector<std::pair<double, double>>& pairs, double delta) {
    require_nonempty(pairs);
    double misses = 0.0;
    for (const auto& [a, p] : pairs)
        if (std::abs(a - p) > delta) misses += 1.0;
    return misses / pairs.size();
}

RankingScores ranking_metrics(const std::vector<RankingCase>& cases, int n) {
    if (n <= 0) throw std::runtime_error("topN must be positive");
    RankingScores avg;
    if (cases.empty()) return avg;

    for (const auto& c : cases) {
        size_t limit = std::min<size_t>(n, c.ranked.size());
        int hits = 0;
        double dcg = 0.0, ap_sum = 0.0, rr = 0.0;
        for (size_t p = 1; p <= limit; ++p) {
            if (c.relevant.count(c.ranked[p - 1]) == 0) continue;
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(p) + 1.0);
            ap_sum += static_cast<double>(hits) / static_cast<double>(p);
            if (rr == 0.0) rr = 1.0 / static_cast<double>(p);
        }
        size_t ideal = std::min<size_t>(n, c.relevant.size());
        double idcg = 0.0;
        for (size_t p = 1; p <= ideal; ++p)
            idcg += 1.0 / std::log2(static_cast<double>(p) + 1.0);

        avg.precision += static_cast<double>(hits) / static_cast<double>(n);
        avg.recall += static_cast<double>(hits) / static_cast<double>(c.relevant.size());
        avg.map += ap_sum / static_cast<double>(c.relevant.size());
        avg.ndcg += idcg > 0.0 ? dcg / idcg : 0.0;
        avg.mrr += rr;
    }
    double inv = 1.0 / static_cast<double>(cases.size());
    avg.precision *= inv;
    avg.recall *= inv;
    avg.map *= inv;
    avg.ndcg *= inv;
    avg.mrr *= inv;
    return avg;
}

bool ranking_only_algorithm(const std::string& algorithm) {
    return to_lower(algorithm).rfind("cslim", 0) == 0;
}

namespace {

using FoldMetrics = std::vector<std::pair<std::string, double>>;

FoldMetrics rating_fold(const Recommender& model, const RatingTable& table,
                        const std::vector<int>& test_idx) {
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(test_idx.size());
    for (int t : test_idx) {
        const RatingTuple& row = table.rows()[t];
        pairs.emplace_back(row.rating,
                           model.predict(row.user, row.item, row.situation));
    }
    return {{"MAE", mae(pairs)}, {"RMSE", rmse(pairs)}, {"MPE", mpe(pairs)}};
}

FoldMetrics ranking_fold(const Recommender& model, const RatingTable& table,
                         const std::vector<int>& train_idx,
                         const std::vector<int>& test_idx, const HyperParams& hp) {
    const double threshold = table.scale().midpoint();
    using Key = std::pair<int, std::vector<int>>;   // (user, active conditions)

    // Items each user rated per situation in train: excluded from candidates.
    std::map<Key, std::unordered_set<int>> seen_in_train;
    for (int t : train_idx) {
        const RatingTuple& row = table.rows()[t];
        seen_in_train[{row.user, row.situation.active}].insert(row.item);
    }

    std::map<Key, std::unordered_set<int>> relevant;
    for (int t : test_idx) {
        const RatingTuple& row = table.rows()[t];
        if (row.rating >= threshold)
            relevant[{row.user, row.situation.active}].insert(row.item);
    }

    std::vector<RankingCase> cases;
    cases.reserve(relevant.size());
    for (const auto& [key, rel] : relevant) {
        ContextSituation sit{key.second};
        std::vector<int> candidates;
        candidates.reserve(table.num_items());
        const std::unordered_set<int>* exclude = nullptr;
        if (auto it = seen_in_train.find(key); it != seen_in_train.end())
            exclude = &it->second;
        for (int i = 0; i < table.num_items(); ++i)
            if (!exclude || exclude->count(i) == 0) candidates.push_back(i);
        if (candidates.empty()) continue;
        RankingCase c;
        c.ranked = rank(model, key.first, sit, candidates, hp.top_n);
        c.relevant = rel;
        cases.push_back(std::move(c));
    }

    RankingScores s = ranking_metrics(cases, hp.top_n);
    return {{"Prec", s.precision},
            {"Rec", s.recall},
            {"MAP", s.map},
            {"NDCG", s.ndcg},
            {"MRR", s.mrr}};
}

}  // namespace

EvalReport evaluate(const std::string& algorithm, const RatingTable& table,
                    const Protocol& protocol, Task task, const HyperParams& hp) {
    if (table.empty()) throw std::runtime_error("empty dataset");
    if (protocol.test_view != "all")
        throw std::runtime_error("unsupported test view '" + protocol.test_view + "'");
    if (task == Task::Rating && ranking_only_algorithm(algorithm))
        throw std::runtime_error("ranking-only recommender: " + to_lower(algorithm));

    // Fold index sets; the ratio protocol is a single fold.
    std::vector<std::vector<int>> test_folds;
    std::vector<std::vector<int>> train_folds;
    if (protocol.kind == Protocol::Kind::CrossValidation) {
        auto folds = kfold_split(table.num_rows(), protocol.k, protocol.seed);
        for (size_t f = 0; f < folds.size(); ++f) {
            std::vector<int> train;
            train.reserve(table.num_rows() - folds[f].size());
            for (size_t g = 0; g < folds.size(); ++g)
                if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
            train_folds.push_back(std::move(train));
            test_folds.push_back(folds[f]);
        }
    } else {
        auto [train, test] = ratio_split(table.num_rows(), protocol.train_ratio,
                                         protocol.seed);
        train_folds.push_back(std::move(train));
        test_folds.push_back(std::move(test));
    }

    const int folds = static_cast<int>(test_folds.size());
    std::vector<FoldMetrics> fold_metrics(folds);
    parallel_for(
        folds,
        [&](int f) {
            RatingTable train = table.subset(train_folds[f]);
            auto model = fit(algorithm, train, hp);
            fold_metrics[f] = task == Task::Rating
                                  ? rating_fold(*model, table, test_folds[f])
                                  : ranking_fold(*model, table, train_folds[f],
                                                 test_folds[f], hp);
        },
        protocol.parallel);

    EvalReport report;
    report.algorithm = to_lower(algorithm);
    report.task = task;
    report.per_fold = fold_metrics;
    report.params = format_params(algorithm, protocol, task, hp);
    for (size_t m = 0; m < fold_metrics[0].size(); ++m) {
        double acc = 0.0;
        for (int f = 0; f < folds; ++f) acc += fold_metrics[f][m].second;
        report.metrics.emplace_back(fold_metrics[0][m].first, acc / folds);
    }
    return report;
}

std::string format_params(const std::string& algorithm, const Protocol& protocol,
                          Task task, const HyperParams& hp) {
    std::string s;
    auto add = [&](const std::string& key, const std::string& value) {
        if (!s.empty()) s += ' ';
        s += key + '=' + value;
    };
    add("recommender", to_lower(algorithm));
    if (to_lower(algorithm).find("splitting") != std::string::npos) {
        add("traditional", to_lower(hp.split_traditional));
        add("minlength", std::to_string(hp.split_min_length));
    }
    add("task", to_string(task));
    if (protocol.kind == Protocol::Kind::CrossValidation) {
        add("protocol", "cv");
        add("k", std::to_string(protocol.k));
        add("parallel", protocol.parallel ? "on" : "off");
    } else {
        add("protocol", "given-ratio");
        add("r", format_rating(protocol.train_ratio));
    }
    add("seed", std::to_string(protocol.seed));
    add("factors", std::to_string(hp.num_factors));
    add("lrate", format_rating(hp.learn_rate));
    add("reg.user", format_rating(hp.reg_user));
    add("reg.item", format_rating(hp.reg_item));
    add("reg.context", format_rating(hp.reg_context));
    add("reg.l1", format_rating(hp.l1_reg));
    add("reg.l2", format_rating(hp.l2_reg));
    add("iters", std::to_string(hp.num_iterations));
    add("init.std", format_rating(hp.init_std));
    add("knn.k", std::to_string(hp.knn_k));
    add("knn.shrinkage", format_rating(hp.knn_shrinkage));
    add("topN", std::to_string(hp.top_n));
    add("early-stop", hp.early_stop_metric.empty() ? "-" : hp.early_stop_metric);
    return s;
}

}  // namespace ctxrec

#include "ctxrec/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "ctxrec/baselines.hpp"
#include "ctxrec/camf.hpp"
#include "ctxrec/cptf.hpp"
#include "ctxrec/cslim.hpp"
#include "ctxrec/splitting.hpp"

namespace ctxrec {

void HyperParams::validate() const {
    auto fail = [](const std::string& what) {
        throw std::runtime_error("invalid hyperparameter: " + what);
    };
    if (num_factors <= 0) fail("num.factors must be positive");
    if (!(learn_rate > 0)) fail("learn.rate must be positive");
    if (reg_user < 0) fail("reg.user must be nonnegative");
    if (reg_item < 0) fail("reg.item must be nonnegative");
    if (reg_context < 0) fail("reg.context must be nonnegative");
    if (l1_reg < 0) fail("reg.l1 must be nonnegative");
    if (l2_reg < 0) fail("reg.l2 must be nonnegative");
    if (num_iterations < 0) fail("num.max.iter must be nonnegative");
    if (init_std < 0) fail("init.std must be nonnegative");
    if (knn_k <= 0) fail("knn.k must be positive");
    if (knn_shrinkage < 0) fail("knn.shrinkage must be nonnegative");
    if (top_n <= 0) fail("topN must be positive");
    if (split_min_length < 1) fail("minlength must be at least 1");
    if (!(split_alpha > 0 && split_alpha < 1)) fail("alpha must be in (0, 1)");
    if (!early_stop_metric.empty()) {
        std::string m = to_lower(early_stop_metric);
        if (m != "mae" && m != "rmse" && m != "mpe")
            fail("unsupported early-stop metric '" + early_stop_metric + "'");
    }
}

RatingMatrix RatingMatrix::collapsed() const {
    RatingMatrix out;
    out.num_users = num_users;
    out.num_items = num_items;
    std::unordered_map<int64_t, int> slot;   // (user, item) -> entry index
    std::vector<int> counts;
    for (const auto& e : entries) {
        int64_t key = static_cast<int64_t>(e.user) * num_items + e.item;
        auto it = slot.find(key);
        if (it == slot.end()) {
            slot.emplace(key, static_cast<int>(out.entries.size()));
            out.entries.push_back({e.user, e.item, e.rating});
            counts.push_back(1);
        } else {
            out.entries[it->second].rating += e.rating;
            ++counts[it->second];
        }
    }
    for (size_t i = 0; i < out.entries.size(); ++i)
        out.entries[i].rating /= counts[i];
    return out;
}

Recommender::Recommender(std::string algorithm, const RatingTable& train)
    : algorithm_(std::move(algorithm)), scale_(train.scale()) {
    const ContextSchema& schema = train.schema();
    cond_counts_.resize(schema.dimension_count());
    for (int d = 0; d < schema.dimension_count(); ++d)
        cond_counts_[d] = schema.condition_count(d);
}

void Recommender::check_situation(const ContextSituation& s) const {
    if (s.active.size() != cond_counts_.size())
        throw std::runtime_error("situation has " + std::to_string(s.active.size()) +
                                 " dimensions, model expects " +
                                 std::to_string(cond_counts_.size()));
    for (size_t d = 0; d < cond_counts_.size(); ++d)
        if (s.active[d] < 0 || s.active[d] >= cond_counts_[d])
            throw std::runtime_error("unknown condition in dimension " +
                                     std::to_string(d));
}

double Recommender::predict(int user, int item, const ContextSituation& s) const {
    check_situation(s);
    return scale_.clamp(score(user, item, s));
}

const std::vector<std::string>& algorithm_roster() {
    static const std::vector<std::string> roster = {
        "globalavg", "useravg", "itemavg", "useritemavg",
        "contextavg", "itemcontextavg", "usercontextavg",
        "userknn", "itemknn", "pmf", "biasedmf", "slim",
        "usersplitting", "itemsplitting", "uisplitting",
        "cptf",
        "camf_c", "camf_ci", "camf_cu", "camf_cuci",
        "camf_ics", "camf_lcs", "camf_mcs",
        "cslim_c", "cslim_ci", "cslim_cu", "cslim_cuci",
    };
    return roster;
}

std::unique_ptr<Recommender> fit(const std::string& algorithm,
                                 const RatingTable& train, const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    hp.validate();
    std::string name = to_lower(algorithm);

    static const std::unordered_map<std::string, AverageVariant> kAverages = {
        {"globalavg", AverageVariant::GlobalAvg},
        {"useravg", AverageVariant::UserAvg},
        {"itemavg", AverageVariant::ItemAvg},
        {"useritemavg", AverageVariant::UserItemAvg},
        {"contextavg", AverageVariant::ContextAvg},
        {"itemcontextavg", AverageVariant::ItemContextAvg},
        {"usercontextavg", AverageVariant::UserContextAvg},
    };
    static const std::unordered_map<std::string, CamfVariant> kCamf = {
        {"camf_c", CamfVariant::C},
        {"camf_ci", CamfVariant::CI},
        {"camf_cu", CamfVariant::CU},
        {"camf_cuci", CamfVariant::CUCI},
    };
    static const std::unordered_map<std::string, SimVariant> kSim = {
        {"camf_ics", SimVariant::ICS},
        {"camf_lcs", SimVariant::LCS},
        {"camf_mcs", SimVariant::MCS},
    };
    static const std::unordered_map<std::string, CslimVariant> kCslim = {
        {"cslim_c", CslimVariant::C},
        {"cslim_ci", CslimVariant::CI},
        {"cslim_cu", CslimVariant::CU},
        {"cslim_cuci", CslimVariant::CUCI},
    };
    static const std::unordered_map<std::string, SplitVariant> kSplit = {
        {"usersplitting", SplitVariant::User},
        {"itemsplitting", SplitVariant::Item},
        {"uisplitting", SplitVariant::UserItem},
    };

    if (auto it = kAverages.find(name); it != kAverages.end())
        return fit_average(it->second, train);
    if (name == "userknn") return fit_knn(KnnVariant::UserKnn, train, hp);
    if (name == "itemknn") return fit_knn(KnnVariant::ItemKnn, train, hp);
    if (name == "pmf") return fit_mf(MfVariant::Pmf, train, hp);
    if (name == "biasedmf") return fit_mf(MfVariant::BiasedMf, train, hp);
    if (name == "slim") return fit_slim(train, hp);
    if (name == "cptf") return fit_cptf(train, hp);
    if (auto it = kCamf.find(name); it != kCamf.end())
        return fit_camf(it->second, train, hp);
    if (auto it = kSim.find(name); it != kSim.end())
        return fit_context_sim(it->second, train, hp);
    if (auto it = kCslim.find(name); it != kCslim.end())
        return fit_cslim(it->second, train, hp);
    if (auto it = kSplit.find(name); it != kSplit.end()) {
        SplitCriterion crit;
        crit.alpha = hp.split_alpha;
        crit.min_length = hp.split_min_length;
        return fit_split_pipeline(it->second, hp.split_traditional, train, crit, hp);
    }

    std::string valid;
    for (const auto& a : algorithm_roster()) {
        if (!valid.empty()) valid += ", ";
        valid += a;
    }
    throw std::runtime_error("unknown algorithm '" + algorithm +
                             "'; valid names: " + valid);
}

std::vector<int> rank(const Recommender& model, int user, const ContextSituation& s,
                      const std::vector<int>& candidates, int n) {
    if (n <= 0) throw std::runtime_error("topN must be positive");
    std::vector<std::pair<double, int>> scored;
    scored.reserve(candidates.size());
    for (int item : candidates) scored.emplace_back(model.score(user, item, s), item);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    size_t take = std::min<size_t>(n, scored.size());
    std::vector<int> out;
    out.reserve(take);
    for (size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
    return out;
}

bool early_stop_check(const std::vector<double>& history, int patience) {
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (history.empty()) return false;
    double best = history.front();
    int since_best = 0;
    for (size_t i = 1; i < history.size(); ++i) {
        if (history[i] < best) {
            best = history[i];
            since_best = 0;
        } else {
            ++since_best;
        }
    }
    return since_best >= patience;
}

// ---------------------------------------------------------------------------
// Rng

double Rng::uniform() {
    return static_cast<double>(gen_()) / 4294967296.0;
}

double Rng::normal(double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return spare_ * stddev;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m * stddev;
}

uint32_t Rng::below(uint32_t bound) {
    return bound == 0 ? 0 : gen_() % bound;
}

void shuffle_indices(std::vector<int>& indices, Rng& rng) {
    for (size_t i = indices.size(); i > 1; --i)
        std::swap(indices[i - 1], indices[rng.below(static_cast<uint32_t>(i))]);
}

// ---------------------------------------------------------------------------
// SGD loop

void run_sgd_loop(const HyperParams& hp, const SgdHooks& hooks) {
    double lr = hp.learn_rate;
    double prev = hooks.objective();
    if (!std::isfinite(prev))
        throw std::runtime_error("training diverged at iteration 0");

    const bool early = static_cast<bool>(hooks.validation_error);
    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> history;

    for (int iter = 1; iter <= hp.num_iterations; ++iter) {
        std::vector<double> snap = hooks.snapshot();
        hooks.run_epoch(lr);
        double obj = hooks.objective();
        if (!std::isfinite(obj))
            throw std::runtime_error("training diverged at iteration " +
                                     std::to_string(iter));
        if (obj > prev) {
            hooks.restore(snap);
            lr *= 0.5;
        } else {
            prev = obj;
            lr *= 1.05;
        }
        if (hooks.on_iteration) hooks.on_iteration(iter, prev);
        if (early) {
            double v = hooks.validation_error();
            history.push_back(v);
            if (v < best_val) {
                best_val = v;
                best_params = hooks.snapshot();
            }
            if (early_stop_check(history, kEarlyStopPatience)) break;
        }
        if (lr < 1e-14) break;
    }
    if (early && !best_params.empty()) hooks.restore(best_params);
}

std::vector<int> carve_validation_slice(std::vector<int>& train_indices, int seed) {
    const int n = static_cast<int>(train_indices.size());
    if (n < 2) return {};
    int val_n = std::max(1, static_cast<int>(n * kEarlyStopValidationFraction));
    if (val_n >= n) val_n = n - 1;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(0x5eedu ^ static_cast<uint64_t>(static_cast<uint32_t>(seed)));
    shuffle_indices(order, rng);

    std::vector<bool> is_val(n, false);
    for (int i = 0; i < val_n; ++i) is_val[order[i]] = true;

    std::vector<int> validation, remaining;
    validation.reserve(val_n);
    remaining.reserve(n - val_n);
    for (int i = 0; i < n; ++i)
        (is_val[i] ? validation : remaining).push_back(train_indices[i]);
    train_indices = std::move(remaining);
    return validation;
}

double validation_metric(const std::string& metric,
                         const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) return 0.0;
    std::string m = to_lower(metric);
    double acc = 0.0;
    for (const auto& [actual, predicted] : pairs) {
        double d = std::abs(actual - predicted);
        if (m == "rmse") acc += d * d;
        else if (m == "mpe") acc += d > 1e-5 ? 1.0 : 0.0;
        else acc += d;
    }
    acc /= static_cast<double>(pairs.size());
    return m == "rmse" ? std::sqrt(acc) : acc;
}

void parallel_for(int n, const std::function<void(int)>& fn, bool enable) {
    if (n <= 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    int workers = enable ? static_cast<int>(std::min<unsigned>(hw ? hw : 1, n)) : 1;
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace ctxrec

// Generic recommender contract: shared hyperparameters, the trained-model
// interface with prediction clamping, top-N ranking, and the SGD loop with
// bold-driver scheduling and early stopping shared by all learned models.

#ifndef CTXREC_ENGINE_HPP
#define CTXREC_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ctxrec/core.hpp"

namespace ctxrec {

struct HyperParams {
    int num_factors = 10;
    double learn_rate = 0.01;
    double reg_user = 0.1;
    double reg_item = 0.1;
    double reg_context = 0.1;
    double l1_reg = 0.01;       // SLIM family
    double l2_reg = 0.01;       // SLIM family
    int num_iterations = 100;
    std::string early_stop_metric;   // empty = off; "MAE"/"RMSE"/"MPE"
    double init_std = 0.01;
    int knn_k = 20;
    double knn_shrinkage = 0.0;
    int top_n = 10;
    int rand_seed = 1;
    bool verbose = false;

    // Splitting-pipeline options (recommender=usersplitting/itemsplitting/
    // uisplitting).
    std::string split_traditional = "biasedmf";
    int split_min_length = 2;
    double split_alpha = 0.05;

    /// Throws naming the first parameter that violates its constraint.
    void validate() const;

    bool operator==(const HyperParams&) const = default;
};

/// Context-free (user, item, rating) triples; what the traditional 2D
/// algorithms train on.
struct MatrixEntry {
    int user = 0;
    int item = 0;
    double rating = 0.0;
};

struct RatingMatrix {
    int num_users = 0;
    int num_items = 0;
    std::vector<MatrixEntry> entries;

    bool empty() const { return entries.empty(); }
    /// Duplicate (user, item) pairs averaged, first-appearance order.
    RatingMatrix collapsed() const;
};

/// A trained model. Immutable after fit; safe for concurrent predict/rank.
class Recommender {
public:
    virtual ~Recommender() = default;

    /// Raw, unclamped score.
    virtual double score(int user, int item, const ContextSituation& s) const = 0;

    /// Score clamped to the training rating scale.
    double predict(int user, int item, const ContextSituation& s) const;

    virtual bool ranking_only() const { return false; }

    const std::string& algorithm() const { return algorithm_; }
    const RatingScale& scale() const { return scale_; }

protected:
    Recommender(std::string algorithm, RatingScale scale, std::vector<int> cond_counts)
        : algorithm_(std::move(algorithm)),
          scale_(scale),
          cond_counts_(std::move(cond_counts)) {}
    Recommender(std::string algorithm, const RatingTable& train);

    void check_situation(const ContextSituation& s) const;

    std::string algorithm_;
    RatingScale scale_;
    std::vector<int> cond_counts_;   // per-dimension condition counts
};

/// Names accepted by fit(), lower-case.
const std::vector<std::string>& algorithm_roster();

/// Dispatches to the named algorithm's trainer (case-insensitive).
std::unique_ptr<Recommender> fit(const std::string& algorithm,
                                 const RatingTable& train, const HyperParams& hp);

/// Top n candidates by raw score, descending; ties broken by ascending
/// item index.
std::vector<int> rank(const Recommender& model, int user, const ContextSituation& s,
                      const std::vector<int>& candidates, int n);

/// True when the metric has not improved its best value for `patience`
/// consecutive evaluations. Lower is better.
bool early_stop_check(const std::vector<double>& history, int patience);

inline constexpr int kEarlyStopPatience = 5;
inline constexpr double kEarlyStopValidationFraction = 0.05;

// ---------------------------------------------------------------------------
// Deterministic randomness. Hand-rolled transforms so that results do not
// depend on the standard library's distribution implementations.

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform();                  // [0, 1)
    double normal(double stddev);      // Marsaglia polar, cached spare
    uint32_t below(uint32_t bound);    // [0, bound)

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// In-place Fisher-Yates driven by `rng`.
void shuffle_indices(std::vector<int>& indices, Rng& rng);

// ---------------------------------------------------------------------------
// Shared SGD loop. One epoch at a time under a bold-driver schedule: an
// epoch that raises the training objective is rolled back and the step
// halved, otherwise the step grows 5%. Divergence (non-finite objective)
// throws. With early stopping, validation error is tracked every iteration
// and the best parameters are restored at the end.

struct SgdHooks {
    std::function<void(double lr)> run_epoch;
    std::function<double()> objective;                    // training loss incl. reg
    std::function<std::vector<double>()> snapshot;
    std::function<void(const std::vector<double>&)> restore;
    std::function<double()> validation_error;             // null = no early stop
    std::function<void(int iter, double obj)> on_iteration;   // optional logging
};

void run_sgd_loop(const HyperParams& hp, const SgdHooks& hooks);

/// Moves a seeded 5% slice (at least one row, never all rows) out of
/// `train_indices` and returns it; returns empty when there are fewer than
/// two rows.
std::vector<int> carve_validation_slice(std::vector<int>& train_indices, int seed);

/// MAE/RMSE/MPE over (actual, predicted) pairs, for early-stop validation.
double validation_metric(const std::string& metric,
                         const std::vector<std::pair<double, double>>& pairs);

/// Runs fn(i) for i in [0, n), possibly on several threads. Results must
/// not depend on execution order.
void parallel_for(int n, const std::function<void(int)>& fn, bool enable = true);

}  // namespace ctxrec

#endif  // CTXREC_ENGINE_HPP

// Traditional (2D) and context-average baselines: the average family,
// user/item KNN with Pearson similarity, PMF/BiasedMF trained by SGD, and
// SLIM via coordinate descent.

#ifndef CTXREC_BASELINES_HPP
#define CTXREC_BASELINES_HPP

#include <memory>
#include <unordered_map>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

/// Context-free view of a contextual table. Duplicate (user, item) pairs
/// across situations are averaged; entry order is first appearance.
RatingMatrix collapse_context(const RatingTable& table);

enum class AverageVariant {
    GlobalAvg, UserAvg, ItemAvg, UserItemAvg,
    ContextAvg, ItemContextAvg, UserContextAvg,
};

enum class KnnVariant { UserKnn, ItemKnn };
enum class MfVariant { Pmf, BiasedMf };

class AveragesModel : public Recommender {
public:
    AveragesModel(AverageVariant variant, const RatingTable& train);
    AveragesModel(AverageVariant variant, std::string name, const RatingMatrix& data,
                  RatingScale scale, std::vector<int> cond_counts);

    double score(int user, int item, const ContextSituation& s) const override;

    double global_mean() const { return mu_; }

private:
    struct MeanCell {
        double sum = 0.0;
        int count = 0;
        double mean() const { return sum / count; }
    };
    using SituationMeans = std::unordered_map<ContextSituation, MeanCell, SituationHash>;

    double fallback(int user, int item) const;
    bool user_seen(int u) const { return u >= 0 && u < (int)user_.size() && user_[u].count > 0; }
    bool item_seen(int i) const { return i >= 0 && i < (int)item_.size() && item_[i].count > 0; }

    AverageVariant variant_;
    double mu_ = 0.0;
    std::vector<MeanCell> user_, item_;
    SituationMeans ctx_;
    std::vector<SituationMeans> item_ctx_, user_ctx_;
};

class KnnModel : public Recommender {
public:
    KnnModel(KnnVariant variant, std::string name, const RatingMatrix& data,
             RatingScale scale, std::vector<int> cond_counts, const HyperParams& hp);

    double score(int user, int item, const ContextSituation& s) const override;

    /// Shrunk Pearson similarity between two users (UserKNN) or items (ItemKNN).
    double similarity(int a, int b) const;

private:
    double fallback(int user, int item) const;

    KnnVariant variant_;
    int k_;
    int num_primary_ = 0;                   // users for UserKNN, items for ItemKNN
    int num_secondary_ = 0;
    std::vector<double> sims_;              // dense num_primary x num_primary
    // Per-primary profile over secondary indices, sorted by secondary.
    std::vector<std::vector<std::pair<int, double>>> profiles_;
    // Per-secondary list of (primary, rating), sorted by primary.
    std::vector<std::vector<std::pair<int, double>>> raters_;
    std::vector<double> primary_mean_, user_mean_, item_mean_;
    std::vector<bool> user_seen_, item_seen_;
    double mu_ = 0.0;
};

class MfModel : public Recommender {
public:
    MfModel(MfVariant variant, std::string name, int num_users, int num_items,
            RatingScale scale, std::vector<int> cond_counts, const HyperParams& hp);

    double score(int user, int item, const ContextSituation& s) const override;

    // Training-objective probes; tests run finite differences against these.
    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& flat);
    double objective(const std::vector<MatrixEntry>& entries) const;
    std::vector<double> gradient(const std::vector<MatrixEntry>& entries) const;

    void train(const std::vector<MatrixEntry>& entries, const HyperParams& hp);

    double global_mean() const { return mu_; }
    double user_bias(int u) const { return bu_[u]; }
    double item_bias(int i) const { return bi_[i]; }

private:
    friend class CamfProbe;
    double raw(int u, int i) const;   // no cold fallback; assumes indices valid

    MfVariant variant_;
    int factors_;
    double reg_user_, reg_item_;
    double mu_ = 0.0;
    std::vector<double> p_, q_;       // row-major num x factors
    std::vector<double> bu_, bi_;
    std::vector<bool> user_seen_, item_seen_;
};

class SlimModel : public Recommender {
public:
    SlimModel(std::string name, int num_items, RatingScale scale,
              std::vector<int> cond_counts);

    double score(int user, int item, const ContextSituation& s) const override;

    double coefficient(int j, int i) const { return w_[(size_t)j * num_items_ + i]; }
    void set_coefficient(int j, int i, double v) { w_[(size_t)j * num_items_ + i] = v; }
    const std::vector<double>& objective_history() const { return history_; }

    void train(const RatingMatrix& data, const HyperParams& hp);

private:
    int num_items_;
    std::vector<double> w_;                                    // [j][i], diag 0
    std::vector<std::vector<std::pair<int, double>>> profiles_;   // per user
    std::vector<double> history_;
};

std::unique_ptr<Recommender> fit_average(AverageVariant variant, const RatingTable& train);
std::unique_ptr<Recommender> fit_knn(KnnVariant variant, const RatingTable& train,
                                     const HyperParams& hp);
std::unique_ptr<Recommender> fit_mf(MfVariant variant, const RatingTable& train,
                                    const HyperParams& hp);
std::unique_ptr<Recommender> fit_slim(const RatingTable& train, const HyperParams& hp);

/// True for algorithms that can train on a plain 2D rating matrix and so
/// may follow a splitting transformation.
bool is_two_dimensional(const std::string& algorithm);

/// Trains one of the 2D algorithms directly on a matrix (the splitting
/// pipeline path). Throws for names that need contextual input.
std::unique_ptr<Recommender> fit_traditional_matrix(const std::string& algorithm,
                                                    const RatingMatrix& data,
                                                    RatingScale scale,
                                                    std::vector<int> cond_counts,
                                                    const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_BASELINES_HPP

// Context-aware matrix factorization. Deviation variants (CAMF_C/CI/CU/CUCI)
// add learned per-condition rating deviations on top of a biased-MF
// backbone; similarity variants (CAMF_ICS/LCS/MCS) scale the backbone score
// by a learned similarity between the situation and the all-"na" anchor.

#ifndef CTXREC_CAMF_HPP
#define CTXREC_CAMF_HPP

#include <memory>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

enum class CamfVariant { C, CI, CU, CUCI };
enum class SimVariant { ICS, LCS, MCS };

struct CamfFitOptions {
    // Keeps all deviations pinned at zero; the trainer then walks exactly
    // the BiasedMF path (same draws, same updates).
    bool freeze_deviations = false;
};

class CamfModel : public Recommender {
public:
    CamfModel(CamfVariant variant, std::string name, const RatingTable& train,
              const HyperParams& hp);

    double score(int user, int item, const ContextSituation& s) const override;

    /// Sum of the active conditions' deviations for this (user, item).
    double deviation(int user, int item, const ContextSituation& s) const;

    double condition_deviation(int dim, int cond) const;
    double item_condition_deviation(int item, int dim, int cond) const;
    double user_condition_deviation(int user, int dim, int cond) const;
    double global_mean() const { return mu_; }

    void set_global_mean(double mu) { mu_ = mu; }
    void set_condition_deviation(int dim, int cond, double v);
    void set_item_condition_deviation(int item, int dim, int cond, double v);
    void set_user_condition_deviation(int user, int dim, int cond, double v);

    // Full-batch objective/gradient over explicit rows; the finite-difference
    // tests drive these.
    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& flat);
    double objective(const std::vector<RatingTuple>& rows) const;
    std::vector<double> gradient(const std::vector<RatingTuple>& rows) const;

    void train(const RatingTable& train, const HyperParams& hp,
               const CamfFitOptions& opts);

private:
    double raw(int u, int i, const ContextSituation& s) const;
    // Deviations are identified only up to a per-dimension constant; after
    // training each dimension is re-anchored so its "na" deviation is zero,
    // with the shift absorbed into mu (C) or the biases (CI/CU). Predictions
    // are unchanged.
    void anchor_deviations_to_na();

    CamfVariant variant_;
    int factors_;
    int total_conds_ = 0;
    double reg_user_, reg_item_, reg_ctx_;
    double mu_ = 0.0;
    std::vector<int> cond_offset_;
    std::vector<double> bu_, bi_, p_, q_;
    std::vector<double> dev_c_;       // [total_conds]
    std::vector<double> dev_item_;    // [num_items * total_conds]
    std::vector<double> dev_user_;    // [num_users * total_conds]
    std::vector<bool> user_seen_, item_seen_;
};

class ContextSimModel : public Recommender {
public:
    ContextSimModel(SimVariant variant, std::string name, const RatingTable& train,
                    const HyperParams& hp);

    double score(int user, int item, const ContextSituation& s) const override;

    /// Situation similarity to the all-"na" anchor; always in (0, 1].
    double gamma(const ContextSituation& s) const;
    double ics_similarity(int dim, int cond) const;
    void set_ics_similarity(int dim, int cond, double v);
    double global_mean() const { return mu_; }
    void set_global_mean(double mu) { mu_ = mu; }

    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& flat);
    double objective(const std::vector<RatingTuple>& rows) const;
    std::vector<double> gradient(const std::vector<RatingTuple>& rows) const;

    void train(const RatingTable& train, const HyperParams& hp);

private:
    double base(int u, int i) const;        // cold-safe 2D part
    double base_raw(int u, int i) const;

    SimVariant variant_;
    int factors_;
    int total_conds_ = 0;
    double reg_user_, reg_item_, reg_ctx_;
    double mu_ = 0.0;
    std::vector<int> cond_offset_;
    std::vector<double> bu_, bi_, p_, q_;
    std::vector<double> sim_;     // ICS: per condition, "na" entries unused
    std::vector<double> vecs_;    // LCS: condition vectors, row-major
    std::vector<double> coord_;   // MCS: condition coordinates
    std::vector<bool> user_seen_, item_seen_;
};

std::unique_ptr<Recommender> fit_camf(CamfVariant variant, const RatingTable& train,
                                      const HyperParams& hp,
                                      const CamfFitOptions& opts = {});
std::unique_ptr<Recommender> fit_context_sim(SimVariant variant,
                                             const RatingTable& train,
                                             const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_CAMF_HPP

// Contextual SLIM for top-N recommendation: an item-item coefficient matrix
// (nonnegative, zero diagonal) whose neighbor ratings are shifted by learned
// contextual deviations before aggregation.

#ifndef CTXREC_CSLIM_HPP
#define CTXREC_CSLIM_HPP

#include <memory>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

enum class CslimVariant { C, CI, CU, CUCI };

class CslimModel : public Recommender {
public:
    CslimModel(CslimVariant variant, std::string name, const RatingTable& train,
               const HyperParams& hp);

    /// score(u,i,s) = sum over the user's other rated items j of
    /// (R_uj + D_j(s)) * W_ji, with R the context-collapsed profile.
    double score(int user, int item, const ContextSituation& s) const override;

    bool ranking_only() const override { return true; }

    double coefficient(int j, int i) const { return w_[(size_t)j * num_items_ + i]; }
    double condition_deviation(int dim, int cond) const;
    const std::vector<double>& objective_history() const { return history_; }

    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& flat);
    double objective(const std::vector<RatingTuple>& rows) const;
    std::vector<double> gradient(const std::vector<RatingTuple>& rows) const;

    void train(const RatingTable& train, const HyperParams& hp);

    /// Direct access for tests that plant coefficients.
    void set_coefficient(int j, int i, double v) { w_[(size_t)j * num_items_ + i] = v; }
    void set_condition_deviation(int dim, int cond, double v);

private:
    double situation_dev(const ContextSituation& s, int user, int j) const;

    CslimVariant variant_;
    int num_items_ = 0;
    int total_conds_ = 0;
    double l1_, l2_, reg_ctx_;
    std::vector<int> cond_offset_;
    std::vector<double> w_;            // [j][i], diag 0, nonnegative
    std::vector<double> dev_c_;        // C
    std::vector<double> dev_item_;     // CI / CUCI, [item][cond]
    std::vector<double> dev_user_;     // CU / CUCI, [user][cond]
    std::vector<std::vector<std::pair<int, double>>> profiles_;   // collapsed
    std::vector<double> history_;
};

std::unique_ptr<Recommender> fit_cslim(CslimVariant variant, const RatingTable& train,
                                       const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_CSLIM_HPP

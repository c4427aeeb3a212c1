// CP-style tensor factorization with one factor matrix per context
// dimension: score(u, i, s) = sum_k p_uk * q_ik * prod_d z[d][active_d][k].
// Bias-free; context factor rows start near 1 so training begins at an
// MF-equivalent point.

#ifndef CTXREC_CPTF_HPP
#define CTXREC_CPTF_HPP

#include <memory>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

class CptfModel : public Recommender {
public:
    CptfModel(std::string name, const RatingTable& train, const HyperParams& hp);

    double score(int user, int item, const ContextSituation& s) const override;

    std::vector<double>& user_factors() { return p_; }
    std::vector<double>& item_factors() { return q_; }
    /// Pins every context factor entry to 1 (the MF-equivalent point).
    void pin_context_factors_to_one();
    double global_mean() const { return mu_; }

    std::vector<double> pack_params() const;
    void unpack_params(const std::vector<double>& flat);
    double objective(const std::vector<RatingTuple>& rows) const;
    std::vector<double> gradient(const std::vector<RatingTuple>& rows) const;

    void train(const RatingTable& train, const HyperParams& hp);

private:
    double raw(int u, int i, const ContextSituation& s) const;

    int factors_;
    double reg_user_, reg_item_, reg_ctx_;
    double mu_ = 0.0;
    std::vector<int> cond_offset_;
    int total_conds_ = 0;
    std::vector<double> p_, q_;
    std::vector<double> z_;   // [global condition][factor], row-major
    std::vector<bool> user_seen_, item_seen_;
};

std::unique_ptr<Recommender> fit_cptf(const RatingTable& train, const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_CPTF_HPP

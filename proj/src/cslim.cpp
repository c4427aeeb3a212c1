#include "ctxrec/cslim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "ctxrec/baselines.hpp"

namespace ctxrec {

namespace {

const char* cslim_name(CslimVariant v) {
    switch (v) {
        case CslimVariant::C: return "cslim_c";
        case CslimVariant::CI: return "cslim_ci";
        case CslimVariant::CU: return "cslim_cu";
        case CslimVariant::CUCI: return "cslim_cuci";
    }
    return "?";
}

}  // namespace

CslimModel::CslimModel(CslimVariant variant, std::string name, const RatingTable& train,
                       const HyperParams& hp)
    : Recommender(std::move(name), train),
      variant_(variant),
      l1_(hp.l1_reg),
      l2_(hp.l2_reg),
      reg_ctx_(hp.reg_context) {
    num_items_ = train.num_items();
    const ContextSchema& schema = train.schema();
    cond_offset_.resize(schema.dimension_count());
    int acc = 0;
    for (int d = 0; d < schema.dimension_count(); ++d) {
        cond_offset_[d] = acc;
        acc += schema.condition_count(d);
    }
    total_conds_ = acc;

    w_.assign((size_t)num_items_ * num_items_, 0.0);
    if (variant_ == CslimVariant::C) dev_c_.assign(total_conds_, 0.0);
    if (variant_ == CslimVariant::CI || variant_ == CslimVariant::CUCI)
        dev_item_.assign((size_t)num_items_ * total_conds_, 0.0);
    if (variant_ == CslimVariant::CU || variant_ == CslimVariant::CUCI)
        dev_user_.assign((size_t)train.num_users() * total_conds_, 0.0);

    RatingMatrix m = collapse_context(train);
    profiles_.assign(m.num_users, {});
    for (const auto& e : m.entries) profiles_[e.user].emplace_back(e.item, e.rating);
    for (auto& p : profiles_) std::sort(p.begin(), p.end());
}

double CslimModel::condition_deviation(int dim, int cond) const {
    return dev_c_.at(cond_offset_[dim] + cond);
}

void CslimModel::set_condition_deviation(int dim, int cond, double v) {
    dev_c_.at(cond_offset_[dim] + cond) = v;
}

double CslimModel::situation_dev(const ContextSituation& s, int user, int j) const {
    double dev = 0.0;
    for (size_t d = 0; d < s.active.size(); ++d) {
        int g = cond_offset_[d] + s.active[d];
        switch (variant_) {
            case CslimVariant::C:
                dev += dev_c_[g];
                break;
            case CslimVariant::CI:
                dev += dev_item_[(size_t)j * total_conds_ + g];
                break;
            case CslimVariant::CU:
                dev += dev_user_[(size_t)user * total_conds_ + g];
                break;
            case CslimVariant::CUCI:
                dev += dev_item_[(size_t)j * total_conds_ + g] +
                       dev_user_[(size_t)user * total_conds_ + g];
                break;
        }
    }
    return dev;
}

double CslimModel::score(int user, int item, const ContextSituation& s) const {
    if (user < 0 || user >= (int)profiles_.size()) return 0.0;
    double v = 0.0;
    for (const auto& [j, r] : profiles_[user]) {
        if (j == item) continue;
        double wji = w_[(size_t)j * num_items_ + item];
        if (wji == 0.0) continue;
        v += (r + situation_dev(s, user, j)) * wji;
    }
    return v;
}

std::vector<double> CslimModel::pack_params() const {
    std::vector<double> flat;
    flat.reserve(w_.size() + dev_c_.size() + dev_user_.size() + dev_item_.size());
    flat.insert(flat.end(), w_.begin(), w_.end());
    flat.insert(flat.end(), dev_c_.begin(), dev_c_.end());
    flat.insert(flat.end(), dev_user_.begin(), dev_user_.end());
    flat.insert(flat.end(), dev_item_.begin(), dev_item_.end());
    return flat;
}

void CslimModel::unpack_params(const std::vector<double>& flat) {
    size_t off = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(flat.begin() + off, dst.size(), dst.begin());
        off += dst.size();
    };
    take(w_);
    take(dev_c_);
    take(dev_user_);
    take(dev_item_);
}

// Objective: sum_t (r_t - score_t)^2 + l1*|W| + (l2/2)*|W|^2 + rc*|dev|^2,
// with the diagonal excluded from the W penalties (it is structurally 0).
double CslimModel::objective(const std::vector<RatingTuple>& rows) const {
    double obj = 0.0;
    for (const auto& row : rows) {
        double err = row.rating - score(row.user, row.item, row.situation);
        obj += err * err;
    }
    double l1s = 0.0, l2s = 0.0;
    for (int j = 0; j < num_items_; ++j)
        for (int i = 0; i < num_items_; ++i) {
            if (i == j) continue;
            double v = w_[(size_t)j * num_items_ + i];
            l1s += std::abs(v);
            l2s += v * v;
        }
    double devs = 0.0;
    for (double v : dev_c_) devs += v * v;
    for (double v : dev_user_) devs += v * v;
    for (double v : dev_item_) devs += v * v;
    return obj + l1_ * l1s + 0.5 * l2_ * l2s + reg_ctx_ * devs;
}

std::vector<double> CslimModel::gradient(const std::vector<RatingTuple>& rows) const {
    std::vector<double> g(w_.size() + dev_c_.size() + dev_user_.size() + dev_item_.size(),
                          0.0);
    double* gw = g.data();
    double* gdc = gw + w_.size();
    double* gdu = gdc + dev_c_.size();
    double* gdi = gdu + dev_user_.size();

    for (const auto& row : rows) {
        if (row.user < 0 || row.user >= (int)profiles_.size()) continue;
        double err = row.rating - score(row.user, row.item, row.situation);
        double wsum = 0.0;   // sum of W_ji over the profile, for shared devs
        for (const auto& [j, r] : profiles_[row.user]) {
            if (j == row.item) continue;
            double wji = w_[(size_t)j * num_items_ + row.item];
            double a = r + situation_dev(row.situation, row.user, j);
            gw[(size_t)j * num_items_ + row.item] += -2.0 * err * a;
            wsum += wji;
            if (variant_ == CslimVariant::CI || variant_ == CslimVariant::CUCI)
                for (size_t d = 0; d < row.situation.active.size(); ++d) {
                    int gc = cond_offset_[d] + row.situation.active[d];
                    gdi[(size_t)j * total_conds_ + gc] += -2.0 * err * wji;
                }
        }
        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            int gc = cond_offset_[d] + row.situation.active[d];
            if (variant_ == CslimVariant::C) gdc[gc] += -2.0 * err * wsum;
            if (variant_ == CslimVariant::CU || variant_ == CslimVariant::CUCI)
                gdu[(size_t)row.user * total_conds_ + gc] += -2.0 * err * wsum;
        }
    }

    for (int j = 0; j < num_items_; ++j)
        for (int i = 0; i < num_items_; ++i) {
            if (i == j) continue;
            double v = w_[(size_t)j * num_items_ + i];
            double sgn = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
            gw[(size_t)j * num_items_ + i] += l1_ * sgn + l2_ * v;
        }
    size_t off = 0;
    for (double v : dev_c_) gdc[off++] += 2.0 * reg_ctx_ * v;
    off = 0;
    for (double v : dev_user_) gdu[off++] += 2.0 * reg_ctx_ * v;
    off = 0;
    for (double v : dev_item_) gdi[off++] += 2.0 * reg_ctx_ * v;
    return g;
}

void CslimModel::train(const RatingTable& train, const HyperParams& hp) {
    const auto& rows = train.rows();
    const double l1 = l1_, l2 = l2_, rc = reg_ctx_;

    // Tuples grouped by target item for the coordinate pass.
    std::vector<std::vector<int>> by_item(num_items_);
    for (size_t t = 0; t < rows.size(); ++t) by_item[rows[t].item].push_back((int)t);

    history_.clear();
    history_.push_back(objective(rows));

    SgdHooks hooks;
    hooks.run_epoch = [&](double lr) {
        // (a) gradient steps on the deviations, then one global decay pass.
        for (const auto& row : rows) {
            double err = row.rating - score(row.user, row.item, row.situation);
            double wsum = 0.0;
            for (const auto& [j, r] : profiles_[row.user]) {
                if (j == row.item) continue;
                double wji = w_[(size_t)j * num_items_ + row.item];
                if (wji == 0.0) continue;
                wsum += wji;
                if (variant_ == CslimVariant::CI || variant_ == CslimVariant::CUCI)
                    for (size_t d = 0; d < row.situation.active.size(); ++d) {
                        int gc = cond_offset_[d] + row.situation.active[d];
                        dev_item_[(size_t)j * total_conds_ + gc] += lr * 2.0 * err * wji;
                    }
            }
            if (wsum == 0.0) continue;
            for (size_t d = 0; d < row.situation.active.size(); ++d) {
                int gc = cond_offset_[d] + row.situation.active[d];
                if (variant_ == CslimVariant::C) dev_c_[gc] += lr * 2.0 * err * wsum;
                if (variant_ == CslimVariant::CU || variant_ == CslimVariant::CUCI)
                    dev_user_[(size_t)row.user * total_conds_ + gc] +=
                        lr * 2.0 * err * wsum;
            }
        }
        double decay = std::max(0.0, 1.0 - 2.0 * lr * rc);
        for (double& v : dev_c_) v *= decay;
        for (double& v : dev_user_) v *= decay;
        for (double& v : dev_item_) v *= decay;

        // (b) coordinate updates on W columns, nonnegative, zero diagonal.
        // Columns are independent given the deviation snapshot.
        parallel_for(num_items_, [&](int i) {
            const auto& tuples = by_item[i];
            if (tuples.empty()) return;
            // Per tuple: neighbor coefficients a_tj and current residual,
            // indexed per coordinate.
            std::vector<std::vector<std::pair<int, double>>> by_coord(num_items_);
            std::vector<double> res(tuples.size());
            for (size_t t = 0; t < tuples.size(); ++t) {
                const auto& row = rows[tuples[t]];
                double pred = 0.0;
                for (const auto& [j, r] : profiles_[row.user]) {
                    if (j == i) continue;
                    double a = r + situation_dev(row.situation, row.user, j);
                    by_coord[j].emplace_back((int)t, a);
                    pred += a * w_[(size_t)j * num_items_ + i];
                }
                res[t] = row.rating - pred;
            }

            for (int j = 0; j < num_items_; ++j) {
                if (j == i || by_coord[j].empty()) continue;
                double& wj = w_[(size_t)j * num_items_ + i];
                double old = wj;
                double num = -l1, den = l2;
                for (const auto& [t, a] : by_coord[j]) {
                    num += 2.0 * a * (res[t] + a * old);
                    den += 2.0 * a * a;
                }
                double next = std::max(0.0, num / den);
                if (next != old) {
                    for (const auto& [t, a] : by_coord[j]) res[t] -= a * (next - old);
                    wj = next;
                }
            }
        });
    };
    hooks.objective = [&]() { return objective(rows); };
    hooks.snapshot = [&]() { return pack_params(); };
    hooks.restore = [&](const std::vector<double>& s) { unpack_params(s); };
    hooks.on_iteration = [&](int iter, double obj) {
        history_.push_back(obj);
        if (hp.verbose) std::printf("  sweep %d: objective %.6f\n", iter, obj);
    };
    run_sgd_loop(hp, hooks);
}

std::unique_ptr<Recommender> fit_cslim(CslimVariant variant, const RatingTable& train,
                                       const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    auto model = std::make_unique<CslimModel>(variant, cslim_name(variant), train, hp);
    model->train(train, hp);
    return model;
}

}  // namespace ctxrec

#include "ctxrec/cptf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace ctxrec {

CptfModel::CptfModel(std::string name, const RatingTable& train, const HyperParams& hp)
    : Recommender(std::move(name), train),
      factors_(hp.num_factors),
      reg_user_(hp.reg_user),
      reg_item_(hp.reg_item),
      reg_ctx_(hp.reg_context) {
    const ContextSchema& schema = train.schema();
    cond_offset_.resize(schema.dimension_count());
    int acc = 0;
    for (int d = 0; d < schema.dimension_count(); ++d) {
        cond_offset_[d] = acc;
        acc += schema.condition_count(d);
    }
    total_conds_ = acc;

    Rng rng(static_cast<uint32_t>(hp.rand_seed));
    p_.resize((size_t)train.num_users() * factors_);
    q_.resize((size_t)train.num_items() * factors_);
    for (auto& v : p_) v = rng.normal(hp.init_std);
    for (auto& v : q_) v = rng.normal(hp.init_std);
    // Zero-initialized context factors would kill every gradient through
    // the product; start near the all-ones (MF-equivalent) point instead.
    z_.resize((size_t)total_conds_ * factors_);
    for (auto& v : z_) v = 1.0 + rng.normal(hp.init_std);

    user_seen_.assign(train.num_users(), false);
    item_seen_.assign(train.num_items(), false);
}

void CptfModel::pin_context_factors_to_one() {
    std::fill(z_.begin(), z_.end(), 1.0);
}

double CptfModel::raw(int u, int i, const ContextSituation& s) const {
    const double* pu = &p_[(size_t)u * factors_];
    const double* qi = &q_[(size_t)i * factors_];
    double v = 0.0;
    for (int k = 0; k < factors_; ++k) {
        double term = pu[k] * qi[k];
        for (size_t d = 0; d < s.active.size(); ++d)
            term *= z_[(size_t)(cond_offset_[d] + s.active[d]) * factors_ + k];
        v += term;
    }
    return v;
}

double CptfModel::score(int user, int item, const ContextSituation& s) const {
    bool us = user >= 0 && user < (int)user_seen_.size() && user_seen_[user];
    bool is = item >= 0 && item < (int)item_seen_.size() && item_seen_[item];
    if (!us || !is) return mu_;
    return raw(user, item, s);
}

std::vector<double> CptfModel::pack_params() const {
    std::vector<double> flat;
    flat.reserve(p_.size() + q_.size() + z_.size());
    flat.insert(flat.end(), p_.begin(), p_.end());
    flat.insert(flat.end(), q_.begin(), q_.end());
    flat.insert(flat.end(), z_.begin(), z_.end());
    return flat;
}

void CptfModel::unpack_params(const std::vector<double>& flat) {
    size_t off = 0;
    std::copy_n(flat.begin(), p_.size(), p_.begin());
    off += p_.size();
    std::copy_n(flat.begin() + off, q_.size(), q_.begin());
    off += q_.size();
    std::copy_n(flat.begin() + off, z_.size(), z_.begin());
}

double CptfModel::objective(const std::vector<RatingTuple>& rows) const {
    double obj = 0.0;
    for (const auto& row : rows) {
        double err = row.rating - raw(row.user, row.item, row.situation);
        obj += 0.5 * err * err;
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];
        double pn = 0.0, qn = 0.0, zn = 0.0;
        for (int k = 0; k < factors_; ++k) {
            pn += pu[k] * pu[k];
            qn += qi[k] * qi[k];
        }
        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            const double* zr =
                &z_[(size_t)(cond_offset_[d] + row.situation.active[d]) * factors_];
            for (int k = 0; k < factors_; ++k) zn += zr[k] * zr[k];
        }
        obj += 0.5 * (reg_user_ * pn + reg_item_ * qn + reg_ctx_ * zn);
    }
    return obj;
}

std::vector<double> CptfModel::gradient(const std::vector<RatingTuple>& rows) const {
    std::vector<double> g(p_.size() + q_.size() + z_.size(), 0.0);
    double* gp = g.data();
    double* gq = gp + p_.size();
    double* gz = gq + q_.size();

    const int dims = static_cast<int>(cond_offset_.size());
    std::vector<double> modes(dims + 2), prefix(dims + 3), suffix(dims + 3);

    for (const auto& row : rows) {
        double err = row.rating - raw(row.user, row.item, row.situation);
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];
        for (int k = 0; k < factors_; ++k) {
            // modes: [p, q, z_0, .., z_{D-1}]; d(score_k)/d(mode_m) is the
            // product of the other modes, via prefix/suffix products.
            modes[0] = pu[k];
            modes[1] = qi[k];
            for (int d = 0; d < dims; ++d)
                modes[2 + d] =
                    z_[(size_t)(cond_offset_[d] + row.situation.active[d]) * factors_ + k];
            int m = dims + 2;
            prefix[0] = 1.0;
            for (int t = 0; t < m; ++t) prefix[t + 1] = prefix[t] * modes[t];
            suffix[m] = 1.0;
            for (int t = m - 1; t >= 0; --t) suffix[t] = suffix[t + 1] * modes[t];

            gp[(size_t)row.user * factors_ + k] +=
                -err * (prefix[0] * suffix[1]) + reg_user_ * pu[k];
            gq[(size_t)row.item * factors_ + k] +=
                -err * (prefix[1] * suffix[2]) + reg_item_ * qi[k];
            for (int d = 0; d < dims; ++d) {
                size_t at =
                    (size_t)(cond_offset_[d] + row.situation.active[d]) * factors_ + k;
                gz[at] += -err * (prefix[2 + d] * suffix[3 + d]) + reg_ctx_ * z_[at];
            }
        }
    }
    return g;
}

void CptfModel::train(const RatingTable& train, const HyperParams& hp) {
    const auto& rows = train.rows();
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += r.rating;
        user_seen_[r.user] = true;
        item_seen_[r.item] = true;
    }
    mu_ = sum / rows.size();

    std::vector<int> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> val_idx;
    if (!hp.early_stop_metric.empty()) val_idx = carve_validation_slice(idx, hp.rand_seed);
    Rng order_rng(static_cast<uint32_t>(hp.rand_seed) ^ 0x517cc1b7u);
    shuffle_indices(idx, order_rng);
    std::vector<RatingTuple> train_rows;
    train_rows.reserve(idx.size());
    for (int i : idx) train_rows.push_back(rows[i]);

    const int dims = static_cast<int>(cond_offset_.size());
    std::vector<double> modes(dims + 2), prefix(dims + 3), suffix(dims + 3);

    SgdHooks hooks;
    hooks.run_epoch = [&](double lr) {
        for (const auto& row : train_rows) {
            double err = row.rating - raw(row.user, row.item, row.situation);
            double* pu = &p_[(size_t)row.user * factors_];
            double* qi = &q_[(size_t)row.item * factors_];
            for (int k = 0; k < factors_; ++k) {
                modes[0] = pu[k];
                modes[1] = qi[k];
                for (int d = 0; d < dims; ++d)
                    modes[2 + d] =
                        z_[(size_t)(cond_offset_[d] + row.situation.active[d]) * factors_ + k];
                int m = dims + 2;
                prefix[0] = 1.0;
                for (int t = 0; t < m; ++t) prefix[t + 1] = prefix[t] * modes[t];
                suffix[m] = 1.0;
                for (int t = m - 1; t >= 0; --t) suffix[t] = suffix[t + 1] * modes[t];

                pu[k] += lr * (err * (prefix[0] * suffix[1]) - reg_user_ * modes[0]);
                qi[k] += lr * (err * (prefix[1] * suffix[2]) - reg_item_ * modes[1]);
                for (int d = 0; d < dims; ++d) {
                    size_t at =
                        (size_t)(cond_offset_[d] + row.situation.active[d]) * factors_ + k;
                    z_[at] += lr * (err * (prefix[2 + d] * suffix[3 + d]) -
                                    reg_ctx_ * modes[2 + d]);
                }
            }
        }
    };
    hooks.objective = [&]() { return objective(train_rows); };
    hooks.snapshot = [&]() { return pack_params(); };
    hooks.restore = [&](const std::vector<double>& s) { unpack_params(s); };
    if (!val_idx.empty()) {
        hooks.validation_error = [&, val_idx]() {
            std::vector<std::pair<double, double>> pairs;
            pairs.reserve(val_idx.size());
            for (int i : val_idx) {
                const auto& row = rows[i];
                pairs.emplace_back(row.rating,
                                   scale_.clamp(score(row.user, row.item, row.situation)));
            }
            return validation_metric(hp.early_stop_metric, pairs);
        };
    }
    if (hp.verbose) {
        hooks.on_iteration = [&](int iter, double obj) {
            std::printf("  iter %d: loss %.6f\n", iter, obj);
        };
    }
    run_sgd_loop(hp, hooks);
}

std::unique_ptr<Recommender> fit_cptf(const RatingTable& train, const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    auto model = std::make_unique<CptfModel>("cptf", train, hp);
    model->train(train, hp);
    return model;
}

}  // namespace ctxrec

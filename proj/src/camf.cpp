#include "ctxrec/camf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace ctxrec {

namespace {

constexpr int kNa = ContextSchema::kNaCondition;
constexpr double kIcsFloor = 1e-3;

std::vector<int> offsets_of(const ContextSchema& schema) {
    std::vector<int> off(schema.dimension_count(), 0);
    int acc = 0;
    for (int d = 0; d < schema.dimension_count(); ++d) {
        off[d] = acc;
        acc += schema.condition_count(d);
    }
    return off;
}

const char* camf_name(CamfVariant v) {
    switch (v) {
        case CamfVariant::C: return "camf_c";
        case CamfVariant::CI: return "camf_ci";
        case CamfVariant::CU: return "camf_cu";
        case CamfVariant::CUCI: return "camf_cuci";
    }
    return "?";
}

const char* sim_name(SimVariant v) {
    switch (v) {
        case SimVariant::ICS: return "camf_ics";
        case SimVariant::LCS: return "camf_lcs";
        case SimVariant::MCS: return "camf_mcs";
    }
    return "?";
}

}  // namespace

// ---------------------------------------------------------------------------
// CamfModel

CamfModel::CamfModel(CamfVariant variant, std::string name, const RatingTable& train,
                     const HyperParams& hp)
    : Recommender(std::move(name), train),
      variant_(variant),
      factors_(hp.num_factors),
      reg_user_(hp.reg_user),
      reg_item_(hp.reg_item),
      reg_ctx_(hp.reg_context) {
    const ContextSchema& schema = train.schema();
    cond_offset_ = offsets_of(schema);
    total_conds_ = schema.total_conditions();

    // Same draw order as MfModel so that a deviation-frozen CAMF walks the
    // BiasedMF trajectory exactly.
    Rng rng(static_cast<uint32_t>(hp.rand_seed));
    p_.resize((size_t)train.num_users() * factors_);
    q_.resize((size_t)train.num_items() * factors_);
    for (auto& v : p_) v = rng.normal(hp.init_std);
    for (auto& v : q_) v = rng.normal(hp.init_std);
    bu_.assign(train.num_users(), 0.0);
    bi_.assign(train.num_items(), 0.0);
    user_seen_.assign(train.num_users(), false);
    item_seen_.assign(train.num_items(), false);

    if (variant_ == CamfVariant::C) dev_c_.assign(total_conds_, 0.0);
    if (variant_ == CamfVariant::CI || variant_ == CamfVariant::CUCI)
        dev_item_.assign((size_t)train.num_items() * total_conds_, 0.0);
    if (variant_ == CamfVariant::CU || variant_ == CamfVariant::CUCI)
        dev_user_.assign((size_t)train.num_users() * total_conds_, 0.0);
}

double CamfModel::deviation(int user, int item, const ContextSituation& s) const {
    double dev = 0.0;
    for (size_t d = 0; d < s.active.size(); ++d) {
        int g = cond_offset_[d] + s.active[d];
        switch (variant_) {
            case CamfVariant::C:
                dev += dev_c_[g];
                break;
            case CamfVariant::CI:
                if (item >= 0 && item < (int)bi_.size())
                    dev += dev_item_[(size_t)item * total_conds_ + g];
                break;
            case CamfVariant::CU:
                if (user >= 0 && user < (int)bu_.size())
                    dev += dev_user_[(size_t)user * total_conds_ + g];
                break;
            case CamfVariant::CUCI:
                if (item >= 0 && item < (int)bi_.size())
                    dev += dev_item_[(size_t)item * total_conds_ + g];
                if (user >= 0 && user < (int)bu_.size())
                    dev += dev_user_[(size_t)user * total_conds_ + g];
                break;
        }
    }
    return dev;
}

double CamfModel::condition_deviation(int dim, int cond) const {
    return dev_c_.at(cond_offset_[dim] + cond);
}

double CamfModel::item_condition_deviation(int item, int dim, int cond) const {
    return dev_item_.at((size_t)item * total_conds_ + cond_offset_[dim] + cond);
}

double CamfModel::user_condition_deviation(int user, int dim, int cond) const {
    return dev_user_.at((size_t)user * total_conds_ + cond_offset_[dim] + cond);
}

void CamfModel::set_condition_deviation(int dim, int cond, double v) {
    dev_c_.at(cond_offset_[dim] + cond) = v;
}

void CamfModel::set_item_condition_deviation(int item, int dim, int cond, double v) {
    dev_item_.at((size_t)item * total_conds_ + cond_offset_[dim] + cond) = v;
}

void CamfModel::set_user_condition_deviation(int user, int dim, int cond, double v) {
    dev_user_.at((size_t)user * total_conds_ + cond_offset_[dim] + cond) = v;
}

double CamfModel::raw(int u, int i, const ContextSituation& s) const {
    const double* pu = &p_[(size_t)u * factors_];
    const double* qi = &q_[(size_t)i * factors_];
    double dot = 0.0;
    for (int k = 0; k < factors_; ++k) dot += pu[k] * qi[k];
    return mu_ + bu_[u] + bi_[i] + dot + deviation(u, i, s);
}

double CamfModel::score(int user, int item, const ContextSituation& s) const {
    bool us = user >= 0 && user < (int)bu_.size() && user_seen_[user];
    bool is = item >= 0 && item < (int)bi_.size() && item_seen_[item];
    double v = mu_;
    if (us) v += bu_[user];
    if (is) v += bi_[item];
    if (us && is) {
        const double* pu = &p_[(size_t)user * factors_];
        const double* qi = &q_[(size_t)item * factors_];
        for (int k = 0; k < factors_; ++k) v += pu[k] * qi[k];
    }
    return v + deviation(user, item, s);
}

std::vector<double> CamfModel::pack_params() const {
    std::vector<double> flat;
    flat.reserve(bu_.size() + bi_.size() + p_.size() + q_.size() + dev_c_.size() +
                 dev_item_.size() + dev_user_.size());
    flat.insert(flat.end(), bu_.begin(), bu_.end());
    flat.insert(flat.end(), bi_.begin(), bi_.end());
    flat.insert(flat.end(), p_.begin(), p_.end());
    flat.insert(flat.end(), q_.begin(), q_.end());
    flat.insert(flat.end(), dev_c_.begin(), dev_c_.end());
    flat.insert(flat.end(), dev_user_.begin(), dev_user_.end());
    flat.insert(flat.end(), dev_item_.begin(), dev_item_.end());
    return flat;
}

void CamfModel::unpack_params(const std::vector<double>& flat) {
    size_t off = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(flat.begin() + off, dst.size(), dst.begin());
        off += dst.size();
    };
    take(bu_);
    take(bi_);
    take(p_);
    take(q_);
    take(dev_c_);
    take(dev_user_);
    take(dev_item_);
}

double CamfModel::objective(const std::vector<RatingTuple>& rows) const {
    double obj = 0.0;
    for (const auto& row : rows) {
        double err = row.rating - raw(row.user, row.item, row.situation);
        obj += 0.5 * err * err;
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];
        // Same accumulation order as MfModel::objective so a deviation-frozen
        // model sees bitwise-identical loss values.
        double pn = 0.0, qn = 0.0;
        for (int k = 0; k < factors_; ++k) {
            pn += pu[k] * pu[k];
            qn += qi[k] * qi[k];
        }
        pn += bu_[row.user] * bu_[row.user];
        qn += bi_[row.item] * bi_[row.item];
        obj += 0.5 * reg_user_ * pn + 0.5 * reg_item_ * qn;
        double dn = 0.0;
        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            int g = cond_offset_[d] + row.situation.active[d];
            if (variant_ == CamfVariant::C) {
                dn += dev_c_[g] * dev_c_[g];
            } else {
                if (!dev_item_.empty()) {
                    double v = dev_item_[(size_t)row.item * total_conds_ + g];
                    dn += v * v;
                }
                if (!dev_user_.empty()) {
                    double v = dev_user_[(size_t)row.user * total_conds_ + g];
                    dn += v * v;
                }
            }
        }
        obj += 0.5 * reg_ctx_ * dn;
    }
    return obj;
}

std::vector<double> CamfModel::gradient(const std::vector<RatingTuple>& rows) const {
    std::vector<double> g(bu_.size() + bi_.size() + p_.size() + q_.size() +
                              dev_c_.size() + dev_user_.size() + dev_item_.size(),
                          0.0);
    double* gbu = g.data();
    double* gbi = gbu + bu_.size();
    double* gp = gbi + bi_.size();
    double* gq = gp + p_.size();
    double* gdc = gq + q_.size();
    double* gdu = gdc + dev_c_.size();
    double* gdi = gdu + dev_user_.size();

    for (const auto& row : rows) {
        double err = row.rating - raw(row.user, row.item, row.situation);
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];
        gbu[row.user] += -err + reg_user_ * bu_[row.user];
        gbi[row.item] += -err + reg_item_ * bi_[row.item];
        for (int k = 0; k < factors_; ++k) {
            gp[(size_t)row.user * factors_ + k] += -err * qi[k] + reg_user_ * pu[k];
            gq[(size_t)row.item * factors_ + k] += -err * pu[k] + reg_item_ * qi[k];
        }
        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            int gidx = cond_offset_[d] + row.situation.active[d];
            if (variant_ == CamfVariant::C) {
                gdc[gidx] += -err + reg_ctx_ * dev_c_[gidx];
            } else {
                if (!dev_user_.empty()) {
                    size_t at = (size_t)row.user * total_conds_ + gidx;
                    gdu[at] += -err + reg_ctx_ * dev_user_[at];
                }
                if (!dev_item_.empty()) {
                    size_t at = (size_t)row.item * total_conds_ + gidx;
                    gdi[at] += -err + reg_ctx_ * dev_item_[at];
                }
            }
        }
    }
    return g;
}

void CamfModel::anchor_deviations_to_na() {
    const int dims = static_cast<int>(cond_offset_.size());
    auto dim_size = [&](int d) {
        int end = d + 1 < dims ? cond_offset_[d + 1] : total_conds_;
        return end - cond_offset_[d];
    };
    if (variant_ == CamfVariant::C) {
        for (int d = 0; d < dims; ++d) {
            double shift = dev_c_[cond_offset_[d] + kNa];
            if (shift == 0.0) continue;
            for (int c = 0; c < dim_size(d); ++c) dev_c_[cond_offset_[d] + c] -= shift;
            mu_ += shift;
        }
        return;
    }
    if (!dev_item_.empty()) {
        for (size_t i = 0; i < bi_.size(); ++i) {
            double* dev = &dev_item_[i * total_conds_];
            for (int d = 0; d < dims; ++d) {
                double shift = dev[cond_offset_[d] + kNa];
                if (shift == 0.0) continue;
                for (int c = 0; c < dim_size(d); ++c) dev[cond_offset_[d] + c] -= shift;
                bi_[i] += shift;
            }
        }
    }
    if (!dev_user_.empty()) {
        for (size_t u = 0; u < bu_.size(); ++u) {
            double* dev = &dev_user_[u * total_conds_];
            for (int d = 0; d < dims; ++d) {
                double shift = dev[cond_offset_[d] + kNa];
                if (shift == 0.0) continue;
                for (int c = 0; c < dim_size(d); ++c) dev[cond_offset_[d] + c] -= shift;
                bu_[u] += shift;
            }
        }
    }
}

void CamfModel::train(const RatingTable& train, const HyperParams& hp,
                      const CamfFitOptions& opts) {
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

    const bool learn_dev = !opts.freeze_deviations;
    SgdHooks hooks;
    hooks.run_epoch = [&](double lr) {
        for (const auto& row : train_rows) {
            double err = row.rating - raw(row.user, row.item, row.situation);
            double* pu = &p_[(size_t)row.user * factors_];
            double* qi = &q_[(size_t)row.item * factors_];
            bu_[row.user] += lr * (err - reg_user_ * bu_[row.user]);
            bi_[row.item] += lr * (err - reg_item_ * bi_[row.item]);
            for (int k = 0; k < factors_; ++k) {
                double pk = pu[k], qk = qi[k];
                pu[k] += lr * (err * qk - reg_user_ * pk);
                qi[k] += lr * (err * pk - reg_item_ * qk);
            }
            if (!learn_dev) continue;
            for (size_t d = 0; d < row.situation.active.size(); ++d) {
                int g = cond_offset_[d] + row.situation.active[d];
                if (variant_ == CamfVariant::C) {
                    dev_c_[g] += lr * (err - reg_ctx_ * dev_c_[g]);
                } else {
                    if (!dev_user_.empty()) {
                        double& v = dev_user_[(size_t)row.user * total_conds_ + g];
                        v += lr * (err - reg_ctx_ * v);
                    }
                    if (!dev_item_.empty()) {
                        double& v = dev_item_[(size_t)row.item * total_conds_ + g];
                        v += lr * (err - reg_ctx_ * v);
                    }
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
    if (learn_dev) anchor_deviations_to_na();
}

std::unique_ptr<Recommender> fit_camf(CamfVariant variant, const RatingTable& train,
                                      const HyperParams& hp, const CamfFitOptions& opts) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    auto model = std::make_unique<CamfModel>(variant, camf_name(variant), train, hp);
    model->train(train, hp, opts);
    return model;
}

// ---------------------------------------------------------------------------
// ContextSimModel

ContextSimModel::ContextSimModel(SimVariant variant, std::string name,
                                 const RatingTable& train, const HyperParams& hp)
    : Recommender(std::move(name), train),
      variant_(variant),
      factors_(hp.num_factors),
      reg_user_(hp.reg_user),
      reg_item_(hp.reg_item),
      reg_ctx_(hp.reg_context) {
    const ContextSchema& schema = train.schema();
    cond_offset_ = offsets_of(schema);
    total_conds_ = schema.total_conditions();

    Rng rng(static_cast<uint32_t>(hp.rand_seed));
    p_.resize((size_t)train.num_users() * factors_);
    q_.resize((size_t)train.num_items() * factors_);
    for (auto& v : p_) v = rng.normal(hp.init_std);
    for (auto& v : q_) v = rng.normal(hp.init_std);
    bu_.assign(train.num_users(), 0.0);
    bi_.assign(train.num_items(), 0.0);
    user_seen_.assign(train.num_users(), false);
    item_seen_.assign(train.num_items(), false);

    // All three variants start with gamma == 1 for every situation: ICS
    // similarities at 1, LCS vectors equal within each dimension, MCS
    // coordinates equal within each dimension.
    switch (variant_) {
        case SimVariant::ICS:
            sim_.assign(total_conds_, 1.0);
            break;
        case SimVariant::LCS: {
            vecs_.assign((size_t)total_conds_ * factors_, 0.0);
            for (int d = 0; d < schema.dimension_count(); ++d) {
                std::vector<double> base(factors_);
                for (auto& v : base) v = 1.0 + rng.normal(hp.init_std);
                for (int c = 0; c < schema.condition_count(d); ++c)
                    std::copy(base.begin(), base.end(),
                              vecs_.begin() + (size_t)(cond_offset_[d] + c) * factors_);
            }
            break;
        }
        case SimVariant::MCS:
            coord_.assign(total_conds_, 0.0);
            break;
    }
}

double ContextSimModel::gamma(const ContextSituation& s) const {
    double g = 1.0;
    switch (variant_) {
        case SimVariant::ICS:
            for (size_t d = 0; d < s.active.size(); ++d) {
                if (s.active[d] == kNa) continue;
                g *= sim_[cond_offset_[d] + s.active[d]];
            }
            return g;
        case SimVariant::LCS:
            for (size_t d = 0; d < s.active.size(); ++d) {
                if (s.active[d] == kNa) continue;
                const double* a = &vecs_[(size_t)(cond_offset_[d] + s.active[d]) * factors_];
                const double* b = &vecs_[(size_t)(cond_offset_[d] + kNa) * factors_];
                double ab = 0.0, aa = 0.0, bb = 0.0;
                for (int k = 0; k < factors_; ++k) {
                    ab += a[k] * b[k];
                    aa += a[k] * a[k];
                    bb += b[k] * b[k];
                }
                if (aa < 1e-24 || bb < 1e-24) continue;
                double cosab = ab / std::sqrt(aa * bb);
                double simd = 0.5 * (1.0 + cosab);
                g *= std::max(simd, kIcsFloor);
            }
            return g;
        case SimVariant::MCS: {
            double dist = 0.0;
            for (size_t d = 0; d < s.active.size(); ++d) {
                if (s.active[d] == kNa) continue;
                dist += std::abs(coord_[cond_offset_[d] + s.active[d]] -
                                 coord_[cond_offset_[d] + kNa]);
            }
            return 1.0 / (1.0 + dist);
        }
    }
    return g;
}

double ContextSimModel::ics_similarity(int dim, int cond) const {
    if (cond == kNa) return 1.0;
    return sim_.at(cond_offset_[dim] + cond);
}

void ContextSimModel::set_ics_similarity(int dim, int cond, double v) {
    sim_.at(cond_offset_[dim] + cond) = v;
}

double ContextSimModel::base_raw(int u, int i) const {
    const double* pu = &p_[(size_t)u * factors_];
    const double* qi = &q_[(size_t)i * factors_];
    double dot = 0.0;
    for (int k = 0; k < factors_; ++k) dot += pu[k] * qi[k];
    return mu_ + bu_[u] + bi_[i] + dot;
}

double ContextSimModel::base(int u, int i) const {
    bool us = u >= 0 && u < (int)bu_.size() && user_seen_[u];
    bool is = i >= 0 && i < (int)bi_.size() && item_seen_[i];
    double v = mu_;
    if (us) v += bu_[u];
    if (is) v += bi_[i];
    if (us && is) {
        const double* pu = &p_[(size_t)u * factors_];
        const double* qi = &q_[(size_t)i * factors_];
        for (int k = 0; k < factors_; ++k) v += pu[k] * qi[k];
    }
    return v;
}

double ContextSimModel::score(int user, int item, const ContextSituation& s) const {
    return base(user, item) * gamma(s);
}

std::vector<double> ContextSimModel::pack_params() const {
    std::vector<double> flat;
    flat.insert(flat.end(), bu_.begin(), bu_.end());
    flat.insert(flat.end(), bi_.begin(), bi_.end());
    flat.insert(flat.end(), p_.begin(), p_.end());
    flat.insert(flat.end(), q_.begin(), q_.end());
    flat.insert(flat.end(), sim_.begin(), sim_.end());
    flat.insert(flat.end(), vecs_.begin(), vecs_.end());
    flat.insert(flat.end(), coord_.begin(), coord_.end());
    return flat;
}

void ContextSimModel::unpack_params(const std::vector<double>& flat) {
    size_t off = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(flat.begin() + off, dst.size(), dst.begin());
        off += dst.size();
    };
    take(bu_);
    take(bi_);
    take(p_);
    take(q_);
    take(sim_);
    take(vecs_);
    take(coord_);
}

double ContextSimModel::objective(const std::vector<RatingTuple>& rows) const {
    double obj = 0.0;
    for (const auto& row : rows) {
        double err = row.rating - base_raw(row.user, row.item) * gamma(row.situation);
        obj += 0.5 * err * err;
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];
        double pn = bu_[row.user] * bu_[row.user];
        double qn = bi_[row.item] * bi_[row.item];
        for (int k = 0; k < factors_; ++k) {
            pn += pu[k] * pu[k];
            qn += qi[k] * qi[k];
        }
        obj += 0.5 * reg_user_ * pn + 0.5 * reg_item_ * qn;

        // Context regularization: LCS vectors and MCS coordinates touched by
        // the row (active condition and its anchor); ICS similarities are
        // bounded by projection instead.
        double cn = 0.0;
        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            int c = row.situation.active[d];
            if (c == kNa) continue;
            if (variant_ == SimVariant::LCS) {
                const double* a = &vecs_[(size_t)(cond_offset_[d] + c) * factors_];
                const double* b = &vecs_[(size_t)(cond_offset_[d] + kNa) * factors_];
                for (int k = 0; k < factors_; ++k) cn += a[k] * a[k] + b[k] * b[k];
            } else if (variant_ == SimVariant::MCS) {
                double xc = coord_[cond_offset_[d] + c];
                double xn = coord_[cond_offset_[d] + kNa];
                cn += xc * xc + xn * xn;
            }
        }
        obj += 0.5 * reg_ctx_ * cn;
    }
    return obj;
}

std::vector<double> ContextSimModel::gradient(const std::vector<RatingTuple>& rows) const {
    std::vector<double> g(bu_.size() + bi_.size() + p_.size() + q_.size() +
                              sim_.size() + vecs_.size() + coord_.size(),
                          0.0);
    double* gbu = g.data();
    double* gbi = gbu + bu_.size();
    double* gp = gbi + bi_.size();
    double* gq = gp + p_.size();
    double* gsim = gq + q_.size();
    double* gvec = gsim + sim_.size();
    double* gcoord = gvec + vecs_.size();

    for (const auto& row : rows) {
        double base_v = base_raw(row.user, row.item);
        double gam = gamma(row.situation);
        double err = row.rating - base_v * gam;
        const double* pu = &p_[(size_t)row.user * factors_];
        const double* qi = &q_[(size_t)row.item * factors_];

        gbu[row.user] += -err * gam + reg_user_ * bu_[row.user];
        gbi[row.item] += -err * gam + reg_item_ * bi_[row.item];
        for (int k = 0; k < factors_; ++k) {
            gp[(size_t)row.user * factors_ + k] += -err * gam * qi[k] + reg_user_ * pu[k];
            gq[(size_t)row.item * factors_ + k] += -err * gam * pu[k] + reg_item_ * qi[k];
        }

        for (size_t d = 0; d < row.situation.active.size(); ++d) {
            int c = row.situation.active[d];
            if (c == kNa) continue;
            if (variant_ == SimVariant::ICS) {
                double s = sim_[cond_offset_[d] + c];
                // gamma = s * rest; d(score)/ds = base * rest
                gsim[cond_offset_[d] + c] += -err * base_v * (gam / s);
            } else if (variant_ == SimVariant::LCS) {
                size_t ai = (size_t)(cond_offset_[d] + c) * factors_;
                size_t bi2 = (size_t)(cond_offset_[d] + kNa) * factors_;
                const double* a = &vecs_[ai];
                const double* b = &vecs_[bi2];
                double ab = 0.0, aa = 0.0, bb = 0.0;
                for (int k = 0; k < factors_; ++k) {
                    ab += a[k] * b[k];
                    aa += a[k] * a[k];
                    bb += b[k] * b[k];
                }
                for (int k = 0; k < factors_; ++k) {
                    gvec[ai + k] += reg_ctx_ * a[k];
                    gvec[bi2 + k] += reg_ctx_ * b[k];
                }
                if (aa < 1e-24 || bb < 1e-24) continue;
                double na = std::sqrt(aa), nb = std::sqrt(bb);
                double cosab = ab / (na * nb);
                double simd = 0.5 * (1.0 + cosab);
                if (simd <= kIcsFloor) continue;   // clamped in gamma()
                // score = base * (gamma/simd) * simd; chain through the cosine.
                double coeff = -err * base_v * (gam / simd) * 0.5;
                for (int k = 0; k < factors_; ++k) {
                    double dcos_da = b[k] / (na * nb) - cosab * a[k] / aa;
                    double dcos_db = a[k] / (na * nb) - cosab * b[k] / bb;
                    gvec[ai + k] += coeff * dcos_da;
                    gvec[bi2 + k] += coeff * dcos_db;
                }
            } else {   // MCS
                size_t ci = cond_offset_[d] + c;
                size_t ni = cond_offset_[d] + kNa;
                double diff = coord_[ci] - coord_[ni];
                double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                // gamma = 1/(1+D); d(gamma)/dD = -gamma^2
                gcoord[ci] += -err * base_v * (-gam * gam) * sgn + reg_ctx_ * coord_[ci];
                gcoord[ni] += -err * base_v * (-gam * gam) * (-sgn) + reg_ctx_ * coord_[ni];
            }
        }
    }
    return g;
}

void ContextSimModel::train(const RatingTable& train, const HyperParams& hp) {
    const auto& rows = train.rows();
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += r.rating;
        user_seen_[r.user] = true;
        item_seen_[r.item] = true;
    }
    mu_ = sum / rows.size();
    if (hp.num_iterations == 0) return;

    // The equal-start LCS/MCS context parameters sit on a symmetric saddle
    // (zero gradient); a small seeded jitter on the non-anchor entries lets
    // training leave it. Applied only when updates will actually run.
    Rng jitter(static_cast<uint32_t>(hp.rand_seed) ^ 0x2545f491u);
    if (variant_ == SimVariant::LCS) {
        for (size_t d = 0; d < cond_offset_.size(); ++d) {
            int count = cond_counts_[d];
            for (int c = 0; c < count; ++c) {
                if (c == kNa) continue;
                double* v = &vecs_[(size_t)(cond_offset_[d] + c) * factors_];
                for (int k = 0; k < factors_; ++k) v[k] += jitter.normal(hp.init_std);
            }
        }
    } else if (variant_ == SimVariant::MCS) {
        for (size_t d = 0; d < cond_offset_.size(); ++d) {
            int count = cond_counts_[d];
            for (int c = 0; c < count; ++c) {
                if (c == kNa) continue;
                coord_[cond_offset_[d] + c] += jitter.normal(hp.init_std);
            }
        }
    }

    std::vector<int> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> val_idx;
    if (!hp.early_stop_metric.empty()) val_idx = carve_validation_slice(idx, hp.rand_seed);
    Rng order_rng(static_cast<uint32_t>(hp.rand_seed) ^ 0x517cc1b7u);
    shuffle_indices(idx, order_rng);
    std::vector<RatingTuple> train_rows;
    train_rows.reserve(idx.size());
    for (int i : idx) train_rows.push_back(rows[i]);

    SgdHooks hooks;
    hooks.run_epoch = [&](double lr) {
        for (const auto& row : train_rows) {
            double base_v = base_raw(row.user, row.item);
            double gam = gamma(row.situation);
            double err = row.rating - base_v * gam;
            double* pu = &p_[(size_t)row.user * factors_];
            double* qi = &q_[(size_t)row.item * factors_];
            bu_[row.user] += lr * (err * gam - reg_user_ * bu_[row.user]);
            bi_[row.item] += lr * (err * gam - reg_item_ * bi_[row.item]);
            for (int k = 0; k < factors_; ++k) {
                double pk = pu[k], qk = qi[k];
                pu[k] += lr * (err * gam * qk - reg_user_ * pk);
                qi[k] += lr * (err * gam * pk - reg_item_ * qk);
            }
            for (size_t d = 0; d < row.situation.active.size(); ++d) {
                int c = row.situation.active[d];
                if (c == kNa) continue;
                if (variant_ == SimVariant::ICS) {
                    double& s = sim_[cond_offset_[d] + c];
                    s += lr * err * base_v * (gam / s);
                    s = std::clamp(s, kIcsFloor, 1.0);
                } else if (variant_ == SimVariant::LCS) {
                    size_t ai = (size_t)(cond_offset_[d] + c) * factors_;
                    size_t bi2 = (size_t)(cond_offset_[d] + kNa) * factors_;
                    double* a = &vecs_[ai];
                    double* b = &vecs_[bi2];
                    double ab = 0.0, aa = 0.0, bb = 0.0;
                    for (int k = 0; k < factors_; ++k) {
                        ab += a[k] * b[k];
                        aa += a[k] * a[k];
                        bb += b[k] * b[k];
                    }
                    if (aa < 1e-24 || bb < 1e-24) continue;
                    double na = std::sqrt(aa), nb = std::sqrt(bb);
                    double cosab = ab / (na * nb);
                    double simd = 0.5 * (1.0 + cosab);
                    double coeff = simd > kIcsFloor
                                       ? err * base_v * (gam / simd) * 0.5
                                       : 0.0;
                    for (int k = 0; k < factors_; ++k) {
                        double ak = a[k], bk = b[k];
                        double dcos_da = bk / (na * nb) - cosab * ak / aa;
                        double dcos_db = ak / (na * nb) - cosab * bk / bb;
                        a[k] += lr * (coeff * dcos_da - reg_ctx_ * ak);
                        b[k] += lr * (coeff * dcos_db - reg_ctx_ * bk);
                    }
                } else {
                    size_t ci = cond_offset_[d] + c;
                    size_t ni = cond_offset_[d] + kNa;
                    double diff = coord_[ci] - coord_[ni];
                    double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                    double dgam = -gam * gam;
                    coord_[ci] += lr * (err * base_v * dgam * sgn - reg_ctx_ * coord_[ci]);
                    coord_[ni] += lr * (err * base_v * dgam * (-sgn) - reg_ctx_ * coord_[ni]);
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

std::unique_ptr<Recommender> fit_context_sim(SimVariant variant, const RatingTable& train,
                                             const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    auto model = std::make_unique<ContextSimModel>(variant, sim_name(variant), train, hp);
    model->train(train, hp);
    return model;
}

}  // namespace ctxrec

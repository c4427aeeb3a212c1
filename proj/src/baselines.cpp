#include "ctxrec/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace ctxrec {

RatingMatrix collapse_context(const RatingTable& table) {
    RatingMatrix out;
    out.num_users = table.num_users();
    out.num_items = table.num_items();
    for (const auto& r : table.rows())
        out.entries.push_back({r.user, r.item, r.rating});
    return out.collapsed();
}

static std::vector<int> cond_counts_of(const RatingTable& table) {
    std::vector<int> counts(table.schema().dimension_count());
    for (int d = 0; d < table.schema().dimension_count(); ++d)
        counts[d] = table.schema().condition_count(d);
    return counts;
}

// ---------------------------------------------------------------------------
// Average family

static const char* average_name(AverageVariant v) {
    switch (v) {
        case AverageVariant::GlobalAvg: return "globalavg";
        case AverageVariant::UserAvg: return "useravg";
        case AverageVariant::ItemAvg: return "itemavg";
        case AverageVariant::UserItemAvg: return "useritemavg";
        case AverageVariant::ContextAvg: return "contextavg";
        case AverageVariant::ItemContextAvg: return "itemcontextavg";
        case AverageVariant::UserContextAvg: return "usercontextavg";
    }
    return "?";
}

AveragesModel::AveragesModel(AverageVariant variant, const RatingTable& train)
    : Recommender(average_name(variant), train), variant_(variant) {
    user_.resize(train.num_users());
    item_.resize(train.num_items());
    item_ctx_.resize(train.num_items());
    user_ctx_.resize(train.num_users());
    double sum = 0.0;
    for (const auto& r : train.rows()) {
        sum += r.rating;
        user_[r.user].sum += r.rating;
        ++user_[r.user].count;
        item_[r.item].sum += r.rating;
        ++item_[r.item].count;
        MeanCell& c = ctx_[r.situation];
        c.sum += r.rating;
        ++c.count;
        MeanCell& ic = item_ctx_[r.item][r.situation];
        ic.sum += r.rating;
        ++ic.count;
        MeanCell& uc = user_ctx_[r.user][r.situation];
        uc.sum += r.rating;
        ++uc.count;
    }
    mu_ = sum / train.num_rows();
}

AveragesModel::AveragesModel(AverageVariant variant, std::string name,
                             const RatingMatrix& data, RatingScale scale,
                             std::vector<int> cond_counts)
    : Recommender(std::move(name), scale, std::move(cond_counts)), variant_(variant) {
    if (variant == AverageVariant::ContextAvg ||
        variant == AverageVariant::ItemContextAvg ||
        variant == AverageVariant::UserContextAvg)
        throw std::runtime_error("context-average variants need contextual input");
    user_.resize(data.num_users);
    item_.resize(data.num_items);
    double sum = 0.0;
    for (const auto& e : data.entries) {
        sum += e.rating;
        user_[e.user].sum += e.rating;
        ++user_[e.user].count;
        item_[e.item].sum += e.rating;
        ++item_[e.item].count;
    }
    mu_ = data.entries.empty() ? 0.0 : sum / data.entries.size();
}

double AveragesModel::fallback(int user, int item) const {
    double v = mu_;
    if (user_seen(user)) v += user_[user].mean() - mu_;
    if (item_seen(item)) v += item_[item].mean() - mu_;
    return v;
}

double AveragesModel::score(int user, int item, const ContextSituation& s) const {
    switch (variant_) {
        case AverageVariant::GlobalAvg:
            return mu_;
        case AverageVariant::UserAvg:
            return user_seen(user) ? user_[user].mean() : fallback(user, item);
        case AverageVariant::ItemAvg:
            return item_seen(item) ? item_[item].mean() : fallback(user, item);
        case AverageVariant::UserItemAvg:
            return fallback(user, item);
        case AverageVariant::ContextAvg: {
            auto it = ctx_.find(s);
            return it != ctx_.end() ? it->second.mean() : fallback(user, item);
        }
        case AverageVariant::ItemContextAvg: {
            if (item >= 0 && item < (int)item_ctx_.size()) {
                auto it = item_ctx_[item].find(s);
                if (it != item_ctx_[item].end()) return it->second.mean();
            }
            return fallback(user, item);
        }
        case AverageVariant::UserContextAvg: {
            if (user >= 0 && user < (int)user_ctx_.size()) {
                auto it = user_ctx_[user].find(s);
                if (it != user_ctx_[user].end()) return it->second.mean();
            }
            return fallback(user, item);
        }
    }
    return mu_;
}

std::unique_ptr<Recommender> fit_average(AverageVariant variant, const RatingTable& train) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    return std::make_unique<AveragesModel>(variant, train);
}

// ---------------------------------------------------------------------------
// KNN

KnnModel::KnnModel(KnnVariant variant, std::string name, const RatingMatrix& data,
                   RatingScale scale, std::vector<int> cond_counts,
                   const HyperParams& hp)
    : Recommender(std::move(name), scale, std::move(cond_counts)),
      variant_(variant),
      k_(hp.knn_k) {
    RatingMatrix m = data.collapsed();
    if (m.empty()) throw std::runtime_error("empty dataset");
    num_primary_ = variant == KnnVariant::UserKnn ? m.num_users : m.num_items;
    num_secondary_ = variant == KnnVariant::UserKnn ? m.num_items : m.num_users;
    profiles_.resize(num_primary_);
    raters_.resize(num_secondary_);
    user_mean_.assign(m.num_users, 0.0);
    item_mean_.assign(m.num_items, 0.0);
    user_seen_.assign(m.num_users, false);
    item_seen_.assign(m.num_items, false);
    std::vector<int> ucount(m.num_users, 0), icount(m.num_items, 0);

    double sum = 0.0;
    for (const auto& e : m.entries) {
        sum += e.rating;
        user_mean_[e.user] += e.rating;
        ++ucount[e.user];
        item_mean_[e.item] += e.rating;
        ++icount[e.item];
        int p = variant == KnnVariant::UserKnn ? e.user : e.item;
        int s = variant == KnnVariant::UserKnn ? e.item : e.user;
        profiles_[p].emplace_back(s, e.rating);
        raters_[s].emplace_back(p, e.rating);
    }
    mu_ = sum / m.entries.size();
    for (int u = 0; u < m.num_users; ++u)
        if (ucount[u] > 0) {
            user_mean_[u] /= ucount[u];
            user_seen_[u] = true;
        }
    for (int i = 0; i < m.num_items; ++i)
        if (icount[i] > 0) {
            item_mean_[i] /= icount[i];
            item_seen_[i] = true;
        }
    primary_mean_ = variant == KnnVariant::UserKnn ? user_mean_ : item_mean_;

    for (auto& prof : profiles_) std::sort(prof.begin(), prof.end());
    for (auto& r : raters_) std::sort(r.begin(), r.end());

    // Pearson over co-rated entries, centered on the co-rated subset,
    // shrunk by n/(n+shrinkage). Pairs with fewer than two co-rated
    // entries get similarity 0.
    const double shrinkage = hp.knn_shrinkage;
    sims_.assign((size_t)num_primary_ * num_primary_, 0.0);
    parallel_for(num_primary_, [&](int a) {
        for (int b = a + 1; b < num_primary_; ++b) {
            const auto& pa = profiles_[a];
            const auto& pb = profiles_[b];
            size_t ia = 0, ib = 0;
            std::vector<std::pair<double, double>> co;
            while (ia < pa.size() && ib < pb.size()) {
                if (pa[ia].first < pb[ib].first) ++ia;
                else if (pa[ia].first > pb[ib].first) ++ib;
                else {
                    co.emplace_back(pa[ia].second, pb[ib].second);
                    ++ia;
                    ++ib;
                }
            }
            if (co.size() < 2) continue;
            double ma = 0.0, mb = 0.0;
            for (auto& [x, y] : co) {
                ma += x;
                mb += y;
            }
            ma /= co.size();
            mb /= co.size();
            double num = 0.0, da = 0.0, db = 0.0;
            for (auto& [x, y] : co) {
                num += (x - ma) * (y - mb);
                da += (x - ma) * (x - ma);
                db += (y - mb) * (y - mb);
            }
            if (da <= 0.0 || db <= 0.0) continue;
            double n = static_cast<double>(co.size());
            double sim = num / std::sqrt(da * db) * (n / (n + shrinkage));
            sims_[(size_t)a * num_primary_ + b] = sim;
            sims_[(size_t)b * num_primary_ + a] = sim;
        }
    });
}

double KnnModel::similarity(int a, int b) const {
    if (a == b) return 1.0;
    return sims_[(size_t)a * num_primary_ + b];
}

double KnnModel::fallback(int user, int item) const {
    double v = mu_;
    if (user >= 0 && user < (int)user_seen_.size() && user_seen_[user])
        v += user_mean_[user] - mu_;
    if (item >= 0 && item < (int)item_seen_.size() && item_seen_[item])
        v += item_mean_[item] - mu_;
    return v;
}

double KnnModel::score(int user, int item, const ContextSituation& s) const {
    (void)s;
    int target = variant_ == KnnVariant::UserKnn ? user : item;
    int query = variant_ == KnnVariant::UserKnn ? item : user;
    if (target < 0 || target >= num_primary_ || query < 0 || query >= num_secondary_ ||
        profiles_[target].empty())
        return fallback(user, item);

    // Neighbors with positive similarity that rated the query, ranked by
    // similarity (ties to the smaller index).
    struct Neighbor {
        double sim;
        int other;
        double rating;
    };
    std::vector<Neighbor> neigh;
    for (const auto& [other, r] : raters_[query]) {
        if (other == target) continue;
        double sim = sims_[(size_t)target * num_primary_ + other];
        if (sim > 0.0) neigh.push_back({sim, other, r});
    }
    if (neigh.empty()) return fallback(user, item);
    std::sort(neigh.begin(), neigh.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.other < b.other;
    });
    if ((int)neigh.size() > k_) neigh.resize(k_);

    double num = 0.0, den = 0.0;
    for (const auto& n : neigh) {
        num += n.sim * (n.rating - primary_mean_[n.other]);
        den += std::abs(n.sim);
    }
    return primary_mean_[target] + num / den;
}

std::unique_ptr<Recommender> fit_knn(KnnVariant variant, const RatingTable& train,
                                     const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    const char* name = variant == KnnVariant::UserKnn ? "userknn" : "itemknn";
    return std::make_unique<KnnModel>(variant, name, collapse_context(train),
                                      train.scale(), cond_counts_of(train), hp);
}

// ---------------------------------------------------------------------------
// PMF / BiasedMF

MfModel::MfModel(MfVariant variant, std::string name, int num_users, int num_items,
                 RatingScale scale, std::vector<int> cond_counts,
                 const HyperParams& hp)
    : Recommender(std::move(name), scale, std::move(cond_counts)),
      variant_(variant),
      factors_(hp.num_factors),
      reg_user_(hp.reg_user),
      reg_item_(hp.reg_item) {
    Rng rng(static_cast<uint32_t>(hp.rand_seed));
    p_.resize((size_t)num_users * factors_);
    q_.resize((size_t)num_items * factors_);
    for (auto& v : p_) v = rng.normal(hp.init_std);
    for (auto& v : q_) v = rng.normal(hp.init_std);
    bu_.assign(num_users, 0.0);
    bi_.assign(num_items, 0.0);
    user_seen_.assign(num_users, false);
    item_seen_.assign(num_items, false);
}

double MfModel::raw(int u, int i) const {
    const double* pu = &p_[(size_t)u * factors_];
    const double* qi = &q_[(size_t)i * factors_];
    double dot = 0.0;
    for (int k = 0; k < factors_; ++k) dot += pu[k] * qi[k];
    if (variant_ == MfVariant::Pmf) return dot;
    return mu_ + bu_[u] + bi_[i] + dot;
}

double MfModel::score(int user, int item, const ContextSituation& s) const {
    (void)s;
    bool us = user >= 0 && user < (int)bu_.size() && user_seen_[user];
    bool is = item >= 0 && item < (int)bi_.size() && item_seen_[item];
    if (variant_ == MfVariant::Pmf) {
        if (!us || !is) return mu_;
        return raw(user, item);
    }
    double v = mu_;
    if (us) v += bu_[user];
    if (is) v += bi_[item];
    if (us && is) {
        const double* pu = &p_[(size_t)user * factors_];
        const double* qi = &q_[(size_t)item * factors_];
        for (int k = 0; k < factors_; ++k) v += pu[k] * qi[k];
    }
    return v;
}

std::vector<double> MfModel::pack_params() const {
    std::vector<double> flat;
    flat.reserve(bu_.size() + bi_.size() + p_.size() + q_.size());
    flat.insert(flat.end(), bu_.begin(), bu_.end());
    flat.insert(flat.end(), bi_.begin(), bi_.end());
    flat.insert(flat.end(), p_.begin(), p_.end());
    flat.insert(flat.end(), q_.begin(), q_.end());
    return flat;
}

void MfModel::unpack_params(const std::vector<double>& flat) {
    size_t off = 0;
    std::copy_n(flat.begin() + off, bu_.size(), bu_.begin());
    off += bu_.size();
    std::copy_n(flat.begin() + off, bi_.size(), bi_.begin());
    off += bi_.size();
    std::copy_n(flat.begin() + off, p_.size(), p_.begin());
    off += p_.size();
    std::copy_n(flat.begin() + off, q_.size(), q_.begin());
}

double MfModel::objective(const std::vector<MatrixEntry>& entries) const {
    double obj = 0.0;
    for (const auto& e : entries) {
        double err = e.rating - raw(e.user, e.item);
        obj += 0.5 * err * err;
        const double* pu = &p_[(size_t)e.user * factors_];
        const double* qi = &q_[(size_t)e.item * factors_];
        double pn = 0.0, qn = 0.0;
        for (int k = 0; k < factors_; ++k) {
            pn += pu[k] * pu[k];
            qn += qi[k] * qi[k];
        }
        if (variant_ == MfVariant::BiasedMf) {
            pn += bu_[e.user] * bu_[e.user];
            qn += bi_[e.item] * bi_[e.item];
        }
        obj += 0.5 * reg_user_ * pn + 0.5 * reg_item_ * qn;
    }
    return obj;
}

std::vector<double> MfModel::gradient(const std::vector<MatrixEntry>& entries) const {
    std::vector<double> g(bu_.size() + bi_.size() + p_.size() + q_.size(), 0.0);
    double* gbu = g.data();
    double* gbi = gbu + bu_.size();
    double* gp = gbi + bi_.size();
    double* gq = gp + p_.size();
    for (const auto& e : entries) {
        double err = e.rating - raw(e.user, e.item);
        const double* pu = &p_[(size_t)e.user * factors_];
        const double* qi = &q_[(size_t)e.item * factors_];
        if (variant_ == MfVariant::BiasedMf) {
            gbu[e.user] += -err + reg_user_ * bu_[e.user];
            gbi[e.item] += -err + reg_item_ * bi_[e.item];
        }
        for (int k = 0; k < factors_; ++k) {
            gp[(size_t)e.user * factors_ + k] += -err * qi[k] + reg_user_ * pu[k];
            gq[(size_t)e.item * factors_ + k] += -err * pu[k] + reg_item_ * qi[k];
        }
    }
    return g;
}

void MfModel::train(const std::vector<MatrixEntry>& entries, const HyperParams& hp) {
    double sum = 0.0;
    for (const auto& e : entries) {
        sum += e.rating;
        user_seen_[e.user] = true;
        item_seen_[e.item] = true;
    }
    mu_ = entries.empty() ? 0.0 : sum / entries.size();
    if (entries.empty()) return;

    std::vector<int> idx(entries.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<int> val_idx;
    if (!hp.early_stop_metric.empty()) val_idx = carve_validation_slice(idx, hp.rand_seed);
    Rng order_rng(static_cast<uint32_t>(hp.rand_seed) ^ 0x517cc1b7u);
    shuffle_indices(idx, order_rng);

    std::vector<MatrixEntry> train_rows;
    train_rows.reserve(idx.size());
    for (int i : idx) train_rows.push_back(entries[i]);

    SgdHooks hooks;
    hooks.run_epoch = [&](double lr) {
        for (const auto& e : train_rows) {
            double err = e.rating - raw(e.user, e.item);
            double* pu = &p_[(size_t)e.user * factors_];
            double* qi = &q_[(size_t)e.item * factors_];
            if (variant_ == MfVariant::BiasedMf) {
                bu_[e.user] += lr * (err - reg_user_ * bu_[e.user]);
                bi_[e.item] += lr * (err - reg_item_ * bi_[e.item]);
            }
            for (int k = 0; k < factors_; ++k) {
                double pk = pu[k], qk = qi[k];
                pu[k] += lr * (err * qk - reg_user_ * pk);
                qi[k] += lr * (err * pk - reg_item_ * qk);
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
            ContextSituation none;
            none.active.assign(cond_counts_.size(), 0);
            for (int i : val_idx) {
                const auto& e = entries[i];
                pairs.emplace_back(e.rating, scale_.clamp(score(e.user, e.item, none)));
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

std::unique_ptr<Recommender> fit_mf(MfVariant variant, const RatingTable& train,
                                    const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    const char* name = variant == MfVariant::Pmf ? "pmf" : "biasedmf";
    auto model = std::make_unique<MfModel>(variant, name, train.num_users(),
                                           train.num_items(), train.scale(),
                                           cond_counts_of(train), hp);
    model->train(collapse_context(train).entries, hp);
    return model;
}

// ---------------------------------------------------------------------------
// SLIM

SlimModel::SlimModel(std::string name, int num_items, RatingScale scale,
                     std::vector<int> cond_counts)
    : Recommender(std::move(name), scale, std::move(cond_counts)),
      num_items_(num_items),
      w_((size_t)num_items * num_items, 0.0) {}

double SlimModel::score(int user, int item, const ContextSituation& s) const {
    (void)s;
    if (user < 0 || user >= (int)profiles_.size()) return 0.0;
    double v = 0.0;
    for (const auto& [j, r] : profiles_[user])
        if (j != item) v += r * w_[(size_t)j * num_items_ + item];
    return v;
}

void SlimModel::train(const RatingMatrix& data, const HyperParams& hp) {
    RatingMatrix m = data.collapsed();
    profiles_.assign(m.num_users, {});
    std::vector<std::vector<std::pair<int, double>>> raters(num_items_);
    for (const auto& e : m.entries) {
        profiles_[e.user].emplace_back(e.item, e.rating);
        raters[e.item].emplace_back(e.user, e.rating);
    }
    for (auto& p : profiles_) std::sort(p.begin(), p.end());

    std::vector<double> sq(num_items_, 0.0);   // sum of squared ratings per item
    for (int j = 0; j < num_items_; ++j)
        for (const auto& [u, r] : raters[j]) sq[j] += r * r;

    const double l1 = hp.l1_reg, l2 = hp.l2_reg;
    history_.clear();
    std::vector<double> col_obj(num_items_, 0.0);
    std::vector<double> col_delta(num_items_, 0.0);

    for (int sweep = 0; sweep < hp.num_iterations; ++sweep) {
        // Columns are independent: the elastic-net objective separates per
        // target item.
        parallel_for(num_items_, [&](int i) {
            std::vector<double> res(m.num_users, 0.0);
            for (const auto& [u, r] : raters[i]) res[u] = r;
            for (const auto& e : m.entries)
                res[e.user] -= e.rating * w_[(size_t)e.item * num_items_ + i];

            double max_delta = 0.0;
            for (int j = 0; j < num_items_; ++j) {
                if (j == i || raters[j].empty()) continue;
                double& wj = w_[(size_t)j * num_items_ + i];
                double old = wj;
                double num = -l1;
                for (const auto& [u, r] : raters[j]) num += r * (res[u] + r * old);
                double next = std::max(0.0, num / (sq[j] + l2));
                if (next != old) {
                    for (const auto& [u, r] : raters[j]) res[u] -= r * (next - old);
                    wj = next;
                    max_delta = std::max(max_delta, std::abs(next - old));
                }
            }

            double obj = 0.0;
            for (double e : res) obj += 0.5 * e * e;
            for (int j = 0; j < num_items_; ++j) {
                double wj = w_[(size_t)j * num_items_ + i];
                obj += l1 * wj + 0.5 * l2 * wj * wj;
            }
            col_obj[i] = obj;
            col_delta[i] = max_delta;
        });

        double total = 0.0, delta = 0.0;
        for (int i = 0; i < num_items_; ++i) {
            total += col_obj[i];
            delta = std::max(delta, col_delta[i]);
        }
        history_.push_back(total);
        if (delta < 1e-9) break;
    }
}

std::unique_ptr<Recommender> fit_slim(const RatingTable& train, const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    auto model = std::make_unique<SlimModel>("slim", train.num_items(), train.scale(),
                                             cond_counts_of(train));
    model->train(collapse_context(train), hp);
    return model;
}

// ---------------------------------------------------------------------------
// Matrix-level dispatch for the splitting pipeline

bool is_two_dimensional(const std::string& algorithm) {
    static const std::vector<std::string> names = {
        "globalavg", "useravg", "itemavg", "useritemavg",
        "userknn",   "itemknn", "pmf",     "biasedmf",   "slim",
    };
    std::string n = to_lower(algorithm);
    return std::find(names.begin(), names.end(), n) != names.end();
}

std::unique_ptr<Recommender> fit_traditional_matrix(const std::string& algorithm,
                                                    const RatingMatrix& data,
                                                    RatingScale scale,
                                                    std::vector<int> cond_counts,
                                                    const HyperParams& hp) {
    std::string name = to_lower(algorithm);
    if (!is_two_dimensional(name))
        throw std::runtime_error("recommender '" + algorithm +
                                 "' cannot follow a splitting transformation");
    if (data.empty()) throw std::runtime_error("empty dataset");

    if (name == "globalavg" || name == "useravg" || name == "itemavg" ||
        name == "useritemavg") {
        AverageVariant v = name == "globalavg"  ? AverageVariant::GlobalAvg
                           : name == "useravg"  ? AverageVariant::UserAvg
                           : name == "itemavg"  ? AverageVariant::ItemAvg
                                                : AverageVariant::UserItemAvg;
        return std::make_unique<AveragesModel>(v, name, data, scale, std::move(cond_counts));
    }
    if (name == "userknn" || name == "itemknn") {
        KnnVariant v = name == "userknn" ? KnnVariant::UserKnn : KnnVariant::ItemKnn;
        return std::make_unique<KnnModel>(v, name, data, scale, std::move(cond_counts), hp);
    }
    if (name == "pmf" || name == "biasedmf") {
        MfVariant v = name == "pmf" ? MfVariant::Pmf : MfVariant::BiasedMf;
        auto model = std::make_unique<MfModel>(v, name, data.num_users, data.num_items,
                                               scale, std::move(cond_counts), hp);
        model->train(data.entries, hp);
        return model;
    }
    auto model = std::make_unique<SlimModel>("slim", data.num_items, scale,
                                             std::move(cond_counts));
    model->train(data, hp);
    return model;
}

}  // namespace ctxrec

#include "ctxrec/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctxrec/baselines.hpp"

namespace ctxrec {

namespace {
constexpr int kNa = ContextSchema::kNaCondition;
}

int SplitMap::split_count() const {
    int n = 0;
    for (const auto& e : entries_)
        if (e) ++n;
    return n;
}

int SplitMap::route(int id, const ContextSituation& s) const {
    if (id < 0 || id >= (int)entries_.size() || !entries_[id]) return id;
    const SplitChoice& c = *entries_[id];
    if (c.dimension < (int)s.active.size() && s.active[c.dimension] == c.condition)
        return c.id_holds;
    return c.id_fails;
}

double welch_t_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    auto mean_var = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double var = 0.0;
        for (double v : x) var += (v - m) * (v - m);
        var /= x.size() > 1 ? x.size() - 1 : 1;
        return std::make_pair(m, var);
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);
    double se2 = va / a.size() + vb / b.size();
    if (se2 <= 0.0) {
        if (ma == mb) return 0.0;
        return ma > mb ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    }
    return (ma - mb) / std::sqrt(se2);
}

double welch_p_value(double t) {
    return std::erfc(std::abs(t) / std::sqrt(2.0));
}

namespace {

// Splits one axis (users or items). Rows are rewritten in place; the map
// describes the chosen condition and the fresh virtual ids per entity.
SplitMap split_axis(std::vector<RatingTuple>& rows, int num_entities, bool item_axis,
                    const ContextSchema& schema, const SplitCriterion& crit) {
    SplitMap map(num_entities);
    std::vector<std::vector<int>> rows_of(num_entities);
    for (size_t t = 0; t < rows.size(); ++t) {
        int e = item_axis ? rows[t].item : rows[t].user;
        rows_of[e].push_back((int)t);
    }

    int next_id = num_entities;
    for (int e = 0; e < num_entities; ++e) {
        const auto& owned = rows_of[e];
        if ((int)owned.size() < 2 * crit.min_length) continue;

        double best_abs_t = 0.0;
        int best_dim = -1, best_cond = -1;
        for (int d = 0; d < schema.dimension_count(); ++d) {
            for (int c = 0; c < schema.condition_count(d); ++c) {
                if (c == kNa) continue;   // "unknown" is not a split candidate
                std::vector<double> holds, fails;
                for (int t : owned)
                    (rows[t].situation.active[d] == c ? holds : fails)
                        .push_back(rows[t].rating);
                if ((int)holds.size() < crit.min_length ||
                    (int)fails.size() < crit.min_length)
                    continue;
                double t_stat = welch_t_statistic(holds, fails);
                if (std::isnan(t_stat)) continue;
                if (welch_p_value(t_stat) >= crit.alpha) continue;
                double abs_t = std::abs(t_stat);
                if (abs_t > best_abs_t) {
                    best_abs_t = abs_t;
                    best_dim = d;
                    best_cond = c;
                }
            }
        }
        if (best_dim < 0) continue;

        SplitChoice choice;
        choice.dimension = best_dim;
        choice.condition = best_cond;
        choice.id_holds = next_id++;
        choice.id_fails = next_id++;
        map.set_choice(e, choice);
        for (int t : owned) {
            int routed = rows[t].situation.active[best_dim] == best_cond
                             ? choice.id_holds
                             : choice.id_fails;
            (item_axis ? rows[t].item : rows[t].user) = routed;
        }
    }
    map.set_total(next_id);
    return map;
}

RatingMatrix strip_context(const std::vector<RatingTuple>& rows, int num_users,
                           int num_items) {
    RatingMatrix m;
    m.num_users = num_users;
    m.num_items = num_items;
    m.entries.reserve(rows.size());
    for (const auto& r : rows) m.entries.push_back({r.user, r.item, r.rating});
    return m;
}

}  // namespace

SplitResult item_split(const RatingTable& table, const SplitCriterion& crit) {
    std::vector<RatingTuple> rows = table.rows();
    SplitResult out;
    out.item_map = split_axis(rows, table.num_items(), true, table.schema(), crit);
    out.user_map = SplitMap(table.num_users());
    out.user_map.set_total(table.num_users());
    out.matrix = strip_context(rows, table.num_users(), out.item_map.total_count());
    return out;
}

SplitResult user_split(const RatingTable& table, const SplitCriterion& crit) {
    std::vector<RatingTuple> rows = table.rows();
    SplitResult out;
    out.user_map = split_axis(rows, table.num_users(), false, table.schema(), crit);
    out.item_map = SplitMap(table.num_items());
    out.item_map.set_total(table.num_items());
    out.matrix = strip_context(rows, out.user_map.total_count(), table.num_items());
    return out;
}

SplitResult ui_split(const RatingTable& table, const SplitCriterion& crit) {
    std::vector<RatingTuple> rows = table.rows();
    SplitResult out;
    out.item_map = split_axis(rows, table.num_items(), true, table.schema(), crit);
    out.user_map = split_axis(rows, table.num_users(), false, table.schema(), crit);
    out.matrix = strip_context(rows, out.user_map.total_count(),
                               out.item_map.total_count());
    return out;
}

SplitPipelineModel::SplitPipelineModel(std::string name, const RatingTable& train,
                                       std::unique_ptr<Recommender> inner,
                                       SplitMap user_map, SplitMap item_map)
    : Recommender(std::move(name), train),
      inner_(std::move(inner)),
      user_map_(std::move(user_map)),
      item_map_(std::move(item_map)) {}

double SplitPipelineModel::score(int user, int item, const ContextSituation& s) const {
    return inner_->score(user_map_.route(user, s), item_map_.route(item, s), s);
}

std::unique_ptr<Recommender> fit_split_pipeline(SplitVariant variant,
                                                const std::string& traditional,
                                                const RatingTable& train,
                                                const SplitCriterion& crit,
                                                const HyperParams& hp) {
    if (train.empty()) throw std::runtime_error("empty dataset");
    if (!is_two_dimensional(traditional))
        throw std::runtime_error("recommender '" + traditional +
                                 "' cannot follow a splitting transformation");

    SplitResult split;
    const char* name = "itemsplitting";
    switch (variant) {
        case SplitVariant::Item:
            split = item_split(train, crit);
            break;
        case SplitVariant::User:
            split = user_split(train, crit);
            name = "usersplitting";
            break;
        case SplitVariant::UserItem:
            split = ui_split(train, crit);
            name = "uisplitting";
            break;
    }

    std::vector<int> cond_counts(train.schema().dimension_count());
    for (int d = 0; d < train.schema().dimension_count(); ++d)
        cond_counts[d] = train.schema().condition_count(d);
    auto inner = fit_traditional_matrix(traditional, split.matrix, train.scale(),
                                        std::move(cond_counts), hp);
    return std::make_unique<SplitPipelineModel>(name, train, std::move(inner),
                                                std::move(split.user_map),
                                                std::move(split.item_map));
}

}  // namespace ctxrec

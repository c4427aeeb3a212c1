// Shared fixtures and independent oracles for the test suites. Everything
// here recomputes expectations from first principles; nothing reuses the
// library's implementation path it is checking.

#ifndef CTXREC_TEST_SUPPORT_HPP
#define CTXREC_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"
#include "ctxrec/ingest.hpp"

namespace testsup {

// The four compact-format rows used throughout the docs and tests:
// dims Time{Weekend,Weekday}, Location{Work,Home} in first-appearance order.
inline const char* kCompactSample =
    "UserID,ItemID,Rating,Time,Location\n"
    "U1,T1,3,Weekend,Work\n"
    "U2,T2,4,Weekday,Home\n"
    "U1,T1,4,Weekend,Home\n"
    "U2,T2,2,Weekday,Work\n";

inline const char* kLooseSample =
    "UserID,ItemID,Rating,Context,Condition\n"
    "U1,T1,3,Time,Weekend\n"
    "U1,T1,3,Location,Work\n"
    "U2,T2,4,Time,Weekday\n"
    "U2,T2,4,Location,Home\n";

inline ctxrec::RatingTable sample_table() {
    std::istringstream in(kCompactSample);
    return ctxrec::read_rating_file(in, "sample");
}

// Builds a contextual table from (user, item, rating, {dim=cond,...}) specs.
struct RowSpec {
    std::string user, item;
    double rating;
    std::vector<std::pair<std::string, std::string>> context;
};

inline ctxrec::RatingTable make_table(
    const std::vector<std::string>& dims,
    const std::vector<std::vector<std::string>>& conds,
    const std::vector<RowSpec>& rows) {
    ctxrec::RatingTable t;
    for (size_t d = 0; d < dims.size(); ++d) {
        int di = t.schema().add_dimension(dims[d]);
        for (const auto& c : conds[d]) t.schema().add_condition(di, c);
    }
    for (const auto& r : rows) {
        ctxrec::RatingTuple row;
        row.user = t.intern_user(r.user);
        row.item = t.intern_item(r.item);
        row.rating = r.rating;
        row.situation = t.make_situation(r.context);
        t.add_row(std::move(row));
    }
    return t;
}

// Central finite differences of `objective` against `analytic` at the
// current parameter point. Returns the worst relative error.
template <typename Model, typename Rows>
double gradient_check(Model& model, const Rows& rows, double step = 1e-6) {
    std::vector<double> theta = model.pack_params();
    std::vector<double> analytic = model.gradient(rows);
    double worst = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        double keep = theta[i];
        theta[i] = keep + step;
        model.unpack_params(theta);
        double up = model.objective(rows);
        theta[i] = keep - step;
        model.unpack_params(theta);
        double down = model.objective(rows);
        theta[i] = keep;
        model.unpack_params(theta);
        double fd = (up - down) / (2.0 * step);
        double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

// Independent brute-force ranking metrics for one case.
struct BruteScores {
    double prec, rec, map, ndcg, mrr;
};

inline BruteScores brute_ranking(const std::vector<int>& ranked,
                                 const std::vector<int>& relevant, int n) {
    auto is_rel = [&](int item) {
        return std::find(relevant.begin(), relevant.end(), item) != relevant.end();
    };
    int limit = std::min<int>(n, (int)ranked.size());
    int hits = 0;
    double dcg = 0, ap = 0, rr = 0;
    for (int p = 1; p <= limit; ++p) {
        if (!is_rel(ranked[p - 1])) continue;
        ++hits;
        dcg += 1.0 / std::log2(p + 1.0);
        ap += double(hits) / p;
        if (rr == 0) rr = 1.0 / p;
    }
    double idcg = 0;
    for (int p = 1; p <= std::min<int>(n, (int)relevant.size()); ++p)
        idcg += 1.0 / std::log2(p + 1.0);
    return {double(hits) / n, double(hits) / relevant.size(),
            ap / relevant.size(), idcg > 0 ? dcg / idcg : 0.0, rr};
}

// Synthetic dataset with an additive context effect: dims
// Time{Weekend,Weekday} and Location{Home,Work} (plus the implicit na),
// rating = base + lift * [Time=Weekend] + Normal(0, noise). Conditions are
// sampled uniformly from {na, first, second} per dimension.
inline ctxrec::RatingTable planted_deviation_table(int seed, int rows, int users,
                                                   int items, double base,
                                                   double lift, double noise) {
    ctxrec::RatingTable t;
    int time = t.schema().add_dimension("Time");
    int weekend = t.schema().add_condition(time, "Weekend");
    t.schema().add_condition(time, "Weekday");
    int loc = t.schema().add_dimension("Location");
    t.schema().add_condition(loc, "Home");
    t.schema().add_condition(loc, "Work");
    for (int u = 0; u < users; ++u) t.intern_user("u" + std::to_string(u));
    for (int i = 0; i < items; ++i) t.intern_item("i" + std::to_string(i));

    std::mt19937 gen(seed);
    std::normal_distribution<double> eps(0.0, noise);
    for (int r = 0; r < rows; ++r) {
        ctxrec::RatingTuple row;
        row.user = (int)(gen() % users);
        row.item = (int)(gen() % items);
        row.situation.active = {(int)(gen() % 3), (int)(gen() % 3)};
        row.rating = base + (row.situation.active[time] == weekend ? lift : 0.0) +
                     (noise > 0 ? eps(gen) : 0.0);
        t.add_row(std::move(row));
    }
    return t;
}

// Items with a planted per-item condition effect: ratings near `hi` when the
// planted condition holds and near `lo` otherwise, `per_side` ratings each
// from distinct one-shot users. Returns the table and the planted
// (dimension, condition) per item.
struct PlantedSplit {
    ctxrec::RatingTable table;
    std::vector<std::pair<int, int>> planted;   // per item
};

inline PlantedSplit planted_item_split_table(int seed, int items, int per_side,
                                             double lo, double hi, double noise) {
    PlantedSplit out;
    ctxrec::RatingTable& t = out.table;
    int time = t.schema().add_dimension("Time");
    t.schema().add_condition(time, "Weekend");
    t.schema().add_condition(time, "Weekday");
    int loc = t.schema().add_dimension("Location");
    t.schema().add_condition(loc, "Home");
    t.schema().add_condition(loc, "Work");

    std::mt19937 gen(seed);
    std::normal_distribution<double> eps(0.0, noise);
    int user_counter = 0;
    for (int i = 0; i < items; ++i) {
        int item = t.intern_item("i" + std::to_string(i));
        int dim = (int)(gen() % 2);
        int cond = 1 + (int)(gen() % 2);
        out.planted.emplace_back(dim, cond);
        for (int side = 0; side < 2; ++side) {
            for (int n = 0; n < per_side; ++n) {
                ctxrec::RatingTuple row;
                row.user = t.intern_user("u" + std::to_string(user_counter++));
                row.item = item;
                row.situation.active = {0, 0};
                if (side == 0) {
                    row.situation.active[dim] = cond;
                } else {
                    // Off side: na or the sibling condition, never the planted one.
                    int other = (int)(gen() % 2) == 0 ? 0 : (cond == 1 ? 2 : 1);
                    row.situation.active[dim] = other;
                }
                row.rating = (side == 0 ? hi : lo) + eps(gen);
                t.add_row(std::move(row));
            }
        }
    }
    return out;
}

// Welch statistic recomputed independently of the library.
inline double brute_welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    auto mv = [](const std::vector<double>& x) {
        double m = 0;
        for (double v : x) m += v;
        m /= x.size();
        double s2 = 0;
        for (double v : x) s2 += (v - m) * (v - m);
        s2 /= x.size() - 1;
        return std::pair<double, double>(m, s2);
    };
    auto [ma, va] = mv(a);
    auto [mb, vb] = mv(b);
    return (ma - mb) / std::sqrt(va / a.size() + vb / b.size());
}

}  // namespace testsup

#endif  // CTXREC_TEST_SUPPORT_HPP

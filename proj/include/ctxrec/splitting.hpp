// Context-aware splitting transformations. An item (or user) whose ratings
// differ significantly between a condition holding and not holding is split
// into two virtual ids; the resulting context-free matrix feeds any
// traditional 2D recommender.

#ifndef CTXREC_SPLITTING_HPP
#define CTXREC_SPLITTING_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"

namespace ctxrec {

struct SplitCriterion {
    double alpha = 0.05;   // significance of the two-sample test
    int min_length = 2;    // minimum ratings on each side of a candidate
};

struct SplitChoice {
    int dimension = 0;
    int condition = 0;
    int id_holds = 0;   // virtual id when the condition is active
    int id_fails = 0;   // virtual id otherwise (also for unseen situations)
};

class SplitMap {
public:
    SplitMap() = default;
    explicit SplitMap(int original_count)
        : entries_(original_count), total_(original_count) {}

    void set_choice(int id, SplitChoice choice) { entries_[id] = choice; }
    void set_total(int total) { total_ = total; }

    int original_count() const { return static_cast<int>(entries_.size()); }
    int total_count() const { return total_; }
    const std::optional<SplitChoice>& choice(int id) const { return entries_.at(id); }

    int split_count() const;
    bool is_identity() const { return split_count() == 0; }

    /// Virtual id for (id, situation); unsplit ids map to themselves.
    int route(int id, const ContextSituation& s) const;

private:
    std::vector<std::optional<SplitChoice>> entries_;
    int total_ = 0;
};

enum class SplitVariant { User, Item, UserItem };

struct SplitResult {
    RatingMatrix matrix;   // one entry per input row
    SplitMap item_map;
    SplitMap user_map;
};

SplitResult item_split(const RatingTable& table, const SplitCriterion& crit);
SplitResult user_split(const RatingTable& table, const SplitCriterion& crit);
/// Items split first, then users on the item-virtualized rows.
SplitResult ui_split(const RatingTable& table, const SplitCriterion& crit);

/// Welch's two-sample t statistic (sample variances, unpooled).
double welch_t_statistic(const std::vector<double>& a, const std::vector<double>& b);
/// Two-sided p-value under the normal approximation.
double welch_p_value(double t);

class SplitPipelineModel : public Recommender {
public:
    SplitPipelineModel(std::string name, const RatingTable& train,
                       std::unique_ptr<Recommender> inner, SplitMap user_map,
                       SplitMap item_map);

    double score(int user, int item, const ContextSituation& s) const override;
    bool ranking_only() const override { return inner_->ranking_only(); }

    const SplitMap& user_map() const { return user_map_; }
    const SplitMap& item_map() const { return item_map_; }

private:
    std::unique_ptr<Recommender> inner_;
    SplitMap user_map_, item_map_;
};

std::unique_ptr<Recommender> fit_split_pipeline(SplitVariant variant,
                                                const std::string& traditional,
                                                const RatingTable& train,
                                                const SplitCriterion& crit,
                                                const HyperParams& hp);

}  // namespace ctxrec

#endif  // CTXREC_SPLITTING_HPP

// Core domain types for contextual rating data: context schemas, rating
// tuples, the in-memory rating table, dataset statistics, and the on-disk
// binary CSV format.

#ifndef CTXREC_CORE_HPP
#define CTXREC_CORE_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxrec {

struct RatingScale {
    double min = 0.0;
    double max = 0.0;

    double midpoint() const { return 0.5 * (min + max); }
    double clamp(double v) const { return v < min ? min : (v > max ? max : v); }
    bool operator==(const RatingScale&) const = default;
};

/// Context dimensions and their conditions. Dimension 0..D-1 in
/// first-appearance order; within each dimension, condition 0 is always the
/// implicit "na" (unknown) condition, followed by named conditions in
/// first-appearance order. Immutable once ingestion finishes building it.
class ContextSchema {
public:
    static constexpr int kNaCondition = 0;

    // Returns the dimension index, creating it (with its "na" condition)
    // on first sight. Dimension names are matched case-insensitively.
    int add_dimension(std::string_view name);

    // Interns a condition value within a dimension. Empty cells and any
    // spelling of "na" map to the implicit na condition.
    int add_condition(int dim, std::string_view value);

    int dimension_count() const { return static_cast<int>(dims_.size()); }
    int condition_count(int dim) const;
    int total_conditions() const;

    const std::string& dimension_name(int dim) const;
    const std::string& condition_name(int dim, int cond) const;

    /// Case-insensitive dimension lookup; -1 when absent.
    int find_dimension(std::string_view name) const;

    /// Condition lookup within a dimension; throws on unknown values.
    int require_condition(int dim, std::string_view value) const;

    // Bijection between (dimension, condition) pairs and [0, total_conditions).
    int global_index(int dim, int cond) const;
    std::pair<int, int> from_global(int global) const;

    bool operator==(const ContextSchema& other) const;

private:
    struct Dimension {
        std::string name;
        std::vector<std::string> conditions;           // [0] == "na"
        std::unordered_map<std::string, int> index;    // value -> condition
    };
    std::vector<Dimension> dims_;
    std::unordered_map<std::string, int> dim_index_;   // lower-cased name -> dim
};

/// One condition per schema dimension; the context of a single rating event.
struct ContextSituation {
    std::vector<int> active;

    bool operator==(const ContextSituation&) const = default;
};

struct SituationHash {
    std::size_t operator()(const ContextSituation& s) const {
        std::size_t h = 1469598103934665603ull;
        for (int c : s.active) {
            h ^= static_cast<std::size_t>(c) + 0x9e3779b97f4a7c15ull;
            h *= 1099511628211ull;
        }
        return h;
    }
};

struct RatingTuple {
    int user = 0;
    int item = 0;
    double rating = 0.0;
    ContextSituation situation;

    bool operator==(const RatingTuple&) const = default;
};

/// Contextual rating table in binary (one-hot) form. User and item ids are
/// interned to dense indices in first-appearance order. Immutable after
/// ingestion; safe to share across concurrent readers.
class RatingTable {
public:
    int intern_user(std::string_view id);
    int intern_item(std::string_view id);
    void add_row(RatingTuple row);

    ContextSchema& schema() { return schema_; }
    const ContextSchema& schema() const { return schema_; }

    int num_users() const { return static_cast<int>(user_ids_.size()); }
    int num_items() const { return static_cast<int>(item_ids_.size()); }
    int num_rows() const { return static_cast<int>(rows_.size()); }
    bool empty() const { return rows_.empty(); }

    const std::vector<RatingTuple>& rows() const { return rows_; }
    const std::string& user_id(int u) const { return user_ids_[u]; }
    const std::string& item_id(int i) const { return item_ids_[i]; }
    std::optional<int> find_user(std::string_view id) const;
    std::optional<int> find_item(std::string_view id) const;

    /// (min, max) over observed ratings.
    RatingScale scale() const;

    /// Builds a situation from (dimension name, condition value) pairs;
    /// unmentioned dimensions get "na". Throws on unknown names.
    ContextSituation make_situation(
        const std::vector<std::pair<std::string, std::string>>& assignments) const;

    /// Same table with a subset of rows (schema and id spaces preserved).
    RatingTable subset(const std::vector<int>& row_indices) const;

    /// Same rows with every rating replaced (used by binarization).
    RatingTable with_ratings(const std::vector<double>& ratings) const;

    bool operator==(const RatingTable& other) const;

private:
    ContextSchema schema_;
    std::vector<std::string> user_ids_, item_ids_;
    std::unordered_map<std::string, int> user_index_, item_index_;
    std::vector<RatingTuple> rows_;
};

struct DatasetStats {
    int num_users = 0;
    int num_items = 0;
    int num_ratings = 0;
    int num_dimensions = 0;
    int num_conditions = 0;
    double mean = 0.0;
    double median = 0.0;
    double mode = 0.0;
};

/// Counts plus mean/median/mode of the ratings. Throws on an empty table.
DatasetStats compute_stats(const RatingTable& table);

/// Decodes one binary-format row: `columns[k]` names the (dimension,
/// condition) encoded by indicator cell `cells[k]`. Dimensions whose
/// indicators are all zero get "na"; two ones in one dimension is an error.
ContextSituation situation_of(const ContextSchema& schema,
                              const std::vector<std::pair<int, int>>& columns,
                              const std::vector<int>& cells);

// Binary CSV format (bit-exact): header `user,item,rating,<Dim>:<cond>,...`
// with "na" columns omitted on write and implied on read.
void write_binary_csv(const RatingTable& table, std::ostream& out);
std::string to_binary_csv(const RatingTable& table);
RatingTable read_binary_csv(std::istream& in, const std::string& source_name);

/// Shortest decimal form that round-trips: 3.0 -> "3", 3.25 -> "3.25".
std::string format_rating(double value);

// Small CSV helpers shared with ingestion: comma split + per-cell trim.
std::vector<std::string> split_csv_line(const std::string& line);
std::string trim(std::string_view s);
bool equals_ci(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);

}  // namespace ctxrec

#endif  // CTXREC_CORE_HPP

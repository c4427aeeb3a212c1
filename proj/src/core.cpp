#include "ctxrec/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ctxrec {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool equals_ci(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    }
    return true;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

std::string format_rating(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// ContextSchema

static bool is_na_value(std::string_view v) {
    return v.empty() || equals_ci(v, "na");
}

int ContextSchema::add_dimension(std::string_view name) {
    std::string key = to_lower(name);
    auto it = dim_index_.find(key);
    if (it != dim_index_.end()) return it->second;
    Dimension d;
    d.name = std::string(name);
    d.conditions.push_back("na");
    d.index.emplace("na", kNaCondition);
    dims_.push_back(std::move(d));
    int idx = static_cast<int>(dims_.size()) - 1;
    dim_index_.emplace(std::move(key), idx);
    return idx;
}

int ContextSchema::add_condition(int dim, std::string_view value) {
    Dimension& d = dims_.at(dim);
    if (is_na_value(value)) return kNaCondition;
    auto it = d.index.find(std::string(value));
    if (it != d.index.end()) return it->second;
    d.conditions.emplace_back(value);
    int idx = static_cast<int>(d.conditions.size()) - 1;
    d.index.emplace(std::string(value), idx);
    return idx;
}

int ContextSchema::condition_count(int dim) const {
    return static_cast<int>(dims_.at(dim).conditions.size());
}

int ContextSchema::total_conditions() const {
    int total = 0;
    for (const auto& d : dims_) total += static_cast<int>(d.conditions.size());
    return total;
}

const std::string& ContextSchema::dimension_name(int dim) const {
    return dims_.at(dim).name;
}

const std::string& ContextSchema::condition_name(int dim, int cond) const {
    return dims_.at(dim).conditions.at(cond);
}

int ContextSchema::find_dimension(std::string_view name) const {
    auto it = dim_index_.find(to_lower(name));
    return it == dim_index_.end() ? -1 : it->second;
}

int ContextSchema::require_condition(int dim, std::string_view value) const {
    const Dimension& d = dims_.at(dim);
    if (is_na_value(value)) return kNaCondition;
    auto it = d.index.find(std::string(value));
    if (it == d.index.end())
        throw std::runtime_error("unknown condition '" + std::string(value) +
                                 "' in dimension " + d.name);
    return it->second;
}

int ContextSchema::global_index(int dim, int cond) const {
    int offset = 0;
    for (int d = 0; d < dim; ++d) offset += condition_count(d);
    if (cond < 0 || cond >= condition_count(dim))
        throw std::out_of_range("condition index out of range");
    return offset + cond;
}

std::pair<int, int> ContextSchema::from_global(int global) const {
    int g = global;
    for (int d = 0; d < dimension_count(); ++d) {
        int n = condition_count(d);
        if (g < n) return {d, g};
        g -= n;
    }
    throw std::out_of_range("global condition index out of range");
}

bool ContextSchema::operator==(const ContextSchema& other) const {
    if (dims_.size() != other.dims_.size()) return false;
    for (size_t d = 0; d < dims_.size(); ++d) {
        if (dims_[d].name != other.dims_[d].name) return false;
        if (dims_[d].conditions != other.dims_[d].conditions) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// RatingTable

int RatingTable::intern_user(std::string_view id) {
    auto it = user_index_.find(std::string(id));
    if (it != user_index_.end()) return it->second;
    user_ids_.emplace_back(id);
    int idx = static_cast<int>(user_ids_.size()) - 1;
    user_index_.emplace(std::string(id), idx);
    return idx;
}

int RatingTable::intern_item(std::string_view id) {
    auto it = item_index_.find(std::string(id));
    if (it != item_index_.end()) return it->second;
    item_ids_.emplace_back(id);
    int idx = static_cast<int>(item_ids_.size()) - 1;
    item_index_.emplace(std::string(id), idx);
    return idx;
}

void RatingTable::add_row(RatingTuple row) { rows_.push_back(std::move(row)); }

std::optional<int> RatingTable::find_user(std::string_view id) const {
    auto it = user_index_.find(std::string(id));
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> RatingTable::find_item(std::string_view id) const {
    auto it = item_index_.find(std::string(id));
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
}

RatingScale RatingTable::scale() const {
    if (rows_.empty()) return {0.0, 0.0};
    double lo = rows_.front().rating, hi = lo;
    for (const auto& r : rows_) {
        lo = std::min(lo, r.rating);
        hi = std::max(hi, r.rating);
    }
    return {lo, hi};
}

ContextSituation RatingTable::make_situation(
    const std::vector<std::pair<std::string, std::string>>& assignments) const {
    ContextSituation s;
    s.active.assign(schema_.dimension_count(), ContextSchema::kNaCondition);
    for (const auto& [dim_name, value] : assignments) {
        int d = schema_.find_dimension(dim_name);
        if (d < 0) throw std::runtime_error("unknown dimension '" + dim_name + "'");
        s.active[d] = schema_.require_condition(d, value);
    }
    return s;
}

RatingTable RatingTable::subset(const std::vector<int>& row_indices) const {
    RatingTable out;
    out.schema_ = schema_;
    out.user_ids_ = user_ids_;
    out.item_ids_ = item_ids_;
    out.user_index_ = user_index_;
    out.item_index_ = item_index_;
    out.rows_.reserve(row_indices.size());
    for (int idx : row_indices) out.rows_.push_back(rows_.at(idx));
    return out;
}

RatingTable RatingTable::with_ratings(const std::vector<double>& ratings) const {
    if (ratings.size() != rows_.size())
        throw std::invalid_argument("rating count mismatch");
    RatingTable out = *this;
    for (size_t i = 0; i < ratings.size(); ++i) out.rows_[i].rating = ratings[i];
    return out;
}

bool RatingTable::operator==(const RatingTable& other) const {
    return schema_ == other.schema_ && user_ids_ == other.user_ids_ &&
           item_ids_ == other.item_ids_ && rows_ == other.rows_;
}

// ---------------------------------------------------------------------------
// Statistics

DatasetStats compute_stats(const RatingTable& table) {
    if (table.empty()) throw std::runtime_error("empty dataset");

    DatasetStats st;
    st.num_users = table.num_users();
    st.num_items = table.num_items();
    st.num_ratings = table.num_rows();
    st.num_dimensions = table.schema().dimension_count();
    st.num_conditions = table.schema().total_conditions();

    std::vector<double> ratings;
    ratings.reserve(table.num_rows());
    double sum = 0.0;
    for (const auto& r : table.rows()) {
        ratings.push_back(r.rating);
        sum += r.rating;
    }
    st.mean = sum / static_cast<double>(ratings.size());

    std::sort(ratings.begin(), ratings.end());
    size_t n = ratings.size();
    st.median = (n % 2 == 1) ? ratings[n / 2]
                             : 0.5 * (ratings[n / 2 - 1] + ratings[n / 2]);

    // Mode: maximal frequency, ties broken by smallest value. The ordered
    // map makes the tie rule fall out of iteration order.
    std::map<double, int> freq;
    for (double v : ratings) ++freq[v];
    int best = 0;
    for (const auto& [value, count] : freq) {
        if (count > best) {
            best = count;
            st.mode = value;
        }
    }
    return st;
}

ContextSituation situation_of(const ContextSchema& schema,
                              const std::vector<std::pair<int, int>>& columns,
                              const std::vector<int>& cells) {
    if (columns.size() != cells.size())
        throw std::invalid_argument("indicator cell count mismatch");
    ContextSituation s;
    s.active.assign(schema.dimension_count(), ContextSchema::kNaCondition);
    std::vector<bool> seen(schema.dimension_count(), false);
    for (size_t k = 0; k < columns.size(); ++k) {
        if (cells[k] == 0) continue;
        auto [dim, cond] = columns[k];
        if (seen[dim])
            throw std::runtime_error("ambiguous situation: " +
                                     schema.dimension_name(dim));
        seen[dim] = true;
        s.active[dim] = cond;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Binary CSV

void write_binary_csv(const RatingTable& table, std::ostream& out) {
    const ContextSchema& schema = table.schema();
    out << "user,item,rating";
    for (int d = 0; d < schema.dimension_count(); ++d)
        for (int c = 1; c < schema.condition_count(d); ++c)
            out << ',' << schema.dimension_name(d) << ':' << schema.condition_name(d, c);
    out << '\n';

    for (const auto& row : table.rows()) {
        out << table.user_id(row.user) << ',' << table.item_id(row.item) << ','
            << format_rating(row.rating);
        for (int d = 0; d < schema.dimension_count(); ++d)
            for (int c = 1; c < schema.condition_count(d); ++c)
                out << ',' << (row.situation.active[d] == c ? '1' : '0');
        out << '\n';
    }
}

std::string to_binary_csv(const RatingTable& table) {
    std::ostringstream os;
    write_binary_csv(table, os);
    return os.str();
}

static double parse_rating_or_throw(const std::string& cell,
                                    const std::string& source, int line_no) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error(source + ":" + std::to_string(line_no) +
                                 ": non-numeric rating '" + cell + "'");
    return value;
}

RatingTable read_binary_csv(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(source_name + ": malformed header");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3)
        throw std::runtime_error(source_name + ": malformed header");

    RatingTable table;
    ContextSchema& schema = table.schema();
    std::vector<std::pair<int, int>> columns;   // indicator column -> (dim, cond)
    for (size_t k = 3; k < header.size(); ++k) {
        size_t colon = header[k].find(':');
        if (colon == std::string::npos)
            throw std::runtime_error(source_name +
                                     ": expected '<Dim>:<cond>' column, got '" +
                                     header[k] + "'");
        int dim = schema.add_dimension(trim(std::string_view(header[k]).substr(0, colon)));
        int cond = schema.add_condition(dim, trim(std::string_view(header[k]).substr(colon + 1)));
        columns.emplace_back(dim, cond);
    }

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                     ": row has " + std::to_string(cells.size()) +
                                     " cells, header has " +
                                     std::to_string(header.size()));
        RatingTuple row;
        row.user = table.intern_user(cells[0]);
        row.item = table.intern_item(cells[1]);
        row.rating = parse_rating_or_throw(cells[2], source_name, line_no);
        std::vector<int> indicators;
        indicators.reserve(columns.size());
        for (size_t k = 3; k < cells.size(); ++k) {
            if (cells[k] == "0")
                indicators.push_back(0);
            else if (cells[k] == "1")
                indicators.push_back(1);
            else
                throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                         ": indicator cell must be 0 or 1, got '" +
                                         cells[k] + "'");
        }
        row.situation = situation_of(schema, columns, indicators);
        table.add_row(std::move(row));
    }
    return table;
}

}  // namespace ctxrec

#include "ctxrec/ingest.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ctxrec {

namespace fs = std::filesystem;

const char* to_string(SourceFormat f) {
    switch (f) {
        case SourceFormat::Loose: return "loose";
        case SourceFormat::Compact: return "compact";
        case SourceFormat::Binary: return "binary";
    }
    return "?";
}

SourceFormat detect_format(const std::vector<std::string>& header) {
    if (header.size() < 3) throw std::runtime_error("malformed header: fewer than 3 columns");
    for (size_t k = 3; k < header.size(); ++k)
        if (header[k].find(':') != std::string::npos) return SourceFormat::Binary;
    if (header.size() == 5 && equals_ci(header[3], "Context") &&
        equals_ci(header[4], "Condition"))
        return SourceFormat::Loose;
    // A stray Context/Condition column in any other arrangement is a broken
    // loose header, not a compact dimension.
    for (size_t k = 3; k < header.size(); ++k)
        if (equals_ci(header[k], "Context") || equals_ci(header[k], "Condition"))
            throw std::runtime_error(
                "malformed header: loose-style columns need exactly "
                "user,item,rating,Context,Condition");
    return SourceFormat::Compact;
}

static double parse_rating(const std::string& cell, const std::string& source,
                           int line_no) {
    double value = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw std::runtime_error(source + ":" + std::to_string(line_no) +
                                 ": non-numeric rating '" + cell + "'");
    return value;
}

RatingTable transform_compact_to_binary(const std::vector<std::vector<std::string>>& rows,
                                        const std::vector<std::string>& header,
                                        const std::string& source_name) {
    RatingTable table;
    ContextSchema& schema = table.schema();
    for (size_t k = 3; k < header.size(); ++k) schema.add_dimension(header[k]);

    int line_no = 1;   // header is line 1
    for (const auto& cells : rows) {
        ++line_no;
        if (cells.size() != header.size())
            throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                     ": row has " + std::to_string(cells.size()) +
                                     " cells, header has " +
                                     std::to_string(header.size()));
        RatingTuple row;
        row.user = table.intern_user(cells[0]);
        row.item = table.intern_item(cells[1]);
        row.rating = parse_rating(cells[2], source_name, line_no);
        row.situation.active.assign(schema.dimension_count(), ContextSchema::kNaCondition);
        for (size_t k = 3; k < cells.size(); ++k)
            row.situation.active[k - 3] = schema.add_condition(static_cast<int>(k - 3), cells[k]);
        table.add_row(std::move(row));
    }
    return table;
}

RatingTable transform_loose_to_binary(const std::vector<std::vector<std::string>>& rows,
                                      const std::vector<std::string>& header,
                                      const std::string& source_name) {
    RatingTable table;
    ContextSchema& schema = table.schema();

    struct LooseRow {
        std::string user, item;
        double rating;
        int dim, cond;
        int line_no;
    };
    std::vector<LooseRow> parsed;
    parsed.reserve(rows.size());
    int line_no = 1;
    for (const auto& cells : rows) {
        ++line_no;
        if (cells.size() != header.size())
            throw std::runtime_error(source_name + ":" + std::to_string(line_no) +
                                     ": row has " + std::to_string(cells.size()) +
                                     " cells, header has " +
                                     std::to_string(header.size()));
        LooseRow r;
        r.user = cells[0];
        r.item = cells[1];
        r.rating = parse_rating(cells[2], source_name, line_no);
        r.dim = schema.add_dimension(cells[3]);
        r.cond = schema.add_condition(r.dim, cells[4]);
        r.line_no = line_no;
        parsed.push_back(std::move(r));
    }

    // Maximal consecutive runs of identical (user, item, rating) form one
    // contextual rating profile each.
    size_t i = 0;
    while (i < parsed.size()) {
        size_t j = i;
        while (j < parsed.size() && parsed[j].user == parsed[i].user &&
               parsed[j].item == parsed[i].item &&
               parsed[j].rating == parsed[i].rating)
            ++j;

        RatingTuple row;
        row.user = table.intern_user(parsed[i].user);
        row.item = table.intern_item(parsed[i].item);
        row.rating = parsed[i].rating;
        row.situation.active.assign(schema.dimension_count(), ContextSchema::kNaCondition);
        std::vector<bool> mentioned(schema.dimension_count(), false);
        for (size_t k = i; k < j; ++k) {
            const LooseRow& r = parsed[k];
            if (mentioned[r.dim] && row.situation.active[r.dim] != r.cond)
                throw std::runtime_error(source_name + ":" +
                                         std::to_string(r.line_no) +
                                         ": conflicting condition: " +
                                         schema.dimension_name(r.dim));
            mentioned[r.dim] = true;
            row.situation.active[r.dim] = r.cond;
        }
        table.add_row(std::move(row));
        i = j;
    }
    return table;
}

RatingTable binarize(const RatingTable& table, double threshold) {
    if (threshold < 0) return table;
    std::vector<double> ratings;
    ratings.reserve(table.num_rows());
    for (const auto& r : table.rows()) ratings.push_back(r.rating > threshold ? 1.0 : 0.0);
    return table.with_ratings(ratings);
}

RatingTable read_rating_file(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(source_name + ": malformed header");
    std::vector<std::string> header = split_csv_line(line);
    SourceFormat format = detect_format(header);

    if (format == SourceFormat::Binary) {
        std::ostringstream rest;
        rest << line << '\n' << in.rdbuf();
        std::istringstream whole(rest.str());
        return read_binary_csv(whole, source_name);
    }

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return format == SourceFormat::Loose
               ? transform_loose_to_binary(rows, header, source_name)
               : transform_compact_to_binary(rows, header, source_name);
}

RatingTable read_rating_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read data file: " + path.string());
    return read_rating_file(in, path.filename().string());
}

fs::path workspace_dir(const fs::path& data_path) {
    fs::path parent = data_path.parent_path();
    if (parent.empty()) parent = ".";
    return parent / kWorkspaceFolder;
}

RatingTable prepare_workspace(const fs::path& data_path, int data_transformation,
                              std::ostream* warnings) {
    if (!fs::exists(data_path))
        throw std::runtime_error("data file not found: " + data_path.string());

    fs::path workspace = workspace_dir(data_path);
    fs::create_directories(workspace);
    fs::path cache = workspace / kBinaryCacheFile;

    if (data_transformation <= 0) {
        if (fs::exists(cache)) {
            std::ifstream in(cache);
            if (!in) throw std::runtime_error("cannot read cached binary file: " + cache.string());
            return read_binary_csv(in, cache.filename().string());
        }
        if (warnings)
            *warnings << "warning: no cached binary data under " << workspace.string()
                      << ", transforming " << data_path.filename().string() << "\n";
    }

    RatingTable table = read_rating_file(data_path);
    std::ofstream out(cache, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cached binary file: " + cache.string());
    write_binary_csv(table, out);
    return table;
}

}  // namespace ctxrec

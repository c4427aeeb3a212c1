// Input format detection, loose/compact -> binary transformation, rating
// binarization, and workspace folder management.

#ifndef CTXREC_INGEST_HPP
#define CTXREC_INGEST_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxrec/core.hpp"

namespace ctxrec {

enum class SourceFormat { Loose, Compact, Binary };

const char* to_string(SourceFormat f);

/// Pure function of the header row. The first three columns are always
/// user, item, rating (names ignored); a `:` in any later column means
/// Binary; exactly five columns named Context/Condition means Loose;
/// anything else is Compact.
SourceFormat detect_format(const std::vector<std::string>& header);

RatingTable transform_compact_to_binary(const std::vector<std::vector<std::string>>& rows,
                                        const std::vector<std::string>& header,
                                        const std::string& source_name = "<memory>");

/// Loose rows are grouped over maximal consecutive runs of identical
/// (user, item, rating); each run contributes one contextual rating.
RatingTable transform_loose_to_binary(const std::vector<std::vector<std::string>>& rows,
                                      const std::vector<std::string>& header,
                                      const std::string& source_name = "<memory>");

/// threshold < 0 leaves the table untouched; otherwise ratings become
/// 1 when strictly above the threshold and 0 otherwise.
RatingTable binarize(const RatingTable& table, double threshold);

/// Reads any of the three formats from a stream.
RatingTable read_rating_file(std::istream& in, const std::string& source_name);
RatingTable read_rating_file(const std::filesystem::path& path);

inline constexpr const char* kWorkspaceFolder = "CARSKit.Workspace";
inline constexpr const char* kBinaryCacheFile = "ratings_binary.txt";

/// Creates `CARSKit.Workspace` next to the data file, transforms the source
/// into the cached binary file when requested (data_transformation > 0) or
/// when no cache exists yet, and returns the loaded table.
RatingTable prepare_workspace(const std::filesystem::path& data_path,
                              int data_transformation,
                              std::ostream* warnings = nullptr);

std::filesystem::path workspace_dir(const std::filesystem::path& data_path);

}  // namespace ctxrec

#endif  // CTXREC_INGEST_HPP

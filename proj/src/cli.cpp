#include "ctxrec/cli.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctxrec/ingest.hpp"

namespace ctxrec {

namespace {

std::vector<std::string> tokenize(const std::string& value) {
    std::vector<std::string> toks;
    std::istringstream is(value);
    std::string t;
    while (is >> t) {
        while (!t.empty() && t.back() == ',') t.pop_back();
        if (!t.empty()) toks.push_back(t);
    }
    return toks;
}

bool looks_numeric(const std::string& t) {
    if (t.size() < 2 || t[0] != '-') return false;
    return std::isdigit(static_cast<unsigned char>(t[1])) || t[1] == '.';
}

[[noreturn]] void line_error(int line_no, const std::string& what) {
    throw std::runtime_error("config line " + std::to_string(line_no) + ": " + what);
}

double to_real(const std::string& s, int line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        line_error(line_no, "expected a number, got '" + s + "'");
    return v;
}

int to_int(const std::string& s, int line_no) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        line_error(line_no, "expected an integer, got '" + s + "'");
    return v;
}

bool to_on_off(const std::string& s, int line_no) {
    std::string v = to_lower(s);
    if (v == "on") return true;
    if (v == "off") return false;
    line_error(line_no, "expected on/off, got '" + s + "'");
}

// Walks `-flag value` / `--flag value` options from `start`. Flags in
// `ignored` take no value and only warn; unknown flags and stray tokens warn.
void scan_options(
    const std::vector<std::string>& toks, size_t start, int line_no,
    const std::map<std::string, std::function<void(const std::string&)>>& with_value,
    const std::set<std::string>& ignored, std::ostream* warnings) {
    auto warn = [&](const std::string& msg) {
        if (warnings) *warnings << "warning: config line " << line_no << ": " << msg << "\n";
    };
    for (size_t i = start; i < toks.size(); ++i) {
        const std::string& t = toks[i];
        if (t[0] == '-' && !looks_numeric(t)) {
            std::string flag = to_lower(t);
            if (auto it = with_value.find(flag); it != with_value.end()) {
                if (i + 1 >= toks.size())
                    line_error(line_no, "option " + t + " needs a value");
                it->second(toks[++i]);
            } else if (ignored.count(flag)) {
                warn("option " + t + " is not supported; ignoring");
            } else {
                warn("unknown option " + t);
            }
        } else {
            warn("ignoring stray token '" + t + "'");
        }
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, std::ostream* warnings) {
    ExperimentConfig cfg;
    bool ranking_seen = false;

    std::istringstream lines(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(lines, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (warnings)
                *warnings << "warning: config line " << line_no
                          << ": ignoring line without '='\n";
            continue;
        }
        std::string key = to_lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));

        if (key == "dataset.ratings.wins") {
            cfg.data_path_windows = value;
        } else if (key == "dataset.ratings.lins") {
            cfg.data_path_other = value;
        } else if (key == "ratings.setup") {
            auto toks = tokenize(value);
            scan_options(toks, 0, line_no,
                         {{"-threshold",
                           [&](const std::string& v) {
                               cfg.ratings.threshold = to_real(v, line_no);
                           }},
                          {"-datatransformation",
                           [&](const std::string& v) {
                               cfg.ratings.data_transformation = to_int(v, line_no);
                           }}},
                         {}, warnings);
        } else if (key == "recommender") {
            auto toks = tokenize(value);
            if (toks.empty()) line_error(line_no, "recommender not set");
            cfg.recommender = to_lower(toks[0]);
            scan_options(toks, 1, line_no,
                         {{"-traditional",
                           [&](const std::string& v) {
                               cfg.hyper.split_traditional = to_lower(v);
                           }},
                          {"-minlength",
                           [&](const std::string& v) {
                               cfg.hyper.split_min_length = to_int(v, line_no);
                           }},
                          {"-alpha",
                           [&](const std::string& v) {
                               cfg.hyper.split_alpha = to_real(v, line_no);
                           }}},
                         {}, warnings);
        } else if (key == "item.ranking") {
            auto toks = tokenize(value);
            if (toks.empty()) line_error(line_no, "item.ranking needs on/off");
            cfg.ranking.enabled = to_on_off(toks[0], line_no);
            ranking_seen = true;
            scan_options(toks, 1, line_no,
                         {{"-topn",
                           [&](const std::string& v) {
                               cfg.ranking.top_n = to_int(v, line_no);
                           }}},
                         {}, warnings);
        } else if (key == "evaluation.setup") {
            auto toks = tokenize(value);
            if (toks.empty()) line_error(line_no, "evaluation.setup needs a protocol");
            std::string proto = to_lower(toks[0]);
            if (proto == "cv")
                cfg.protocol.kind = Protocol::Kind::CrossValidation;
            else if (proto == "given-ratio")
                cfg.protocol.kind = Protocol::Kind::Ratio;
            else
                line_error(line_no, "unknown protocol '" + toks[0] + "'");
            scan_options(
                toks, 1, line_no,
                {{"-k",
                  [&](const std::string& v) { cfg.protocol.k = to_int(v, line_no); }},
                 {"-r",
                  [&](const std::string& v) {
                      cfg.protocol.train_ratio = to_real(v, line_no);
                  }},
                 {"-p",
                  [&](const std::string& v) {
                      cfg.protocol.parallel = to_on_off(v, line_no);
                  }},
                 {"--rand-seed",
                  [&](const std::string& v) { cfg.protocol.seed = to_int(v, line_no); }},
                 {"--test-view",
                  [&](const std::string& v) { cfg.protocol.test_view = to_lower(v); }},
                 {"--early-stop",
                  [&](const std::string& v) { cfg.hyper.early_stop_metric = v; }}},
                {}, warnings);
        } else if (key == "output.setup") {
            auto toks = tokenize(value);
            scan_options(toks, 0, line_no,
                         {{"-folder",
                           [&](const std::string& v) { cfg.output.folder = v; }},
                          {"-verbose",
                           [&](const std::string& v) {
                               cfg.output.verbose = to_on_off(v, line_no);
                           }},
                          {"--to-file",
                           [&](const std::string& v) { cfg.output.results_file = v; }}},
                         {"--to-clipboard"}, warnings);
        } else if (key == "num.factors") {
            cfg.hyper.num_factors = to_int(value, line_no);
        } else if (key == "learn.rate") {
            cfg.hyper.learn_rate = to_real(value, line_no);
        } else if (key == "reg.user") {
            cfg.hyper.reg_user = to_real(value, line_no);
        } else if (key == "reg.item") {
            cfg.hyper.reg_item = to_real(value, line_no);
        } else if (key == "reg.context") {
            cfg.hyper.reg_context = to_real(value, line_no);
        } else if (key == "reg.l1") {
            cfg.hyper.l1_reg = to_real(value, line_no);
        } else if (key == "reg.l2") {
            cfg.hyper.l2_reg = to_real(value, line_no);
        } else if (key == "num.max.iter") {
            cfg.hyper.num_iterations = to_int(value, line_no);
        } else if (key == "init.std") {
            cfg.hyper.init_std = to_real(value, line_no);
        } else if (key == "knn.k") {
            cfg.hyper.knn_k = to_int(value, line_no);
        } else if (key == "knn.shrinkage") {
            cfg.hyper.knn_shrinkage = to_real(value, line_no);
        } else {
            if (warnings)
                *warnings << "warning: config line " << line_no << ": unknown key '"
                          << key << "'\n";
        }
    }

    if (cfg.recommender.empty()) throw std::runtime_error("recommender not set");
    (void)ranking_seen;
    cfg.hyper.top_n = cfg.ranking.top_n;
    cfg.hyper.rand_seed = cfg.protocol.seed;
    cfg.hyper.verbose = cfg.output.verbose;
    return cfg;
}

std::string render_config(const ExperimentConfig& c) {
    std::ostringstream os;
    if (!c.data_path_windows.empty())
        os << "dataset.ratings.wins=" << c.data_path_windows << "\n";
    if (!c.data_path_other.empty())
        os << "dataset.ratings.lins=" << c.data_path_other << "\n";
    os << "ratings.setup=-threshold " << format_rating(c.ratings.threshold)
       << " -datatransformation " << c.ratings.data_transformation << "\n";
    os << "recommender=" << c.recommender;
    if (c.recommender.find("splitting") != std::string::npos)
        os << " -traditional " << c.hyper.split_traditional << " -minlength "
           << c.hyper.split_min_length << " -alpha "
           << format_rating(c.hyper.split_alpha);
    os << "\n";
    os << "item.ranking=" << (c.ranking.enabled ? "on" : "off") << " -topN "
       << c.ranking.top_n << "\n";
    os << "evaluation.setup=";
    if (c.protocol.kind == Protocol::Kind::CrossValidation)
        os << "cv -k " << c.protocol.k << " -p " << (c.protocol.parallel ? "on" : "off");
    else
        os << "given-ratio -r " << format_rating(c.protocol.train_ratio);
    os << " --rand-seed " << c.protocol.seed << " --test-view " << c.protocol.test_view;
    if (!c.hyper.early_stop_metric.empty())
        os << " --early-stop " << c.hyper.early_stop_metric;
    os << "\n";
    os << "output.setup=-folder " << c.output.folder << " -verbose "
       << (c.output.verbose ? "on" : "off") << " --to-file " << c.output.results_file
       << "\n";
    os << "num.factors=" << c.hyper.num_factors << "\n";
    os << "learn.rate=" << format_rating(c.hyper.learn_rate) << "\n";
    os << "reg.user=" << format_rating(c.hyper.reg_user) << "\n";
    os << "reg.item=" << format_rating(c.hyper.reg_item) << "\n";
    os << "reg.context=" << format_rating(c.hyper.reg_context) << "\n";
    os << "reg.l1=" << format_rating(c.hyper.l1_reg) << "\n";
    os << "reg.l2=" << format_rating(c.hyper.l2_reg) << "\n";
    os << "num.max.iter=" << c.hyper.num_iterations << "\n";
    os << "init.std=" << format_rating(c.hyper.init_std) << "\n";
    os << "knn.k=" << c.hyper.knn_k << "\n";
    os << "knn.shrinkage=" << format_rating(c.hyper.knn_shrinkage) << "\n";
    return os.str();
}

std::string resolve_data_path(const ExperimentConfig& config,
                              const std::string& platform) {
    bool windows = equals_ci(platform, "windows");
    const std::string& preferred =
        windows ? config.data_path_windows : config.data_path_other;
    const std::string& other =
        windows ? config.data_path_other : config.data_path_windows;
    if (!preferred.empty()) return preferred;
    if (!other.empty()) return other;
    throw std::runtime_error("no data path configured (dataset.ratings.wins/lins)");
}

const char* host_platform() {
#ifdef _WIN32
    return "windows";
#else
    return "other";
#endif
}

static std::string format_stat(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    std::string s = buf;
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

void print_stats(const DatasetStats& stats, const RatingScale& scale,
                 std::ostream& out) {
    out << "Dataset statistics:\n"
        << "  users: " << stats.num_users << "\n"
        << "  items: " << stats.num_items << "\n"
        << "  ratings: " << stats.num_ratings << "\n"
        << "  context dimensions: " << stats.num_dimensions << "\n"
        << "  context conditions: " << stats.num_conditions << "\n"
        << "  rating scale: [" << format_rating(scale.min) << ", "
        << format_rating(scale.max) << "]\n"
        << "  mean: " << format_stat(stats.mean)
        << "  median: " << format_stat(stats.median)
        << "  mode: " << format_stat(stats.mode) << "\n";
}

std::string results_line(const EvalReport& report, const std::string& timestamp) {
    std::string line = timestamp;
    line += '\t';
    line += report.algorithm;
    line += '\t';
    line += to_string(report.task);
    line += '\t';
    char buf[96];
    bool first = true;
    for (const auto& [name, value] : report.metrics) {
        std::snprintf(buf, sizeof(buf), "%s%s=%.6f", first ? "" : ",", name.c_str(),
                      value);
        line += buf;
        first = false;
    }
    line += '\t';
    line += report.params;
    return line;
}

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_results(const EvalReport& report, const std::filesystem::path& results_path) {
    std::ofstream out(results_path, std::ios::app);
    if (!out)
        throw std::runtime_error("cannot write results file: " + results_path.string());
    out << results_line(report, iso8601_utc_now()) << "\n";
}

int run(const std::vector<std::string>& config_paths, std::ostream& out,
        std::ostream& err) {
    int failures = 0;
    for (const auto& path : config_paths) {
        try {
            std::ifstream in(path);
            if (!in) throw std::runtime_error("cannot read config file: " + path);
            std::ostringstream text;
            text << in.rdbuf();

            ExperimentConfig cfg = parse_config(text.str(), &err);
            std::filesystem::path data = resolve_data_path(cfg, host_platform());

            out << "== " << cfg.recommender << " on " << data.string() << "\n";
            RatingTable table =
                prepare_workspace(data, cfg.ratings.data_transformation, &err);
            table = binarize(table, cfg.ratings.threshold);
            print_stats(compute_stats(table), table.scale(), out);

            Task task = cfg.ranking.enabled ? Task::Ranking : Task::Rating;
            EvalReport report =
                evaluate(cfg.recommender, table, cfg.protocol, task, cfg.hyper);

            out << "Result: " << results_line(report, iso8601_utc_now()) << "\n";

            std::filesystem::path parent = data.parent_path();
            if (parent.empty()) parent = ".";
            std::filesystem::path out_dir = parent / cfg.output.folder;
            std::filesystem::create_directories(out_dir);
            write_results(report, out_dir / cfg.output.results_file);
        } catch (const std::exception& e) {
            err << "error: " << path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace ctxrec

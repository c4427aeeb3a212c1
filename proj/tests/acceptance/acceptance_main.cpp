// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Each check recomputes its expectations independently of
// the code path it validates.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctxrec/baselines.hpp"
#include "ctxrec/camf.hpp"
#include "ctxrec/cli.hpp"
#include "ctxrec/cptf.hpp"
#include "ctxrec/cslim.hpp"
#include "ctxrec/engine.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/ingest.hpp"
#include "ctxrec/splitting.hpp"
#include "test_support.hpp"

using namespace ctxrec;
namespace fs = std::filesystem;

namespace {

struct Harness {
    int failures = 0;
    int index = 0;

    void check(const std::string& name, double budget_seconds,
               const std::function<void()>& body) {
        ++index;
        auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            body();
        } catch (const std::exception& e) {
            error = e.what();
        }
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        if (error.empty() && elapsed > budget_seconds)
            error = "exceeded the " + std::to_string(budget_seconds) + "s budget";
        if (error.empty()) {
            std::printf("PASS %2d %-28s (%.2fs)\n", index, name.c_str(), elapsed);
        } else {
            std::printf("FAIL %2d %-28s (%.2fs): %s\n", index, name.c_str(), elapsed,
                        error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
};

void require(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

double metric_of(const EvalReport& r, const std::string& key) {
    for (const auto& [k, v] : r.metrics)
        if (k == key) return v;
    throw std::runtime_error("metric " + key + " missing from the report");
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ctxrec_accept_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---------------------------------------------------------------------------

void criterion_format_fidelity() {
    // Compact input: the four contextual rating profiles.
    std::istringstream compact_in(testsup::kCompactSample);
    RatingTable compact = read_rating_file(compact_in, "compact");
    require(compact.num_rows() == 4, "compact transform must keep 4 rows");

    // Expected binary serialization under the first-appearance column rule.
    const std::string expected =
        "user,item,rating,Time:Weekend,Time:Weekday,Location:Work,Location:Home\n"
        "U1,T1,3,1,0,1,0\n"
        "U2,T2,4,0,1,0,1\n"
        "U1,T1,4,1,0,0,1\n"
        "U2,T2,2,0,1,1,0\n";
    require(to_binary_csv(compact) == expected,
            "compact -> binary serialization is not bit-exact");

    // Row-by-row one-hot content of the reference table.
    struct Expect {
        const char *user, *item;
        double rating;
        const char *time, *loc;
    };
    const Expect rows[4] = {{"U1", "T1", 3, "Weekend", "Work"},
                            {"U2", "T2", 4, "Weekday", "Home"},
                            {"U1", "T1", 4, "Weekend", "Home"},
                            {"U2", "T2", 2, "Weekday", "Work"}};
    for (int r = 0; r < 4; ++r) {
        const RatingTuple& row = compact.rows()[r];
        require(compact.user_id(row.user) == rows[r].user, "user mismatch");
        require(compact.item_id(row.item) == rows[r].item, "item mismatch");
        require(row.rating == rows[r].rating, "rating mismatch");
        require(row.situation == compact.make_situation(
                                     {{"Time", rows[r].time}, {"Location", rows[r].loc}}),
                "situation mismatch");
    }

    // Loose input collapses to exactly two profiles.
    std::istringstream loose_in(testsup::kLooseSample);
    RatingTable loose = read_rating_file(loose_in, "loose");
    require(loose.num_rows() == 2, "loose transform must yield 2 rows");
    require(loose.rows()[0].rating == 3 &&
                loose.rows()[0].situation ==
                    loose.make_situation({{"Time", "Weekend"}, {"Location", "Work"}}),
            "first loose profile wrong");
    require(loose.rows()[1].rating == 4 &&
                loose.rows()[1].situation ==
                    loose.make_situation({{"Time", "Weekday"}, {"Location", "Home"}}),
            "second loose profile wrong");
}

void criterion_binarization() {
    RatingTable t = testsup::sample_table();
    RatingTable b = binarize(t, 3.0);
    std::vector<double> got;
    for (const auto& r : b.rows()) got.push_back(r.rating);
    require(got == std::vector<double>{0, 1, 1, 0}, "threshold 3 must give 0,1,1,0");
    require(binarize(t, -1.0) == t, "threshold -1 must be the identity");
}

void criterion_statistics() {
    DatasetStats st = compute_stats(testsup::sample_table());
    require(st.mean == 3.25, "mean must be exactly 3.25");
    require(st.median == 3.5, "median must be exactly 3.5");
    require(st.mode == 4.0, "mode must be exactly 4");
    require(st.num_users == 2 && st.num_items == 2 && st.num_dimensions == 2,
            "counts must be 2 users, 2 items, 2 dimensions");
}

void criterion_metric_oracles() {
    std::mt19937 gen(12345);
    for (int trial = 0; trial < 1000; ++trial) {
        // Rating-error metrics against direct arithmetic.
        int n = 1 + gen() % 20;
        std::vector<std::pair<double, double>> pairs;
        double abs_sum = 0, sq_sum = 0, miss = 0;
        for (int i = 0; i < n; ++i) {
            double a = 1 + (int)(gen() % 5);
            double p = (gen() % 600) / 100.0;
            pairs.emplace_back(a, p);
            abs_sum += std::abs(a - p);
            sq_sum += (a - p) * (a - p);
            if (std::abs(a - p) > 1e-5) miss += 1;
        }
        require(std::abs(mae(pairs) - abs_sum / n) <= 1e-12, "MAE oracle mismatch");
        require(std::abs(rmse(pairs) - std::sqrt(sq_sum / n)) <= 1e-12,
                "RMSE oracle mismatch");
        require(std::abs(mpe(pairs) - miss / n) <= 1e-12, "MPE oracle mismatch");

        // Ranking metrics against the brute-force reference.
        int items = 2 + gen() % 19;
        int topn = 1 + gen() % items;
        std::vector<int> universe(items);
        for (int i = 0; i < items; ++i) universe[i] = i;
        std::shuffle(universe.begin(), universe.end(), gen);
        RankingCase c;
        c.ranked.assign(universe.begin(), universe.begin() + (1 + gen() % items));
        std::vector<int> rel;
        int rel_n = 1 + gen() % 5;
        for (int r = 0; r < rel_n; ++r) rel.push_back((int)(gen() % items));
        std::sort(rel.begin(), rel.end());
        rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
        c.relevant.insert(rel.begin(), rel.end());

        RankingScores got = ranking_metrics({c}, topn);
        testsup::BruteScores want = testsup::brute_ranking(c.ranked, rel, topn);
        require(std::abs(got.precision - want.prec) <= 1e-12, "Prec oracle mismatch");
        require(std::abs(got.recall - want.rec) <= 1e-12, "Rec oracle mismatch");
        require(std::abs(got.map - want.map) <= 1e-12, "MAP oracle mismatch");
        require(std::abs(got.ndcg - want.ndcg) <= 1e-12, "NDCG oracle mismatch");
        require(std::abs(got.mrr - want.mrr) <= 1e-12, "MRR oracle mismatch");
    }
}

RatingTable random_instance(int seed) {
    std::mt19937 gen(seed);
    RatingTable t;
    int time = t.schema().add_dimension("Time");
    t.schema().add_condition(time, "Weekend");
    t.schema().add_condition(time, "Weekday");
    int loc = t.schema().add_dimension("Location");
    t.schema().add_condition(loc, "Home");
    t.schema().add_condition(loc, "Work");
    for (int u = 0; u < 5; ++u) t.intern_user("u" + std::to_string(u));
    for (int i = 0; i < 5; ++i) t.intern_item("i" + std::to_string(i));
    for (int u = 0; u < 5; ++u)
        for (int i = 0; i < 5; ++i) {
            if (gen() % 4 == 0) continue;
            RatingTuple row;
            row.user = u;
            row.item = i;
            row.situation.active = {(int)(gen() % 3), (int)(gen() % 3)};
            row.rating = 1.0 + gen() % 5;
            t.add_row(std::move(row));
        }
    return t;
}

void criterion_gradient_checks() {
    RatingTable t = random_instance(911);
    HyperParams hp;
    hp.num_factors = 3;
    std::mt19937 gen(977);
    auto randomize = [&](std::vector<double>& theta) {
        for (auto& x : theta) x = (int(gen() % 200) - 100) / 250.0;
    };

    {
        MfModel model(MfVariant::BiasedMf, "biasedmf", 5, 5, {1, 5}, {}, hp);
        std::vector<double> theta = model.pack_params();
        randomize(theta);
        model.unpack_params(theta);
        require(testsup::gradient_check(model, collapse_context(t).entries) <= 1e-4,
                "BiasedMF gradient check failed");
    }
    for (CamfVariant v :
         {CamfVariant::C, CamfVariant::CI, CamfVariant::CU, CamfVariant::CUCI}) {
        CamfModel model(v, "camf", t, hp);
        std::vector<double> theta = model.pack_params();
        randomize(theta);
        model.unpack_params(theta);
        require(testsup::gradient_check(model, t.rows()) <= 1e-4,
                "CAMF gradient check failed");
    }
    {
        ContextSimModel model(SimVariant::LCS, "camf_lcs", t, hp);
        std::vector<double> theta = model.pack_params();
        for (auto& x : theta) x = 0.5 + (int(gen() % 100)) / 200.0;
        model.unpack_params(theta);
        require(testsup::gradient_check(model, t.rows()) <= 1e-4,
                "CAMF_LCS gradient check failed");
    }
    {
        CptfModel model("cptf", t, hp);
        std::vector<double> theta = model.pack_params();
        for (auto& x : theta) x = 0.2 + (int(gen() % 100)) / 150.0;
        model.unpack_params(theta);
        require(testsup::gradient_check(model, t.rows()) <= 1e-4,
                "CPTF gradient check failed");
    }
    {
        CslimModel model(CslimVariant::C, "cslim_c", t, HyperParams{});
        std::vector<double> theta = model.pack_params();
        for (auto& x : theta) x = 0.1 + (int(gen() % 100)) / 400.0;
        model.unpack_params(theta);
        for (int j = 0; j < t.num_items(); ++j) model.set_coefficient(j, j, 0.0);
        require(testsup::gradient_check(model, t.rows()) <= 1e-4,
                "CSLIM_C gradient check failed");
    }
}

void criterion_reproducibility(const fs::path& cli, const fs::path& source_dir) {
    auto folds = kfold_split(500, 5, 1);
    RatingTable t = testsup::planted_deviation_table(5, 200, 15, 10, 3.0, 0.6, 0.2);
    HyperParams hp;
    hp.num_iterations = 5;
    Protocol proto;
    proto.k = 4;
    evaluate("globalavg", t, proto, Task::Rating, hp);
    evaluate("biasedmf", t, proto, Task::Rating, hp);
    require(kfold_split(500, 5, 1) == folds,
            "kfold assignment changed between algorithms");

    // End-to-end byte identity, timestamp aside: run one bundled config
    // twice in a scratch copy and compare the appended lines.
    TempDir dir("repro");
    fs::create_directories(dir.path / "data/sample");
    fs::copy_file(source_dir / "data/sample/ratings.txt",
                  dir.path / "data/sample/ratings.txt");
    fs::create_directories(dir.path / "configs");
    fs::copy_file(source_dir / "configs/camf_c.conf",
                  dir.path / "configs/camf_c.conf");

    std::string cmd = "cd " + dir.path.string() + " && " + cli.string() +
                      " -c configs/camf_c.conf > run.log 2>&1";
    require(std::system(cmd.c_str()) == 0, "first CLI run failed");
    require(std::system(cmd.c_str()) == 0, "second CLI run failed");
    std::ifstream results(dir.path / "data/sample/CARSKit.Workspace/results.txt");
    std::string l1, l2;
    std::getline(results, l1);
    std::getline(results, l2);
    require(!l1.empty() && !l2.empty(), "expected two results lines");
    require(l1.substr(l1.find('\t')) == l2.substr(l2.find('\t')),
            "results lines differ beyond the timestamp");
}

void criterion_planted_context() {
    RatingTable t = testsup::planted_deviation_table(1, 20000, 200, 100, 3.0, 1.0, 0.3);
    HyperParams hp;
    hp.num_iterations = 60;
    Protocol proto;
    proto.k = 5;
    proto.seed = 1;
    proto.parallel = true;

    double camf = metric_of(evaluate("camf_c", t, proto, Task::Rating, hp), "RMSE");
    double biased = metric_of(evaluate("biasedmf", t, proto, Task::Rating, hp), "RMSE");
    double global = metric_of(evaluate("globalavg", t, proto, Task::Rating, hp), "RMSE");
    require(camf <= 0.95 * biased, "CAMF_C RMSE must be <= 0.95x BiasedMF (got " +
                                       std::to_string(camf) + " vs " +
                                       std::to_string(biased) + ")");
    require(camf <= 0.90 * global, "CAMF_C RMSE must be <= 0.90x GlobalAvg (got " +
                                       std::to_string(camf) + " vs " +
                                       std::to_string(global) + ")");

    auto fitted = fit_camf(CamfVariant::C, t, hp);
    auto* model = dynamic_cast<CamfModel*>(fitted.get());
    double dev = model->condition_deviation(0, 1);
    require(dev >= 0.8 && dev <= 1.2,
            "learned dev[Weekend] = " + std::to_string(dev) + " outside [0.8, 1.2]");
}

void criterion_splitting_recovery() {
    int planted_total = 0, recovered = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto planted = testsup::planted_item_split_table(100 + trial, 12, 25, 2.4,
                                                         4.4, 0.35);
        SplitResult res = item_split(planted.table, {});
        for (int i = 0; i < planted.table.num_items(); ++i) {
            ++planted_total;
            const auto& c = res.item_map.choice(i);
            if (c && c->dimension == planted.planted[i].first &&
                c->condition == planted.planted[i].second)
                ++recovered;
        }
    }
    require(recovered >= 0.95 * planted_total,
            "planted condition recovered for only " + std::to_string(recovered) +
                "/" + std::to_string(planted_total) + " items");

    auto planted = testsup::planted_item_split_table(4242, 15, 25, 2.4, 4.4, 0.35);
    HyperParams hp;
    hp.num_iterations = 40;
    Protocol proto;
    proto.k = 5;
    proto.seed = 1;
    proto.parallel = true;
    HyperParams split_hp = hp;
    split_hp.split_traditional = "biasedmf";
    double with_split = metric_of(
        evaluate("itemsplitting", planted.table, proto, Task::Rating, split_hp), "RMSE");
    double plain = metric_of(
        evaluate("biasedmf", planted.table, proto, Task::Rating, hp), "RMSE");
    require(with_split < plain, "ItemSplitting+BiasedMF (" +
                                    std::to_string(with_split) +
                                    ") must beat plain BiasedMF (" +
                                    std::to_string(plain) + ")");
}

void criterion_slim_soundness() {
    std::mt19937 gen(55);
    std::vector<testsup::RowSpec> rows;
    for (int u = 0; u < 15; ++u)
        for (int i = 0; i < 8; ++i)
            if (gen() % 2 == 0)
                rows.push_back({"u" + std::to_string(u), "i" + std::to_string(i),
                                double(1 + gen() % 5),
                                {{"Time", gen() % 2 ? "Weekend" : "Weekday"}}});
    auto t = testsup::make_table({"Time"}, {{"Weekend", "Weekday"}}, rows);
    HyperParams hp;
    hp.num_iterations = 20;

    auto slim_fitted = fit_slim(t, hp);
    auto* slim = dynamic_cast<SlimModel*>(slim_fitted.get());
    const auto& sh = slim->objective_history();
    for (size_t s = 1; s < sh.size(); ++s)
        require(sh[s] <= sh[s - 1] + 1e-9, "SLIM objective increased across a sweep");

    auto cslim_fitted = fit_cslim(CslimVariant::C, t, hp);
    auto* cslim = dynamic_cast<CslimModel*>(cslim_fitted.get());
    const auto& ch = cslim->objective_history();
    for (size_t s = 1; s < ch.size(); ++s)
        require(ch[s] <= ch[s - 1] + 1e-9, "CSLIM objective increased across a sweep");

    for (int j = 0; j < t.num_items(); ++j) {
        require(slim->coefficient(j, j) == 0.0 && cslim->coefficient(j, j) == 0.0,
                "coefficient diagonal must stay zero");
        for (int i = 0; i < t.num_items(); ++i)
            require(slim->coefficient(j, i) >= 0.0 && cslim->coefficient(j, i) >= 0.0,
                    "coefficients must stay nonnegative");
    }

    // Zero-deviation CSLIM must score exactly like SLIM given the same W.
    HyperParams still;
    still.num_iterations = 0;
    auto zero_fitted = fit_cslim(CslimVariant::C, t, still);
    auto* zero_dev = dynamic_cast<CslimModel*>(zero_fitted.get());
    for (int j = 0; j < t.num_items(); ++j)
        for (int i = 0; i < t.num_items(); ++i)
            zero_dev->set_coefficient(j, i, slim->coefficient(j, i));
    ContextSituation na = t.make_situation({});
    for (int u = 0; u < t.num_users(); ++u)
        for (int i = 0; i < t.num_items(); ++i)
            require(zero_dev->score(u, i, na) == slim->score(u, i, na),
                    "zero-deviation CSLIM diverges from SLIM");
}

void criterion_cptf_identity() {
    RatingTable t = testsup::planted_deviation_table(77, 400, 15, 12, 3.0, 0.5, 0.2);
    HyperParams hp;
    hp.num_factors = 5;
    hp.num_iterations = 10;
    auto fitted = fit_cptf(t, hp);
    auto* cptf = dynamic_cast<CptfModel*>(fitted.get());
    cptf->pin_context_factors_to_one();

    const auto& p = cptf->user_factors();
    const auto& q = cptf->item_factors();
    for (int u = 0; u < t.num_users(); ++u)
        for (int i = 0; i < t.num_items(); ++i) {
            double dot = 0.0;
            for (int k = 0; k < hp.num_factors; ++k)
                dot += p[(size_t)u * hp.num_factors + k] *
                       q[(size_t)i * hp.num_factors + k];
            ContextSituation s;
            s.active = {(u + i) % 3, u % 3};
            require(std::abs(cptf->score(u, i, s) - dot) <= 1e-12,
                    "pinned CPTF must equal the PMF score function");
        }
}

void criterion_cli_end_to_end(const fs::path& cli, const fs::path& source_dir) {
    TempDir dir("cli");
    fs::create_directories(dir.path / "data/sample");
    fs::copy_file(source_dir / "data/sample/ratings.txt",
                  dir.path / "data/sample/ratings.txt");
    fs::create_directories(dir.path / "configs");
    for (const char* c : {"biasedmf.conf", "camf_c.conf", "itemknn_topn.conf"})
        fs::copy_file(source_dir / "configs" / c, dir.path / "configs" / c);

    // Single config.
    std::string cmd = "cd " + dir.path.string() + " && " + cli.string() +
                      " -c configs/biasedmf.conf > single.log 2>&1";
    require(std::system(cmd.c_str()) == 0, "single-config CLI run failed");
    std::string log = slurp(dir.path / "single.log");
    require(log.find("users: 10") != std::string::npos &&
                log.find("items: 12") != std::string::npos &&
                log.find("ratings: 220") != std::string::npos,
            "statistics block does not match the bundled dataset");
    fs::path results = dir.path / "data/sample/CARSKit.Workspace/results.txt";
    require(fs::exists(results), "results file missing");
    {
        std::ifstream in(results);
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) {
            ++lines;
            // Parsable: timestamp, algorithm, task, metrics, params.
            int tabs = (int)std::count(line.begin(), line.end(), '\t');
            require(tabs == 4, "results line must have five tab-separated fields");
            require(line.find("MAE=") != std::string::npos, "missing metric field");
        }
        require(lines == 1, "expected exactly one results line");
    }

    // Three configs in one invocation, appended in order.
    fs::remove(results);
    cmd = "cd " + dir.path.string() + " && " + cli.string() +
          " -c configs/biasedmf.conf configs/camf_c.conf configs/itemknn_topn.conf"
          " > multi.log 2>&1";
    require(std::system(cmd.c_str()) == 0, "three-config CLI run failed");
    std::ifstream in(results);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    require(lines.size() == 3, "expected exactly three results lines, got " +
                                   std::to_string(lines.size()));
    require(lines[0].find("biasedmf") != std::string::npos, "line 1 not biasedmf");
    require(lines[1].find("camf_c") != std::string::npos, "line 2 not camf_c");
    require(lines[2].find("itemknn") != std::string::npos, "line 3 not itemknn");
    require(lines[2].find("Prec=") != std::string::npos,
            "ranking line must carry ranking metrics");
}

}  // namespace

int main() {
    const fs::path cli = CTXREC_CLI_PATH;
    const fs::path source_dir = CTXREC_SOURCE_DIR;
    Harness h;

    h.check("format-fidelity", 1.0, [] { criterion_format_fidelity(); });
    h.check("binarization", 5.0, [] { criterion_binarization(); });
    h.check("statistics", 5.0, [] { criterion_statistics(); });
    h.check("metric-oracles", 10.0, [] { criterion_metric_oracles(); });
    h.check("gradient-checks", 30.0, [] { criterion_gradient_checks(); });
    h.check("reproducibility", 60.0,
            [&] { criterion_reproducibility(cli, source_dir); });
    h.check("planted-context-recovery", 60.0, [] { criterion_planted_context(); });
    h.check("splitting-recovery", 60.0, [] { criterion_splitting_recovery(); });
    h.check("slim-cslim-soundness", 30.0, [] { criterion_slim_soundness(); });
    h.check("cptf-identity", 30.0, [] { criterion_cptf_identity(); });
    h.check("cli-end-to-end", 30.0, [&] { criterion_cli_end_to_end(cli, source_dir); });

    if (h.failures == 0) {
        std::printf("acceptance: all %d criteria passed\n", h.index);
        return 0;
    }
    std::printf("acceptance: %d of %d criteria FAILED\n", h.failures, h.index);
    return 1;
}

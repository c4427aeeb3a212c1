#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ctxrec/core.hpp"
#include "test_support.hpp"

using namespace ctxrec;

TEST_CASE("stats over the four-row sample") {
    RatingTable t = testsup::sample_table();
    DatasetStats st = compute_stats(t);
    CHECK(st.num_users == 2);
    CHECK(st.num_items == 2);
    CHECK(st.num_ratings == 4);
    CHECK(st.num_dimensions == 2);
    CHECK(st.num_conditions == 6);   // 4 named + one na per dimension
    CHECK(st.mean == doctest::Approx(3.25));
    CHECK(st.median == doctest::Approx(3.5));
    CHECK(st.mode == doctest::Approx(4.0));
}

TEST_CASE("stats singleton") {
    auto t = testsup::make_table({"Time"}, {{"Weekend"}},
                                 {{"u", "i", 5.0, {{"Time", "Weekend"}}}});
    DatasetStats st = compute_stats(t);
    CHECK(st.mean == 5.0);
    CHECK(st.median == 5.0);
    CHECK(st.mode == 5.0);
}

TEST_CASE("stats empty table error") {
    RatingTable t;
    CHECK_THROWS_WITH_AS(compute_stats(t), "empty dataset", std::runtime_error);
}

TEST_CASE("stats mode tie breaks to the smaller rating") {
    auto t = testsup::make_table(
        {"Time"}, {{"Weekend"}},
        {{"u1", "i", 2.0, {}}, {"u2", "i", 2.0, {}}, {"u3", "i", 4.0, {}},
         {"u4", "i", 4.0, {}}});
    CHECK(compute_stats(t).mode == 2.0);
}

TEST_CASE("stats permutation invariant") {
    RatingTable t = testsup::sample_table();
    std::vector<int> order = {3, 1, 0, 2};
    RatingTable shuffled = t.subset(order);
    DatasetStats a = compute_stats(t);
    DatasetStats b = compute_stats(shuffled);
    CHECK(a.mean == b.mean);
    CHECK(a.median == b.median);
    CHECK(a.mode == b.mode);
    CHECK(a.num_ratings == b.num_ratings);
}

TEST_CASE("situation_of decodes one-hot rows") {
    ContextSchema schema;
    int time = schema.add_dimension("Time");
    int weekend = schema.add_condition(time, "Weekend");
    int weekday = schema.add_condition(time, "Weekday");
    int loc = schema.add_dimension("Location");
    int home = schema.add_condition(loc, "Home");
    int work = schema.add_condition(loc, "Work");
    std::vector<std::pair<int, int>> cols = {
        {time, weekend}, {time, weekday}, {loc, home}, {loc, work}};

    SUBCASE("first sample row") {
        ContextSituation s = situation_of(schema, cols, {1, 0, 0, 1});
        CHECK(s.active[time] == weekend);
        CHECK(s.active[loc] == work);
    }
    SUBCASE("all zeros means na") {
        ContextSituation s = situation_of(schema, cols, {0, 0, 0, 0});
        CHECK(s.active[time] == ContextSchema::kNaCondition);
        CHECK(s.active[loc] == ContextSchema::kNaCondition);
    }
    SUBCASE("two ones in a dimension") {
        CHECK_THROWS_WITH_AS(situation_of(schema, cols, {1, 1, 0, 1}),
                             "ambiguous situation: Time", std::runtime_error);
    }
}

TEST_CASE("schema keeps first-appearance order and a single na") {
    ContextSchema schema;
    int d = schema.add_dimension("Time");
    schema.add_condition(d, "Weekend");
    schema.add_condition(d, "Weekday");
    schema.add_condition(d, "Weekend");   // re-interned, not duplicated
    CHECK(schema.condition_count(d) == 3);
    CHECK(schema.condition_name(d, 0) == "na");
    CHECK(schema.condition_name(d, 1) == "Weekend");
    CHECK(schema.condition_name(d, 2) == "Weekday");

    // Dimension names are case-insensitive; "NA" cells map to the na slot.
    CHECK(schema.add_dimension("TIME") == d);
    CHECK(schema.add_condition(d, "NA") == ContextSchema::kNaCondition);
    CHECK(schema.add_condition(d, "") == ContextSchema::kNaCondition);

    CHECK_THROWS(schema.require_condition(d, "Holiday"));
}

TEST_CASE("global condition index is a bijection") {
    RatingTable t = testsup::sample_table();
    const ContextSchema& schema = t.schema();
    std::vector<bool> hit(schema.total_conditions(), false);
    for (int d = 0; d < schema.dimension_count(); ++d)
        for (int c = 0; c < schema.condition_count(d); ++c) {
            int g = schema.global_index(d, c);
            REQUIRE(g >= 0);
            REQUIRE(g < schema.total_conditions());
            CHECK(!hit[g]);
            hit[g] = true;
            CHECK(schema.from_global(g) == std::pair<int, int>{d, c});
        }
    CHECK(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
}

TEST_CASE("rating rendering drops trailing zeros and round-trips") {
    CHECK(format_rating(3.0) == "3");
    CHECK(format_rating(3.25) == "3.25");
    CHECK(format_rating(3.5) == "3.5");
    CHECK(format_rating(0.0) == "0");
    CHECK(format_rating(-1.0) == "-1");
}

TEST_CASE("binary csv round-trip is exact") {
    RatingTable t = testsup::sample_table();
    std::string csv = to_binary_csv(t);
    std::istringstream in(csv);
    RatingTable back = read_binary_csv(in, "rt");
    CHECK(back == t);
    CHECK(to_binary_csv(back) == csv);
}

TEST_CASE("binary csv round-trip on random tables") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        RatingTable t;
        int dims = 1 + gen() % 3;
        for (int d = 0; d < dims; ++d) {
            int di = t.schema().add_dimension("D" + std::to_string(d));
            int conds = 1 + gen() % 3;
            for (int c = 0; c < conds; ++c)
                t.schema().add_condition(di, "c" + std::to_string(c));
        }
        int rows = 1 + gen() % 30;
        for (int r = 0; r < rows; ++r) {
            RatingTuple row;
            row.user = t.intern_user("u" + std::to_string(gen() % 6));
            row.item = t.intern_item("i" + std::to_string(gen() % 8));
            row.rating = (gen() % 9 + 1) * 0.5;
            row.situation.active.resize(dims);
            for (int d = 0; d < dims; ++d)
                row.situation.active[d] = gen() % t.schema().condition_count(d);
            t.add_row(std::move(row));
        }
        std::string csv = to_binary_csv(t);
        std::istringstream in(csv);
        RatingTable back = read_binary_csv(in, "rt");
        CHECK(back == t);
        CHECK(to_binary_csv(back) == csv);
    }
}

TEST_CASE("every ingested row is one-hot over the schema") {
    RatingTable t = testsup::sample_table();
    for (const auto& row : t.rows()) {
        REQUIRE(row.situation.active.size() == (size_t)t.schema().dimension_count());
        for (int d = 0; d < t.schema().dimension_count(); ++d) {
            CHECK(row.situation.active[d] >= 0);
            CHECK(row.situation.active[d] < t.schema().condition_count(d));
        }
    }
}

TEST_CASE("make_situation rejects unknown names") {
    RatingTable t = testsup::sample_table();
    CHECK_THROWS(t.make_situation({{"Weather", "Sunny"}}));
    CHECK_THROWS(t.make_situation({{"Time", "Holiday"}}));
    ContextSituation s = t.make_situation({{"time", "Weekend"}});
    CHECK(s.active[0] == 1);
    CHECK(s.active[1] == ContextSchema::kNaCondition);
}

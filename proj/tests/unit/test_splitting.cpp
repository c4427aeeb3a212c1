#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxrec/eval.hpp"
#include "ctxrec/splitting.hpp"
#include "test_support.hpp"

using namespace ctxrec;

namespace {

// One item rated under Time=Weekend {5,5,4,5} and Time=Weekday {1,2,1,2}.
RatingTable contrast_item() {
    std::vector<testsup::RowSpec> rows;
    const double weekend[] = {5, 5, 4, 5};
    const double weekday[] = {1, 2, 1, 2};
    for (int k = 0; k < 4; ++k)
        rows.push_back({"wu" + std::to_string(k), "i0", weekend[k],
                        {{"Time", "Weekend"}}});
    for (int k = 0; k < 4; ++k)
        rows.push_back({"du" + std::to_string(k), "i0", weekday[k],
                        {{"Time", "Weekday"}}});
    return testsup::make_table({"Time", "Location"},
                               {{"Weekend", "Weekday"}, {"Home", "Work"}}, rows);
}

}  // namespace

TEST_CASE("welch statistic matches the oracle and the normal p-value") {
    std::vector<double> a = {5, 5, 4, 5};
    std::vector<double> b = {1, 2, 1, 2};
    double t = welch_t_statistic(a, b);
    CHECK(t == doctest::Approx(testsup::brute_welch_t(a, b)).epsilon(1e-12));
    CHECK(welch_p_value(t) < 0.05);
    CHECK(welch_p_value(0.0) == doctest::Approx(1.0));
    // 1.96 sits right at the two-sided 5% boundary.
    CHECK(welch_p_value(1.959964) == doctest::Approx(0.05).epsilon(1e-4));

    // Zero variance on both sides: certain rejection when means differ.
    CHECK(std::isinf(welch_t_statistic({5, 5}, {1, 1})));
    CHECK(welch_t_statistic({3, 3}, {3, 3}) == 0.0);
}

TEST_CASE("item_split picks the strongest significant condition") {
    RatingTable t = contrast_item();
    SplitCriterion crit;
    SplitResult res = item_split(t, crit);

    REQUIRE(res.item_map.split_count() == 1);
    const auto& choice = res.item_map.choice(0);
    REQUIRE(choice.has_value());
    CHECK(choice->dimension == 0);
    CHECK(choice->condition == 1);   // Weekend
    CHECK(res.item_map.total_count() == 3);   // original + two virtuals

    // The virtual items carry exactly the two rating groups.
    std::vector<double> holds, fails;
    for (const auto& e : res.matrix.entries)
        (e.item == choice->id_holds ? holds : fails).push_back(e.rating);
    CHECK(holds == std::vector<double>{5, 5, 4, 5});
    CHECK(fails == std::vector<double>{1, 2, 1, 2});

    SUBCASE("rating conservation") {
        CHECK((int)res.matrix.entries.size() == t.num_rows());
    }
    SUBCASE("users untouched by an item split") {
        CHECK(res.user_map.is_identity());
        CHECK(res.user_map.total_count() == t.num_users());
    }
}

TEST_CASE("item_split leaves uninformative items alone") {
    SUBCASE("identical ratings in all contexts") {
        std::vector<testsup::RowSpec> rows;
        for (int k = 0; k < 8; ++k)
            rows.push_back({"u" + std::to_string(k), "i0", 3.0,
                            {{"Time", k % 2 == 0 ? "Weekend" : "Weekday"}}});
        auto t = testsup::make_table({"Time"}, {{"Weekend", "Weekday"}}, rows);
        CHECK(item_split(t, {}).item_map.is_identity());
    }
    SUBCASE("minlength gate blocks 2-vs-1 partitions") {
        auto t = testsup::make_table(
            {"Time"}, {{"Weekend", "Weekday"}},
            {{"a", "i0", 5, {{"Time", "Weekend"}}},
             {"b", "i0", 5, {{"Time", "Weekend"}}},
             {"c", "i0", 1, {{"Time", "Weekday"}}}});
        SplitCriterion crit;
        crit.min_length = 2;
        CHECK(item_split(t, crit).item_map.is_identity());
    }
}

TEST_CASE("user_split mirrors item_split") {
    std::vector<testsup::RowSpec> rows;
    for (int k = 0; k < 3; ++k)
        rows.push_back({"u0", "h" + std::to_string(k), 5.0, {{"Location", "Home"}}});
    for (int k = 0; k < 3; ++k)
        rows.push_back({"u0", "w" + std::to_string(k), 1.0, {{"Location", "Work"}}});
    auto t = testsup::make_table({"Time", "Location"},
                                 {{"Weekend"}, {"Home", "Work"}}, rows);

    SplitResult res = user_split(t, {});
    REQUIRE(res.user_map.split_count() == 1);
    const auto& choice = res.user_map.choice(0);
    CHECK(choice->dimension == 1);
    CHECK(choice->condition == 1);   // Home
    CHECK(res.item_map.is_identity());

    SUBCASE("single rating never splits") {
        auto tiny = testsup::make_table({"Time"}, {{"Weekend"}},
                                        {{"u", "i", 4, {{"Time", "Weekend"}}}});
        CHECK(user_split(tiny, {}).user_map.is_identity());
    }
    SUBCASE("constant raters never split") {
        std::vector<testsup::RowSpec> flat;
        for (int k = 0; k < 10; ++k)
            flat.push_back({"u0", "i" + std::to_string(k), 4.0,
                            {{"Time", k % 2 ? "Weekend" : "Weekday"}}});
        auto ct = testsup::make_table({"Time"}, {{"Weekend", "Weekday"}}, flat);
        CHECK(user_split(ct, {}).user_map.is_identity());
    }
}

TEST_CASE("ui_split chains item then user splitting") {
    SUBCASE("item-only signal leaves the user map identity") {
        RatingTable t = contrast_item();
        SplitResult res = ui_split(t, {});
        CHECK(res.item_map.split_count() == 1);
        CHECK(res.user_map.is_identity());
    }
    SUBCASE("no signal at all is a plain strip") {
        auto t = testsup::make_table(
            {"Time"}, {{"Weekend", "Weekday"}},
            {{"a", "x", 3, {{"Time", "Weekend"}}}, {"b", "y", 3, {{"Time", "Weekday"}}}});
        SplitResult res = ui_split(t, {});
        CHECK(res.item_map.is_identity());
        CHECK(res.user_map.is_identity());
        REQUIRE(res.matrix.entries.size() == 2);
        CHECK(res.matrix.entries[0].rating == 3.0);
    }
    SUBCASE("planted two-way effects are both recovered") {
        // Items with a Time effect rated by one-shot users; users with a
        // Location effect spread over one-shot items.
        std::vector<testsup::RowSpec> rows;
        int uc = 0, ic = 0;
        for (int i = 0; i < 3; ++i) {
            std::string item = "I" + std::to_string(i);
            for (int n = 0; n < 20; ++n)
                rows.push_back({"f" + std::to_string(uc++), item, 4.5,
                                {{"Time", "Weekend"}}});
            for (int n = 0; n < 20; ++n)
                rows.push_back({"f" + std::to_string(uc++), item, 2.0,
                                {{"Time", "Weekday"}}});
        }
        for (int u = 0; u < 3; ++u) {
            std::string user = "U" + std::to_string(u);
            for (int n = 0; n < 20; ++n)
                rows.push_back({user, "x" + std::to_string(ic++), 4.8,
                                {{"Location", "Home"}}});
            for (int n = 0; n < 20; ++n)
                rows.push_back({user, "x" + std::to_string(ic++), 2.2,
                                {{"Location", "Work"}}});
        }
        auto t = testsup::make_table({"Time", "Location"},
                                     {{"Weekend", "Weekday"}, {"Home", "Work"}}, rows);
        SplitResult res = ui_split(t, {});

        int planted_items = 0, planted_users = 0;
        for (int i = 0; i < t.num_items(); ++i) {
            const auto& c = res.item_map.choice(i);
            if (!c) continue;
            ++planted_items;
            CHECK(t.item_id(i).substr(0, 1) == "I");
            CHECK(c->dimension == 0);
            CHECK(c->condition == 1);
        }
        for (int u = 0; u < t.num_users(); ++u) {
            const auto& c = res.user_map.choice(u);
            if (!c) continue;
            ++planted_users;
            CHECK(t.user_id(u).substr(0, 1) == "U");
            CHECK(c->dimension == 1);
            CHECK(c->condition == 1);
        }
        CHECK(planted_items == 3);
        CHECK(planted_users == 3);
        CHECK((int)res.matrix.entries.size() == t.num_rows());
    }
}

TEST_CASE("split maps route by the chosen condition") {
    RatingTable t = contrast_item();
    SplitResult res = item_split(t, {});
    const auto& choice = *res.item_map.choice(0);

    ContextSituation weekend = t.make_situation({{"Time", "Weekend"}});
    ContextSituation weekday = t.make_situation({{"Time", "Weekday"}});
    ContextSituation unknown = t.make_situation({});

    CHECK(res.item_map.route(0, weekend) == choice.id_holds);
    CHECK(res.item_map.route(0, weekday) == choice.id_fails);
    CHECK(res.item_map.route(0, unknown) == choice.id_fails);
    // Unsplit ids pass through untouched.
    CHECK(res.user_map.route(2, weekend) == 2);
}

TEST_CASE("split choice is deterministic and monotone in minlength") {
    auto planted = testsup::planted_item_split_table(33, 10, 25, 2.5, 4.5, 0.4);
    const RatingTable& t = planted.table;

    SplitCriterion crit;
    SplitResult a = item_split(t, crit);
    SplitResult b = item_split(t, crit);
    for (int i = 0; i < t.num_items(); ++i) {
        CHECK(a.item_map.choice(i).has_value() == b.item_map.choice(i).has_value());
        if (a.item_map.choice(i))
            CHECK(a.item_map.choice(i)->condition == b.item_map.choice(i)->condition);
    }

    int prev = t.num_items() + 1;
    for (int ml : {2, 8, 20, 30}) {
        SplitCriterion c2;
        c2.min_length = ml;
        int count = item_split(t, c2).item_map.split_count();
        CHECK(count <= prev);
        prev = count;
    }
}

TEST_CASE("item splitting recovers planted conditions") {
    auto planted = testsup::planted_item_split_table(7, 12, 25, 2.5, 4.5, 0.4);
    SplitResult res = item_split(planted.table, {});
    int recovered = 0;
    for (int i = 0; i < planted.table.num_items(); ++i) {
        const auto& c = res.item_map.choice(i);
        if (c && c->dimension == planted.planted[i].first &&
            c->condition == planted.planted[i].second)
            ++recovered;
    }
    CHECK(recovered == planted.table.num_items());
}

TEST_CASE("split pipeline fits and routes end to end") {
    auto planted = testsup::planted_item_split_table(5, 8, 22, 2.0, 4.6, 0.3);
    const RatingTable& t = planted.table;
    HyperParams hp;
    hp.num_iterations = 40;

    SUBCASE("contextual traditional names are rejected") {
        CHECK_THROWS(fit_split_pipeline(SplitVariant::Item, "camf_c", t, {}, hp));
    }

    SUBCASE("itemsplitting + biasedmf beats plain biasedmf") {
        Protocol proto;
        proto.k = 5;
        proto.seed = 1;
        HyperParams split_hp = hp;
        split_hp.split_traditional = "biasedmf";
        EvalReport with_split = evaluate("itemsplitting", t, proto, Task::Rating, split_hp);
        EvalReport plain = evaluate("biasedmf", t, proto, Task::Rating, hp);
        auto rmse_of = [](const EvalReport& r) {
            for (const auto& [k, v] : r.metrics)
                if (k == "RMSE") return v;
            return -1.0;
        };
        CHECK(rmse_of(with_split) < rmse_of(plain));
    }

    SUBCASE("pipeline predictions differ across the split condition") {
        auto model = fit_split_pipeline(SplitVariant::Item, "itemavg", t, {}, hp);
        // Find a split item and compare the two sides.
        SplitResult res = item_split(t, {});
        for (int i = 0; i < t.num_items(); ++i) {
            const auto& c = res.item_map.choice(i);
            if (!c) continue;
            ContextSituation holds;
            holds.active = {0, 0};
            holds.active[c->dimension] = c->condition;
            ContextSituation fails;
            fails.active = {0, 0};
            double hi = model->score(0, i, holds);
            double lo = model->score(0, i, fails);
            CHECK(hi > lo + 1.0);
            break;
        }
    }
}

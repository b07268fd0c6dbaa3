#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "rz/cfe.hpp"

namespace {

using Obj = std::array<double, 3>;

// Peels nondominated sets with a direct O(n^2) scan per layer.
std::vector<int> brute_force_ranks(const std::vector<Obj>& o) {
    const std::size_t n = o.size();
    std::vector<int> rank(n, -1);
    for (int layer = 0;; ++layer) {
        std::vector<std::size_t> current;
        for (std::size_t p = 0; p < n; ++p) {
            if (rank[p] >= 0) {
                continue;
            }
            bool dominated = false;
            for (std::size_t q = 0; q < n && !dominated; ++q) {
                if (q == p || rank[q] >= 0) {
                    continue;
                }
                bool no_worse = true;
                bool better = false;
                for (int k = 0; k < 3; ++k) {
                    no_worse = no_worse && o[q][k] <= o[p][k];
                    better = better || o[q][k] < o[p][k];
                }
                dominated = no_worse && better;
            }
            if (!dominated) {
                current.push_back(p);
            }
        }
        if (current.empty()) {
            return rank;
        }
        for (const auto p : current) {
            rank[p] = layer;
        }
    }
}

TEST(Dominance, Cases) {
    EXPECT_TRUE(rz::dominates({-1, 1, 0.2}, {0, 1, 0.2}));
    EXPECT_TRUE(rz::dominates({-1, 1, 0.1}, {-1, 1, 0.2}));
    EXPECT_FALSE(rz::dominates({-1, 1, 0.2}, {-1, 1, 0.2}));
    EXPECT_FALSE(rz::dominates({-1, 2, 0.0}, {0, 1, 0.0}));
}

TEST(NonDominatedSort, MatchesBruteForce) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> small(0, 3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Obj> o;
        for (int i = 0; i < 40; ++i) {
            // coarse values so that ties and duplicates occur
            o.push_back({-static_cast<double>(small(rng) % 2), static_cast<double>(small(rng)), small(rng) / 4.0});
        }
        const auto fronts = rz::non_dominated_sort(o);
        const auto ranks = brute_force_ranks(o);
        std::vector<int> seen(o.size(), 0);
        for (std::size_t f = 0; f < fronts.size(); ++f) {
            for (const auto p : fronts[f]) {
                EXPECT_EQ(ranks[p], static_cast<int>(f));
                ++seen[p];
            }
        }
        EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), static_cast<long>(o.size()));
    }
}

TEST(Crowding, HandComputed) {
    const std::vector<Obj> o = {{0, 1, 0.0}, {0, 2, 0.5}, {0, 3, 0.6}, {0, 4, 1.0}};
    const std::vector<std::size_t> front = {0, 1, 2, 3};
    const auto d = rz::crowding_distance(o, front);
    EXPECT_TRUE(std::isinf(d[0]));
    EXPECT_TRUE(std::isinf(d[3]));
    // g1 is constant and contributes nothing; g2 span 3, g3 span 1
    EXPECT_NEAR(d[1], (3.0 - 1.0) / 3.0 + (0.6 - 0.0) / 1.0, 1e-15);
    EXPECT_NEAR(d[2], (4.0 - 2.0) / 3.0 + (1.0 - 0.5) / 1.0, 1e-15);
    const std::vector<std::size_t> pair = {1, 2};
    for (const double x : rz::crowding_distance(o, pair)) {
        EXPECT_TRUE(std::isinf(x));
    }
}

TEST(Select, LexicographicThenLowestChangedSet) {
    std::vector<rz::Candidate> front(4);
    front[0] = {{1, 1, 0}, {0, 0, 0}, {-1, 2, 0.1}};
    front[1] = {{0, 1, 0}, {0, 0, 0}, {-1, 1, 0.4}};
    front[2] = {{1, 0, 0}, {0, 0, 0}, {-1, 1, 0.4}};
    front[3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0.0}};
    const auto best = rz::select(front);
    EXPECT_EQ(best.changed(), std::vector<int>{0});
    EXPECT_THROW(rz::select(std::span<const rz::Candidate>{}), rz::PreconditionError);
}

class ToyProblem : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        world_ = new rz::testing::ToyWorld();
        rz::testing::build_toy_world(*world_, 21);
    }
    static void TearDownTestSuite() {
        delete world_;
        world_ = nullptr;
    }
    static rz::testing::ToyWorld* world_;
};

rz::testing::ToyWorld* ToyProblem::world_ = nullptr;

TEST_F(ToyProblem, EpsilonContract) {
    const auto models = world_->models();
    EXPECT_THROW(rz::make_problem(models, world_->field, {7, 7}, 1.0 / 3.0), rz::PreconditionError);
    EXPECT_THROW(rz::make_problem(models, world_->field, {7, 7}, 1.0), rz::PreconditionError);
    EXPECT_NO_THROW(rz::make_problem(models, world_->field, {7, 7}, 0.34));
}

TEST_F(ToyProblem, WindowCellsAndIdentity) {
    const auto p = rz::make_problem(world_->models(), world_->field, {7, 7}, 0.8);
    ASSERT_EQ(p.genes(), 1u);
    EXPECT_EQ(p.passive, std::vector<int>{1});
    // origins 3..7 in both directions cover rows and cols 3..11
    EXPECT_EQ(p.cell_values[0].size(), 81u);
    EXPECT_EQ(p.window.patches.size(), 25u);
    EXPECT_EQ(p.site_values[0], world_->field.at(7, 7, 1));
    auto id = rz::identity_candidate(p);
    rz::evaluate(p, id);
    EXPECT_EQ(id.objectives, (Obj{0.0, 0.0, 0.0}));
    EXPECT_EQ(rz::eval_g1(p, p.window), 0);
}

TEST_F(ToyProblem, G3MatchesCellLoop) {
    const auto p = rz::make_problem(world_->models(), world_->field, {7, 7}, 0.8);
    const auto& f = world_->field;
    auto c = rz::identity_candidate(p);
    c.mask[0] = 1;
    c.values[0] = 0.37;
    const auto range = f.feature_ranges()[1];
    double moved = 0.0;
    for (int r = 3; r <= 11; ++r) {
        for (int col = 3; col <= 11; ++col) {
            moved += std::abs(f.at(r, col, 1) - 0.37);
        }
    }
    EXPECT_NEAR(rz::eval_g3(p, c), moved / 81.0 / (range.max - range.min) / 2.0, 1e-14);
    EXPECT_EQ(rz::eval_g2(c), 1);
}

TEST_F(ToyProblem, ApplyCandidateSetsOnlyPassiveChannel) {
    const auto p = rz::make_problem(world_->models(), world_->field, {1, 12}, 0.8);
    auto c = rz::identity_candidate(p);
    c.mask[0] = 1;
    c.values[0] = p.bounds[0].min;
    const auto w = rz::apply_candidate(p, c);
    ASSERT_EQ(w.patches.size(), p.window.patches.size());
    for (std::size_t k = 0; k < w.patches.size(); ++k) {
        for (int cell = 0; cell < 25; ++cell) {
            EXPECT_EQ(w.patches[k].cube[static_cast<std::size_t>(2 * cell)],
                      p.window.patches[k].cube[static_cast<std::size_t>(2 * cell)]);
            EXPECT_EQ(w.patches[k].cube[static_cast<std::size_t>(2 * cell + 1)], p.bounds[0].min);
        }
    }
    c.values[0] = p.bounds[0].max + 1e-9;
    EXPECT_THROW(rz::apply_candidate(p, c), rz::PreconditionError);
    c.mask[0] = 0;
    EXPECT_NO_THROW(rz::apply_candidate(p, c));
}

TEST_F(ToyProblem, UniformValueGivesClosedFormCurve) {
    const auto p = rz::make_problem(world_->models(), world_->field, {6, 6}, 0.8);
    auto c = rz::identity_candidate(p);
    c.mask[0] = 1;
    c.values[0] = 0.5;
    const auto e = rz::evaluate_window(p, rz::apply_candidate(p, c));
    const double plateau = 10.0 + 50.0 * 0.5;
    const double low = plateau / (1.0 + std::exp(0.06 * 60.0));
    for (int t = 0; t < 151; ++t) {
        const double expected = plateau / (1.0 + std::exp(-0.06 * (t - 60.0))) - low;
        EXPECT_NEAR(e.curve.values[static_cast<std::size_t>(t)], expected, 1e-10);
    }
}

TEST_F(ToyProblem, ExplainFindsOptimumAndIsDeterministic) {
    rz::CfeSettings s;
    s.population = 30;
    s.generations = 40;
    s.seed = 9;
    const auto p = rz::make_problem(world_->models(), world_->field, {5, 8}, 0.8);
    const auto r = rz::explain_site(p, s);
    const auto best = rz::testing::exhaustive_optimum(p, 1000);
    EXPECT_EQ(r.objectives[0], best.g1);
    EXPECT_EQ(r.objectives[1], best.g2);
    EXPECT_LE(r.objectives[2], best.g3 + 1.0 / (999.0 * 2.0));
    if (r.success) {
        EXPECT_NE(r.new_zone, r.old_zone);
        EXPECT_GT(r.new_membership, 0.8);
        EXPECT_EQ(r.alpha, std::vector<int>{1});
    }
    const auto again = rz::explain_site(p, s);
    EXPECT_EQ(again.candidate.values, r.candidate.values);
    EXPECT_EQ(again.objectives, r.objectives);
}

TEST_F(ToyProblem, ExplainSitesIndependentOfThreadCount) {
    rz::CfeSettings s;
    s.population = 10;
    s.generations = 5;
    const std::vector<rz::Site> sites = {{2, 2}, {7, 3}, {11, 11}};
    setenv("RZ_THREADS", "1", 1);
    const auto one = rz::explain_sites(world_->models(), world_->field, sites, s);
    setenv("RZ_THREADS", "3", 1);
    const auto three = rz::explain_sites(world_->models(), world_->field, sites, s);
    unsetenv("RZ_THREADS");
    for (std::size_t k = 0; k < sites.size(); ++k) {
        EXPECT_EQ(one[k].candidate.values, three[k].candidate.values);
        EXPECT_EQ(one[k].objectives, three[k].objectives);
    }
}

TEST_F(ToyProblem, FrontIsNondominatedAndAlphaMatchesWindows) {
    rz::CfeSettings s;
    s.population = 20;
    s.generations = 15;
    for (const rz::Site site : {rz::Site{4, 4}, rz::Site{9, 2}}) {
        const auto p = rz::make_problem(world_->models(), world_->field, site, 0.8);
        const auto front = rz::nsga2(p, s, 17);
        for (const auto& a : front) {
            for (const auto& b : front) {
                EXPECT_FALSE(rz::dominates(b.objectives, a.objectives));
            }
            // alpha recomputed from the raw windows
            const auto w = rz::apply_candidate(p, a);
            for (std::size_t g = 0; g < p.genes(); ++g) {
                bool differs = false;
                const int ch = p.passive[g];
                for (std::size_t k = 0; k < w.patches.size(); ++k) {
                    for (int cell = 0; cell < 25; ++cell) {
                        const auto idx = static_cast<std::size_t>(cell * p.n_features + ch);
                        differs = differs || w.patches[k].cube[idx] != p.window.patches[k].cube[idx];
                    }
                }
                // a set bit whose value equals every cell would leave the window unchanged; the
                // toy field draws continuous values so that cannot happen here
                EXPECT_EQ(differs, a.mask[g] != 0);
            }
        }
    }
}

TEST_F(ToyProblem, LargerBudgetNeverWorsensSelection) {
    for (const rz::Site site : {rz::Site{3, 3}, rz::Site{6, 10}, rz::Site{12, 5}}) {
        const auto p = rz::make_problem(world_->models(), world_->field, site, 0.8);
        Obj previous{1e300, 1e300, 1e300};
        for (const int gens : {10, 50, 100}) {
            rz::CfeSettings s;
            s.population = 20;
            s.generations = gens;
            const auto chosen = rz::select(rz::nsga2(p, s, 5));
            EXPECT_LE(chosen.objectives, previous) << gens;
            previous = chosen.objectives;
        }
    }
}

TEST_F(ToyProblem, Nsga2RejectsBadSettings) {
    const auto p = rz::make_problem(world_->models(), world_->field, {7, 7}, 0.8);
    rz::CfeSettings s;
    s.population = 7;
    EXPECT_THROW(rz::nsga2(p, s, 1), rz::PreconditionError);
    s.population = 8;
    s.mask_density = 1.5;
    EXPECT_THROW(rz::nsga2(p, s, 1), rz::PreconditionError);
}

TEST(ChooseSites, CapsPerZoneDeterministically) {
    rz::ZoneModel z;
    z.c = 2;
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 5; ++c) {
            z.sites.push_back({r, c});
            z.assignments.push_back(r < 2 ? 0 : 1);  // 10 and 20 sites
        }
    }
    const auto all = rz::choose_sites(z, 0, 1);
    EXPECT_EQ(all.size(), 30u);
    const auto some = rz::choose_sites(z, 4, 3);
    ASSERT_EQ(some.size(), 8u);
    EXPECT_TRUE(std::is_sorted(some.begin(), some.end()));
    EXPECT_EQ(std::count_if(some.begin(), some.end(), [](rz::Site s) { return s.row < 2; }), 4);
    EXPECT_EQ(rz::choose_sites(z, 4, 3), some);
    EXPECT_EQ(rz::choose_sites(z, 15, 3).size(), 25u);
}

rz::CfeResult hand_result(int zone, bool success, std::vector<int> alpha) {
    rz::CfeResult r;
    r.old_zone = zone;
    r.success = success;
    r.alpha = std::move(alpha);
    return r;
}

TEST(GlobalRelevance, HandCountedResults) {
    const std::vector<std::string> names = {"N", "S", "A", "E"};
    const std::vector<rz::CfeResult> results = {
        hand_result(0, true, {1}),     hand_result(0, true, {1, 2}), hand_result(0, true, {2, 1}),
        hand_result(0, false, {}),     hand_result(1, false, {}),    hand_result(1, false, {}),
        hand_result(0, true, {1, 3}),
    };
    const auto report = rz::global_relevance(results, 3, names);
    ASSERT_EQ(report.zones.size(), 1u);
    const auto& z0 = report.zones[0];
    EXPECT_EQ(z0.n_sites, 5);
    EXPECT_EQ(z0.n_success, 4);
    EXPECT_EQ(z0.channels, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(z0.relevance, (std::vector<double>{1.0, 0.5, 0.25}));
    ASSERT_EQ(z0.top_combinations.size(), 3u);
    EXPECT_EQ(z0.top_combinations[0].features, (std::vector<int>{1, 2}));
    EXPECT_DOUBLE_EQ(z0.top_combinations[0].percent, 50.0);
    EXPECT_DOUBLE_EQ(z0.top_combinations[1].percent, 25.0);
    EXPECT_EQ(report.excluded_zones, std::vector<int>{1});
    EXPECT_DOUBLE_EQ(report.success_rate[0], 0.8);
    EXPECT_DOUBLE_EQ(report.success_rate[1], 0.0);
    EXPECT_TRUE(std::isnan(report.success_rate[2]));
    EXPECT_EQ(rz::combination_label({1, 2}, names), "[S, A]");

    const auto path = std::filesystem::temp_directory_path() / "rz_unit_table.csv";
    rz::save_relevance_table_csv(path, report);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "rank,zone_0_combination,zone_0_percent");
    std::getline(in, line);
    EXPECT_EQ(line, "1,\"[S, A]\",50.0");
}

TEST(ResultsJsonl, RoundTrip) {
    rz::CfeResult r;
    r.site = {3, 4};
    r.success = true;
    r.alpha = {2};
    r.objectives = {-1.0, 1.0, 0.125};
    r.old_zone = 1;
    r.new_zone = 0;
    r.new_membership = 0.91;
    r.candidate.mask = {0, 1};
    r.candidate.values = {0.0, 0.75};
    r.counterfactual_curve.values = {0.0, 1.5, 2.25};
    const auto path = std::filesystem::temp_directory_path() / "rz_unit_cfe.jsonl";
    const std::vector<rz::CfeResult> rs = {r};
    rz::save_results_jsonl(path, rs, {"N", "S", "A"});
    const auto back = rz::load_results_jsonl(path, 3);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].site, r.site);
    EXPECT_EQ(back[0].alpha, r.alpha);
    EXPECT_EQ(back[0].objectives, r.objectives);
    EXPECT_EQ(back[0].candidate.mask, r.candidate.mask);
    EXPECT_EQ(back[0].candidate.values[1], 0.75);
    EXPECT_EQ(back[0].new_membership, 0.91);
    EXPECT_EQ(back[0].counterfactual_curve.values, r.counterfactual_curve.values);
    std::ofstream(path) << "{\"site\": [1]}\n";
    EXPECT_THROW(rz::load_results_jsonl(path, 3), rz::ParseError);
}

}  // namespace

#include "rz/cfe.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rz/log.hpp"

namespace rz {

// -- problem -----------------------------------------------------------------------

CfeProblem make_problem(const CfeModels& models, const FieldRaster& field, Site site, double epsilon) {
    require(models.regressor != nullptr && models.fpca != nullptr && models.zones != nullptr,
            "counterfactual search needs a regressor, an fPCA model and a zone model");
    const int zones = models.zones->c;
    require(epsilon > 1.0 / zones && epsilon < 1.0,
            fmt::format("epsilon must lie in (1/{}, 1), got {}", zones, epsilon));
    models.grid.validate();

    CfeProblem p;
    p.site = site;
    p.window = window9(field, site);
    if (p.window.patches.empty()) {
        throw PreconditionError(fmt::format("site ({}, {}) has no valid patch", site.row, site.col));
    }
    p.n_features = field.n_features();
    p.epsilon = epsilon;
    p.models = models;
    for (int s = 1; s < p.n_features; ++s) {
        p.passive.push_back(s);
        p.bounds.push_back(field.feature_ranges()[static_cast<std::size_t>(s)]);
        p.site_values.push_back(field.at(site.row, site.col, s));
    }

    // Distinct masked-in cells covered by the window.
    std::vector<Site> cells;
    for (const Patch& patch : p.window.patches) {
        for (int i = 0; i < kPatchSize; ++i) {
            for (int j = 0; j < kPatchSize; ++j) {
                const Site c{patch.origin.row + i, patch.origin.col + j};
                if (field.valid(c)) {
                    cells.push_back(c);
                }
            }
        }
    }
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    p.cell_values.resize(p.passive.size());
    for (std::size_t g = 0; g < p.passive.size(); ++g) {
        for (const Site c : cells) {
            p.cell_values[g].push_back(field.at(c.row, c.col, p.passive[g]));
        }
    }

    const WindowEvaluation original = evaluate_window(p, p.window);
    p.original_curve = original.curve;
    p.original_zone = original.zone;
    p.original_membership = original.membership;
    return p;
}

std::vector<int> Candidate::changed() const {
    std::vector<int> out;
    for (std::size_t g = 0; g < mask.size(); ++g) {
        if (mask[g] != 0) {
            out.push_back(static_cast<int>(g));
        }
    }
    return out;
}

Candidate identity_candidate(const CfeProblem& problem) {
    Candidate c;
    c.mask.assign(problem.genes(), 0);
    c.values = problem.site_values;
    return c;
}

SiteWindow apply_candidate(const CfeProblem& problem, const Candidate& candidate) {
    require(candidate.mask.size() == problem.genes() && candidate.values.size() == problem.genes(),
            "candidate does not match the problem's passive features");
    SiteWindow out = problem.window;
    for (std::size_t g = 0; g < problem.genes(); ++g) {
        if (candidate.mask[g] == 0) {
            continue;
        }
        const double v = candidate.values[g];
        const auto& b = problem.bounds[g];
        if (!(v >= b.min && v <= b.max)) {
            throw PreconditionError(fmt::format("value {} of feature {} outside [{}, {}]", v, problem.passive[g],
                                                b.min, b.max));
        }
        const int s = problem.passive[g];
        for (Patch& patch : out.patches) {
            for (int k = 0; k < kPatchCells; ++k) {
                patch.cube[static_cast<std::size_t>(k * patch.n_features + s)] = v;
            }
        }
    }
    return out;
}

WindowEvaluation evaluate_window(const CfeProblem& problem, const SiteWindow& window) {
    const CfeModels& m = problem.models;
    WindowEvaluation e;
    e.curve = align(window_curve(*m.regressor, window, m.grid));
    const auto scores = transform(*m.fpca, std::span<const double>(e.curve.values));
    const ZoneMembership zm = membership(*m.zones, scores);
    e.zone = zm.zone;
    e.membership = zm.memberships[static_cast<std::size_t>(zm.zone)];
    // Zone and membership of the unmodified window define the original assignment,
    // which make_problem records after this call.
    e.g1 = (e.zone != problem.original_zone && e.membership > problem.epsilon) ? -1 : 0;
    return e;
}

int eval_g1(const CfeProblem& problem, const SiteWindow& window) { return evaluate_window(problem, window).g1; }

int eval_g2(const Candidate& candidate) {
    return static_cast<int>(std::count_if(candidate.mask.begin(), candidate.mask.end(),
                                          [](std::uint8_t b) { return b != 0; }));
}

double eval_g3(const CfeProblem& problem, const Candidate& candidate) {
    double total = 0.0;
    for (std::size_t g = 0; g < problem.genes(); ++g) {
        if (candidate.mask[g] == 0) {
            continue;
        }
        const double range = problem.bounds[g].span();
        if (!(range > 0.0)) {
            log()->warn("stage=explain event=zero_range_feature channel={}", problem.passive[g]);
            continue;
        }
        const auto& cells = problem.cell_values[g];
        double moved = 0.0;
        for (const double x : cells) {
            moved += std::abs(x - candidate.values[g]);
        }
        total += moved / static_cast<double>(cells.size()) / range;
    }
    return total / static_cast<double>(problem.n_features);
}

void evaluate(const CfeProblem& problem, Candidate& candidate) {
    const int changed = eval_g2(candidate);
    const int g1 = changed == 0 ? 0 : eval_g1(problem, apply_candidate(problem, candidate));
    candidate.objectives = {static_cast<double>(g1), static_cast<double>(changed), eval_g3(problem, candidate)};
}

// -- NSGA-II -------------------------------------------------------------------------

bool dominates(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    bool strictly = false;
    for (std::size_t k = 0; k < 3; ++k) {
        if (a[k] > b[k]) {
            return false;
        }
        strictly = strictly || a[k] < b[k];
    }
    return strictly;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const std::array<double, 3>> objectives) {
    const std::size_t n = objectives.size();
    std::vector<std::vector<std::size_t>> dominated_by_me(n);
    std::vector<int> domination_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) {
                continue;
            }
            if (dominates(objectives[p], objectives[q])) {
                dominated_by_me[p].push_back(q);
            } else if (dominates(objectives[q], objectives[p])) {
                ++domination_count[p];
            }
        }
        if (domination_count[p] == 0) {
            fronts[0].push_back(p);
        }
    }
    for (std::size_t f = 0; !fronts[f].empty(); ++f) {
        std::vector<std::size_t> next;
        for (const std::size_t p : fronts[f]) {
            for (const std::size_t q : dominated_by_me[p]) {
                if (--domination_count[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<double> crowding_distance(std::span<const std::array<double, 3>> objectives,
                                      std::span<const std::size_t> front) {
    const std::size_t size = front.size();
    std::vector<double> distance(size, 0.0);
    if (size <= 2) {
        std::fill(distance.begin(), distance.end(), std::numeric_limits<double>::infinity());
        return distance;
    }
    std::vector<std::size_t> order(size);
    for (std::size_t k = 0; k < 3; ++k) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return objectives[front[a]][k] < objectives[front[b]][k];
        });
        const double lo = objectives[front[order.front()]][k];
        const double hi = objectives[front[order.back()]][k];
        distance[order.front()] = std::numeric_limits<double>::infinity();
        distance[order.back()] = std::numeric_limits<double>::infinity();
        if (!(hi > lo)) {
            continue;
        }
        for (std::size_t i = 1; i + 1 < size; ++i) {
            distance[order[i]] +=
                (objectives[front[order[i + 1]]][k] - objectives[front[order[i - 1]]][k]) / (hi - lo);
        }
    }
    return distance;
}

namespace {

/// Byte key of a genome with unused values dropped.
std::string genome_key(const Candidate& c) {
    std::string key;
    key.reserve(c.mask.size() * 9);
    for (std::size_t g = 0; g < c.mask.size(); ++g) {
        key.push_back(c.mask[g] != 0 ? '1' : '0');
        if (c.mask[g] != 0) {
            char bytes[sizeof(double)];
            std::memcpy(bytes, &c.values[g], sizeof(double));
            key.append(bytes, sizeof(double));
        }
    }
    return key;
}

class Nsga2Run {
public:
    Nsga2Run(const CfeProblem& problem, const CfeSettings& settings, std::uint64_t seed)
        : problem_(problem), settings_(settings), rng_(seed) {
        const auto genes = static_cast<double>(problem.genes());
        mutation_rate_ = genes > 0 ? std::min(1.0 / genes, 0.5) : 0.0;
    }

    std::vector<Candidate> run() {
        const auto size = static_cast<std::size_t>(settings_.population);
        population_ = initial_population(size);
        rank_and_crowd();
        for (int gen = 0; gen < settings_.generations; ++gen) {
            std::vector<Candidate> combined = population_;
            combined.reserve(2 * size);
            while (combined.size() < 2 * size) {
                Candidate a = population_[tournament()];
                Candidate b = population_[tournament()];
                crossover(a, b);
                mutate(a);
                mutate(b);
                score(a);
                score(b);
                combined.push_back(std::move(a));
                if (combined.size() < 2 * size) {
                    combined.push_back(std::move(b));
                }
            }
            population_ = survivors(std::move(combined), size);
            rank_and_crowd();
        }
        return first_front();
    }

private:
    std::vector<Candidate> initial_population(std::size_t size) {
        std::vector<Candidate> pop;
        pop.reserve(size);
        Candidate id = identity_candidate(problem_);
        score(id);
        pop.push_back(std::move(id));
        std::bernoulli_distribution on(settings_.mask_density);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        while (pop.size() < size) {
            Candidate c = identity_candidate(problem_);
            for (std::size_t g = 0; g < problem_.genes(); ++g) {
                c.mask[g] = on(rng_) ? 1 : 0;
                const auto& b = problem_.bounds[g];
                c.values[g] = std::clamp(b.min + unit(rng_) * b.span(), b.min, b.max);
            }
            score(c);
            pop.push_back(std::move(c));
        }
        return pop;
    }

    void score(Candidate& c) {
        const std::string key = genome_key(c);
        if (const auto it = cache_.find(key); it != cache_.end()) {
            c.objectives = it->second;
            return;
        }
        evaluate(problem_, c);
        cache_.emplace(key, c.objectives);
    }

    std::size_t tournament() {
        std::uniform_int_distribution<std::size_t> pick(0, population_.size() - 1);
        const std::size_t a = pick(rng_);
        const std::size_t b = pick(rng_);
        if (rank_[a] != rank_[b]) {
            return rank_[a] < rank_[b] ? a : b;
        }
        if (crowd_[a] != crowd_[b]) {
            return crowd_[a] > crowd_[b] ? a : b;
        }
        return std::min(a, b);
    }

    void crossover(Candidate& a, Candidate& b) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (unit(rng_) >= settings_.crossover_probability) {
            return;
        }
        for (std::size_t g = 0; g < problem_.genes(); ++g) {
            if (unit(rng_) < 0.5) {
                std::swap(a.mask[g], b.mask[g]);
            }
            const double u = unit(rng_);
            const double va = a.values[g];
            const double vb = b.values[g];
            const auto& bounds = problem_.bounds[g];
            a.values[g] = std::clamp(u * va + (1.0 - u) * vb, bounds.min, bounds.max);
            b.values[g] = std::clamp((1.0 - u) * va + u * vb, bounds.min, bounds.max);
        }
    }

    void mutate(Candidate& c) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t g = 0; g < problem_.genes(); ++g) {
            if (unit(rng_) < mutation_rate_) {
                c.mask[g] = c.mask[g] != 0 ? 0 : 1;
            }
            if (unit(rng_) < mutation_rate_) {
                const auto& b = problem_.bounds[g];
                c.values[g] = std::clamp(c.values[g] + settings_.mutation_sd * b.span() * gauss(rng_), b.min, b.max);
            }
        }
    }

    std::vector<Candidate> survivors(std::vector<Candidate> combined, std::size_t size) {
        std::vector<std::array<double, 3>> objs;
        objs.reserve(combined.size());
        for (const auto& c : combined) {
            objs.push_back(c.objectives);
        }
        const auto fronts = non_dominated_sort(objs);
        std::vector<Candidate> next;
        next.reserve(size);
        for (const auto& front : fronts) {
            if (next.size() + front.size() <= size) {
                for (const std::size_t i : front) {
                    next.push_back(std::move(combined[i]));
                }
                if (next.size() == size) {
                    break;
                }
                continue;
            }
            const auto dist = crowding_distance(objs, front);
            std::vector<std::size_t> order(front.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
            for (std::size_t k = 0; next.size() < size; ++k) {
                next.push_back(std::move(combined[front[order[k]]]));
            }
            break;
        }
        return next;
    }

    void rank_and_crowd() {
        std::vector<std::array<double, 3>> objs;
        objs.reserve(population_.size());
        for (const auto& c : population_) {
            objs.push_back(c.objectives);
        }
        const auto fronts = non_dominated_sort(objs);
        rank_.assign(population_.size(), 0);
        crowd_.assign(population_.size(), 0.0);
        for (std::size_t f = 0; f < fronts.size(); ++f) {
            const auto dist = crowding_distance(objs, fronts[f]);
            for (std::size_t k = 0; k < fronts[f].size(); ++k) {
                rank_[fronts[f][k]] = f;
                crowd_[fronts[f][k]] = dist[k];
            }
        }
    }

    std::vector<Candidate> first_front() const {
        std::vector<Candidate> out;
        std::vector<std::string> seen;
        for (std::size_t i = 0; i < population_.size(); ++i) {
            if (rank_[i] != 0) {
                continue;
            }
            std::string key = genome_key(population_[i]);
            if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
                continue;
            }
            seen.push_back(std::move(key));
            out.push_back(population_[i]);
        }
        return out;
    }

    const CfeProblem& problem_;
    const CfeSettings& settings_;
    std::mt19937_64 rng_;
    double mutation_rate_ = 0.0;
    std::vector<Candidate> population_;
    std::vector<std::size_t> rank_;
    std::vector<double> crowd_;
    std::unordered_map<std::string, std::array<double, 3>> cache_;
};

}  // namespace

std::vector<Candidate> nsga2(const CfeProblem& problem, const CfeSettings& settings, std::uint64_t seed) {
    require(settings.population >= 4 && settings.population % 2 == 0, "population size must be even and at least 4");
    require(settings.generations >= 0, "generation count must be nonnegative");
    require(settings.mask_density >= 0.0 && settings.mask_density <= 1.0, "mask density must lie in [0, 1]");
    require(settings.mutation_sd >= 0.0, "mutation sd must be nonnegative");
    return Nsga2Run(problem, settings, seed).run();
}

Candidate select(std::span<const Candidate> front) {
    require(!front.empty(), "cannot select from an empty front");
    const Candidate* best = &front.front();
    for (const Candidate& c : front.subspan(1)) {
        if (c.objectives != best->objectives) {
            if (c.objectives < best->objectives) {
                best = &c;
            }
            continue;
        }
        if (c.changed() < best->changed()) {
            best = &c;
        }
    }
    return *best;
}

CfeResult explain_site(const CfeProblem& problem, const CfeSettings& settings) {
    const auto front = nsga2(problem, settings, site_seed(settings.seed, problem.site));
    const Candidate chosen = select(front);
    CfeResult r;
    r.site = problem.site;
    r.candidate = chosen;
    r.objectives = chosen.objectives;
    r.old_zone = problem.original_zone;
    for (const int g : chosen.changed()) {
        r.alpha.push_back(problem.passive[static_cast<std::size_t>(g)]);
    }
    const WindowEvaluation e = evaluate_window(problem, apply_candidate(problem, chosen));
    r.new_zone = e.zone;
    r.new_membership = e.membership;
    r.counterfactual_curve = e.curve;
    r.success = chosen.objectives[0] == -1.0;
    return r;
}

std::vector<Site> choose_sites(const ZoneModel& zones, int max_sites_per_zone, std::uint64_t seed) {
    require(zones.sites.size() == zones.assignments.size(), "zone model carries no site assignments");
    if (max_sites_per_zone <= 0) {
        std::vector<Site> all = zones.sites;
        std::sort(all.begin(), all.end());
        return all;
    }
    std::vector<Site> out;
    for (int z = 0; z < zones.c; ++z) {
        std::vector<Site> members;
        for (std::size_t i = 0; i < zones.sites.size(); ++i) {
            if (zones.assignments[i] == z) {
                members.push_back(zones.sites[i]);
            }
        }
        std::sort(members.begin(), members.end());
        if (static_cast<int>(members.size()) > max_sites_per_zone) {
            std::mt19937_64 rng(mix_seed(seed ^ static_cast<std::uint64_t>(z)));
            std::shuffle(members.begin(), members.end(), rng);
            members.resize(static_cast<std::size_t>(max_sites_per_zone));
        }
        out.insert(out.end(), members.begin(), members.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<CfeResult> explain_sites(const CfeModels& models, const FieldRaster& field, std::span<const Site> sites,
                                     const CfeSettings& settings) {
    std::vector<CfeResult> results(sites.size());
    parallel_for(sites.size(), [&](std::size_t k) {
        const CfeProblem problem = make_problem(models, field, sites[k], settings.epsilon);
        results[k] = explain_site(problem, settings);
    });
    const auto successes = std::count_if(results.begin(), results.end(), [](const CfeResult& r) { return r.success; });
    log()->info("stage=explain event=done sites={} successes={}", results.size(), successes);
    return results;
}

// -- relevance ----------------------------------------------------------------------

RelevanceReport global_relevance(std::span<const CfeResult> results, int zone_count,
                                 const std::vector<std::string>& feature_names) {
    require(zone_count >= 1, "zone count must be positive");
    RelevanceReport report;
    report.feature_names = feature_names;
    report.success_rate.assign(static_cast<std::size_t>(zone_count), std::numeric_limits<double>::quiet_NaN());
    const int n = static_cast<int>(feature_names.size());

    for (int z = 0; z < zone_count; ++z) {
        int sites = 0;
        int successes = 0;
        std::vector<int> hits(static_cast<std::size_t>(n), 0);
        std::map<std::vector<int>, int> combos;
        for (const CfeResult& r : results) {
            require(r.old_zone >= 0 && r.old_zone < zone_count, "result zone outside the zone count");
            if (r.old_zone != z) {
                continue;
            }
            ++sites;
            if (!r.success) {
                continue;
            }
            ++successes;
            std::vector<int> alpha = r.alpha;
            std::sort(alpha.begin(), alpha.end());
            for (const int s : alpha) {
                require(s >= 1 && s < n, "alpha holds a channel outside the passive features");
                ++hits[static_cast<std::size_t>(s)];
            }
            ++combos[alpha];
        }
        if (sites == 0) {
            continue;
        }
        report.success_rate[static_cast<std::size_t>(z)] = static_cast<double>(successes) / sites;
        if (successes == 0) {
            log()->warn("stage=report event=zone_without_success zone={} sites={}", z, sites);
            report.excluded_zones.push_back(z);
            continue;
        }
        ZoneRelevance zr;
        zr.zone = z;
        zr.n_sites = sites;
        zr.n_success = successes;
        zr.success_rate = static_cast<double>(successes) / sites;
        for (int s = 1; s < n; ++s) {
            zr.channels.push_back(s);
            zr.relevance.push_back(static_cast<double>(hits[static_cast<std::size_t>(s)]) / successes);
        }
        std::vector<std::pair<std::vector<int>, int>> ranked(combos.begin(), combos.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (std::size_t k = 0; k < ranked.size() && k < 5; ++k) {
            zr.top_combinations.push_back({ranked[k].first, 100.0 * ranked[k].second / successes});
        }
        report.zones.push_back(std::move(zr));
    }
    return report;
}

std::string combination_label(const std::vector<int>& features, const std::vector<std::string>& names) {
    std::string out = "[";
    for (std::size_t k = 0; k < features.size(); ++k) {
        if (k > 0) {
            out += ", ";
        }
        const int s = features[k];
        out += s >= 0 && s < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(s)] : std::to_string(s);
    }
    return out + "]";
}

void save_results_jsonl(const std::filesystem::path& path, std::span<const CfeResult> results,
                        const std::vector<std::string>& feature_names) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    for (const CfeResult& r : results) {
        nlohmann::json j;
        j["site"] = {r.site.row, r.site.col};
        j["success"] = r.success;
        j["alpha"] = nlohmann::json::array();
        for (const int s : r.alpha) {
            j["alpha"].push_back(feature_names.at(static_cast<std::size_t>(s)));
        }
        j["alpha_index"] = r.alpha;
        j["objectives"] = {r.objectives[0], r.objectives[1], r.objectives[2]};
        j["old_zone"] = r.old_zone;
        j["new_zone"] = r.new_zone;
        j["new_membership"] = r.new_membership;
        j["changes"] = nlohmann::json::array();
        for (const int g : r.candidate.changed()) {
            const int channel = g + 1;
            j["changes"].push_back({{"channel", channel},
                                    {"name", feature_names.at(static_cast<std::size_t>(channel))},
                                    {"value", r.candidate.values[static_cast<std::size_t>(g)]}});
        }
        j["counterfactual_curve"] = r.counterfactual_curve.values;
        out << j.dump() << '\n';
    }
}

std::vector<CfeResult> load_results_jsonl(const std::filesystem::path& path, int n_features) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<CfeResult> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            CfeResult r;
            r.site = {j.at("site").at(0).get<int>(), j.at("site").at(1).get<int>()};
            r.success = j.at("success").get<bool>();
            r.alpha = j.at("alpha_index").get<std::vector<int>>();
            const auto objs = j.at("objectives").get<std::vector<double>>();
            r.objectives = {objs.at(0), objs.at(1), objs.at(2)};
            r.old_zone = j.at("old_zone").get<int>();
            r.new_zone = j.at("new_zone").get<int>();
            r.new_membership = j.at("new_membership").get<double>();
            r.candidate.mask.assign(static_cast<std::size_t>(n_features - 1), 0);
            r.candidate.values.assign(static_cast<std::size_t>(n_features - 1), 0.0);
            for (const auto& change : j.at("changes")) {
                const int g = change.at("channel").get<int>() - 1;
                if (g < 0 || g >= n_features - 1) {
                    throw ParseError(fmt::format("{}:{}: channel out of range", path.string(), line_no));
                }
                r.candidate.mask[static_cast<std::size_t>(g)] = 1;
                r.candidate.values[static_cast<std::size_t>(g)] = change.at("value").get<double>();
            }
            r.candidate.objectives = r.objectives;
            r.counterfactual_curve.site = r.site;
            r.counterfactual_curve.values = j.value("counterfactual_curve", std::vector<double>{});
            r.counterfactual_curve.aligned = true;
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

void save_relevance_json(const std::filesystem::path& path, const RelevanceReport& report) {
    nlohmann::json j;
    j["zones"] = nlohmann::json::array();
    for (const auto& z : report.zones) {
        nlohmann::json zj;
        zj["zone"] = z.zone;
        zj["n_sites"] = z.n_sites;
        zj["n_success"] = z.n_success;
        zj["success_rate"] = z.success_rate;
        for (std::size_t k = 0; k < z.channels.size(); ++k) {
            zj["relevance"][report.feature_names.at(static_cast<std::size_t>(z.channels[k]))] = z.relevance[k];
        }
        zj["top_combinations"] = nlohmann::json::array();
        for (const auto& combo : z.top_combinations) {
            nlohmann::json names = nlohmann::json::array();
            for (const int s : combo.features) {
                names.push_back(report.feature_names.at(static_cast<std::size_t>(s)));
            }
            zj["top_combinations"].push_back({{"features", names}, {"percent", combo.percent}});
        }
        j["zones"].push_back(std::move(zj));
    }
    j["excluded_zones"] = report.excluded_zones;
    j["success_rate"] = nlohmann::json::array();
    for (const double rate : report.success_rate) {
        j["success_rate"].push_back(std::isnan(rate) ? nlohmann::json(nullptr) : nlohmann::json(rate));
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << j.dump(2) << '\n';
}

void save_relevance_table_csv(const std::filesystem::path& path, const RelevanceReport& report) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << "rank";
    for (const auto& z : report.zones) {
        out << ",zone_" << z.zone << "_combination,zone_" << z.zone << "_percent";
    }
    out << '\n';
    for (std::size_t rank = 0; rank < 5; ++rank) {
        out << rank + 1;
        for (const auto& z : report.zones) {
            if (rank < z.top_combinations.size()) {
                const auto& combo = z.top_combinations[rank];
                out << ",\"" << combination_label(combo.features, report.feature_names) << "\","
                    << fmt::format("{:.1f}", combo.percent);
            } else {
                out << ",,";
            }
        }
        out << '\n';
    }
}

}  // namespace rz

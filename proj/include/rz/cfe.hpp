#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rz/field.hpp"
#include "rz/fpca.hpp"
#include "rz/response.hpp"
#include "rz/surrogate.hpp"
#include "rz/zones.hpp"

namespace rz {

/// Read-only models shared by every counterfactual search.
struct CfeModels {
    const PatchRegressor* regressor = nullptr;
    NGrid grid;
    const FpcaModel* fpca = nullptr;
    const ZoneModel* zones = nullptr;
};

/// Counterfactual search for one site: perturb the passive channels of its
/// window W so that the aligned curve of W' lands in another zone.
struct CfeProblem {
    Site site;
    SiteWindow window;
    int n_features = 0;
    std::vector<int> passive;                 // channel index of each gene (1..n-1)
    std::vector<FeatureRange> bounds;         // per gene
    std::vector<double> site_values;          // per gene, the site's own value
    std::vector<std::vector<double>> cell_values;  // per gene, values of the window's masked-in cells
    double epsilon = 0.8;
    int original_zone = 0;
    double original_membership = 0.0;
    ResponseCurve original_curve;             // aligned
    CfeModels models;

    [[nodiscard]] std::size_t genes() const { return passive.size(); }
};

CfeProblem make_problem(const CfeModels& models, const FieldRaster& field, Site site, double epsilon);

/// Genome: which passive features change, and the value each changed feature
/// takes uniformly across the window.
struct Candidate {
    std::vector<std::uint8_t> mask;
    std::vector<double> values;
    std::array<double, 3> objectives{0.0, 0.0, 0.0};

    [[nodiscard]] std::vector<int> changed() const;  // gene indices with mask set
};

Candidate identity_candidate(const CfeProblem& problem);

/// W': channel s of every cell of every patch set to values[s] where mask[s].
SiteWindow apply_candidate(const CfeProblem& problem, const Candidate& candidate);

struct WindowEvaluation {
    int g1 = 0;
    int zone = 0;
    double membership = 0.0;  // membership of `zone`
    ResponseCurve curve;      // aligned
};

WindowEvaluation evaluate_window(const CfeProblem& problem, const SiteWindow& window);

/// -1 iff the window's curve falls in a zone other than the original with
/// membership above epsilon, else 0.
int eval_g1(const CfeProblem& problem, const SiteWindow& window);
/// Number of changed passive features.
int eval_g2(const Candidate& candidate);
/// (1/n) * sum_s mean_cells |W^(s) - W'^(s)| / r_s over all n channels.
double eval_g3(const CfeProblem& problem, const Candidate& candidate);

/// Fills candidate.objectives.
void evaluate(const CfeProblem& problem, Candidate& candidate);

bool dominates(const std::array<double, 3>& a, const std::array<double, 3>& b);
/// Fronts of indices into `objectives`, best first.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const std::array<double, 3>> objectives);
/// Crowding distance of each member of `front` (same order).
std::vector<double> crowding_distance(std::span<const std::array<double, 3>> objectives,
                                      std::span<const std::size_t> front);

struct CfeSettings {
    int population = 50;
    int generations = 100;
    double epsilon = 0.8;
    std::uint64_t seed = 1;
    double mask_density = 0.3;
    double crossover_probability = 0.9;
    double mutation_sd = 0.1;  // fraction of each feature's range
    /// Sites explained per zone; 0 explains every charted site.
    int max_sites_per_zone = 0;
};

/// Final nondominated front of an NSGA-II run, without duplicate genomes.
std::vector<Candidate> nsga2(const CfeProblem& problem, const CfeSettings& settings, std::uint64_t seed);

/// Lexicographic minimum over (g1, g2, g3); then the lowest changed-index vector.
Candidate select(std::span<const Candidate> front);

struct CfeResult {
    Site site;
    bool success = false;
    std::vector<int> alpha;  // changed channel indices
    std::array<double, 3> objectives{0.0, 0.0, 0.0};
    int old_zone = 0;
    int new_zone = 0;
    double new_membership = 0.0;
    Candidate candidate;
    ResponseCurve counterfactual_curve;
};

CfeResult explain_site(const CfeProblem& problem, const CfeSettings& settings);

/// Sites to explain: every charted site, or a seeded sample of at most
/// `max_sites_per_zone` per zone, row-major.
std::vector<Site> choose_sites(const ZoneModel& zones, int max_sites_per_zone, std::uint64_t seed);

/// Runs explain_site over `sites` in parallel with per-site seeds.
std::vector<CfeResult> explain_sites(const CfeModels& models, const FieldRaster& field, std::span<const Site> sites,
                                     const CfeSettings& settings);

struct FeatureCombination {
    std::vector<int> features;  // channel indices, ascending
    double percent = 0.0;
};

struct ZoneRelevance {
    int zone = 0;
    int n_sites = 0;
    int n_success = 0;
    double success_rate = 0.0;
    std::vector<int> channels;        // passive channel of each relevance entry
    std::vector<double> relevance;    // r_z[s]
    std::vector<FeatureCombination> top_combinations;
};

struct RelevanceReport {
    std::vector<std::string> feature_names;
    std::vector<ZoneRelevance> zones;      // zones with at least one success
    std::vector<int> excluded_zones;       // zones with results but no success
    std::vector<double> success_rate;      // per zone id; NaN when no site was explained
};

RelevanceReport global_relevance(std::span<const CfeResult> results, int zone_count,
                                 const std::vector<std::string>& feature_names);

std::string combination_label(const std::vector<int>& features, const std::vector<std::string>& names);

void save_results_jsonl(const std::filesystem::path& path, std::span<const CfeResult> results,
                        const std::vector<std::string>& feature_names);
std::vector<CfeResult> load_results_jsonl(const std::filesystem::path& path, int n_features);
void save_relevance_json(const std::filesystem::path& path, const RelevanceReport& report);
/// Top-five combination table: one row per rank, a (combination, percent) column pair per zone.
void save_relevance_table_csv(const std::filesystem::path& path, const RelevanceReport& report);

}  // namespace rz

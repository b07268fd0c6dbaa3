// rzones: command-line front end for the zoning pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rz/pipeline.hpp"
#include "rz/log.hpp"

namespace {

using rz::log;

std::vector<int> parse_widths(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        out.push_back(std::stoi(token));
    }
    return out;
}

rz::NGrid grid_of(const std::vector<double>& values) {
    rz::require(values.size() >= 2, "fPCA model carries no nitrogen grid");
    return {values.front(), values.back(), static_cast<int>(values.size())};
}

void save_truth(const std::filesystem::path& path, const std::vector<int>& truth, int width) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out << truth[i] << ((i + 1) % static_cast<std::size_t>(width) == 0 ? '\n' : ',');
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Management zones from surrogate nitrogen-response curves"};
    app.require_subcommand(1);

    // synth
    std::string spec_path, out_field, out_yield, out_truth;
    std::uint64_t synth_seed = 0;
    int synth_h = 0, synth_w = 0;
    double synth_noise = -1.0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic field with known responsivity classes");
    synth->add_option("--spec", spec_path, "Synthetic spec JSON")->check(CLI::ExistingFile);
    synth->add_option("--seed", synth_seed, "Override the seed from --spec");
    synth->add_option("--height", synth_h, "Override the height from --spec");
    synth->add_option("--width", synth_w, "Override the width from --spec");
    synth->add_option("--noise", synth_noise, "Override the yield noise sd");
    synth->add_option("--out-field", out_field, "Field CSV")->required();
    synth->add_option("--out-yield", out_yield, "Yield CSV")->required();
    synth->add_option("--truth", out_truth, "Latent class grid CSV");

    // train
    std::string field_path, yield_path, model_out, hidden = "128,64", activation = "tanh", optimizer = "sgd";
    rz::TrainConfig tc;
    double split = 0.8;
    auto* train = app.add_subcommand("train", "Fit the patch surrogate");
    train->add_option("--field", field_path)->required()->check(CLI::ExistingFile);
    train->add_option("--yield", yield_path)->required()->check(CLI::ExistingFile);
    train->add_option("--out", model_out)->required();
    train->add_option("--epochs", tc.epochs);
    train->add_option("--seed", tc.seed);
    train->add_option("--batch", tc.batch_size);
    train->add_option("--lr", tc.learning_rate);
    train->add_option("--l2", tc.l2_penalty);
    train->add_option("--momentum", tc.momentum);
    train->add_option("--hidden", hidden, "Hidden layer widths, comma separated");
    train->add_option("--activation", activation);
    train->add_option("--optimizer", optimizer, "sgd or adam");
    train->add_option("--split", split, "Training fraction");

    // curves
    std::string model_path, curves_out;
    rz::NGrid grid;
    auto* curves = app.add_subcommand("curves", "Aligned response curves for every site");
    curves->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    curves->add_option("--field", field_path)->required()->check(CLI::ExistingFile);
    curves->add_option("--nmin", grid.n_min);
    curves->add_option("--nmax", grid.n_max);
    curves->add_option("--steps", grid.steps);
    curves->add_option("--out", curves_out)->required();

    // fpca
    std::string curves_path, fpca_out;
    double target = rz::kDefaultVarianceTarget;
    int kmax = rz::kDefaultComponentCap;
    auto* fpca = app.add_subcommand("fpca", "Functional PCA of the curves");
    fpca->add_option("--curves", curves_path)->required()->check(CLI::ExistingFile);
    fpca->add_option("--out", fpca_out)->required();
    fpca->add_option("--target", target);
    fpca->add_option("--kmax", kmax);

    // cluster
    std::string fpca_path, zones_out, map_out, profile = "heterogeneous";
    rz::ClusterOptions co;
    int zone_count = 0;
    auto* clus = app.add_subcommand("cluster", "Fuzzy c-means zoning of the fPCA scores");
    clus->add_option("--fpca", fpca_path)->required()->check(CLI::ExistingFile);
    clus->add_option("--curves", curves_path)->required()->check(CLI::ExistingFile);
    clus->add_option("--zones", zone_count, "Zone count in [2, 8]");
    clus->add_option("--profile", profile, "heterogeneous (4 zones) or homogeneous (3)");
    clus->add_option("--seed", co.seed);
    clus->add_option("--m", co.m);
    clus->add_option("--max-iter", co.max_iter);
    clus->add_option("--tol", co.tol);
    clus->add_option("--out", zones_out)->required();
    clus->add_option("--map", map_out, "Zone map PGM");

    // explain
    std::string zones_path, cfe_out, report_out;
    rz::CfeSettings cs;
    auto* explain = app.add_subcommand("explain", "Counterfactual explanations per site");
    explain->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    explain->add_option("--fpca", fpca_path)->required()->check(CLI::ExistingFile);
    explain->add_option("--zones", zones_path)->required()->check(CLI::ExistingFile);
    explain->add_option("--field", field_path)->required()->check(CLI::ExistingFile);
    explain->add_option("--pop", cs.population);
    explain->add_option("--gens", cs.generations);
    explain->add_option("--epsilon", cs.epsilon);
    explain->add_option("--seed", cs.seed);
    explain->add_option("--max-sites-per-zone", cs.max_sites_per_zone);
    explain->add_option("--out", cfe_out)->required();
    explain->add_option("--report", report_out, "Relevance JSON");

    // report
    std::string results_path, out_dir;
    std::uint64_t plot_seed = 1;
    int per_zone = 50;
    auto* report = app.add_subcommand("report", "Relevance tables and plot data");
    report->add_option("--results", results_path)->required()->check(CLI::ExistingFile);
    report->add_option("--zones", zones_path)->required()->check(CLI::ExistingFile);
    report->add_option("--curves", curves_path)->required()->check(CLI::ExistingFile);
    report->add_option("--field", field_path)->required()->check(CLI::ExistingFile);
    report->add_option("--out-dir", out_dir)->required();
    report->add_option("--seed", plot_seed);
    report->add_option("--curves-per-zone", per_zone);

    // run
    std::string config_path;
    auto* run = app.add_subcommand("run", "Run every stage from one config");
    run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    std::string run_out;
    run->add_option("--out-dir", run_out, "Overrides the config's output_dir");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            rz::SyntheticSpec spec = spec_path.empty() ? rz::SyntheticSpec{} : rz::load_synthetic_spec(spec_path);
            if (synth->count("--seed") > 0) spec.seed = synth_seed;
            if (synth_h > 0) spec.height = synth_h;
            if (synth_w > 0) spec.width = synth_w;
            if (synth_noise >= 0.0) spec.noise_sd = synth_noise;
            const auto s = rz::generate_synthetic(spec);
            rz::save_field(out_field, s.field);
            rz::save_yield(out_yield, s.yield);
            if (!out_truth.empty()) {
                save_truth(out_truth, s.truth, spec.width);
            }
        } else if (*train) {
            const auto field = rz::load_field(field_path);
            const auto yield = rz::load_yield(yield_path);
            tc.optimizer = rz::optimizer_from_string(optimizer);
            const auto net = rz::fit_surrogate(field, yield, parse_widths(hidden),
                                               rz::activation_from_string(activation), tc, split, tc.seed);
            rz::save_model(model_out, net);
        } else if (*curves) {
            const auto net = rz::load_model(model_path);
            const auto field = rz::load_field(field_path);
            rz::save_curves(curves_out, rz::field_curves(net, field, grid));
        } else if (*fpca) {
            rz::save_fpca(fpca_out, rz::fit_fpca(rz::load_curves(curves_path), target, kmax));
        } else if (*clus) {
            co.c = rz::zone_counts_default(profile, zone_count);
            const auto model = rz::load_fpca(fpca_path);
            const auto set = rz::load_curves(curves_path);
            const auto zones = rz::cluster(rz::transform(model, set), co);
            rz::save_zone_model(zones_out, zones);
            if (!map_out.empty()) {
                int h = 0;
                int w = 0;
                for (const auto& s : zones.sites) {
                    h = std::max(h, s.row + 1);
                    w = std::max(w, s.col + 1);
                }
                rz::save_zone_map_pgm(map_out, rz::zone_map(zones, h, w), zones.c);
            }
        } else if (*explain) {
            const auto net = rz::load_model(model_path);
            const auto model = rz::load_fpca(fpca_path);
            const auto zones = rz::load_zone_model(zones_path);
            const auto field = rz::load_field(field_path);
            const rz::CfeModels models{&net, grid_of(model.grid), &model, &zones};
            const auto sites = rz::choose_sites(zones, cs.max_sites_per_zone, cs.seed);
            const auto results = rz::explain_sites(models, field, sites, cs);
            rz::save_results_jsonl(cfe_out, results, field.feature_names());
            if (!report_out.empty()) {
                rz::save_relevance_json(report_out, rz::global_relevance(results, zones.c, field.feature_names()));
            }
        } else if (*report) {
            const auto field = rz::load_field(field_path);
            const auto zones = rz::load_zone_model(zones_path);
            const auto set = rz::load_curves(curves_path);
            const auto results = rz::load_results_jsonl(results_path, field.n_features());
            std::filesystem::create_directories(out_dir);
            const auto relevance = rz::global_relevance(results, zones.c, field.feature_names());
            rz::emit_plots(out_dir, set, zones, field, relevance, per_zone, plot_seed);
        } else if (*run) {
            auto cfg = rz::load_run_config(config_path);
            if (!run_out.empty()) {
                cfg.output_dir = run_out;
            }
            const auto summary = rz::run_pipeline(cfg);
            std::cout << summary.manifest.string() << '\n';
        }
    } catch (const rz::StageError& e) {
        log()->error("stage={} event=aborted", e.stage());
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const rz::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include "rz/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "rz/log.hpp"

namespace rz {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

}  // namespace

// -- config --------------------------------------------------------------------------

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    try {
        if (j.contains("output_dir")) {
            c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        }
        if (j.contains("field")) {
            const auto& f = j.at("field");
            if (f.contains("synthetic")) {
                c.synthetic = synthetic_spec_from_json(f.at("synthetic"));
            }
            if (f.contains("field_path")) {
                c.field_path = resolve(base_dir, f.at("field_path").get<std::string>());
            }
            if (f.contains("yield_path")) {
                c.yield_path = resolve(base_dir, f.at("yield_path").get<std::string>());
            }
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            c.hidden_layers = t.value("hidden_layers", c.hidden_layers);
            c.activation = activation_from_string(t.value("activation", to_string(c.activation)));
            c.train.epochs = t.value("epochs", c.train.epochs);
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.seed = t.value("seed", c.train.seed);
            c.train.l2_penalty = t.value("l2_penalty", c.train.l2_penalty);
            c.train.momentum = t.value("momentum", c.train.momentum);
            c.train.optimizer = optimizer_from_string(t.value("optimizer", to_string(c.train.optimizer)));
            c.train.beta1 = t.value("beta1", c.train.beta1);
            c.train.beta2 = t.value("beta2", c.train.beta2);
            c.split_fraction = t.value("split_fraction", c.split_fraction);
            c.split_seed = t.value("split_seed", c.split_seed);
        }
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.grid.n_min = g.value("n_min", c.grid.n_min);
            c.grid.n_max = g.value("n_max", c.grid.n_max);
            c.grid.steps = g.value("steps", c.grid.steps);
        }
        if (j.contains("fpca")) {
            const auto& f = j.at("fpca");
            c.variance_target = f.value("variance_target", c.variance_target);
            c.k_max = f.value("k_max", c.k_max);
        }
        if (j.contains("zones")) {
            const auto& z = j.at("zones");
            c.zone_profile = z.value("profile", c.zone_profile);
            c.zone_count = z.value("count", c.zone_count);
            c.cluster.seed = z.value("seed", c.cluster.seed);
            c.cluster.m = z.value("m", c.cluster.m);
            c.cluster.max_iter = z.value("max_iter", c.cluster.max_iter);
            c.cluster.tol = z.value("tol", c.cluster.tol);
        }
        if (j.contains("cfe")) {
            const auto& e = j.at("cfe");
            c.cfe.population = e.value("population", c.cfe.population);
            c.cfe.generations = e.value("generations", c.cfe.generations);
            c.cfe.epsilon = e.value("epsilon", c.cfe.epsilon);
            c.cfe.seed = e.value("seed", c.cfe.seed);
            c.cfe.mask_density = e.value("mask_density", c.cfe.mask_density);
            c.cfe.crossover_probability = e.value("crossover_probability", c.cfe.crossover_probability);
            c.cfe.mutation_sd = e.value("mutation_sd", c.cfe.mutation_sd);
            c.cfe.max_sites_per_zone = e.value("max_sites_per_zone", c.cfe.max_sites_per_zone);
        }
        if (j.contains("plots")) {
            const auto& p = j.at("plots");
            c.plot_seed = p.value("seed", c.plot_seed);
            c.plot_curves_per_zone = p.value("curves_per_zone", c.plot_curves_per_zone);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("run config: {}", e.what()));
    }
    c.cluster.c = zone_counts_default(c.zone_profile, c.zone_count);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return run_config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["output_dir"] = c.output_dir.string();
    if (c.synthetic) {
        j["field"]["synthetic"] = to_json(*c.synthetic);
    } else {
        j["field"]["field_path"] = c.field_path.string();
        j["field"]["yield_path"] = c.yield_path.string();
    }
    j["train"] = {{"hidden_layers", c.hidden_layers},
                  {"activation", to_string(c.activation)},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"seed", c.train.seed},
                  {"l2_penalty", c.train.l2_penalty},
                  {"momentum", c.train.momentum},
                  {"optimizer", to_string(c.train.optimizer)},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"split_fraction", c.split_fraction},
                  {"split_seed", c.split_seed}};
    j["grid"] = {{"n_min", c.grid.n_min}, {"n_max", c.grid.n_max}, {"steps", c.grid.steps}};
    j["fpca"] = {{"variance_target", c.variance_target}, {"k_max", c.k_max}};
    j["zones"] = {{"profile", c.zone_profile}, {"count", c.cluster.c},     {"seed", c.cluster.seed},
                  {"m", c.cluster.m},          {"max_iter", c.cluster.max_iter}, {"tol", c.cluster.tol}};
    j["cfe"] = {{"population", c.cfe.population},
                {"generations", c.cfe.generations},
                {"epsilon", c.cfe.epsilon},
                {"seed", c.cfe.seed},
                {"mask_density", c.cfe.mask_density},
                {"crossover_probability", c.cfe.crossover_probability},
                {"mutation_sd", c.cfe.mutation_sd},
                {"max_sites_per_zone", c.cfe.max_sites_per_zone}};
    j["plots"] = {{"seed", c.plot_seed}, {"curves_per_zone", c.plot_curves_per_zone}};
    return j;
}

void validate(const RunConfig& c) {
    if (c.synthetic) {
        require(c.field_path.empty() && c.yield_path.empty(),
                "config gives both a synthetic spec and input files");
        require(c.synthetic->height >= kPatchSize && c.synthetic->width >= kPatchSize,
                "synthetic field must be at least 5x5");
    } else {
        require(!c.field_path.empty() && !c.yield_path.empty(), "config needs a synthetic spec or field and yield paths");
        require(std::filesystem::is_regular_file(c.field_path),
                fmt::format("field file '{}' does not exist", c.field_path.string()));
        require(std::filesystem::is_regular_file(c.yield_path),
                fmt::format("yield file '{}' does not exist", c.yield_path.string()));
    }
    require(!c.hidden_layers.empty(), "hidden_layers must not be empty");
    for (const int h : c.hidden_layers) {
        require(h >= 1, "hidden layer widths must be positive");
    }
    require(c.train.epochs >= 1, "epochs must be at least 1");
    require(c.train.batch_size >= 1, "batch_size must be positive");
    require(c.train.learning_rate >= 0.0, "learning_rate must be nonnegative");
    require(c.train.l2_penalty >= 0.0, "l2_penalty must be nonnegative");
    require(c.train.momentum >= 0.0 && c.train.momentum < 1.0, "momentum must lie in [0, 1)");
    require(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0 && c.train.beta2 >= 0.0 && c.train.beta2 < 1.0,
            "beta1 and beta2 must lie in [0, 1)");
    require(c.split_fraction > 0.0 && c.split_fraction < 1.0, "split_fraction must lie in (0, 1)");
    c.grid.validate();
    require(c.variance_target > 0.0 && c.variance_target <= 1.0, "variance_target must lie in (0, 1]");
    require(c.k_max >= 1, "k_max must be at least 1");
    require(c.cluster.c >= kMinZones && c.cluster.c <= kMaxZones, "zone count must lie in [2, 8]");
    require(c.cluster.m > 1.0, "fuzzifier m must exceed 1");
    require(c.cluster.max_iter >= 1, "max_iter must be at least 1");
    require(c.cluster.tol > 0.0, "tol must be positive");
    require(c.cfe.population >= 4 && c.cfe.population % 2 == 0, "population must be even and at least 4");
    require(c.cfe.generations >= 0, "generations must be nonnegative");
    require(c.cfe.epsilon > 1.0 / c.cluster.c && c.cfe.epsilon < 1.0,
            fmt::format("epsilon must lie in (1/{}, 1)", c.cluster.c));
    require(c.cfe.mask_density >= 0.0 && c.cfe.mask_density <= 1.0, "mask_density must lie in [0, 1]");
    require(c.cfe.crossover_probability >= 0.0 && c.cfe.crossover_probability <= 1.0,
            "crossover_probability must lie in [0, 1]");
    require(c.cfe.mutation_sd >= 0.0, "mutation_sd must be nonnegative");
    require(c.cfe.max_sites_per_zone >= 0, "max_sites_per_zone must be nonnegative");
    require(c.plot_curves_per_zone >= 1, "curves_per_zone must be positive");
}

// -- stages --------------------------------------------------------------------------

std::vector<int> full_layer_sizes(const std::vector<int>& hidden, int n_features) {
    std::vector<int> sizes{kPatchCells * n_features};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(kPatchCells);
    return sizes;
}

DenseNet fit_surrogate(const FieldRaster& field, const YieldRaster& yield, const std::vector<int>& hidden,
                       Activation activation, const TrainConfig& config, double split_fraction,
                       std::uint64_t split_seed, TrainReport* report) {
    const PatchSplit split = split_patches(extract_patches(field, yield), split_fraction, split_seed);
    DenseNet net(full_layer_sizes(hidden, field.n_features()), activation);
    net.initialize(config.seed);
    net.set_input_ranges(field.feature_ranges());
    const auto [offset, scale] = target_statistics(split.train);
    net.set_target_scaling(offset, scale);
    log()->info("stage=train event=start train_patches={} val_patches={} parameters={}", split.train.size(),
                split.validation.size(), net.parameter_count());
    TrainReport r = train(net, split.train, split.validation, config);
    if (report != nullptr) {
        *report = std::move(r);
    }
    return net;
}

std::vector<std::string> emit_plots(const std::filesystem::path& dir, const CurveSet& curves, const ZoneModel& zones,
                                    const FieldRaster& field, const RelevanceReport& relevance,
                                    int curves_per_zone, std::uint64_t seed) {
    std::vector<std::string> written;
    std::map<Site, std::size_t> curve_of;
    for (std::size_t i = 0; i < curves.curves.size(); ++i) {
        curve_of[curves.curves[i].site] = i;
    }
    for (int z = 0; z < zones.c; ++z) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < zones.sites.size(); ++i) {
            if (zones.assignments[i] == z) {
                const auto it = curve_of.find(zones.sites[i]);
                require(it != curve_of.end(), "zone model references a site without a curve");
                members.push_back(it->second);
            }
        }
        if (static_cast<int>(members.size()) < curves_per_zone) {
            log()->warn("stage=report event=small_zone zone={} sites={} requested={}", z, members.size(),
                        curves_per_zone);
        } else {
            std::mt19937_64 rng(mix_seed(seed + static_cast<std::uint64_t>(z)));
            std::shuffle(members.begin(), members.end(), rng);
            members.resize(static_cast<std::size_t>(curves_per_zone));
            std::sort(members.begin(), members.end());
        }
        CurveSet sample;
        sample.grid = curves.grid;
        for (const std::size_t i : members) {
            sample.curves.push_back(curves.curves[i]);
        }
        const std::string name = fmt::format("curves_zone_{}.csv", z);
        save_curves(dir / name, sample);
        written.push_back(name);
    }

    const ZoneMap map = zone_map(zones, field);
    save_zone_map_pgm(dir / "zones.pgm", map, zones.c);
    save_zone_map_csv(dir / "zones_map.csv", map);
    written.emplace_back("zones.pgm");
    written.emplace_back("zones_map.csv");

    std::ostringstream bars;
    bars << "zone,feature,relevance\n";
    for (const auto& zr : relevance.zones) {
        for (std::size_t k = 0; k < zr.channels.size(); ++k) {
            bars << zr.zone << ',' << relevance.feature_names.at(static_cast<std::size_t>(zr.channels[k])) << ','
                 << fmt::format("{}", zr.relevance[k]) << '\n';
        }
    }
    write_text(dir / "relevance_bars.csv", bars.str());
    written.emplace_back("relevance_bars.csv");

    save_relevance_json(dir / "relevance.json", relevance);
    save_relevance_table_csv(dir / "relevance_table.csv", relevance);
    written.emplace_back("relevance.json");
    written.emplace_back("relevance_table.csv");
    return written;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot read '{}'", path.string()));
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 initialisation failed");
    }
    std::vector<char> buffer(1 << 16);
    while (in) {
        in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &length);
    std::string hex;
    for (unsigned int k = 0; k < length; ++k) {
        hex += fmt::format("{:02x}", digest[k]);
    }
    return hex;
}

RunSummary run_pipeline(const RunConfig& config) {
    try {
        validate(config);
    } catch (const std::exception& e) {
        throw StageError("validate", e.what());
    }
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);

    std::string stage;
    auto begin = [&stage](const char* name) {
        stage = name;
        log()->info("stage={} event=start", stage);
    };

    try {
        begin(config.synthetic ? "synth" : "ingest");
        FieldRaster field;
        YieldRaster yield;
        if (config.synthetic) {
            SyntheticField s = generate_synthetic(*config.synthetic);
            field = std::move(s.field);
            yield = std::move(s.yield);
        } else {
            field = load_field(config.field_path);
            yield = load_yield(config.yield_path);
        }
        save_field(dir / "field.csv", field);
        save_yield(dir / "yield.csv", yield);

        begin("train");
        const DenseNet net = fit_surrogate(field, yield, config.hidden_layers, config.activation, config.train,
                                           config.split_fraction, config.split_seed);
        save_model(dir / "model.json", net);

        begin("curves");
        const CurveSet curves = field_curves(net, field, config.grid);
        save_curves(dir / "curves.csv", curves);

        begin("fpca");
        const FpcaModel fpca = fit_fpca(curves, config.variance_target, config.k_max);
        save_fpca(dir / "fpca.json", fpca);

        begin("cluster");
        const ZoneModel zones = cluster(transform(fpca, curves), config.cluster);
        save_zone_model(dir / "zones.json", zones);

        begin("explain");
        const CfeModels models{&net, config.grid, &fpca, &zones};
        const auto sites = choose_sites(zones, config.cfe.max_sites_per_zone, config.cfe.seed);
        const auto results = explain_sites(models, field, sites, config.cfe);
        save_results_jsonl(dir / "cfe.jsonl", results, field.feature_names());

        begin("report");
        const RelevanceReport relevance = global_relevance(results, zones.c, field.feature_names());
        const auto plots = emit_plots(dir, curves, zones, field, relevance, config.plot_curves_per_zone,
                                      config.plot_seed);

        RunSummary summary;
        for (const auto& name : kPrimaryArtifacts) {
            summary.artifacts[name] = sha256_file(dir / name);
        }
        for (const auto& name : plots) {
            summary.reports[name] = sha256_file(dir / name);
        }
        nlohmann::json manifest;
        manifest["config"] = to_json(config);
        manifest["artifacts"] = summary.artifacts;
        manifest["reports"] = summary.reports;
        summary.manifest = dir / "manifest.json";
        write_text(summary.manifest, manifest.dump(2) + "\n");
        log()->info("stage=run event=done manifest={}", summary.manifest.string());
        return summary;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        log()->error("stage={} event=failed error=\"{}\"", stage, e.what());
        throw StageError(stage, e.what());
    }
}

}  // namespace rz

#include "rz/field.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace rz {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_sentinel(double v) { return v == kNoData; }

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

/// Line reader that skips blank lines and remembers the line number.
class LineReader {
public:
    LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    bool next(std::string& line) {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++line_no_;
            line = trim(raw);
            if (!line.empty()) {
                return true;
            }
        }
        return false;
    }

    [[nodiscard]] int line_no() const { return line_no_; }
    [[nodiscard]] const std::string& source() const { return source_; }

private:
    std::istream& in_;
    std::string source_;
    int line_no_ = 0;
};

double parse_number(const std::string& token, const LineReader& reader, int row, int col) {
    const std::string t = trim(token);
    double value = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    const auto result = std::from_chars(first, last, value);
    if (t.empty() || result.ec != std::errc{} || result.ptr != last) {
        throw ParseError(fmt::format("{}:{}: non-numeric value '{}' at row {} column {}", reader.source(),
                                     reader.line_no(), t, row, col));
    }
    return value;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string token;
    std::stringstream ss(line);
    while (std::getline(ss, token, ',')) {
        out.push_back(token);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

struct Grid {
    int height = 0;
    int width = 0;
    double cell_size_m = 10.0;
    std::vector<std::string> names;
    std::vector<double> data;  // cell-major
    std::vector<std::uint8_t> mask;
};

Grid read_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    LineReader reader(in, path.string());
    std::string line;
    if (!reader.next(line)) {
        throw ParseError(fmt::format("{}: empty file", path.string()));
    }
    const auto header = split_commas(line);
    if (header.size() != 4) {
        throw ParseError(fmt::format("{}:{}: malformed header, expected height,width,n_features,cell_size_m",
                                     path.string(), reader.line_no()));
    }
    Grid g;
    const double h = parse_number(header[0], reader, 0, 1);
    const double w = parse_number(header[1], reader, 0, 2);
    const double n = parse_number(header[2], reader, 0, 3);
    g.cell_size_m = parse_number(header[3], reader, 0, 4);
    if (h < 1 || w < 1 || n < 1 || h != std::floor(h) || w != std::floor(w) || n != std::floor(n) ||
        g.cell_size_m <= 0) {
        throw ParseError(fmt::format("{}:{}: malformed header values", path.string(), reader.line_no()));
    }
    g.height = static_cast<int>(h);
    g.width = static_cast<int>(w);
    const int channels = static_cast<int>(n);

    for (int s = 0; s < channels; ++s) {
        if (!reader.next(line)) {
            throw ParseError(fmt::format("{}: missing name for channel {}", path.string(), s));
        }
        if (line.find(',') != std::string::npos) {
            throw ParseError(fmt::format("{}:{}: expected channel name {} of {}, found a data row", path.string(),
                                         reader.line_no(), s + 1, channels));
        }
        g.names.push_back(line);
    }

    const auto cells = static_cast<std::size_t>(g.height) * static_cast<std::size_t>(g.width);
    g.data.assign(cells * static_cast<std::size_t>(channels), 0.0);
    g.mask.assign(cells, 1);
    for (int s = 0; s < channels; ++s) {
        for (int r = 0; r < g.height; ++r) {
            if (!reader.next(line)) {
                throw ParseError(fmt::format("{}: unexpected end of file in channel '{}' at row {}", path.string(),
                                             g.names[static_cast<std::size_t>(s)], r + 1));
            }
            const auto tokens = split_commas(line);
            if (static_cast<int>(tokens.size()) != g.width) {
                throw ParseError(fmt::format("{}:{}: ragged row {} in channel '{}': {} values, expected {}",
                                             path.string(), reader.line_no(), r + 1,
                                             g.names[static_cast<std::size_t>(s)], tokens.size(), g.width));
            }
            for (int c = 0; c < g.width; ++c) {
                const double v = parse_number(tokens[static_cast<std::size_t>(c)], reader, r + 1, c + 1);
                const auto cell = static_cast<std::size_t>(r) * static_cast<std::size_t>(g.width) +
                                  static_cast<std::size_t>(c);
                g.data[cell * static_cast<std::size_t>(channels) + static_cast<std::size_t>(s)] = v;
                if (is_sentinel(v)) {
                    g.mask[cell] = 0;
                }
            }
        }
    }
    if (reader.next(line)) {
        throw ParseError(fmt::format("{}:{}: trailing data after {} channel blocks", path.string(),
                                     reader.line_no(), channels));
    }
    return g;
}

void write_grid(const std::filesystem::path& path, int height, int width, double cell_size_m,
                const std::vector<std::string>& names, const std::function<double(int, int, int)>& value,
                const std::function<bool(int, int)>& valid) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << height << ',' << width << ',' << names.size() << ',' << fmt::format("{}", cell_size_m) << '\n';
    for (const auto& name : names) {
        out << name << '\n';
    }
    for (int s = 0; s < static_cast<int>(names.size()); ++s) {
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
                if (c > 0) {
                    out << ',';
                }
                out << fmt::format("{}", valid(r, c) ? value(r, c, s) : kNoData);
            }
            out << '\n';
        }
    }
}

/// Sum of three random plane waves rescaled into [lo, hi].
class SmoothField {
public:
    SmoothField(std::mt19937_64& rng, double lo, double hi) : lo_(lo), hi_(hi) {
        std::uniform_real_distribution<double> freq(0.3, 1.5);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        for (auto& w : waves_) {
            w = {freq(rng), freq(rng), phase(rng)};
        }
    }

    [[nodiscard]] double operator()(int row, int col, int height, int width) const {
        double acc = 0.0;
        for (const auto& w : waves_) {
            acc += std::sin(2.0 * std::numbers::pi *
                                (w[0] * row / static_cast<double>(height) + w[1] * col / static_cast<double>(width)) +
                            w[2]);
        }
        const double unit = (acc / static_cast<double>(waves_.size()) + 1.0) / 2.0;
        return lo_ + unit * (hi_ - lo_);
    }

private:
    double lo_;
    double hi_;
    std::array<std::array<double, 3>, 3> waves_{};
};

// Plausible value ranges of the default covariates.
constexpr std::array<std::pair<double, double>, 8> kChannelRanges = {{
    {0.0, 150.0},                       // N
    {0.5, 12.0},                        // S (degrees)
    {900.0, 1100.0},                    // E (m)
    {-2.0, 2.0},                        // TPI
    {0.0, 2.0 * std::numbers::pi},      // A (radians)
    {250.0, 450.0},                     // P (mm)
    {-15.0, -8.0},                      // VV (dB)
    {-22.0, -15.0},                     // VH (dB)
}};

}  // namespace

// -- FieldRaster ---------------------------------------------------------------

FieldRaster::FieldRaster(int height, int width, std::vector<std::string> feature_names, std::vector<double> data,
                         std::vector<std::uint8_t> mask, double cell_size_m)
    : height_(height),
      width_(width),
      cell_size_m_(cell_size_m),
      feature_names_(std::move(feature_names)),
      data_(std::move(data)),
      mask_(std::move(mask)) {
    require(height_ >= 1 && width_ >= 1, "field must have a positive area");
    require(feature_names_.size() >= 2, "field needs nitrogen plus at least one passive feature");
    const auto cells = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    const auto n = feature_names_.size();
    require(data_.size() == cells * n, "field data size does not match height*width*n_features");
    require(mask_.size() == cells, "field mask size does not match height*width");

    feature_ranges_.assign(n, FeatureRange{std::numeric_limits<double>::infinity(),
                                           -std::numeric_limits<double>::infinity()});
    bool any = false;
    for (std::size_t cell = 0; cell < cells; ++cell) {
        double* values = data_.data() + cell * n;
        if (mask_[cell] == 0) {
            std::fill(values, values + n, kNaN);
            continue;
        }
        any = true;
        for (std::size_t s = 0; s < n; ++s) {
            if (!std::isfinite(values[s])) {
                throw PreconditionError(fmt::format("non-finite value in masked-in cell {} channel {}", cell, s));
            }
            feature_ranges_[s].min = std::min(feature_ranges_[s].min, values[s]);
            feature_ranges_[s].max = std::max(feature_ranges_[s].max, values[s]);
        }
    }
    if (!any) {
        feature_ranges_.assign(n, FeatureRange{});
    }
}

double FieldRaster::at(int row, int col, int feature) const {
    return data_[index(row, col) * feature_names_.size() + static_cast<std::size_t>(feature)];
}

std::span<const double> FieldRaster::cell(int row, int col) const {
    return {data_.data() + index(row, col) * feature_names_.size(), feature_names_.size()};
}

std::size_t FieldRaster::valid_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

std::vector<Site> FieldRaster::valid_sites() const {
    std::vector<Site> out;
    for (int r = 0; r < height_; ++r) {
        for (int c = 0; c < width_; ++c) {
            if (valid(r, c)) {
                out.push_back({r, c});
            }
        }
    }
    return out;
}

// -- I/O -----------------------------------------------------------------------

FieldRaster load_field(const std::filesystem::path& path) {
    Grid g = read_grid(path);
    if (g.names.size() < 2) {
        throw ParseError(fmt::format("{}: a field needs at least two channels", path.string()));
    }
    return {g.height, g.width, std::move(g.names), std::move(g.data), std::move(g.mask), g.cell_size_m};
}

void save_field(const std::filesystem::path& path, const FieldRaster& field) {
    write_grid(
        path, field.height(), field.width(), field.cell_size_m(), field.feature_names(),
        [&](int r, int c, int s) { return field.at(r, c, s); }, [&](int r, int c) { return field.valid(r, c); });
}

YieldRaster load_yield(const std::filesystem::path& path) {
    Grid g = read_grid(path);
    if (g.names.size() != 1) {
        throw ParseError(fmt::format("{}: yield file must have exactly one channel", path.string()));
    }
    YieldRaster y{g.height, g.width, std::move(g.data), std::move(g.mask)};
    for (std::size_t i = 0; i < y.values.size(); ++i) {
        if (y.mask[i] == 0) {
            y.values[i] = kNaN;
        }
    }
    return y;
}

void save_yield(const std::filesystem::path& path, const YieldRaster& yield) {
    write_grid(
        path, yield.height, yield.width, 10.0, {"yield"}, [&](int r, int c, int) { return yield.at(r, c); },
        [&](int r, int c) { return yield.valid(r, c); });
}

// -- synthetic -----------------------------------------------------------------

double ClassResponse::operator()(double nitrogen) const {
    return plateau / (1.0 + std::exp(-steepness * (nitrogen - midpoint)));
}

double synthetic_driver_value(const SyntheticSpec& spec, int row, int col) {
    const double shift = spec.band_wobble * std::sin(2.0 * std::numbers::pi * row / static_cast<double>(spec.height));
    const double denom = spec.width > 1 ? static_cast<double>(spec.width - 1) : 1.0;
    const double t = std::clamp((col + shift) / denom, 0.0, 1.0);
    return spec.driver_min + t * (spec.driver_max - spec.driver_min);
}

int synthetic_class(const SyntheticSpec& spec, double driver_value) {
    const double t = (driver_value - spec.driver_min) / (spec.driver_max - spec.driver_min);
    if (t < 1.0 / 3.0) {
        return 2;
    }
    if (t < 2.0 / 3.0) {
        return 1;
    }
    return 0;
}

SyntheticField generate_synthetic(const SyntheticSpec& spec) {
    if (spec.height < 1 || spec.width < 1) {
        throw PreconditionError("synthetic field must have a positive area");
    }
    require(spec.driver_feature >= 1 && spec.driver_feature < static_cast<int>(kDefaultFeatureNames.size()),
            "driver_feature must be a passive channel index");
    require(spec.plot_size >= 1, "plot_size must be positive");
    require(spec.n_min <= spec.n_max, "n_min must not exceed n_max");
    require(spec.driver_min < spec.driver_max, "driver_min must be below driver_max");
    require(spec.noise_sd >= 0.0, "noise_sd must be nonnegative");
    for (const auto& p : spec.response) {
        require(p.plateau >= 0.0 && p.steepness >= 0.0, "class responses must be nondecreasing");
    }

    const int n = static_cast<int>(kDefaultFeatureNames.size());
    std::mt19937_64 rng(spec.seed);

    std::vector<SmoothField> smooth;
    smooth.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        smooth.emplace_back(rng, kChannelRanges[static_cast<std::size_t>(s)].first,
                            kChannelRanges[static_cast<std::size_t>(s)].second);
    }

    const int plots_r = (spec.height + spec.plot_size - 1) / spec.plot_size;
    const int plots_c = (spec.width + spec.plot_size - 1) / spec.plot_size;
    std::uniform_real_distribution<double> rate(spec.n_min, std::nextafter(spec.n_max, spec.n_max + 1.0));
    std::vector<double> plot_rate(static_cast<std::size_t>(plots_r * plots_c));
    for (auto& v : plot_rate) {
        v = spec.n_min == spec.n_max ? spec.n_min : std::min(rate(rng), spec.n_max);
    }

    const auto cells = static_cast<std::size_t>(spec.height) * static_cast<std::size_t>(spec.width);
    std::vector<double> data(cells * static_cast<std::size_t>(n));
    std::vector<std::uint8_t> mask(cells, 1);
    std::vector<double> yields(cells);
    std::vector<int> truth(cells);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto [e_lo, e_hi] = kChannelRanges[2];

    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            const auto cell = static_cast<std::size_t>(r) * static_cast<std::size_t>(spec.width) +
                              static_cast<std::size_t>(c);
            double* values = data.data() + cell * static_cast<std::size_t>(n);
            for (int s = 1; s < n; ++s) {
                values[s] = smooth[static_cast<std::size_t>(s)](r, c, spec.height, spec.width);
            }
            values[spec.driver_feature] = synthetic_driver_value(spec, r, c);
            values[0] = plot_rate[static_cast<std::size_t>((r / spec.plot_size) * plots_c + c / spec.plot_size)];

            const int cls = synthetic_class(spec, values[spec.driver_feature]);
            truth[cell] = cls;
            const double elevation = spec.driver_feature == 2 ? 0.5 : (values[2] - e_lo) / (e_hi - e_lo);
            double y = spec.base_yield + spec.elevation_effect * elevation +
                       spec.response[static_cast<std::size_t>(cls)](values[0]);
            if (spec.noise_sd > 0.0) {
                y += spec.noise_sd * noise(rng);
            }
            yields[cell] = y;
        }
    }

    SyntheticField out;
    out.field = FieldRaster(spec.height, spec.width, kDefaultFeatureNames, std::move(data), mask, spec.cell_size_m);
    out.yield = YieldRaster{spec.height, spec.width, std::move(yields), std::move(mask)};
    out.truth = std::move(truth);
    return out;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    spec.seed = j.value("seed", spec.seed);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.cell_size_m = j.value("cell_size_m", spec.cell_size_m);
    spec.driver_feature = j.value("driver_feature", spec.driver_feature);
    spec.plot_size = j.value("plot_size", spec.plot_size);
    spec.n_min = j.value("n_min", spec.n_min);
    spec.n_max = j.value("n_max", spec.n_max);
    spec.noise_sd = j.value("noise_sd", spec.noise_sd);
    spec.base_yield = j.value("base_yield", spec.base_yield);
    spec.elevation_effect = j.value("elevation_effect", spec.elevation_effect);
    spec.driver_min = j.value("driver_min", spec.driver_min);
    spec.driver_max = j.value("driver_max", spec.driver_max);
    spec.band_wobble = j.value("band_wobble", spec.band_wobble);
    if (j.contains("plateau") || j.contains("steepness") || j.contains("midpoint")) {
        const auto plateau = j.at("plateau").get<std::vector<double>>();
        const auto steepness = j.at("steepness").get<std::vector<double>>();
        const auto midpoint = j.at("midpoint").get<std::vector<double>>();
        if (plateau.size() != 3 || steepness.size() != 3 || midpoint.size() != 3) {
            throw ParseError("plateau, steepness and midpoint need 3 entries");
        }
        for (std::size_t k = 0; k < 3; ++k) {
            spec.response[k] = {plateau[k], steepness[k], midpoint[k]};
        }
    }
    return spec;
}

nlohmann::json to_json(const SyntheticSpec& spec) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["height"] = spec.height;
    j["width"] = spec.width;
    j["cell_size_m"] = spec.cell_size_m;
    j["driver_feature"] = spec.driver_feature;
    j["plot_size"] = spec.plot_size;
    j["n_min"] = spec.n_min;
    j["n_max"] = spec.n_max;
    j["noise_sd"] = spec.noise_sd;
    j["base_yield"] = spec.base_yield;
    j["elevation_effect"] = spec.elevation_effect;
    j["driver_min"] = spec.driver_min;
    j["driver_max"] = spec.driver_max;
    j["band_wobble"] = spec.band_wobble;
    for (const auto& p : spec.response) {
        j["plateau"].push_back(p.plateau);
        j["steepness"].push_back(p.steepness);
        j["midpoint"].push_back(p.midpoint);
    }
    return j;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        nlohmann::json j;
        in >> j;
        return synthetic_spec_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void save_synthetic_spec(const std::filesystem::path& path, const SyntheticSpec& spec) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << to_json(spec).dump(2) << '\n';
}

// -- patches -------------------------------------------------------------------

bool patch_valid(const FieldRaster& field, Site origin) {
    return field.in_bounds(origin.row, origin.col) &&
           field.in_bounds(origin.row + kPatchSize - 1, origin.col + kPatchSize - 1) &&
           field.valid(origin.row + kPatchRadius, origin.col + kPatchRadius);
}

Patch make_patch(const FieldRaster& field, Site origin) {
    require(patch_valid(field, origin), fmt::format("no valid patch at origin ({}, {})", origin.row, origin.col));
    const int n = field.n_features();
    Patch p;
    p.origin = origin;
    p.n_features = n;
    p.cube.resize(static_cast<std::size_t>(kPatchCells * n));
    const auto& ranges = field.feature_ranges();
    for (int i = 0; i < kPatchSize; ++i) {
        for (int j = 0; j < kPatchSize; ++j) {
            const int r = origin.row + i;
            const int c = origin.col + j;
            if (field.valid(r, c)) {
                const auto cell = field.cell(r, c);
                std::copy(cell.begin(), cell.end(), p.cube.begin() + (i * kPatchSize + j) * n);
            } else {
                for (int s = 0; s < n; ++s) {
                    const auto& range = ranges[static_cast<std::size_t>(s)];
                    p.at(i, j, s) = 0.5 * (range.min + range.max);
                }
            }
        }
    }
    return p;
}

std::vector<Patch> extract_patches(const FieldRaster& field, const YieldRaster& yield) {
    require(field.height() >= kPatchSize && field.width() >= kPatchSize, "field is smaller than one 5x5 patch");
    require(yield.height == field.height() && yield.width == field.width(), "yield and field shapes differ");
    for (int r = 0; r < field.height(); ++r) {
        for (int c = 0; c < field.width(); ++c) {
            require(yield.valid(r, c) == field.valid(r, c),
                    fmt::format("yield and field masks differ at row {} column {}", r, c));
        }
    }
    std::vector<Patch> out;
    for (int r = 0; r + kPatchSize <= field.height(); ++r) {
        for (int c = 0; c + kPatchSize <= field.width(); ++c) {
            if (!patch_valid(field, {r, c})) {
                continue;
            }
            Patch p = make_patch(field, {r, c});
            p.target.resize(kPatchCells);
            p.target_valid.resize(kPatchCells);
            for (int i = 0; i < kPatchSize; ++i) {
                for (int j = 0; j < kPatchSize; ++j) {
                    const bool ok = yield.valid(r + i, c + j);
                    p.target_valid[static_cast<std::size_t>(i * kPatchSize + j)] = ok ? 1 : 0;
                    p.target[static_cast<std::size_t>(i * kPatchSize + j)] = ok ? yield.at(r + i, c + j) : 0.0;
                }
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

PatchSplit split_patches(std::vector<Patch> patches, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
    require(patches.size() >= 2, "need at least two patches to split");
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto total = static_cast<long>(patches.size());
    const long n_train = std::clamp(std::lround(fraction * static_cast<double>(total)), 1L, total - 1);
    PatchSplit split;
    split.train.reserve(static_cast<std::size_t>(n_train));
    split.validation.reserve(static_cast<std::size_t>(total - n_train));
    for (long k = 0; k < total; ++k) {
        auto& dst = k < n_train ? split.train : split.validation;
        dst.push_back(std::move(patches[order[static_cast<std::size_t>(k)]]));
    }
    return split;
}

SiteWindow window9(const FieldRaster& field, Site site) {
    if (!field.valid(site)) {
        throw PreconditionError(fmt::format("site ({}, {}) is masked out", site.row, site.col));
    }
    SiteWindow w;
    w.site = site;
    for (int dr = -kPatchRadius; dr <= kPatchRadius; ++dr) {
        for (int dc = -kPatchRadius; dc <= kPatchRadius; ++dc) {
            const Site origin{site.row + dr - kPatchRadius, site.col + dc - kPatchRadius};
            if (patch_valid(field, origin)) {
                w.patches.push_back(make_patch(field, origin));
            }
        }
    }
    return w;
}

}  // namespace rz

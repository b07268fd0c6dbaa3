#include "rz/response.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "rz/log.hpp"

namespace rz {

void NGrid::validate() const {
    require(std::isfinite(n_min) && std::isfinite(n_max) && n_min < n_max, "nitrogen grid needs n_min < n_max");
    require(n_min >= 0.0, "nitrogen rates cannot be negative");
    require(steps >= 2, "nitrogen grid needs at least two steps");
}

std::vector<double> NGrid::values() const {
    validate();
    std::vector<double> out(static_cast<std::size_t>(steps));
    const double step = (n_max - n_min) / static_cast<double>(steps - 1);
    for (int t = 0; t < steps; ++t) {
        out[static_cast<std::size_t>(t)] = t == steps - 1 ? n_max : n_min + step * t;
    }
    return out;
}

std::vector<double> CurveCube::curve(int i, int j) const {
    const auto begin = values.begin() + (i * kPatchSize + j) * steps;
    return {begin, begin + steps};
}

CurveCube sweep_patch(const PatchRegressor& model, std::span<const double> cube, const NGrid& grid) {
    const auto n_values = grid.values();
    return {grid.steps, model.sweep(cube, n_values)};
}

ResponseCurve window_curve(const PatchRegressor& model, const SiteWindow& window, const NGrid& grid) {
    if (window.patches.empty()) {
        throw PreconditionError(
            fmt::format("site ({}, {}) has no valid patch", window.site.row, window.site.col));
    }
    const auto n_values = grid.values();
    ResponseCurve out;
    out.site = window.site;
    out.values.assign(n_values.size(), 0.0);
    for (const Patch& p : window.patches) {
        const int i = window.site.row - p.origin.row;
        const int j = window.site.col - p.origin.col;
        require(i >= 0 && j >= 0 && i < kPatchSize && j < kPatchSize, "window patch does not cover its site");
        const auto curve = model.sweep_cell(p.cube, n_values, i * kPatchSize + j);
        for (std::size_t t = 0; t < curve.size(); ++t) {
            out.values[t] += curve[t];
        }
    }
    const auto count = static_cast<double>(window.patches.size());
    for (double& v : out.values) {
        v /= count;
    }
    return out;
}

ResponseCurve site_curve(const PatchRegressor& model, const FieldRaster& field, Site site, const NGrid& grid) {
    return window_curve(model, window9(field, site), grid);
}

ResponseCurve align(ResponseCurve curve) {
    if (curve.values.empty()) {
        curve.aligned = true;
        return curve;
    }
    const double lo = *std::min_element(curve.values.begin(), curve.values.end());
    for (double& v : curve.values) {
        v -= lo;
    }
    curve.aligned = true;
    return curve;
}

CurveSet field_curves(const PatchRegressor& model, const FieldRaster& field, const NGrid& grid) {
    CurveSet set;
    set.grid = grid.values();
    const auto sites = field.valid_sites();
    std::vector<ResponseCurve> slots(sites.size());
    std::vector<std::uint8_t> ok(sites.size(), 0);
    parallel_for(sites.size(), [&](std::size_t k) {
        const SiteWindow w = window9(field, sites[k]);
        if (w.patches.empty()) {
            return;
        }
        slots[k] = align(window_curve(model, w, grid));
        ok[k] = 1;
    });
    for (std::size_t k = 0; k < sites.size(); ++k) {
        if (ok[k] != 0) {
            set.curves.push_back(std::move(slots[k]));
        } else {
            set.skipped.push_back(sites[k]);
        }
    }
    if (!set.skipped.empty()) {
        log()->warn("stage=curves event=sites_skipped count={}", set.skipped.size());
    }
    if (set.curves.empty()) {
        throw PreconditionError("no site of the field has a valid 5x5 patch");
    }
    log()->info("stage=curves event=done sites={} steps={}", set.curves.size(), set.steps());
    return set;
}

void save_curves(const std::filesystem::path& path, const CurveSet& set) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    }
    out << "site_row,site_col";
    for (const double n : set.grid) {
        out << ',' << fmt::format("{}", n);
    }
    out << '\n';
    for (const auto& c : set.curves) {
        out << c.site.row << ',' << c.site.col;
        for (const double v : c.values) {
            out << ',' << fmt::format("{}", v);
        }
        out << '\n';
    }
}

namespace {

double to_double(const std::string& token, const std::filesystem::path& path, int line, std::size_t column) {
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto r = std::from_chars(token.data(), end, v);
    if (token.empty() || r.ec != std::errc{} || r.ptr != end) {
        throw ParseError(fmt::format("{}:{}: non-numeric value '{}' in column {}", path.string(), line, token, column));
    }
    return v;
}

}  // namespace

CurveSet load_curves(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(fmt::format("cannot open '{}'", path.string()));
    }
    CurveSet set;
    std::string line;
    int line_no = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> tokens;
        std::stringstream ss(line);
        std::string token;
        while (std::getline(ss, token, ',')) {
            tokens.push_back(token);
        }
        if (columns == 0) {
            if (tokens.size() < 4 || tokens[0] != "site_row" || tokens[1] != "site_col") {
                throw ParseError(fmt::format("{}:1: header must start with site_row,site_col and list the grid",
                                             path.string()));
            }
            columns = tokens.size();
            for (std::size_t k = 2; k < tokens.size(); ++k) {
                set.grid.push_back(to_double(tokens[k], path, line_no, k + 1));
            }
            continue;
        }
        if (tokens.size() != columns) {
            throw ParseError(fmt::format("{}:{}: {} columns, expected {}", path.string(), line_no, tokens.size(),
                                         columns));
        }
        ResponseCurve c;
        c.site = {static_cast<int>(to_double(tokens[0], path, line_no, 1)),
                  static_cast<int>(to_double(tokens[1], path, line_no, 2))};
        for (std::size_t k = 2; k < tokens.size(); ++k) {
            c.values.push_back(to_double(tokens[k], path, line_no, k + 1));
        }
        const double lo = *std::min_element(c.values.begin(), c.values.end());
        c.aligned = lo == 0.0;
        set.curves.push_back(std::move(c));
    }
    if (columns == 0) {
        throw ParseError(fmt::format("{}: empty curve file", path.string()));
    }
    return set;
}

}  // namespace rz

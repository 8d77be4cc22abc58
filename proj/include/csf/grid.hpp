#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "csf/form.hpp"

namespace csf {

/// A region removed from a sample grid: either the half-open coordinate band
/// lo <= x < hi, or the set where an expression is negative.
struct Exclusion {
    std::string coord;  // band form when non-empty
    double lo = 0.0;
    double hi = 0.0;
    Expr negative_region;  // used when coord is empty

    static Exclusion band(std::string c, double lo, double hi) { return {std::move(c), lo, hi, Expr()}; }
    static Exclusion where_negative(Expr g) { return {"", 0.0, 0.0, std::move(g)}; }
};

inline constexpr int kDefaultResolution = 15;
inline constexpr std::size_t kDefaultPointCap = 200000;
inline constexpr double kPolarCutoff = 0.05;

/// Coordinates named r, r1, r2, ... are treated as polar radii.
inline bool is_polar_radius(const std::string& name) {
    if (name.empty() || name[0] != 'r') return false;
    return std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

/// Polar radii get the band r < 0.05 removed by default.
inline std::vector<Exclusion> default_exclusions(const Chart& chart) {
    std::vector<Exclusion> out;
    for (std::size_t i = 0; i < chart.dim(); ++i)
        if (is_polar_radius(chart.coord(i)) && chart.bounds()[i].lo < kPolarCutoff)
            out.push_back(Exclusion::band(chart.coord(i), chart.bounds()[i].lo, kPolarCutoff));
    return out;
}

/// Tensor-product sample points over a chart box minus exclusions. Periodic
/// axes are sampled without the duplicate endpoint.
class SampleGrid {
public:
    SampleGrid() = default;

    SampleGrid(Chart chart, std::vector<int> resolution, std::vector<Exclusion> exclusions = {},
               std::size_t cap = kDefaultPointCap)
        : chart_(std::move(chart)), resolution_(std::move(resolution)), exclusions_(std::move(exclusions)) {
        if (resolution_.size() != chart_.dim()) throw Error("grid resolution needs one count per coordinate");
        for (int& n : resolution_)
            if (n < 1) throw Error("grid resolution must be positive");
        apply_cap(cap);
        build();
    }

    /// n points per axis (capped), with the chart's default exclusions added.
    static SampleGrid uniform(const Chart& chart, int n = kDefaultResolution, std::vector<Exclusion> extra = {},
                              std::size_t cap = kDefaultPointCap) {
        std::vector<Exclusion> ex = default_exclusions(chart);
        ex.insert(ex.end(), extra.begin(), extra.end());
        return SampleGrid(chart, std::vector<int>(chart.dim(), n), std::move(ex), cap);
    }

    const Chart& chart() const { return chart_; }
    const std::vector<int>& resolution() const { return resolution_; }
    const std::vector<Exclusion>& exclusions() const { return exclusions_; }
    std::size_t size() const { return count_; }
    std::size_t dim() const { return chart_.dim(); }

    std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim(), dim()}; }
    Point point_vector(std::size_t i) const {
        auto p = point(i);
        return {p.begin(), p.end()};
    }

    const std::vector<double>& axis(std::size_t k) const { return axes_.at(k); }

    bool excluded(std::span<const double> p) const {
        for (std::size_t e = 0; e < exclusions_.size(); ++e) {
            const Exclusion& ex = exclusions_[e];
            if (!ex.coord.empty()) {
                const std::size_t k = chart_.index_of(ex.coord);
                const double v = p[k];
                auto in = [&](double x) { return ex.lo <= x && x < ex.hi; };
                if (in(v) || (chart_.periodic()[k] && (in(v - kTwoPi) || in(v + kTwoPi)))) return true;
            } else if (region_tapes_[e](p) < 0.0) {
                return true;
            }
        }
        return false;
    }

private:
    void apply_cap(std::size_t cap) {
        auto total = [&] {
            double t = 1.0;
            for (int n : resolution_) t *= n;
            return t;
        };
        if (cap == 0 || total() <= static_cast<double>(cap)) return;
        const double f = std::pow(static_cast<double>(cap) / total(), 1.0 / static_cast<double>(resolution_.size()));
        for (int& n : resolution_) n = std::max(2, static_cast<int>(std::floor(n * f)));
        while (total() > static_cast<double>(cap)) {
            auto it = std::max_element(resolution_.begin(), resolution_.end());
            if (*it <= 2) break;
            --*it;
        }
    }

    void build() {
        const std::size_t n = dim();
        axes_.assign(n, {});
        for (std::size_t k = 0; k < n; ++k) {
            const Interval b = chart_.bounds()[k];
            const int m = resolution_[k];
            auto& ax = axes_[k];
            if (chart_.periodic()[k]) {
                for (int i = 0; i < m; ++i) ax.push_back(b.lo + b.length() * i / m);
            } else if (m == 1) {
                ax.push_back(0.5 * (b.lo + b.hi));
            } else {
                for (int i = 0; i < m; ++i) ax.push_back(b.lo + b.length() * i / (m - 1));
            }
        }
        region_tapes_.clear();
        for (const Exclusion& ex : exclusions_) {
            if (ex.coord.empty())
                region_tapes_.emplace_back(ex.negative_region, chart_.coords());
            else
                region_tapes_.emplace_back();
        }
        std::size_t total = 1;
        for (int m : resolution_) total *= static_cast<std::size_t>(m);
        std::vector<double> p(n);
        std::vector<std::size_t> idx(n, 0);
        coords_.clear();
        count_ = 0;
        for (std::size_t flat = 0; flat < total; ++flat) {
            for (std::size_t k = 0; k < n; ++k) p[k] = axes_[k][idx[k]];
            if (!excluded(p)) {
                coords_.insert(coords_.end(), p.begin(), p.end());
                ++count_;
            }
            for (std::size_t k = n; k-- > 0;) {
                if (++idx[k] < static_cast<std::size_t>(resolution_[k])) break;
                idx[k] = 0;
            }
        }
        if (count_ == 0) throw Error("sample grid on '" + chart_.name() + "' is empty after exclusions");
    }

    Chart chart_;
    std::vector<int> resolution_;
    std::vector<Exclusion> exclusions_;
    std::vector<Tape> region_tapes_;
    std::vector<std::vector<double>> axes_;
    std::vector<double> coords_;
    std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------

struct ScanResult {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    std::size_t argmin = 0;
    std::size_t argmax = 0;
    std::size_t count = 0;
    bool finite = true;
};

/// Data-parallel scan of f over all grid points. Chunks are reduced in
/// order, so the result (including ties in argmin) is deterministic.
inline ScanResult scan(const SampleGrid& grid, const std::function<double(std::span<const double>)>& f) {
    const std::size_t n = grid.size();
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t chunks = std::min<std::size_t>(hw, std::max<std::size_t>(1, n / 512));
    std::vector<ScanResult> partial(chunks);
    auto work = [&](std::size_t c) {
        ScanResult r;
        const std::size_t lo = n * c / chunks, hi = n * (c + 1) / chunks;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = f(grid.point(i));
            if (!std::isfinite(v)) {
                if (r.finite) {
                    r.finite = false;
                    r.min = -std::numeric_limits<double>::infinity();
                    r.argmin = i;
                }
                continue;
            }
            if (v < r.min && r.finite) {
                r.min = v;
                r.argmin = i;
            }
            if (v > r.max) {
                r.max = v;
                r.argmax = i;
            }
            ++r.count;
        }
        partial[c] = r;
    };
    if (chunks == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t c = 0; c < chunks; ++c) threads.emplace_back(work, c);
        for (auto& t : threads) t.join();
    }
    ScanResult out;
    for (const ScanResult& r : partial) {
        if (!r.finite && out.finite) {
            out.finite = false;
            out.min = r.min;
            out.argmin = r.argmin;
        }
        if (out.finite && r.min < out.min) {
            out.min = r.min;
            out.argmin = r.argmin;
        }
        if (r.max > out.max) {
            out.max = r.max;
            out.argmax = r.argmax;
        }
        out.count += r.count;
    }
    return out;
}

/// Maximum absolute coefficient of a form over the grid.
inline double max_coefficient(const DifferentialForm& a, const SampleGrid& grid) {
    std::vector<Tape> tapes;
    for (const auto& [m, c] : a.terms()) tapes.emplace_back(c, grid.chart().coords());
    if (tapes.empty()) return 0.0;
    ScanResult r = scan(grid, [&](std::span<const double> p) {
        double best = 0.0;
        for (const Tape& t : tapes) best = std::max(best, std::abs(t(p)));
        return best;
    });
    return r.max;
}

/// Largest absolute coefficient of a - b over the grid.
inline double form_distance(const DifferentialForm& a, const DifferentialForm& b, const SampleGrid& grid) {
    const DifferentialForm diff = a - b;
    return diff.is_zero() ? 0.0 : max_coefficient(diff, grid);
}

// ---------------------------------------------------------------------------

struct GridInfo {
    std::string chart;
    std::vector<int> resolution;
    std::size_t points = 0;

    static GridInfo of(const SampleGrid& g) { return {g.chart().name(), g.resolution(), g.size()}; }
};

/// Outcome of a positivity scan. passed holds exactly when min_value > threshold.
struct PositivityReport {
    std::string label;
    double min_value = 0.0;
    Point argmin_point;
    double max_value = 0.0;
    double raw_min = 0.0;        // before normalization
    double normalization = 1.0;  // divisor applied to the raw values
    GridInfo grid;
    double threshold = 0.0;
    bool passed = false;
    std::optional<double> t;  // family parameter of the argmin, when relevant
    std::string message;
    std::map<std::string, double> details;  // named sub-results

    void finalize() { passed = std::isfinite(min_value) && min_value > threshold; }
};

}  // namespace csf

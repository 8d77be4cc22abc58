#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csf/error.hpp"

namespace csf {

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    double length() const noexcept { return hi - lo; }
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// A coordinate domain: an ordered list of named coordinates over a box.
/// Periodic coordinates are angles with period 2*pi. The orientation sign
/// states whether the coordinate order is positively oriented.
class Chart {
public:
    static constexpr std::size_t kMaxDim = 31;

    Chart() = default;

    Chart(std::string name, std::vector<std::string> coords, std::vector<Interval> bounds,
          std::vector<bool> periodic = {}, int orientation = 1) {
        auto d = std::make_shared<Data>();
        d->name = std::move(name);
        d->coords = std::move(coords);
        d->bounds = std::move(bounds);
        d->periodic = periodic.empty() ? std::vector<bool>(d->coords.size(), false) : std::move(periodic);
        d->orientation = orientation;
        validate(*d);
        data_ = std::move(d);
    }

    const std::string& name() const { return data().name; }
    std::size_t dim() const { return data().coords.size(); }
    const std::vector<std::string>& coords() const { return data().coords; }
    const std::string& coord(std::size_t i) const { return data().coords.at(i); }
    const std::vector<Interval>& bounds() const { return data().bounds; }
    const std::vector<bool>& periodic() const { return data().periodic; }
    int orientation() const { return data().orientation; }
    bool valid() const noexcept { return static_cast<bool>(data_); }

    std::optional<std::size_t> find(const std::string& coord) const {
        const auto& c = data().coords;
        for (std::size_t i = 0; i < c.size(); ++i)
            if (c[i] == coord) return i;
        return std::nullopt;
    }

    std::size_t index_of(const std::string& coord) const {
        if (auto i = find(coord)) return *i;
        throw ChartError("'" + coord + "' is not a coordinate of chart '" + name() + "'");
    }

    bool has(const std::string& coord) const { return find(coord).has_value(); }

    Chart with_orientation(int sign) const {
        return Chart(name(), coords(), bounds(), periodic(), sign);
    }

    Chart with_name(std::string n) const { return Chart(std::move(n), coords(), bounds(), periodic(), orientation()); }

    /// Same coordinates over a sub-box; a narrowed periodic coordinate is no
    /// longer periodic.
    Chart restricted(std::string n, const std::vector<Interval>& sub) const {
        if (sub.size() != dim()) throw ChartError("restriction of '" + name() + "' needs one interval per coordinate");
        std::vector<bool> per = periodic();
        for (std::size_t i = 0; i < dim(); ++i)
            if (per[i] && std::abs(sub[i].length() - kTwoPi) > 1e-12) per[i] = false;
        return Chart(std::move(n), coords(), sub, per, orientation());
    }

    friend bool operator==(const Chart& a, const Chart& b) {
        if (a.data_ == b.data_) return true;
        if (!a.data_ || !b.data_) return false;
        return a.name() == b.name() && a.coords() == b.coords() && a.orientation() == b.orientation();
    }
    friend bool operator!=(const Chart& a, const Chart& b) { return !(a == b); }

private:
    struct Data {
        std::string name;
        std::vector<std::string> coords;
        std::vector<Interval> bounds;
        std::vector<bool> periodic;
        int orientation = 1;
    };

    const Data& data() const {
        if (!data_) throw ChartError("use of an uninitialized chart");
        return *data_;
    }

    static void validate(const Data& d) {
        const std::size_t n = d.coords.size();
        if (n == 0) throw ChartError("chart '" + d.name + "' has no coordinates");
        if (n > kMaxDim) throw ChartError("chart '" + d.name + "' exceeds the supported dimension");
        if (d.bounds.size() != n || d.periodic.size() != n)
            throw ChartError("chart '" + d.name + "': coords, bounds and periodic flags differ in length");
        if (d.orientation != 1 && d.orientation != -1)
            throw ChartError("chart '" + d.name + "': orientation sign must be +1 or -1");
        for (std::size_t i = 0; i < n; ++i) {
            if (d.coords[i].empty()) throw ChartError("chart '" + d.name + "' has an empty coordinate name");
            for (std::size_t j = 0; j < i; ++j)
                if (d.coords[i] == d.coords[j])
                    throw ChartError("chart '" + d.name + "' repeats coordinate '" + d.coords[i] + "'");
            if (!(d.bounds[i].lo < d.bounds[i].hi))
                throw ChartError("chart '" + d.name + "': empty interval for '" + d.coords[i] + "'");
            if (d.periodic[i] && std::abs(d.bounds[i].length() - kTwoPi) > 1e-12)
                throw ChartError("chart '" + d.name + "': periodic coordinate '" + d.coords[i] +
                                 "' must span 2*pi");
        }
    }

    std::shared_ptr<const Data> data_;
};

/// Product chart A x B; coordinate names must be disjoint.
inline Chart product(const Chart& a, const Chart& b, std::string name = {}) {
    std::vector<std::string> coords = a.coords();
    std::vector<Interval> bounds = a.bounds();
    std::vector<bool> per = a.periodic();
    for (std::size_t i = 0; i < b.dim(); ++i) {
        if (a.has(b.coord(i)))
            throw ChartError("product of '" + a.name() + "' and '" + b.name() + "' shares coordinate '" +
                             b.coord(i) + "'");
        coords.push_back(b.coord(i));
        bounds.push_back(b.bounds()[i]);
        per.push_back(b.periodic()[i]);
    }
    if (name.empty()) name = a.name() + "x" + b.name();
    return Chart(std::move(name), std::move(coords), std::move(bounds), std::move(per),
                 a.orientation() * b.orientation());
}

}  // namespace csf

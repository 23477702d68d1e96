#include "unlearn/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn::vec {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a) +
                                    " vs " + std::to_string(b));
    }
}

} // namespace

void axpy(double a, std::span<const double> x, std::span<double> y) {
    require_same_size(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
    require_same_size(x.size(), y.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double max_abs(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

double distance(std::span<const double> x, std::span<const double> y) {
    require_same_size(x.size(), y.size(), "distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double cosine(std::span<const double> x, std::span<const double> y) {
    const double nx = norm(x);
    const double ny = norm(y);
    if (nx == 0.0 && ny == 0.0) return 1.0;
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

} // namespace unlearn::vec

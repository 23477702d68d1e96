#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace unlearn {

/// Flat, ordered view of every model parameter (per layer: weights row-major,
/// then biases). All unlearning updates are arithmetic on this type.
struct ParamVector {
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
    explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<double> span() noexcept { return values; }
    std::span<const double> span() const noexcept { return values; }

    bool operator==(const ParamVector&) const = default;
};

/// Gradient aligned with a ParamVector ordering.
struct GradientVector {
    std::vector<double> values;

    GradientVector() = default;
    explicit GradientVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
    explicit GradientVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<double> span() noexcept { return values; }
    std::span<const double> span() const noexcept { return values; }

    bool operator==(const GradientVector&) const = default;
};

namespace vec {

/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);
double max_abs(std::span<const double> x);
/// ||x - y||_2
double distance(std::span<const double> x, std::span<const double> y);
/// Cosine similarity; 1 when both vectors are exactly zero, 0 when only one is.
double cosine(std::span<const double> x, std::span<const double> y);
bool all_finite(std::span<const double> x);

} // namespace vec

} // namespace unlearn

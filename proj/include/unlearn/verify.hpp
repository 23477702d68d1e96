#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "unlearn/data.hpp"
#include "unlearn/model.hpp"

namespace unlearn::verify {

/// L^f = ½(θ-a)ᵀA(θ-a), L^r = ½(θ-b)ᵀB(θ-b); the remain optimum is b.
struct QuadraticTestbed {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    double eps = 1.0;  // weight on L^f
    double p_f = 0.5;

    void validate() const;
    /// argmin L^r + eps·L^f = (B + eps A)^-1 (B b + eps A a).
    Eigen::VectorXd weighted_optimum() const;
};

/// Random SPD pair, minimizers, eps and p_f, all from `seed`.
QuadraticTestbed random_testbed(std::uint64_t seed, int dim);
/// A = diag(2,1), B = diag(1,3), a = (1,0), b = (0,1), eps = 1, p_f = 0.4.
QuadraticTestbed diagonal_testbed();

struct DirectionCheckResult {
    double cosine = 1.0;
    double rel_norm_err = 0.0;
    double residual = 0.0;
};

struct DistributionPair {
    std::vector<double> p;
    std::vector<double> q;
};

/// |KL(M || M') - (p_f KL_f + (1 - p_f) KL_r)| where M, M' place the forget and
/// remain components on disjoint supports with weights p_f and 1 - p_f.
double check_kl_mixture(const DistributionPair& forget, const DistributionPair& remain, double p_f);

/// Steepest-descent direction built from the forgetting and remaining
/// gradients versus the exact gradient of the mixed output-KL objective.
DirectionCheckResult check_prop1_quadratic(const QuadraticTestbed& tb);

/// Remain-metric steepest descent versus the closed-form minimizer of the
/// linearized forgetting term plus the quadratic proximal terms. The residual
/// also covers the identity d = B^-1 f / (alpha p_r + 1).
DirectionCheckResult check_prop2_quadratic(const QuadraticTestbed& tb, double alpha);

/// alpha p_f / (alpha p_r + 1).
double scaled_step(double alpha, double p_f);

/// One masked fast ascent step then one remaining step. Realized displacement
/// θ - θ^r against β_f (I - β_r H_r) g_u + β_r g_r with g_u = -(m ⊙ ∇L^f(θ; ε)).
/// `residual` is the absolute norm error.
DirectionCheckResult check_fast_slow_direction(std::span<const double> theta,
                                               const ModelConfig& model, const Dataset& data,
                                               std::span<const std::size_t> forget_rows,
                                               std::span<const std::size_t> remain_rows,
                                               double beta_f, double beta_r,
                                               std::span<const double> mask,
                                               std::span<const double> coefficients);

/// Max over seeds of ||backward - finite differences|| / max(||backward||, ||fd||).
double check_gradients(const ModelConfig& model, std::span<const std::uint64_t> seeds);

/// Small blobs problem shared by the fast-slow checks.
struct FastSlowFixture {
    ModelConfig model;
    Dataset data;
    std::vector<std::size_t> forget;
    std::vector<std::size_t> remain;
    std::vector<double> theta;
    std::vector<double> mask;
    std::vector<double> coefficients;
};

FastSlowFixture make_fast_slow_fixture(std::uint64_t seed);

struct BetaScaling {
    std::vector<double> betas;
    std::vector<double> rel_errors;      // β_f = β_r = β
    std::vector<double> joint_ratios;    // successive rel_error ratios
    std::vector<double> abs_errors_r;    // β_f fixed, β_r = β
    std::vector<double> remain_only_ratios;
};

BetaScaling fast_slow_beta_scaling(const FastSlowFixture& fx, std::span<const double> betas);

/// Runs one suite: grad | prop1 | prop2 | fastslow | klmix | all. Each entry is
/// {check_name, pass, residuals}.
nlohmann::json run_suite(const std::string& suite);
bool suite_passed(const nlohmann::json& report);
const std::vector<std::string>& suite_names();

} // namespace unlearn::verify

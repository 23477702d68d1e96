#pragma once

// Dense inner loops behind the autodiff engine and the per-sample sweeps.
//
// Every kernel exists twice: a serial reference and an OpenMP version. Both
// compute each output element with the same single-threaded reduction in the
// same order, so the two are bit-identical; tests assert this and
// bench_kernels measures the difference in speed.

#include <cstddef>
#include <functional>
#include <span>

namespace unlearn::kernels {

enum class Backend { serial, parallel };

/// Backend used by the tape and the per-sample sweeps. Defaults to parallel.
Backend default_backend() noexcept;
void set_default_backend(Backend backend) noexcept;

/// y[B,O] = x[B,I] * w[I,O] + b[O]
void affine_forward(Backend backend, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t batch,
                    std::size_t in, std::size_t out);

/// dx[B,I] += dy[B,O] * w[I,O]^T
void affine_backward_input(Backend backend, std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t batch, std::size_t in,
                           std::size_t out);

/// dw[I,O] += x[B,I]^T * dy[B,O];  db[O] += sum over rows of dy
void affine_backward_params(Backend backend, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t batch,
                            std::size_t in, std::size_t out);

/// Runs `body(i)` for i in [0, count). The parallel backend distributes
/// iterations across threads; callers must make iterations independent.
void for_each_index(Backend backend, std::size_t count,
                    const std::function<void(std::size_t)>& body);

} // namespace unlearn::kernels

#include "unlearn/kernels.hpp"

#include <atomic>
#include <cstdint>
#include <exception>

namespace unlearn::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::parallel};

// One output row of the forward pass. Shared by both backends so that the
// per-element reduction order (ascending k) is identical.
inline void forward_row(const double* xr, const double* w, const double* b, double* yr,
                        std::size_t in, std::size_t out) {
    for (std::size_t c = 0; c < out; ++c) yr[c] = 0.0;
    for (std::size_t k = 0; k < in; ++k) {
        const double xk = xr[k];
        const double* wk = w + k * out;
        for (std::size_t c = 0; c < out; ++c) yr[c] += xk * wk[c];
    }
    for (std::size_t c = 0; c < out; ++c) yr[c] += b[c];
}

inline void backward_input_row(const double* dyr, const double* w, double* dxr, std::size_t in,
                               std::size_t out) {
    for (std::size_t k = 0; k < in; ++k) {
        const double* wk = w + k * out;
        double acc = 0.0;
        for (std::size_t c = 0; c < out; ++c) acc += dyr[c] * wk[c];
        dxr[k] += acc;
    }
}

// Row k of dw: sum over the batch in ascending row order.
inline void backward_weight_row(const double* x, const double* dy, double* dwk, std::size_t k,
                                std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t r = 0; r < batch; ++r) {
        const double xrk = x[r * in + k];
        const double* dyr = dy + r * out;
        for (std::size_t c = 0; c < out; ++c) dwk[c] += xrk * dyr[c];
    }
}

inline void backward_bias(const double* dy, double* db, std::size_t batch, std::size_t out) {
    for (std::size_t r = 0; r < batch; ++r) {
        const double* dyr = dy + r * out;
        for (std::size_t c = 0; c < out; ++c) db[c] += dyr[c];
    }
}

} // namespace

Backend default_backend() noexcept { return g_backend.load(std::memory_order_relaxed); }

void set_default_backend(Backend backend) noexcept {
    g_backend.store(backend, std::memory_order_relaxed);
}

void affine_forward(Backend backend, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y, std::size_t batch,
                    std::size_t in, std::size_t out) {
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.data();
    double* yp = y.data();
    const auto n = static_cast<std::int64_t>(batch);
    if (backend == Backend::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < n; ++r) {
            forward_row(xp + r * in, wp, bp, yp + r * out, in, out);
        }
    } else {
        for (std::int64_t r = 0; r < n; ++r) {
            forward_row(xp + r * in, wp, bp, yp + r * out, in, out);
        }
    }
}

void affine_backward_input(Backend backend, std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t batch, std::size_t in,
                           std::size_t out) {
    const double* dyp = dy.data();
    const double* wp = w.data();
    double* dxp = dx.data();
    const auto n = static_cast<std::int64_t>(batch);
    if (backend == Backend::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < n; ++r) {
            backward_input_row(dyp + r * out, wp, dxp + r * in, in, out);
        }
    } else {
        for (std::int64_t r = 0; r < n; ++r) {
            backward_input_row(dyp + r * out, wp, dxp + r * in, in, out);
        }
    }
}

void affine_backward_params(Backend backend, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t batch,
                            std::size_t in, std::size_t out) {
    const double* xp = x.data();
    const double* dyp = dy.data();
    double* dwp = dw.data();
    const auto n_in = static_cast<std::int64_t>(in);
    if (backend == Backend::parallel) {
#pragma omp parallel
        {
#pragma omp for schedule(static) nowait
            for (std::int64_t k = 0; k < n_in; ++k) {
                backward_weight_row(xp, dyp, dwp + k * out, static_cast<std::size_t>(k), batch, in,
                                    out);
            }
#pragma omp single nowait
            backward_bias(dyp, db.data(), batch, out);
        }
    } else {
        for (std::int64_t k = 0; k < n_in; ++k) {
            backward_weight_row(xp, dyp, dwp + k * out, static_cast<std::size_t>(k), batch, in,
                                out);
        }
        backward_bias(dyp, db.data(), batch, out);
    }
}

void for_each_index(Backend backend, std::size_t count,
                    const std::function<void(std::size_t)>& body) {
    const auto n = static_cast<std::int64_t>(count);
    if (backend == Backend::parallel) {
        // Exceptions must not escape an OpenMP region; rethrow the first one.
        std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
        for (std::int64_t i = 0; i < n; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(unlearn_for_each_failure)
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
    } else {
        for (std::int64_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
    }
}

} // namespace unlearn::kernels

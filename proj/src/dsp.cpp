#include "dopcc/dsp.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

namespace dopcc {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
struct PlanCache {
    std::mutex mutex;
    std::map<std::pair<int, int>, fftw_plan> plans;

    fftw_plan get(int n, int sign) {
        std::lock_guard lock(mutex);
        auto& plan = plans[{n, sign}];
        if (plan == nullptr) {
            auto* in = fftw_alloc_complex(static_cast<std::size_t>(n));
            auto* out = fftw_alloc_complex(static_cast<std::size_t>(n));
            plan = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
            fftw_free(in);
            fftw_free(out);
        }
        return plan;
    }

    ~PlanCache() {
        for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
    }
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

std::vector<cplx> transform(std::vector<cplx> data, int sign) {
    const int n = static_cast<int>(data.size());
    if (n == 0) return data;
    std::vector<cplx> out(data.size());
    fftw_plan plan = plan_cache().get(n, sign);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(data.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

}  // namespace

std::vector<cplx> inverse_dft(std::span<const std::complex<float>> spectrum) {
    std::vector<cplx> promoted(spectrum.begin(), spectrum.end());
    return inverse_dft(std::span<const cplx>(promoted));
}

std::vector<cplx> inverse_dft(std::span<const cplx> spectrum) {
    auto out = transform(std::vector<cplx>(spectrum.begin(), spectrum.end()), FFTW_BACKWARD);
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto& v : out) v *= scale;
    return out;
}

std::vector<cplx> forward_dft(std::span<const cplx> signal) {
    return transform(std::vector<cplx>(signal.begin(), signal.end()), FFTW_FORWARD);
}

std::size_t strongest_tap(std::span<const cplx> cir) {
    std::size_t best = 0;
    double best_power = -1.0;
    for (std::size_t i = 0; i < cir.size(); ++i) {
        const double p = std::norm(cir[i]);
        if (p > best_power) {
            best_power = p;
            best = i;
        }
    }
    return best;
}

std::vector<cplx> rotate_cyclic(std::span<const cplx> in, long shift) {
    const long n = static_cast<long>(in.size());
    std::vector<cplx> out(in.size());
    if (n == 0) return out;
    const long s = ((shift % n) + n) % n;
    for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>((i + s) % n)];
    return out;
}

cplx centered_cir_at(std::span<const std::complex<float>> spectrum, double nu) {
    const std::size_t n = spectrum.size();
    const double half = static_cast<double>(n / 2);
    const double turn = 2.0 * std::numbers::pi * nu / static_cast<double>(n);
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = turn * (static_cast<double>(k) - half);
        acc += cplx(spectrum[k]) * cplx(std::cos(angle), std::sin(angle));
    }
    return acc / static_cast<double>(n);
}

}  // namespace dopcc

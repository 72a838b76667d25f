#include "isac/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace isac {

namespace {

// FFTW planning is not thread-safe; execution with new-array is. Plans use
// FFTW_ESTIMATE so planning is deterministic and cheap, and FFTW_UNALIGNED so
// new-array execution accepts caller buffers of any alignment.
class PlanCache {
public:
    static fftw_plan get(std::size_t n, int sign) {
        static PlanCache cache;
        std::scoped_lock lock(cache.mutex_);
        auto key = std::make_pair(n, sign);
        auto it = cache.plans_.find(key);
        if (it != cache.plans_.end()) return it->second;

        std::vector<Complex> tmp_in(n), tmp_out(n);
        fftw_plan plan = fftw_plan_dft_1d(
            static_cast<int>(n), reinterpret_cast<fftw_complex*>(tmp_in.data()),
            reinterpret_cast<fftw_complex*>(tmp_out.data()), sign,
            FFTW_ESTIMATE | FFTW_UNALIGNED);
        cache.plans_.emplace(key, plan);
        return plan;
    }

private:
    PlanCache() = default;
    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

void execute(const Complex* in, Complex* out, std::size_t n, int sign) {
    if (n == 0) return;
    fftw_plan plan = PlanCache::get(n, sign);
    // fftw_execute_dft does not modify the input for out-of-place plans.
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
}

}  // namespace

void fft_forward(const Complex* in, Complex* out, std::size_t n) {
    execute(in, out, n, FFTW_FORWARD);
}

void fft_inverse(const Complex* in, Complex* out, std::size_t n) {
    execute(in, out, n, FFTW_BACKWARD);
}

std::vector<Complex> fft_forward(const std::vector<Complex>& in) {
    std::vector<Complex> out(in.size());
    fft_forward(in.data(), out.data(), in.size());
    return out;
}

std::vector<Complex> fft_inverse(const std::vector<Complex>& in) {
    std::vector<Complex> out(in.size());
    fft_inverse(in.data(), out.data(), in.size());
    return out;
}

}  // namespace isac

// Thin FFTW wrapper: 3D complex-to-complex double transforms with a
// per-resolution plan cache. Plans use FFTW_ESTIMATE so plan selection
// (and hence bit-level output) is reproducible across runs.

#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace meshforge {

// Complex r³ grid with the same (z,y,x) layout as ScalarGrid.
struct ComplexGrid {
  int res = 0;
  std::vector<std::complex<double>> values;

  explicit ComplexGrid(int r = 0) : res(r), values(size_t(r) * r * r) {}
  size_t idx(int x, int y, int z) const { return (size_t(z) * res + y) * res + x; }
  std::complex<double>& at(int x, int y, int z) { return values[idx(x, y, z)]; }
  const std::complex<double>& at(int x, int y, int z) const { return values[idx(x, y, z)]; }
};

class Fft3 {
 public:
  // Unnormalized forward DFT (e^{-2πi u·x/r}), in place.
  static void forward(ComplexGrid& g) { execute(g, FFTW_FORWARD); }

  // Unnormalized backward DFT (e^{+2πi u·x/r}), in place. Divide by r³ for
  // the inverse transform.
  static void backward(ComplexGrid& g) { execute(g, FFTW_BACKWARD); }

  // Signed integer frequency for index a on an axis of length r.
  static int freq(int a, int r) { return a <= r / 2 ? a : a - r; }

 private:
  static void execute(ComplexGrid& g, int sign) {
    if (g.res <= 0) throw std::runtime_error("Fft3: empty grid");
    fftw_plan plan = get_plan(g.res, sign);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(g.values.data()),
                     reinterpret_cast<fftw_complex*>(g.values.data()));
  }

  static fftw_plan get_plan(int r, int sign) {
    static std::map<std::pair<int, int>, fftw_plan> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_pair(r, sign);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    // FFTW_ESTIMATE does not touch the buffer while planning, so an aligned
    // scratch allocation is enough to build a reusable in-place plan.
    std::vector<std::complex<double>> scratch(size_t(r) * r * r);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan =
        fftw_plan_dft_3d(r, r, r, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw std::runtime_error("Fft3: planning failed");
    cache[key] = plan;
    return plan;
  }
};

}  // namespace meshforge

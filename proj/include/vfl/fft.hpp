#pragma once

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

#include "vfl/core.hpp"

namespace vfl {

// Square 2-D transforms of side M. Plans are built once per size with
// FFTW_ESTIMATE, which keeps plan choice (and so rounding) deterministic.
// Planning is serialized; executing a plan on caller-owned aligned buffers is
// thread-safe.
class Fft2d {
 public:
  explicit Fft2d(int m) : m_(m) {}

  int size() const { return m_; }

  // out[k] = sum_j in[j] exp(-2 pi i k.j / M), unnormalized.
  void forward(const ComplexBuffer& in, ComplexBuffer& out) const {
    check(in.size(), out.size(), n());
    fftw_execute_dft(plans().c2c_forward, cast(in.data()), cast(out.data()));
  }

  // out[j] = sum_k in[k] exp(+2 pi i k.j / M), unnormalized.
  void inverse(const ComplexBuffer& in, ComplexBuffer& out) const {
    check(in.size(), out.size(), n());
    fftw_execute_dft(plans().c2c_backward, cast(in.data()), cast(out.data()));
  }

  // Real input of M*M values to M*(M/2+1) half-spectrum.
  void forward_real(const RealBuffer& in, ComplexBuffer& out) const {
    if (in.size() != n() || out.size() != half_n())
      throw InvalidInput("fft: half-spectrum size mismatch");
    fftw_execute_dft_r2c(plans().r2c, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  // Half-spectrum to M*M real values. Clobbers `in`.
  void inverse_real(ComplexBuffer& in, RealBuffer& out) const {
    if (in.size() != half_n() || out.size() != n())
      throw InvalidInput("fft: half-spectrum size mismatch");
    fftw_execute_dft_c2r(plans().c2r, reinterpret_cast<fftw_complex*>(in.data()),
                         out.data());
  }

  std::size_t n() const { return static_cast<std::size_t>(m_) * m_; }
  std::size_t half_n() const { return static_cast<std::size_t>(m_) * (m_ / 2 + 1); }

 private:
  struct PlanSet {
    fftw_plan c2c_forward = nullptr;
    fftw_plan c2c_backward = nullptr;
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
  };

  static void check(std::size_t a, std::size_t b, std::size_t n) {
    if (a != n || b != n) throw InvalidInput("fft: buffer size mismatch");
  }
  static fftw_complex* cast(const complex* p) {
    return reinterpret_cast<fftw_complex*>(const_cast<complex*>(p));
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  const PlanSet& plans() const {
    if (cached_) return *cached_;
    std::lock_guard lock(planner_mutex());
    static std::map<int, PlanSet> cache;
    auto it = cache.find(m_);
    if (it == cache.end()) {
      PlanSet p;
      ComplexBuffer a(n()), b(n());
      RealBuffer r(n());
      ComplexBuffer h(half_n());
      p.c2c_forward = fftw_plan_dft_2d(m_, m_, cast(a.data()), cast(b.data()),
                                       FFTW_FORWARD, FFTW_ESTIMATE);
      p.c2c_backward = fftw_plan_dft_2d(m_, m_, cast(a.data()), cast(b.data()),
                                        FFTW_BACKWARD, FFTW_ESTIMATE);
      p.r2c = fftw_plan_dft_r2c_2d(m_, m_, r.data(), cast(h.data()), FFTW_ESTIMATE);
      p.c2r = fftw_plan_dft_c2r_2d(m_, m_, cast(h.data()), r.data(), FFTW_ESTIMATE);
      it = cache.emplace(m_, p).first;
    }
    cached_ = &it->second;
    return *cached_;
  }

  int m_;
  mutable const PlanSet* cached_ = nullptr;
};

}  // namespace vfl

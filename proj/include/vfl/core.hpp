#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <new>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace vfl {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double four_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;

using complex = std::complex<double>;

struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x1 + o.x1, x2 + o.x2}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x1 - o.x1, x2 - o.x2}; }
  constexpr Vec2 operator-() const { return {-x1, -x2}; }
  constexpr Vec2 operator*(double s) const { return {x1 * s, x2 * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x1 += o.x1;
    x2 += o.x2;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x1 * b.x1 + a.x2 * b.x2; }
inline double norm(Vec2 a) { return std::hypot(a.x1, a.x2); }
constexpr double norm_sq(Vec2 a) { return dot(a, a); }

// Error categories. Each maps onto one CLI exit code (see orchestrator).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalAlarm : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularityError : DomainError {
  using DomainError::DomainError;
};
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 64-byte aligned allocator so FFTW plans made on one buffer apply to any other.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using ComplexBuffer = std::vector<complex, AlignedAllocator<complex>>;
using RealBuffer = std::vector<double, AlignedAllocator<double>>;

}  // namespace vfl

#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/spectral.hpp"

namespace vfl {

// Real trigonometric polynomial phi(x) = Re sum_m a_m exp(i k_m.x).
// Derivatives are exact termwise differentiation.
class TestFunction {
 public:
  struct Mode {
    int k1 = 0;
    int k2 = 0;
    complex a;
  };

  TestFunction() = default;
  explicit TestFunction(std::vector<Mode> modes, std::string name = {})
      : modes_(std::move(modes)), name_(std::move(name)) {}

  static TestFunction cosine(int k1, int k2, double amp = 1.0) {
    return TestFunction({{k1, k2, complex(amp, 0.0)}}, label("cos", k1, k2));
  }
  static TestFunction sine(int k1, int k2, double amp = 1.0) {
    return TestFunction({{k1, k2, complex(0.0, -amp)}}, label("sin", k1, k2));
  }
  static TestFunction constant(double c) {
    return TestFunction({{0, 0, complex(c, 0.0)}}, std::to_string(c));
  }

  // Grammar: term ('+'|'-' term)*, term = [number '*'] (cos|sin) '(' lin ')' | number,
  // lin = [int] 'x1' [('+'|'-') [int] 'x2'] or the same with x2 alone.
  static TestFunction parse(std::string_view text);

  const std::vector<Mode>& modes() const { return modes_; }
  const std::string& name() const { return name_; }
  int max_wavenumber() const {
    int m = 0;
    for (const auto& md : modes_) m = std::max({m, std::abs(md.k1), std::abs(md.k2)});
    return m;
  }

  double value(Vec2 x) const {
    double s = 0.0;
    for (const auto& m : modes_) s += (m.a * phase(m, x)).real();
    return s;
  }
  Vec2 gradient(Vec2 x) const {
    Vec2 g;
    for (const auto& m : modes_) {
      const complex t = complex(0.0, 1.0) * m.a * phase(m, x);
      g.x1 += m.k1 * t.real();
      g.x2 += m.k2 * t.real();
    }
    return g;
  }
  // {d11, d12, d22}
  std::array<double, 3> hessian(Vec2 x) const {
    std::array<double, 3> h{};
    for (const auto& m : modes_) {
      const double t = -(m.a * phase(m, x)).real();
      h[0] += m.k1 * m.k1 * t;
      h[1] += m.k1 * m.k2 * t;
      h[2] += m.k2 * m.k2 * t;
    }
    return h;
  }
  double laplacian(Vec2 x) const {
    const auto h = hessian(x);
    return h[0] + h[2];
  }
  // d phi / d x_axis as a test function.
  TestFunction derivative(int axis) const {
    std::vector<Mode> out;
    for (const auto& m : modes_) {
      const int k = axis == 0 ? m.k1 : m.k2;
      if (k != 0) out.push_back({m.k1, m.k2, complex(0.0, double(k)) * m.a});
    }
    return TestFunction(std::move(out), "d" + std::to_string(axis + 1) + " " + name_);
  }
  TestFunction laplacian_function() const {
    std::vector<Mode> out;
    for (const auto& m : modes_) {
      out.push_back({m.k1, m.k2, -double(m.k1 * m.k1 + m.k2 * m.k2) * m.a});
    }
    return TestFunction(std::move(out), "lap " + name_);
  }

  // <phi, f> = int phi f dx = Re sum_m a_m c_{-k_m}(f).
  double pair(const FourierField& f) const {
    double s = 0.0;
    for (const auto& m : modes_) {
      if (!f.grid().contains(-m.k1, -m.k2))
        throw InvalidInput("TestFunction::pair: mode outside field grid");
      s += (m.a * f.at(-m.k1, -m.k2)).real();
    }
    return s;
  }

  // <phi, mu_N> for the empirical measure of the given positions.
  double pair_empirical(const std::vector<TorusPoint>& xs) const {
    double s = 0.0;
    for (const auto& x : xs) s += value(x);
    return s / static_cast<double>(xs.size());
  }

 private:
  static complex phase(const Mode& m, Vec2 x) {
    return std::polar(1.0, m.k1 * x.x1 + m.k2 * x.x2);
  }
  static std::string label(const char* f, int k1, int k2) {
    return std::string(f) + "(" + std::to_string(k1) + "," + std::to_string(k2) + ")";
  }

  std::vector<Mode> modes_;
  std::string name_;
};

namespace detail {

class TrigParser {
 public:
  explicit TrigParser(std::string_view s) : s_(s) {}

  std::vector<TestFunction::Mode> parse() {
    std::vector<TestFunction::Mode> out;
    double sign = 1.0;
    skip();
    if (peek() == '-') {
      sign = -1.0;
      ++p_;
    } else if (peek() == '+') {
      ++p_;
    }
    for (;;) {
      out.push_back(term(sign));
      skip();
      if (p_ >= s_.size()) break;
      const char c = s_[p_++];
      if (c == '+') sign = 1.0;
      else if (c == '-') sign = -1.0;
      else fail("expected '+' or '-'");
    }
    return out;
  }

 private:
  TestFunction::Mode term(double sign) {
    skip();
    double coef = 1.0;
    if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
      coef = number();
      skip();
      if (peek() == '*') {
        ++p_;
      } else {
        return {0, 0, complex(sign * coef, 0.0)};
      }
    }
    skip();
    const auto fn = s_.substr(p_, 3);
    if (fn != "cos" && fn != "sin") fail("expected cos or sin");
    p_ += 3;
    expect('(');
    auto [k1, k2] = linear();
    expect(')');
    const double a = sign * coef;
    if (fn == "cos") return {k1, k2, complex(a, 0.0)};
    return {k1, k2, complex(0.0, -a)};
  }

  std::pair<int, int> linear() {
    int k1 = 0, k2 = 0;
    double sign = 1.0;
    bool first = true;
    for (;;) {
      skip();
      if (peek() == '-') {
        sign = -1.0;
        ++p_;
      } else if (peek() == '+') {
        sign = 1.0;
        ++p_;
      } else if (!first) {
        break;
      }
      skip();
      int c = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        c = static_cast<int>(number());
        skip();
        if (peek() == '*') ++p_;
        skip();
      }
      if (s_.substr(p_, 2) == "x1") k1 += static_cast<int>(sign) * c;
      else if (s_.substr(p_, 2) == "x2") k2 += static_cast<int>(sign) * c;
      else fail("expected x1 or x2");
      p_ += 2;
      first = false;
      sign = 1.0;
      skip();
      if (peek() != '+' && peek() != '-') break;
    }
    return {k1, k2};
  }

  double number() {
    std::size_t used = 0;
    const std::string rest(s_.substr(p_));
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      fail("bad number");
    }
    p_ += used;
    return v;
  }

  void expect(char c) {
    skip();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++p_;
  }
  void skip() {
    while (p_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[p_]))) ++p_;
  }
  char peek() const { return p_ < s_.size() ? s_[p_] : '\0'; }
  [[noreturn]] void fail(const std::string& why) const {
    throw InvalidInput("test function '" + std::string(s_) + "': " + why);
  }

  std::string_view s_;
  std::size_t p_ = 0;
};

}  // namespace detail

inline TestFunction TestFunction::parse(std::string_view text) {
  return TestFunction(detail::TrigParser(text).parse(), std::string(text));
}

}  // namespace vfl

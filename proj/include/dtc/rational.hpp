#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dtc {

/// Exact rational number with 64-bit numerator and denominator.
///
/// Values are always stored in lowest terms with a positive denominator, so
/// `==` is structural equality. Intermediate products use 128-bit integers;
/// a result that does not fit back into 64 bits throws `std::overflow_error`
/// instead of wrapping.
class Rational {
 public:
  using int_type = std::int64_t;

  constexpr Rational() noexcept = default;
  constexpr Rational(int_type value) noexcept : num_(value) {}  // NOLINT: implicit by intent
  Rational(int_type num, int_type den) { assign(num, den); }

  [[nodiscard]] constexpr int_type num() const noexcept { return num_; }
  [[nodiscard]] constexpr int_type den() const noexcept { return den_; }
  [[nodiscard]] constexpr bool is_integer() const noexcept { return den_ == 1; }
  [[nodiscard]] constexpr bool is_zero() const noexcept { return num_ == 0; }
  [[nodiscard]] constexpr int sign() const noexcept { return (num_ > 0) - (num_ < 0); }

  /// Largest integer not greater than this value.
  [[nodiscard]] constexpr int_type floor() const noexcept {
    int_type q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0) --q;
    return q;
  }

  [[nodiscard]] double to_double() const noexcept {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  /// "p/q", or "p" when the value is an integer.
  [[nodiscard]] std::string to_string() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

  /// Fixed-point decimal with `digits` fractional digits, rounded half away
  /// from zero using exact integer arithmetic.
  [[nodiscard]] std::string to_decimal(int digits = 6) const {
    wide scale = 1;
    for (int i = 0; i < digits; ++i) scale *= 10;
    const bool negative = num_ < 0;
    const wide mag = negative ? -static_cast<wide>(num_) : static_cast<wide>(num_);
    const wide scaled = mag * scale;
    wide q = scaled / den_;
    if ((scaled % den_) * 2 >= den_) ++q;
    const wide int_part = q / scale;
    const wide frac_part = q % scale;
    std::string out;
    if (negative && q != 0) out.push_back('-');
    out += wide_to_string(int_part);
    if (digits > 0) {
      std::string frac = wide_to_string(frac_part);
      out.push_back('.');
      out.append(static_cast<std::size_t>(digits) - frac.size(), '0');
      out += frac;
    }
    return out;
  }

  /// Parses "p/q", an integer, or a plain decimal such as "-0.015" exactly.
  static Rational parse(std::string_view text) {
    const auto fail = [&]() -> Rational {
      throw std::invalid_argument("not a rational number: '" + std::string(text) + "'");
    };
    auto trimmed = trim(text);
    if (trimmed.empty()) return fail();
    if (const auto slash = trimmed.find('/'); slash != std::string_view::npos) {
      int_type n = 0;
      int_type d = 0;
      if (!parse_int(trim(trimmed.substr(0, slash)), n) ||
          !parse_int(trim(trimmed.substr(slash + 1)), d) || d == 0) {
        return fail();
      }
      return Rational(n, d);
    }
    bool negative = false;
    std::string_view body = trimmed;
    if (body.front() == '+' || body.front() == '-') {
      negative = body.front() == '-';
      body.remove_prefix(1);
    }
    const auto dot = body.find('.');
    std::string_view int_digits = body.substr(0, dot);
    std::string_view frac_digits =
        dot == std::string_view::npos ? std::string_view{} : body.substr(dot + 1);
    if (int_digits.empty() && frac_digits.empty()) return fail();
    wide value = 0;
    wide scale = 1;
    for (char c : int_digits) {
      if (c < '0' || c > '9') return fail();
      value = value * 10 + (c - '0');
      if (value > max_int) return fail();
    }
    for (char c : frac_digits) {
      if (c < '0' || c > '9') return fail();
      value = value * 10 + (c - '0');
      scale *= 10;
      if (value > max_int || scale > max_int) return fail();
    }
    return from_wide(negative ? -value : value, scale);
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    if (a.den_ == b.den_) return from_wide(static_cast<wide>(a.num_) + b.num_, a.den_);
    return from_wide(static_cast<wide>(a.num_) * b.den_ + static_cast<wide>(b.num_) * a.den_,
                     static_cast<wide>(a.den_) * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    if (a.den_ == b.den_) return from_wide(static_cast<wide>(a.num_) - b.num_, a.den_);
    return from_wide(static_cast<wide>(a.num_) * b.den_ - static_cast<wide>(b.num_) * a.den_,
                     static_cast<wide>(a.den_) * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from_wide(static_cast<wide>(a.num_) * b.num_, static_cast<wide>(a.den_) * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("rational division by zero");
    return from_wide(static_cast<wide>(a.num_) * b.den_, static_cast<wide>(a.den_) * b.num_);
  }
  Rational operator-() const { return from_wide(-static_cast<wide>(num_), den_); }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend constexpr bool operator==(const Rational&, const Rational&) noexcept = default;
  friend constexpr std::strong_ordering operator<=>(const Rational& a, const Rational& b) noexcept {
    if (a.den_ == b.den_) return a.num_ <=> b.num_;
    return static_cast<wide>(a.num_) * b.den_ <=> static_cast<wide>(b.num_) * a.den_;
  }

  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.to_string(); }

 private:
  __extension__ typedef __int128 wide;
  static constexpr wide max_int = std::numeric_limits<int_type>::max();

  static wide gcd(wide a, wide b) noexcept {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      wide t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  static Rational from_wide(wide n, wide d) {
    if (d == 0) throw std::domain_error("rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    if (d != 1) {
      const wide g = gcd(n, d);
      if (g > 1) {
        n /= g;
        d /= g;
      }
    }
    if (n > max_int || n < -max_int || d > max_int) {
      throw std::overflow_error("rational arithmetic overflow");
    }
    Rational r;
    r.num_ = static_cast<int_type>(n);
    r.den_ = static_cast<int_type>(d);
    return r;
  }

  void assign(int_type n, int_type d) { *this = from_wide(n, d); }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static bool parse_int(std::string_view s, int_type& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
  }

  static std::string wide_to_string(wide v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
      s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    }
    return s;
  }

  int_type num_ = 0;
  int_type den_ = 1;
};

inline Rational abs(const Rational& r) { return r.sign() < 0 ? -r : r; }
inline Rational min(const Rational& a, const Rational& b) { return b < a ? b : a; }
inline Rational max(const Rational& a, const Rational& b) { return a < b ? b : a; }

}  // namespace dtc

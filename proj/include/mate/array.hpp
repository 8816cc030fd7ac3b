#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mate {

// Dense row-major [n, t, c] array: window, time step, channel.
template <typename T>
struct Array3 {
  std::size_t n = 0;
  std::size_t t = 0;
  std::size_t c = 0;
  std::vector<T> values;

  Array3() = default;
  Array3(std::size_t n_, std::size_t t_, std::size_t c_, T fill = T{})
      : n(n_), t(t_), c(c_), values(n_ * t_ * c_, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  std::size_t index(std::size_t i, std::size_t s, std::size_t k) const noexcept {
    return (i * t + s) * c + k;
  }
  T& operator()(std::size_t i, std::size_t s, std::size_t k) noexcept {
    return values[index(i, s, k)];
  }
  const T& operator()(std::size_t i, std::size_t s, std::size_t k) const noexcept {
    return values[index(i, s, k)];
  }
  // Channels of one (window, step) cell.
  std::span<T> cell(std::size_t i, std::size_t s) noexcept {
    return {values.data() + index(i, s, 0), c};
  }
  std::span<const T> cell(std::size_t i, std::size_t s) const noexcept {
    return {values.data() + index(i, s, 0), c};
  }

  bool operator==(const Array3&) const = default;

  template <typename U>
  Array3<U> cast() const {
    Array3<U> out(n, t, c);
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

using Array3f = Array3<float>;
using Array3d = Array3<double>;

}  // namespace mate

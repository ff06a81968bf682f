#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace halox {

/// Spatial dimension index. Positions are stored x, y, z; pulse order runs z, y, x.
enum class Dim : int { X = 0, Y = 1, Z = 2 };

inline constexpr std::array<Dim, 3> kPulseDimOrder{Dim::Z, Dim::Y, Dim::X};

constexpr int idx(Dim d) { return static_cast<int>(d); }

constexpr std::string_view dim_name(Dim d)
{
    switch (d) {
    case Dim::X: return "x";
    case Dim::Y: return "y";
    case Dim::Z: return "z";
    }
    return "?";
}

using Vec3 = std::array<double, 3>;
using IVec3 = std::array<int, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3& operator+=(Vec3& a, const Vec3& b)
{
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
    return a;
}

/// Bitwise equality, distinguishes -0.0 from 0.0 and compares NaN payloads.
inline bool bit_equal(const Vec3& a, const Vec3& b)
{
    for (int d = 0; d < 3; ++d)
        if (std::bit_cast<std::uint64_t>(a[d]) != std::bit_cast<std::uint64_t>(b[d]))
            return false;
    return true;
}

} // namespace halox

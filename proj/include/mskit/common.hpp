#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace mskit {

// Periodic lattice, rank 3 or 4, uniform spacing h on every axis.
// Site order is row-major with axis 0 slowest.
struct Grid {
    int rank = 3;
    std::array<int, 4> n{1, 1, 1, 1};
    double h = 1.0;

    long size() const {
        long s = 1;
        for (int a = 0; a < rank; ++a) s *= n[a];
        return s;
    }

    long idx(const std::array<int, 4>& x) const {
        long i = 0;
        for (int a = 0; a < rank; ++a) i = i * n[a] + x[a];
        return i;
    }

    std::array<int, 4> coords(long i) const {
        std::array<int, 4> x{0, 0, 0, 0};
        for (int a = rank - 1; a >= 0; --a) {
            x[a] = static_cast<int>(i % n[a]);
            i /= n[a];
        }
        return x;
    }

    // Periodic neighbor along `axis`, step in {-1,+1} (or any integer).
    long shift(long i, int axis, int step) const {
        auto x = coords(i);
        int m = n[axis];
        x[axis] = ((x[axis] + step) % m + m) % m;
        return idx(x);
    }

    // Cell volume h^rank.
    double cell() const {
        double v = 1.0;
        for (int a = 0; a < rank; ++a) v *= h;
        return v;
    }

    bool operator==(const Grid& o) const {
        return rank == o.rank && n == o.n && h == o.h;
    }
};

template <class T>
struct Field {
    Grid g;
    std::vector<T> v;

    Field() = default;
    explicit Field(const Grid& grid) : g(grid), v(static_cast<size_t>(grid.size())) {}
    Field(const Grid& grid, const T& fill)
        : g(grid), v(static_cast<size_t>(grid.size()), fill) {}

    T& operator[](long i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](long i) const { return v[static_cast<size_t>(i)]; }
    long size() const { return static_cast<long>(v.size()); }
};

// 4x4 of doubles, row-major; used for tetrads and coordinate-index tensors.
using Mat4 = std::array<double, 16>;
using Vec4 = std::array<double, 4>;

inline double& m4(Mat4& m, int r, int c) { return m[4 * r + c]; }
inline double m4(const Mat4& m, int r, int c) { return m[4 * r + c]; }

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mskit

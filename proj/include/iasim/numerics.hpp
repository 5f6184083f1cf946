#ifndef IASIM_NUMERICS_HPP
#define IASIM_NUMERICS_HPP

/**
 * @file numerics.hpp
 * @brief Small dense complex linear algebra (2x2 eigen/singular problems)
 *        and power-of-two FFTs used by every other module.
 *
 * All eigen- and singular-vector outputs are unit norm with the first
 * component of modulus above a relative threshold rotated to be real and
 * positive, so repeated calls on identical inputs are bit-identical.
 */

#include <array>
#include <utility>
#include <vector>

#include "iasim/common.hpp"

namespace iasim {

// ---------------------------------------------------------------------------
// Vec2 / Mat2
// ---------------------------------------------------------------------------
struct Vec2 {
    cplx a{0.0, 0.0};
    cplx b{0.0, 0.0};

    cplx& operator[](int i) { return i == 0 ? a : b; }
    const cplx& operator[](int i) const { return i == 0 ? a : b; }

    double norm2() const { return std::norm(a) + std::norm(b); }
    double norm() const { return std::sqrt(norm2()); }

    Vec2 operator*(cplx s) const { return {a * s, b * s}; }
    Vec2 operator/(cplx s) const { return {a / s, b / s}; }
    Vec2 operator+(const Vec2& o) const { return {a + o.a, b + o.b}; }
    Vec2 operator-(const Vec2& o) const { return {a - o.a, b - o.b}; }
};

/// Hermitian inner product <x, y> = x^H y.
inline cplx hdot(const Vec2& x, const Vec2& y) {
    return std::conj(x.a) * y.a + std::conj(x.b) * y.b;
}

struct Mat2 {
    // Row-major: [m00 m01; m10 m11].
    cplx m00{0.0, 0.0}, m01{0.0, 0.0}, m10{0.0, 0.0}, m11{0.0, 0.0};

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 diag(cplx d0, cplx d1) { return {d0, 0.0, 0.0, d1}; }
    /// Rank-one x y^H.
    static Mat2 outer(const Vec2& x, const Vec2& y) {
        return {x.a * std::conj(y.a), x.a * std::conj(y.b),
                x.b * std::conj(y.a), x.b * std::conj(y.b)};
    }

    cplx trace() const { return m00 + m11; }
    cplx det() const { return m00 * m11 - m01 * m10; }
    double fro_norm2() const {
        return std::norm(m00) + std::norm(m01) + std::norm(m10) + std::norm(m11);
    }
    double fro_norm() const { return std::sqrt(fro_norm2()); }

    Mat2 adjoint() const {
        return {std::conj(m00), std::conj(m10), std::conj(m01), std::conj(m11)};
    }

    Mat2 operator+(const Mat2& o) const {
        return {m00 + o.m00, m01 + o.m01, m10 + o.m10, m11 + o.m11};
    }
    Mat2 operator-(const Mat2& o) const {
        return {m00 - o.m00, m01 - o.m01, m10 - o.m10, m11 - o.m11};
    }
    Mat2 operator*(cplx s) const { return {m00 * s, m01 * s, m10 * s, m11 * s}; }
    Mat2 operator*(const Mat2& o) const {
        return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
                m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
    }
    Vec2 operator*(const Vec2& v) const {
        return {m00 * v.a + m01 * v.b, m10 * v.a + m11 * v.b};
    }

    /// Exact 2x2 inverse. Throws SingularChannel when the determinant is
    /// negligible relative to the matrix scale.
    Mat2 inverse() const {
        cplx d = det();
        double scale = fro_norm2();
        if (std::abs(d) <= 1e-300 || std::abs(d) < 1e-30 * scale)
            throw SingularChannel("2x2 matrix numerically singular");
        return Mat2{m11 / d, -m01 / d, -m10 / d, m00 / d};
    }
};

/// Rotates v so its first component with modulus > 1e-12*||v|| is real
/// positive. Makes eigen/singular vectors deterministic.
Vec2 canonical_phase(const Vec2& v);

/// Unit-normalizes then phase-canonicalizes.
Vec2 normalized(const Vec2& v);

// ---------------------------------------------------------------------------
// Eigenproblems
// ---------------------------------------------------------------------------
struct EigPair {
    cplx value;
    Vec2 vector;  // unit norm, canonical phase
};

/// Both eigenpairs of a general complex 2x2 matrix, ordered by descending
/// eigenvalue modulus (ties by descending real part).
/// Throws DegenerateEigenbasis when |l1 - l2| <= 1e-12 * ||M||_F.
std::array<EigPair, 2> eig2x2(const Mat2& m);

struct GenEigResult {
    double value;
    Vec2 vector;  // unit norm, canonical phase
};

/// Maximum generalized eigenpair of the Hermitian pencil (a, b) with b
/// Hermitian positive definite. Throws NotPositiveDefinite when b fails
/// min-eig > 1e-14 * ||b||, DegeneratePencil on an eigenvalue tie.
GenEigResult gen_eig_max(const Mat2& a, const Mat2& b);

struct SingularPair {
    double sigma_max;
    Vec2 right;  // unit, canonical phase
    Vec2 left;   // M * right / sigma_max
};

/// Dominant singular triple of a 2x2 matrix. Spectrum ties resolve to the
/// first canonical basis direction. Throws ZeroMatrix for ||M|| <= 1e-300.
SingularPair dominant_singular_pair(const Mat2& m);

// ---------------------------------------------------------------------------
// FFT (power-of-two, radix-2). Forward is unnormalized, inverse carries 1/n.
// ---------------------------------------------------------------------------

/// Out-of-place forward DFT; x.size() must equal n (a power of two).
std::vector<cplx> fft(const std::vector<cplx>& x, std::size_t n);

/// Inverse DFT with 1/n scaling; ifft(fft(x)) == x up to roundoff.
std::vector<cplx> ifft(const std::vector<cplx>& x, std::size_t n);

/// In-place transform used by the hot receiver paths; dir=+1 forward,
/// dir=-1 inverse (scaled by 1/n).
void fft_inplace(cplx* data, std::size_t n, int dir);

}  // namespace iasim

#endif  // IASIM_NUMERICS_HPP

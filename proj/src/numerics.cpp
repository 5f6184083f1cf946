#include "iasim/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace iasim {

Vec2 canonical_phase(const Vec2& v) {
    double n = v.norm();
    if (n <= 0.0) return v;
    cplx lead = std::abs(v.a) > 1e-12 * n ? v.a : v.b;
    double mag = std::abs(lead);
    if (mag <= 0.0) return v;
    cplx rot = std::conj(lead) / mag;
    return v * rot;
}

Vec2 normalized(const Vec2& v) {
    double n = v.norm();
    if (n <= 0.0) return v;
    return canonical_phase(v / n);
}

namespace {

// Eigenvector of (m - lambda*I) from its row space: the two candidate
// null vectors are (m01, lambda-m00) and (lambda-m11, m10); the larger one
// is numerically better conditioned.
Vec2 eigvec_for(const Mat2& m, cplx lambda) {
    Vec2 c1{m.m01, lambda - m.m00};
    Vec2 c2{lambda - m.m11, m.m10};
    Vec2 v = c1.norm2() >= c2.norm2() ? c1 : c2;
    if (v.norm2() <= 0.0) v = Vec2{1.0, 0.0};  // m is lambda*I on this branch
    return normalized(v);
}

}  // namespace

std::array<EigPair, 2> eig2x2(const Mat2& m) {
    cplx tr = m.trace();
    cplx dt = m.det();
    cplx disc = std::sqrt(tr * tr - 4.0 * dt);
    cplx l1 = 0.5 * (tr + disc);
    cplx l2 = 0.5 * (tr - disc);

    double scale = m.fro_norm();
    if (std::abs(l1 - l2) <= 1e-12 * scale)
        throw DegenerateEigenbasis("eig2x2: eigenvalue gap below 1e-12 * ||M||");

    auto ahead = [](cplx x, cplx y) {
        double mx = std::abs(x), my = std::abs(y);
        if (mx != my) return mx > my;
        return x.real() > y.real();
    };
    if (!ahead(l1, l2)) std::swap(l1, l2);

    return {EigPair{l1, eigvec_for(m, l1)}, EigPair{l2, eigvec_for(m, l2)}};
}

GenEigResult gen_eig_max(const Mat2& a, const Mat2& b) {
    // b must be Hermitian positive definite: eigenvalues of a 2x2 Hermitian
    // matrix come from a real quadratic.
    double tr = b.trace().real();
    double dt = b.det().real();
    double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * dt));
    double bmin = 0.5 * (tr - disc);
    if (bmin <= 1e-14 * b.fro_norm())
        throw NotPositiveDefinite("gen_eig_max: b is not positive definite");

    Mat2 pencil = b.inverse() * a;
    cplx trp = pencil.trace();
    cplx dtp = pencil.det();
    cplx discp = std::sqrt(trp * trp - 4.0 * dtp);
    cplx l1 = 0.5 * (trp + discp);
    cplx l2 = 0.5 * (trp - discp);
    if (std::abs(l1 - l2) <= 1e-12 * pencil.fro_norm())
        throw DegeneratePencil("gen_eig_max: generalized eigenvalue tie");

    // For a Hermitian/HPD pencil the generalized eigenvalues are real.
    cplx lmax = l1.real() >= l2.real() ? l1 : l2;
    return GenEigResult{lmax.real(), eigvec_for(pencil, lmax)};
}

SingularPair dominant_singular_pair(const Mat2& m) {
    double scale2 = m.fro_norm2();
    if (std::sqrt(scale2) <= 1e-300)
        throw ZeroMatrix("dominant_singular_pair: zero matrix");

    Mat2 g = m.adjoint() * m;  // Hermitian PSD
    double tr = g.trace().real();
    double dt = std::max(0.0, g.det().real());
    double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * dt));
    double lmax = 0.5 * (tr + disc);
    double lmin = 0.5 * (tr - disc);

    Vec2 right;
    if (lmax - lmin <= 1e-12 * std::sqrt(g.fro_norm2())) {
        // Isotropic spectrum: any direction attains sigma_max; fix e1.
        right = Vec2{1.0, 0.0};
    } else {
        right = eigvec_for(g, cplx(lmax, 0.0));
    }

    double sigma = std::sqrt(std::max(0.0, lmax));
    Vec2 left = sigma > 0.0 ? (m * right) / sigma : Vec2{1.0, 0.0};
    return SingularPair{sigma, right, left};
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------
namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddle table for the most common size (64) is kept hot; other sizes are
// computed per call, which is fine for their usage frequency.
const std::vector<cplx>& twiddles64() {
    static const std::vector<cplx> t = [] {
        std::vector<cplx> w(32);
        for (std::size_t k = 0; k < 32; ++k)
            w[k] = std::polar(1.0, -2.0 * kPi * double(k) / 64.0);
        return w;
    }();
    return t;
}

void transform(cplx* a, std::size_t n, int dir) {
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const std::vector<cplx>* table = (n == 64) ? &twiddles64() : nullptr;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        std::size_t half = len >> 1;
        std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                cplx w;
                if (table) {
                    w = (*table)[k * step];
                } else {
                    w = std::polar(1.0, -2.0 * kPi * double(k * step) / double(n));
                }
                if (dir < 0) w = std::conj(w);
                cplx u = a[i + k];
                cplx v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }

    if (dir < 0) {
        double inv = 1.0 / double(n);
        for (std::size_t i = 0; i < n; ++i) a[i] *= inv;
    }
}

}  // namespace

void fft_inplace(cplx* data, std::size_t n, int dir) {
    if (!is_pow2(n)) throw BadLength("fft: size must be a power of two");
    transform(data, n, dir);
}

std::vector<cplx> fft(const std::vector<cplx>& x, std::size_t n) {
    if (x.size() != n) throw BadLength("fft: input length does not match n");
    if (!is_pow2(n)) throw BadLength("fft: size must be a power of two");
    std::vector<cplx> out(x);
    transform(out.data(), n, +1);
    return out;
}

std::vector<cplx> ifft(const std::vector<cplx>& x, std::size_t n) {
    if (x.size() != n) throw BadLength("ifft: input length does not match n");
    if (!is_pow2(n)) throw BadLength("ifft: size must be a power of two");
    std::vector<cplx> out(x);
    transform(out.data(), n, -1);
    return out;
}

}  // namespace iasim

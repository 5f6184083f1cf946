#include "iasim/align.hpp"

#include <algorithm>
#include <cmath>

namespace iasim {

double chordal_distance(const Vec2& a, const Vec2& b) {
    // Residual form: equals sqrt(1 - |<a,b>|^2) for unit vectors but keeps
    // full precision for nearly-parallel inputs.
    double na = a.norm(), nb = b.norm();
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    Vec2 an = a / na, bn = b / nb;
    Vec2 r = bn - an * hdot(an, bn);
    return std::min(1.0, r.norm());
}

namespace {

// Unit left-null direction of the 2x2 matrix with columns c0, c1 (the
// received interference matrix): the minimum eigenvector of B B^H. The
// columns are aligned by construction, so lambda_min is numerically zero.
Vec2 left_null_direction(const Vec2& c0, const Vec2& c1) {
    Mat2 g = Mat2::outer(c0, c0) + Mat2::outer(c1, c1);
    double tr = g.trace().real();
    double dt = std::max(0.0, g.det().real());
    double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * dt));
    double lmin = 0.5 * (tr - disc);
    // Row-space candidates of (g - lmin I).
    Vec2 r1{g.m01, cplx(lmin, 0.0) - g.m00};
    Vec2 r2{cplx(lmin, 0.0) - g.m11, g.m10};
    Vec2 v = r1.norm2() >= r2.norm2() ? r1 : r2;
    if (v.norm2() <= 0.0) v = Vec2{1.0, 0.0};
    return normalized(v);
}

void check_invertible(const Mat2& h) {
    double cond_proxy = h.fro_norm2();
    cplx d = h.det();
    if (std::abs(d) <= 1e-12 * cond_proxy)
        throw SingularChannel("ia_closed_form: channel matrix close to singular");
}

}  // namespace

std::array<IaSolution, 2> ia_closed_form(const std::vector<ChannelMatrixGrid>& channels,
                                         int start_user) {
    const int s = ((start_user % 3) + 3) % 3;
    const int s1 = (s + 1) % 3, s2 = (s + 2) % 3;

    std::array<IaSolution, 2> out;
    out[0].branch_id = 0;
    out[1].branch_id = 1;
    if (channels.size() > std::size_t(OfdmGrid::kNUsed))
        throw BadLength("ia_closed_form: more bins than used subcarriers");

    for (std::size_t k = 0; k < channels.size(); ++k) {
        const auto& H = channels[k];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) check_invertible(H[std::size_t(i)][std::size_t(j)]);

        // Alignment matrix seen from the start user (Jafar's chain).
        Mat2 e = H[std::size_t(s2)][std::size_t(s)].inverse() *
                 H[std::size_t(s2)][std::size_t(s1)] *
                 H[std::size_t(s)][std::size_t(s1)].inverse() *
                 H[std::size_t(s)][std::size_t(s2)] *
                 H[std::size_t(s1)][std::size_t(s2)].inverse() *
                 H[std::size_t(s1)][std::size_t(s)];
        auto eig = eig2x2(e);

        for (int branch = 0; branch < 2; ++branch) {
            IaSolution& sol = out[std::size_t(branch)];
            std::array<Vec2, 3> v;
            v[std::size_t(s)] = eig[std::size_t(branch)].vector;
            v[std::size_t(s1)] = normalized(H[std::size_t(s2)][std::size_t(s1)].inverse() *
                                            (H[std::size_t(s2)][std::size_t(s)] * v[std::size_t(s)]));
            v[std::size_t(s2)] = normalized(H[std::size_t(s1)][std::size_t(s2)].inverse() *
                                            (H[std::size_t(s1)][std::size_t(s)] * v[std::size_t(s)]));

            for (int i = 0; i < 3; ++i) {
                int j = (i + 1) % 3, l = (i + 2) % 3;
                Vec2 cj = H[std::size_t(i)][std::size_t(j)] * v[std::size_t(j)];
                Vec2 cl = H[std::size_t(i)][std::size_t(l)] * v[std::size_t(l)];
                sol.u[std::size_t(i)][k] = left_null_direction(cj, cl);
                sol.v[std::size_t(i)][k] = v[std::size_t(i)];
            }
        }
    }
    return out;
}

namespace {

Vec2 phase_align_to(const Vec2& prev, const Vec2& cur) {
    cplx ip = hdot(prev, cur);
    double m = std::abs(ip);
    if (m <= 0.0) return cur;
    return cur * (std::conj(ip) / m);
}

void align_phases_in_place(SubcarrierVectors& vecs, std::size_t n_bins) {
    for (std::size_t k = 1; k < n_bins; ++k)
        vecs[k] = phase_align_to(vecs[k - 1], vecs[k]);
}

}  // namespace

IaSolution align_solution_phases(const IaSolution& sol) {
    IaSolution out = sol;
    for (int i = 0; i < 3; ++i) {
        align_phases_in_place(out.v[std::size_t(i)], OfdmGrid::kNUsed);
        align_phases_in_place(out.u[std::size_t(i)], OfdmGrid::kNUsed);
    }
    return out;
}

SmoothSets select_smooth_sets(const IaSolution& branch0, const IaSolution& branch1) {
    const std::size_t n = OfdmGrid::kNUsed;
    SmoothSets out;
    const IaSolution* branches[2] = {&branch0, &branch1};

    // Greedy continuity matching on user 1's precoder.
    std::array<int, OfdmGrid::kNUsed> assign{};  // branch taken by set 0
    assign[0] = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const Vec2& p0 = branches[std::size_t(assign[k - 1])]->v[0][k - 1];
        const Vec2& p1 = branches[std::size_t(1 - assign[k - 1])]->v[0][k - 1];
        double cost0 = chordal_distance(p0, branch0.v[0][k]) +
                       chordal_distance(p1, branch1.v[0][k]);
        double cost1 = chordal_distance(p0, branch1.v[0][k]) +
                       chordal_distance(p1, branch0.v[0][k]);
        assign[k] = (cost1 < cost0) ? 1 : 0;
    }

    for (std::size_t k = 0; k < n; ++k) {
        const IaSolution& a = *branches[std::size_t(assign[k])];
        const IaSolution& b = *branches[std::size_t(1 - assign[k])];
        for (int i = 0; i < 3; ++i) {
            out.set0.v[std::size_t(i)][k] = a.v[std::size_t(i)][k];
            out.set0.u[std::size_t(i)][k] = a.u[std::size_t(i)][k];
            out.set1.v[std::size_t(i)][k] = b.v[std::size_t(i)][k];
            out.set1.u[std::size_t(i)][k] = b.u[std::size_t(i)][k];
        }
    }
    out.set0.branch_id = 0;
    out.set1.branch_id = 1;

    auto score = [&](const IaSolution& s) {
        double acc = 0.0;
        for (std::size_t k = 1; k < n; ++k) acc += chordal_distance(s.v[0][k - 1], s.v[0][k]);
        return acc / double(n - 1);
    };
    out.score0 = score(out.set0);
    out.score1 = score(out.set1);

    out.set0 = align_solution_phases(out.set0);
    out.set1 = align_solution_phases(out.set1);
    return out;
}

// ---------------------------------------------------------------------------
// Pre-FFT decoders
// ---------------------------------------------------------------------------
namespace {

// Null-bin completion: the decoder spectrum is undefined at DC and the
// eleven guard bins, and those values only shape the impulse response.
// Choose them to minimize the response energy outside the central
// +-kCoreHalfWidth lags (a 12-dimensional least-squares per antenna), which
// keeps the truncated filters short. A plain linear interpolation leaves
// several times more tail energy and lengthens the equivalent channel.
constexpr int kCoreHalfWidth = 10;

void complete_null_bins(std::vector<cplx>& spec) {
    const std::size_t nfft = spec.size();
    std::array<std::size_t, 12> free_bins;
    free_bins[0] = 0;  // DC
    for (int g = 1; g <= 11; ++g)
        free_bins[std::size_t(g)] = std::size_t(OfdmGrid::bin_of(26 + g));

    // Tail lag set: signed lags outside [-kCoreHalfWidth, +kCoreHalfWidth].
    std::vector<std::size_t> tail;
    for (std::size_t n = 0; n < nfft; ++n) {
        int lag = n < nfft / 2 ? int(n) : int(n) - int(nfft);
        if (std::abs(lag) > kCoreHalfWidth) tail.push_back(n);
    }

    auto h0 = ifft(spec, nfft);

    // Normal equations G x = -r for the free-bin values x, where column j of
    // the design matrix is the tail restriction of the IFFT basis vector.
    const std::size_t m = free_bins.size();
    std::vector<cplx> basis(m * tail.size());
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t t = 0; t < tail.size(); ++t)
            basis[j * tail.size() + t] =
                std::polar(1.0 / double(nfft),
                           2.0 * kPi * double(tail[t] * free_bins[j]) / double(nfft));

    std::vector<cplx> g(m * m, cplx(0.0, 0.0)), r(m, cplx(0.0, 0.0));
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
            cplx acc(0.0, 0.0);
            for (std::size_t t = 0; t < tail.size(); ++t)
                acc += std::conj(basis[j * tail.size() + t]) * basis[k * tail.size() + t];
            g[j * m + k] = acc;
        }
        cplx acc(0.0, 0.0);
        for (std::size_t t = 0; t < tail.size(); ++t)
            acc += std::conj(basis[j * tail.size() + t]) * h0[tail[t]];
        r[j] = -acc;
        g[j * m + j] += 1e-12;
    }

    // Gaussian elimination with partial pivoting on the 12x12 system.
    std::array<std::size_t, 12> perm;
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t piv = col;
        for (std::size_t row = col + 1; row < m; ++row)
            if (std::abs(g[row * m + col]) > std::abs(g[piv * m + col])) piv = row;
        if (piv != col) {
            for (std::size_t k = 0; k < m; ++k) std::swap(g[col * m + k], g[piv * m + k]);
            std::swap(r[col], r[piv]);
        }
        cplx d = g[col * m + col];
        for (std::size_t row = col + 1; row < m; ++row) {
            cplx f = g[row * m + col] / d;
            for (std::size_t k = col; k < m; ++k) g[row * m + k] -= f * g[col * m + k];
            r[row] -= f * r[col];
        }
    }
    std::array<cplx, 12> x{};
    for (std::size_t i = m; i-- > 0;) {
        cplx acc = r[i];
        for (std::size_t k = i + 1; k < m; ++k) acc -= g[i * m + k] * x[k];
        x[i] = acc / g[i * m + i];
    }
    for (std::size_t j = 0; j < m; ++j) spec[free_bins[j]] = x[j];
}

}  // namespace

PreFftDecoder build_prefft_decoder(const IaSolution& sol, int user, int length) {
    if (length < 1 || length > OfdmGrid::kNfft)
        throw BadLength("pre-FFT decoder length must be in [1, 64]");
    const auto& grid = OfdmGrid::standard();
    const std::size_t nfft = OfdmGrid::kNfft;

    std::array<std::vector<cplx>, 2> spec;
    for (auto& s : spec) s.assign(nfft, cplx(0.0, 0.0));
    for (int i = 0; i < OfdmGrid::kNUsed; ++i) {
        const Vec2& u = sol.u[std::size_t(user)][std::size_t(i)];
        std::size_t bin = std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]));
        spec[0][bin] = u.a;
        spec[1][bin] = u.b;
    }
    for (auto& s : spec) complete_null_bins(s);

    // g_a[n] = conj(h_a[(-n) mod 64]) realizes multiplication by conj(U_a).
    std::array<std::vector<cplx>, 2> g;
    for (int a = 0; a < 2; ++a) {
        auto h = ifft(spec[std::size_t(a)], nfft);
        g[std::size_t(a)].resize(nfft);
        for (std::size_t n = 0; n < nfft; ++n)
            g[std::size_t(a)][n] = std::conj(h[(nfft - n) % nfft]);
    }

    std::vector<double> tap_energy(nfft, 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < nfft; ++n) {
        tap_energy[n] = std::norm(g[0][n]) + std::norm(g[1][n]);
        total += tap_energy[n];
    }

    // Best contiguous circular window of the requested length. Energy ties
    // (flat profiles, L = 64) resolve to the window centered on lag zero so
    // the filter stays short in delay.
    auto signed_start = [&](std::size_t o) {
        return o < nfft / 2 ? int(o) : int(o) - int(nfft);
    };
    auto centering = [&](std::size_t o) {
        return std::abs(2 * signed_start(o) + length - 1);
    };
    double win = 0.0;
    for (int m = 0; m < length; ++m) win += tap_energy[std::size_t(m)];
    double best = win;
    std::size_t best_o = 0;
    for (std::size_t o = 1; o < nfft; ++o) {
        win -= tap_energy[o - 1];
        win += tap_energy[(o - 1 + std::size_t(length)) % nfft];
        if (win > best * (1.0 + 1e-12) ||
            (win >= best * (1.0 - 1e-12) && centering(o) < centering(best_o))) {
            best = std::max(best, win);
            best_o = o;
        }
    }

    PreFftDecoder dec;
    dec.taps.resize(std::size_t(length));
    for (int m = 0; m < length; ++m) {
        std::size_t c = (best_o + std::size_t(m)) % nfft;
        dec.taps[std::size_t(m)] = Vec2{g[0][c], g[1][c]};
    }
    dec.alignment_offset = signed_start(best_o);
    dec.captured_energy = total > 0.0 ? std::min(1.0, best / total) : 1.0;
    return dec;
}

std::vector<cplx> apply_prefft_decoder(const std::array<std::vector<cplx>, 2>& rx,
                                       const PreFftDecoder& dec) {
    if (rx[0].size() != rx[1].size())
        throw LengthMismatch("pre-FFT decoder: antenna streams differ in length");
    const long n = long(rx[0].size());
    const long L = long(dec.taps.size());
    std::vector<cplx> out(std::size_t(n), cplx(0.0, 0.0));
    for (long m = 0; m < L; ++m) {
        const cplx g0 = dec.taps[std::size_t(m)].a;
        const cplx g1 = dec.taps[std::size_t(m)].b;
        const long lag = long(dec.alignment_offset) + m;
        const long lo = std::max(long(0), lag);
        const long hi = std::min(n, n + lag);
        for (long t = lo; t < hi; ++t)
            out[std::size_t(t)] += g0 * rx[0][std::size_t(t - lag)] + g1 * rx[1][std::size_t(t - lag)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// MaxSINR
// ---------------------------------------------------------------------------
IaSolution max_sinr(const std::vector<ChannelMatrixGrid>& channels,
                    const MaxSinrConfig& cfg, uint64_t rng_seed) {
    if (channels.size() > std::size_t(OfdmGrid::kNUsed))
        throw BadLength("max_sinr: more bins than used subcarriers");
    IaSolution sol;

    for (std::size_t k = 0; k < channels.size(); ++k) {
        const auto& H = channels[k];
        Rng rng(mix_seed(rng_seed, 0x6d73ULL, k));
        std::array<Vec2, 3> v, u;
        for (auto& vi : v) vi = normalized(Vec2{rng.cgauss(), rng.cgauss()});

        const Mat2 eye = Mat2::identity();
        auto pencil_max = [&](const Mat2& a, Mat2 b) {
            try {
                return gen_eig_max(a, b).vector;
            } catch (const NotPositiveDefinite&) {
                // sigma2 = 0 with rank-deficient interference: epsilon ridge.
                b = b + eye * cplx(1e-12, 0.0);
                return gen_eig_max(a, b).vector;
            }
        };

        for (int iter = 0; iter < cfg.max_iters; ++iter) {
            for (int i = 0; i < 3; ++i) {
                Vec2 h = H[std::size_t(i)][std::size_t(i)] * v[std::size_t(i)];
                Mat2 num = Mat2::outer(h, h);
                Mat2 den = eye * cplx(cfg.sigma2, 0.0);
                for (int j = 0; j < 3; ++j) {
                    if (j == i) continue;
                    Vec2 a = H[std::size_t(i)][std::size_t(j)] * v[std::size_t(j)];
                    den = den + Mat2::outer(a, a);
                }
                u[std::size_t(i)] = pencil_max(num, den);
            }

            double change = 0.0;
            for (int i = 0; i < 3; ++i) {
                Vec2 h = H[std::size_t(i)][std::size_t(i)].adjoint() * u[std::size_t(i)];
                Mat2 num = Mat2::outer(h, h);
                Mat2 den = eye * cplx(cfg.sigma2, 0.0);
                for (int j = 0; j < 3; ++j) {
                    if (j == i) continue;
                    Vec2 a = H[std::size_t(j)][std::size_t(i)].adjoint() * u[std::size_t(j)];
                    den = den + Mat2::outer(a, a);
                }
                Vec2 vn = pencil_max(num, den);
                change = std::max(change, chordal_distance(vn, v[std::size_t(i)]));
                v[std::size_t(i)] = vn;
            }
            if (change < cfg.tol) break;
        }

        for (int i = 0; i < 3; ++i) {
            sol.v[std::size_t(i)][k] = v[std::size_t(i)];
            sol.u[std::size_t(i)][k] = u[std::size_t(i)];
        }
    }
    return sol;
}

DetBeamformers det_beamformers(const std::vector<Mat2>& desired_link) {
    DetBeamformers out;
    out.gain.reserve(desired_link.size());
    out.v.reserve(desired_link.size());
    out.u.reserve(desired_link.size());
    for (const auto& h : desired_link) {
        auto sp = dominant_singular_pair(h);
        out.gain.push_back(sp.sigma_max);
        out.v.push_back(sp.right);
        out.u.push_back(sp.left);
    }
    return out;
}

}  // namespace iasim

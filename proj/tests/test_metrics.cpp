#include <doctest.h>

#include <cmath>

#include "iasim/channel.hpp"
#include "iasim/metrics.hpp"

using namespace iasim;

namespace {

ChannelMatrixGrid random_grid(Rng& rng) {
    ChannelMatrixGrid g;
    for (auto& row : g)
        for (auto& m : row)
            m = Mat2{rng.cgauss(), rng.cgauss(), rng.cgauss(), rng.cgauss()};
    return g;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("training estimates: noiseless and constant inputs are exact") {
    std::vector<cplx> ref = {1.0, -1.0, 1.0};
    const cplx h(0.3, -1.1);
    std::vector<std::vector<cplx>> z;
    for (int n = 0; n < 7; ++n)
        z.push_back({h * ref[0], h * ref[1], h * ref[2]});
    auto est = training_estimates(z, ref);
    for (int s = 0; s < 3; ++s) {
        CHECK(std::abs(est.h[std::size_t(s)] - h) < 1e-14);
        CHECK(est.n_pow[std::size_t(s)] < 1e-28);
        CHECK(est.s_pow[std::size_t(s)] == doctest::Approx(std::norm(h)).epsilon(1e-12));
    }

    // z constant c with unit reference: h = c, N = 0.
    std::vector<std::vector<cplx>> zc(4, std::vector<cplx>{cplx(2.0, 1.0)});
    auto estc = training_estimates(zc, {cplx(1.0, 0.0)});
    CHECK(std::abs(estc.h[0] - cplx(2.0, 1.0)) < 1e-14);
    CHECK(estc.n_pow[0] == 0.0);
}

TEST_CASE("training estimates: injected noise power is recovered") {
    Rng rng(21);
    const double p = 0.04;
    std::vector<cplx> ref(8, cplx(1.0, 0.0));
    const cplx h(1.0, 0.5);
    std::vector<std::vector<cplx>> z;
    for (int n = 0; n < 1000; ++n) {
        std::vector<cplx> row(8);
        for (auto& v : row) v = h + rng.cgauss() * std::sqrt(p);
        z.push_back(row);
    }
    auto est = training_estimates(z, ref);
    for (int s = 0; s < 8; ++s) {
        CHECK(est.n_pow[std::size_t(s)] == doctest::Approx(p).epsilon(0.10));
        CHECK(est.sigma2[std::size_t(s)] ==
              doctest::Approx(p / std::norm(h)).epsilon(0.12));
    }
}

TEST_CASE("training estimates: concatenation equals the mean of block estimates") {
    Rng rng(22);
    std::vector<cplx> ref = {1.0, -1.0};
    std::vector<std::vector<cplx>> a, b, both;
    for (int n = 0; n < 50; ++n) {
        std::vector<cplx> ra = {rng.cgauss(), rng.cgauss()};
        std::vector<cplx> rb = {rng.cgauss(), rng.cgauss()};
        a.push_back(ra);
        b.push_back(rb);
        both.push_back(ra);
    }
    for (const auto& row : b) both.push_back(row);
    auto ea = training_estimates(a, ref);
    auto eb = training_estimates(b, ref);
    auto eboth = training_estimates(both, ref);
    for (int s = 0; s < 2; ++s)
        CHECK(std::abs(eboth.h[std::size_t(s)] -
                       0.5 * (ea.h[std::size_t(s)] + eb.h[std::size_t(s)])) < 1e-12);
}

TEST_CASE("evm: exact cases") {
    std::vector<std::vector<cplx>> ref = {{cplx(1.0, 0.0), cplx(0.0, 1.0)},
                                          {cplx(-1.0, 0.0), cplx(0.0, -1.0)}};
    auto same = evm(ref, ref);
    CHECK(same.aggregate_lin == 0.0);
    CHECK(same.aggregate_db() == -300.0);

    std::vector<std::vector<cplx>> twice = ref;
    for (auto& row : twice)
        for (auto& v : row) v *= 2.0;
    auto doubled = evm(twice, ref);
    CHECK(doubled.aggregate_lin == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(doubled.aggregate_db() == doctest::Approx(0.0).epsilon(1e-9));

    std::vector<std::vector<cplx>> zeros = {{cplx(0.0, 0.0)}};
    CHECK_THROWS_AS(evm(zeros, zeros), ZeroReference);
}

TEST_CASE("evm: calibrated white error and rotation invariance") {
    Rng rng(23);
    std::vector<std::vector<cplx>> ref, eq;
    const double p = 1e-2;  // -20 dB
    for (int n = 0; n < 200; ++n) {
        std::vector<cplx> r(50), e(50);
        for (int k = 0; k < 50; ++k) {
            r[std::size_t(k)] = std::polar(1.0, 2.0 * kPi * rng.uniform());
            e[std::size_t(k)] = r[std::size_t(k)] + rng.cgauss() * std::sqrt(p);
        }
        ref.push_back(r);
        eq.push_back(e);
    }
    auto res = evm(eq, ref);
    CHECK(std::abs(res.aggregate_db() + 20.0) < 0.3);

    cplx rot = std::polar(1.0, 0.77);
    auto ref_rot = ref, eq_rot = eq;
    for (auto& row : ref_rot)
        for (auto& v : row) v *= rot;
    for (auto& row : eq_rot)
        for (auto& v : row) v *= rot;
    auto res_rot = evm(eq_rot, ref_rot);
    CHECK(res_rot.aggregate_lin == doctest::Approx(res.aggregate_lin).epsilon(1e-12));
}

TEST_CASE("srnr: ratios and sentinels") {
    TrainingEstimates est;
    est.h = {cplx(1.0, 0.0), cplx(1.0, 0.0)};
    est.s_pow = {100.0, 1.0};
    est.n_pow = {1.0, 0.0};
    est.sigma2 = {1.0, 0.0};
    auto r = srnr(est);
    CHECK(r.per_subcarrier_db[0] == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(std::isinf(r.per_subcarrier_db[1]));
}

TEST_CASE("srnr: calibrated injection recovers the ratio") {
    Rng rng(24);
    std::vector<cplx> ref(4, cplx(1.0, 0.0));
    std::vector<std::vector<cplx>> z;
    const double snr = 100.0;  // 20 dB
    for (int n = 0; n < 1000; ++n) {
        std::vector<cplx> row(4);
        for (auto& v : row) v = cplx(1.0, 0.0) + rng.cgauss() / std::sqrt(snr);
        z.push_back(row);
    }
    auto r = srnr(training_estimates(z, ref));
    for (double v : r.per_subcarrier_db) CHECK(std::abs(v - 20.0) < 0.5);
}

TEST_CASE("leakage: IA nulls, zero precoders, random baseline") {
    Rng rng(25);
    std::vector<ChannelMatrixGrid> ch;
    for (int k = 0; k < 8; ++k) ch.push_back(random_grid(rng));
    auto ia = ia_closed_form(ch);
    for (int i = 0; i < 3; ++i) CHECK(interference_leakage(ia[0], ch, i) <= 1e-18);

    IaSolution zeroed = ia[0];
    for (int j = 0; j < 3; ++j)
        if (j != 1)
            for (auto& v : zeroed.v[std::size_t(j)]) v = Vec2{};
    CHECK(interference_leakage(zeroed, ch, 1) == 0.0);

    IaSolution rnd;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < OfdmGrid::kNUsed; ++k) {
            rnd.v[std::size_t(i)][std::size_t(k)] = normalized(Vec2{rng.cgauss(), rng.cgauss()});
            rnd.u[std::size_t(i)][std::size_t(k)] = normalized(Vec2{rng.cgauss(), rng.cgauss()});
        }
    double leak = interference_leakage(rnd, ch, 0);
    CHECK(leak > 1.0);  // order of the channel energy over 8 bins x 2 interferers
}

TEST_CASE("leakage: frequency form equals time form through Parseval") {
    Rng rng(26);
    std::vector<ChannelMatrixGrid> ch;
    for (int k = 0; k < OfdmGrid::kNUsed; ++k) ch.push_back(random_grid(rng));
    IaSolution rnd;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < OfdmGrid::kNUsed; ++k) {
            rnd.v[std::size_t(i)][std::size_t(k)] = normalized(Vec2{rng.cgauss(), rng.cgauss()});
            rnd.u[std::size_t(i)][std::size_t(k)] = normalized(Vec2{rng.cgauss(), rng.cgauss()});
        }
    for (int i = 0; i < 3; ++i) {
        double f = interference_leakage(rnd, ch, i);
        double t = interference_leakage_time(equivalent_interference_spectra(rnd, ch, i));
        CHECK(std::abs(f - t) <= 1e-9 * std::max(1.0, f));
    }
}

TEST_CASE("ber: identical, complemented, independent") {
    auto a = random_bits(10000, 1);
    CHECK(ber(a, a) == 0.0);
    auto flipped = a;
    for (auto& b : flipped) b ^= 1;
    CHECK(ber(flipped, a) == 1.0);
    auto b = random_bits(10000, 2);
    CHECK(std::abs(ber(a, b) - 0.5) < 0.02);
    CHECK_THROWS_AS(ber(a, std::vector<uint8_t>(10, 0)), BadLength);
}

TEST_CASE("achievable sum rate: ceilings, floors and TDMA sharing") {
    std::array<std::vector<std::pair<int, double>>, 3> all_pass, none_pass;
    for (int u = 0; u < 3; ++u)
        for (const auto& r : rate_table()) {
            all_pass[std::size_t(u)].push_back({r.rate_mbps, 0.0});
            none_pass[std::size_t(u)].push_back({r.rate_mbps, 0.5});
        }
    CHECK(achievable_sum_rate(all_pass, 1e-4, false) == doctest::Approx(162.0));
    CHECK(achievable_sum_rate(none_pass, 1e-4, false) == 0.0);
    CHECK(achievable_sum_rate(all_pass, 1e-4, true) == doctest::Approx(54.0));
    // A vacuous constraint admits every rate.
    CHECK(achievable_sum_rate(none_pass, 1.0, false) == doctest::Approx(162.0));
}

TEST_SUITE_END();

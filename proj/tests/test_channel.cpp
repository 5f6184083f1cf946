#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "iasim/channel.hpp"

using namespace iasim;

namespace {

InterferenceChannelRealization zero_network(int n_taps = 1) {
    InterferenceChannelRealization ch;
    for (auto& row : ch.links)
        for (auto& link : row) link.taps.assign(std::size_t(n_taps), Mat2{});
    ch.tap_power.assign(std::size_t(n_taps), 1.0 / n_taps);
    return ch;
}

TxSignals zero_tx(std::size_t len) {
    TxSignals tx;
    for (auto& u : tx)
        for (auto& a : u) a.assign(len, cplx(0.0, 0.0));
    return tx;
}

double stream_power(const std::vector<cplx>& s) {
    double p = 0.0;
    for (const auto& v : s) p += std::norm(v);
    return p / double(s.size());
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("channel");

TEST_CASE("single_tap profile yields one tap per link") {
    ChannelGenConfig cfg;
    cfg.profile = PowerDelayProfile::SingleTap;
    auto ch = generate_network(cfg, 7);
    for (const auto& row : ch.links)
        for (const auto& link : row) CHECK(link.taps.size() == 1);
}

TEST_CASE("generation is deterministic in the seed") {
    ChannelGenConfig cfg;
    auto a = generate_network(cfg, 42);
    auto b = generate_network(cfg, 42);
    for (int i = 0; i < kNumUsers; ++i)
        for (int j = 0; j < kNumUsers; ++j)
            for (std::size_t n = 0; n < a.links[i][j].taps.size(); ++n) {
                CHECK(a.links[i][j].taps[n].m00 == b.links[i][j].taps[n].m00);
                CHECK(a.links[i][j].taps[n].m11 == b.links[i][j].taps[n].m11);
            }
    auto c = generate_network(cfg, 43);
    CHECK(a.links[0][0].taps[0].m00 != c.links[0][0].taps[0].m00);
}

TEST_CASE("exponential profile: unit mean link energy and matching tap ratios") {
    ChannelGenConfig cfg;  // 8 taps, 50 ns
    const int n_nets = 1200;
    double energy_sum = 0.0;
    std::vector<double> tap_energy(8, 0.0);
    int links_total = 0;
    for (int t = 0; t < n_nets; ++t) {
        auto ch = generate_network(cfg, 1000 + uint64_t(t));
        for (const auto& row : ch.links)
            for (const auto& link : row) {
                energy_sum += link.energy();
                ++links_total;
                for (int n = 0; n < 8; ++n) tap_energy[n] += link.taps[n].fro_norm2();
            }
    }
    double mean_energy = energy_sum / links_total;
    CHECK(mean_energy == doctest::Approx(1.0).epsilon(0.02));

    // Per-tap energies follow the configured exponential profile.
    std::vector<double> profile(8);
    double s = 0.0;
    for (int n = 0; n < 8; ++n) s += (profile[n] = std::exp(-double(n)));
    for (auto& v : profile) v /= s;
    for (int n = 0; n < 8; ++n) {
        double measured = tap_energy[n] / links_total;
        CHECK(measured == doctest::Approx(profile[n]).epsilon(0.05));
    }
}

TEST_CASE("freq_response: flat, two-tap closed form, DFT oracle") {
    MimoFir flat{{Mat2::diag(2.0, 3.0)}};
    auto fr = freq_response(flat, 64);
    for (const auto& m : fr) {
        CHECK(std::abs(m.m00 - cplx(2.0, 0.0)) < 1e-12);
        CHECK(std::abs(m.m11 - cplx(3.0, 0.0)) < 1e-12);
    }

    MimoFir two{{Mat2::identity(), Mat2::identity()}};
    auto fr2 = freq_response(two, 64);
    for (std::size_t k = 0; k < 64; ++k) {
        cplx expect = 1.0 + std::polar(1.0, -2.0 * kPi * double(k) / 64.0);
        CHECK(std::abs(fr2[k].m00 - expect) < 1e-12);
        CHECK(std::abs(fr2[k].m01) < 1e-12);
    }

    Rng rng(9);
    MimoFir rnd;
    for (int n = 0; n < 8; ++n)
        rnd.taps.push_back(Mat2{rng.cgauss(), rng.cgauss(), rng.cgauss(), rng.cgauss()});
    auto fr3 = freq_response(rnd, 64);
    for (std::size_t k = 0; k < 64; ++k) {
        Mat2 direct{};
        for (std::size_t n = 0; n < rnd.taps.size(); ++n) {
            cplx w = std::polar(1.0, -2.0 * kPi * double(k * n) / 64.0);
            direct = direct + rnd.taps[n] * w;
        }
        CHECK((fr3[k] - direct).fro_norm() < 1e-12);
    }

    MimoFir toolong;
    toolong.taps.assign(65, Mat2::identity());
    CHECK_THROWS_AS(freq_response(toolong, 64), BadLength);
}

TEST_CASE("propagate: identity passthrough") {
    auto ch = zero_network();
    ch.links[0][0].taps[0] = Mat2::identity();
    auto tx = zero_tx(256);
    Rng rng(11);
    for (auto& v : tx[0][0]) v = rng.cgauss();
    for (auto& v : tx[0][1]) v = rng.cgauss();
    auto rx = propagate(tx, ch, ImpairmentConfig::noiseless(), 0);
    for (std::size_t t = 0; t < 256; ++t) {
        CHECK(std::abs(rx[0][0][t] - tx[0][0][t]) < 1e-15);
        CHECK(std::abs(rx[0][1][t] - tx[0][1][t]) < 1e-15);
    }
    CHECK(stream_power(rx[1][0]) == 0.0);
    CHECK(stream_power(rx[2][0]) == 0.0);
}

TEST_CASE("propagate: a link delay shifts that component by exactly mu") {
    auto ch = zero_network();
    ch.links[1][0].taps[0] = Mat2::identity();
    ch.delays_samples[1][0] = 5;
    auto tx = zero_tx(300);
    Rng rng(12);
    for (auto& v : tx[0][0]) v = rng.cgauss();
    auto rx = propagate(tx, ch, ImpairmentConfig::noiseless(), 0);

    // Cross-correlation of rx with tx peaks at lag 5.
    int best_lag = -1;
    double best = -1.0;
    for (int lag = 0; lag < 12; ++lag) {
        cplx acc(0.0, 0.0);
        for (std::size_t t = 0; t < 300; ++t) acc += rx[1][0][t + lag] * std::conj(tx[0][0][t]);
        if (std::abs(acc) > best) {
            best = std::abs(acc);
            best_lag = lag;
        }
    }
    CHECK(best_lag == 5);
}

TEST_CASE("propagate: transmitter noise power calibrates to tx_evm_db") {
    auto ch = zero_network();
    ch.links[0][0].taps[0] = Mat2::identity();
    auto tx = zero_tx(100000);
    Rng rng(13);
    for (auto& v : tx[0][0]) v = rng.cgauss();

    ImpairmentConfig imp = ImpairmentConfig::noiseless();
    imp.tx_evm_db = -20.0;
    auto noisy = propagate(tx, ch, imp, 99);
    auto clean = propagate(tx, ch, ImpairmentConfig::noiseless(), 99);
    double err = 0.0, ref = 0.0;
    for (std::size_t t = 0; t < 100000; ++t) {
        err += std::norm(noisy[0][0][t] - clean[0][0][t]);
        ref += std::norm(clean[0][0][t]);
    }
    double evm_db = 10.0 * std::log10(err / ref);
    CHECK(std::abs(evm_db + 20.0) < 0.3);
}

TEST_CASE("propagate: linearity and superposition with noise disabled") {
    ChannelGenConfig cfg;
    auto ch = generate_network(cfg, 5);
    auto tx = zero_tx(400);
    Rng rng(14);
    for (auto& u : tx)
        for (auto& a : u)
            for (auto& v : a) v = rng.cgauss();

    auto rx_all = propagate(tx, ch, ImpairmentConfig::noiseless(), 0);

    // Scaling one user's input scales its contribution linearly.
    TxSignals tx_scaled = zero_tx(400);
    const cplx alpha(0.3, -1.2);
    for (int a = 0; a < 2; ++a)
        for (std::size_t t = 0; t < 400; ++t) tx_scaled[0][a][t] = tx[0][a][t] * alpha;
    auto rx_scaled = propagate(tx_scaled, ch, ImpairmentConfig::noiseless(), 0);

    TxSignals tx_solo = zero_tx(400);
    tx_solo[0] = tx[0];
    auto rx_solo = propagate(tx_solo, ch, ImpairmentConfig::noiseless(), 0);
    for (std::size_t t = 0; t < rx_solo[0][0].size(); ++t) {
        CHECK(std::abs(rx_scaled[0][0][t] - rx_solo[0][0][t] * alpha) < 1e-12);
    }

    // Superposition: sum of single-user runs equals the joint run.
    RxSignals sum;
    for (int i = 0; i < 3; ++i)
        for (int r = 0; r < 2; ++r) sum[i][r].assign(rx_all[i][r].size(), cplx(0.0, 0.0));
    for (int j = 0; j < 3; ++j) {
        TxSignals solo = zero_tx(400);
        solo[j] = tx[j];
        auto rx_j = propagate(solo, ch, ImpairmentConfig::noiseless(), 0);
        for (int i = 0; i < 3; ++i)
            for (int r = 0; r < 2; ++r)
                for (std::size_t t = 0; t < sum[i][r].size(); ++t) sum[i][r][t] += rx_j[i][r][t];
    }
    for (int i = 0; i < 3; ++i)
        for (int r = 0; r < 2; ++r)
            for (std::size_t t = 0; t < sum[i][r].size(); ++t)
                CHECK(std::abs(sum[i][r][t] - rx_all[i][r][t]) < 1e-12);
}

TEST_CASE("propagate: residual transmitter noise scales with channel gain") {
    auto ch = zero_network();
    ch.links[0][0].taps[0] = Mat2::identity();
    ch.links[1][1].taps[0] = Mat2::identity() * cplx(2.0, 0.0);  // 6 dB higher gain
    auto tx = zero_tx(60000);
    Rng rng(15);
    for (auto& v : tx[0][0]) v = rng.cgauss();
    for (std::size_t t = 0; t < tx[1][0].size(); ++t) tx[1][0][t] = rng.cgauss();

    ImpairmentConfig imp = ImpairmentConfig::noiseless();
    imp.tx_evm_db = -20.0;
    auto noisy = propagate(tx, ch, imp, 7);
    auto clean = propagate(tx, ch, ImpairmentConfig::noiseless(), 7);
    double p0 = 0.0, p1 = 0.0;
    for (std::size_t t = 0; t < noisy[0][0].size(); ++t) {
        p0 += std::norm(noisy[0][0][t] - clean[0][0][t]);
        p1 += std::norm(noisy[1][0][t] - clean[1][0][t]);
    }
    double ratio_db = 10.0 * std::log10(p1 / p0);
    CHECK(std::abs(ratio_db - 6.02) < 1.0);
}

TEST_CASE("age_channel: rho = 1 is the identity") {
    ChannelGenConfig cfg;
    auto ch = generate_network(cfg, 21);
    auto aged = age_channel(ch, 1.0, 77);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (std::size_t n = 0; n < ch.links[i][j].taps.size(); ++n)
                CHECK((aged.links[i][j].taps[n] - ch.links[i][j].taps[n]).fro_norm() == 0.0);
}

TEST_CASE("age_channel: empirical tap correlation tracks rho") {
    ChannelGenConfig cfg;
    cfg.n_taps = 4;
    cfg.profile = PowerDelayProfile::Uniform;
    for (double rho : {0.0, 0.5, 0.9}) {
        double num = 0.0, den_a = 0.0, den_b = 0.0;
        for (int t = 0; t < 500; ++t) {
            auto ch = generate_network(cfg, 3000 + uint64_t(t));
            auto aged = age_channel(ch, rho, 4000 + uint64_t(t));
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    for (std::size_t n = 0; n < 4; ++n) {
                        const Mat2& a = ch.links[i][j].taps[n];
                        const Mat2& b = aged.links[i][j].taps[n];
                        const cplx* ea[4] = {&a.m00, &a.m01, &a.m10, &a.m11};
                        const cplx* eb[4] = {&b.m00, &b.m01, &b.m10, &b.m11};
                        for (int e = 0; e < 4; ++e) {
                            num += (std::conj(*ea[e]) * (*eb[e])).real();
                            den_a += std::norm(*ea[e]);
                            den_b += std::norm(*eb[e]);
                        }
                    }
        }
        double corr = num / std::sqrt(den_a * den_b);
        CHECK(std::abs(corr - rho) < 0.02);
    }
}

TEST_CASE("channel files round-trip bit-exactly") {
    ChannelGenConfig cfg;
    std::vector<InterferenceChannelRealization> nets;
    for (int t = 0; t < 3; ++t) nets.push_back(generate_network(cfg, 500 + uint64_t(t)));
    nets[1].delays_samples[2][0] = 7;

    auto path = temp_path("iasim_chan_test.json");
    save_channels(nets, path);
    auto loaded = load_channels(path);
    REQUIRE(loaded.size() == nets.size());
    for (std::size_t r = 0; r < nets.size(); ++r) {
        CHECK(loaded[r].delays_samples == nets[r].delays_samples);
        CHECK(loaded[r].tap_power == nets[r].tap_power);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (std::size_t n = 0; n < nets[r].links[i][j].taps.size(); ++n) {
                    const Mat2& a = nets[r].links[i][j].taps[n];
                    const Mat2& b = loaded[r].links[i][j].taps[n];
                    CHECK(a.m00 == b.m00);
                    CHECK(a.m01 == b.m01);
                    CHECK(a.m10 == b.m10);
                    CHECK(a.m11 == b.m11);
                }
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated channel file raises ParseError") {
    ChannelGenConfig cfg;
    auto path = temp_path("iasim_chan_trunc.json");
    save_channels({generate_network(cfg, 1)}, path);
    std::string text;
    {
        std::ifstream f(path);
        std::getline(f, text, '\0');
    }
    {
        std::ofstream f(path);
        f << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(load_channels(path), ParseError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_channels(path), IoError);
}

TEST_CASE("loaded fixture preserves link energies") {
    ChannelGenConfig cfg;
    cfg.n_taps = 5;
    cfg.profile = PowerDelayProfile::Uniform;
    auto net = generate_network(cfg, 321);
    auto path = temp_path("iasim_chan_energy.json");
    save_channels({net}, path);
    auto loaded = load_channels(path);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(loaded[0].links[i][j].energy() ==
                  doctest::Approx(net.links[i][j].energy()).epsilon(1e-15));
    std::filesystem::remove(path);
}

TEST_SUITE_END();

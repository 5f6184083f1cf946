#include "iasim/channel.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace iasim {

namespace {

constexpr double kSamplePeriodNs = 50.0;  // 20 Msample/s

std::vector<double> tap_profile(const ChannelGenConfig& cfg) {
    std::vector<double> p(std::max(1, cfg.n_taps), 0.0);
    switch (cfg.profile) {
        case PowerDelayProfile::SingleTap:
            p.assign(1, 1.0);
            break;
        case PowerDelayProfile::Uniform:
            p.assign(std::max(1, cfg.n_taps), 1.0 / std::max(1, cfg.n_taps));
            break;
        case PowerDelayProfile::Exponential: {
            double tau = std::max(1e-3, cfg.rms_delay_spread_ns);
            double sum = 0.0;
            for (std::size_t n = 0; n < p.size(); ++n) {
                p[n] = std::exp(-double(n) * kSamplePeriodNs / tau);
                sum += p[n];
            }
            for (auto& v : p) v /= sum;
            break;
        }
    }
    return p;
}

Mat2 draw_tap(Rng& rng, double power) {
    double s = std::sqrt(power / 4.0);  // unit link energy over 4 entries
    return Mat2{rng.cgauss() * s, rng.cgauss() * s, rng.cgauss() * s, rng.cgauss() * s};
}

}  // namespace

InterferenceChannelRealization generate_network(const ChannelGenConfig& cfg,
                                                uint64_t rng_seed) {
    InterferenceChannelRealization out;
    out.tap_power = tap_profile(cfg);
    Rng rng(rng_seed);
    for (int i = 0; i < kNumUsers; ++i) {
        for (int j = 0; j < kNumUsers; ++j) {
            MimoFir& link = out.links[i][j];
            link.taps.resize(out.tap_power.size());
            for (std::size_t n = 0; n < out.tap_power.size(); ++n)
                link.taps[n] = draw_tap(rng, out.tap_power[n]);
            out.delays_samples[i][j] = 0;
        }
    }
    return out;
}

std::vector<Mat2> freq_response(const MimoFir& ch, std::size_t n_fft) {
    if (ch.taps.size() > n_fft)
        throw BadLength("freq_response: more taps than FFT bins");
    std::array<std::vector<cplx>, 4> comp;
    for (auto& c : comp) c.assign(n_fft, cplx(0.0, 0.0));
    for (std::size_t n = 0; n < ch.taps.size(); ++n) {
        comp[0][n] = ch.taps[n].m00;
        comp[1][n] = ch.taps[n].m01;
        comp[2][n] = ch.taps[n].m10;
        comp[3][n] = ch.taps[n].m11;
    }
    for (auto& c : comp) fft_inplace(c.data(), n_fft, +1);
    std::vector<Mat2> out(n_fft);
    for (std::size_t k = 0; k < n_fft; ++k)
        out[k] = Mat2{comp[0][k], comp[1][k], comp[2][k], comp[3][k]};
    return out;
}

RxSignals propagate(const TxSignals& tx, const InterferenceChannelRealization& ch,
                    const ImpairmentConfig& imp, uint64_t rng_seed) {
    const std::size_t len = tx[0][0].size();
    for (const auto& user : tx)
        for (const auto& ant : user)
            if (ant.size() != len)
                throw LengthMismatch("propagate: transmit streams differ in length");

    int max_delay = 0;
    for (const auto& row : ch.delays_samples)
        for (int d : row) max_delay = std::max(max_delay, d);
    std::size_t max_taps = 1;
    for (const auto& row : ch.links)
        for (const auto& link : row) max_taps = std::max(max_taps, link.taps.size());
    const std::size_t out_len = len + std::size_t(max_delay) + max_taps;

    // Transmitter noise is injected at the antenna, so all receivers see the
    // same noisy waveform through their own channels.
    TxSignals noisy = tx;
    if (imp.tx_evm_db) {
        double evm_lin = std::pow(10.0, *imp.tx_evm_db / 10.0);
        for (int j = 0; j < kNumUsers; ++j) {
            for (int a = 0; a < kNumAntennas; ++a) {
                auto& s = noisy[j][a];
                std::size_t first = 0, last = 0;
                bool any = false;
                for (std::size_t n = 0; n < s.size(); ++n) {
                    if (std::norm(s[n]) > 0.0) {
                        if (!any) first = n;
                        last = n;
                        any = true;
                    }
                }
                if (!any) continue;
                double power = 0.0;
                for (std::size_t n = first; n <= last; ++n) power += std::norm(s[n]);
                power /= double(last - first + 1);
                double amp = std::sqrt(power * evm_lin);
                Rng rng(mix_seed(rng_seed, 0x74786eULL, uint64_t(j * 2 + a)));
                for (std::size_t n = first; n <= last; ++n) s[n] += rng.cgauss() * amp;
            }
        }
    }

    RxSignals rx;
    for (int i = 0; i < kNumUsers; ++i) {
        for (int r = 0; r < kNumAntennas; ++r) rx[i][r].assign(out_len, cplx(0.0, 0.0));
        for (int j = 0; j < kNumUsers; ++j) {
            const MimoFir& link = ch.links[i][j];
            const int mu = ch.delays_samples[i][j];
            for (std::size_t n = 0; n < link.taps.size(); ++n) {
                const Mat2& h = link.taps[n];
                const std::size_t shift = n + std::size_t(mu);
                for (std::size_t t = 0; t < len; ++t) {
                    const cplx x0 = noisy[j][0][t];
                    const cplx x1 = noisy[j][1][t];
                    rx[i][0][t + shift] += h.m00 * x0 + h.m01 * x1;
                    rx[i][1][t + shift] += h.m10 * x0 + h.m11 * x1;
                }
            }
        }
    }

    if (imp.awgn_snr_db && std::isfinite(*imp.awgn_snr_db)) {
        // Nominal desired-link receive power per antenna for a unit-power
        // transmitter over a unit-energy link: 1/4.
        double sigma2 = 0.25 / std::pow(10.0, *imp.awgn_snr_db / 10.0);
        double amp = std::sqrt(sigma2);
        for (int i = 0; i < kNumUsers; ++i) {
            for (int r = 0; r < kNumAntennas; ++r) {
                Rng rng(mix_seed(rng_seed, 0x6177676eULL, uint64_t(i * 2 + r)));
                for (auto& v : rx[i][r]) v += rng.cgauss() * amp;
            }
        }
    }
    return rx;
}

InterferenceChannelRealization age_channel(const InterferenceChannelRealization& ch,
                                           double rho, uint64_t rng_seed) {
    if (rho == 1.0) return ch;
    InterferenceChannelRealization out = ch;
    const std::size_t n_taps = ch.links[0][0].taps.size();
    std::vector<double> power = ch.tap_power;
    if (power.size() != n_taps) power.assign(n_taps, 1.0 / double(n_taps));

    double keep = rho;
    double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    Rng rng(rng_seed);
    for (int i = 0; i < kNumUsers; ++i)
        for (int j = 0; j < kNumUsers; ++j)
            for (std::size_t n = 0; n < n_taps; ++n) {
                Mat2 nu = draw_tap(rng, power[n]);
                out.links[i][j].taps[n] =
                    ch.links[i][j].taps[n] * cplx(keep, 0.0) + nu * cplx(innov, 0.0);
            }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------
namespace {

using nlohmann::json;

json complex_to_json(const cplx& v) { return json::array({v.real(), v.imag()}); }

cplx complex_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2)
        throw ParseError("channel file: complex entries must be [re, im] pairs");
    return cplx(j[0].get<double>(), j[1].get<double>());
}

json realization_to_json(const InterferenceChannelRealization& ch) {
    json links = json::array();
    for (int i = 0; i < kNumUsers; ++i) {
        json row = json::array();
        for (int j = 0; j < kNumUsers; ++j) {
            json mat = json::array();
            for (int r = 0; r < kNumAntennas; ++r) {
                json cols = json::array();
                for (int c = 0; c < kNumAntennas; ++c) {
                    json taps = json::array();
                    for (const auto& t : ch.links[i][j].taps) {
                        const cplx* e[4] = {&t.m00, &t.m01, &t.m10, &t.m11};
                        taps.push_back(complex_to_json(*e[r * 2 + c]));
                    }
                    cols.push_back(taps);
                }
                mat.push_back(cols);
            }
            row.push_back(mat);
        }
        links.push_back(row);
    }
    json out;
    out["n_taps"] = ch.n_taps();
    out["links"] = links;
    out["delays"] = ch.delays_samples;
    if (!ch.tap_power.empty()) out["tap_power"] = ch.tap_power;
    return out;
}

InterferenceChannelRealization realization_from_json(const json& j) {
    InterferenceChannelRealization ch;
    int n_taps = j.at("n_taps").get<int>();
    if (n_taps < 1) throw ParseError("channel file: n_taps must be positive");
    const json& links = j.at("links");
    if (!links.is_array() || links.size() != kNumUsers)
        throw ParseError("channel file: expected 3x3 link grid");
    for (int i = 0; i < kNumUsers; ++i) {
        if (!links[i].is_array() || links[i].size() != kNumUsers)
            throw ParseError("channel file: expected 3x3 link grid");
        for (int jj = 0; jj < kNumUsers; ++jj) {
            const json& mat = links[i][jj];
            if (!mat.is_array() || mat.size() != kNumAntennas)
                throw ParseError("channel file: link must be a 2x2 array of tap lists");
            MimoFir& link = ch.links[i][jj];
            link.taps.assign(std::size_t(n_taps), Mat2{});
            for (int r = 0; r < kNumAntennas; ++r) {
                if (!mat[r].is_array() || mat[r].size() != kNumAntennas)
                    throw ParseError("channel file: link must be a 2x2 array of tap lists");
                for (int c = 0; c < kNumAntennas; ++c) {
                    const json& taps = mat[r][c];
                    if (!taps.is_array() || int(taps.size()) != n_taps)
                        throw ParseError("channel file: tap list length mismatch");
                    for (int n = 0; n < n_taps; ++n) {
                        cplx v = complex_from_json(taps[n]);
                        Mat2& t = link.taps[std::size_t(n)];
                        cplx* e[4] = {&t.m00, &t.m01, &t.m10, &t.m11};
                        *e[r * 2 + c] = v;
                    }
                }
            }
        }
    }
    if (j.contains("delays")) {
        const json& d = j.at("delays");
        if (!d.is_array() || d.size() != kNumUsers)
            throw ParseError("channel file: delays must be a 3x3 grid");
        for (int i = 0; i < kNumUsers; ++i)
            for (int jj = 0; jj < kNumUsers; ++jj) {
                int mu = d[i][jj].get<int>();
                if (mu < 0) throw ParseError("channel file: delays must be non-negative");
                ch.delays_samples[i][jj] = mu;
            }
    }
    if (j.contains("tap_power"))
        ch.tap_power = j.at("tap_power").get<std::vector<double>>();
    return ch;
}

}  // namespace

void save_channels(const std::vector<InterferenceChannelRealization>& realizations,
                   const std::string& path) {
    json out;
    out["format"] = "iasim-channels";
    out["version"] = 1;
    json list = json::array();
    for (const auto& ch : realizations) list.push_back(realization_to_json(ch));
    out["realizations"] = list;

    std::ofstream f(path);
    if (!f) throw IoError("cannot open channel file for writing: " + path);
    f << out.dump(1, '\t') << "\n";
    if (!f) throw IoError("write failed: " + path);
}

std::vector<InterferenceChannelRealization> load_channels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open channel file: " + path);
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("channel file parse error: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "iasim-channels")
            throw ParseError("channel file: unexpected format tag");
        if (doc.at("version").get<int>() != 1)
            throw ParseError("channel file: unsupported version");
        std::vector<InterferenceChannelRealization> out;
        for (const auto& r : doc.at("realizations"))
            out.push_back(realization_from_json(r));
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("channel file structure error: ") + e.what());
    }
}

}  // namespace iasim

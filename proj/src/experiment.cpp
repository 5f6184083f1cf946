#include "iasim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <memory>
#include <mutex>
#include <thread>

namespace iasim {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::IA: return "IA";
        case Scheme::PerfectIA: return "PerfectIA";
        case Scheme::MaxSINR: return "MaxSINR";
        case Scheme::DetTdma: return "DET_TDMA";
        case Scheme::SisoTdma: return "SISO_TDMA";
    }
    return "?";
}

Scheme scheme_from_name(const std::string& name) {
    for (Scheme s : {Scheme::IA, Scheme::PerfectIA, Scheme::MaxSINR, Scheme::DetTdma,
                     Scheme::SisoTdma})
        if (name == scheme_name(s)) return s;
    throw ConfigError("unknown scheme name: " + name);
}

const char* mode_name(DecodeMode m) {
    return m == DecodeMode::PreFft ? "preFFT" : "postFFT";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "M") return SweepAxis::M;
    if (name == "L") return SweepAxis::L;
    if (name == "rho") return SweepAxis::Rho;
    if (name == "snr") return SweepAxis::Snr;
    throw ConfigError("unknown sweep axis: " + name + " (expected M, L, rho or snr)");
}

const char* sweep_axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::M: return "M";
        case SweepAxis::L: return "L";
        case SweepAxis::Rho: return "rho";
        case SweepAxis::Snr: return "snr";
    }
    return "?";
}

std::vector<ChannelMatrixGrid> used_bin_grids(const InterferenceChannelRealization& net) {
    const auto& grid = OfdmGrid::standard();
    std::vector<ChannelMatrixGrid> out(OfdmGrid::kNUsed);
    for (int i = 0; i < kNumUsers; ++i)
        for (int j = 0; j < kNumUsers; ++j) {
            auto fr = freq_response(net.links[std::size_t(i)][std::size_t(j)], OfdmGrid::kNfft);
            for (int k = 0; k < OfdmGrid::kNUsed; ++k)
                out[std::size_t(k)][std::size_t(i)][std::size_t(j)] =
                    fr[std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(k)]))];
        }
    return out;
}

std::array<std::vector<cplx>, 2> emulate_async(
    const std::array<std::array<std::vector<cplx>, 2>, 3>& captures,
    const std::array<int, 3>& delays) {
    std::size_t base_len = 0;
    for (int j = 0; j < 3; ++j) {
        if (captures[std::size_t(j)][0].size() != captures[std::size_t(j)][1].size())
            throw LengthMismatch("emulate_async: antenna streams differ in length");
        if (delays[std::size_t(j)] < 0)
            throw LengthMismatch("emulate_async: delays must be non-negative");
        base_len = std::max(base_len,
                            captures[std::size_t(j)][0].size() + std::size_t(delays[std::size_t(j)]));
    }
    std::array<std::vector<cplx>, 2> out;
    for (auto& s : out) s.assign(base_len, cplx(0.0, 0.0));
    for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 2; ++a) {
            const auto& src = captures[std::size_t(j)][std::size_t(a)];
            const std::size_t d = std::size_t(delays[std::size_t(j)]);
            for (std::size_t n = 0; n < src.size(); ++n) out[std::size_t(a)][n + d] += src[n];
        }
    return out;
}

// ---------------------------------------------------------------------------
// Internals
// ---------------------------------------------------------------------------
namespace {

constexpr std::size_t kFrameOffset = 300;
constexpr std::size_t kTailPad = 200;
constexpr int kSyncTolerance = 3;  // samples; larger errors break the CP budget
constexpr double kFailedEvmDb = 5.0;
constexpr double kFailedBer = 0.5;

uint64_t hash_realization(const InterferenceChannelRealization& net) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h ^= bits;
        h *= 0x100000001b3ULL;
    };
    for (const auto& row : net.links)
        for (const auto& link : row)
            for (const auto& t : link.taps) {
                const cplx* e[4] = {&t.m00, &t.m01, &t.m10, &t.m11};
                for (const auto* c : e) {
                    mix(c->real());
                    mix(c->imag());
                }
            }
    return h;
}

InterferenceChannelRealization trial_channel(const ExperimentConfig& cfg,
                                             std::size_t trial, uint64_t trial_seed);

TxSignals place_frames(const std::array<const TxFrame*, 3>& frames,
                       const std::array<bool, 3>& active) {
    std::size_t len = 0;
    for (int j = 0; j < 3; ++j)
        if (frames[std::size_t(j)])
            len = std::max(len, frames[std::size_t(j)]->streams[0].size());
    len += kFrameOffset + kTailPad;
    TxSignals tx;
    for (auto& u : tx)
        for (auto& a : u) a.assign(len, cplx(0.0, 0.0));
    for (int j = 0; j < 3; ++j) {
        if (!active[std::size_t(j)] || !frames[std::size_t(j)]) continue;
        for (int a = 0; a < 2; ++a)
            std::copy(frames[std::size_t(j)]->streams[std::size_t(a)].begin(),
                      frames[std::size_t(j)]->streams[std::size_t(a)].end(),
                      tx[std::size_t(j)][std::size_t(a)].begin() + long(kFrameOffset));
    }
    return tx;
}

struct TrainingOutcome {
    bool ok = false;
    std::string reason;
    std::vector<ChannelMatrixGrid> est;
    std::array<std::array<double, 3>, 3> srnr_mean{};
    std::vector<double> srnr_desired, srnr_interf;
    double sigma2_hat = 0.0;
};

double clipped_db(double v) { return std::isfinite(v) ? v : 200.0; }

TrainingOutcome run_training(const ExperimentConfig& cfg,
                             const InterferenceChannelRealization& net,
                             uint64_t trial_seed) {
    TrainingOutcome out;
    out.est.assign(OfdmGrid::kNUsed, ChannelMatrixGrid{});

    std::array<std::array<std::vector<double>, 3>, 3> srnr_samples;
    double sigma2_acc = 0.0;
    int sigma2_n = 0;

    for (int j = 0; j < kNumUsers; ++j) {
        for (int a = 0; a < kNumAntennas; ++a) {
            auto tf = assemble_training_frame(cfg.m_training, a);
            TxFrame shim;
            shim.streams = tf;
            std::array<const TxFrame*, 3> frames{};
            frames[std::size_t(j)] = &shim;
            std::array<bool, 3> active{};
            active[std::size_t(j)] = true;
            TxSignals tx = place_frames(frames, active);

            uint64_t slot_seed =
                mix_seed(trial_seed, seed_tag::kTrainNoise, uint64_t(j * 2 + a));
            RxSignals rx = propagate(tx, net, cfg.impairments, slot_seed);

            // Training captures are trigger-aligned (one hardware time base
            // per trial); per-link propagation delays become consistent
            // phase slopes across both columns of each estimated matrix.
            ReceiveOptions opt;
            opt.forced_start = kFrameOffset;
            opt.forced_cfo_hz = 0.0;

            for (int i = 0; i < kNumUsers; ++i) {
                auto est = estimate_training_slot(rx[std::size_t(i)], cfg.m_training, opt);
                if (!est.detected) {
                    out.reason = "training detection failed";
                    return out;
                }
                for (int r = 0; r < kNumAntennas; ++r) {
                    for (int k = 0; k < OfdmGrid::kNUsed; ++k) {
                        Mat2& m = out.est[std::size_t(k)][std::size_t(i)][std::size_t(j)];
                        cplx h = est.h[std::size_t(r)][std::size_t(k)];
                        if (r == 0 && a == 0) m.m00 = h;
                        if (r == 0 && a == 1) m.m01 = h;
                        if (r == 1 && a == 0) m.m10 = h;
                        if (r == 1 && a == 1) m.m11 = h;
                        double s = est.s_pow[std::size_t(r)][std::size_t(k)];
                        double n = est.n_pow[std::size_t(r)][std::size_t(k)];
                        double snr_db = n > 0.0 ? 10.0 * std::log10(s / n) : 200.0;
                        srnr_samples[std::size_t(i)][std::size_t(j)].push_back(snr_db);
                        if (i == j) {
                            sigma2_acc += n;
                            ++sigma2_n;
                        }
                    }
                }
            }
        }
    }

    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const auto& v = srnr_samples[std::size_t(i)][std::size_t(j)];
            double acc = 0.0;
            for (double x : v) acc += clipped_db(x);
            out.srnr_mean[std::size_t(i)][std::size_t(j)] = v.empty() ? 0.0 : acc / double(v.size());
            auto& pool = (i == j) ? out.srnr_desired : out.srnr_interf;
            pool.insert(pool.end(), v.begin(), v.end());
        }
    out.sigma2_hat = sigma2_n > 0 ? sigma2_acc / double(sigma2_n) : 0.0;
    out.ok = true;
    return out;
}

SubcarrierVectors user_vectors(const IaSolution& sol, int user, bool decoders) {
    return decoders ? sol.u[std::size_t(user)] : sol.v[std::size_t(user)];
}

/// Mean decoder-output power per (symbol, used bin) at a fixed timing;
/// the measured-interference probe of the sequential schemes.
double measured_power_post(const std::array<std::vector<cplx>, 2>& streams,
                           const SubcarrierVectors& u, int n_symbols,
                           std::size_t frame_start) {
    const auto& grid = OfdmGrid::standard();
    double acc = 0.0;
    int count = 0;
    std::array<cplx, 64> s0, s1;
    for (int s = 0; s < n_symbols; ++s) {
        std::size_t t = frame_start +
                        std::size_t(kPreambleLen + s * kSymbolLen + OfdmGrid::kCpLen - 4);
        if (t + 64 > streams[0].size()) break;
        for (int m = 0; m < 64; ++m) {
            s0[std::size_t(m)] = streams[0][t + std::size_t(m)];
            s1[std::size_t(m)] = streams[1][t + std::size_t(m)];
        }
        fft_inplace(s0.data(), 64, +1);
        fft_inplace(s1.data(), 64, +1);
        for (int i = 0; i < OfdmGrid::kNUsed; ++i) {
            std::size_t bin =
                std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]));
            const Vec2& ui = u[std::size_t(i)];
            acc += std::norm(std::conj(ui.a) * s0[bin] + std::conj(ui.b) * s1[bin]);
            ++count;
        }
    }
    return count > 0 ? acc / double(count) : 0.0;
}

double prefft_output_energy(const std::array<std::vector<cplx>, 2>& streams,
                            const PreFftDecoder& dec) {
    auto out = apply_prefft_decoder(streams, dec);
    double acc = 0.0;
    for (const auto& v : out) acc += std::norm(v);
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_trial
// ---------------------------------------------------------------------------
namespace {

InterferenceChannelRealization trial_channel(const ExperimentConfig& cfg,
                                             std::size_t trial, uint64_t trial_seed) {
    if (!cfg.channel_file.empty()) {
        static std::mutex cache_mutex;
        static std::map<std::string, std::shared_ptr<std::vector<InterferenceChannelRealization>>>
            cache;
        std::shared_ptr<std::vector<InterferenceChannelRealization>> corpus;
        {
            std::lock_guard<std::mutex> lock(cache_mutex);
            auto it = cache.find(cfg.channel_file);
            if (it == cache.end()) {
                corpus = std::make_shared<std::vector<InterferenceChannelRealization>>(
                    load_channels(cfg.channel_file));
                cache[cfg.channel_file] = corpus;
            } else {
                corpus = it->second;
            }
        }
        if (corpus->empty()) throw ParseError("channel file holds no realizations");
        return (*corpus)[trial % corpus->size()];
    }
    return generate_network(cfg.channel, mix_seed(trial_seed, seed_tag::kChannelGen));
}

struct UserDecoders {
    SubcarrierVectors u;
    PreFftDecoder pre;
    bool have_pre = false;
};

UserRateResult decode_user(const ExperimentConfig& cfg,
                           const std::array<std::vector<cplx>, 2>& rx,
                           const TxFrame& frame, const RateParams& rate,
                           const UserDecoders& dec, std::size_t true_start) {
    UserRateResult out;
    out.rate_mbps = rate.rate_mbps;
    const std::size_t n_bits = frame.source_bits.size();

    if (cfg.decode_postfft) {
        DecodeResult res =
            receive_frame_postfft(rx, dec.u, rate, n_bits, &frame.ref_symbols);
        bool timing_ok =
            res.detected && std::llabs(int64_t(res.frame_start) - int64_t(true_start)) <=
                                kSyncTolerance;
        out.sync_ok_post = timing_ok;
        if (res.detected && res.have_evm) {
            out.evm_db_post = res.evm_db();
            out.ber_post = res.bits.empty() ? kFailedBer : ber(res.bits, frame.source_bits);
        } else {
            out.evm_db_post = kFailedEvmDb;
            out.ber_post = kFailedBer;
        }
    }
    if (cfg.decode_prefft && dec.have_pre) {
        auto filtered = apply_prefft_decoder(rx, dec.pre);
        DecodeResult res = receive_frame(filtered, rate, n_bits, &frame.ref_symbols);
        bool timing_ok =
            res.detected && std::llabs(int64_t(res.frame_start) - int64_t(true_start)) <=
                                kSyncTolerance;
        out.sync_ok_pre = timing_ok;
        if (res.detected && res.have_evm) {
            out.evm_db_pre = res.evm_db();
            out.ber_pre = res.bits.empty() ? kFailedBer : ber(res.bits, frame.source_bits);
        } else {
            out.evm_db_pre = kFailedEvmDb;
            out.ber_pre = kFailedBer;
        }
    }
    return out;
}

UserRateResult decode_user_siso(const ExperimentConfig& cfg,
                                const std::array<std::vector<cplx>, 2>& rx,
                                const TxFrame& frame, const RateParams& rate,
                                std::size_t true_start) {
    UserRateResult out;
    out.rate_mbps = rate.rate_mbps;
    double evm_acc = 0.0, ber_acc = 0.0;
    int n_ok = 0;
    bool all_sync = true;
    for (int r = 0; r < 2; ++r) {
        DecodeResult res =
            receive_frame(rx[std::size_t(r)], rate, frame.source_bits.size(), &frame.ref_symbols);
        bool timing_ok =
            res.detected && std::llabs(int64_t(res.frame_start) - int64_t(true_start)) <=
                                kSyncTolerance;
        all_sync = all_sync && timing_ok;
        if (res.detected && res.have_evm) {
            evm_acc += res.evm_lin;
            ber_acc += res.bits.empty() ? kFailedBer : ber(res.bits, frame.source_bits);
            ++n_ok;
        } else {
            evm_acc += std::pow(10.0, kFailedEvmDb / 10.0);
            ber_acc += kFailedBer;
        }
    }
    out.sync_ok_post = all_sync;
    out.evm_db_post = 10.0 * std::log10(evm_acc / 2.0);
    out.ber_post = ber_acc / 2.0;
    return out;
}

}  // namespace

TrialResult run_trial(const ExperimentConfig& cfg, std::size_t trial_index) {
    TrialResult result;
    result.trial_index = trial_index;
    const uint64_t trial_seed = mix_seed(cfg.seed, seed_tag::kTrial, trial_index);

    InterferenceChannelRealization net = trial_channel(cfg, trial_index, trial_seed);
    result.channel_hash = hash_realization(net);

    try {
        // --- Training stage: six sequential single-antenna transmissions ---
        TrainingOutcome training = run_training(cfg, net, trial_seed);
        if (!training.ok) {
            result.skipped = true;
            result.skip_reason = training.reason;
            return result;
        }
        result.srnr_db = training.srnr_mean;
        result.srnr_samples_desired = std::move(training.srnr_desired);
        result.srnr_samples_interf = std::move(training.srnr_interf);
        result.sigma2_hat = training.sigma2_hat;

        // --- Feedback interval: the true channel may age before data ---
        InterferenceChannelRealization net_data = net;
        for (int step = 0; step < cfg.feedback_delay_units; ++step)
            net_data = age_channel(net_data, cfg.impairments.aging_rho,
                                   mix_seed(trial_seed, seed_tag::kAging, uint64_t(step)));
        auto true_grids = used_bin_grids(net_data);

        // --- Designers run on the estimated (or genie) channels ---
        std::vector<ChannelMatrixGrid> design_copy =
            cfg.genie_csi ? used_bin_grids(net) : training.est;

        auto branches = ia_closed_form(design_copy);
        auto sets = select_smooth_sets(branches[0], branches[1]);
        result.smooth_score0 = sets.score0;
        result.smooth_score1 = sets.score1;
        IaSolution ia = sets.set0;

        bool need_maxsinr = false, need_det = false, need_siso = false, need_ia = false;
        for (Scheme s : cfg.schemes) {
            need_maxsinr |= s == Scheme::MaxSINR;
            need_det |= s == Scheme::DetTdma;
            need_siso |= s == Scheme::SisoTdma;
            need_ia |= s == Scheme::IA || s == Scheme::PerfectIA;
        }
        need_ia |= cfg.async.enabled;

        IaSolution ms;
        if (need_maxsinr) {
            MaxSinrConfig mscfg;
            mscfg.sigma2 = training.sigma2_hat;
            ms = align_solution_phases(
                max_sinr(design_copy, mscfg, mix_seed(trial_seed, seed_tag::kMaxSinrInit)));
        }

        IaSolution det;
        if (need_det) {
            for (int u = 0; u < 3; ++u) {
                std::vector<Mat2> link(OfdmGrid::kNUsed);
                for (int k = 0; k < OfdmGrid::kNUsed; ++k)
                    link[std::size_t(k)] = design_copy[std::size_t(k)][std::size_t(u)][std::size_t(u)];
                auto bf = det_beamformers(link);
                for (int k = 0; k < OfdmGrid::kNUsed; ++k) {
                    det.v[std::size_t(u)][std::size_t(k)] = bf.v[std::size_t(k)];
                    det.u[std::size_t(u)][std::size_t(k)] = bf.u[std::size_t(k)];
                }
            }
            det = align_solution_phases(det);
        }

        IaSolution siso;
        if (need_siso)
            for (int u = 0; u < 3; ++u)
                for (int k = 0; k < OfdmGrid::kNUsed; ++k) {
                    siso.v[std::size_t(u)][std::size_t(k)] = Vec2{1.0, 0.0};
                    siso.u[std::size_t(u)][std::size_t(k)] = Vec2{1.0, 0.0};
                }

        auto decoders_for = [&](const IaSolution& sol) {
            std::array<UserDecoders, 3> out;
            for (int u = 0; u < 3; ++u) {
                out[std::size_t(u)].u = sol.u[std::size_t(u)];
                if (cfg.decode_prefft) {
                    out[std::size_t(u)].pre = build_prefft_decoder(sol, u, cfg.decoder_len);
                    out[std::size_t(u)].have_pre = true;
                }
            }
            return out;
        };
        std::array<UserDecoders, 3> ia_dec, ms_dec, det_dec;
        if (need_ia) ia_dec = decoders_for(ia);
        if (need_maxsinr) ms_dec = decoders_for(ms);
        if (need_det) det_dec = decoders_for(det);

        // --- Data stage: every configured rate, every configured scheme ---
        for (Scheme scheme : cfg.schemes) {
            SchemeTrialResult sr;
            sr.scheme = scheme;
            result.schemes.push_back(sr);
        }

        for (int rate_mbps : cfg.rates) {
            const RateParams& rate = rate_params(rate_mbps);
            std::array<std::vector<uint8_t>, 3> bits;
            for (int u = 0; u < 3; ++u)
                bits[std::size_t(u)] = random_bits(
                    cfg.payload_bytes * 8,
                    mix_seed(trial_seed, seed_tag::kPayloadBits, uint64_t(u), uint64_t(rate_mbps)));

            auto frames_for = [&](const IaSolution& sol) {
                std::array<TxFrame, 3> fr;
                for (int u = 0; u < 3; ++u)
                    fr[std::size_t(u)] =
                        assemble_data_frame(bits[std::size_t(u)], rate, sol.v[std::size_t(u)]);
                return fr;
            };

            std::array<TxFrame, 3> ia_frames;
            if (need_ia) ia_frames = frames_for(ia);

            for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
                Scheme scheme = cfg.schemes[si];
                SchemeTrialResult& sr = result.schemes[si];
                uint64_t scheme_seed = mix_seed(trial_seed, seed_tag::kDataNoise,
                                                uint64_t(si), uint64_t(rate_mbps));

                switch (scheme) {
                    case Scheme::IA:
                    case Scheme::MaxSINR: {
                        const IaSolution& sol = scheme == Scheme::IA ? ia : ms;
                        const auto& dec = scheme == Scheme::IA ? ia_dec : ms_dec;
                        std::array<TxFrame, 3> local;
                        const std::array<TxFrame, 3>& frames =
                            scheme == Scheme::IA ? ia_frames : (local = frames_for(sol));
                        std::array<const TxFrame*, 3> fptr = {&frames[0], &frames[1], &frames[2]};
                        TxSignals tx = place_frames(fptr, {true, true, true});
                        RxSignals rx = propagate(tx, net_data, cfg.impairments, scheme_seed);
                        for (int i = 0; i < 3; ++i) {
                            std::size_t t0 =
                                kFrameOffset + std::size_t(net_data.delays_samples[std::size_t(i)][std::size_t(i)]);
                            sr.per_user[std::size_t(i)].push_back(
                                decode_user(cfg, rx[std::size_t(i)], frames[std::size_t(i)], rate,
                                            dec[std::size_t(i)], t0));
                            sr.leakage[std::size_t(i)] =
                                interference_leakage(sol, true_grids, i);
                        }
                        break;
                    }
                    case Scheme::PerfectIA: {
                        std::array<double, 3> interf_power{};
                        for (int j = 0; j < 3; ++j) {
                            std::array<const TxFrame*, 3> fptr{};
                            fptr[std::size_t(j)] = &ia_frames[std::size_t(j)];
                            std::array<bool, 3> active{};
                            active[std::size_t(j)] = true;
                            TxSignals tx = place_frames(fptr, active);
                            RxSignals rx = propagate(tx, net_data, cfg.impairments,
                                                     mix_seed(scheme_seed, 0x50, uint64_t(j)));
                            for (int i = 0; i < 3; ++i) {
                                std::size_t t0 = kFrameOffset +
                                                 std::size_t(net_data.delays_samples[std::size_t(i)][std::size_t(i)]);
                                if (i == j) {
                                    sr.per_user[std::size_t(i)].push_back(
                                        decode_user(cfg, rx[std::size_t(i)], ia_frames[std::size_t(i)],
                                                    rate, ia_dec[std::size_t(i)], t0));
                                } else {
                                    interf_power[std::size_t(i)] += measured_power_post(
                                        rx[std::size_t(i)], ia_dec[std::size_t(i)].u,
                                        ia_frames[std::size_t(j)].n_data_symbols, t0);
                                }
                            }
                        }
                        sr.leakage = interf_power;
                        break;
                    }
                    case Scheme::DetTdma:
                    case Scheme::SisoTdma: {
                        const IaSolution& sol = scheme == Scheme::DetTdma ? det : siso;
                        std::array<TxFrame, 3> frames = frames_for(sol);
                        for (int j = 0; j < 3; ++j) {
                            std::array<const TxFrame*, 3> fptr{};
                            fptr[std::size_t(j)] = &frames[std::size_t(j)];
                            std::array<bool, 3> active{};
                            active[std::size_t(j)] = true;
                            TxSignals tx = place_frames(fptr, active);
                            RxSignals rx = propagate(tx, net_data, cfg.impairments,
                                                     mix_seed(scheme_seed, 0x54, uint64_t(j)));
                            std::size_t t0 = kFrameOffset +
                                             std::size_t(net_data.delays_samples[std::size_t(j)][std::size_t(j)]);
                            if (scheme == Scheme::DetTdma) {
                                sr.per_user[std::size_t(j)].push_back(
                                    decode_user(cfg, rx[std::size_t(j)], frames[std::size_t(j)], rate,
                                                det_dec[std::size_t(j)], t0));
                            } else {
                                sr.per_user[std::size_t(j)].push_back(decode_user_siso(
                                    cfg, rx[std::size_t(j)], frames[std::size_t(j)], rate, t0));
                            }
                            sr.leakage[std::size_t(j)] = 0.0;
                        }
                        break;
                    }
                }
            }
        }

        // --- Asynchrony emulation from interference-free captures ---
        if (cfg.async.enabled) {
            AsyncTrialResult& as = result.async;
            as.enabled = true;
            as.rate_mbps = cfg.async.rate_mbps;
            const RateParams& rate = rate_params(cfg.async.rate_mbps);

            if (cfg.async.randomize) {
                for (int j = 0; j < 3; ++j)
                    as.delays[std::size_t(j)] = int(
                        Rng(mix_seed(trial_seed, seed_tag::kAsyncDelays, uint64_t(j))).below(
                            uint64_t(cfg.async.max_delay + 1)));
                as.delays[0] = 0;  // the desired reference; interferers drift
            } else {
                as.delays = cfg.async.fixed_delays;
            }

            std::array<std::vector<uint8_t>, 3> bits;
            std::array<TxFrame, 3> frames;
            for (int u = 0; u < 3; ++u) {
                bits[std::size_t(u)] = random_bits(
                    cfg.payload_bytes * 8, mix_seed(trial_seed, seed_tag::kPayloadBits,
                                                    uint64_t(u), uint64_t(900 + as.rate_mbps)));
                frames[std::size_t(u)] =
                    assemble_data_frame(bits[std::size_t(u)], rate, ia.v[std::size_t(u)]);
            }

            // Per-user interference-free captures at every receiver.
            std::array<std::array<std::array<std::vector<cplx>, 2>, 3>, 3> captures;
            std::array<std::array<std::array<std::vector<cplx>, 2>, 3>, 3> clean;
            for (int j = 0; j < 3; ++j) {
                std::array<const TxFrame*, 3> fptr{};
                fptr[std::size_t(j)] = &frames[std::size_t(j)];
                std::array<bool, 3> active{};
                active[std::size_t(j)] = true;
                TxSignals tx = place_frames(fptr, active);
                RxSignals rx = propagate(tx, net_data, cfg.impairments,
                                         mix_seed(trial_seed, 0x415359ULL, uint64_t(j)));
                for (int i = 0; i < 3; ++i) captures[std::size_t(i)][std::size_t(j)] = rx[std::size_t(i)];
                if (cfg.async.probe_leakage) {
                    RxSignals rxc = propagate(tx, net_data, ImpairmentConfig::noiseless(), 0);
                    for (int i = 0; i < 3; ++i) clean[std::size_t(i)][std::size_t(j)] = rxc[std::size_t(i)];
                }
            }

            // Noise gain of the summed captures, measured on the signal-free prefix.
            double single = 0.0, combined = 0.0;
            for (int i = 0; i < 3; ++i) {
                auto sum = emulate_async(captures[std::size_t(i)], as.delays);
                for (int a = 0; a < 2; ++a)
                    for (std::size_t n = 0; n < kFrameOffset - 50; ++n) {
                        combined += std::norm(sum[std::size_t(a)][n]);
                        for (int j = 0; j < 3; ++j)
                            single += std::norm(captures[std::size_t(i)][std::size_t(j)][std::size_t(a)][n]) / 3.0;
                    }

                std::size_t t0 = kFrameOffset +
                                 std::size_t(net_data.delays_samples[std::size_t(i)][std::size_t(i)]) +
                                 std::size_t(as.delays[std::size_t(i)]);
                UserRateResult res = decode_user(cfg, sum, frames[std::size_t(i)], rate,
                                                 ia_dec[std::size_t(i)], t0);
                as.evm_db_post[std::size_t(i)] = res.evm_db_post;
                as.evm_db_pre[std::size_t(i)] = res.evm_db_pre;
                as.ber_post[std::size_t(i)] = res.ber_post;
                as.ber_pre[std::size_t(i)] = res.ber_pre;
                as.sync_ok_post[std::size_t(i)] = res.sync_ok_post;
                as.sync_ok_pre[std::size_t(i)] = res.sync_ok_pre;

                if (cfg.async.probe_leakage) {
                    double post = 0.0, pre = 0.0;
                    for (int j = 0; j < 3; ++j) {
                        if (j == i) continue;
                        std::array<std::array<std::vector<cplx>, 2>, 3> solo{};
                        for (int q = 0; q < 3; ++q)
                            for (int a = 0; a < 2; ++a)
                                solo[std::size_t(q)][std::size_t(a)].assign(
                                    clean[std::size_t(i)][std::size_t(j)][0].size(), cplx(0.0, 0.0));
                        solo[std::size_t(j)] = clean[std::size_t(i)][std::size_t(j)];
                        auto shifted = emulate_async(solo, as.delays);
                        post += measured_power_post(shifted, ia.u[std::size_t(i)],
                                                    frames[std::size_t(j)].n_data_symbols, t0);
                        if (cfg.decode_prefft)
                            pre += prefft_output_energy(shifted, ia_dec[std::size_t(i)].pre);
                    }
                    as.leakage_post[std::size_t(i)] = post;
                    as.leakage_pre[std::size_t(i)] = pre;
                }
            }
            as.noise_gain_db = single > 0.0 ? 10.0 * std::log10(combined / single) : 0.0;
        }
    } catch (const DegenerateEigenbasis& e) {
        result.skipped = true;
        result.skip_reason = std::string("degenerate eigenbasis: ") + e.what();
        result.schemes.clear();
    } catch (const SingularChannel& e) {
        result.skipped = true;
        result.skip_reason = std::string("singular channel: ") + e.what();
        result.schemes.clear();
    }
    return result;
}

std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, int jobs) {
    const int n = cfg.n_trials;
    std::vector<TrialResult> results(std::size_t(std::max(0, n)));
    if (n <= 0) return results;
    jobs = std::max(1, std::min(jobs, n));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t idx = next.fetch_add(1);
            if (idx >= std::size_t(n)) break;
            results[idx] = run_trial(cfg, idx);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepAxis axis,
                              const std::vector<double>& values, int jobs) {
    std::vector<SweepPoint> out;
    for (double v : values) {
        ExperimentConfig local = cfg;
        switch (axis) {
            case SweepAxis::M: local.m_training = int(v); break;
            case SweepAxis::L: local.decoder_len = int(v); break;
            case SweepAxis::Rho: local.impairments.aging_rho = v; break;
            case SweepAxis::Snr: local.impairments.awgn_snr_db = v; break;
        }
        SweepPoint point;
        point.axis_value = v;
        point.trials = run_trials(local, jobs);
        out.push_back(std::move(point));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------
SeriesStats series_stats(std::vector<double> values) {
    SeriesStats s;
    values.erase(std::remove_if(values.begin(), values.end(),
                                [](double v) { return !std::isfinite(v); }),
                 values.end());
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    auto rank = [&](double q) {
        std::size_t r = std::size_t(std::ceil(q * double(values.size())));
        r = std::max<std::size_t>(1, std::min(values.size(), r));
        return values[r - 1];
    };
    s.median = rank(0.5);
    s.p10 = rank(0.10);
    s.p90 = rank(0.90);
    s.count = int(values.size());
    return s;
}

Histogram histogram(const std::vector<double>& values, double bin_width) {
    Histogram h;
    h.bin_width = bin_width;
    std::map<long, int> bins;
    int n = 0;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        bins[long(std::floor(v / bin_width))]++;
        ++n;
    }
    for (const auto& [b, c] : bins)
        h.points.push_back({(double(b) + 0.5) * bin_width, double(c) / (double(n) * bin_width)});
    return h;
}

Aggregate aggregate(const std::vector<TrialResult>& results,
                    const ExperimentConfig& cfg) {
    if (results.empty()) throw EmptyInput("aggregate: no results");
    Aggregate agg;
    agg.n_trials = int(results.size());

    std::vector<const TrialResult*> ok;
    for (const auto& r : results) {
        if (r.skipped) {
            ++agg.n_skipped;
        } else {
            ok.push_back(&r);
        }
    }
    if (ok.empty()) throw EmptyInput("aggregate: every trial was skipped");

    std::vector<DecodeMode> modes;
    if (cfg.decode_postfft) modes.push_back(DecodeMode::PostFft);
    if (cfg.decode_prefft) modes.push_back(DecodeMode::PreFft);

    for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
        for (DecodeMode mode : modes) {
            for (std::size_t ri = 0; ri < cfg.rates.size(); ++ri) {
                Aggregate::EvmEntry entry;
                entry.scheme = cfg.schemes[si];
                entry.mode = mode;
                entry.rate_mbps = cfg.rates[ri];
                std::vector<double> pool;
                for (const auto* r : ok)
                    for (int u = 0; u < 3; ++u) {
                        const auto& cell = r->schemes[si].per_user[std::size_t(u)][ri];
                        double v = mode == DecodeMode::PostFft ? cell.evm_db_post
                                                               : cell.evm_db_pre;
                        if (std::isfinite(v)) pool.push_back(v);
                    }
                entry.stats = series_stats(pool);
                std::sort(pool.begin(), pool.end());
                for (std::size_t i = 0; i < pool.size(); ++i)
                    entry.cdf.push_back({pool[i], double(i + 1) / double(pool.size())});
                if (!pool.empty()) agg.evm.push_back(std::move(entry));
            }

            // BER-constrained mean sum rate for a ladder of targets.
            bool tdma = cfg.schemes[si] == Scheme::DetTdma || cfg.schemes[si] == Scheme::SisoTdma;
            for (double target : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 0.0}) {
                double acc = 0.0;
                int n = 0;
                for (const auto* r : ok) {
                    std::array<std::vector<std::pair<int, double>>, 3> table;
                    bool have = true;
                    for (int u = 0; u < 3; ++u)
                        for (std::size_t ri = 0; ri < cfg.rates.size(); ++ri) {
                            const auto& cell = r->schemes[si].per_user[std::size_t(u)][ri];
                            double b = mode == DecodeMode::PostFft ? cell.ber_post : cell.ber_pre;
                            if (!std::isfinite(b)) {
                                have = false;
                            } else {
                                table[std::size_t(u)].push_back({cell.rate_mbps, b});
                            }
                        }
                    if (!have) continue;
                    acc += achievable_sum_rate(table, target, tdma);
                    ++n;
                }
                if (n > 0)
                    agg.sum_rates.push_back({cfg.schemes[si], mode, target, acc / double(n)});
            }
        }
    }

    std::vector<double> srnr_d, srnr_i;
    for (const auto* r : ok) {
        srnr_d.insert(srnr_d.end(), r->srnr_samples_desired.begin(),
                      r->srnr_samples_desired.end());
        srnr_i.insert(srnr_i.end(), r->srnr_samples_interf.begin(),
                      r->srnr_samples_interf.end());
    }
    agg.srnr_desired = histogram(srnr_d, 0.5);
    agg.srnr_interfering = histogram(srnr_i, 0.5);

    if (cfg.async.enabled) {
        agg.async_present = true;
        std::vector<double> post, pre;
        int fail_post = 0, fail_pre = 0, n_async = 0;
        double gain = 0.0;
        for (const auto* r : ok) {
            if (!r->async.enabled) continue;
            for (int u = 0; u < 3; ++u) {
                post.push_back(r->async.evm_db_post[std::size_t(u)]);
                pre.push_back(r->async.evm_db_pre[std::size_t(u)]);
                fail_post += !r->async.sync_ok_post[std::size_t(u)];
                fail_pre += !r->async.sync_ok_pre[std::size_t(u)];
            }
            gain += r->async.noise_gain_db;
            ++n_async;
        }
        if (n_async > 0) {
            agg.async_evm_post = histogram(post, 0.5);
            agg.async_evm_pre = histogram(pre, 0.5);
            agg.async_fail_rate_post = double(fail_post) / double(3 * n_async);
            agg.async_fail_rate_pre = double(fail_pre) / double(3 * n_async);
            agg.async_noise_gain_db = gain / double(n_async);
        }
    }
    return agg;
}

std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepPoint>& points,
                                             const ExperimentConfig& cfg) {
    std::vector<SweepSummaryRow> rows;
    std::vector<DecodeMode> modes;
    if (cfg.decode_postfft) modes.push_back(DecodeMode::PostFft);
    if (cfg.decode_prefft) modes.push_back(DecodeMode::PreFft);

    for (const auto& point : points) {
        for (std::size_t si = 0; si < cfg.schemes.size(); ++si) {
            for (std::size_t ri = 0; ri < cfg.rates.size(); ++ri) {
                const std::string rate_tag = "@" + std::to_string(cfg.rates[ri]);
                for (DecodeMode mode : modes) {
                    std::vector<double> evms, bers;
                    for (const auto& r : point.trials) {
                        if (r.skipped) continue;
                        for (int u = 0; u < 3; ++u) {
                            const auto& cell = r.schemes[si].per_user[std::size_t(u)][ri];
                            double e = mode == DecodeMode::PostFft ? cell.evm_db_post
                                                                   : cell.evm_db_pre;
                            double b = mode == DecodeMode::PostFft ? cell.ber_post : cell.ber_pre;
                            if (std::isfinite(e)) evms.push_back(e);
                            if (std::isfinite(b)) bers.push_back(b);
                        }
                    }
                    rows.push_back({point.axis_value, cfg.schemes[si], mode,
                                    "evm_db" + rate_tag, series_stats(evms)});
                    rows.push_back({point.axis_value, cfg.schemes[si], mode,
                                    "ber" + rate_tag, series_stats(bers)});
                }
                if (cfg.decode_postfft && cfg.decode_prefft) {
                    std::vector<double> degr;
                    for (const auto& r : point.trials) {
                        if (r.skipped) continue;
                        for (int u = 0; u < 3; ++u) {
                            const auto& cell = r.schemes[si].per_user[std::size_t(u)][ri];
                            if (std::isfinite(cell.evm_db_pre) && std::isfinite(cell.evm_db_post))
                                degr.push_back(cell.evm_db_pre - cell.evm_db_post);
                        }
                    }
                    rows.push_back({point.axis_value, cfg.schemes[si], DecodeMode::PreFft,
                                    "evm_degradation_db" + rate_tag, series_stats(degr)});
                }
            }
        }
    }
    return rows;
}

}  // namespace iasim

#ifndef IASIM_CHANNEL_HPP
#define IASIM_CHANNEL_HPP

/**
 * @file channel.hpp
 * @brief The 3-user frequency-selective MIMO interference network:
 *        synthesis, frequency response, propagation with impairments,
 *        Gauss-Markov aging and file persistence.
 */

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "iasim/numerics.hpp"

namespace iasim {

/// Matrix impulse response of one 2x2 link: taps[n] is the 2x2 gain at
/// sample delay n (20 Msample/s baseband).
struct MimoFir {
    std::vector<Mat2> taps;

    double energy() const {
        double e = 0.0;
        for (const auto& t : taps) e += t.fro_norm2();
        return e;
    }
};

/// The nine pairwise links plus per-link integer delays.
/// links[i][j] is the channel from transmitter j to receiver i.
struct InterferenceChannelRealization {
    std::array<std::array<MimoFir, kNumUsers>, kNumUsers> links;
    std::array<std::array<int, kNumUsers>, kNumUsers> delays_samples{};
    /// Per-tap generating power profile (sums to 1). Used by age_channel to
    /// draw innovations with the original statistics.
    std::vector<double> tap_power;

    int n_taps() const { return int(links[0][0].taps.size()); }
};

enum class PowerDelayProfile { Exponential, Uniform, SingleTap };

struct ChannelGenConfig {
    int n_taps = 8;
    PowerDelayProfile profile = PowerDelayProfile::Exponential;
    double rms_delay_spread_ns = 50.0;
    uint64_t seed = 0;
};

/// Receiver AWGN, transmitter noise and channel-aging knobs.
/// awgn_snr_db is the per-receive-antenna SNR of the desired link assuming
/// unit total transmit power and a unit-energy link split evenly over the
/// four entries (noise variance 0.25 / snr per antenna). tx_evm_db sets a
/// white complex Gaussian added to each transmit antenna stream before the
/// channel, with power relative to that stream's mean power over its nonzero
/// support, so the received distortion scales with the channel gain.
struct ImpairmentConfig {
    std::optional<double> awgn_snr_db = 24.0;
    std::optional<double> tx_evm_db = -26.0;
    double aging_rho = 1.0;

    static ImpairmentConfig noiseless() { return {std::nullopt, std::nullopt, 1.0}; }
};

using TxSignals = std::array<std::array<std::vector<cplx>, kNumAntennas>, kNumUsers>;
using RxSignals = std::array<std::array<std::vector<cplx>, kNumAntennas>, kNumUsers>;

/// Draws the nine links as zero-mean circularly-symmetric complex Gaussian
/// taps with the configured power-delay profile, each link normalized to
/// unit expected energy. Deterministic given the seed.
InterferenceChannelRealization generate_network(const ChannelGenConfig& cfg,
                                                uint64_t rng_seed);

/// Entry-wise n_fft-point frequency response of the zero-padded taps.
std::vector<Mat2> freq_response(const MimoFir& ch, std::size_t n_fft);

/// Superposes the delayed, channel-convolved transmit streams at each
/// receiver, adding transmitter noise before convolution and AWGN after.
/// All transmit streams must share one length; outputs are extended by the
/// maximum delay + channel length.
RxSignals propagate(const TxSignals& tx, const InterferenceChannelRealization& ch,
                    const ImpairmentConfig& imp, uint64_t rng_seed);

/// Gauss-Markov step: every tap becomes rho*old + sqrt(1-rho^2)*innovation,
/// innovations drawn from the generating tap distribution. rho = 1 returns
/// the input unchanged.
InterferenceChannelRealization age_channel(const InterferenceChannelRealization& ch,
                                           double rho, uint64_t rng_seed);

/// Structured-text channel corpus, bit-exact at double precision.
void save_channels(const std::vector<InterferenceChannelRealization>& realizations,
                   const std::string& path);
std::vector<InterferenceChannelRealization> load_channels(const std::string& path);

}  // namespace iasim

#endif  // IASIM_CHANNEL_HPP

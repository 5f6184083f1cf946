#ifndef IASIM_PHY_HPP
#define IASIM_PHY_HPP

/**
 * @file phy.hpp
 * @brief 802.11a-style OFDM modem: rate table, bit pipeline (scramble /
 *        convolutional code / puncture / interleave / Gray map), frame
 *        assembly with STS/LTS preambles, training frames, frame detection,
 *        LS channel estimation and ZF equalization.
 *
 * Baseband runs at 20 Msample/s, 64-point FFT, 16-sample cyclic prefix,
 * 48 data + 4 pilot subcarriers per OFDM symbol.
 */

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "iasim/numerics.hpp"

namespace iasim {

// ---------------------------------------------------------------------------
// Rates and grid
// ---------------------------------------------------------------------------
enum class Modulation { BPSK, QPSK, QAM16, QAM64 };

struct RateParams {
    int rate_mbps;
    Modulation modulation;
    int code_num, code_den;        // code rate as fraction
    int bits_per_point;            // N_BPSC
    int coded_bits_per_symbol;     // N_CBPS
    int data_bits_per_symbol;      // N_DBPS
};

/// The eight clause-17 rates: 6, 9, 12, 18, 24, 36, 48, 54 Mbit/s.
const std::array<RateParams, 8>& rate_table();
const RateParams& rate_params(int rate_mbps);

struct OfdmGrid {
    static constexpr int kNfft = 64;
    static constexpr int kCpLen = 16;
    static constexpr int kNData = 48;
    static constexpr int kNPilots = 4;
    static constexpr int kNUsed = 52;

    std::array<int, kNData> data_subcarriers;    // logical indices, ascending
    std::array<int, kNPilots> pilot_subcarriers; // {-21, -7, 7, 21}
    std::array<int, kNUsed> used_subcarriers;    // -26..-1, 1..26

    static const OfdmGrid& standard();

    static int bin_of(int logical) { return (logical + kNfft) % kNfft; }
    /// Position of a logical subcarrier within used_subcarriers.
    int used_index(int logical) const;
    bool is_pilot(int logical) const;
};

/// One 2-vector per used subcarrier (precoders or decoders), indexed like
/// OfdmGrid::used_subcarriers.
using SubcarrierVectors = std::array<Vec2, OfdmGrid::kNUsed>;

// Frame geometry (samples at 20 Msample/s).
inline constexpr int kStsLen = 160;
inline constexpr int kLtsGuardLen = 32;
inline constexpr int kLtsLen = kLtsGuardLen + 2 * 64;
inline constexpr int kSignalFieldLen = 80;
inline constexpr int kPreambleLen = kStsLen + kLtsLen + kSignalFieldLen;  // 400
inline constexpr int kSymbolLen = OfdmGrid::kNfft + OfdmGrid::kCpLen;     // 80

/// Long-training BPSK value at a logical subcarrier (0 at DC and guards).
double lts_value(int logical);
/// One 64-sample period of the long training symbol.
const std::vector<cplx>& lts_time_symbol();
/// Pilot polarity p_n (127-periodic clause-17 sequence).
double pilot_polarity(int n);
/// Pilot base value at pilot index 0..3 ({1, 1, 1, -1}).
double pilot_base(int pilot_idx);

// ---------------------------------------------------------------------------
// Bit pipeline
// ---------------------------------------------------------------------------

/// Clause-17 additive scrambler (x^7 + x^4 + 1). init is the 7-bit seed;
/// init = 0 produces the all-zero sequence.
std::vector<uint8_t> scramble(const std::vector<uint8_t>& bits, uint8_t init);

/// Rate-1/2 K=7 convolutional encoder, generators 133/171 octal. Output is
/// interleaved A0 B0 A1 B1 ...
std::vector<uint8_t> conv_encode(const std::vector<uint8_t>& bits);

/// Puncturing to 2/3 or 3/4 (1/2 passes through).
std::vector<uint8_t> puncture(const std::vector<uint8_t>& coded, int num, int den);

/// Reinserts erasures (-1) at punctured positions for the Viterbi decoder.
std::vector<int8_t> depuncture(const std::vector<int8_t>& bits, int num, int den,
                               std::size_t mother_len);

/// Hard-decision Viterbi over the full sequence (trellis terminated in the
/// zero state by the tail bits). Input -1 entries are erasures.
std::vector<uint8_t> viterbi_decode(const std::vector<int8_t>& coded,
                                    std::size_t n_info);

/// Clause-17 per-symbol block interleaver map: result[k] is the output
/// position of input coded bit k (k = 0 .. n_cbps-1).
std::vector<int> interleave_map(int n_cbps, int n_bpsc);

cplx map_point(const uint8_t* bits, Modulation m);
void demap_point(const cplx& z, Modulation m, uint8_t* bits);
/// Number of constellation points (2^bits) and mean energy exactly 1.
int bits_per_point(Modulation m);

/// SERVICE(16) + payload + tail(6) + pad, scrambled, tail re-zeroed,
/// convolutionally encoded, punctured, interleaved, Gray-mapped.
struct EncodedPayload {
    std::vector<cplx> symbols;  // n_symbols * 48, in data-subcarrier order
    int n_symbols = 0;
};
EncodedPayload encode_payload(const std::vector<uint8_t>& bits, const RateParams& rate,
                              uint8_t scrambler_init = 0x5d);

/// Inverse pipeline: hard demap, deinterleave, depuncture, Viterbi,
/// descramble (seed recovered from the SERVICE field). Returns exactly
/// n_payload_bits bits.
std::vector<uint8_t> decode_payload(const std::vector<cplx>& symbols,
                                    const RateParams& rate,
                                    std::size_t n_payload_bits);

/// ceil((16 + n_bits + 6) / N_DBPS)
int num_data_symbols(std::size_t n_payload_bits, const RateParams& rate);

std::vector<uint8_t> random_bits(std::size_t n, uint64_t seed);

// ---------------------------------------------------------------------------
// Frame assembly
// ---------------------------------------------------------------------------
struct TxFrame {
    std::array<std::vector<cplx>, 2> streams;  // per antenna, equal length
    std::vector<uint8_t> source_bits;
    int rate_mbps = 0;
    int n_data_symbols = 0;
    /// Reference constellation points per data symbol (EVM ground truth).
    std::vector<std::array<cplx, OfdmGrid::kNData>> ref_symbols;
};

/// Builds the two antenna streams: standard STS/LTS/SF followed by the
/// payload, everything precoded per subcarrier by `precoders` (pilots and
/// preamble included, so the receiver's LS estimate captures the equivalent
/// channel). Mean transmit power across both antennas normalized to 1.
TxFrame assemble_data_frame(const std::vector<uint8_t>& bits, const RateParams& rate,
                            const SubcarrierVectors& precoders,
                            uint8_t scrambler_init = 0x5d);

/// STS followed by M long-training symbols on one antenna, zeros on the
/// other. Power of the active antenna normalized to 1.
std::array<std::vector<cplx>, 2> assemble_training_frame(int m_symbols,
                                                         int antenna_index);

// ---------------------------------------------------------------------------
// Receiver
// ---------------------------------------------------------------------------
struct SyncResult {
    bool detected = false;
    std::size_t frame_start = 0;
    double cfo_hz = 0.0;
};

struct SyncOptions {
    double threshold = 0.38;  // delay-and-correlate metric crossing
    int corr_window = 48;
    int plateau_run = 40;
    double sample_rate_hz = 20e6;
};

/// STS delay-and-correlate detection with plateau qualification, LTS
/// cross-correlation fine timing and two-stage CFO estimation.
SyncResult detect_and_sync(const std::vector<cplx>& rx, const SyncOptions& opt = {});

/// Diversity variant: correlation metrics are accumulated over both antenna
/// streams before thresholding, as a two-antenna receiver would.
SyncResult detect_and_sync_dual(const std::array<std::vector<cplx>, 2>& rx,
                                const SyncOptions& opt = {});

/// Table-exact LS estimate: h = sum_n z_n / (M * ref) per subcarrier.
/// rx_syms is M spectra over the same bins as ref.
std::vector<cplx> ls_estimate(const std::vector<std::vector<cplx>>& rx_syms,
                              const std::vector<cplx>& ref);

/// Per-subcarrier zero-forcing division. Throws SingularChannel when some
/// |h| <= 1e-12 * max|h|.
std::vector<cplx> zf_equalize(const std::vector<cplx>& symbols,
                              const std::vector<cplx>& h);

struct ReceiveOptions {
    std::optional<std::size_t> forced_start;  // skip detection
    std::optional<double> forced_cfo_hz;
    bool cpe_correction = true;
    int timing_backoff = 4;  // FFT window starts this far inside the CP
    bool decode_bits = true;
    SyncOptions sync;
};

struct DecodeResult {
    bool detected = false;
    std::size_t frame_start = 0;
    double cfo_hz = 0.0;
    std::vector<uint8_t> bits;
    bool have_evm = false;
    double evm_lin = 0.0;  // aggregate error power over reference power
    std::array<double, OfdmGrid::kNData> evm_per_subcarrier{};
    std::vector<cplx> h_est;  // 52 used bins

    double evm_db() const;
};

/// Full single-stream receiver (SISO antenna or pre-FFT-filtered input).
DecodeResult receive_frame(const std::vector<cplx>& stream, const RateParams& rate,
                           std::size_t n_payload_bits,
                           const std::vector<std::array<cplx, OfdmGrid::kNData>>* refs,
                           const ReceiveOptions& opt = {});

/// Post-FFT receiver: both antenna streams are FFT'd per symbol and combined
/// per subcarrier with the decoder u (z = u^H y) before the standard chain.
DecodeResult receive_frame_postfft(const std::array<std::vector<cplx>, 2>& streams,
                                   const SubcarrierVectors& decoders,
                                   const RateParams& rate, std::size_t n_payload_bits,
                                   const std::vector<std::array<cplx, OfdmGrid::kNData>>* refs,
                                   const ReceiveOptions& opt = {});

/// Training-frame receiver: Table-I statistics per receive antenna and used
/// subcarrier from M long-training symbols.
struct TrainingSlotEstimate {
    bool detected = false;
    std::array<std::vector<cplx>, 2> h;        // [rx antenna][used bin]
    std::array<std::vector<double>, 2> s_pow;  // signal power S_s
    std::array<std::vector<double>, 2> n_pow;  // residual noise power N_s
    std::array<std::vector<double>, 2> sigma2; // N_s / |h_s|^2
};
TrainingSlotEstimate estimate_training_slot(const std::array<std::vector<cplx>, 2>& rx,
                                            int m_symbols,
                                            const ReceiveOptions& opt = {});

}  // namespace iasim

#endif  // IASIM_PHY_HPP

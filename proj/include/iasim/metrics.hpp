#ifndef IASIM_METRICS_HPP
#define IASIM_METRICS_HPP

/**
 * @file metrics.hpp
 * @brief Training-frame estimators (channel, signal power, residual noise),
 *        EVM, SRNR, interference leakage, BER and BER-constrained
 *        achievable sum-rate.
 */

#include <utility>
#include <vector>

#include "iasim/align.hpp"

namespace iasim {

struct TrainingEstimates {
    std::vector<cplx> h;         // h_s = sum_n z_{s,n} / (M z0_s)
    std::vector<double> s_pow;   // S_s = |sum_n z_{s,n} / M|^2
    std::vector<double> n_pow;   // N_s = sum_n |z_{s,n} - h_s z0_s|^2 / M
    std::vector<double> sigma2;  // N_s / |h_s|^2
};

/// Exact training-frame arithmetic; z is one row per OFDM training symbol,
/// ref is the (constant-over-time) transmitted value per subcarrier.
TrainingEstimates training_estimates(const std::vector<std::vector<cplx>>& z,
                                     const std::vector<cplx>& ref);

struct EvmResult {
    std::vector<double> per_subcarrier;  // error power over reference power
    double aggregate_lin = 0.0;          // total error power / total ref power
    double aggregate_db() const;
};

/// EVM_s = sum_n |zeq - zref|^2 / sum_n |zref|^2; rows are OFDM symbols.
EvmResult evm(const std::vector<std::vector<cplx>>& equalized,
              const std::vector<std::vector<cplx>>& reference);

struct SrnrResult {
    std::vector<double> per_subcarrier_db;  // +inf sentinel when N_s = 0
    double aggregate_db = 0.0;              // mean of the per-subcarrier dBs
};

SrnrResult srnr(const TrainingEstimates& est);

/// Frequency-form leakage at one receiver:
/// sum over interferers and subcarriers of |u_i^H H_ij v_j|^2.
double interference_leakage(const IaSolution& sol,
                            const std::vector<ChannelMatrixGrid>& channels,
                            int receiver);

/// 64-bin equivalent interference spectra (one per interferer) of a
/// receiver, zeros on unused bins.
std::vector<std::vector<cplx>> equivalent_interference_spectra(
    const IaSolution& sol, const std::vector<ChannelMatrixGrid>& channels,
    int receiver);

/// Tap-energy form over unitary-normalized impulse responses; matches the
/// frequency form through Parseval for untruncated decoders.
double interference_leakage_time(const std::vector<std::vector<cplx>>& spectra);

/// Hamming distance over length.
double ber(const std::vector<uint8_t>& decoded, const std::vector<uint8_t>& reference);

/// Per-user best rate meeting the BER target (0 if none), summed over the
/// three users; TDMA time-sharing divides each user's rate by 3.
double achievable_sum_rate(
    const std::array<std::vector<std::pair<int, double>>, 3>& ber_per_user_rate,
    double ber_target, bool tdma_share);

}  // namespace iasim

#endif  // IASIM_METRICS_HPP

#ifndef IASIM_ALIGN_HPP
#define IASIM_ALIGN_HPP

/**
 * @file align.hpp
 * @brief Spatial interference alignment for the 3-user 2x2 network:
 *        closed-form zero-forcing solutions per subcarrier (two branches),
 *        smooth-set selection across subcarriers, truncated time-domain
 *        (pre-FFT) decoding filters, MaxSINR alternating optimization and
 *        dominant-eigenmode beamformers.
 */

#include <vector>

#include "iasim/phy.hpp"

namespace iasim {

/// All nine 2x2 channel matrices at one subcarrier; [i][j] = rx i, tx j.
using ChannelMatrixGrid = std::array<std::array<Mat2, kNumUsers>, kNumUsers>;

/// Per-subcarrier precoders and decoders for the three users, on the used
/// subcarriers in OfdmGrid order.
struct IaSolution {
    std::array<SubcarrierVectors, kNumUsers> v;  // precoders [user][bin]
    std::array<SubcarrierVectors, kNumUsers> u;  // decoders  [user][bin]
    int branch_id = 0;
};

/// sqrt(1 - |a^H b|^2) for unit vectors (phase-invariant distance).
double chordal_distance(const Vec2& a, const Vec2& b);

/// Closed-form zero-forcing IA. Returns the two solution branches, labeled
/// by the eigenvalue ordering of the alignment matrix. start_user rotates
/// which user seeds the construction; the solution set is invariant to it.
/// Throws SingularChannel for non-invertible channels, DegenerateEigenbasis
/// for non-generic networks.
std::array<IaSolution, 2> ia_closed_form(const std::vector<ChannelMatrixGrid>& channels,
                                         int start_user = 0);

struct SmoothSets {
    IaSolution set0, set1;
    double score0 = 0.0, score1 = 0.0;  // mean adjacent chordal distance of v1
};

/// Resolves the per-subcarrier branch ambiguity by greedy continuity
/// matching on user 1's precoder, then aligns vector phases along the
/// spectrum so the solutions have short time-domain responses. Set 0 starts
/// from branch 0 at the lowest used subcarrier.
SmoothSets select_smooth_sets(const IaSolution& branch0, const IaSolution& branch1);

/// Phase-continuity pass used by select_smooth_sets, exposed for solutions
/// coming from other designers (MaxSINR, DET) before pre-FFT truncation.
IaSolution align_solution_phases(const IaSolution& sol);

/// Length-L two-input one-output time-domain decoding filter.
struct PreFftDecoder {
    std::vector<Vec2> taps;      // complex gains per tap and antenna
    int alignment_offset = 0;    // signed sample time of taps[0]
    double captured_energy = 1.0;
};

/// IFFT of the decoder spectrum (null bins filled by circular linear
/// interpolation), truncated to the contiguous circular window of length L
/// with maximum energy. The filter realizes z[n] = sum_a (g_a * y_a)[n]
/// whose frequency response matches u^H at every bin when L = 64.
PreFftDecoder build_prefft_decoder(const IaSolution& sol, int user, int length);

/// Applies the filter: out[n] = sum_a sum_m taps[m][a] * y_a[n - offset - m].
std::vector<cplx> apply_prefft_decoder(const std::array<std::vector<cplx>, 2>& rx,
                                       const PreFftDecoder& dec);

struct MaxSinrConfig {
    int max_iters = 100;
    double tol = 1e-6;
    double sigma2 = 0.0;
};

/// Alternating max-SINR beamformer design: decoders and precoders are the
/// dominant generalized eigenvectors of the signal-versus-interference-plus-
/// noise pencils of the forward and reversed links. Deterministic given the
/// seed of the random initial precoders; each subcarrier runs independently.
IaSolution max_sinr(const std::vector<ChannelMatrixGrid>& channels,
                    const MaxSinrConfig& cfg, uint64_t rng_seed);

struct DetBeamformers {
    std::vector<double> gain;  // max singular value per bin
    std::vector<Vec2> v, u;    // right / left singular vectors
};

/// Dominant eigenmode transmission vectors of a desired link per subcarrier.
DetBeamformers det_beamformers(const std::vector<Mat2>& desired_link);

}  // namespace iasim

#endif  // IASIM_ALIGN_HPP

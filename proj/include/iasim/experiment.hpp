#ifndef IASIM_EXPERIMENT_HPP
#define IASIM_EXPERIMENT_HPP

/**
 * @file experiment.hpp
 * @brief Trial orchestration: training stage over the six antenna slots,
 *        channel estimation, scheme design (IA / MaxSINR / DET), the five
 *        transmission schemes, asynchrony emulation, parameter sweeps and
 *        result aggregation.
 */

#include <cmath>
#include <map>
#include <string>

#include "iasim/channel.hpp"
#include "iasim/metrics.hpp"

namespace iasim {

enum class Scheme { IA, PerfectIA, MaxSINR, DetTdma, SisoTdma };
enum class DecodeMode { PreFft, PostFft };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);
const char* mode_name(DecodeMode m);

struct AsyncConfig {
    bool enabled = false;
    int max_delay = 40;               // random per-user delays in [0, max_delay]
    std::array<int, 3> fixed_delays{};  // used when randomize = false
    bool randomize = true;
    int rate_mbps = 24;
    bool probe_leakage = true;  // run noiseless duplicate captures
};

struct ExperimentConfig {
    int n_trials = 1;
    uint64_t seed = 1;
    ChannelGenConfig channel;
    std::string channel_file;  // overrides synthetic generation when set
    ImpairmentConfig impairments;
    int m_training = 30;
    int decoder_len = 30;
    bool decode_prefft = true;
    bool decode_postfft = true;
    std::vector<int> rates = {24};
    std::vector<Scheme> schemes = {Scheme::IA, Scheme::PerfectIA, Scheme::MaxSINR,
                                   Scheme::DetTdma, Scheme::SisoTdma};
    AsyncConfig async;
    double ber_target = 1e-4;
    int feedback_delay_units = 1;  // aging steps between training and data
    bool genie_csi = false;
    std::size_t payload_bytes = 1250;
};

/// Metrics of one (scheme, user, rate) cell. NaN marks a disabled mode.
struct UserRateResult {
    int rate_mbps = 0;
    double evm_db_post = NAN, evm_db_pre = NAN;
    double ber_post = NAN, ber_pre = NAN;
    bool sync_ok_post = false, sync_ok_pre = false;
};

struct SchemeTrialResult {
    Scheme scheme = Scheme::IA;
    std::array<double, 3> leakage{};  // per receiver
    std::array<std::vector<UserRateResult>, 3> per_user;
};

struct AsyncTrialResult {
    bool enabled = false;
    int rate_mbps = 0;
    std::array<int, 3> delays{};
    std::array<double, 3> evm_db_post{}, evm_db_pre{};
    std::array<double, 3> ber_post{}, ber_pre{};
    std::array<bool, 3> sync_ok_post{}, sync_ok_pre{};
    double noise_gain_db = 0.0;  // combined- vs single-capture noise power
    std::array<double, 3> leakage_post{}, leakage_pre{};  // measured, noiseless
};

struct TrialResult {
    std::size_t trial_index = 0;
    bool skipped = false;
    std::string skip_reason;
    uint64_t channel_hash = 0;  // pairing witness across sweep values
    std::array<std::array<double, 3>, 3> srnr_db{};  // per link (i, j) mean
    std::vector<double> srnr_samples_desired, srnr_samples_interf;
    double sigma2_hat = 0.0;  // mean residual noise power fed to MaxSINR
    double smooth_score0 = 0.0, smooth_score1 = 0.0;
    std::vector<SchemeTrialResult> schemes;
    AsyncTrialResult async;
};

/// Per-subcarrier true channels of a realization on the used bins.
std::vector<ChannelMatrixGrid> used_bin_grids(const InterferenceChannelRealization& net);

/// Delayed superposition of interference-free captures; noise of the sum
/// grows by the power sum of the per-capture noise components.
std::array<std::vector<cplx>, 2> emulate_async(
    const std::array<std::array<std::vector<cplx>, 2>, 3>& captures,
    const std::array<int, 3>& delays);

/// One full two-stage measurement: training transmissions, estimation,
/// design from the estimates, the configured schemes at every configured
/// rate, plus the optional asynchrony study. Deterministic per
/// (cfg.seed, trial_index).
TrialResult run_trial(const ExperimentConfig& cfg, std::size_t trial_index);

/// Runs n_trials trials across a worker pool; results ordered by index.
std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, int jobs);

enum class SweepAxis { M, L, Rho, Snr };
SweepAxis sweep_axis_from_name(const std::string& name);
const char* sweep_axis_name(SweepAxis a);

struct SweepPoint {
    double axis_value = 0.0;
    std::vector<TrialResult> trials;
};

/// Paired-seed sweep: every axis value reruns the same trial seeds, so each
/// trial sees the same channel realization at every value.
std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepAxis axis,
                              const std::vector<double>& values, int jobs);

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------
struct SeriesStats {
    double median = NAN, p10 = NAN, p90 = NAN;
    int count = 0;
};

SeriesStats series_stats(std::vector<double> values);

struct Histogram {
    double bin_width = 0.5;
    std::vector<std::pair<double, double>> points;  // (bin center, density)
};
Histogram histogram(const std::vector<double>& values, double bin_width);

struct Aggregate {
    int n_trials = 0, n_skipped = 0;

    struct EvmEntry {
        Scheme scheme;
        DecodeMode mode;
        int rate_mbps;
        SeriesStats stats;                            // pooled users x trials, dB
        std::vector<std::pair<double, double>> cdf;   // (evm_db, probability)
    };
    std::vector<EvmEntry> evm;

    struct SumRateEntry {
        Scheme scheme;
        DecodeMode mode;
        double ber_target;
        double mean_sum_rate_mbps;
    };
    std::vector<SumRateEntry> sum_rates;

    Histogram srnr_desired, srnr_interfering;

    bool async_present = false;
    Histogram async_evm_post, async_evm_pre;
    double async_fail_rate_post = 0.0, async_fail_rate_pre = 0.0;
    double async_noise_gain_db = 0.0;
};

/// Reduction over completed trials; throws EmptyInput on an empty set.
Aggregate aggregate(const std::vector<TrialResult>& results,
                    const ExperimentConfig& cfg);

/// Median/percentile rows for sweep outputs: metrics evm_db@rate,
/// evm_degradation_db@rate (pre minus post, paired per trial and user) and
/// ber@rate per scheme and mode.
struct SweepSummaryRow {
    double axis_value;
    Scheme scheme;
    DecodeMode mode;
    std::string metric;
    SeriesStats stats;
};
std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepPoint>& points,
                                             const ExperimentConfig& cfg);

}  // namespace iasim

#endif  // IASIM_EXPERIMENT_HPP

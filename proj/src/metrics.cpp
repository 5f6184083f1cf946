#include "iasim/metrics.hpp"

#include <cmath>
#include <limits>

namespace iasim {

TrainingEstimates training_estimates(const std::vector<std::vector<cplx>>& z,
                                     const std::vector<cplx>& ref) {
    if (z.empty()) throw BadLength("training_estimates: no symbols");
    const std::size_t n = ref.size();
    for (const auto& row : z)
        if (row.size() != n) throw BadLength("training_estimates: bin count mismatch");
    const double m = double(z.size());

    TrainingEstimates est;
    est.h.assign(n, cplx(0.0, 0.0));
    est.s_pow.assign(n, 0.0);
    est.n_pow.assign(n, 0.0);
    est.sigma2.assign(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        cplx acc(0.0, 0.0);
        for (const auto& row : z) acc += row[s];
        est.h[s] = acc / (m * ref[s]);
        est.s_pow[s] = std::norm(acc / m);
        double nacc = 0.0;
        for (const auto& row : z) nacc += std::norm(row[s] - est.h[s] * ref[s]);
        est.n_pow[s] = nacc / m;
        double hp = std::norm(est.h[s]);
        est.sigma2[s] = hp > 0.0 ? est.n_pow[s] / hp : 0.0;
    }
    return est;
}

double EvmResult::aggregate_db() const {
    return aggregate_lin > 0.0 ? 10.0 * std::log10(aggregate_lin) : -300.0;
}

EvmResult evm(const std::vector<std::vector<cplx>>& equalized,
              const std::vector<std::vector<cplx>>& reference) {
    if (equalized.size() != reference.size())
        throw BadLength("evm: symbol count mismatch");
    if (equalized.empty()) throw BadLength("evm: empty input");
    const std::size_t n = reference[0].size();

    EvmResult out;
    out.per_subcarrier.assign(n, 0.0);
    std::vector<double> err(n, 0.0), rp(n, 0.0);
    for (std::size_t s = 0; s < equalized.size(); ++s) {
        if (equalized[s].size() != n || reference[s].size() != n)
            throw BadLength("evm: bin count mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            err[k] += std::norm(equalized[s][k] - reference[s][k]);
            rp[k] += std::norm(reference[s][k]);
        }
    }
    double te = 0.0, tr = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        te += err[k];
        tr += rp[k];
        out.per_subcarrier[k] = rp[k] > 0.0 ? err[k] / rp[k] : 0.0;
    }
    if (tr <= 0.0) throw ZeroReference("evm: zero reference power");
    out.aggregate_lin = te / tr;
    return out;
}

SrnrResult srnr(const TrainingEstimates& est) {
    SrnrResult out;
    out.per_subcarrier_db.reserve(est.s_pow.size());
    double acc = 0.0;
    for (std::size_t s = 0; s < est.s_pow.size(); ++s) {
        double v;
        if (est.n_pow[s] <= 0.0) {
            v = std::numeric_limits<double>::infinity();
        } else {
            v = 10.0 * std::log10(est.s_pow[s] / est.n_pow[s]);
        }
        out.per_subcarrier_db.push_back(v);
        acc += v;
    }
    out.aggregate_db = est.s_pow.empty() ? 0.0 : acc / double(est.s_pow.size());
    return out;
}

double interference_leakage(const IaSolution& sol,
                            const std::vector<ChannelMatrixGrid>& channels,
                            int receiver) {
    double acc = 0.0;
    for (std::size_t k = 0; k < channels.size(); ++k) {
        const Vec2& u = sol.u[std::size_t(receiver)][k];
        for (int j = 0; j < 3; ++j) {
            if (j == receiver) continue;
            Vec2 a = channels[k][std::size_t(receiver)][std::size_t(j)] * sol.v[std::size_t(j)][k];
            acc += std::norm(hdot(u, a));
        }
    }
    return acc;
}

std::vector<std::vector<cplx>> equivalent_interference_spectra(
    const IaSolution& sol, const std::vector<ChannelMatrixGrid>& channels,
    int receiver) {
    const auto& grid = OfdmGrid::standard();
    std::vector<std::vector<cplx>> out;
    for (int j = 0; j < 3; ++j) {
        if (j == receiver) continue;
        std::vector<cplx> spec(OfdmGrid::kNfft, cplx(0.0, 0.0));
        for (std::size_t k = 0; k < channels.size(); ++k) {
            const Vec2& u = sol.u[std::size_t(receiver)][k];
            Vec2 a = channels[k][std::size_t(receiver)][std::size_t(j)] * sol.v[std::size_t(j)][k];
            spec[std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[k]))] = hdot(u, a);
        }
        out.push_back(std::move(spec));
    }
    return out;
}

double interference_leakage_time(const std::vector<std::vector<cplx>>& spectra) {
    double acc = 0.0;
    for (const auto& spec : spectra) {
        auto taps = ifft(spec, spec.size());
        const double unitary = std::sqrt(double(spec.size()));
        for (const auto& t : taps) acc += std::norm(t * unitary);
    }
    return acc;
}

double ber(const std::vector<uint8_t>& decoded, const std::vector<uint8_t>& reference) {
    if (decoded.size() != reference.size()) throw BadLength("ber: length mismatch");
    if (decoded.empty()) throw BadLength("ber: empty input");
    std::size_t errors = 0;
    for (std::size_t i = 0; i < decoded.size(); ++i) errors += decoded[i] != reference[i];
    return double(errors) / double(decoded.size());
}

double achievable_sum_rate(
    const std::array<std::vector<std::pair<int, double>>, 3>& ber_per_user_rate,
    double ber_target, bool tdma_share) {
    double sum = 0.0;
    for (const auto& user : ber_per_user_rate) {
        double best = 0.0;
        for (const auto& [rate, b] : user)
            if (b <= ber_target && rate > best) best = rate;
        sum += tdma_share ? best / 3.0 : best;
    }
    return sum;
}

}  // namespace iasim

#include "iasim/phy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

namespace iasim {

// ---------------------------------------------------------------------------
// Rates and grid
// ---------------------------------------------------------------------------
const std::array<RateParams, 8>& rate_table() {
    static const std::array<RateParams, 8> table = {{
        {6, Modulation::BPSK, 1, 2, 1, 48, 24},
        {9, Modulation::BPSK, 3, 4, 1, 48, 36},
        {12, Modulation::QPSK, 1, 2, 2, 96, 48},
        {18, Modulation::QPSK, 3, 4, 2, 96, 72},
        {24, Modulation::QAM16, 1, 2, 4, 192, 96},
        {36, Modulation::QAM16, 3, 4, 4, 192, 144},
        {48, Modulation::QAM64, 2, 3, 6, 288, 192},
        {54, Modulation::QAM64, 3, 4, 6, 288, 216},
    }};
    return table;
}

const RateParams& rate_params(int rate_mbps) {
    for (const auto& r : rate_table())
        if (r.rate_mbps == rate_mbps) return r;
    throw ConfigError("unknown rate: " + std::to_string(rate_mbps) + " Mbit/s");
}

const OfdmGrid& OfdmGrid::standard() {
    static const OfdmGrid grid = [] {
        OfdmGrid g;
        g.pilot_subcarriers = {-21, -7, 7, 21};
        int d = 0, u = 0;
        for (int k = -26; k <= 26; ++k) {
            if (k == 0) continue;
            g.used_subcarriers[u++] = k;
            if (k == -21 || k == -7 || k == 7 || k == 21) continue;
            g.data_subcarriers[d++] = k;
        }
        return g;
    }();
    return grid;
}

int OfdmGrid::used_index(int logical) const {
    for (int i = 0; i < kNUsed; ++i)
        if (used_subcarriers[i] == logical) return i;
    throw BadLength("not a used subcarrier");
}

bool OfdmGrid::is_pilot(int logical) const {
    for (int p : pilot_subcarriers)
        if (p == logical) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Training sequences
// ---------------------------------------------------------------------------
namespace {

// Clause-17 short training symbol, frequency domain (nonzero every 4th bin).
cplx sts_value(int logical) {
    static const double a = std::sqrt(13.0 / 6.0);
    switch (logical) {
        case -24: case -16: case -4: case 12: case 16: case 20: case 24:
            return cplx(a, a);
        case -20: case -12: case -8: case 4: case 8:
            return cplx(-a, -a);
        default:
            return cplx(0.0, 0.0);
    }
}

const int8_t kLtsSeq[53] = {  // logical -26 .. +26, 0 at DC
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1,
    1, 1, 1, 0, 1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1,
    1, -1, 1, -1, 1, 1, 1, 1};

// Fixed BPSK placeholder for the Signal Field (generated, never parsed).
const std::array<int8_t, OfdmGrid::kNData>& sf_pattern() {
    static const std::array<int8_t, OfdmGrid::kNData> pat = [] {
        std::array<int8_t, OfdmGrid::kNData> p{};
        uint32_t lfsr = 0x5a;
        for (auto& v : p) {
            lfsr = (lfsr >> 1) ^ (-(lfsr & 1u) & 0xB400u);
            v = (lfsr & 1) ? 1 : -1;
        }
        return p;
    }();
    return pat;
}

}  // namespace

double lts_value(int logical) {
    if (logical < -26 || logical > 26) return 0.0;
    return double(kLtsSeq[logical + 26]);
}

const std::vector<cplx>& lts_time_symbol() {
    static const std::vector<cplx> sym = [] {
        std::vector<cplx> spec(64, cplx(0.0, 0.0));
        for (int k = -26; k <= 26; ++k) spec[OfdmGrid::bin_of(k)] = lts_value(k);
        return ifft(spec, 64);
    }();
    return sym;
}

double pilot_polarity(int n) {
    static const std::vector<int8_t> seq = [] {
        std::vector<int8_t> s(127);
        uint8_t state = 0x7f;
        for (auto& v : s) {
            uint8_t fb = ((state >> 6) ^ (state >> 3)) & 1;
            state = uint8_t(((state << 1) | fb) & 0x7f);
            v = fb ? -1 : 1;
        }
        return s;
    }();
    return double(seq[std::size_t(n) % 127]);
}

double pilot_base(int pilot_idx) { return pilot_idx == 3 ? -1.0 : 1.0; }

// ---------------------------------------------------------------------------
// Bit pipeline
// ---------------------------------------------------------------------------
std::vector<uint8_t> scramble(const std::vector<uint8_t>& bits, uint8_t init) {
    std::vector<uint8_t> out(bits.size());
    uint8_t state = init & 0x7f;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        uint8_t fb = ((state >> 6) ^ (state >> 3)) & 1;
        state = uint8_t(((state << 1) | fb) & 0x7f);
        out[i] = bits[i] ^ fb;
    }
    return out;
}

namespace {

constexpr unsigned kGen0 = 0133;  // octal, taps on current..t-6
constexpr unsigned kGen1 = 0171;

inline uint8_t parity7(unsigned w) {
    w ^= w >> 4;
    w ^= w >> 2;
    w ^= w >> 1;
    return w & 1;
}

// Output pair (A | B<<1) for every 7-bit window (current bit in bit 6).
const std::array<uint8_t, 128>& conv_out_table() {
    static const std::array<uint8_t, 128> t = [] {
        std::array<uint8_t, 128> out{};
        for (unsigned w = 0; w < 128; ++w)
            out[w] = uint8_t(parity7(w & kGen0) | (parity7(w & kGen1) << 1));
        return out;
    }();
    return t;
}

}  // namespace

std::vector<uint8_t> conv_encode(const std::vector<uint8_t>& bits) {
    const auto& table = conv_out_table();
    std::vector<uint8_t> out(bits.size() * 2);
    unsigned state = 0;  // previous six bits, most recent in bit 5
    for (std::size_t i = 0; i < bits.size(); ++i) {
        unsigned w = (unsigned(bits[i]) << 6) | state;
        uint8_t ab = table[w];
        out[2 * i] = ab & 1;
        out[2 * i + 1] = (ab >> 1) & 1;
        state = (w >> 1) & 0x3f;
    }
    return out;
}

namespace {

// Keep masks over one puncturing period of mother bits.
void puncture_pattern(int num, int den, std::vector<uint8_t>& keep) {
    if (num == 1 && den == 2) {
        keep = {1, 1};
    } else if (num == 2 && den == 3) {
        keep = {1, 1, 1, 0};
    } else if (num == 3 && den == 4) {
        keep = {1, 1, 1, 0, 0, 1};
    } else {
        throw ConfigError("unsupported code rate");
    }
}

}  // namespace

std::vector<uint8_t> puncture(const std::vector<uint8_t>& coded, int num, int den) {
    std::vector<uint8_t> keep;
    puncture_pattern(num, den, keep);
    std::vector<uint8_t> out;
    out.reserve(coded.size());
    for (std::size_t i = 0; i < coded.size(); ++i)
        if (keep[i % keep.size()]) out.push_back(coded[i]);
    return out;
}

std::vector<int8_t> depuncture(const std::vector<int8_t>& bits, int num, int den,
                               std::size_t mother_len) {
    std::vector<uint8_t> keep;
    puncture_pattern(num, den, keep);
    std::vector<int8_t> out(mother_len, -1);
    std::size_t src = 0;
    for (std::size_t i = 0; i < mother_len && src < bits.size(); ++i)
        if (keep[i % keep.size()]) out[i] = bits[src++];
    if (src != bits.size()) throw BadLength("depuncture: length mismatch");
    return out;
}

std::vector<uint8_t> viterbi_decode(const std::vector<int8_t>& coded,
                                    std::size_t n_info) {
    if (coded.size() != 2 * n_info) throw BadLength("viterbi: expected 2 bits per step");
    const auto& table = conv_out_table();
    constexpr uint32_t kInf = 0x3fffffff;
    std::array<uint32_t, 64> metric, next_metric;
    metric.fill(kInf);
    metric[0] = 0;  // encoder starts zeroed

    std::vector<uint8_t> decisions(n_info * 64);

    for (std::size_t step = 0; step < n_info; ++step) {
        int8_t ra = coded[2 * step];
        int8_t rb = coded[2 * step + 1];
        uint8_t* dec = decisions.data() + step * 64;
        for (unsigned next = 0; next < 64; ++next) {
            unsigned u = next >> 5;
            unsigned base = (next & 31) << 1;
            // predecessor states base and base|1 with input u
            unsigned w0 = (u << 6) | base;
            unsigned w1 = w0 | 1;
            uint8_t o0 = table[w0];
            uint8_t o1 = table[w1];
            uint32_t c0 = metric[base];
            uint32_t c1 = metric[base | 1];
            if (ra >= 0) {
                c0 += (o0 & 1) != unsigned(ra);
                c1 += (o1 & 1) != unsigned(ra);
            }
            if (rb >= 0) {
                c0 += ((o0 >> 1) & 1) != unsigned(rb);
                c1 += ((o1 >> 1) & 1) != unsigned(rb);
            }
            if (c1 < c0) {
                next_metric[next] = c1;
                dec[next] = 1;
            } else {
                next_metric[next] = c0;
                dec[next] = 0;
            }
        }
        metric = next_metric;
    }

    // Tail bits drive the encoder to state 0; trace back from there.
    std::vector<uint8_t> out(n_info);
    unsigned state = 0;
    for (std::size_t step = n_info; step-- > 0;) {
        out[step] = uint8_t(state >> 5);
        unsigned pred = ((state & 31) << 1) | decisions[step * 64 + state];
        state = pred;
    }
    return out;
}

std::vector<int> interleave_map(int n_cbps, int n_bpsc) {
    const int s = std::max(n_bpsc / 2, 1);
    std::vector<int> map(std::size_t(n_cbps), 0);
    for (int k = 0; k < n_cbps; ++k) {
        int i = (n_cbps / 16) * (k % 16) + k / 16;
        int j = s * (i / s) + (i + n_cbps - (16 * i) / n_cbps) % s;
        map[std::size_t(k)] = j;
    }
    return map;
}

// ---------------------------------------------------------------------------
// Constellations (Gray, unit mean energy)
// ---------------------------------------------------------------------------
namespace {

// Axis level for the Gray-coded bit groups of clause 17.
const int kAxis1[2] = {-1, 1};
const int kAxis2[4] = {-3, -1, 3, 1};            // b0b1 -> level (00,01,10,11)
const int kAxis3[8] = {-7, -5, -1, -3, 7, 5, 1, 3};  // b0b1b2

double mod_scale(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return 1.0;
        case Modulation::QPSK: return 1.0 / std::sqrt(2.0);
        case Modulation::QAM16: return 1.0 / std::sqrt(10.0);
        case Modulation::QAM64: return 1.0 / std::sqrt(42.0);
    }
    return 1.0;
}

int demap_axis(double v, const int* levels, const uint8_t* grays, int n) {
    int best = 0;
    double bestd = 1e300;
    for (int i = 0; i < n; ++i) {
        double d = std::abs(v - double(levels[i]));
        if (d < bestd) {
            bestd = d;
            best = i;
        }
    }
    return grays[best];
}

// Sorted levels with their Gray codes, for nearest-point decisions.
const int kLev2[4] = {-3, -1, 1, 3};
const uint8_t kGray2[4] = {0b00, 0b01, 0b11, 0b10};
const int kLev3[8] = {-7, -5, -3, -1, 1, 3, 5, 7};
const uint8_t kGray3[8] = {0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100};

}  // namespace

int bits_per_point(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return 1;
        case Modulation::QPSK: return 2;
        case Modulation::QAM16: return 4;
        case Modulation::QAM64: return 6;
    }
    return 1;
}

cplx map_point(const uint8_t* bits, Modulation m) {
    double s = mod_scale(m);
    switch (m) {
        case Modulation::BPSK:
            return cplx(kAxis1[bits[0]], 0.0);
        case Modulation::QPSK:
            return cplx(kAxis1[bits[0]], kAxis1[bits[1]]) * s;
        case Modulation::QAM16:
            return cplx(kAxis2[(bits[0] << 1) | bits[1]],
                        kAxis2[(bits[2] << 1) | bits[3]]) * s;
        case Modulation::QAM64:
            return cplx(kAxis3[(bits[0] << 2) | (bits[1] << 1) | bits[2]],
                        kAxis3[(bits[3] << 2) | (bits[4] << 1) | bits[5]]) * s;
    }
    return cplx(0.0, 0.0);
}

void demap_point(const cplx& z, Modulation m, uint8_t* bits) {
    double inv = 1.0 / mod_scale(m);
    double i = z.real() * inv, q = z.imag() * inv;
    switch (m) {
        case Modulation::BPSK:
            bits[0] = i >= 0.0 ? 1 : 0;
            break;
        case Modulation::QPSK:
            bits[0] = i >= 0.0 ? 1 : 0;
            bits[1] = q >= 0.0 ? 1 : 0;
            break;
        case Modulation::QAM16: {
            uint8_t gi = uint8_t(demap_axis(i, kLev2, kGray2, 4));
            uint8_t gq = uint8_t(demap_axis(q, kLev2, kGray2, 4));
            bits[0] = (gi >> 1) & 1;
            bits[1] = gi & 1;
            bits[2] = (gq >> 1) & 1;
            bits[3] = gq & 1;
            break;
        }
        case Modulation::QAM64: {
            uint8_t gi = uint8_t(demap_axis(i, kLev3, kGray3, 8));
            uint8_t gq = uint8_t(demap_axis(q, kLev3, kGray3, 8));
            bits[0] = (gi >> 2) & 1;
            bits[1] = (gi >> 1) & 1;
            bits[2] = gi & 1;
            bits[3] = (gq >> 2) & 1;
            bits[4] = (gq >> 1) & 1;
            bits[5] = gq & 1;
            break;
        }
    }
}

int num_data_symbols(std::size_t n_payload_bits, const RateParams& rate) {
    std::size_t total = 16 + n_payload_bits + 6;
    return int((total + std::size_t(rate.data_bits_per_symbol) - 1) /
               std::size_t(rate.data_bits_per_symbol));
}

EncodedPayload encode_payload(const std::vector<uint8_t>& bits, const RateParams& rate,
                              uint8_t scrambler_init) {
    if (bits.empty()) throw BadLength("encode_payload: empty payload");
    const int n_sym = num_data_symbols(bits.size(), rate);
    const std::size_t total = std::size_t(n_sym) * std::size_t(rate.data_bits_per_symbol);

    std::vector<uint8_t> frame(total, 0);
    std::copy(bits.begin(), bits.end(), frame.begin() + 16);

    std::vector<uint8_t> scrambled = scramble(frame, scrambler_init);
    for (std::size_t i = 0; i < 6; ++i) scrambled[16 + bits.size() + i] = 0;  // tail

    std::vector<uint8_t> mother = conv_encode(scrambled);
    std::vector<uint8_t> coded = puncture(mother, rate.code_num, rate.code_den);
    if (coded.size() != std::size_t(n_sym) * std::size_t(rate.coded_bits_per_symbol))
        throw BadLength("encode_payload: coded length mismatch");

    const auto il = interleave_map(rate.coded_bits_per_symbol, rate.bits_per_point);
    const int nbpsc = rate.bits_per_point;

    EncodedPayload out;
    out.n_symbols = n_sym;
    out.symbols.reserve(std::size_t(n_sym) * OfdmGrid::kNData);
    std::vector<uint8_t> block(std::size_t(rate.coded_bits_per_symbol));
    for (int s = 0; s < n_sym; ++s) {
        const uint8_t* in = coded.data() + std::size_t(s) * std::size_t(rate.coded_bits_per_symbol);
        for (int k = 0; k < rate.coded_bits_per_symbol; ++k) block[std::size_t(il[std::size_t(k)])] = in[k];
        for (int p = 0; p < OfdmGrid::kNData; ++p)
            out.symbols.push_back(map_point(block.data() + std::size_t(p * nbpsc), rate.modulation));
    }
    return out;
}

std::vector<uint8_t> decode_payload(const std::vector<cplx>& symbols,
                                    const RateParams& rate,
                                    std::size_t n_payload_bits) {
    const int n_sym = num_data_symbols(n_payload_bits, rate);
    if (symbols.size() != std::size_t(n_sym) * OfdmGrid::kNData)
        throw BadLength("decode_payload: symbol count must be N*48");

    const auto il = interleave_map(rate.coded_bits_per_symbol, rate.bits_per_point);
    const int nbpsc = rate.bits_per_point;

    std::vector<int8_t> coded;
    coded.reserve(std::size_t(n_sym) * std::size_t(rate.coded_bits_per_symbol));
    std::vector<uint8_t> block(std::size_t(rate.coded_bits_per_symbol));
    for (int s = 0; s < n_sym; ++s) {
        for (int p = 0; p < OfdmGrid::kNData; ++p)
            demap_point(symbols[std::size_t(s) * OfdmGrid::kNData + std::size_t(p)],
                        rate.modulation, block.data() + std::size_t(p * nbpsc));
        for (int k = 0; k < rate.coded_bits_per_symbol; ++k)
            coded.push_back(int8_t(block[std::size_t(il[std::size_t(k)])]));
    }

    const std::size_t n_info = std::size_t(n_sym) * std::size_t(rate.data_bits_per_symbol);
    std::vector<int8_t> mother = depuncture(coded, rate.code_num, rate.code_den, 2 * n_info);
    std::vector<uint8_t> scrambled = viterbi_decode(mother, n_info);

    // The SERVICE field is zero before scrambling, so its first seven bits
    // expose the scrambler sequence; solve the LFSR initial state from them.
    uint8_t o[7];
    for (int i = 0; i < 7; ++i) o[i] = scrambled[std::size_t(i)] & 1;
    uint8_t a0 = o[6] ^ o[2];
    uint8_t a1 = o[5] ^ o[1];
    uint8_t a2 = o[4] ^ o[0];
    uint8_t a3 = o[3] ^ a0;
    uint8_t a4 = o[2] ^ a1;
    uint8_t a5 = o[1] ^ a2;
    uint8_t a6 = o[0] ^ a3;
    uint8_t state = uint8_t((a6 << 6) | (a5 << 5) | (a4 << 4) | (a3 << 3) |
                            (a2 << 2) | (a1 << 1) | a0);

    std::vector<uint8_t> descrambled = scramble(scrambled, state);
    return std::vector<uint8_t>(descrambled.begin() + 16,
                                descrambled.begin() + 16 + long(n_payload_bits));
}

std::vector<uint8_t> random_bits(std::size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<uint8_t> out(n);
    for (auto& b : out) b = uint8_t(rng.next_u64() & 1);
    return out;
}

// ---------------------------------------------------------------------------
// Frame assembly
// ---------------------------------------------------------------------------
namespace {

// IFFT of a per-antenna spectrum built from used-bin values.
void spectrum_to_time(const std::array<cplx, OfdmGrid::kNUsed>& used, int antenna,
                      const SubcarrierVectors& precoders, std::vector<cplx>& out) {
    const auto& grid = OfdmGrid::standard();
    std::vector<cplx> spec(64, cplx(0.0, 0.0));
    for (int i = 0; i < OfdmGrid::kNUsed; ++i)
        spec[std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]))] =
            precoders[std::size_t(i)][antenna] * used[std::size_t(i)];
    out = ifft(spec, 64);
}

void append_with_cp(std::vector<cplx>& stream, const std::vector<cplx>& sym) {
    stream.insert(stream.end(), sym.end() - OfdmGrid::kCpLen, sym.end());
    stream.insert(stream.end(), sym.begin(), sym.end());
}

}  // namespace

TxFrame assemble_data_frame(const std::vector<uint8_t>& bits, const RateParams& rate,
                            const SubcarrierVectors& precoders,
                            uint8_t scrambler_init) {
    const auto& grid = OfdmGrid::standard();
    for (const auto& v : precoders)
        if (v.norm2() <= 0.0) throw MissingPrecoder("precoder missing for a used subcarrier");

    EncodedPayload enc = encode_payload(bits, rate, scrambler_init);
    const int n_sym = enc.n_symbols;

    TxFrame frame;
    frame.source_bits = bits;
    frame.rate_mbps = rate.rate_mbps;
    frame.n_data_symbols = n_sym;

    for (int a = 0; a < 2; ++a) frame.streams[a].reserve(std::size_t(kPreambleLen + n_sym * kSymbolLen));

    // Preamble: STS (10 short repetitions), then GI2 + two long symbols,
    // all through the precoders.
    std::array<cplx, OfdmGrid::kNUsed> sts_used{}, lts_used{};
    for (int i = 0; i < OfdmGrid::kNUsed; ++i) {
        int k = grid.used_subcarriers[std::size_t(i)];
        sts_used[std::size_t(i)] = sts_value(k);
        lts_used[std::size_t(i)] = lts_value(k);
    }
    for (int a = 0; a < 2; ++a) {
        std::vector<cplx> s64, l64;
        spectrum_to_time(sts_used, a, precoders, s64);
        spectrum_to_time(lts_used, a, precoders, l64);
        auto& st = frame.streams[a];
        for (int rep = 0; rep < 10; ++rep)
            st.insert(st.end(), s64.begin(), s64.begin() + 16);
        st.insert(st.end(), l64.end() - kLtsGuardLen, l64.end());
        st.insert(st.end(), l64.begin(), l64.end());
        st.insert(st.end(), l64.begin(), l64.end());
    }

    // Signal Field: fixed placeholder BPSK pattern (never parsed).
    std::array<cplx, OfdmGrid::kNUsed> sf_used{};
    for (int p = 0; p < OfdmGrid::kNData; ++p)
        sf_used[std::size_t(grid.used_index(grid.data_subcarriers[std::size_t(p)]))] =
            double(sf_pattern()[std::size_t(p)]);
    for (int q = 0; q < OfdmGrid::kNPilots; ++q)
        sf_used[std::size_t(grid.used_index(grid.pilot_subcarriers[std::size_t(q)]))] =
            pilot_base(q) * pilot_polarity(0);
    for (int a = 0; a < 2; ++a) {
        std::vector<cplx> t;
        spectrum_to_time(sf_used, a, precoders, t);
        append_with_cp(frame.streams[a], t);
    }

    // Payload symbols.
    frame.ref_symbols.resize(std::size_t(n_sym));
    for (int s = 0; s < n_sym; ++s) {
        std::array<cplx, OfdmGrid::kNUsed> used{};
        for (int p = 0; p < OfdmGrid::kNData; ++p) {
            cplx sym = enc.symbols[std::size_t(s) * OfdmGrid::kNData + std::size_t(p)];
            frame.ref_symbols[std::size_t(s)][std::size_t(p)] = sym;
            used[std::size_t(grid.used_index(grid.data_subcarriers[std::size_t(p)]))] = sym;
        }
        for (int q = 0; q < OfdmGrid::kNPilots; ++q)
            used[std::size_t(grid.used_index(grid.pilot_subcarriers[std::size_t(q)]))] =
                pilot_base(q) * pilot_polarity(s + 1);
        for (int a = 0; a < 2; ++a) {
            std::vector<cplx> t;
            spectrum_to_time(used, a, precoders, t);
            append_with_cp(frame.streams[a], t);
        }
    }

    // Unit mean transmit power across both antennas.
    double energy = 0.0;
    for (const auto& st : frame.streams)
        for (const auto& v : st) energy += std::norm(v);
    double mean_total = energy / double(frame.streams[0].size());
    if (mean_total > 0.0) {
        double scale = 1.0 / std::sqrt(mean_total);
        for (auto& st : frame.streams)
            for (auto& v : st) v *= scale;
    }
    return frame;
}

std::array<std::vector<cplx>, 2> assemble_training_frame(int m_symbols,
                                                         int antenna_index) {
    if (m_symbols < 1) throw BadLength("training frame needs M >= 1");
    std::vector<cplx> spec(64, cplx(0.0, 0.0));
    for (int k = -26; k <= 26; ++k)
        spec[std::size_t(OfdmGrid::bin_of(k))] = sts_value(k);
    auto s64 = ifft(spec, 64);
    const auto& l64 = lts_time_symbol();

    std::vector<cplx> active;
    active.reserve(std::size_t(kStsLen + kLtsGuardLen + 64 * m_symbols));
    for (int rep = 0; rep < 10; ++rep)
        active.insert(active.end(), s64.begin(), s64.begin() + 16);
    active.insert(active.end(), l64.end() - kLtsGuardLen, l64.end());
    for (int m = 0; m < m_symbols; ++m)
        active.insert(active.end(), l64.begin(), l64.end());

    double energy = 0.0;
    for (const auto& v : active) energy += std::norm(v);
    double scale = 1.0 / std::sqrt(energy / double(active.size()));
    for (auto& v : active) v *= scale;

    std::array<std::vector<cplx>, 2> out;
    out[std::size_t(antenna_index)] = active;
    out[std::size_t(1 - antenna_index)].assign(active.size(), cplx(0.0, 0.0));
    return out;
}

// ---------------------------------------------------------------------------
// Synchronization
// ---------------------------------------------------------------------------
namespace {

SyncResult detect_core(const std::vector<const std::vector<cplx>*>& streams,
                       const SyncOptions& opt) {
    SyncResult res;
    const int D = 16;
    const int W = opt.corr_window;
    const std::size_t n_streams = streams.size();
    const std::size_t n = streams[0]->size();
    for (const auto* s : streams)
        if (s->size() != n) throw LengthMismatch("detect: stream length mismatch");
    if (n < std::size_t(kPreambleLen)) return res;

    // Delay-and-correlate over the STS period, metrics accumulated across
    // the antenna streams.
    std::vector<cplx> corr(n_streams, cplx(0.0, 0.0));
    double pwr = 0.0;
    for (std::size_t a = 0; a < n_streams; ++a) {
        const auto& rx = *streams[a];
        for (int m = 0; m < W; ++m) {
            corr[a] += rx[std::size_t(m + D)] * std::conj(rx[std::size_t(m)]);
            pwr += std::norm(rx[std::size_t(m + D)]);
        }
    }
    std::size_t limit = n - std::size_t(W + D) - 1;
    int run = 0;
    std::size_t cand = 0;
    cplx corr_acc(0.0, 0.0);
    bool found = false;
    for (std::size_t t = 0; t < limit; ++t) {
        cplx csum(0.0, 0.0);
        for (const auto& c : corr) csum += c;
        double metric = std::abs(csum) / std::max(pwr, 1e-300);
        if (metric > opt.threshold) {
            if (run == 0) {
                cand = t;
                corr_acc = cplx(0.0, 0.0);
            }
            ++run;
            corr_acc += csum;
            if (run >= opt.plateau_run) {
                found = true;
                break;
            }
        } else {
            run = 0;
        }
        for (std::size_t a = 0; a < n_streams; ++a) {
            const auto& rx = *streams[a];
            corr[a] -= rx[std::size_t(t + D)] * std::conj(rx[std::size_t(t)]);
            corr[a] += rx[std::size_t(t + W + D)] * std::conj(rx[std::size_t(t + W)]);
            pwr -= std::norm(rx[std::size_t(t + D)]);
            pwr += std::norm(rx[std::size_t(t + W + D)]);
        }
    }
    if (!found) return res;

    const double fs = opt.sample_rate_hz;
    double cfo_coarse = std::arg(corr_acc) * fs / (2.0 * kPi * double(D));

    // Fine timing: cross-correlate with the clean long-training symbol on
    // coarse-CFO-corrected segments; both repetitions and all antennas score
    // together.
    std::size_t seg_lo = cand > 16 ? cand - 16 : 0;
    std::size_t seg_hi = std::min(n, cand + 420);
    if (seg_hi - seg_lo < 320) return res;
    std::vector<std::vector<cplx>> segs(n_streams);
    for (std::size_t a = 0; a < n_streams; ++a) {
        segs[a].assign(streams[a]->begin() + long(seg_lo), streams[a]->begin() + long(seg_hi));
        for (std::size_t i = 0; i < segs[a].size(); ++i)
            segs[a][i] *= std::polar(1.0, -2.0 * kPi * cfo_coarse * double(i) / fs);
    }

    const auto& lts = lts_time_symbol();
    double best = -1.0;
    std::size_t best_d = 0;
    std::size_t lo = cand - seg_lo + 60;
    std::size_t hi = std::min(segs[0].size() - 129, cand - seg_lo + 280);
    for (std::size_t d = lo; d <= hi; ++d) {
        double score = 0.0;
        for (const auto& seg : segs) {
            cplx x1(0.0, 0.0), x2(0.0, 0.0);
            for (int m = 0; m < 64; ++m) {
                cplx ref = std::conj(lts[std::size_t(m)]);
                x1 += seg[d + std::size_t(m)] * ref;
                x2 += seg[d + std::size_t(m) + 64] * ref;
            }
            score += std::abs(x1) + std::abs(x2);
        }
        if (score > best) {
            best = score;
            best_d = d;
        }
    }
    std::size_t t1_abs = best_d + seg_lo;
    if (t1_abs < std::size_t(kStsLen + kLtsGuardLen)) return res;

    // Fine CFO from the lag-64 autocorrelation across the two repetitions.
    // The window is pulled back into the long guard interval so a late
    // timing estimate cannot drag post-LTS samples into the product.
    cplx z(0.0, 0.0);
    std::size_t z0 = best_d - std::min<std::size_t>(best_d, 20);
    for (const auto& seg : segs)
        for (int m = 0; m < 76; ++m)
            z += seg[z0 + std::size_t(m) + 64] * std::conj(seg[z0 + std::size_t(m)]);
    double cfo_fine = std::arg(z) * fs / (2.0 * kPi * 64.0);

    res.detected = true;
    res.frame_start = t1_abs - std::size_t(kStsLen + kLtsGuardLen);
    res.cfo_hz = cfo_coarse + cfo_fine;
    return res;
}

}  // namespace

SyncResult detect_and_sync(const std::vector<cplx>& rx, const SyncOptions& opt) {
    return detect_core({&rx}, opt);
}

SyncResult detect_and_sync_dual(const std::array<std::vector<cplx>, 2>& rx,
                                const SyncOptions& opt) {
    return detect_core({&rx[0], &rx[1]}, opt);
}

std::vector<cplx> ls_estimate(const std::vector<std::vector<cplx>>& rx_syms,
                              const std::vector<cplx>& ref) {
    if (rx_syms.empty()) throw BadLength("ls_estimate: no training symbols");
    const std::size_t n = ref.size();
    std::vector<cplx> h(n, cplx(0.0, 0.0));
    for (const auto& sym : rx_syms) {
        if (sym.size() != n) throw BadLength("ls_estimate: bin count mismatch");
        for (std::size_t k = 0; k < n; ++k) h[k] += sym[k];
    }
    const double m = double(rx_syms.size());
    for (std::size_t k = 0; k < n; ++k) h[k] /= m * ref[k];
    return h;
}

std::vector<cplx> zf_equalize(const std::vector<cplx>& symbols,
                              const std::vector<cplx>& h) {
    if (symbols.size() != h.size()) throw BadLength("zf_equalize: length mismatch");
    double hmax = 0.0;
    for (const auto& v : h) hmax = std::max(hmax, std::abs(v));
    std::vector<cplx> out(symbols.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        if (std::abs(h[k]) <= 1e-12 * hmax)
            throw SingularChannel("zf_equalize: vanishing channel coefficient");
        out[k] = symbols[k] / h[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Receiver chains
// ---------------------------------------------------------------------------
namespace {

// Yields the CFO-corrected 64-bin spectrum of the FFT window starting at t.
using SpectrumFn = std::function<bool(std::size_t t, std::array<cplx, 64>& out)>;

bool window_spectrum(const std::vector<cplx>& stream, std::size_t t, double cfo,
                     double fs, std::size_t t0, std::array<cplx, 64>& out) {
    if (t + 64 > stream.size()) return false;
    for (int m = 0; m < 64; ++m) {
        double ph = -2.0 * kPi * cfo * double(t + std::size_t(m) - t0) / fs;
        out[std::size_t(m)] = stream[t + std::size_t(m)] * std::polar(1.0, ph);
    }
    fft_inplace(out.data(), 64, +1);
    return true;
}

DecodeResult run_receiver_chain(const SpectrumFn& combined_spectrum,
                                const SyncResult& sync, const RateParams& rate,
                                std::size_t n_payload_bits,
                                const std::vector<std::array<cplx, OfdmGrid::kNData>>* refs,
                                const ReceiveOptions& opt) {
    DecodeResult res;
    res.detected = true;
    res.frame_start = sync.frame_start;
    res.cfo_hz = sync.cfo_hz;

    const auto& grid = OfdmGrid::standard();
    const int B = opt.timing_backoff;
    const std::size_t t0 = sync.frame_start;
    const int n_sym = num_data_symbols(n_payload_bits, rate);

    // Channel estimate from the two preamble long-training symbols.
    std::vector<std::vector<cplx>> lts_rx;
    std::array<cplx, 64> spec;
    for (int m = 0; m < 2; ++m) {
        std::size_t t = t0 + std::size_t(kStsLen + kLtsGuardLen + 64 * m - B);
        if (!combined_spectrum(t, spec)) {
            res.detected = false;
            return res;
        }
        std::vector<cplx> used(OfdmGrid::kNUsed);
        for (int i = 0; i < OfdmGrid::kNUsed; ++i)
            used[std::size_t(i)] = spec[std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]))];
        lts_rx.push_back(std::move(used));
    }
    std::vector<cplx> lts_ref(OfdmGrid::kNUsed);
    for (int i = 0; i < OfdmGrid::kNUsed; ++i)
        lts_ref[std::size_t(i)] = lts_value(grid.used_subcarriers[std::size_t(i)]);
    res.h_est = ls_estimate(lts_rx, lts_ref);

    std::array<int, OfdmGrid::kNPilots> pilot_pos;
    std::array<int, OfdmGrid::kNData> data_pos;
    for (int q = 0; q < OfdmGrid::kNPilots; ++q)
        pilot_pos[std::size_t(q)] = grid.used_index(grid.pilot_subcarriers[std::size_t(q)]);
    for (int p = 0; p < OfdmGrid::kNData; ++p)
        data_pos[std::size_t(p)] = grid.used_index(grid.data_subcarriers[std::size_t(p)]);

    std::vector<cplx> eq_stream;
    eq_stream.reserve(std::size_t(n_sym) * OfdmGrid::kNData);
    std::array<double, OfdmGrid::kNData> err_pow{}, ref_pow{};

    std::vector<cplx> data_h(OfdmGrid::kNData), data_y(OfdmGrid::kNData);
    for (int p = 0; p < OfdmGrid::kNData; ++p)
        data_h[std::size_t(p)] = res.h_est[std::size_t(data_pos[std::size_t(p)])];

    for (int s = 0; s < n_sym; ++s) {
        std::size_t t = t0 + std::size_t(kPreambleLen + s * kSymbolLen + OfdmGrid::kCpLen - B);
        if (!combined_spectrum(t, spec)) {
            res.detected = false;
            return res;
        }

        cplx cpe(0.0, 0.0);
        if (opt.cpe_correction) {
            for (int q = 0; q < OfdmGrid::kNPilots; ++q) {
                cplx expect = res.h_est[std::size_t(pilot_pos[std::size_t(q)])] *
                              (pilot_base(q) * pilot_polarity(s + 1));
                cplx y = spec[std::size_t(OfdmGrid::bin_of(grid.pilot_subcarriers[std::size_t(q)]))];
                cpe += y * std::conj(expect);
            }
        }
        cplx rot = std::abs(cpe) > 0.0 ? std::conj(cpe) / std::abs(cpe) : cplx(1.0, 0.0);

        for (int p = 0; p < OfdmGrid::kNData; ++p)
            data_y[std::size_t(p)] =
                spec[std::size_t(OfdmGrid::bin_of(grid.data_subcarriers[std::size_t(p)]))] * rot;
        std::vector<cplx> z = zf_equalize(data_y, data_h);

        if (refs) {
            const auto& r = (*refs)[std::size_t(s)];
            for (int p = 0; p < OfdmGrid::kNData; ++p) {
                err_pow[std::size_t(p)] += std::norm(z[std::size_t(p)] - r[std::size_t(p)]);
                ref_pow[std::size_t(p)] += std::norm(r[std::size_t(p)]);
            }
        }
        eq_stream.insert(eq_stream.end(), z.begin(), z.end());
    }

    if (refs) {
        res.have_evm = true;
        double te = 0.0, tr = 0.0;
        for (int p = 0; p < OfdmGrid::kNData; ++p) {
            te += err_pow[std::size_t(p)];
            tr += ref_pow[std::size_t(p)];
            res.evm_per_subcarrier[std::size_t(p)] =
                ref_pow[std::size_t(p)] > 0.0 ? err_pow[std::size_t(p)] / ref_pow[std::size_t(p)] : 0.0;
        }
        res.evm_lin = tr > 0.0 ? te / tr : 0.0;
    }

    if (opt.decode_bits) res.bits = decode_payload(eq_stream, rate, n_payload_bits);
    return res;
}

SyncResult resolve_sync(const std::vector<cplx>& stream, const ReceiveOptions& opt) {
    if (opt.forced_start) {
        SyncResult s;
        s.detected = true;
        s.frame_start = *opt.forced_start;
        s.cfo_hz = opt.forced_cfo_hz.value_or(0.0);
        return s;
    }
    return detect_and_sync(stream, opt.sync);
}

}  // namespace

double DecodeResult::evm_db() const {
    return evm_lin > 0.0 ? 10.0 * std::log10(evm_lin) : -300.0;
}

DecodeResult receive_frame(const std::vector<cplx>& stream, const RateParams& rate,
                           std::size_t n_payload_bits,
                           const std::vector<std::array<cplx, OfdmGrid::kNData>>* refs,
                           const ReceiveOptions& opt) {
    SyncResult sync = resolve_sync(stream, opt);
    if (!sync.detected) return {};
    const double fs = opt.sync.sample_rate_hz;
    SpectrumFn fn = [&](std::size_t t, std::array<cplx, 64>& out) {
        return window_spectrum(stream, t, sync.cfo_hz, fs, sync.frame_start, out);
    };
    return run_receiver_chain(fn, sync, rate, n_payload_bits, refs, opt);
}

DecodeResult receive_frame_postfft(const std::array<std::vector<cplx>, 2>& streams,
                                   const SubcarrierVectors& decoders,
                                   const RateParams& rate, std::size_t n_payload_bits,
                                   const std::vector<std::array<cplx, OfdmGrid::kNData>>* refs,
                                   const ReceiveOptions& opt) {
    SyncResult sync;
    if (opt.forced_start) {
        sync.detected = true;
        sync.frame_start = *opt.forced_start;
        sync.cfo_hz = opt.forced_cfo_hz.value_or(0.0);
    } else {
        sync = detect_and_sync_dual(streams, opt.sync);
    }
    if (!sync.detected) return {};

    const auto& grid = OfdmGrid::standard();
    const double fs = opt.sync.sample_rate_hz;
    SpectrumFn fn = [&](std::size_t t, std::array<cplx, 64>& out) {
        std::array<cplx, 64> s0, s1;
        if (!window_spectrum(streams[0], t, sync.cfo_hz, fs, sync.frame_start, s0) ||
            !window_spectrum(streams[1], t, sync.cfo_hz, fs, sync.frame_start, s1))
            return false;
        out.fill(cplx(0.0, 0.0));
        for (int i = 0; i < OfdmGrid::kNUsed; ++i) {
            std::size_t bin = std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]));
            const Vec2& u = decoders[std::size_t(i)];
            out[bin] = std::conj(u.a) * s0[bin] + std::conj(u.b) * s1[bin];
        }
        return true;
    };
    return run_receiver_chain(fn, sync, rate, n_payload_bits, refs, opt);
}

TrainingSlotEstimate estimate_training_slot(const std::array<std::vector<cplx>, 2>& rx,
                                            int m_symbols,
                                            const ReceiveOptions& opt) {
    TrainingSlotEstimate est;
    SyncResult sync;
    if (opt.forced_start) {
        sync.detected = true;
        sync.frame_start = *opt.forced_start;
        sync.cfo_hz = opt.forced_cfo_hz.value_or(0.0);
    } else {
        sync = detect_and_sync_dual(rx, opt.sync);
    }
    if (!sync.detected) return est;

    const auto& grid = OfdmGrid::standard();
    const double fs = opt.sync.sample_rate_hz;
    const int B = opt.timing_backoff;
    const std::size_t base = sync.frame_start + std::size_t(kStsLen + kLtsGuardLen - B);

    for (int r = 0; r < 2; ++r) {
        std::vector<std::vector<cplx>> syms;
        std::array<cplx, 64> spec;
        for (int m = 0; m < m_symbols; ++m) {
            if (!window_spectrum(rx[std::size_t(r)], base + std::size_t(64 * m), sync.cfo_hz, fs,
                                 sync.frame_start, spec))
                return est;
            std::vector<cplx> used(OfdmGrid::kNUsed);
            for (int i = 0; i < OfdmGrid::kNUsed; ++i)
                used[std::size_t(i)] =
                    spec[std::size_t(OfdmGrid::bin_of(grid.used_subcarriers[std::size_t(i)]))];
            syms.push_back(std::move(used));
        }

        auto& h = est.h[std::size_t(r)];
        auto& sp = est.s_pow[std::size_t(r)];
        auto& np = est.n_pow[std::size_t(r)];
        auto& s2 = est.sigma2[std::size_t(r)];
        h.assign(OfdmGrid::kNUsed, cplx(0.0, 0.0));
        sp.assign(OfdmGrid::kNUsed, 0.0);
        np.assign(OfdmGrid::kNUsed, 0.0);
        s2.assign(OfdmGrid::kNUsed, 0.0);

        for (int i = 0; i < OfdmGrid::kNUsed; ++i) {
            double ref = lts_value(grid.used_subcarriers[std::size_t(i)]);
            cplx acc(0.0, 0.0);
            for (const auto& sym : syms) acc += sym[std::size_t(i)];
            const double m = double(m_symbols);
            h[std::size_t(i)] = acc / (m * ref);
            sp[std::size_t(i)] = std::norm(acc / m);
            double n_acc = 0.0;
            for (const auto& sym : syms)
                n_acc += std::norm(sym[std::size_t(i)] - h[std::size_t(i)] * ref);
            np[std::size_t(i)] = n_acc / m;
            double hp = std::norm(h[std::size_t(i)]);
            s2[std::size_t(i)] = hp > 0.0 ? np[std::size_t(i)] / hp : 0.0;
        }
    }
    est.detected = true;
    return est;
}

}  // namespace iasim

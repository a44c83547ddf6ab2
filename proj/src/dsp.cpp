#include "audioroute/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace audioroute {

namespace {

constexpr std::size_t kFftSize = 2048;
constexpr std::size_t kHop = 512;

// ---------------------------------------------------------------------------
// Radix-2 FFT, iterative Cooley-Tukey. Sizes are fixed powers of two here.
// ---------------------------------------------------------------------------

void fft_inplace(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n - 1)));
    return w;
}

// Magnitude spectra of Hann-windowed frames; short input is zero-padded to
// one frame.
std::vector<std::vector<double>> stft_magnitudes(const AudioBuffer& buffer) {
    const std::vector<double> window = hann_window(kFftSize);
    const std::size_t n = buffer.samples.size();
    const std::size_t frame_count = n >= kFftSize ? 1 + (n - kFftSize) / kHop : 1;

    std::vector<std::vector<double>> mags;
    mags.reserve(frame_count);
    std::vector<std::complex<double>> frame(kFftSize);
    for (std::size_t f = 0; f < frame_count; ++f) {
        const std::size_t start = f * kHop;
        for (std::size_t i = 0; i < kFftSize; ++i) {
            const std::size_t idx = start + i;
            const double s = idx < n ? buffer.samples[idx] : 0.0;
            frame[i] = {s * window[i], 0.0};
        }
        fft_inplace(frame);
        std::vector<double> mag(kFftSize / 2 + 1);
        for (std::size_t k = 0; k <= kFftSize / 2; ++k) mag[k] = std::abs(frame[k]);
        mags.push_back(std::move(mag));
    }
    return mags;
}

// Offset of a parabola fit through (-1,a) (0,b) (1,c), clamped to [-1,1].
double parabolic_offset(double a, double b, double c) {
    const double denom = a - 2.0 * b + c;
    if (std::abs(denom) < 1e-30) return 0.0;
    return std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("audio file '" + path + "' not found");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw CorruptHeaderError("'" + path + "' is not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* chunk_id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t chunk_size = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + chunk_size > bytes.size())
            throw CorruptHeaderError("'" + path + "': truncated chunk");
        if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw CorruptHeaderError("'" + path + "': short fmt chunk");
            format = read_u16(bytes.data() + pos);
            channels = read_u16(bytes.data() + pos + 2);
            rate = read_u32(bytes.data() + pos + 4);
            bits = read_u16(bytes.data() + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(chunk_id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_size = chunk_size;
        }
        pos += chunk_size + (chunk_size & 1);
    }

    if (!have_fmt || !data) throw CorruptHeaderError("'" + path + "': missing fmt or data chunk");
    if (channels == 0 || rate == 0) throw CorruptHeaderError("'" + path + "': bad fmt fields");

    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32)
        throw UnsupportedEncodingError("'" + path + "': only PCM16 and float32 WAV are supported");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_size / frame_bytes;
    if (frames == 0) throw CorruptHeaderError("'" + path + "': empty data chunk");

    AudioBuffer buffer;
    buffer.sample_rate = rate;
    buffer.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + f * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v = 0.0f;
                std::memcpy(&v, p, 4);
                acc += static_cast<double>(v);
            }
        }
        buffer.samples[f] = std::clamp(acc / channels, -1.0, 1.0);
    }
    return buffer;
}

void write_wav_pcm16(const std::string& path, const AudioBuffer& buffer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");

    const std::uint32_t data_size = static_cast<std::uint32_t>(buffer.samples.size() * 2);
    auto put_u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
        out.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
        out.write(b, 2);
    };

    out.write("RIFF", 4);
    put_u32(36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(buffer.sample_rate);
    put_u32(buffer.sample_rate * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_size);
    for (double s : buffer.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        put_u16(static_cast<std::uint16_t>(
            static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
    }
}

// ---------------------------------------------------------------------------
// Tempo
// ---------------------------------------------------------------------------

double estimate_tempo(const AudioBuffer& buffer) {
    if (buffer.duration() < 2.0) throw TooShortError("tempo estimation needs at least 2 s of audio");

    const auto mags = stft_magnitudes(buffer);
    std::vector<double> flux(mags.size(), 0.0);
    for (std::size_t t = 1; t < mags.size(); ++t) {
        double sum = 0.0;
        for (std::size_t k = 0; k < mags[t].size(); ++k)
            sum += std::max(0.0, mags[t][k] - mags[t - 1][k]);
        flux[t] = sum;
    }
    double mean = 0.0;
    for (double v : flux) mean += v;
    mean /= static_cast<double>(flux.size());
    for (auto& v : flux) v -= mean;

    const double frame_rate = static_cast<double>(buffer.sample_rate) / static_cast<double>(kHop);
    const std::size_t lag_min =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frame_rate * 60.0 / 240.0)));
    const std::size_t lag_max = std::min(
        flux.size() - 1, static_cast<std::size_t>(std::ceil(frame_rate * 60.0 / 40.0)));
    if (lag_max <= lag_min) throw TooShortError("onset envelope too short for the tempo range");

    auto autocorr = [&](std::size_t lag) {
        double sum = 0.0;
        for (std::size_t t = 0; t + lag < flux.size(); ++t) sum += flux[t] * flux[t + lag];
        return sum / static_cast<double>(flux.size() - lag);
    };

    // Scan from the longest lag so a flat envelope resolves to the lowest BPM.
    std::size_t best_lag = lag_max;
    double best_value = autocorr(lag_max);
    for (std::size_t lag = lag_max; lag-- > lag_min;) {
        const double value = autocorr(lag);
        if (value > best_value) {
            best_value = value;
            best_lag = lag;
        }
    }

    double refined = static_cast<double>(best_lag);
    if (best_lag > lag_min && best_lag < lag_max)
        refined += parabolic_offset(autocorr(best_lag - 1), best_value, autocorr(best_lag + 1));
    return 60.0 * frame_rate / refined;
}

// ---------------------------------------------------------------------------
// Pitch (YIN)
// ---------------------------------------------------------------------------

double estimate_pitch(const AudioBuffer& buffer) {
    if (buffer.duration() < 0.1) throw TooShortError("pitch estimation needs at least 0.1 s of audio");

    const double sr = static_cast<double>(buffer.sample_rate);
    const std::size_t tau_max = static_cast<std::size_t>(std::ceil(sr / 50.0));
    const std::size_t tau_min =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / 2000.0)));
    const std::size_t window = tau_max;
    const std::size_t frame_len = 2 * tau_max;
    const std::size_t hop = tau_max;
    if (buffer.samples.size() < frame_len)
        throw TooShortError("pitch estimation window exceeds the buffer");

    constexpr double kThreshold = 0.1;
    std::vector<double> voiced;
    std::vector<double> diff(tau_max + 1, 0.0);
    std::vector<double> cmnd(tau_max + 1, 1.0);

    for (std::size_t start = 0; start + frame_len <= buffer.samples.size(); start += hop) {
        const double* x = buffer.samples.data() + start;
        for (std::size_t tau = 1; tau <= tau_max; ++tau) {
            double sum = 0.0;
            for (std::size_t j = 0; j < window; ++j) {
                const double d = x[j] - x[j + tau];
                sum += d * d;
            }
            diff[tau] = sum;
        }
        double running = 0.0;
        for (std::size_t tau = 1; tau <= tau_max; ++tau) {
            running += diff[tau];
            cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
        }

        std::size_t tau = tau_min;
        std::size_t found = 0;
        for (; tau <= tau_max; ++tau) {
            if (cmnd[tau] < kThreshold) {
                while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
                found = tau;
                break;
            }
        }
        if (found == 0) continue;  // unvoiced frame

        double refined = static_cast<double>(found);
        if (found > 1 && found < tau_max)
            refined += parabolic_offset(cmnd[found - 1], cmnd[found], cmnd[found + 1]);
        voiced.push_back(sr / refined);
    }

    if (voiced.empty()) throw NoVoicedFramesError("no voiced frames detected");
    std::sort(voiced.begin(), voiced.end());
    const std::size_t mid = voiced.size() / 2;
    return voiced.size() % 2 ? voiced[mid] : 0.5 * (voiced[mid - 1] + voiced[mid]);
}

// ---------------------------------------------------------------------------
// Spectral centroid
// ---------------------------------------------------------------------------

double spectral_centroid(const AudioBuffer& buffer) {
    if (buffer.samples.empty()) throw TooShortError("empty buffer");
    const auto mags = stft_magnitudes(buffer);
    const double bin_hz = static_cast<double>(buffer.sample_rate) / static_cast<double>(kFftSize);

    double centroid_sum = 0.0;
    std::size_t counted = 0;
    for (const auto& mag : mags) {
        double weighted = 0.0, total = 0.0;
        for (std::size_t k = 0; k < mag.size(); ++k) {
            weighted += static_cast<double>(k) * bin_hz * mag[k];
            total += mag[k];
        }
        if (total > 1e-12) {
            centroid_sum += weighted / total;
            ++counted;
        }
    }
    return counted ? centroid_sum / static_cast<double>(counted) : 0.0;
}

// ---------------------------------------------------------------------------
// Activity segments
// ---------------------------------------------------------------------------

std::vector<Segment> active_segments(const AudioBuffer& buffer, double window_ms,
                                     double threshold_db) {
    const std::size_t win =
        static_cast<std::size_t>(std::lround(buffer.sample_rate * window_ms / 1000.0));
    if (win == 0 || win >= buffer.samples.size())
        throw InvalidSpecError("segment window must be shorter than the buffer");
    const std::size_t hop = std::max<std::size_t>(1, win / 2);
    const double threshold = std::pow(10.0, threshold_db / 20.0);
    const double window_s = static_cast<double>(win) / buffer.sample_rate;

    std::vector<Segment> segments;
    for (std::size_t start = 0; start + win <= buffer.samples.size(); start += hop) {
        double energy = 0.0;
        for (std::size_t i = start; i < start + win; ++i)
            energy += buffer.samples[i] * buffer.samples[i];
        const double rms = std::sqrt(energy / static_cast<double>(win));
        if (rms <= threshold) continue;
        const double seg_start = static_cast<double>(start) / buffer.sample_rate;
        const double seg_end = seg_start + window_s;
        if (!segments.empty() && seg_start - segments.back().end_s < window_s)
            segments.back().end_s = seg_end;
        else
            segments.push_back({seg_start, seg_end});
    }
    for (auto& seg : segments) seg.end_s = std::min(seg.end_s, buffer.duration());
    return segments;
}

// ---------------------------------------------------------------------------
// Native tools
// ---------------------------------------------------------------------------

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

ToolResult audio_features_tool(const ToolRequest& request) {
    constexpr const char* kName = "audio_features";
    AudioBuffer buffer;
    try {
        buffer = read_wav(request.audio_path);
    } catch (const std::exception& e) {
        return ToolResult::failure(kName, e.what());
    }

    bool silent = true;
    try {
        silent = active_segments(buffer).empty();
    } catch (const std::exception&) {
        // Buffer shorter than one activity window; fall through to estimators.
        silent = false;
    }
    if (silent) return ToolResult::failure(kName, "no extractable features (silent input)");

    nlohmann::ordered_json result;
    try {
        result["tempo"] = round2(estimate_tempo(buffer));
    } catch (const std::exception&) {}
    try {
        result["pitch"] = round2(estimate_pitch(buffer));
    } catch (const std::exception&) {}
    try {
        result["timbre"] = round2(spectral_centroid(buffer));
    } catch (const std::exception&) {}

    if (result.empty()) return ToolResult::failure(kName, "no extractable features");
    return ToolResult::success(kName, std::move(result));
}

ToolResult duration_analysis_tool(const ToolRequest& request) {
    constexpr const char* kName = "duration_analysis";
    try {
        const AudioBuffer buffer = read_wav(request.audio_path);
        const auto segments = active_segments(buffer);
        double active = 0.0;
        for (const auto& seg : segments) active += seg.end_s - seg.start_s;
        nlohmann::ordered_json result;
        result["total_duration_s"] = round2(buffer.duration());
        result["active_duration_s"] = round2(active);
        result["num_segments"] = static_cast<int>(segments.size());
        return ToolResult::success(kName, std::move(result));
    } catch (const std::exception& e) {
        return ToolResult::failure(kName, e.what());
    }
}

ToolResult temporal_analysis_tool(const ToolRequest& request) {
    constexpr const char* kName = "temporal_analysis";
    try {
        const AudioBuffer buffer = read_wav(request.audio_path);
        const auto segments = active_segments(buffer);
        nlohmann::ordered_json onsets = nlohmann::ordered_json::array();
        nlohmann::ordered_json offsets = nlohmann::ordered_json::array();
        for (const auto& seg : segments) {
            onsets.push_back(round2(seg.start_s));
            offsets.push_back(round2(seg.end_s));
        }
        nlohmann::ordered_json result;
        result["num_segments"] = static_cast<int>(segments.size());
        result["onsets"] = onsets;
        result["offsets"] = offsets;
        return ToolResult::success(kName, std::move(result));
    } catch (const std::exception& e) {
        return ToolResult::failure(kName, e.what());
    }
}

}  // namespace audioroute

#pragma once

#include "audioroute/core.hpp"
#include "audioroute/toolbus.hpp"

#include <string>
#include <vector>

namespace audioroute {

struct CorruptHeaderError : Error { using Error::Error; };
struct UnsupportedEncodingError : Error { using Error::Error; };
struct TooShortError : Error { using Error::Error; };
struct NoVoicedFramesError : Error { using Error::Error; };

// Mono audio; multi-channel input is averaged at load time.
struct AudioBuffer {
    std::vector<double> samples;  // amplitudes in [-1, 1]
    std::uint32_t sample_rate = 44100;

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

// PCM16 and 32-bit float WAV.
AudioBuffer read_wav(const std::string& path);
void write_wav_pcm16(const std::string& path, const AudioBuffer& buffer);

// Tempo from a half-wave rectified spectral-flux onset envelope (Hann window
// 2048, hop 512) autocorrelated over the 40..240 BPM lag range, peak refined
// by parabolic interpolation. A flat envelope (e.g. silence) resolves to the
// low end of the range. Needs at least 2 s of audio.
double estimate_tempo(const AudioBuffer& buffer);

// YIN: cumulative-mean-normalized difference function, threshold 0.1,
// parabolic refinement, search range 50..2000 Hz, median over voiced frames.
// Throws NoVoicedFramesError on aperiodic input.
double estimate_pitch(const AudioBuffer& buffer);

// Magnitude-weighted mean frequency, averaged over STFT frames. Used as the
// scalar "timbre" value in the feature envelope.
double spectral_centroid(const AudioBuffer& buffer);

struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
};

// Sliding-RMS activity detection: windows above threshold_db merge into
// segments, and segments separated by less than one window merge.
std::vector<Segment> active_segments(const AudioBuffer& buffer, double window_ms = 50.0,
                                     double threshold_db = -40.0);

// Native tools behind the toolbus envelope.
ToolResult audio_features_tool(const ToolRequest& request);     // {tempo, pitch, timbre}
ToolResult duration_analysis_tool(const ToolRequest& request);  // active-duration summary
ToolResult temporal_analysis_tool(const ToolRequest& request);  // activity timeline

}  // namespace audioroute

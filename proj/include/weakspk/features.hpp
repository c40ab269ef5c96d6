#pragma once

#include <filesystem>
#include <vector>

#include "weakspk/types.hpp"

namespace weakspk {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;
};

// RIFF/WAVE reader for the one supported encoding: PCM 16-bit mono 16 kHz.
// Anything else raises FormatError naming the offending field.
Waveform read_wav(const std::filesystem::path& path);

struct FbankConfig {
  int n_mels = 80;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  double pre_emphasis = 0.97;
  double fmin_hz = 0.0;   // filterbank low edge
  double fmax_hz = -1.0;  // <= 0 means Nyquist
};

// Log mel-filter bank energies: pre-emphasis, Hamming window, power
// spectrum on a next-power-of-two FFT, triangular mel filters, ln(max(e, 1e-10)).
FeatureMatrix fbank(const Waveform& wav, const FbankConfig& cfg = {});

struct MfccConfig {
  int n_ceps = 20;
  int n_mels = 26;
  FbankConfig fbank;
};

// DCT-II (orthonormal) of the log mel energies; keeps the first n_ceps
// coefficients including c0.
FeatureMatrix mfcc(const Waveform& wav, const MfccConfig& cfg = {});

// Per-segment standardization: every feature dimension gets mean 0 and
// variance 1 over the segment's time axis (variance floored at 1e-8 before
// the division, so constant dimensions become all zeros).
void instance_normalize_inplace(Matrix& frames);
FeatureMatrix instance_normalize(const FeatureMatrix& features);

// Mel scale used by the filterbank.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace weakspk

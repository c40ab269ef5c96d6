#include "weakspk/features.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

namespace weakspk {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

// In-place radix-2 Cooley-Tukey FFT.
void fft_inplace(std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  size_t j = 0;
  for (size_t i = 0; i < n; ++i) {
    if (j > i) std::swap(x[i], x[j]);
    size_t m = n >> 1;
    while (m >= 1 && j >= m) {
      j -= m;
      m >>= 1;
    }
    j += m;
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct MelBank {
  // weights: n_mels x (fft/2 + 1)
  Matrix weights;
};

MelBank build_mel_bank(int n_mels, size_t fft_size, int sample_rate,
                       double fmin, double fmax) {
  if (fmax <= 0) fmax = sample_rate / 2.0;
  const int n_bins = static_cast<int>(fft_size / 2 + 1);
  MelBank bank;
  bank.weights = Matrix::Zero(n_mels, n_bins);
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<size_t>(m)];
    const double center = edges[static_cast<size_t>(m) + 1];
    const double right = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f =
          static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      if (f > left && f < center)
        bank.weights(m, k) = (f - left) / (center - left);
      else if (f >= center && f < right)
        bank.weights(m, k) = (right - f) / (right - center);
    }
  }
  return bank;
}

// Shared fbank core that also reports framing for reuse by mfcc.
Matrix log_mel_energies(const Waveform& wav, const FbankConfig& cfg,
                        int n_mels) {
  if (wav.sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  const int win = static_cast<int>(std::lround(cfg.win_ms * wav.sample_rate /
                                               1000.0));
  const int hop = static_cast<int>(std::lround(cfg.hop_ms * wav.sample_rate /
                                               1000.0));
  const int n = static_cast<int>(wav.samples.size());
  if (win <= 1 || hop < 1) throw ConfigError("bad window/hop configuration");
  if (n < win)
    throw ConfigError("waveform shorter than one analysis window (" +
                      std::to_string(n) + " < " + std::to_string(win) + ")");
  const int num_frames = (n - win) / hop + 1;

  // Pre-emphasis before framing; the first sample uses itself as history.
  std::vector<double> pre(static_cast<size_t>(n));
  pre[0] = wav.samples[0] * (1.0 - cfg.pre_emphasis);
  for (int i = 1; i < n; ++i)
    pre[static_cast<size_t>(i)] =
        wav.samples[static_cast<size_t>(i)] -
        cfg.pre_emphasis * wav.samples[static_cast<size_t>(i) - 1];

  std::vector<double> window(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    window[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));

  const size_t fft_size = next_pow2(static_cast<size_t>(win));
  const MelBank bank =
      build_mel_bank(n_mels, fft_size, wav.sample_rate, cfg.fmin_hz,
                     cfg.fmax_hz);
  const int n_bins = static_cast<int>(fft_size / 2 + 1);

  Matrix out(n_mels, num_frames);
  std::vector<std::complex<double>> frame(fft_size);
  Vector power(n_bins);
  for (int t = 0; t < num_frames; ++t) {
    const int off = t * hop;
    for (size_t i = 0; i < fft_size; ++i) {
      const double s = i < static_cast<size_t>(win)
                           ? pre[static_cast<size_t>(off) + i] * window[i]
                           : 0.0;
      frame[i] = {s, 0.0};
    }
    fft_inplace(frame);
    for (int k = 0; k < n_bins; ++k) power(k) = std::norm(frame[static_cast<size_t>(k)]);
    Vector mel = bank.weights * power;
    out.col(t) = mel.array().max(kLogFloor).log();
  }
  return out;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw MissingArtifactError("cannot open wav file: " + path.string());
  char riff[4], wave[4];
  uint32_t riff_size = 0;
  in.read(riff, 4);
  in.read(reinterpret_cast<char*>(&riff_size), 4);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 ||
      std::memcmp(wave, "WAVE", 4) != 0)
    throw FormatError("unsupported wav (container): not a RIFF/WAVE file: " +
                      path.string());

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  while (in) {
    char id[4];
    uint32_t size = 0;
    in.read(id, 4);
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      uint32_t byte_rate;
      uint16_t block_align;
      in.read(reinterpret_cast<char*>(&audio_format), 2);
      in.read(reinterpret_cast<char*>(&channels), 2);
      in.read(reinterpret_cast<char*>(&rate), 4);
      in.read(reinterpret_cast<char*>(&byte_rate), 4);
      in.read(reinterpret_cast<char*>(&block_align), 2);
      in.read(reinterpret_cast<char*>(&bits), 2);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), size & ~1u);
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
    }
  }
  if (!have_fmt)
    throw FormatError("unsupported wav (fmt): missing fmt chunk: " +
                      path.string());
  if (audio_format != 1)
    throw FormatError("unsupported wav (encoding): format tag " +
                      std::to_string(audio_format) + ", want PCM (1)");
  if (channels != 1)
    throw FormatError("unsupported wav (channels): " +
                      std::to_string(channels) + ", want mono (1)");
  if (rate != 16000)
    throw FormatError("unsupported wav (sample_rate): " + std::to_string(rate) +
                      " Hz, want 16000");
  if (bits != 16)
    throw FormatError("unsupported wav (bits_per_sample): " +
                      std::to_string(bits) + ", want 16");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32768.0;
  return w;
}

FeatureMatrix fbank(const Waveform& wav, const FbankConfig& cfg) {
  FeatureMatrix f;
  f.frames = log_mel_energies(wav, cfg, cfg.n_mels);
  f.frame_shift_ms = cfg.hop_ms;
  f.kind = FeatureKind::Fbank;
  return f;
}

FeatureMatrix mfcc(const Waveform& wav, const MfccConfig& cfg) {
  if (cfg.n_ceps > cfg.n_mels)
    throw ConfigError("mfcc n_ceps (" + std::to_string(cfg.n_ceps) +
                      ") must not exceed n_mels (" + std::to_string(cfg.n_mels) +
                      ")");
  const Matrix logmel = log_mel_energies(wav, cfg.fbank, cfg.n_mels);
  const int n_mels = cfg.n_mels;
  // Orthonormal DCT-II matrix, first n_ceps rows.
  Matrix dct(cfg.n_ceps, n_mels);
  for (int k = 0; k < cfg.n_ceps; ++k) {
    const double scale =
        std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_mels));
    for (int m = 0; m < n_mels; ++m)
      dct(k, m) = scale * std::cos(kPi * k * (2 * m + 1) / (2.0 * n_mels));
  }
  FeatureMatrix f;
  f.frames = dct * logmel;
  f.frame_shift_ms = cfg.fbank.hop_ms;
  f.kind = FeatureKind::Mfcc;
  return f;
}

void instance_normalize_inplace(Matrix& frames) {
  const int num_frames = static_cast<int>(frames.cols());
  if (num_frames < 2)
    throw ConfigError("instance normalization needs at least 2 frames");
  const Vector mean = frames.rowwise().mean();
  frames.colwise() -= mean;
  Vector var = frames.array().square().rowwise().mean();
  var = var.array().max(1e-8);
  frames.array().colwise() /= var.array().sqrt();
}

FeatureMatrix instance_normalize(const FeatureMatrix& features) {
  FeatureMatrix out = features;
  instance_normalize_inplace(out.frames);
  return out;
}

}  // namespace weakspk

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mods/tensor.hpp"

namespace mods {

enum class Modality : std::uint8_t { language = 0, acoustic = 1, visual = 2 };

inline constexpr std::array<Modality, 3> kModalities = {Modality::language, Modality::acoustic, Modality::visual};

char modality_code(Modality m);
std::string modality_name(Modality m);
// Accepts the one-letter code ("l", "a", "v") or the full name.
Modality parse_modality(const std::string& s);

struct MultimodalSample {
  std::string id;
  double label = 0.0;
  Tensor language;  // T_l × d_l
  Tensor acoustic;  // T_a × d_a
  Tensor visual;    // T_v × d_v
  std::optional<Modality> planted_primary;

  const Tensor& features(Modality m) const;
  Tensor& features(Modality m);
};

struct DatasetManifest {
  std::string name;
  std::array<double, 2> label_range{-3.0, 3.0};
  // Feature widths in (l, a, v) order.
  std::array<std::size_t, 3> dims{};
  std::map<std::string, std::vector<std::string>> splits;
  std::optional<std::uint64_t> seed;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<MultimodalSample> samples;

  // Sample indices of a split, in manifest order. Throws DataError on an unknown split.
  std::vector<std::size_t> split_indices(const std::string& split) const;
};

// Manifest as `manifest.json`, features as `<id>.<l|a|v>.bin`.
void write_dataset(const std::vector<MultimodalSample>& samples, const DatasetManifest& manifest,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

struct SynthConfig {
  std::string name = "synthetic";
  std::size_t n_train = 64;
  std::size_t n_val = 16;
  std::size_t n_test = 0;
  std::array<std::size_t, 3> dims{8, 8, 8};
  // Inclusive range for T_l; the compressed length J equals T_l.
  std::array<std::size_t, 2> language_len{4, 4};
  // Inclusive range for the number of distinct acoustic/visual base frames.
  std::array<std::size_t, 2> base_len{4, 4};
  // Planted-primary probabilities in (l, a, v) order.
  std::array<double, 3> dominance_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  // Each acoustic/visual base frame is repeated this many times.
  std::size_t redundancy = 1;
  // i.i.d. per-frame noise added after repetition.
  double noise_std = 0.3;
  // Label-independent per-base-frame content, orthogonal to the signal direction.
  double content_std = 1.0;
  double signal_gain = 1.0;
  std::array<double, 2> label_range{-3.0, 3.0};
  std::uint64_t seed = 0;

  std::size_t n_samples() const { return n_train + n_val + n_test; }
  void validate() const;
};

struct GeneratedData {
  DatasetManifest manifest;
  std::vector<MultimodalSample> samples;
  // Fixed unit signal direction per modality, (l, a, v) order.
  std::array<Tensor, 3> directions;
};

GeneratedData generate_synthetic(const SynthConfig& cfg);

// Seeded per-epoch shuffle of a split, cut into batches; the final partial
// batch is kept. Returns indices into dataset.samples.
std::vector<std::vector<std::size_t>> iterate_batches(const Dataset& data, const std::string& split,
                                                      std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch);

}  // namespace mods

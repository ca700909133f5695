#include "mods/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

namespace mods {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

char modality_code(Modality m) {
  switch (m) {
    case Modality::language: return 'l';
    case Modality::acoustic: return 'a';
    case Modality::visual: return 'v';
  }
  return '?';
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::language: return "language";
    case Modality::acoustic: return "acoustic";
    case Modality::visual: return "visual";
  }
  return "unknown";
}

Modality parse_modality(const std::string& s) {
  if (s == "l" || s == "language" || s == "t" || s == "text") return Modality::language;
  if (s == "a" || s == "acoustic") return Modality::acoustic;
  if (s == "v" || s == "visual") return Modality::visual;
  throw ConfigError("unknown modality '" + s + "'");
}

const Tensor& MultimodalSample::features(Modality m) const {
  switch (m) {
    case Modality::language: return language;
    case Modality::acoustic: return acoustic;
    case Modality::visual: return visual;
  }
  throw DataError("bad modality");
}

Tensor& MultimodalSample::features(Modality m) {
  return const_cast<Tensor&>(static_cast<const MultimodalSample&>(*this).features(m));
}

std::vector<std::size_t> Dataset::split_indices(const std::string& split) const {
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end()) throw DataError("unknown split '" + split + "'");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(it->second.size());
  for (const auto& id : it->second) {
    auto f = index.find(id);
    if (f == index.end()) throw DataError("split '" + split + "' references unknown id " + id);
    out.push_back(f->second);
  }
  return out;
}

namespace {

std::string feature_file(const std::string& id, Modality m) { return id + "." + modality_code(m) + ".bin"; }

void check_consistency(const std::vector<MultimodalSample>& samples, const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.id.empty()) throw DataError("sample with empty id");
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + s.id);
    if (s.label < manifest.label_range[0] || s.label > manifest.label_range[1]) {
      throw DataError("label of " + s.id + " outside declared range");
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const Tensor& t = s.features(kModalities[k]);
      if (t.rank() != 2) throw DataError("features of " + s.id + " must be rank-2");
      if (t.cols() != manifest.dims[k]) {
        throw DataError(modality_name(kModalities[k]) + " width of " + s.id + " is " + std::to_string(t.cols()) +
                        ", manifest declares " + std::to_string(manifest.dims[k]));
      }
    }
  }
  std::set<std::string> seen;
  for (const auto& [split, members] : manifest.splits) {
    for (const auto& id : members) {
      if (!ids.count(id)) throw DataError("split '" + split + "' references unknown id " + id);
      if (!seen.insert(id).second) throw DataError("id " + id + " appears in more than one split");
    }
  }
}

}  // namespace

void write_dataset(const std::vector<MultimodalSample>& samples, const DatasetManifest& manifest,
                   const fs::path& dir) {
  check_consistency(samples, manifest);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  ojson j;
  j["name"] = manifest.name;
  j["label_range"] = manifest.label_range;
  j["dims"] = manifest.dims;
  ojson splits = ojson::object();
  for (const auto& [name, ids] : manifest.splits) splits[name] = ids;
  j["splits"] = splits;
  j["seed"] = manifest.seed ? ojson(*manifest.seed) : ojson(nullptr);
  ojson labels = ojson::object();
  ojson planted = ojson::object();
  for (const auto& s : samples) {
    labels[s.id] = s.label;
    if (s.planted_primary) planted[s.id] = std::string(1, modality_code(*s.planted_primary));
  }
  j["labels"] = labels;
  j["planted_primary"] = planted;

  for (const auto& s : samples) {
    for (Modality m : kModalities) save_tensor_file((dir / feature_file(s.id, m)).string(), s.features(m));
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for manifest in " + dir.string());
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("missing manifest " + mpath.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const std::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }

  Dataset data;
  try {
    data.manifest.name = j.at("name").get<std::string>();
    data.manifest.label_range = j.at("label_range").get<std::array<double, 2>>();
    data.manifest.dims = j.at("dims").get<std::array<std::size_t, 3>>();
    for (const auto& [name, ids] : j.at("splits").items()) {
      data.manifest.splits[name] = ids.get<std::vector<std::string>>();
    }
    if (!j.at("seed").is_null()) data.manifest.seed = j.at("seed").get<std::uint64_t>();
    const ojson planted = j.contains("planted_primary") ? j.at("planted_primary") : ojson::object();
    for (const auto& [id, label] : j.at("labels").items()) {
      MultimodalSample s;
      s.id = id;
      s.label = label.get<double>();
      if (planted.contains(id)) s.planted_primary = parse_modality(planted.at(id).get<std::string>());
      data.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + mpath.string() + " is missing or has malformed keys: " + e.what());
  }

  for (auto& s : data.samples) {
    for (std::size_t k = 0; k < 3; ++k) {
      const Modality m = kModalities[k];
      const fs::path p = dir / feature_file(s.id, m);
      if (!fs::exists(p)) {
        throw DataError("missing " + modality_name(m) + " features for sample " + s.id + " (" + p.string() + ")");
      }
      Tensor t = load_tensor_file(p.string());
      if (t.rank() != 2 || t.cols() != data.manifest.dims[k]) {
        throw DataError("dimension mismatch in " + p.string() + ": shape " + shape_string(t.shape()) +
                        ", manifest width " + std::to_string(data.manifest.dims[k]));
      }
      s.features(m) = std::move(t);
    }
  }
  check_consistency(data.samples, data.manifest);
  return data;
}

void SynthConfig::validate() const {
  double total = 0.0;
  for (double p : dominance_mix) {
    if (!(p >= 0.0)) throw ConfigError("dominance_mix entries must be non-negative");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("dominance_mix must sum to 1");
  for (auto d : dims)
    if (d == 0) throw ConfigError("feature dims must be positive");
  if (language_len[0] == 0 || language_len[0] > language_len[1]) throw ConfigError("invalid language_len range");
  if (base_len[0] == 0 || base_len[0] > base_len[1]) throw ConfigError("invalid base_len range");
  if (redundancy == 0) throw ConfigError("redundancy must be positive");
  if (!(noise_std >= 0.0) || !(content_std >= 0.0)) throw ConfigError("noise and content scales must be >= 0");
  if (!(label_range[0] < label_range[1])) throw ConfigError("label_range must be increasing");
}

namespace {

Tensor random_direction(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor u({dim});
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& v : u.storage()) {
      v = normal(rng);
      n2 += v * v;
    }
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  for (double& v : u.storage()) v *= inv;
  return u;
}

Tensor make_sequence(std::size_t base_frames, std::size_t repeat, const Tensor& direction, double signal,
                     const SynthConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = direction.size();
  const std::size_t T = base_frames * repeat;
  // The planted signal is spread over all T frames with 1/sqrt(T) so that
  // its total energy does not depend on the sequence length.
  const double per_frame = signal / std::sqrt(static_cast<double>(T));
  Tensor seq({T, d});
  std::vector<double> base(d);
  for (std::size_t b = 0; b < base_frames; ++b) {
    double along = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      base[k] = cfg.content_std * normal(rng);
      along += base[k] * direction[k];
    }
    // Content lives in the orthogonal complement of the signal direction.
    for (std::size_t k = 0; k < d; ++k) base[k] -= along * direction[k];
    for (std::size_t r = 0; r < repeat; ++r) {
      const std::size_t t = b * repeat + r;
      for (std::size_t k = 0; k < d; ++k) {
        seq(t, k) = base[k] + per_frame * direction[k] + cfg.noise_std * normal(rng);
      }
    }
  }
  round_to_f32(seq);
  return seq;
}

}  // namespace

GeneratedData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  GeneratedData out;
  for (std::size_t k = 0; k < 3; ++k) out.directions[k] = random_direction(cfg.dims[k], rng);

  out.manifest.name = cfg.name;
  out.manifest.label_range = cfg.label_range;
  out.manifest.dims = cfg.dims;
  out.manifest.seed = cfg.seed;
  auto& train = out.manifest.splits["train"];
  auto& val = out.manifest.splits["val"];
  auto& test = out.manifest.splits["test"];

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> label_dist(cfg.label_range[0], cfg.label_range[1]);
  auto draw_len = [&](const std::array<std::size_t, 2>& r) {
    std::uniform_int_distribution<std::size_t> d(r[0], r[1]);
    return d(rng);
  };

  for (std::size_t i = 0; i < cfg.n_samples(); ++i) {
    MultimodalSample s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", i);
    s.id = buf;
    const double u = unit(rng);
    Modality planted = Modality::visual;
    if (u < cfg.dominance_mix[0]) planted = Modality::language;
    else if (u < cfg.dominance_mix[0] + cfg.dominance_mix[1]) planted = Modality::acoustic;
    s.planted_primary = planted;
    s.label = label_dist(rng);

    for (std::size_t k = 0; k < 3; ++k) {
      const Modality m = kModalities[k];
      const bool is_lang = m == Modality::language;
      const std::size_t base = is_lang ? draw_len(cfg.language_len) : draw_len(cfg.base_len);
      const std::size_t repeat = is_lang ? 1 : cfg.redundancy;
      const double signal = m == planted ? cfg.signal_gain * s.label : 0.0;
      s.features(m) = make_sequence(base, repeat, out.directions[k], signal, cfg, rng);
    }

    if (i < cfg.n_train) train.push_back(s.id);
    else if (i < cfg.n_train + cfg.n_val) val.push_back(s.id);
    else test.push_back(s.id);
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<std::size_t>> iterate_batches(const Dataset& data, const std::string& split,
                                                      std::size_t batch_size, std::uint64_t seed,
                                                      std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order = data.split_indices(split);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace mods

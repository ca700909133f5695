#include <fstream>
#include <sstream>

#include "mods/trainer.hpp"

namespace mods::trainer {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'D', 'S', 'C', 'K', 'P', 'T'};

using Records = std::vector<std::pair<std::string, Tensor>>;

void put_records(std::ostream& out, const Records& records) {
  binio::put_u64(out, records.size());
  for (const auto& [name, t] : records) {
    binio::put_string(out, name);
    write_tensor(out, t);
  }
}

Records get_records(std::istream& in, const std::string& source) {
  const std::uint64_t n = binio::get_u64(in, source);
  if (n > (1u << 20)) throw DataError(source + ": implausible record count");
  Records out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = binio::get_string(in, source);
    out.emplace_back(std::move(name), read_tensor(in, source));
  }
  return out;
}

json parse_json(const std::string& text, const std::string& source, const char* what) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed " + what + ": " + e.what());
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u64(out, ck.model.fingerprint());
  json cfg;
  cfg["model"] = ck.model.to_json();
  cfg["train"] = ck.train.to_json();
  binio::put_string(out, cfg.dump());
  put_records(out, ck.params);
  put_records(out, ck.adam_m);
  put_records(out, ck.adam_v);
  binio::put_u64(out, ck.step);
  binio::put_u64(out, ck.epoch);
  binio::put_f64(out, ck.early.best_val);
  binio::put_u64(out, ck.early.best_epoch);
  binio::put_u64(out, ck.early.bad_epochs);
  binio::put_u32(out, ck.early.has_best ? 1 : 0);
  binio::put_f64(out, ck.initial_train_loss);
  put_records(out, ck.best_params);
  binio::put_string(out, ck.rng_state);
  binio::put_string(out, ck.history.dump());
  binio::put_u32(out, ck.finished ? 1 : 0);
  std::string bytes = out.str();
  std::ostringstream tail(std::ios::binary);
  binio::put_u64(tail, fnv1a64(bytes));
  return bytes + tail.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path);
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source, const ModelConfig* expected) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8) throw DataError(source + ": truncated checkpoint");
  if (bytes.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0) throw DataError(source + ": not a checkpoint file");
  const std::string body = bytes.substr(0, bytes.size() - 8);
  {
    std::istringstream tail(bytes.substr(bytes.size() - 8), std::ios::binary);
    if (binio::get_u64(tail, source) != fnv1a64(body)) {
      throw DataError(source + ": checksum mismatch (truncated or corrupted checkpoint)");
    }
  }
  std::istringstream in(body, std::ios::binary);
  in.seekg(sizeof kMagic);
  const std::uint32_t version = binio::get_u32(in, source);
  if (version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t fingerprint = binio::get_u64(in, source);
  Checkpoint ck;
  const json cfg = parse_json(binio::get_string(in, source), source, "configuration");
  try {
    ck.model = ModelConfig::from_json(cfg.at("model"));
    ck.train = TrainConfig::from_json(cfg.at("train"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": incomplete configuration: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(source + ": stored configuration is invalid: " + e.what());
  }
  if (ck.model.fingerprint() != fingerprint) throw DataError(source + ": fingerprint does not match stored configuration");
  if (expected && expected->fingerprint() != fingerprint) {
    throw ConfigError(source + ": checkpoint was written for a different model configuration");
  }
  ck.params = get_records(in, source);
  ck.adam_m = get_records(in, source);
  ck.adam_v = get_records(in, source);
  ck.step = binio::get_u64(in, source);
  ck.epoch = binio::get_u64(in, source);
  ck.early.best_val = binio::get_f64(in, source);
  ck.early.best_epoch = binio::get_u64(in, source);
  ck.early.bad_epochs = binio::get_u64(in, source);
  ck.early.has_best = binio::get_u32(in, source) != 0;
  ck.initial_train_loss = binio::get_f64(in, source);
  ck.best_params = get_records(in, source);
  ck.rng_state = binio::get_string(in, source);
  ck.history = parse_json(binio::get_string(in, source), source, "history");
  ck.finished = binio::get_u32(in, source) != 0;
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(source + ": trailing bytes in checkpoint");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return decode_checkpoint(buf.str(), path, expected);
}

}  // namespace mods::trainer
